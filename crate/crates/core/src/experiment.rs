//! Runs a configured experiment and renders its results as tables.

use std::path::{Path, PathBuf};

use crate::config::Experiment;
use crate::error::{Error, Result};
use crate::field::FieldSpec;
use crate::filter::FilterModel;
use crate::master::{oracle_check, MasterModel, OracleReport};
use crate::operator::C64;
use crate::output::Table;
use crate::sde::{run_ensemble, run_trajectory, EnsembleConfig, EnsembleSummary, NoiseStream, TrajectoryRecord};

/// Deviation allowed between the hierarchy and the extended-system oracle.
pub const ORACLE_TOL: f64 = 1e-6;

fn trace_columns(n: usize) -> Vec<String> {
    let mut cols = Vec::with_capacity(2 * n * n);
    for j in 0..n {
        for k in 0..n {
            cols.push(format!("tr_{j}{k}_re"));
            cols.push(format!("tr_{j}{k}_im"));
        }
    }
    cols
}

fn push_traces(row: &mut Vec<f64>, traces: &[C64]) {
    for tr in traces {
        row.push(tr.re);
        row.push(tr.im);
    }
}

impl Experiment {
    pub fn master_model(&self) -> Result<MasterModel> {
        MasterModel::new(self.system.clone(), self.field.clone())
    }

    pub fn filter_model(&self) -> Result<FilterModel> {
        FilterModel::new(self.system.clone(), self.field.clone(), self.scheme)
    }

    fn observable_names(&self) -> impl Iterator<Item = String> + '_ {
        self.observables.iter().map(|o| o.name.clone())
    }

    /// Unconditional expectations and block traces on the output grid.
    pub fn run_master(&self) -> Result<Table> {
        let model = self.master_model()?;
        let n = self.field.blocks();
        let columns = std::iter::once("t".to_string())
            .chain(self.observable_names())
            .chain(trace_columns(n))
            .collect();
        let mut table = Table::new("master", columns);
        let mut step = 0;
        model.propagate(model.initial_state(&self.rho0, self.grid.t0())?, &self.ode_grid, |st| {
            if step % self.ode_stride == 0 {
                let rho = model.combine(st)?;
                let mut row = vec![self.grid.time(step / self.ode_stride)];
                row.extend(self.observables.iter().map(|o| rho.expectation(&o.operator)));
                push_traces(&mut row, &st.traces());
                table.push(row);
            }
            step += 1;
            Ok(())
        })?;
        Ok(table)
    }

    /// Trajectory number `index` of the configured seed.
    pub fn run_trajectory(&self, index: u64) -> Result<TrajectoryRecord> {
        let model = self.filter_model()?;
        let stream = NoiseStream::new(self.config.seed, index);
        run_trajectory(&model, &self.rho0, &self.sampling, stream, &self.observables)
    }

    pub fn trajectory_table(&self, rec: &TrajectoryRecord) -> Table {
        let n = self.field.blocks();
        let columns = ["t", "dY", "innovation"]
            .into_iter()
            .map(str::to_string)
            .chain(self.observable_names())
            .chain(trace_columns(n))
            .collect();
        let mut table = Table::new("trajectory", columns);
        table.comment(format!("seed={} index={}", rec.seed, rec.index));
        for i in 0..rec.len() {
            let mut row = vec![rec.grid.time(i), rec.d_y[i], rec.innovation[i]];
            row.extend(rec.observables.iter().map(|s| s[i]));
            push_traces(&mut row, &rec.traces[i]);
            table.push(row);
        }
        table
    }

    /// Runs the ensemble; when `trajectory_dir` is given (and enabled in the
    /// config) each trajectory is written there as `traj_NNNNN.csv`.
    pub fn run_ensemble(&self, trajectory_dir: Option<&Path>) -> Result<EnsembleSummary> {
        let model = self.filter_model()?;
        let config = EnsembleConfig {
            seed: self.config.seed,
            trajectories: self.config.trajectories,
            parallelism: self.config.parallelism,
        };
        let dir = trajectory_dir.filter(|_| self.config.output.trajectory_files);
        run_ensemble(
            &model,
            &self.rho0,
            &self.sampling,
            config,
            &self.observables,
            |rec| match dir {
                Some(dir) => self.trajectory_table(rec).save(&trajectory_path(dir, rec.index)),
                None => Ok(()),
            },
        )
    }

    pub fn summary_table(&self, summary: &EnsembleSummary) -> Table {
        let with_sem = summary.trajectories >= 2;
        let mut series = summary.observables.iter().collect::<Vec<_>>();
        series.push(&summary.innovation);
        series.push(&summary.record);
        let mut columns = vec!["t".to_string()];
        for s in &series {
            columns.push(format!("{}_mean", s.name));
            if with_sem {
                columns.push(format!("{}_sem", s.name));
            }
        }
        let mut table = Table::new("ensemble", columns);
        table.comment(format!(
            "seed={} trajectories={}",
            self.config.seed, summary.trajectories
        ));
        if !with_sem {
            table.comment("sem=absent (single trajectory)");
        }
        for i in 0..summary.grid.len() {
            let mut row = vec![summary.grid.time(i)];
            for s in &series {
                row.push(s.mean[i]);
                if let Some(sem) = &s.sem {
                    row.push(sem[i]);
                }
            }
            table.push(row);
        }
        table
    }

    /// Compares the hierarchy with the extended-system oracle on `ode_grid`.
    pub fn run_oracle_check(&self) -> Result<OracleReport> {
        if let FieldSpec::Vacuum = self.field {
            return Err(Error::config("/field", "oracle-check needs a photon or coherent field"));
        }
        oracle_check(&self.master_model()?, &self.rho0, &self.ode_grid)
    }
}

pub fn trajectory_path(dir: &Path, index: u64) -> PathBuf {
    dir.join(format!("traj_{index:05}.csv"))
}

pub fn oracle_report_text(report: &OracleReport, tol: f64) -> String {
    let verdict = if report.passes(tol) { "PASS" } else { "FAIL" };
    let mut out = format!(
        "oracle-check {verdict}: max deviation {:.3e} (tolerance {tol:.1e})\n",
        report.overall()
    );
    let n = report.n;
    for b in 0..n * n {
        out.push_str(&format!(
            "  block {}{}: deviation {:.3e} over {} samples",
            b / n,
            b % n,
            report.max_deviation[b],
            report.valid_samples[b]
        ));
        if let Some(t) = report.invalid_from[b] {
            out.push_str(&format!(", oracle invalid from t = {t:.6}"));
        }
        out.push('\n');
    }
    out
}
