use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qtraj::config::{parse_config, Experiment};
use qtraj::experiment::{oracle_report_text, ORACLE_TOL};
use qtraj::Error;

#[derive(Parser)]
#[command(
    name = "qtraj",
    version,
    about = "Master equations and quantum filters for photon and cat-state inputs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the unconditional hierarchy and write master.csv
    Master(Common),
    /// Simulate one conditional trajectory and write trajectory.csv
    Trajectory {
        #[command(flatten)]
        common: Common,
        /// Trajectory index within the seed's stream family
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Run N trajectories; write ensemble.csv and trajectories/traj_NNNNN.csv
    Ensemble(Common),
    /// Compare the hierarchy with the extended-system master equation
    OracleCheck(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
}

enum Failure {
    Config(Error),
    Runtime(Error),
    Oracle,
}

impl Common {
    fn load(&self) -> Result<(Experiment, PathBuf), Failure> {
        let text = fs::read_to_string(&self.config).map_err(|e| {
            Failure::Config(Error::Io {
                path: self.config.clone(),
                source: e,
            })
        })?;
        let mut config = parse_config(&text).map_err(Failure::Config)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(p) = self.parallelism {
            config.parallelism = p;
        }
        let out = self.out.clone().unwrap_or_else(|| config.output.dir.clone());
        let exp = config.build().map_err(Failure::Config)?;
        for w in &exp.warnings {
            eprintln!("warning: {w}");
        }
        Ok((exp, out))
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    let runtime = Failure::Runtime;
    match cli.command {
        Command::Master(common) => {
            let (exp, out) = common.load()?;
            let path = out.join("master.csv");
            exp.run_master().and_then(|t| t.save(&path)).map_err(runtime)?;
            println!("{}", path.display());
        }
        Command::Trajectory { common, index } => {
            let (exp, out) = common.load()?;
            let path = out.join("trajectory.csv");
            let rec = exp.run_trajectory(index).map_err(runtime)?;
            exp.trajectory_table(&rec).save(&path).map_err(runtime)?;
            println!("{}", path.display());
        }
        Command::Ensemble(common) => {
            let (exp, out) = common.load()?;
            let summary = exp.run_ensemble(Some(&out.join("trajectories"))).map_err(runtime)?;
            let path = out.join("ensemble.csv");
            exp.summary_table(&summary).save(&path).map_err(runtime)?;
            println!("{}", path.display());
        }
        Command::OracleCheck(common) => {
            let (exp, _) = common.load()?;
            let report = match exp.run_oracle_check() {
                Err(e @ Error::Config { .. }) => return Err(Failure::Config(e)),
                other => other.map_err(runtime)?,
            };
            print!("{}", oracle_report_text(&report, ORACLE_TOL));
            if !report.passes(ORACLE_TOL) {
                return Err(Failure::Oracle);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Oracle) => ExitCode::from(3),
    }
}
