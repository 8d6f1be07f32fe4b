//! JSON experiment configuration.
//!
//! Complex numbers are written as `[re, im]`. A minimal document:
//!
//! ```json
//! {
//!   "system": { "kind": "two_level_atom", "kappa": 1.0 },
//!   "initial_state": { "kind": "basis", "index": 0 },
//!   "field": {
//!     "kind": "photon",
//!     "gamma": [[[1, 0], [0, 0]], [[0, 0], [0, 0]]],
//!     "wavepacket": { "shape": "gaussian", "omega": 1.46, "t_c": 3.0 }
//!   },
//!   "measurement": { "scheme": "homodyne" },
//!   "grid": { "t0": 0.0, "t1": 8.0, "dt": 0.01 },
//!   "observables": [{ "name": "P_e", "operator": "excited" }]
//! }
//! ```
//!
//! The photon `gamma` is laid out as `[[γ11, γ10], [γ01, γ00]]` (photon
//! first), so `diag(1, 0)` is a single photon.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{is_psd, CoherentAmplitudes, FieldSpec, Profile, Wavepacket, WeightMatrix};
use crate::filter::{MeasurementScheme, DEFAULT_INTENSITY_FLOOR};
use crate::grid::TimeGrid;
use crate::operator::{annihilation, number, pauli, preset_two_level, Operator, C64, ONE};
use crate::sde::{Observable, Sampling};
use crate::slh::SlhTriple;

pub type Matrix = Vec<Vec<C64>>;

/// Wavepacket mass before `t0` above which a warning is emitted.
pub const TRUNCATION_WARNING: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub initial_state: StateConfig,
    pub field: FieldConfig,
    pub measurement: MeasurementConfig,
    /// Output grid: every CSV row lies on it.
    pub grid: TimeGrid,
    /// RK4 step for master equations and the oracle (default `grid.dt`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode_dt: Option<f64>,
    /// Euler–Maruyama step for filters (default `grid.dt`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde_dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trajectories")]
    pub trajectories: usize,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    pub observables: Vec<ObservableConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_trajectories() -> usize {
    1
}

fn default_parallelism() -> usize {
    1
}

fn default_kappa() -> f64 {
    1.0
}

fn default_scale() -> C64 {
    ONE
}

fn default_floor() -> f64 {
    DEFAULT_INTENSITY_FLOOR
}

fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `S = I`, `L = √κ σ₋`, `H = Δ |e⟩⟨e|`.
    TwoLevelAtom {
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default)]
        detuning: f64,
    },
    /// `S = I`, `L = √κ a`, `H = Δ a†a` on a Fock space truncated at `dim`.
    Cavity {
        dim: usize,
        #[serde(default = "default_kappa")]
        kappa: f64,
        #[serde(default)]
        detuning: f64,
    },
    Matrices {
        s: Matrix,
        l: Matrix,
        h: Matrix,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateConfig {
    Basis {
        index: usize,
    },
    /// A normalized ket.
    Amplitudes {
        values: Vec<C64>,
    },
    Density {
        matrix: Matrix,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldConfig {
    Vacuum,
    Photon {
        gamma: [[C64; 2]; 2],
        wavepacket: ProfileConfig,
    },
    Coherent {
        gamma: Matrix,
        amplitudes: Vec<ProfileConfig>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileConfig {
    /// `scale · (Ω²/2π)^{1/4} exp(-Ω²(t - t_c)²/4)`
    Gaussian {
        omega: f64,
        t_c: f64,
        #[serde(default = "default_scale")]
        scale: C64,
    },
    Constant {
        value: C64,
        start: f64,
        end: f64,
    },
    /// Linear interpolation between samples, zero outside.
    Table {
        times: Vec<f64>,
        values: Vec<C64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementConfig {
    Homodyne,
    Counting {
        #[serde(default = "default_floor")]
        intensity_floor: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableConfig {
    pub name: String,
    pub operator: OperatorConfig,
}

/// A preset name (`excited`, `ground`, `sigma_x`, `sigma_y`, `sigma_z` for
/// two-level systems; `number` and `identity` always) or an explicit
/// Hermitian matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OperatorConfig {
    Preset(String),
    Matrix(Matrix),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub dir: PathBuf,
    /// Write one CSV per trajectory in ensemble runs.
    #[serde(default = "default_true")]
    pub trajectory_files: bool,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: default_out_dir(),
            trajectory_files: true,
        }
    }
}

/// Parses and validates a configuration. Errors carry the JSON pointer of
/// the offending value.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let pointer = pointer_of(e.path());
        Error::config(pointer, e.into_inner().to_string())
    })?;
    config.build()?;
    Ok(config)
}

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { .. } | Segment::Unknown => {}
        }
    }
    if out.is_empty() {
        out.push('/');
    }
    out
}

/// A validated configuration with every component constructed.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub system: SlhTriple,
    pub field: FieldSpec,
    pub scheme: MeasurementScheme,
    pub rho0: Operator,
    pub grid: TimeGrid,
    /// Grid on which the master equation and oracle are integrated.
    pub ode_grid: TimeGrid,
    /// Recording every `ode_stride` steps of `ode_grid` reproduces `grid`.
    pub ode_stride: usize,
    pub sampling: Sampling,
    pub observables: Vec<Observable>,
    pub warnings: Vec<String>,
}

fn at(pointer: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config { .. } => e,
        other => Error::config(pointer, other.to_string()),
    }
}

fn matrix(rows: &Matrix, pointer: &str) -> Result<Operator> {
    Operator::from_rows(rows).map_err(at(pointer))
}

fn ratio(coarse: f64, fine: f64, pointer: &str) -> Result<usize> {
    let r = coarse / fine;
    let n = r.round();
    if !(fine > 0.0) || !(n >= 1.0) || (r - n).abs() > 1e-6 * r {
        return Err(Error::config(
            pointer,
            format!("{fine} must be positive and divide grid.dt = {coarse}"),
        ));
    }
    Ok(n as usize)
}

impl ExperimentConfig {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Builds every component, checking all physical invariants.
    pub fn build(&self) -> Result<Experiment> {
        let mut warnings = Vec::new();
        let system = self.build_system()?;
        let dim = system.dim();
        let rho0 = self.build_state(dim)?;
        let field = self.build_field(&mut warnings)?;
        let scheme = match self.measurement {
            MeasurementConfig::Homodyne => MeasurementScheme::Homodyne,
            MeasurementConfig::Counting { intensity_floor } => {
                MeasurementScheme::counting_with_floor(intensity_floor).map_err(at("/measurement/intensity_floor"))?
            }
        };
        let grid = self.grid;
        let ode_stride = ratio(grid.dt(), self.ode_dt.unwrap_or(grid.dt()), "/ode_dt")?;
        let substeps = ratio(grid.dt(), self.sde_dt.unwrap_or(grid.dt()), "/sde_dt")?;
        let ode_grid = grid.refine(ode_stride).map_err(at("/ode_dt"))?;
        let sampling = Sampling::new(grid, substeps).map_err(at("/sde_dt"))?;
        if self.trajectories == 0 {
            return Err(Error::config("/trajectories", "need at least one trajectory"));
        }
        if self.parallelism == 0 {
            return Err(Error::config("/parallelism", "need at least one thread"));
        }
        let observables = self.build_observables(dim)?;
        Ok(Experiment {
            config: self.clone(),
            system,
            field,
            scheme,
            rho0,
            grid,
            ode_grid,
            ode_stride,
            sampling,
            observables,
            warnings,
        })
    }

    fn build_system(&self) -> Result<SlhTriple> {
        let check_rate = |kappa: f64| {
            if kappa >= 0.0 && kappa.is_finite() {
                Ok(kappa)
            } else {
                Err(Error::config(
                    "/system/kappa",
                    format!("decay rate must be non-negative, got {kappa}"),
                ))
            }
        };
        match &self.system {
            SystemConfig::TwoLevelAtom { kappa, detuning } => {
                let tl = preset_two_level();
                let l = tl.sigma_minus.scale_real(check_rate(*kappa)?.sqrt());
                SlhTriple::new(tl.identity.clone(), l, tl.excited.scale_real(*detuning)).map_err(at("/system"))
            }
            SystemConfig::Cavity { dim, kappa, detuning } => {
                if *dim < 2 {
                    return Err(Error::config("/system/dim", "cavity needs at least two levels"));
                }
                let l = annihilation(*dim).scale_real(check_rate(*kappa)?.sqrt());
                SlhTriple::new(Operator::identity(*dim), l, number(*dim).scale_real(*detuning)).map_err(at("/system"))
            }
            SystemConfig::Matrices { s, l, h } => {
                let s = matrix(s, "/system/s")?;
                let l = matrix(l, "/system/l")?;
                let h = matrix(h, "/system/h")?;
                SlhTriple::new(s, l, h).map_err(at("/system"))
            }
        }
    }

    fn build_state(&self, dim: usize) -> Result<Operator> {
        match &self.initial_state {
            StateConfig::Basis { index } => {
                if *index >= dim {
                    return Err(Error::config(
                        "/initial_state/index",
                        format!("basis index {index} outside dimension {dim}"),
                    ));
                }
                Ok(Operator::projector(dim, *index))
            }
            StateConfig::Amplitudes { values } => {
                if values.len() != dim {
                    return Err(Error::config(
                        "/initial_state/values",
                        format!("{} amplitudes for dimension {dim}", values.len()),
                    ));
                }
                let norm: f64 = values.iter().map(|z| z.norm_sqr()).sum();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::config(
                        "/initial_state/values",
                        format!("ket has squared norm {norm}, expected 1"),
                    ));
                }
                Ok(Operator::outer(values, values))
            }
            StateConfig::Density { matrix: rows } => {
                let rho = matrix(rows, "/initial_state/matrix")?;
                if rho.dim() != dim {
                    return Err(Error::config(
                        "/initial_state/matrix",
                        format!("dimension {} does not match the system ({dim})", rho.dim()),
                    ));
                }
                if (rho.trace() - ONE).norm() > 1e-9 || !is_psd(&rho.to_rows(), 1e-9) {
                    return Err(Error::config(
                        "/initial_state/matrix",
                        "not a unit-trace positive semidefinite matrix",
                    ));
                }
                Ok(rho)
            }
        }
    }

    fn build_field(&self, warnings: &mut Vec<String>) -> Result<FieldSpec> {
        match &self.field {
            FieldConfig::Vacuum => Ok(FieldSpec::Vacuum),
            FieldConfig::Photon { gamma: d, wavepacket } => {
                let gamma = [[d[1][1], d[1][0]], [d[0][1], d[0][0]]];
                let gamma = WeightMatrix::photon(gamma).map_err(at("/field/gamma"))?;
                let profile = wavepacket.build("/field/wavepacket")?;
                let (lo, _) = profile.support();
                let t0 = self.grid.t0();
                if lo < t0 {
                    let lost = profile.mass_between(lo, t0).map_err(at("/field/wavepacket"))?;
                    if lost > TRUNCATION_WARNING {
                        warnings.push(format!(
                            "wavepacket carries {lost:.3e} of its norm before t0 = {t0}; \
                             the simulation starts from the truncated packet"
                        ));
                    }
                }
                let xi = Wavepacket::new(profile).map_err(at("/field/wavepacket"))?;
                Ok(FieldSpec::PhotonCombination { gamma, xi })
            }
            FieldConfig::Coherent { gamma, amplitudes } => {
                let profiles = amplitudes
                    .iter()
                    .enumerate()
                    .map(|(i, p)| p.build(&format!("/field/amplitudes/{i}")))
                    .collect::<Result<Vec<_>>>()?;
                let amps = CoherentAmplitudes::new(profiles).map_err(at("/field/amplitudes"))?;
                let gram = amps.gram().map_err(at("/field/amplitudes"))?;
                let gamma = WeightMatrix::coherent(gamma.clone(), &gram).map_err(at("/field/gamma"))?;
                Ok(FieldSpec::CoherentCombination { gamma, amps })
            }
        }
    }

    fn build_observables(&self, dim: usize) -> Result<Vec<Observable>> {
        let mut out: Vec<Observable> = Vec::with_capacity(self.observables.len());
        for (i, obs) in self.observables.iter().enumerate() {
            let pointer = format!("/observables/{i}");
            if obs.name.is_empty() || obs.name.contains([',', '\n', '"']) {
                return Err(Error::config(
                    format!("{pointer}/name"),
                    "name must be non-empty without commas or quotes",
                ));
            }
            if out.iter().any(|o| o.name == obs.name) {
                return Err(Error::config(
                    format!("{pointer}/name"),
                    format!("duplicate observable {:?}", obs.name),
                ));
            }
            let op = match &obs.operator {
                OperatorConfig::Preset(name) => preset_operator(name, dim).ok_or_else(|| {
                    Error::config(
                        format!("{pointer}/operator"),
                        format!("unknown operator {name:?} for dimension {dim}"),
                    )
                })?,
                OperatorConfig::Matrix(rows) => {
                    let op = matrix(rows, &format!("{pointer}/operator"))?;
                    if op.dim() != dim {
                        return Err(Error::config(
                            format!("{pointer}/operator"),
                            format!("dimension {} does not match the system ({dim})", op.dim()),
                        ));
                    }
                    op
                }
            };
            let defect = op.hermiticity_defect();
            if defect > 1e-12 {
                return Err(Error::config(
                    format!("{pointer}/operator"),
                    format!("not Hermitian (defect {defect:.2e})"),
                ));
            }
            out.push(Observable::new(obs.name.clone(), op));
        }
        Ok(out)
    }
}

fn preset_operator(name: &str, dim: usize) -> Option<Operator> {
    if name == "identity" {
        return Some(Operator::identity(dim));
    }
    if dim == 2 {
        let tl = preset_two_level();
        let [x, y, z] = pauli();
        return match name {
            "excited" => Some(tl.excited),
            "ground" => Some(tl.ground),
            "sigma_x" => Some(x),
            "sigma_y" => Some(y),
            "sigma_z" => Some(z),
            "number" => Some(number(2)),
            _ => None,
        };
    }
    match name {
        "number" => Some(number(dim)),
        _ => None,
    }
}

impl ProfileConfig {
    fn build(&self, pointer: &str) -> Result<Profile> {
        match self {
            ProfileConfig::Gaussian { omega, t_c, scale } => {
                Profile::gaussian(*omega, *t_c, *scale).map_err(at(pointer))
            }
            ProfileConfig::Constant { value, start, end } => {
                Profile::constant(*value, *start, *end).map_err(at(pointer))
            }
            ProfileConfig::Table { times, values } => {
                Profile::table(times.clone(), values.clone()).map_err(at(pointer))
            }
        }
    }
}
