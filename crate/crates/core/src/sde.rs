//! Random streams, noise increments, and trajectory/ensemble drivers.

use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filter::{FilterModel, FilterState};
use crate::operator::{Operator, C64};

pub use crate::grid::TimeGrid;

/// Largest per-step jump probability accepted by [`bernoulli_jump`].
pub const MAX_JUMP_PROBABILITY: f64 = 0.1;

/// A reproducible random stream for trajectory `index` of a run seeded
/// with `seed`. Every draw consumes exactly two 64-bit words, so the
/// `counter`-th draw can be reached directly with [`NoiseStream::at`].
#[derive(Clone, Debug)]
pub struct NoiseStream {
    seed: u64,
    index: u64,
    counter: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(seed: u64, index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        NoiseStream {
            seed,
            index,
            counter: 0,
            rng,
        }
    }

    /// The stream positioned before draw number `counter`.
    pub fn at(seed: u64, index: u64, counter: u64) -> Self {
        let mut s = Self::new(seed, index);
        s.rng.set_word_pos(4 * counter as u128);
        s.counter = counter;
        s
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    /// Two uniforms in `(0, 1]`.
    fn uniform_pair(&mut self) -> (f64, f64) {
        self.counter += 1;
        let to_unit = |x: u64| 1.0 - (x >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (to_unit(self.rng.next_u64()), to_unit(self.rng.next_u64()))
    }

    /// A standard normal sample (Box–Muller, cosine branch).
    pub fn standard_normal(&mut self) -> f64 {
        let (u1, u2) = self.uniform_pair();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// A uniform sample in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        1.0 - self.uniform_pair().0
    }
}

/// A sample of `Normal(0, dt)`.
pub fn gaussian_increment(stream: &mut NoiseStream, dt: f64) -> Result<f64> {
    if !(dt > 0.0) {
        return Err(Error::invalid("time step", format!("dt must be positive, got {dt}")));
    }
    Ok(stream.standard_normal() * dt.sqrt())
}

/// `true` with probability `intensity·dt` (negative intensities from
/// round-off count as zero).
pub fn bernoulli_jump(stream: &mut NoiseStream, intensity: f64, dt: f64) -> Result<bool> {
    if !(dt > 0.0) {
        return Err(Error::invalid("time step", format!("dt must be positive, got {dt}")));
    }
    let p = (intensity * dt).max(0.0);
    if p > MAX_JUMP_PROBABILITY || !p.is_finite() {
        return Err(Error::JumpProbability {
            probability: p,
            intensity,
        });
    }
    Ok(stream.uniform() < p)
}

/// A named observable sampled from the conditional state.
#[derive(Clone, Debug, PartialEq)]
pub struct Observable {
    pub name: String,
    pub operator: Operator,
}

impl Observable {
    pub fn new(name: impl Into<String>, operator: Operator) -> Self {
        Observable {
            name: name.into(),
            operator,
        }
    }
}

/// One simulated trajectory sampled on its record grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub grid: TimeGrid,
    pub seed: u64,
    pub index: u64,
    pub names: Vec<String>,
    /// `observables[i][n]`: observable `i` at grid point `n`.
    pub observables: Vec<Vec<f64>>,
    /// Record increment accumulated over each grid interval (0 at `t0`).
    pub d_y: Vec<f64>,
    /// Cumulative innovation at each grid point.
    pub innovation: Vec<f64>,
    /// Unnormalized block traces `tr ρ^{jk}` (row-major) at each grid point.
    pub traces: Vec<Vec<C64>>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.d_y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_y.is_empty()
    }

    /// Cumulative record `Y(t)` (the click count for counting schemes).
    pub fn cumulative_record(&self) -> Vec<f64> {
        self.d_y
            .iter()
            .scan(0.0, |acc, dy| {
                *acc += dy;
                Some(*acc)
            })
            .collect()
    }

    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.observables[i].as_slice())
    }
}

/// How a trajectory is simulated: record grid plus integration substeps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sampling {
    /// Grid on which observables and record increments are reported.
    pub grid: TimeGrid,
    /// Integration steps per grid interval.
    pub substeps: usize,
}

impl Sampling {
    pub fn new(grid: TimeGrid, substeps: usize) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::invalid("substeps", "must be at least 1"));
        }
        Ok(Sampling { grid, substeps })
    }

    /// Reports every `record_dt` while integrating with `sde_dt`, which must
    /// divide it.
    pub fn with_steps(t0: f64, t1: f64, record_dt: f64, sde_dt: f64) -> Result<Self> {
        let ratio = record_dt / sde_dt;
        let substeps = ratio.round();
        if !(substeps >= 1.0) || (ratio - substeps).abs() > 1e-6 * ratio {
            return Err(Error::invalid(
                "integration step",
                format!("sde_dt = {sde_dt} must divide the record step {record_dt}"),
            ));
        }
        Sampling::new(TimeGrid::new(t0, t1, record_dt)?, substeps as usize)
    }

    pub fn sde_dt(&self) -> f64 {
        self.grid.dt() / self.substeps as f64
    }
}

/// Simulates one trajectory: the record is drawn from the model's own
/// prediction (`dY = rate·dt + dW` or a Bernoulli click) and fed back to the
/// filter. Observables are sampled at grid points after each interval.
pub fn run_trajectory(
    model: &FilterModel,
    rho0: &Operator,
    sampling: &Sampling,
    stream: NoiseStream,
    observables: &[Observable],
) -> Result<TrajectoryRecord> {
    run_trajectory_with(model, rho0, sampling, stream, observables, |_, _| Ok(()))
}

/// [`run_trajectory`] with a hook called after every integration step.
pub fn run_trajectory_with<F>(
    model: &FilterModel,
    rho0: &Operator,
    sampling: &Sampling,
    mut stream: NoiseStream,
    observables: &[Observable],
    mut inspect: F,
) -> Result<TrajectoryRecord>
where
    F: FnMut(usize, &FilterState) -> Result<()>,
{
    let grid = sampling.grid;
    let dt = sampling.sde_dt();
    let counting = model.scheme().is_counting();
    let mut state = model.initial_state(rho0, grid.t0())?;
    let n = grid.len();
    let mut rec = TrajectoryRecord {
        grid,
        seed: stream.seed(),
        index: stream.index(),
        names: observables.iter().map(|o| o.name.clone()).collect(),
        observables: vec![Vec::with_capacity(n); observables.len()],
        d_y: Vec::with_capacity(n),
        innovation: Vec::with_capacity(n),
        traces: Vec::with_capacity(n),
    };
    let sample = |rec: &mut TrajectoryRecord, state: &FilterState, dy: f64| -> Result<()> {
        let rho = model.conditional_state(state)?;
        for (series, obs) in rec.observables.iter_mut().zip(observables) {
            series.push(rho.expectation(&obs.operator));
        }
        rec.d_y.push(dy);
        rec.innovation.push(state.innovation());
        rec.traces.push(state.hierarchy().traces());
        Ok(())
    };
    sample(&mut rec, &state, 0.0)?;
    let mut step = 0;
    for i in 0..grid.steps() {
        let mut dy_total = 0.0;
        for s in 0..sampling.substeps {
            let t = grid.time(i) + s as f64 * dt;
            let advance = |state: &mut FilterState, stream: &mut NoiseStream| -> Result<f64> {
                let rate = model.record_rate(t, state)?;
                let dy = if counting {
                    if bernoulli_jump(stream, rate, dt)? {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    rate * dt + gaussian_increment(stream, dt)?
                };
                model.step(t, state, dy, dt)?;
                Ok(dy)
            };
            let dy = advance(&mut state, &mut stream).map_err(|e| Error::Step {
                step,
                t,
                source: Box::new(e),
            })?;
            inspect(step, &state)?;
            dy_total += dy;
            step += 1;
        }
        sample(&mut rec, &state, dy_total)?;
    }
    Ok(rec)
}

/// Mean and standard error of one series across trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesStats {
    pub name: String,
    pub mean: Vec<f64>,
    /// `None` when fewer than two trajectories were run.
    pub sem: Option<Vec<f64>>,
}

/// Ensemble statistics on the record grid.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleSummary {
    pub grid: TimeGrid,
    pub trajectories: usize,
    pub observables: Vec<SeriesStats>,
    /// Cumulative innovation.
    pub innovation: SeriesStats,
    /// Cumulative record `Y(t)`.
    pub record: SeriesStats,
}

impl EnsembleSummary {
    pub fn observable(&self, name: &str) -> Option<&SeriesStats> {
        self.observables.iter().find(|s| s.name == name)
    }
}

/// Welford accumulator over a fixed-length series.
struct Welford {
    name: String,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn new(name: impl Into<String>, len: usize) -> Self {
        Welford {
            name: name.into(),
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, count: usize, xs: &[f64]) {
        let c = count as f64;
        for ((m, m2), &x) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(xs) {
            let delta = x - *m;
            *m += delta / c;
            *m2 += delta * (x - *m);
        }
    }

    fn finish(self, count: usize) -> SeriesStats {
        let sem = (count >= 2).then(|| {
            let c = count as f64;
            self.m2.iter().map(|m2| (m2 / (c - 1.0) / c).sqrt()).collect()
        });
        SeriesStats {
            name: self.name,
            mean: self.mean,
            sem,
        }
    }
}

/// Settings for [`run_ensemble`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleConfig {
    pub seed: u64,
    pub trajectories: usize,
    pub parallelism: usize,
}

/// Runs trajectories `0..N` on streams `(seed, i)` using up to
/// `parallelism` threads. Results are reduced (and handed to `sink`) in
/// index order, so every output is independent of the thread count.
pub fn run_ensemble<S>(
    model: &FilterModel,
    rho0: &Operator,
    sampling: &Sampling,
    config: EnsembleConfig,
    observables: &[Observable],
    sink: S,
) -> Result<EnsembleSummary>
where
    S: FnMut(&TrajectoryRecord) -> Result<()>,
{
    run_ensemble_with(model, rho0, sampling, config, observables, |_, _, _| Ok(()), sink)
}

/// [`run_ensemble`] with a hook called as `inspect(trajectory, step, state)`
/// after every integration step (from worker threads, in no fixed order).
pub fn run_ensemble_with<I, S>(
    model: &FilterModel,
    rho0: &Operator,
    sampling: &Sampling,
    config: EnsembleConfig,
    observables: &[Observable],
    inspect: I,
    mut sink: S,
) -> Result<EnsembleSummary>
where
    I: Fn(usize, usize, &FilterState) -> Result<()> + Sync,
    S: FnMut(&TrajectoryRecord) -> Result<()>,
{
    if config.trajectories == 0 {
        return Err(Error::invalid("trajectory count", "need at least one trajectory"));
    }
    let threads = config.parallelism.max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::invalid("parallelism", e.to_string()))?;
    let len = sampling.grid.len();
    let mut obs_acc: Vec<Welford> = observables.iter().map(|o| Welford::new(o.name.clone(), len)).collect();
    let mut innovation = Welford::new("innovation", len);
    let mut record = Welford::new("record", len);
    let batch = 2 * threads;
    let mut done = 0;
    while done < config.trajectories {
        let end = (done + batch).min(config.trajectories);
        let results: Vec<Result<TrajectoryRecord>> = pool.install(|| {
            (done..end)
                .into_par_iter()
                .map(|i| {
                    let stream = NoiseStream::new(config.seed, i as u64);
                    run_trajectory_with(model, rho0, sampling, stream, observables, |step, st| {
                        inspect(i, step, st)
                    })
                    .map_err(|e| Error::Trajectory {
                        index: i,
                        source: Box::new(e),
                    })
                })
                .collect()
        });
        for r in results {
            let rec = r?;
            done += 1;
            for (acc, series) in obs_acc.iter_mut().zip(&rec.observables) {
                acc.push(done, series);
            }
            innovation.push(done, &rec.innovation);
            record.push(done, &rec.cumulative_record());
            sink(&rec)?;
        }
    }
    let n = config.trajectories;
    Ok(EnsembleSummary {
        grid: sampling.grid,
        trajectories: n,
        observables: obs_acc.into_iter().map(|a| a.finish(n)).collect(),
        innovation: innovation.finish(n),
        record: record.finish(n),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_moments() {
        let mut s = NoiseStream::new(7, 0);
        let dt = 1e-3;
        let n = 1_000_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let x = gaussian_increment(&mut s, dt).unwrap();
            sum += x;
            sq += x * x;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        assert!(mean.abs() <= 4.0 * (dt / n as f64).sqrt(), "mean {mean}");
        assert!((var / dt - 1.0).abs() < 0.01, "var {var}");
    }

    #[test]
    fn jump_rate() {
        let mut s = NoiseStream::new(11, 3);
        let n = 1_000_000;
        let hits = (0..n).filter(|_| bernoulli_jump(&mut s, 1.0, 1e-4).unwrap()).count();
        let rate = hits as f64 / n as f64;
        assert!((rate / 1e-4 - 1.0).abs() < 0.05, "rate {rate}");
        assert!(!(0..1000).any(|_| bernoulli_jump(&mut s, 0.0, 1e-4).unwrap()));
        assert!(matches!(
            bernoulli_jump(&mut s, 200.0, 1e-3),
            Err(Error::JumpProbability { .. })
        ));
    }

    #[test]
    fn streams_are_reproducible_and_seekable() {
        let draw = |mut s: NoiseStream| (0..10).map(|_| s.standard_normal()).collect::<Vec<_>>();
        let a = draw(NoiseStream::new(5, 2));
        assert_eq!(a, draw(NoiseStream::new(5, 2)));
        assert_ne!(a, draw(NoiseStream::new(5, 3)));
        assert_ne!(a, draw(NoiseStream::new(6, 2)));
        let mut s = NoiseStream::new(5, 2);
        let _ = s.uniform();
        let _ = s.standard_normal();
        let _ = s.standard_normal();
        let mut t = NoiseStream::at(5, 2, 3);
        assert_eq!(s.standard_normal(), t.standard_normal());
        assert_eq!(t.counter(), 4);
    }
}
