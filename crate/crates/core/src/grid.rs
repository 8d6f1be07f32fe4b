use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A uniform time grid `t0, t0 + dt, …, t0 + steps·dt`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid", into = "RawGrid")]
pub struct TimeGrid {
    t0: f64,
    dt: f64,
    steps: usize,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    t0: f64,
    t1: f64,
    dt: f64,
}

impl TryFrom<RawGrid> for TimeGrid {
    type Error = Error;

    fn try_from(raw: RawGrid) -> Result<Self> {
        TimeGrid::new(raw.t0, raw.t1, raw.dt)
    }
}

impl From<TimeGrid> for RawGrid {
    fn from(g: TimeGrid) -> Self {
        RawGrid {
            t0: g.t0,
            t1: g.end(),
            dt: g.dt,
        }
    }
}

impl TimeGrid {
    /// The step count is `(t1 - t0)/dt` rounded to the nearest integer.
    pub fn new(t0: f64, t1: f64, dt: f64) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::invalid("time step", format!("dt must be positive, got {dt}")));
        }
        if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
            return Err(Error::invalid("time grid", format!("need t0 < t1, got [{t0}, {t1}]")));
        }
        let steps = ((t1 - t0) / dt).round();
        if steps < 1.0 {
            return Err(Error::invalid("time grid", format!("dt = {dt} exceeds the horizon")));
        }
        Ok(TimeGrid {
            t0,
            dt,
            steps: steps as usize,
        })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of grid points, `steps + 1`.
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.steps).map(move |i| self.time(i))
    }

    /// A finer grid over the same horizon with `factor` substeps per step.
    pub fn refine(&self, factor: usize) -> Result<TimeGrid> {
        if factor == 0 {
            return Err(Error::invalid("refinement factor", "must be at least 1"));
        }
        Ok(TimeGrid {
            t0: self.t0,
            dt: self.dt / factor as f64,
            steps: self.steps * factor,
        })
    }
}
