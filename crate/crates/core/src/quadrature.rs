//! Globally adaptive Gauss–Kronrod (7/15) quadrature for complex integrands.

use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::operator::{C64, ZERO};

pub const DEFAULT_REL_TOL: f64 = 1e-8;
const ABS_FLOOR: f64 = 1e-300;
const MAX_INTERVALS: usize = 4000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Piece {
    a: f64,
    b: f64,
    value: C64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Piece {}

impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Piece {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15(f: &impl Fn(f64) -> C64, a: f64, b: f64) -> Piece {
    let centre = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(centre);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * x;
        let pair = f(centre - dx) + f(centre + dx);
        kronrod += pair * w;
        if i % 2 == 1 {
            gauss += pair * WG[i / 2];
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).norm();
    Piece { a, b, value, error }
}

/// `∫_a^b f` to relative tolerance `rel_tol` (absolute floor `abs_tol`).
pub fn integrate(f: impl Fn(f64) -> C64, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<C64> {
    if a == b {
        return Ok(ZERO);
    }
    if b < a {
        return integrate(f, b, a, rel_tol, abs_tol).map(|v| -v);
    }
    let mut heap = BinaryHeap::new();
    let first = gk15(&f, a, b);
    let mut total = first.value;
    let mut err = first.error;
    heap.push(first);
    while err > (rel_tol * total.norm()).max(abs_tol).max(ABS_FLOOR) || !err.is_finite() {
        if heap.len() >= MAX_INTERVALS || !err.is_finite() {
            return Err(Error::Quadrature { residual: err });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            return Err(Error::Quadrature { residual: err });
        }
        let left = gk15(&f, worst.a, mid);
        let right = gk15(&f, mid, worst.b);
        total += left.value + right.value - worst.value;
        err += left.error + right.error - worst.error;
        if !total.is_finite() {
            return Err(Error::Quadrature {
                residual: f64::INFINITY,
            });
        }
        heap.push(left);
        heap.push(right);
    }
    // Re-sum to shed the drift of the running updates.
    Ok(heap.iter().map(|p| p.value).sum())
}

/// Integrates over `[a, b]` splitting at the given interior break points
/// (discontinuities of piecewise inputs).
pub fn integrate_piecewise(f: impl Fn(f64) -> C64, a: f64, b: f64, breaks: &[f64], rel_tol: f64) -> Result<C64> {
    if b <= a {
        return Ok(ZERO);
    }
    let mut points: Vec<f64> = breaks.iter().copied().filter(|&x| x > a && x < b).collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut edges = Vec::with_capacity(points.len() + 2);
    edges.push(a);
    edges.extend(points);
    edges.push(b);
    let mut sum = ZERO;
    for w in edges.windows(2) {
        sum += integrate(&f, w[0], w[1], rel_tol, 0.0)?;
    }
    Ok(sum)
}

pub fn integrate_real(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    integrate(|t| C64::new(f(t), 0.0), a, b, rel_tol, 0.0).map(|z| z.re)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate_real(|x| 3.0 * x * x - x + 2.0, -1.0, 2.0, 1e-12).unwrap();
        assert!((v - (8.0 + 1.0 - 1.5 + 6.0)).abs() < 1e-13);
    }

    #[test]
    fn gaussian_mass() {
        let v = integrate_real(|x| (-x * x).exp(), -12.0, 12.0, 1e-12).unwrap();
        assert!((v - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn oscillatory_complex() {
        let v = integrate(|x| C64::new(0.0, 3.0 * x).exp(), 0.0, 2.0, 1e-12, 0.0).unwrap();
        let exact = (C64::new(0.0, 6.0).exp() - 1.0) / C64::new(0.0, 3.0);
        assert!((v - exact).norm() < 1e-12);
    }

    #[test]
    fn piecewise_step() {
        let f = |x: f64| {
            if x < 1.0 {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 2.0)
            }
        };
        let v = integrate_piecewise(f, 0.0, 3.0, &[1.0], 1e-12).unwrap();
        assert!((v - C64::new(1.0, 4.0)).norm() < 1e-13);
        assert!((integrate(|_| C64::new(1.0, 0.0), 2.0, 0.0, 1e-12, 0.0).unwrap().re + 2.0).abs() < 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let err = integrate(|x| C64::new(1.0 / x, 0.0), 0.0, 1.0, 1e-10, 0.0);
        assert!(matches!(err, Err(Error::Quadrature { .. })), "{err:?}");
    }
}
