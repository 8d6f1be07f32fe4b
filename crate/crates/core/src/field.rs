//! Input field descriptions: single-photon wavepackets, coherent amplitude
//! functions, weight matrices, overlaps, and the scalar time functions used
//! by the hierarchies and the extended-system construction.
//!
//! Indices are zero-based. For photon/vacuum combinations index 0 is the
//! vacuum and index 1 the photon; for coherent combinations index `j`
//! refers to amplitude `α_j`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::{C64, ONE, ZERO};
use crate::quadrature::{integrate_piecewise, DEFAULT_REL_TOL};

/// Clamp floor for `w(t)` inside `λ(t) = ξ(t)/√w(t)`.
pub const DEFAULT_SURVIVAL_EPS: f64 = 1e-12;
/// Tolerance on `∫|ξ|² = 1`.
pub const NORM_TOL: f64 = 1e-6;
/// Tolerance on weight-matrix normalization and positivity.
pub const WEIGHT_TOL: f64 = 1e-9;
/// Smallest usable `|g_jk|`.
pub const OVERLAP_FLOOR: f64 = 1e-12;

/// Gaussian supports extend this many standard widths (`√2/Ω`) from the centre.
const GAUSSIAN_WIDTHS: f64 = 6.0;

/// A complex function of time with a declared support outside of which it
/// vanishes (to quadrature accuracy).
#[derive(Clone)]
pub enum Profile {
    /// `scale · (Ω²/2π)^{1/4} exp(-Ω²(t - t_c)²/4)`
    Gaussian { omega: f64, t_c: f64, scale: C64 },
    /// `value` on `[start, end)`, zero elsewhere.
    Constant { value: C64, start: f64, end: f64 },
    /// Linear interpolation of samples, zero outside the sampled range.
    Table { times: Vec<f64>, values: Vec<C64> },
    Custom {
        f: Arc<dyn Fn(f64) -> C64 + Send + Sync>,
        support: (f64, f64),
    },
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Profile::Gaussian { omega, t_c, scale } => f
                .debug_struct("Gaussian")
                .field("omega", omega)
                .field("t_c", t_c)
                .field("scale", scale)
                .finish(),
            Profile::Constant { value, start, end } => f
                .debug_struct("Constant")
                .field("value", value)
                .field("start", start)
                .field("end", end)
                .finish(),
            Profile::Table { times, .. } => f.debug_struct("Table").field("samples", &times.len()).finish(),
            Profile::Custom { support, .. } => f.debug_struct("Custom").field("support", support).finish(),
        }
    }
}

impl Profile {
    pub fn gaussian(omega: f64, t_c: f64, scale: C64) -> Result<Self> {
        if !(omega > 0.0) || !omega.is_finite() {
            return Err(Error::invalid(
                "Gaussian bandwidth",
                format!("Ω must be positive, got {omega}"),
            ));
        }
        Ok(Profile::Gaussian { omega, t_c, scale })
    }

    pub fn constant(value: C64, start: f64, end: f64) -> Result<Self> {
        if !(end > start) {
            return Err(Error::invalid("constant window", format!("[{start}, {end}) is empty")));
        }
        Ok(Profile::Constant { value, start, end })
    }

    pub fn table(times: Vec<f64>, values: Vec<C64>) -> Result<Self> {
        if times.len() < 2 || times.len() != values.len() {
            return Err(Error::invalid(
                "sample table",
                format!(
                    "need ≥2 matching samples, got {} times and {} values",
                    times.len(),
                    values.len()
                ),
            ));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("sample table", "times must be strictly increasing"));
        }
        Ok(Profile::Table { times, values })
    }

    pub fn custom(f: impl Fn(f64) -> C64 + Send + Sync + 'static, support: (f64, f64)) -> Self {
        Profile::Custom {
            f: Arc::new(f),
            support,
        }
    }

    pub fn eval(&self, t: f64) -> C64 {
        match self {
            Profile::Gaussian { omega, t_c, scale } => {
                let amp = (omega * omega / (2.0 * PI)).powf(0.25);
                let dt = t - t_c;
                scale * amp * (-omega * omega * dt * dt / 4.0).exp()
            }
            Profile::Constant { value, start, end } => {
                if t >= *start && t < *end {
                    *value
                } else {
                    ZERO
                }
            }
            Profile::Table { times, values } => {
                let n = times.len();
                if t < times[0] || t > times[n - 1] {
                    return ZERO;
                }
                let idx = times.partition_point(|&s| s <= t).clamp(1, n - 1);
                let (t0, t1) = (times[idx - 1], times[idx]);
                let u = (t - t0) / (t1 - t0);
                values[idx - 1] * (1.0 - u) + values[idx] * u
            }
            Profile::Custom { f, .. } => f(t),
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            Profile::Gaussian { omega, t_c, .. } => {
                let half = GAUSSIAN_WIDTHS * std::f64::consts::SQRT_2 / omega;
                (t_c - half, t_c + half)
            }
            Profile::Constant { start, end, .. } => (*start, *end),
            Profile::Table { times, .. } => (times[0], times[times.len() - 1]),
            Profile::Custom { support, .. } => *support,
        }
    }

    /// Points where the function or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Profile::Constant { start, end, .. } => vec![*start, *end],
            Profile::Table { times, .. } => times.clone(),
            _ => Vec::new(),
        }
    }

    /// `∫_a^b |f|²`
    pub fn mass_between(&self, a: f64, b: f64) -> Result<f64> {
        let (lo, hi) = self.support();
        let (a, b) = (a.max(lo), b.min(hi));
        if b <= a {
            return Ok(0.0);
        }
        integrate_piecewise(
            |t| C64::new(self.eval(t).norm_sqr(), 0.0),
            a,
            b,
            &self.breakpoints(),
            DEFAULT_REL_TOL,
        )
        .map(|z| z.re)
    }

    pub fn norm_sqr(&self) -> Result<f64> {
        let (lo, hi) = self.support();
        self.mass_between(lo, hi)
    }
}

fn union_support(profiles: &[&Profile]) -> (f64, f64) {
    profiles
        .iter()
        .map(|p| p.support())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |acc, s| {
            (acc.0.min(s.0), acc.1.max(s.1))
        })
}

fn union_breaks(profiles: &[&Profile]) -> Vec<f64> {
    let mut out: Vec<f64> = profiles.iter().flat_map(|p| p.breakpoints()).collect();
    for p in profiles {
        let (lo, hi) = p.support();
        out.push(lo);
        out.push(hi);
    }
    out
}

/// A normalized single-photon wavepacket `ξ(t)`.
#[derive(Clone, Debug)]
pub struct Wavepacket {
    profile: Profile,
}

impl Wavepacket {
    /// Wraps a profile after checking `∫|ξ|² = 1` over its support.
    pub fn new(profile: Profile) -> Result<Self> {
        let norm = profile.norm_sqr()?;
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::invalid("wavepacket", format!("∫|ξ|² = {norm:.9}, expected 1")));
        }
        Ok(Wavepacket { profile })
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn xi(&self, t: f64) -> C64 {
        self.profile.eval(t)
    }

    pub fn support(&self) -> (f64, f64) {
        self.profile.support()
    }

    /// `w(t) = ∫_t^∞ |ξ(s)|² ds`
    pub fn survival(&self, t: f64) -> Result<f64> {
        let (_, hi) = self.support();
        self.profile.mass_between(t, hi)
    }

    /// `w` at every (sorted, ascending) time, accumulated from the far end so
    /// the small tail values keep their relative accuracy.
    pub fn survival_on(&self, times: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; times.len()];
        let Some(&last) = times.last() else {
            return Ok(out);
        };
        let mut acc = self.survival(last)?;
        out[times.len() - 1] = acc;
        for i in (0..times.len() - 1).rev() {
            acc += self.profile.mass_between(times[i], times[i + 1])?;
            out[i] = acc;
        }
        Ok(out)
    }

    /// `λ(t) = ξ(t)/√max(w(t), eps)`
    pub fn lambda(&self, t: f64, eps: f64) -> Result<C64> {
        Ok(lambda_from(self.xi(t), self.survival(t)?, eps))
    }
}

pub(crate) fn lambda_from(xi: C64, w: f64, eps: f64) -> C64 {
    xi / w.max(eps).sqrt()
}

pub fn gaussian_wavepacket(omega: f64, t_c: f64) -> Result<Wavepacket> {
    Wavepacket::new(Profile::gaussian(omega, t_c, ONE)?)
}

pub fn survival_w(xi: &Wavepacket, t: f64) -> Result<f64> {
    xi.survival(t)
}

pub fn generator_coupling_lambda(xi: &Wavepacket, t: f64, eps: f64) -> Result<C64> {
    if !(eps > 0.0) {
        return Err(Error::invalid(
            "survival clamp",
            format!("eps must be positive, got {eps}"),
        ));
    }
    xi.lambda(t, eps)
}

/// The photon-case weight table: `w₀₀ = w`, `w₀₁ = w₁₀ = √w`, `w₁₁ = 1`.
pub fn photon_weights(xi: &Wavepacket, j: usize, k: usize, t: f64) -> Result<f64> {
    if j > 1 || k > 1 {
        return Err(Error::IndexOutOfRange { j, k, n: 2 });
    }
    photon_weight_from(xi.survival(t)?, j, k)
}

pub(crate) fn photon_weight_from(w: f64, j: usize, k: usize) -> Result<f64> {
    match (j, k) {
        (0, 0) => Ok(w),
        (0, 1) | (1, 0) => Ok(w.sqrt()),
        (1, 1) => Ok(1.0),
        _ => Err(Error::IndexOutOfRange { j, k, n: 2 }),
    }
}

/// Amplitude functions `α_j(t)` of a combination of coherent states.
#[derive(Clone, Debug)]
pub struct CoherentAmplitudes {
    profiles: Vec<Profile>,
}

/// Minimum `‖α_j - α_k‖²` for two amplitudes to count as distinct.
const DISTINCT_TOL: f64 = 1e-12;

impl CoherentAmplitudes {
    pub fn new(profiles: Vec<Profile>) -> Result<Self> {
        if profiles.is_empty() {
            return Err(Error::invalid("coherent amplitudes", "need at least one amplitude"));
        }
        for j in 0..profiles.len() {
            for k in j + 1..profiles.len() {
                let (a, b) = (&profiles[j], &profiles[k]);
                let (lo, hi) = union_support(&[a, b]);
                let dist = integrate_piecewise(
                    |t| C64::new((a.eval(t) - b.eval(t)).norm_sqr(), 0.0),
                    lo,
                    hi,
                    &union_breaks(&[a, b]),
                    DEFAULT_REL_TOL,
                )?
                .re;
                if dist <= DISTINCT_TOL {
                    return Err(Error::invalid(
                        "coherent amplitudes",
                        format!("amplitudes {j} and {k} coincide (‖α_j - α_k‖² = {dist:.3e})"),
                    ));
                }
            }
        }
        Ok(CoherentAmplitudes { profiles })
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    pub fn profiles(&self) -> &[Profile] {
        &self.profiles
    }

    pub fn at(&self, t: f64) -> Vec<C64> {
        self.profiles.iter().map(|p| p.eval(t)).collect()
    }

    pub fn support(&self) -> (f64, f64) {
        union_support(&self.profiles.iter().collect::<Vec<_>>())
    }

    pub fn breakpoints(&self) -> Vec<f64> {
        union_breaks(&self.profiles.iter().collect::<Vec<_>>())
    }

    fn check_index(&self, j: usize, k: usize) -> Result<()> {
        let n = self.len();
        if j >= n || k >= n {
            return Err(Error::IndexOutOfRange { j, k, n });
        }
        Ok(())
    }

    /// The overlap matrix `g_jk = ⟨α_j|α_k⟩`.
    pub fn gram(&self) -> Result<Gram> {
        let n = self.len();
        let mut g = vec![ONE; n * n];
        for j in 0..n {
            for k in j + 1..n {
                let v = coherent_overlap(&self.profiles[j], &self.profiles[k])?;
                g[j * n + k] = v;
                g[k * n + j] = v.conj();
            }
        }
        Ok(Gram { n, g })
    }
}

/// `⟨a|b⟩ = exp(-½‖a‖² - ½‖b‖² + ⟨a, b⟩)` for continuous-mode coherent states.
pub fn coherent_overlap(a: &Profile, b: &Profile) -> Result<C64> {
    let (lo, hi) = union_support(&[a, b]);
    let breaks = union_breaks(&[a, b]);
    let integrand = |t: f64| {
        let (x, y) = (a.eval(t), b.eval(t));
        x.conj() * y - 0.5 * (x.norm_sqr() + y.norm_sqr())
    };
    let exponent = integrate_piecewise(integrand, lo, hi, &breaks, DEFAULT_REL_TOL)?;
    Ok(exponent.exp())
}

/// `m_jk(t) = α_j*(t) α_k(t) - ½|α_j(t)|² - ½|α_k(t)|²`
pub fn cat_mjk(amps: &CoherentAmplitudes, j: usize, k: usize, t: f64) -> Result<C64> {
    amps.check_index(j, k)?;
    let (a, b) = (amps.profiles[j].eval(t), amps.profiles[k].eval(t));
    Ok(mjk_from(a, b))
}

pub(crate) fn mjk_from(aj: C64, ak: C64) -> C64 {
    aj.conj() * ak - 0.5 * (aj.norm_sqr() + ak.norm_sqr())
}

/// Hermitian overlap matrix of a set of coherent states.
#[derive(Clone, Debug, PartialEq)]
pub struct Gram {
    n: usize,
    g: Vec<C64>,
}

impl Gram {
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.g[j * self.n + k]
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.g.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    pub fn is_positive_semidefinite(&self, tol: f64) -> bool {
        is_psd(&self.rows(), tol)
    }
}

/// Hermitian positive-semidefiniteness up to `tol`: Cholesky of `A + tol·I`.
pub fn is_psd(a: &[Vec<C64>], tol: f64) -> bool {
    let n = a.len();
    for i in 0..n {
        for j in 0..n {
            if (a[i][j] - a[j][i].conj()).norm() > tol {
                return false;
            }
        }
    }
    let mut l = vec![vec![ZERO; n]; n];
    for j in 0..n {
        let mut d = a[j][j].re + tol;
        for k in 0..j {
            d -= l[j][k].norm_sqr();
        }
        if d < 0.0 {
            return false;
        }
        let d = d.sqrt();
        l[j][j] = C64::new(d, 0.0);
        for i in j + 1..n {
            let mut s = a[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k].conj();
            }
            l[i][j] = if d > 0.0 { s / d } else { ZERO };
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Photon,
    Coherent,
}

/// The weights `γ_jk` of a field combination, stored with `get(j, k) = γ_jk`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    kind: FieldKind,
    n: usize,
    gamma: Vec<C64>,
}

impl WeightMatrix {
    /// Photon/vacuum weights indexed `gamma[j][k] = γ_jk` (0 = vacuum,
    /// 1 = photon). The field state `Σ γ_kj |φ_j⟩⟨φ_k|` must be a density
    /// matrix.
    pub fn photon(gamma: [[C64; 2]; 2]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = gamma.iter().map(|r| r.to_vec()).collect();
        if !is_psd(&rows, WEIGHT_TOL) {
            return Err(Error::Normalization("γ must be Hermitian positive semidefinite".into()));
        }
        let trace = gamma[0][0] + gamma[1][1];
        if (trace - ONE).norm() > WEIGHT_TOL {
            return Err(Error::Normalization(format!(
                "photon weights need tr γ = 1, got {trace}"
            )));
        }
        Ok(WeightMatrix {
            kind: FieldKind::Photon,
            n: 2,
            gamma: rows.concat(),
        })
    }

    pub fn single_photon() -> Self {
        Self::photon([[ZERO, ZERO], [ZERO, ONE]]).expect("valid weights")
    }

    pub fn vacuum() -> Self {
        Self::photon([[ONE, ZERO], [ZERO, ZERO]]).expect("valid weights")
    }

    /// `p|1⟩⟨1| + (1 - p)|0⟩⟨0|`
    pub fn photon_mixture(p: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("photon probability", format!("{p} is outside [0, 1]")));
        }
        Self::photon([[C64::new(1.0 - p, 0.0), ZERO], [ZERO, C64::new(p, 0.0)]])
    }

    /// `a₁|1_ξ⟩ + a₀|0⟩` (normalized internally). The field state is
    /// `Σ γ_kj |φ_j⟩⟨φ_k|`, so `γ_jk = a_k a_j*`.
    pub fn photon_superposition(a1: C64, a0: C64) -> Result<Self> {
        let norm = (a1.norm_sqr() + a0.norm_sqr()).sqrt();
        if norm == 0.0 {
            return Err(Error::invalid("superposition", "both amplitudes vanish"));
        }
        let (a1, a0) = (a1 / norm, a0 / norm);
        Self::photon([
            [C64::new(a0.norm_sqr(), 0.0), a1 * a0.conj()],
            [a0 * a1.conj(), C64::new(a1.norm_sqr(), 0.0)],
        ])
    }

    /// Coherent-combination weights; requires `γ ⪰ 0` and `Σ γ_jk g_jk = 1`.
    pub fn coherent(gamma: Vec<Vec<C64>>, gram: &Gram) -> Result<Self> {
        let n = gram.len();
        if gamma.len() != n || gamma.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                context: "weight matrix vs amplitudes",
                left: gamma.len(),
                right: n,
            });
        }
        if !is_psd(&gamma, WEIGHT_TOL) {
            return Err(Error::Normalization("γ must be Hermitian positive semidefinite".into()));
        }
        let total: C64 = (0..n)
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .map(|(j, k)| gamma[j][k] * gram.get(j, k))
            .sum();
        if (total - ONE).norm() > WEIGHT_TOL {
            return Err(Error::Normalization(format!("Σ γ_jk g_jk = {total}, expected 1")));
        }
        Ok(WeightMatrix {
            kind: FieldKind::Coherent,
            n,
            gamma: gamma.concat(),
        })
    }

    /// Weights of the pure state `Σ_j s_j |α_j⟩`, rescaled to unit norm.
    pub fn cat_superposition(s: &[C64], gram: &Gram) -> Result<Self> {
        let n = gram.len();
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                context: "superposition coefficients vs amplitudes",
                left: s.len(),
                right: n,
            });
        }
        let norm: C64 = (0..n)
            .flat_map(|j| (0..n).map(move |k| (j, k)))
            .map(|(j, k)| s[j].conj() * s[k] * gram.get(j, k))
            .sum();
        if !(norm.re > 0.0) {
            return Err(Error::invalid("superposition", "state has zero norm"));
        }
        let scale = 1.0 / norm.re;
        // ρ = Σ s_j s_k* |α_j⟩⟨α_k| = Σ γ_kj |α_j⟩⟨α_k|  ⇒  γ_jk = s_k s_j*
        let gamma = (0..n)
            .map(|j| (0..n).map(|k| s[k] * s[j].conj() * scale).collect())
            .collect();
        Self::coherent(gamma, gram)
    }

    /// `Σ_j p_j |α_j⟩⟨α_j|` with probabilities `p_j`.
    pub fn cat_mixture(p: &[f64], gram: &Gram) -> Result<Self> {
        let n = gram.len();
        let gamma = (0..n)
            .map(|j| {
                (0..n)
                    .map(|k| if j == k { C64::new(p[j], 0.0) } else { ZERO })
                    .collect()
            })
            .collect();
        Self::coherent(gamma, gram)
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// `γ_jk`
    pub fn get(&self, j: usize, k: usize) -> C64 {
        self.gamma[j * self.n + k]
    }

    pub fn rows(&self) -> Vec<Vec<C64>> {
        self.gamma.chunks(self.n).map(|r| r.to_vec()).collect()
    }

    /// `N_a = Σ_l γ_ll`
    pub fn n_a(&self) -> f64 {
        (0..self.n).map(|l| self.get(l, l).re).sum()
    }
}

/// Ingredients for the coherent-combination integrating factors.
#[derive(Clone, Debug)]
pub struct CatWeights {
    amps: CoherentAmplitudes,
    gram: Gram,
    n_a: f64,
}

impl CatWeights {
    pub fn new(amps: CoherentAmplitudes, gamma: &WeightMatrix) -> Result<Self> {
        let gram = amps.gram()?;
        if gamma.len() != amps.len() {
            return Err(Error::DimensionMismatch {
                context: "weight matrix vs amplitudes",
                left: gamma.len(),
                right: amps.len(),
            });
        }
        Ok(CatWeights {
            n_a: gamma.n_a(),
            amps,
            gram,
        })
    }

    pub fn gram(&self) -> &Gram {
        &self.gram
    }

    pub fn amplitudes(&self) -> &CoherentAmplitudes {
        &self.amps
    }

    /// `w_jk(t) = exp(∫_{t0}^t m_jk ds) / (N_a g_jk)`, the exact solution of
    /// `ẇ_jk = m_jk w_jk` with `w_jk(t0) = 1/(N_a g_jk)`.
    pub fn w(&self, j: usize, k: usize, t0: f64, t: f64) -> Result<C64> {
        self.amps.check_index(j, k)?;
        let g = self.gram.get(j, k);
        if g.norm() <= OVERLAP_FLOOR {
            return Err(Error::OverlapUnderflow {
                j,
                k,
                magnitude: g.norm(),
            });
        }
        let init = ONE / (g * self.n_a);
        if j == k {
            return Ok(init);
        }
        let (a, b) = (&self.amps.profiles[j], &self.amps.profiles[k]);
        let (lo, hi) = union_support(&[a, b]);
        let (from, to) = (t0.max(lo), t.min(hi));
        let exponent = if to > from {
            integrate_piecewise(
                |s| mjk_from(a.eval(s), b.eval(s)),
                from,
                to,
                &union_breaks(&[a, b]),
                DEFAULT_REL_TOL,
            )?
        } else {
            ZERO
        };
        Ok(init * exponent.exp())
    }
}

/// `w_jk(t)` with the integrating factor started at `t = 0`.
pub fn cat_wjk(amps: &CoherentAmplitudes, gamma: &WeightMatrix, j: usize, k: usize, t: f64) -> Result<C64> {
    CatWeights::new(amps.clone(), gamma)?.w(j, k, 0.0, t)
}

/// The input field driving a system.
#[derive(Clone, Debug)]
pub enum FieldSpec {
    Vacuum,
    PhotonCombination {
        gamma: WeightMatrix,
        xi: Wavepacket,
    },
    CoherentCombination {
        gamma: WeightMatrix,
        amps: CoherentAmplitudes,
    },
}

impl FieldSpec {
    pub fn single_photon(xi: Wavepacket) -> Self {
        FieldSpec::PhotonCombination {
            gamma: WeightMatrix::single_photon(),
            xi,
        }
    }

    /// Number of hierarchy blocks per side.
    pub fn blocks(&self) -> usize {
        match self {
            FieldSpec::Vacuum => 1,
            FieldSpec::PhotonCombination { .. } => 2,
            FieldSpec::CoherentCombination { amps, .. } => amps.len(),
        }
    }

    pub fn weights(&self) -> Option<&WeightMatrix> {
        match self {
            FieldSpec::Vacuum => None,
            FieldSpec::PhotonCombination { gamma, .. } | FieldSpec::CoherentCombination { gamma, .. } => Some(gamma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> Wavepacket {
        gaussian_wavepacket(1.46, 3.0).unwrap()
    }

    #[test]
    fn gaussian_peak_norm_and_symmetry() {
        let xi = gauss();
        let peak = (1.46f64 * 1.46 / (2.0 * PI)).powf(0.25);
        assert!((xi.xi(3.0).re - peak).abs() < 1e-15);
        assert!((xi.profile().norm_sqr().unwrap() - 1.0).abs() < 1e-9);
        for d in [0.1, 0.9, 2.5] {
            assert_eq!(xi.xi(3.0 + d), xi.xi(3.0 - d));
        }
        assert!(gaussian_wavepacket(0.0, 1.0).is_err());
        assert!(gaussian_wavepacket(-1.0, 1.0).is_err());
    }

    #[test]
    fn survival_limits() {
        let xi = gauss();
        let early = 3.0 - 5.0 / 1.46 - 3.0;
        assert!((survival_w(&xi, early).unwrap() - 1.0).abs() < 1e-6);
        assert!((survival_w(&xi, 3.0).unwrap() - 0.5).abs() < 1e-6);
        assert!(survival_w(&xi, 3.0 + 5.0 / 1.46 + 3.0).unwrap() < 1e-6);
    }

    #[test]
    fn survival_table_matches_direct() {
        let xi = gauss();
        let times: Vec<f64> = (0..=80).map(|i| i as f64 * 0.1).collect();
        let table = xi.survival_on(&times).unwrap();
        for (t, w) in times.iter().zip(&table) {
            let direct = xi.survival(*t).unwrap();
            assert!((w - direct).abs() <= 1e-9 * direct.max(1e-12), "t={t}: {w} vs {direct}");
        }
        assert!(table.windows(2).all(|p| p[1] <= p[0]));
    }

    #[test]
    fn lambda_examples() {
        let xi = gauss();
        let t_early = -10.0;
        let lam = generator_coupling_lambda(&xi, t_early, 1e-12).unwrap();
        assert!((lam - xi.xi(t_early)).norm() < 1e-12 * xi.xi(t_early).norm().max(1e-300));
        let lam = generator_coupling_lambda(&xi, 3.0, 1e-12).unwrap();
        let expected = xi.xi(3.0) / survival_w(&xi, 3.0).unwrap().sqrt();
        assert!((lam - expected).norm() < 1e-12);
        assert!((lam.re - xi.xi(3.0).re / 0.5f64.sqrt()).abs() < 1e-5);
        let late = 20.0;
        let lam = generator_coupling_lambda(&xi, late, 1e-12).unwrap();
        assert!(lam.is_finite());
        assert!((lam - xi.xi(late) / 1e-6).norm() < 1e-20);
        assert!(generator_coupling_lambda(&xi, 1.0, 0.0).is_err());
    }

    #[test]
    fn photon_weight_table() {
        let xi = gauss();
        assert_eq!(photon_weights(&xi, 1, 1, 3.0).unwrap(), 1.0);
        assert!((photon_weights(&xi, 0, 0, -20.0).unwrap() - 1.0).abs() < 1e-9);
        assert!((photon_weights(&xi, 0, 1, 3.0).unwrap() - 0.5f64.sqrt()).abs() < 1e-6);
        assert_eq!(
            photon_weights(&xi, 0, 1, 3.0).unwrap(),
            photon_weights(&xi, 1, 0, 3.0).unwrap()
        );
        assert!(photon_weights(&xi, 2, 0, 3.0).is_err());
    }

    #[test]
    fn overlaps() {
        let a = Profile::gaussian(1.0, 2.0, C64::new(0.8, 0.3)).unwrap();
        assert!((coherent_overlap(&a, &a).unwrap() - ONE).norm() < 1e-12);

        let zero = Profile::constant(ZERO, 0.0, 1.0).unwrap();
        let norm = a.norm_sqr().unwrap();
        let g = coherent_overlap(&zero, &a).unwrap();
        assert!((g.re - (-0.5 * norm).exp()).abs() < 1e-12 && g.im.abs() < 1e-14);

        let (a1, a2, t) = (C64::new(0.6, -0.2), C64::new(-0.1, 0.9), 2.5);
        let p1 = Profile::constant(a1, 0.0, t).unwrap();
        let p2 = Profile::constant(a2, 0.0, t).unwrap();
        let exact = (-0.5 * t * a1.norm_sqr() - 0.5 * t * a2.norm_sqr() + t * a1.conj() * a2).exp();
        assert!((coherent_overlap(&p1, &p2).unwrap() - exact).norm() < 1e-13);
    }

    #[test]
    fn mjk_examples() {
        let amps = CoherentAmplitudes::new(vec![
            Profile::constant(ONE, 0.0, 1.0).unwrap(),
            Profile::constant(C64::new(0.0, 1.0), 0.0, 1.0).unwrap(),
        ])
        .unwrap();
        assert_eq!(cat_mjk(&amps, 0, 0, 0.5).unwrap(), ZERO);
        assert!((cat_mjk(&amps, 0, 1, 0.5).unwrap() - C64::new(-1.0, 1.0)).norm() < 1e-15);
        assert!(cat_mjk(&amps, 0, 2, 0.5).is_err());
        assert_eq!(mjk_from(C64::new(0.3, 0.4), C64::new(0.3, 0.4)).norm(), 0.0);
    }

    #[test]
    fn rejects_coincident_amplitudes() {
        let p = Profile::gaussian(1.0, 2.0, ONE).unwrap();
        assert!(CoherentAmplitudes::new(vec![p.clone(), p]).is_err());
    }

    fn two_constants() -> (CoherentAmplitudes, C64, C64, f64) {
        let (a1, a2, t) = (C64::new(0.5, 0.1), C64::new(-0.3, 0.4), 3.0);
        let amps = CoherentAmplitudes::new(vec![
            Profile::constant(a1, 0.0, t).unwrap(),
            Profile::constant(a2, 0.0, t).unwrap(),
        ])
        .unwrap();
        (amps, a1, a2, t)
    }

    #[test]
    fn wjk_diagonal_and_trivial() {
        let (amps, ..) = two_constants();
        let gram = amps.gram().unwrap();
        let gamma = WeightMatrix::cat_superposition(&[ONE, C64::new(0.0, 0.5)], &gram).unwrap();
        let n_a = gamma.n_a();
        for t in [0.0, 1.0, 2.9] {
            assert!((cat_wjk(&amps, &gamma, 1, 1, t).unwrap() - 1.0 / n_a).norm() < 1e-14);
        }
        let single = CoherentAmplitudes::new(vec![Profile::constant(C64::new(0.7, 0.0), 0.0, 2.0).unwrap()]).unwrap();
        let g1 = WeightMatrix::coherent(vec![vec![ONE]], &single.gram().unwrap()).unwrap();
        assert!((cat_wjk(&single, &g1, 0, 0, 1.5).unwrap() - ONE).norm() < 1e-15);
    }

    #[test]
    fn wjk_integrating_factor_vs_rk4() {
        let (amps, a1, a2, _) = two_constants();
        let gram = amps.gram().unwrap();
        let gamma = WeightMatrix::cat_superposition(&[ONE, ONE], &gram).unwrap();
        let cw = CatWeights::new(amps.clone(), &gamma).unwrap();
        // Independent route: RK4 on ẇ = m w.
        let m = mjk_from(a1, a2);
        let mut w = ONE / (gram.get(0, 1) * gamma.n_a());
        let h = 1e-3;
        for _ in 0..2000 {
            let k1 = m * w;
            let k2 = m * (w + k1 * (h / 2.0));
            let k3 = m * (w + k2 * (h / 2.0));
            let k4 = m * (w + k3 * h);
            w += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        let got = cw.w(0, 1, 0.0, 2.0).unwrap();
        assert!((got - w).norm() < 1e-8, "{got} vs {w}");
    }

    #[test]
    fn wjk_overlap_underflow() {
        let amps = CoherentAmplitudes::new(vec![
            Profile::constant(C64::new(8.0, 0.0), 0.0, 2.0).unwrap(),
            Profile::constant(C64::new(-8.0, 0.0), 0.0, 2.0).unwrap(),
        ])
        .unwrap();
        let gram = amps.gram().unwrap();
        let gamma = WeightMatrix::cat_mixture(&[0.5, 0.5], &gram).unwrap();
        match cat_wjk(&amps, &gamma, 0, 1, 1.0) {
            Err(Error::OverlapUnderflow { j: 0, k: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn weight_matrix_validation() {
        assert!(WeightMatrix::photon([[ONE, ZERO], [ZERO, ONE]]).is_err());
        assert!(WeightMatrix::photon([[C64::new(0.5, 0.0), ONE], [ONE, C64::new(0.5, 0.0)]]).is_err());
        let sup = WeightMatrix::photon_superposition(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        assert!(is_psd(&sup.rows(), 1e-9));
        assert!((sup.get(0, 0) + sup.get(1, 1) - ONE).norm() < 1e-15);
        assert!((sup.get(1, 0) - C64::new(0.0, 0.8) * C64::new(0.6, 0.0)).norm() < 1e-15);
        let (amps, ..) = two_constants();
        let gram = amps.gram().unwrap();
        assert!(WeightMatrix::coherent(vec![vec![ONE, ZERO], vec![ZERO, ONE]], &gram).is_err());
    }

    #[test]
    fn gram_is_psd() {
        let amps = CoherentAmplitudes::new(vec![
            Profile::gaussian(1.2, 3.0, C64::new(1.0, 0.0)).unwrap(),
            Profile::gaussian(1.2, 3.0, C64::new(-1.0, 0.0)).unwrap(),
            Profile::constant(C64::new(0.2, 0.7), 1.0, 4.0).unwrap(),
        ])
        .unwrap();
        let gram = amps.gram().unwrap();
        assert!(gram.is_positive_semidefinite(1e-9));
    }

    #[test]
    fn table_profile_interpolates() {
        let p = Profile::table(vec![0.0, 1.0, 2.0], vec![ZERO, C64::new(2.0, 0.0), ZERO]).unwrap();
        assert!((p.eval(0.5).re - 1.0).abs() < 1e-15);
        assert_eq!(p.eval(2.5), ZERO);
        assert!((p.norm_sqr().unwrap() - 8.0 / 3.0).abs() < 1e-12);
        assert!(Profile::table(vec![0.0, 0.0], vec![ZERO, ZERO]).is_err());
    }
}
