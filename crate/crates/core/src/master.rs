//! Unconditional evolution: the vacuum master equation, the photon and
//! coherent-combination hierarchies, their weighted combination, and the
//! extended-system construction used to cross-check them.
//!
//! Photon blocks follow the dagger convention `ϖ^{jk}(X) = tr{ϱ^{jk}† X}`
//! and combine as `Σ γ_kj ϱ^{jk}`. Coherent blocks satisfy
//! `ϖ^{jk}(X) = tr{ϱ^{jk} X}` and combine as `Σ γ_jk ϱ^{jk}`.

use crate::error::{Error, Result};
use crate::field::{
    lambda_from, mjk_from, CatWeights, CoherentAmplitudes, FieldKind, FieldSpec, Gram, Wavepacket, WeightMatrix,
    DEFAULT_SURVIVAL_EPS,
};
use crate::grid::TimeGrid;
use crate::operator::{DensityLike, Operator, C64, I, ONE, ZERO};
use crate::slh::{SlhTriple, Slot};

/// Tolerance for the hermiticity pairing `ϱ^{jk}† = ϱ^{kj}`.
pub const PAIRING_TOL: f64 = 1e-8;
/// Oracle samples are compared only where `|w_jk| ≥` this.
pub const ORACLE_W_FLOOR: f64 = 1e-6;
/// Default RK4 step for deterministic propagation.
pub const DEFAULT_DT: f64 = 1e-3;

/// An `(S, L, H)` triple with the products needed on every right-hand-side
/// evaluation computed once.
#[derive(Clone, Debug)]
pub struct Generator {
    s: Operator,
    s_dag: Operator,
    l: Operator,
    l_dag: Operator,
    l_dag_l: Operator,
    // K = H - (i/2) L†L, so that L*ρ = -iKρ + iρK† + LρL†.
    k: Operator,
    k_dag: Operator,
}

impl Generator {
    pub fn new(g: &SlhTriple) -> Self {
        let l_dag = g.l().dagger();
        let l_dag_l = &l_dag * g.l();
        let mut k = g.h().clone();
        k.add_scaled(&l_dag_l, C64::new(0.0, -0.5));
        Generator {
            s: g.s().clone(),
            s_dag: g.s().dagger(),
            l: g.l().clone(),
            l_dag,
            l_dag_l,
            k_dag: k.dagger(),
            k,
        }
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn s(&self) -> &Operator {
        &self.s
    }

    pub fn s_dag(&self) -> &Operator {
        &self.s_dag
    }

    pub fn l(&self) -> &Operator {
        &self.l
    }

    pub fn l_dag(&self) -> &Operator {
        &self.l_dag
    }

    pub fn l_dag_l(&self) -> &Operator {
        &self.l_dag_l
    }

    /// `L*ρ = -i[H, ρ] + LρL† - ½{L†L, ρ}` for any (not necessarily
    /// Hermitian) `ρ`.
    pub fn liouvillian(&self, rho: &Operator) -> Operator {
        let mut out = &(&self.l * rho) * &self.l_dag;
        out.add_scaled(&(&self.k * rho), -I);
        out.add_scaled(&(rho * &self.k_dag), I);
        out
    }

    /// `[Sρ, L†]`
    pub fn emission_left(&self, rho: &Operator) -> Operator {
        let s_rho = &self.s * rho;
        &(&s_rho * &self.l_dag) - &(&self.l_dag * &s_rho)
    }

    /// `[L, ρS†]`
    pub fn emission_right(&self, rho: &Operator) -> Operator {
        let rho_s = rho * &self.s_dag;
        &(&self.l * &rho_s) - &(&rho_s * &self.l)
    }

    /// `SρS† - ρ`
    pub fn scattering(&self, rho: &Operator) -> Operator {
        &(&(&self.s * rho) * &self.s_dag) - rho
    }
}

/// `L*_G ρ = -i[H, ρ] + D*_L ρ`
pub fn vacuum_me_rhs(g: &SlhTriple, rho: &DensityLike) -> Result<DensityLike> {
    g.s().check_same_dim(rho.matrix(), "vacuum master equation")?;
    Ok(DensityLike::cross_term(Generator::new(g).liouvillian(rho.matrix())))
}

/// The `n × n` family of blocks `ϱ^{jk}` at one time.
#[derive(Clone, Debug, PartialEq)]
pub struct HierarchyState {
    n: usize,
    blocks: Vec<Operator>,
    t: f64,
}

impl HierarchyState {
    /// Blocks in row-major order: `blocks[j*n + k] = ϱ^{jk}`.
    pub fn new(n: usize, blocks: Vec<Operator>, t: f64) -> Result<Self> {
        if n == 0 || blocks.len() != n * n {
            return Err(Error::BlockCount {
                expected: n,
                found: (blocks.len() as f64).sqrt() as usize,
            });
        }
        for b in &blocks[1..] {
            blocks[0].check_same_dim(b, "hierarchy blocks")?;
        }
        Ok(HierarchyState { n, blocks, t })
    }

    /// Single-block state holding `ρ`.
    pub fn single(rho: Operator, t: f64) -> Self {
        HierarchyState {
            n: 1,
            blocks: vec![rho],
            t,
        }
    }

    /// Photon initial condition: `ϱ¹¹ = ϱ⁰⁰ = ρ₀`, off-diagonal blocks zero.
    pub fn photon_initial(rho0: &Operator, t: f64) -> Self {
        let z = Operator::zeros(rho0.dim());
        HierarchyState {
            n: 2,
            blocks: vec![rho0.clone(), z.clone(), z, rho0.clone()],
            t,
        }
    }

    /// Coherent-combination initial condition `ϱ^{jk} = g_jk ρ₀`.
    pub fn cat_initial(rho0: &Operator, gram: &Gram, t: f64) -> Self {
        let n = gram.len();
        let blocks = (0..n * n).map(|i| rho0.scale(gram.get(i / n, i % n))).collect();
        HierarchyState { n, blocks, t }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn set_t(&mut self, t: f64) {
        self.t = t;
    }

    pub fn dim(&self) -> usize {
        self.blocks[0].dim()
    }

    pub fn block(&self, j: usize, k: usize) -> &Operator {
        &self.blocks[j * self.n + k]
    }

    pub fn block_mut(&mut self, j: usize, k: usize) -> &mut Operator {
        &mut self.blocks[j * self.n + k]
    }

    pub fn blocks(&self) -> &[Operator] {
        &self.blocks
    }

    /// Block `ϱ^{jk}` tagged as a density (diagonal) or cross term.
    pub fn density_like(&self, j: usize, k: usize) -> DensityLike {
        let m = self.block(j, k).clone();
        if j == k {
            DensityLike::density(m)
        } else {
            DensityLike::cross_term(m)
        }
    }

    /// `max_jk ‖ϱ^{jk}† - ϱ^{kj}‖_max`
    pub fn pairing_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in 0..self.n {
            for k in j..self.n {
                worst = worst.max(self.block(j, k).dagger().distance(self.block(k, j)));
            }
        }
        worst
    }

    /// `tr ϱ^{jk}` in row-major order.
    pub fn traces(&self) -> Vec<C64> {
        self.blocks.iter().map(Operator::trace).collect()
    }

    pub(crate) fn same_shape(&self, other: &HierarchyState) -> Result<()> {
        if self.n != other.n {
            return Err(Error::BlockCount {
                expected: self.n,
                found: other.n,
            });
        }
        self.blocks[0].check_same_dim(&other.blocks[0], "hierarchy states")
    }

    /// `self += c · other` blockwise.
    pub fn axpy(&mut self, c: f64, other: &HierarchyState) {
        for (a, b) in self.blocks.iter_mut().zip(&other.blocks) {
            a.add_scaled_real(b, c);
        }
    }

    /// Largest entry-wise distance between corresponding blocks.
    pub fn distance(&self, other: &HierarchyState) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.distance(b))
            .fold(0.0, f64::max))
    }
}

fn expect_blocks(state: &HierarchyState, n: usize) -> Result<()> {
    if state.n != n {
        return Err(Error::BlockCount {
            expected: n,
            found: state.n,
        });
    }
    Ok(())
}

pub(crate) fn photon_rhs(gen: &Generator, xi: C64, state: &HierarchyState) -> HierarchyState {
    let (r00, r01, r10, r11) = (
        state.block(0, 0),
        state.block(0, 1),
        state.block(1, 0),
        state.block(1, 1),
    );
    let d00 = gen.liouvillian(r00);

    let mut d10 = gen.liouvillian(r10);
    let mut d01 = gen.liouvillian(r01);
    let mut d11 = gen.liouvillian(r11);
    if xi != ZERO {
        d10.add_scaled(&gen.emission_left(r00), xi);
        d01.add_scaled(&gen.emission_right(r00), xi.conj());
        d11.add_scaled(&gen.emission_left(r01), xi);
        d11.add_scaled(&gen.emission_right(r10), xi.conj());
        d11.add_scaled_real(&gen.scattering(r00), xi.norm_sqr());
    }
    HierarchyState {
        n: 2,
        blocks: vec![d00, d01, d10, d11],
        t: state.t,
    }
}

/// Right-hand side of the photon/vacuum hierarchy at a time where the
/// wavepacket takes the value `xi_t`.
pub fn photon_hierarchy_rhs(g: &SlhTriple, xi_t: C64, state: &HierarchyState) -> Result<HierarchyState> {
    expect_blocks(state, 2)?;
    g.s().check_same_dim(state.block(0, 0), "photon hierarchy")?;
    Ok(photon_rhs(&Generator::new(g), xi_t, state))
}

pub(crate) fn cat_block_rhs(gen: &Generator, aj: C64, ak: C64, rho: &Operator) -> Operator {
    let mut d = gen.liouvillian(rho);
    if ak != ZERO {
        d.add_scaled(&gen.emission_left(rho), ak);
    }
    if aj != ZERO {
        d.add_scaled(&gen.emission_right(rho), aj.conj());
    }
    let both = aj.conj() * ak;
    if both != ZERO {
        d.add_scaled(&gen.scattering(rho), both);
    }
    d
}

pub(crate) fn cat_rhs(gen: &Generator, alphas: &[C64], state: &HierarchyState) -> HierarchyState {
    let n = state.n;
    let blocks = (0..n * n)
        .map(|i| {
            let (j, k) = (i / n, i % n);
            cat_block_rhs(gen, alphas[j], alphas[k], &state.blocks[i])
        })
        .collect();
    HierarchyState { n, blocks, t: state.t }
}

/// Right-hand side of the coherent-combination hierarchy at time `t`. The
/// blocks are uncoupled.
pub fn cat_hierarchy_rhs(
    g: &SlhTriple,
    amps: &CoherentAmplitudes,
    t: f64,
    state: &HierarchyState,
) -> Result<HierarchyState> {
    expect_blocks(state, amps.len())?;
    g.s().check_same_dim(state.block(0, 0), "coherent hierarchy")?;
    Ok(cat_rhs(&Generator::new(g), &amps.at(t), state))
}

fn weighted_sum(gamma: &WeightMatrix, state: &HierarchyState) -> Result<Operator> {
    if gamma.len() != state.n {
        return Err(Error::BlockCount {
            expected: gamma.len(),
            found: state.n,
        });
    }
    let mut out = Operator::zeros(state.dim());
    for j in 0..state.n {
        for k in 0..state.n {
            let w = match gamma.kind() {
                FieldKind::Photon => gamma.get(k, j),
                FieldKind::Coherent => gamma.get(j, k),
            };
            if w != ZERO {
                out.add_scaled(state.block(j, k), w);
            }
        }
    }
    Ok(out)
}

/// Physical density `Σ γ_kj ϱ^{jk}` (photon) or `Σ γ_jk ϱ^{jk}` (coherent).
pub fn combine_unconditional(gamma: &WeightMatrix, state: &HierarchyState) -> Result<DensityLike> {
    weighted_sum(gamma, state).map(DensityLike::density)
}

/// Normalized conditional density `Σ γ ρ^{jk} / Σ γ tr ρ^{jk}` with the same
/// index order as [`combine_unconditional`].
pub fn conditional_combine(gamma: &WeightMatrix, state: &HierarchyState) -> Result<DensityLike> {
    let sum = weighted_sum(gamma, state)?;
    let norm = sum.trace();
    if norm.norm() < 1e-12 {
        return Err(Error::NormalizationCollapse(norm.norm()));
    }
    Ok(DensityLike::density(sum.scale(ONE / norm)))
}

/// One classic fourth-order Runge–Kutta step of `ẋ = f(t, x)`.
pub fn rk4_step<F>(rhs: F, state: &HierarchyState, dt: f64) -> Result<HierarchyState>
where
    F: Fn(f64, &HierarchyState) -> Result<HierarchyState>,
{
    let t = state.t;
    let k1 = rhs(t, state)?;
    k1.same_shape(state)?;
    let mut x = state.clone();
    x.axpy(0.5 * dt, &k1);
    let k2 = rhs(t + 0.5 * dt, &x)?;
    let mut x = state.clone();
    x.axpy(0.5 * dt, &k2);
    let k3 = rhs(t + 0.5 * dt, &x)?;
    let mut x = state.clone();
    x.axpy(dt, &k3);
    let k4 = rhs(t + dt, &x)?;
    let mut next = state.clone();
    next.axpy(dt / 6.0, &k1);
    next.axpy(dt / 3.0, &k2);
    next.axpy(dt / 3.0, &k3);
    next.axpy(dt / 6.0, &k4);
    next.t = t + dt;
    Ok(next)
}

/// Integrates a right-hand side over `grid`, calling `observer` on the
/// initial state and after every step. Times are taken from the grid so
/// they do not drift.
pub fn propagate_with<F, O>(rhs: F, initial: HierarchyState, grid: &TimeGrid, mut observer: O) -> Result<HierarchyState>
where
    F: Fn(f64, &HierarchyState) -> Result<HierarchyState>,
    O: FnMut(&HierarchyState) -> Result<()>,
{
    let mut state = initial;
    state.t = grid.t0();
    observer(&state)?;
    for i in 0..grid.steps() {
        state = rk4_step(&rhs, &state, grid.dt()).map_err(|e| Error::Step {
            step: i,
            t: grid.time(i),
            source: Box::new(e),
        })?;
        state.t = grid.time(i + 1);
        observer(&state)?;
    }
    Ok(state)
}

/// Largest deviations of a state from the structural invariants.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct InvariantDefects {
    /// `max_jk |tr ϱ^{jk} - expected_jk|`
    pub trace: f64,
    /// `max_jk ‖ϱ^{jk}† - ϱ^{kj}‖`
    pub pairing: f64,
}

impl InvariantDefects {
    pub fn max(self, other: InvariantDefects) -> InvariantDefects {
        InvariantDefects {
            trace: self.trace.max(other.trace),
            pairing: self.pairing.max(other.pairing),
        }
    }
}

/// A system driven by a given field, evolved unconditionally.
#[derive(Clone, Debug)]
pub struct MasterModel {
    g: SlhTriple,
    gen: Generator,
    field: FieldSpec,
    gram: Option<Gram>,
}

impl MasterModel {
    pub fn new(g: SlhTriple, field: FieldSpec) -> Result<Self> {
        let gram = match &field {
            FieldSpec::CoherentCombination { amps, gamma } => {
                if gamma.len() != amps.len() {
                    return Err(Error::DimensionMismatch {
                        context: "weight matrix vs amplitudes",
                        left: gamma.len(),
                        right: amps.len(),
                    });
                }
                Some(amps.gram()?)
            }
            _ => None,
        };
        Ok(MasterModel {
            gen: Generator::new(&g),
            g,
            field,
            gram,
        })
    }

    pub fn system(&self) -> &SlhTriple {
        &self.g
    }

    pub fn generator(&self) -> &Generator {
        &self.gen
    }

    pub fn field(&self) -> &FieldSpec {
        &self.field
    }

    pub fn gram(&self) -> Option<&Gram> {
        self.gram.as_ref()
    }

    pub fn initial_state(&self, rho0: &Operator, t0: f64) -> Result<HierarchyState> {
        self.g.s().check_same_dim(rho0, "initial state")?;
        Ok(match (&self.field, &self.gram) {
            (FieldSpec::Vacuum, _) => HierarchyState::single(rho0.clone(), t0),
            (FieldSpec::PhotonCombination { .. }, _) => HierarchyState::photon_initial(rho0, t0),
            (FieldSpec::CoherentCombination { .. }, Some(gram)) => HierarchyState::cat_initial(rho0, gram, t0),
            (FieldSpec::CoherentCombination { .. }, None) => unreachable!("gram computed in new"),
        })
    }

    pub fn rhs(&self, t: f64, state: &HierarchyState) -> Result<HierarchyState> {
        expect_blocks(state, self.field.blocks())?;
        Ok(match &self.field {
            FieldSpec::Vacuum => HierarchyState::single(self.gen.liouvillian(&state.blocks[0]), state.t),
            FieldSpec::PhotonCombination { xi, .. } => photon_rhs(&self.gen, xi.xi(t), state),
            FieldSpec::CoherentCombination { amps, .. } => cat_rhs(&self.gen, &amps.at(t), state),
        })
    }

    /// The physical (combined) density operator.
    pub fn combine(&self, state: &HierarchyState) -> Result<DensityLike> {
        match self.field.weights() {
            None => Ok(DensityLike::density(state.blocks[0].clone())),
            Some(gamma) => combine_unconditional(gamma, state),
        }
    }

    /// Traces every block keeps for all time: `1` (vacuum), `δ_jk` (photon),
    /// `g_jk` (coherent).
    pub fn expected_traces(&self) -> Vec<C64> {
        match (&self.field, &self.gram) {
            (FieldSpec::Vacuum, _) => vec![ONE],
            (FieldSpec::PhotonCombination { .. }, _) => vec![ONE, ZERO, ZERO, ONE],
            (_, Some(gram)) => (0..gram.len() * gram.len())
                .map(|i| gram.get(i / gram.len(), i % gram.len()))
                .collect(),
            (_, None) => unreachable!("gram computed in new"),
        }
    }

    pub fn invariant_defects(&self, state: &HierarchyState) -> InvariantDefects {
        let trace = state
            .traces()
            .iter()
            .zip(self.expected_traces())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        InvariantDefects {
            trace,
            pairing: state.pairing_defect(),
        }
    }

    /// RK4 propagation over `grid`; `observer` sees the initial state and
    /// every subsequent step.
    pub fn propagate<O>(&self, initial: HierarchyState, grid: &TimeGrid, observer: O) -> Result<HierarchyState>
    where
        O: FnMut(&HierarchyState) -> Result<()>,
    {
        propagate_with(|t, s| self.rhs(t, s), initial, grid, observer)
    }
}

/// Blocks reconstructed from the extended system at one grid time; `None`
/// marks blocks whose weight is below [`ORACLE_W_FLOOR`].
#[derive(Clone, Debug)]
pub struct OracleSample {
    pub t: f64,
    pub blocks: Vec<Option<Operator>>,
}

/// Blocks reconstructed from the extended system over a grid.
#[derive(Clone, Debug)]
pub struct OracleTrajectory {
    pub n: usize,
    pub samples: Vec<OracleSample>,
}

/// Result of comparing hierarchy blocks with the extended-system oracle.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub n: usize,
    /// Sup-norm deviation per block over its valid samples.
    pub max_deviation: Vec<f64>,
    pub valid_samples: Vec<usize>,
    /// First sample time at which each block became invalid, if any.
    pub invalid_from: Vec<Option<f64>>,
}

impl OracleReport {
    pub fn overall(&self) -> f64 {
        self.max_deviation.iter().copied().fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.overall() <= tol && self.valid_samples.iter().any(|&c| c > 0)
    }
}

impl OracleTrajectory {
    /// Compares against hierarchy states sampled at the same grid times.
    pub fn compare(&self, states: &[HierarchyState]) -> Result<OracleReport> {
        if states.len() != self.samples.len() {
            return Err(Error::DimensionMismatch {
                context: "oracle vs hierarchy samples",
                left: self.samples.len(),
                right: states.len(),
            });
        }
        let nb = self.n * self.n;
        let mut report = OracleReport {
            n: self.n,
            max_deviation: vec![0.0; nb],
            valid_samples: vec![0; nb],
            invalid_from: vec![None; nb],
        };
        for (sample, state) in self.samples.iter().zip(states) {
            expect_blocks(state, self.n)?;
            for (b, oracle) in sample.blocks.iter().enumerate() {
                match oracle {
                    Some(m) => {
                        report.max_deviation[b] = report.max_deviation[b].max(m.distance(&state.blocks[b]));
                        report.valid_samples[b] += 1;
                    }
                    None => {
                        report.invalid_from[b].get_or_insert(sample.t);
                    }
                }
            }
        }
        Ok(report)
    }
}

/// System block `⟨a|ρ|b⟩` of an ancilla ⊗ system operator.
fn ancilla_block(joint: &Operator, a: usize, b: usize, d: usize) -> Operator {
    Operator::from_fn(d, |i, j| joint[(a * d + i, b * d + j)])
}

/// Evolves `G ◁ M` under vacuum input, where the ancilla `M` regenerates the
/// non-classical field, and reconstructs the hierarchy blocks from
/// ancilla-resolved marginals.
pub fn oracle_extended_me(
    g: &SlhTriple,
    field: &FieldSpec,
    rho0: &Operator,
    grid: &TimeGrid,
) -> Result<OracleTrajectory> {
    g.s().check_same_dim(rho0, "oracle initial state")?;
    match field {
        FieldSpec::Vacuum => Err(Error::invalid("oracle field", "needs a photon or coherent combination")),
        FieldSpec::PhotonCombination { xi, .. } => photon_oracle(g, xi, rho0, grid),
        FieldSpec::CoherentCombination { gamma, amps } => cat_oracle(g, gamma, amps, rho0, grid),
    }
}

/// Joint generator for `(I_a ⊗ G) ◁ (L_M ⊗ I)` with `S_M = I`, `H_M = 0`.
fn joint_generator(g: &SlhTriple, l_m: &Operator) -> Result<Generator> {
    let na = l_m.dim();
    let d = g.dim();
    let m = SlhTriple::new(Operator::identity(na), l_m.clone(), Operator::zeros(na))?;
    let gt = g.embed(Slot::Right, na).series(&m.embed(Slot::Left, d))?;
    Ok(Generator::new(&gt))
}

fn photon_oracle(g: &SlhTriple, xi: &Wavepacket, rho0: &Operator, grid: &TimeGrid) -> Result<OracleTrajectory> {
    let d = g.dim();
    let sigma_minus = Operator::transition(2, 0, 1);
    let w0 = xi.survival(grid.t0())?;
    // Ancilla |↑⟩ = index 1 holds the undelivered part of the photon.
    let ancilla = Operator::from_fn(2, |i, j| match (i, j) {
        (1, 1) => C64::new(w0, 0.0),
        (0, 0) => C64::new(1.0 - w0, 0.0),
        _ => ZERO,
    });
    let joint0 = ancilla.kron(rho0);
    let rhs = |t: f64, s: &HierarchyState| -> Result<HierarchyState> {
        let w = xi.survival(t)?;
        let lam = lambda_from(xi.xi(t), w, DEFAULT_SURVIVAL_EPS);
        let gen = joint_generator(g, &sigma_minus.scale(lam))?;
        Ok(HierarchyState::single(gen.liouvillian(&s.blocks[0]), t))
    };
    let mut samples = Vec::with_capacity(grid.len());
    propagate_with(rhs, HierarchyState::single(joint0, grid.t0()), grid, |s| {
        let t = s.t;
        let w = xi.survival(t)?;
        let joint = &s.blocks[0];
        let up = ancilla_block(joint, 1, 1, d);
        let down = ancilla_block(joint, 0, 0, d);
        let valid = w >= ORACLE_W_FLOOR;
        let r11 = &up + &down;
        let (r00, r01, r10) = if valid {
            (
                Some(up.scale_real(1.0 / w)),
                Some(ancilla_block(joint, 1, 0, d).scale_real(1.0 / w.sqrt())),
                Some(ancilla_block(joint, 0, 1, d).scale_real(1.0 / w.sqrt())),
            )
        } else {
            (None, None, None)
        };
        samples.push(OracleSample {
            t,
            blocks: vec![r00, r01, r10, Some(r11)],
        });
        Ok(())
    })?;
    Ok(OracleTrajectory { n: 2, samples })
}

/// Smallest `|γ_jk|` for which a block can be recovered.
const GAMMA_FLOOR: f64 = 1e-12;

fn cat_oracle(
    g: &SlhTriple,
    gamma: &WeightMatrix,
    amps: &CoherentAmplitudes,
    rho0: &Operator,
    grid: &TimeGrid,
) -> Result<OracleTrajectory> {
    let n = amps.len();
    let d = g.dim();
    let weights = CatWeights::new(amps.clone(), gamma)?;
    let n_a = gamma.n_a();
    // ρ_a = (1/N_a) Σ γ_kj |j⟩⟨k|
    let ancilla = Operator::from_fn(n, |j, k| gamma.get(k, j) / n_a);
    let joint0 = ancilla.kron(rho0);
    let rhs = |t: f64, s: &HierarchyState| -> Result<HierarchyState> {
        let alphas = amps.at(t);
        let l_m = Operator::from_fn(n, |i, j| if i == j { alphas[i] } else { ZERO });
        let gen = joint_generator(g, &l_m)?;
        Ok(HierarchyState::single(gen.liouvillian(&s.blocks[0]), t))
    };
    // Integrating factors on the grid, accumulated step by step.
    let mut w: Vec<C64> = (0..n * n)
        .map(|i| weights.w(i / n, i % n, grid.t0(), grid.t0()).unwrap_or(ZERO))
        .collect();
    let valid_overlap: Vec<bool> = (0..n * n)
        .map(|i| weights.gram().get(i / n, i % n).norm() > crate::field::OVERLAP_FLOOR)
        .collect();
    let mut prev_t = grid.t0();
    let mut samples = Vec::with_capacity(grid.len());
    propagate_with(rhs, HierarchyState::single(joint0, grid.t0()), grid, |s| {
        let t = s.t;
        if t > prev_t {
            for (i, wi) in w.iter_mut().enumerate() {
                if valid_overlap[i] {
                    let (j, k) = (i / n, i % n);
                    *wi *= step_factor(amps, j, k, prev_t, t)?;
                }
            }
            prev_t = t;
        }
        let joint = &s.blocks[0];
        let blocks = (0..n * n)
            .map(|i| {
                let (j, k) = (i / n, i % n);
                let scale = gamma.get(j, k) * w[i];
                let ok = valid_overlap[i] && gamma.get(j, k).norm() >= GAMMA_FLOOR && w[i].norm() >= ORACLE_W_FLOOR;
                ok.then(|| ancilla_block(joint, k, j, d).scale(ONE / scale))
            })
            .collect();
        samples.push(OracleSample { t, blocks });
        Ok(())
    })?;
    Ok(OracleTrajectory { n, samples })
}

/// `exp(∫_a^b m_jk)`
fn step_factor(amps: &CoherentAmplitudes, j: usize, k: usize, a: f64, b: f64) -> Result<C64> {
    if j == k {
        return Ok(ONE);
    }
    let (pj, pk) = (&amps.profiles()[j], &amps.profiles()[k]);
    let exponent = crate::quadrature::integrate_piecewise(
        |s| mjk_from(pj.eval(s), pk.eval(s)),
        a,
        b,
        &amps.breakpoints(),
        crate::quadrature::DEFAULT_REL_TOL,
    )?;
    Ok(exponent.exp())
}

/// Runs the hierarchy and the oracle on the same grid and compares them.
pub fn oracle_check(model: &MasterModel, rho0: &Operator, grid: &TimeGrid) -> Result<OracleReport> {
    let oracle = oracle_extended_me(model.system(), model.field(), rho0, grid)?;
    let mut states = Vec::with_capacity(grid.len());
    model.propagate(model.initial_state(rho0, grid.t0())?, grid, |s| {
        states.push(s.clone());
        Ok(())
    })?;
    oracle.compare(&states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_wavepacket, Profile};
    use crate::operator::{liouvillian, preset_two_level};

    fn atom(kappa: f64) -> SlhTriple {
        let tl = preset_two_level();
        SlhTriple::new(
            Operator::identity(2),
            tl.sigma_minus.scale_real(kappa.sqrt()),
            Operator::zeros(2),
        )
        .unwrap()
    }

    fn generic_triple() -> SlhTriple {
        let tl = preset_two_level();
        let s = Operator::from_rows(&[
            vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)],
            vec![C64::new(0.0, 0.8), C64::new(0.6, 0.0)],
        ])
        .unwrap();
        let l = &tl.sigma_minus.scale(C64::new(0.9, 0.1)) + &tl.excited.scale_real(0.2);
        let h = &tl.excited.scale_real(0.3) + &(&tl.sigma_minus + &tl.sigma_plus).scale_real(0.15);
        SlhTriple::new(s, l, h).unwrap()
    }

    #[test]
    fn vacuum_rhs_examples() {
        let tl = preset_two_level();
        let g = atom(1.0);
        let out = vacuum_me_rhs(&g, &DensityLike::density(tl.excited.clone())).unwrap();
        assert!(out.matrix().distance(&(&tl.ground - &tl.excited)) < 1e-15);
        let out = vacuum_me_rhs(&g, &DensityLike::density(tl.ground.clone())).unwrap();
        assert_eq!(out.matrix().max_abs(), 0.0);
        let rho = Operator::from_rows(&[
            vec![C64::new(0.3, 0.0), C64::new(0.1, 0.2)],
            vec![C64::new(0.1, -0.2), C64::new(0.7, 0.0)],
        ])
        .unwrap();
        let gen = generic_triple();
        let out = vacuum_me_rhs(&gen, &DensityLike::density(rho.clone())).unwrap();
        assert!(out.matrix().trace().norm() < 1e-15);
        assert!(out.matrix().distance(&liouvillian(&gen, &rho).unwrap()) < 1e-15);
        assert!(vacuum_me_rhs(&gen, &DensityLike::density(Operator::identity(3))).is_err());
    }

    fn random_state() -> HierarchyState {
        let m = |a: f64| Operator::from_fn(2, |i, j| C64::new(a + i as f64 * 0.3, j as f64 * 0.2 - a));
        HierarchyState::new(2, vec![m(0.1), m(0.2), m(-0.3), m(0.4)], 0.0).unwrap()
    }

    #[test]
    fn photon_rhs_vacuum_decoupling_and_traces() {
        let g = generic_triple();
        let st = random_state();
        let d = photon_hierarchy_rhs(&g, ZERO, &st).unwrap();
        let gen = Generator::new(&g);
        for b in 0..4 {
            assert!(d.blocks()[b].distance(&gen.liouvillian(&st.blocks()[b])) < 1e-15);
        }
        let d = photon_hierarchy_rhs(&g, C64::new(0.7, -0.4), &st).unwrap();
        for tr in d.traces() {
            assert!(tr.norm() < 1e-14);
        }
        let bad = HierarchyState::single(Operator::identity(2), 0.0);
        assert!(matches!(
            photon_hierarchy_rhs(&g, ONE, &bad),
            Err(Error::BlockCount { .. })
        ));
    }

    #[test]
    fn liouvillian_matches_reference_for_cross_terms() {
        let g = generic_triple();
        let x = Operator::from_fn(2, |i, j| C64::new(i as f64 - 0.4, 0.3 * j as f64 + 0.1));
        let gen = Generator::new(&g);
        assert!(gen.liouvillian(&x).distance(&liouvillian(&g, &x).unwrap()) < 1e-14);
    }

    #[test]
    fn cat_single_weyl_drive_equals_vacuum_me() {
        let tl = preset_two_level();
        let l = tl.sigma_minus.scale_real(0.8);
        let h = tl.excited.scale_real(0.25);
        let g = SlhTriple::new(Operator::identity(2), l.clone(), h.clone()).unwrap();
        let a = C64::new(0.4, -0.3);
        let amps = CoherentAmplitudes::new(vec![Profile::constant(a, 0.0, 10.0).unwrap()]).unwrap();
        // Series product with the Weyl drive (I, a·1, 0).
        let shifted_l = &l + &Operator::identity(2).scale(a);
        let shifted_h = &h + &l.dagger().scale(a).imag_part();
        let driven = SlhTriple::new(Operator::identity(2), shifted_l, shifted_h).unwrap();
        let rho = Operator::from_rows(&[
            vec![C64::new(0.3, 0.0), C64::new(0.1, 0.2)],
            vec![C64::new(0.1, -0.2), C64::new(0.7, 0.0)],
        ])
        .unwrap();
        let st = HierarchyState::single(rho.clone(), 0.0);
        let d = cat_hierarchy_rhs(&g, &amps, 1.0, &st).unwrap();
        let expected = liouvillian(&driven, &rho).unwrap();
        assert!(d.blocks()[0].distance(&expected) < 1e-14);
    }

    #[test]
    fn combine_selects_blocks() {
        let st = random_state();
        let vac = combine_unconditional(&WeightMatrix::vacuum(), &st).unwrap();
        assert_eq!(vac.matrix(), st.block(0, 0));
        let one = combine_unconditional(&WeightMatrix::single_photon(), &st).unwrap();
        assert_eq!(one.matrix(), st.block(1, 1));
        let sup = WeightMatrix::photon_superposition(C64::new(0.6, 0.0), C64::new(0.0, 0.8)).unwrap();
        let c = combine_unconditional(&sup, &st).unwrap();
        let mut expected = Operator::zeros(2);
        for j in 0..2 {
            for k in 0..2 {
                expected.add_scaled(st.block(j, k), sup.get(k, j));
            }
        }
        assert!(c.matrix().distance(&expected) < 1e-15);
    }

    #[test]
    fn benchmark_peak_excitation() {
        let tl = preset_two_level();
        let xi = gaussian_wavepacket(1.46, 3.0).unwrap();
        let model = MasterModel::new(atom(1.0), FieldSpec::single_photon(xi)).unwrap();
        let grid = TimeGrid::new(0.0, 8.0, 1e-3).unwrap();
        let mut peak: f64 = 0.0;
        let mut defects = InvariantDefects::default();
        model
            .propagate(model.initial_state(&tl.ground, 0.0).unwrap(), &grid, |s| {
                peak = peak.max(s.block(1, 1).trace_product(&tl.excited).re);
                defects = defects.max(model.invariant_defects(s));
                Ok(())
            })
            .unwrap();
        assert!((0.78..=0.82).contains(&peak), "peak {peak}");
        assert!(defects.trace < 1e-7 && defects.pairing < 1e-8, "{defects:?}");
    }

    #[test]
    fn photon_oracle_agrees_with_hierarchy() {
        let xi = gaussian_wavepacket(1.46, 3.0).unwrap();
        let model = MasterModel::new(generic_triple(), FieldSpec::single_photon(xi)).unwrap();
        let grid = TimeGrid::new(0.0, 6.0, 1e-3).unwrap();
        let rho0 = Operator::from_fn(2, |i, j| {
            let v = [C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
            v[i] * v[j].conj()
        });
        let report = oracle_check(&model, &rho0, &grid).unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }

    #[test]
    fn cat_oracle_agrees_with_hierarchy() {
        let amps = CoherentAmplitudes::new(vec![
            Profile::gaussian(1.2, 2.0, C64::new(0.8, 0.0)).unwrap(),
            Profile::gaussian(1.2, 2.0, C64::new(-0.5, 0.4)).unwrap(),
        ])
        .unwrap();
        let gram = amps.gram().unwrap();
        let gamma = WeightMatrix::cat_superposition(&[ONE, C64::new(0.3, 0.5)], &gram).unwrap();
        let model = MasterModel::new(generic_triple(), FieldSpec::CoherentCombination { gamma, amps }).unwrap();
        let grid = TimeGrid::new(0.0, 5.0, 1e-3).unwrap();
        let tl = preset_two_level();
        let report = oracle_check(&model, &tl.ground, &grid).unwrap();
        assert!(report.passes(1e-6), "{report:?}");
    }
}
