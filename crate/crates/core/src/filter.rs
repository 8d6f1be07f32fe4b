//! Conditional evolution under homodyne detection or photon counting.
//!
//! Every step consumes the measurement record increment `dY`. Homodyne
//! filters form the innovation `dW = dY - K dt`; counting filters apply the
//! jump map against the compensated increment `dY - ν dt`, so `dY = 0`
//! gives the no-jump evolution and `dY = 1` a detection. Blocks are never
//! renormalized individually; [`conditional_combine`] normalizes on demand.

use crate::error::{Error, Result};
use crate::field::{CoherentAmplitudes, FieldKind, FieldSpec, WeightMatrix};
use crate::master::{cat_block_rhs, photon_rhs, Generator, HierarchyState, MasterModel, PAIRING_TOL};
use crate::operator::{DensityLike, Operator, C64, ZERO};
use crate::slh::SlhTriple;

pub use crate::master::conditional_combine;

/// Default intensity below which jump maps are not applied.
pub const DEFAULT_INTENSITY_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MeasurementScheme {
    Homodyne,
    Counting { intensity_floor: f64 },
}

impl MeasurementScheme {
    pub fn counting() -> Self {
        MeasurementScheme::Counting {
            intensity_floor: DEFAULT_INTENSITY_FLOOR,
        }
    }

    pub fn counting_with_floor(intensity_floor: f64) -> Result<Self> {
        if !(intensity_floor > 0.0) {
            return Err(Error::invalid(
                "intensity floor",
                format!("must be positive, got {intensity_floor}"),
            ));
        }
        Ok(MeasurementScheme::Counting { intensity_floor })
    }

    pub fn is_counting(&self) -> bool {
        matches!(self, MeasurementScheme::Counting { .. })
    }
}

/// Conditional blocks together with the running measurement bookkeeping.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    hierarchy: HierarchyState,
    last_innovation: f64,
    record: f64,
    innovation: f64,
    counts: u64,
}

impl FilterState {
    pub fn new(hierarchy: HierarchyState) -> Self {
        FilterState {
            hierarchy,
            last_innovation: 0.0,
            record: 0.0,
            innovation: 0.0,
            counts: 0,
        }
    }

    pub fn hierarchy(&self) -> &HierarchyState {
        &self.hierarchy
    }

    pub fn t(&self) -> f64 {
        self.hierarchy.t()
    }

    /// Innovation increment of the most recent step.
    pub fn last_innovation(&self) -> f64 {
        self.last_innovation
    }

    /// Cumulative record `Y(t)`.
    pub fn record(&self) -> f64 {
        self.record
    }

    /// Cumulative innovation: `W(t)` (homodyne) or the compensated count
    /// `N(t) - ∫ν` (counting).
    pub fn innovation(&self) -> f64 {
        self.innovation
    }

    pub fn counts(&self) -> u64 {
        self.counts
    }

    fn book(&mut self, dy: f64, innovation: f64, dt: f64) {
        self.last_innovation = innovation;
        self.record += dy;
        self.innovation += innovation;
        if dy == 1.0 {
            self.counts += 1;
        }
        let t = self.hierarchy.t() + dt;
        self.hierarchy.set_t(t);
    }
}

fn tr_l_plus_ldag(gen: &Generator, rho: &Operator) -> C64 {
    gen.l().trace_product(rho) + gen.l_dag().trace_product(rho)
}

/// `Lρ + ρL†`
fn measurement_term(gen: &Generator, rho: &Operator) -> Operator {
    &(gen.l() * rho) + &(rho * gen.l_dag())
}

fn vacuum_homodyne_rate(gen: &Generator, rho: &Operator) -> f64 {
    tr_l_plus_ldag(gen, rho).re
}

fn vacuum_homodyne_update(gen: &Generator, rho: &mut Operator, k: f64, dw: f64, dt: f64) {
    let drift = gen.liouvillian(rho);
    let mut diff = measurement_term(gen, rho);
    diff.add_scaled_real(rho, -k);
    rho.add_scaled_real(&drift, dt);
    rho.add_scaled_real(&diff, dw);
}

fn vacuum_counting_rate(gen: &Generator, rho: &Operator) -> f64 {
    rho.trace_product(gen.l_dag_l()).re
}

/// `ρ += drift dt + (J/ν - ρ)(dY - ν dt)`, or only the drift when `ν` is
/// below the floor.
fn jump_update(rho: &mut Operator, drift: &Operator, jump: &Operator, nu: f64, dy: f64, dt: f64, floor: f64) {
    let mut inc = drift.scale_real(dt);
    if nu >= floor {
        let dn = dy - nu * dt;
        inc.add_scaled_real(jump, dn / nu);
        inc.add_scaled_real(rho, -dn);
    }
    *rho += &inc;
}

/// Homodyne step for a vacuum input with innovation increment `dw`.
pub fn vacuum_homodyne_step(g: &SlhTriple, rho: &DensityLike, dw: f64, dt: f64) -> Result<DensityLike> {
    check_dt(dt)?;
    g.s().check_same_dim(rho.matrix(), "vacuum homodyne filter")?;
    let gen = Generator::new(g);
    let mut m = rho.matrix().clone();
    let k = vacuum_homodyne_rate(&gen, &m);
    vacuum_homodyne_update(&gen, &mut m, k, dw, dt);
    Ok(DensityLike::density(m))
}

/// Counting step for a vacuum input. A detection (`jump = true`) with
/// intensity below `floor` is ignored.
pub fn vacuum_counting_step(g: &SlhTriple, rho: &DensityLike, jump: bool, dt: f64, floor: f64) -> Result<DensityLike> {
    check_dt(dt)?;
    g.s().check_same_dim(rho.matrix(), "vacuum counting filter")?;
    let gen = Generator::new(g);
    let mut m = rho.matrix().clone();
    let nu = vacuum_counting_rate(&gen, &m);
    let drift = gen.liouvillian(&m);
    let j = &(gen.l() * &m) * gen.l_dag();
    jump_update(&mut m, &drift, &j, nu, if jump { 1.0 } else { 0.0 }, dt, floor);
    Ok(DensityLike::density(m))
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid("time step", format!("dt must be positive, got {dt}")));
    }
    Ok(())
}

fn check_pairing(state: &HierarchyState) -> Result<()> {
    let deviation = state.pairing_defect();
    if deviation > PAIRING_TOL {
        return Err(Error::NotHermitian {
            what: "hierarchy pairing ρ^{jk}† = ρ^{kj}",
            deviation,
        });
    }
    Ok(())
}

/// `K_t = tr{(L+L†)ρ¹¹} + tr{Sρ⁰¹}ξ + tr{S†ρ¹⁰}ξ*` (real part).
fn photon_homodyne_rate_inner(gen: &Generator, xi: C64, st: &HierarchyState) -> f64 {
    let mut k = tr_l_plus_ldag(gen, st.block(1, 1));
    if xi != ZERO {
        k += xi * gen.s().trace_product(st.block(0, 1)) + xi.conj() * gen.s_dag().trace_product(st.block(1, 0));
    }
    k.re
}

/// Diffusion numerators `D^{jk}` (the `-Kρ^{jk}` part excluded).
fn photon_diffusion(gen: &Generator, xi: C64, st: &HierarchyState) -> [Operator; 4] {
    let (r00, r01, r10, r11) = (st.block(0, 0), st.block(0, 1), st.block(1, 0), st.block(1, 1));
    let d00 = measurement_term(gen, r00);
    let mut d01 = measurement_term(gen, r01);
    let mut d10 = measurement_term(gen, r10);
    let mut d11 = measurement_term(gen, r11);
    if xi != ZERO {
        d11.add_scaled(&(r10 * gen.s_dag()), xi.conj());
        d11.add_scaled(&(gen.s() * r01), xi);
        d10.add_scaled(&(gen.s() * r00), xi);
        d01.add_scaled(&(r00 * gen.s_dag()), xi.conj());
    }
    [d00, d01, d10, d11]
}

fn photon_homodyne_update(gen: &Generator, xi: C64, st: &mut HierarchyState, k: f64, dw: f64, dt: f64) {
    let drift = photon_rhs(gen, xi, st);
    let diff = photon_diffusion(gen, xi, st);
    for (i, d) in diff.iter().enumerate() {
        let (j, l) = (i / 2, i % 2);
        let rho = st.block_mut(j, l);
        let mut inc = d.clone();
        inc.add_scaled_real(rho, -k);
        rho.add_scaled_real(drift.block(j, l), dt);
        rho.add_scaled_real(&inc, dw);
    }
}

/// `ν_t = tr{ρ¹¹L†L} + tr{ρ¹⁰S†L}ξ* + tr{ρ⁰¹L†S}ξ + tr{ρ⁰⁰}|ξ|²` (real part).
fn photon_counting_rate_inner(gen: &Generator, xi: C64, st: &HierarchyState) -> f64 {
    let mut nu = st.block(1, 1).trace_product(gen.l_dag_l());
    if xi != ZERO {
        let s_dag_l = gen.s_dag() * gen.l();
        let l_dag_s = gen.l_dag() * gen.s();
        nu += xi.conj() * st.block(1, 0).trace_product(&s_dag_l)
            + xi * st.block(0, 1).trace_product(&l_dag_s)
            + st.block(0, 0).trace() * xi.norm_sqr();
    }
    nu.re
}

/// Traces of `D^{jk}` (homodyne) or `J^{jk}` (counting), in block order.
fn photon_numerator_traces(gen: &Generator, xi: C64, st: &HierarchyState, homodyne: bool) -> [C64; 4] {
    let (r00, r01, r10, r11) = (st.block(0, 0), st.block(0, 1), st.block(1, 0), st.block(1, 1));
    if homodyne {
        let mut t = [r00, r01, r10, r11].map(|r| tr_l_plus_ldag(gen, r));
        if xi != ZERO {
            t[1] += xi.conj() * r00.trace_product(gen.s_dag());
            t[2] += xi * gen.s().trace_product(r00);
            t[3] += xi.conj() * r10.trace_product(gen.s_dag()) + xi * gen.s().trace_product(r01);
        }
        t
    } else {
        let mut t = [r00, r01, r10, r11].map(|r| r.trace_product(gen.l_dag_l()));
        if xi != ZERO {
            let s_dag_l = gen.s_dag() * gen.l();
            let l_dag_s = gen.l_dag() * gen.s();
            let s_dag_s = gen.s_dag() * gen.s();
            t[1] += xi.conj() * r00.trace_product(&s_dag_l);
            t[2] += xi * r00.trace_product(&l_dag_s);
            t[3] += xi.conj() * r10.trace_product(&s_dag_l)
                + xi * r01.trace_product(&l_dag_s)
                + r00.trace_product(&s_dag_s) * xi.norm_sqr();
        }
        t
    }
}

/// Jump numerators `J^{jk}`.
fn photon_jumps(gen: &Generator, xi: C64, st: &HierarchyState) -> [Operator; 4] {
    let (r00, r01, r10, r11) = (st.block(0, 0), st.block(0, 1), st.block(1, 0), st.block(1, 1));
    let sandwich = |a: &Operator, rho: &Operator, b: &Operator| &(a * rho) * b;
    let (l, ld, s, sd) = (gen.l(), gen.l_dag(), gen.s(), gen.s_dag());
    let j00 = sandwich(l, r00, ld);
    let mut j01 = sandwich(l, r01, ld);
    let mut j10 = sandwich(l, r10, ld);
    let mut j11 = sandwich(l, r11, ld);
    if xi != ZERO {
        j11.add_scaled(&sandwich(l, r10, sd), xi.conj());
        j11.add_scaled(&sandwich(s, r01, ld), xi);
        j11.add_scaled_real(&sandwich(s, r00, sd), xi.norm_sqr());
        j10.add_scaled(&sandwich(s, r00, ld), xi);
        j01.add_scaled(&sandwich(l, r00, sd), xi.conj());
    }
    [j00, j01, j10, j11]
}

fn counting_update(
    st: &mut HierarchyState,
    drift: &HierarchyState,
    jumps: &[Operator],
    nu: f64,
    dy: f64,
    dt: f64,
    floor: f64,
) {
    let n = st.n();
    for (i, jump) in jumps.iter().enumerate() {
        let (j, k) = (i / n, i % n);
        jump_update(st.block_mut(j, k), drift.block(j, k), jump, nu, dy, dt, floor);
    }
}

fn require_consistent(nu: f64, dy: f64, floor: f64) -> Result<()> {
    if dy != 0.0 && nu < floor {
        return Err(Error::InconsistentRecord { intensity: nu, floor });
    }
    Ok(())
}

fn expect_blocks(state: &HierarchyState, n: usize) -> Result<()> {
    if state.n() != n {
        return Err(Error::BlockCount {
            expected: n,
            found: state.n(),
        });
    }
    Ok(())
}

/// The homodyne rate `K_t` of the photon filter.
pub fn photon_homodyne_rate(g: &SlhTriple, xi_t: C64, state: &HierarchyState) -> Result<f64> {
    expect_blocks(state, 2)?;
    Ok(photon_homodyne_rate_inner(&Generator::new(g), xi_t, state))
}

/// The counting intensity `ν_t` of the photon filter.
pub fn photon_counting_intensity(g: &SlhTriple, xi_t: C64, state: &HierarchyState) -> Result<f64> {
    expect_blocks(state, 2)?;
    Ok(photon_counting_rate_inner(&Generator::new(g), xi_t, state))
}

/// One Euler–Maruyama step of the photon homodyne filter with innovation
/// increment `dw`.
pub fn photon_homodyne_step(g: &SlhTriple, xi_t: C64, state: &FilterState, dw: f64, dt: f64) -> Result<FilterState> {
    check_dt(dt)?;
    expect_blocks(&state.hierarchy, 2)?;
    g.s()
        .check_same_dim(state.hierarchy.block(0, 0), "photon homodyne filter")?;
    let gen = Generator::new(g);
    let mut next = state.clone();
    let k = photon_homodyne_rate_inner(&gen, xi_t, &next.hierarchy);
    photon_homodyne_update(&gen, xi_t, &mut next.hierarchy, k, dw, dt);
    check_pairing(&next.hierarchy)?;
    next.book(dw + k * dt, dw, dt);
    Ok(next)
}

/// One step of the photon counting filter; `jump` is the detection
/// indicator for this interval.
pub fn photon_counting_step(
    g: &SlhTriple,
    xi_t: C64,
    state: &FilterState,
    jump: bool,
    dt: f64,
    floor: f64,
) -> Result<FilterState> {
    check_dt(dt)?;
    expect_blocks(&state.hierarchy, 2)?;
    g.s()
        .check_same_dim(state.hierarchy.block(0, 0), "photon counting filter")?;
    let gen = Generator::new(g);
    let mut next = state.clone();
    let dy = if jump { 1.0 } else { 0.0 };
    let innovation = photon_counting_advance(&gen, xi_t, &mut next.hierarchy, dy, dt, floor)?;
    check_pairing(&next.hierarchy)?;
    next.book(dy, innovation, dt);
    Ok(next)
}

fn photon_counting_advance(
    gen: &Generator,
    xi: C64,
    st: &mut HierarchyState,
    dy: f64,
    dt: f64,
    floor: f64,
) -> Result<f64> {
    let nu = photon_counting_rate_inner(gen, xi, st);
    require_consistent(nu, dy, floor)?;
    let drift = photon_rhs(gen, xi, st);
    let jumps = photon_jumps(gen, xi, st);
    counting_update(st, &drift, &jumps, nu, dy, dt, floor);
    Ok(if nu >= floor { dy - nu * dt } else { dy })
}

/// Weighted innovation rate `Σ_l (γ_ll/N_a) tr{(L + L† + Sα_l + S†α_l*)ρ^{ll}}`.
fn cat_homodyne_rate_inner(gen: &Generator, alphas: &[C64], gamma: &WeightMatrix, st: &HierarchyState) -> f64 {
    let n_a = gamma.n_a();
    let mut k = ZERO;
    for (l, &a) in alphas.iter().enumerate() {
        let rho = st.block(l, l);
        let mut term = tr_l_plus_ldag(gen, rho);
        if a != ZERO {
            term += a * gen.s().trace_product(rho) + a.conj() * gen.s_dag().trace_product(rho);
        }
        k += term * (gamma.get(l, l).re / n_a);
    }
    k.re
}

/// `A_k = L + α_k S`, one per amplitude.
fn shifted_couplings(gen: &Generator, alphas: &[C64]) -> Vec<(Operator, Operator)> {
    alphas
        .iter()
        .map(|&a| {
            let mut op = gen.l().clone();
            op.add_scaled(gen.s(), a);
            let dag = op.dagger();
            (op, dag)
        })
        .collect()
}

fn cat_homodyne_update(gen: &Generator, alphas: &[C64], st: &mut HierarchyState, k: f64, dw: f64, dt: f64) {
    let n = st.n();
    let shifted = shifted_couplings(gen, alphas);
    for j in 0..n {
        for l in 0..n {
            let rho = st.block(j, l).clone();
            let drift = cat_block_rhs(gen, alphas[j], alphas[l], &rho);
            // (L + Sα_k)ρ + ρ(L† + S†α_j*) - Kρ
            let mut diff = &(&shifted[l].0 * &rho) + &(&rho * &shifted[j].1);
            diff.add_scaled_real(&rho, -k);
            let target = st.block_mut(j, l);
            target.add_scaled_real(&drift, dt);
            target.add_scaled_real(&diff, dw);
        }
    }
}

/// `𝒩 = Σ_j (γ_jj/N_a) tr{ρ^{jj}(L†L + α_j L†S + α_j* S†L + |α_j|²)}`
fn cat_counting_rate_inner(gen: &Generator, alphas: &[C64], gamma: &WeightMatrix, st: &HierarchyState) -> f64 {
    let n_a = gamma.n_a();
    let shifted = shifted_couplings(gen, alphas);
    let mut nu = ZERO;
    for (j, (a, a_dag)) in shifted.iter().enumerate() {
        // (L + α_j S)†(L + α_j S) = L†L + α_j L†S + α_j* S†L + |α_j|² S†S
        nu += st.block(j, j).trace_product(&(a_dag * a)) * (gamma.get(j, j).re / n_a);
    }
    nu.re
}

fn cat_counting_advance(
    gen: &Generator,
    alphas: &[C64],
    gamma: &WeightMatrix,
    st: &mut HierarchyState,
    dy: f64,
    dt: f64,
    floor: f64,
) -> Result<f64> {
    let nu = cat_counting_rate_inner(gen, alphas, gamma, st);
    require_consistent(nu, dy, floor)?;
    let n = st.n();
    let shifted = shifted_couplings(gen, alphas);
    let drift = HierarchyState::new(
        n,
        (0..n * n)
            .map(|i| cat_block_rhs(gen, alphas[i / n], alphas[i % n], &st.blocks()[i]))
            .collect(),
        st.t(),
    )?;
    // J^{jk} = (L + α_k S) ρ^{jk} (L + α_j S)†
    let jumps: Vec<Operator> = (0..n * n)
        .map(|i| {
            let (j, k) = (i / n, i % n);
            &(&shifted[k].0 * &st.blocks()[i]) * &shifted[j].1
        })
        .collect();
    counting_update(st, &drift, &jumps, nu, dy, dt, floor);
    Ok(if nu >= floor { dy - nu * dt } else { dy })
}

fn cat_inputs<'a>(
    amps: &CoherentAmplitudes,
    gamma: &'a WeightMatrix,
    state: &HierarchyState,
) -> Result<&'a WeightMatrix> {
    if gamma.kind() != FieldKind::Coherent || gamma.len() != amps.len() {
        return Err(Error::DimensionMismatch {
            context: "coherent weights vs amplitudes",
            left: gamma.len(),
            right: amps.len(),
        });
    }
    expect_blocks(state, amps.len())?;
    Ok(gamma)
}

/// The weighted homodyne rate of the coherent-combination filter.
pub fn cat_homodyne_rate(
    g: &SlhTriple,
    amps: &CoherentAmplitudes,
    gamma: &WeightMatrix,
    t: f64,
    state: &HierarchyState,
) -> Result<f64> {
    let gamma = cat_inputs(amps, gamma, state)?;
    Ok(cat_homodyne_rate_inner(&Generator::new(g), &amps.at(t), gamma, state))
}

/// The weighted counting intensity `𝒩` of the coherent-combination filter.
pub fn cat_counting_intensity(
    g: &SlhTriple,
    amps: &CoherentAmplitudes,
    gamma: &WeightMatrix,
    t: f64,
    state: &HierarchyState,
) -> Result<f64> {
    let gamma = cat_inputs(amps, gamma, state)?;
    Ok(cat_counting_rate_inner(&Generator::new(g), &amps.at(t), gamma, state))
}

/// One Euler–Maruyama step of the coherent-combination homodyne filter with
/// innovation increment `dw`.
pub fn cat_homodyne_step(
    g: &SlhTriple,
    amps: &CoherentAmplitudes,
    gamma: &WeightMatrix,
    t: f64,
    state: &FilterState,
    dw: f64,
    dt: f64,
) -> Result<FilterState> {
    check_dt(dt)?;
    let gamma = cat_inputs(amps, gamma, &state.hierarchy)?;
    let gen = Generator::new(g);
    let alphas = amps.at(t);
    let mut next = state.clone();
    let k = cat_homodyne_rate_inner(&gen, &alphas, gamma, &next.hierarchy);
    cat_homodyne_update(&gen, &alphas, &mut next.hierarchy, k, dw, dt);
    next.book(dw + k * dt, dw, dt);
    Ok(next)
}

/// One step of the coherent-combination counting filter.
#[allow(clippy::too_many_arguments)]
pub fn cat_counting_step(
    g: &SlhTriple,
    amps: &CoherentAmplitudes,
    gamma: &WeightMatrix,
    t: f64,
    state: &FilterState,
    jump: bool,
    dt: f64,
    floor: f64,
) -> Result<FilterState> {
    check_dt(dt)?;
    let gamma = cat_inputs(amps, gamma, &state.hierarchy)?;
    let gen = Generator::new(g);
    let mut next = state.clone();
    let dy = if jump { 1.0 } else { 0.0 };
    let innovation = cat_counting_advance(&gen, &amps.at(t), gamma, &mut next.hierarchy, dy, dt, floor)?;
    next.book(dy, innovation, dt);
    Ok(next)
}

/// A system, input field and detection scheme, stepped along a measurement
/// record.
#[derive(Clone, Debug)]
pub struct FilterModel {
    master: MasterModel,
    scheme: MeasurementScheme,
}

impl FilterModel {
    pub fn new(g: SlhTriple, field: FieldSpec, scheme: MeasurementScheme) -> Result<Self> {
        if let MeasurementScheme::Counting { intensity_floor } = scheme {
            MeasurementScheme::counting_with_floor(intensity_floor)?;
        }
        Ok(FilterModel {
            master: MasterModel::new(g, field)?,
            scheme,
        })
    }

    pub fn master(&self) -> &MasterModel {
        &self.master
    }

    pub fn scheme(&self) -> MeasurementScheme {
        self.scheme
    }

    pub fn initial_state(&self, rho0: &Operator, t0: f64) -> Result<FilterState> {
        Ok(FilterState::new(self.master.initial_state(rho0, t0)?))
    }

    fn floor(&self) -> f64 {
        match self.scheme {
            MeasurementScheme::Homodyne => 0.0,
            MeasurementScheme::Counting { intensity_floor } => intensity_floor,
        }
    }

    /// Rate (homodyne drift `K` or counting intensity `ν`) of the record
    /// under the law of the modelled input, given the conditional state.
    /// For combinations it is computed from the normalized combined state,
    /// so it may differ from the rate a block filter subtracts.
    pub fn record_rate(&self, t: f64, state: &FilterState) -> Result<f64> {
        let gen = self.master.generator();
        let st = &state.hierarchy;
        let homodyne = !self.scheme.is_counting();
        match self.master.field() {
            FieldSpec::Vacuum => {
                let rho = st.block(0, 0);
                let (num, tr) = if homodyne {
                    (vacuum_homodyne_rate(gen, rho), rho.trace().re)
                } else {
                    (vacuum_counting_rate(gen, rho), rho.trace().re)
                };
                normalized_rate(num, tr)
            }
            FieldSpec::PhotonCombination { gamma, xi } => {
                let xi = xi.xi(t);
                let per_block = photon_numerator_traces(gen, xi, st, homodyne);
                weighted_rate(gamma, &per_block, st)
            }
            FieldSpec::CoherentCombination { gamma, amps } => {
                let shifted = shifted_couplings(gen, &amps.at(t));
                let n = st.n();
                let per_block: Vec<C64> = (0..n * n)
                    .map(|i| {
                        let (j, k) = (i / n, i % n);
                        let rho = &st.blocks()[i];
                        if homodyne {
                            shifted[k].0.trace_product(rho) + rho.trace_product(&shifted[j].1)
                        } else {
                            rho.trace_product(&(&shifted[j].1 * &shifted[k].0))
                        }
                    })
                    .collect();
                weighted_rate(gamma, &per_block, st)
            }
        }
    }

    /// Advances `state` by one step along the record increment `dy`
    /// (homodyne: real increment; counting: 0 or 1). Returns the innovation
    /// increment subtracted by the filter.
    pub fn step(&self, t: f64, state: &mut FilterState, dy: f64, dt: f64) -> Result<f64> {
        let gen = self.master.generator();
        let floor = self.floor();
        let st = &mut state.hierarchy;
        let innovation = match (self.master.field(), self.scheme) {
            (FieldSpec::Vacuum, MeasurementScheme::Homodyne) => {
                let rho = st.block_mut(0, 0);
                let k = vacuum_homodyne_rate(gen, rho);
                let dw = dy - k * dt;
                vacuum_homodyne_update(gen, rho, k, dw, dt);
                dw
            }
            (FieldSpec::Vacuum, MeasurementScheme::Counting { .. }) => {
                let rho = st.block_mut(0, 0);
                let nu = vacuum_counting_rate(gen, rho);
                let drift = gen.liouvillian(rho);
                let j = &(gen.l() * &*rho) * gen.l_dag();
                jump_update(rho, &drift, &j, nu, dy, dt, floor);
                if nu >= floor {
                    dy - nu * dt
                } else {
                    dy
                }
            }
            (FieldSpec::PhotonCombination { xi, .. }, MeasurementScheme::Homodyne) => {
                let xi = xi.xi(t);
                let k = photon_homodyne_rate_inner(gen, xi, st);
                let dw = dy - k * dt;
                photon_homodyne_update(gen, xi, st, k, dw, dt);
                check_pairing(st)?;
                dw
            }
            (FieldSpec::PhotonCombination { xi, .. }, MeasurementScheme::Counting { .. }) => {
                let innovation = photon_counting_advance(gen, xi.xi(t), st, dy, dt, floor)?;
                check_pairing(st)?;
                innovation
            }
            (FieldSpec::CoherentCombination { gamma, amps }, MeasurementScheme::Homodyne) => {
                let alphas = amps.at(t);
                let k = cat_homodyne_rate_inner(gen, &alphas, gamma, st);
                let dw = dy - k * dt;
                cat_homodyne_update(gen, &alphas, st, k, dw, dt);
                dw
            }
            (FieldSpec::CoherentCombination { gamma, amps }, MeasurementScheme::Counting { .. }) => {
                cat_counting_advance(gen, &amps.at(t), gamma, st, dy, dt, floor)?
            }
        };
        state.book(dy, innovation, dt);
        Ok(innovation)
    }

    /// Normalized conditional state of the system.
    pub fn conditional_state(&self, state: &FilterState) -> Result<DensityLike> {
        match self.master.field().weights() {
            Some(gamma) => conditional_combine(gamma, &state.hierarchy),
            None => {
                let rho = state.hierarchy.block(0, 0);
                let tr = rho.trace();
                if tr.norm() < 1e-12 {
                    return Err(Error::NormalizationCollapse(tr.norm()));
                }
                Ok(DensityLike::density(rho.scale(C64::new(1.0, 0.0) / tr)))
            }
        }
    }
}

fn normalized_rate(num: f64, tr: f64) -> Result<f64> {
    if tr.abs() < 1e-12 {
        return Err(Error::NormalizationCollapse(tr.abs()));
    }
    Ok(num / tr)
}

/// `Re Σ w_jk x_jk / Re Σ w_jk tr ρ^{jk}` with the combination's index order.
fn weighted_rate(gamma: &WeightMatrix, per_block: &[C64], st: &HierarchyState) -> Result<f64> {
    let n = st.n();
    let (mut num, mut den) = (ZERO, ZERO);
    for j in 0..n {
        for k in 0..n {
            let w = match gamma.kind() {
                FieldKind::Photon => gamma.get(k, j),
                FieldKind::Coherent => gamma.get(j, k),
            };
            if w != ZERO {
                num += w * per_block[j * n + k];
                den += w * st.block(j, k).trace();
            }
        }
    }
    normalized_rate(num.re, den.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{gaussian_wavepacket, Profile};
    use crate::operator::{preset_two_level, ONE};

    fn atom() -> SlhTriple {
        let tl = preset_two_level();
        SlhTriple::new(Operator::identity(2), tl.sigma_minus.clone(), Operator::zeros(2)).unwrap()
    }

    fn mixed() -> Operator {
        Operator::from_rows(&[
            vec![C64::new(0.35, 0.0), C64::new(0.2, -0.1)],
            vec![C64::new(0.2, 0.1), C64::new(0.65, 0.0)],
        ])
        .unwrap()
    }

    #[test]
    fn homodyne_dark_state_has_no_diffusion() {
        let tl = preset_two_level();
        let rho = DensityLike::density(tl.ground.clone());
        let a = vacuum_homodyne_step(&atom(), &rho, 0.3, 1e-3).unwrap();
        assert_eq!(a.matrix(), &tl.ground);
        let b = vacuum_homodyne_step(&atom(), &DensityLike::density(mixed()), 0.05, 1e-3).unwrap();
        assert!((b.matrix().trace() - ONE).norm() < 1e-14);
    }

    #[test]
    fn homodyne_without_coupling_is_von_neumann() {
        let tl = preset_two_level();
        let h = (&tl.sigma_minus + &tl.sigma_plus).scale_real(0.7);
        let g = SlhTriple::new(Operator::identity(2), Operator::zeros(2), h.clone()).unwrap();
        let rho = mixed();
        let out = vacuum_homodyne_step(&g, &DensityLike::density(rho.clone()), 0.4, 1e-3).unwrap();
        let mut expected = rho.clone();
        expected.add_scaled(&Operator::commutator(&h, &rho), C64::new(0.0, -1e-3));
        assert!(out.matrix().distance(&expected) < 1e-15);
    }

    #[test]
    fn counting_jump_to_ground() {
        let tl = preset_two_level();
        let rho = DensityLike::density(tl.excited.clone());
        let out = vacuum_counting_step(&atom(), &rho, true, 1e-3, DEFAULT_INTENSITY_FLOOR).unwrap();
        assert!(out.matrix().distance(&tl.ground) < 1e-15);
        let gen = Generator::new(&atom());
        assert_eq!(vacuum_counting_rate(&gen, &tl.excited), 1.0);
        // Detections at zero intensity are ignored.
        let out = vacuum_counting_step(&atom(), &DensityLike::density(tl.ground.clone()), true, 1e-3, 1e-10).unwrap();
        assert_eq!(out.matrix(), &tl.ground);
    }

    #[test]
    fn photon_rates_at_start() {
        let tl = preset_two_level();
        let xi = gaussian_wavepacket(1.46, 3.0).unwrap();
        let st = HierarchyState::photon_initial(&tl.ground, 0.0);
        assert_eq!(photon_homodyne_rate(&atom(), xi.xi(0.0), &st).unwrap(), 0.0);
        let pass = SlhTriple::trivial(2);
        let nu = photon_counting_intensity(&pass, xi.xi(1.0), &st).unwrap();
        assert!((nu - xi.xi(1.0).norm_sqr()).abs() < 1e-15);
    }

    #[test]
    fn photon_counting_no_click_hazard() {
        // S = I, L = 0: before any click the intensity is the hazard
        // |ξ|²/(1 - ∫₀ᵗ|ξ|²).
        let tl = preset_two_level();
        let xi = gaussian_wavepacket(1.46, 3.0).unwrap();
        let g = SlhTriple::trivial(2);
        let dt = 1e-4;
        let mut st = FilterState::new(HierarchyState::photon_initial(&tl.ground, 0.0));
        let w0 = xi.survival(0.0).unwrap();
        for i in 0..30000 {
            let t = i as f64 * dt;
            let nu = photon_counting_intensity(&g, xi.xi(t), st.hierarchy()).unwrap();
            if i == 0 {
                assert!((nu - xi.xi(t).norm_sqr()).abs() < 1e-15);
            }
            if i % 1000 == 0 {
                let hazard = xi.xi(t).norm_sqr() / (1.0 - w0 + xi.survival(t).unwrap());
                assert!((nu - hazard).abs() < 1e-3 * hazard.max(1e-3), "t={t}: {nu} vs {hazard}");
            }
            st = photon_counting_step(&g, xi.xi(t), &st, false, dt, 1e-10).unwrap();
        }
    }

    #[test]
    fn counting_rejects_inconsistent_record() {
        let tl = preset_two_level();
        let st = FilterState::new(HierarchyState::photon_initial(&tl.ground, 0.0));
        let r = photon_counting_step(&atom(), ZERO, &st, true, 1e-3, 1e-10);
        assert!(matches!(r, Err(Error::InconsistentRecord { .. })));
    }

    #[test]
    fn photon_filter_vacuum_branch_matches_vacuum_filter() {
        let rho0 = mixed();
        let g = atom();
        let mut st = FilterState::new(HierarchyState::photon_initial(&rho0, 0.0));
        let mut vac = DensityLike::density(rho0);
        for i in 0..200 {
            let dw = 0.01 * ((i * 7 % 13) as f64 - 6.0);
            st = photon_homodyne_step(&g, ZERO, &st, dw, 1e-3).unwrap();
            vac = vacuum_homodyne_step(&g, &vac, dw, 1e-3).unwrap();
        }
        assert!(st.hierarchy().block(0, 0).distance(vac.matrix()) < 1e-10);
    }

    #[test]
    fn cat_single_amplitude_matches_weyl_driven_vacuum() {
        let tl = preset_two_level();
        let a = C64::new(0.5, -0.2);
        let amps = CoherentAmplitudes::new(vec![Profile::constant(a, 0.0, 5.0).unwrap()]).unwrap();
        let gram = amps.gram().unwrap();
        let gamma = WeightMatrix::coherent(vec![vec![ONE]], &gram).unwrap();
        let g = atom();
        let l = &tl.sigma_minus + &Operator::identity(2).scale(a);
        let h = tl.sigma_plus.scale(a).imag_part();
        let driven = SlhTriple::new(Operator::identity(2), l, h).unwrap();
        let mut st = FilterState::new(HierarchyState::single(tl.excited.clone(), 0.0));
        let mut vac = DensityLike::density(tl.excited.clone());
        for i in 0..500 {
            let dw = 0.02 * ((i * 5 % 11) as f64 - 5.0);
            st = cat_homodyne_step(&g, &amps, &gamma, i as f64 * 1e-3, &st, dw, 1e-3).unwrap();
            vac = vacuum_homodyne_step(&driven, &vac, dw, 1e-3).unwrap();
        }
        assert!(st.hierarchy().block(0, 0).distance(vac.matrix()) < 1e-12);
    }

    #[test]
    fn cat_innovation_ignores_off_diagonal_weights() {
        let amps = CoherentAmplitudes::new(vec![
            Profile::constant(C64::new(0.6, 0.0), 0.0, 4.0).unwrap(),
            Profile::constant(C64::new(-0.6, 0.0), 0.0, 4.0).unwrap(),
        ])
        .unwrap();
        let gram = amps.gram().unwrap();
        let tl = preset_two_level();
        let st = HierarchyState::cat_initial(&tl.excited, &gram, 0.0);
        let g = atom();
        let a = WeightMatrix::cat_superposition(&[ONE, ONE], &gram).unwrap();
        let b = WeightMatrix::cat_mixture(&[0.5, 0.5], &gram).unwrap();
        let c = WeightMatrix::cat_mixture(&[0.9, 0.1], &gram).unwrap();
        let ka = cat_homodyne_rate(&g, &amps, &a, 1.0, &st).unwrap();
        let kb = cat_homodyne_rate(&g, &amps, &b, 1.0, &st).unwrap();
        let kc = cat_homodyne_rate(&g, &amps, &c, 1.0, &st).unwrap();
        assert!((ka - kb).abs() < 1e-15);
        assert!((ka - kc).abs() > 1e-3);
    }

    #[test]
    fn record_rate_matches_filter_rate_for_single_photon() {
        let tl = preset_two_level();
        let xi = gaussian_wavepacket(1.46, 3.0).unwrap();
        let model = FilterModel::new(
            atom(),
            FieldSpec::single_photon(xi.clone()),
            MeasurementScheme::Homodyne,
        )
        .unwrap();
        let mut st = model.initial_state(&tl.ground, 0.0).unwrap();
        for i in 0..3000 {
            let t = i as f64 * 1e-3;
            let rate = model.record_rate(t, &st).unwrap();
            let k = photon_homodyne_rate(&atom(), xi.xi(t), st.hierarchy()).unwrap();
            assert!((rate - k).abs() < 1e-9);
            let dw = 0.03 * ((i % 7) as f64 - 3.0);
            model.step(t, &mut st, rate * 1e-3 + dw, 1e-3).unwrap();
            let c = model.conditional_state(&st).unwrap();
            assert!((c.matrix().trace() - ONE).norm() < 1e-12);
        }
    }
}
