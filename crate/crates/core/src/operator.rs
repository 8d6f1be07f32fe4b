//! Dense complex operators on a finite-dimensional Hilbert space and the
//! superoperators built from them.
//!
//! Matrices are stored row-major. Storage is inline for two-level systems,
//! so the per-step arithmetic of the filters for an atom does not touch
//! the heap.
//!
//! Conventions: `D_L X = L†XL - ½{L†L, X}` acts on observables,
//! `D*_L ρ = LρL† - ½{L†L, ρ}` acts on states, and
//! `L_G X = -i[X, H] + D_L X`, `L*_G ρ = -i[H, ρ] + D*_L ρ`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::slh::SlhTriple;

pub type C64 = Complex64;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Tolerance used by the Hermiticity / trace sanity checks.
pub const CHECK_TOL: f64 = 1e-9;

type Storage = SmallVec<[C64; 4]>;

/// A square complex matrix.
#[derive(Clone, PartialEq)]
pub struct Operator {
    dim: usize,
    data: Storage,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Operator({}x{}) [", self.dim, self.dim)?;
        for i in 0..self.dim {
            write!(f, "  ")?;
            for j in 0..self.dim {
                let z = self[(i, j)];
                write!(f, "{:+.6}{:+.6}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

impl Operator {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "operator dimension must be positive");
        Operator {
            dim,
            data: SmallVec::from_elem(ZERO, dim * dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            out.data[i * dim + i] = ONE;
        }
        out
    }

    pub fn from_fn(dim: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut out = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                out.data[i * dim + j] = f(i, j);
            }
        }
        out
    }

    /// Builds an operator from rows; fails unless the rows form a square matrix.
    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::invalid("operator", "matrix has no rows"));
        }
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    context: "matrix rows",
                    left: dim,
                    right: row.len(),
                });
            }
        }
        Ok(Self::from_fn(dim, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows
            .iter()
            .map(|r| r.iter().map(|&x| C64::new(x, 0.0)).collect())
            .collect();
        Self::from_rows(&rows)
    }

    /// `|a⟩⟨b|`
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        assert_eq!(a.len(), b.len());
        Self::from_fn(a.len(), |i, j| a[i] * b[j].conj())
    }

    /// `|k⟩⟨k|` in a `dim`-dimensional basis.
    pub fn projector(dim: usize, k: usize) -> Self {
        Self::transition(dim, k, k)
    }

    /// `|j⟩⟨k|` in a `dim`-dimensional basis.
    pub fn transition(dim: usize, j: usize, k: usize) -> Self {
        let mut out = Self::zeros(dim);
        out[(j, k)] = ONE;
        out
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<C64>> {
        (0..self.dim)
            .map(|i| self.data[i * self.dim..(i + 1) * self.dim].to_vec())
            .collect()
    }

    pub fn dagger(&self) -> Self {
        let d = self.dim;
        Self::from_fn(d, |i, j| self.data[j * d + i].conj())
    }

    pub fn trace(&self) -> C64 {
        (0..self.dim).map(|i| self.data[i * self.dim + i]).sum()
    }

    /// `tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Operator) -> C64 {
        debug_assert_eq!(self.dim, other.dim);
        let d = self.dim;
        let mut acc = ZERO;
        for i in 0..d {
            for k in 0..d {
                acc += self.data[i * d + k] * other.data[k * d + i];
            }
        }
        acc
    }

    /// `⟨v|A|v⟩` for a ket `v`.
    pub fn expectation_in(&self, v: &[C64]) -> C64 {
        let av = self.apply(v);
        v.iter().zip(av.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.dim);
        let d = self.dim;
        (0..d)
            .map(|i| (0..d).map(|k| self.data[i * d + k] * v[k]).sum())
            .collect()
    }

    pub fn scale(&self, c: C64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= c);
        out
    }

    pub fn scale_real(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= c);
        out
    }

    /// `self += c · other`
    pub fn add_scaled(&mut self, other: &Operator, c: C64) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    /// `self += c · other` for real `c`.
    pub fn add_scaled_real(&mut self, other: &Operator, c: f64) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += b * c;
        }
    }

    /// Largest entry modulus.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &Operator) -> f64 {
        (self - other).max_abs()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst: f64 = 0.0;
        for i in 0..d {
            for j in i..d {
                worst = worst.max((self.data[i * d + j] - self.data[j * d + i].conj()).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    /// `max |(A†A - I)_ij|`
    pub fn unitarity_defect(&self) -> f64 {
        (&(&self.dagger() * self) - &Operator::identity(self.dim)).max_abs()
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_defect() <= tol
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Operator) -> Self {
        let (da, db) = (self.dim, other.dim);
        Self::from_fn(da * db, |r, c| {
            let (i, k) = (r / db, r % db);
            let (j, l) = (c / db, c % db);
            self.data[i * da + j] * other.data[k * db + l]
        })
    }

    /// `(A - A†) / 2i`
    pub fn imag_part(&self) -> Self {
        (self - &self.dagger()).scale(C64::new(0.0, -0.5))
    }

    pub fn commutator(a: &Operator, b: &Operator) -> Self {
        &(a * b) - &(b * a)
    }

    pub fn anticommutator(a: &Operator, b: &Operator) -> Self {
        &(a * b) + &(b * a)
    }

    pub(crate) fn check_same_dim(&self, other: &Operator, context: &'static str) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                context,
                left: self.dim,
                right: other.dim,
            });
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for Operator {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.dim + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Operator {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.dim + j]
    }
}

impl Mul for &Operator {
    type Output = Operator;

    fn mul(self, rhs: &Operator) -> Operator {
        assert_eq!(self.dim, rhs.dim, "operator product dimension mismatch");
        let d = self.dim;
        if d == 2 {
            let a: &[C64; 4] = self.data.as_slice().try_into().expect("2x2 storage");
            let b: &[C64; 4] = rhs.data.as_slice().try_into().expect("2x2 storage");
            return Operator {
                dim: 2,
                data: SmallVec::from_buf([
                    a[0] * b[0] + a[1] * b[2],
                    a[0] * b[1] + a[1] * b[3],
                    a[2] * b[0] + a[3] * b[2],
                    a[2] * b[1] + a[3] * b[3],
                ]),
            };
        }
        let mut out = Operator::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let a = self.data[i * d + k];
                if a == ZERO {
                    continue;
                }
                let row = &rhs.data[k * d..(k + 1) * d];
                let dst = &mut out.data[i * d..(i + 1) * d];
                for (o, b) in dst.iter_mut().zip(row) {
                    *o += a * b;
                }
            }
        }
        out
    }
}

impl Add for &Operator {
    type Output = Operator;

    fn add(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out += rhs;
        out
    }
}

impl Sub for &Operator {
    type Output = Operator;

    fn sub(self, rhs: &Operator) -> Operator {
        let mut out = self.clone();
        out -= rhs;
        out
    }
}

impl Add for Operator {
    type Output = Operator;

    fn add(mut self, rhs: Operator) -> Operator {
        self += &rhs;
        self
    }
}

impl Sub for Operator {
    type Output = Operator;

    fn sub(mut self, rhs: Operator) -> Operator {
        self -= &rhs;
        self
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        assert_eq!(self.dim, rhs.dim, "operator sum dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a += b;
        }
    }
}

impl SubAssign<&Operator> for Operator {
    fn sub_assign(&mut self, rhs: &Operator) {
        assert_eq!(self.dim, rhs.dim, "operator difference dimension mismatch");
        for (a, b) in self.data.iter_mut().zip(rhs.data.iter()) {
            *a -= b;
        }
    }
}

impl Neg for &Operator {
    type Output = Operator;

    fn neg(self) -> Operator {
        self.scale_real(-1.0)
    }
}

impl Mul<C64> for &Operator {
    type Output = Operator;

    fn mul(self, c: C64) -> Operator {
        self.scale(c)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;

    fn mul(self, c: f64) -> Operator {
        self.scale_real(c)
    }
}

/// Whether a matrix stands for a physical state or for one of the
/// off-diagonal cross terms of a hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Role {
    Density,
    CrossTerm,
}

/// A state-like matrix tagged with its role. Density-tagged values are
/// Hermitian with a declared trace; cross terms carry no positivity
/// requirement.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityLike {
    matrix: Operator,
    role: Role,
}

impl DensityLike {
    pub fn density(matrix: Operator) -> Self {
        DensityLike {
            matrix,
            role: Role::Density,
        }
    }

    pub fn cross_term(matrix: Operator) -> Self {
        DensityLike {
            matrix,
            role: Role::CrossTerm,
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn matrix(&self) -> &Operator {
        &self.matrix
    }

    pub fn into_matrix(self) -> Operator {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Real part of `tr(ρ X)`.
    pub fn expectation(&self, x: &Operator) -> f64 {
        self.matrix.trace_product(x).re
    }

    /// Verifies the density invariants (Hermitian, trace equal to `target`)
    /// within `tol`. Cross terms always pass.
    pub fn validate(&self, target_trace: f64, tol: f64) -> Result<()> {
        if self.role == Role::CrossTerm {
            return Ok(());
        }
        let defect = self.matrix.hermiticity_defect();
        if defect > tol {
            return Err(Error::NotHermitian {
                what: "density matrix",
                deviation: defect,
            });
        }
        let tr = self.matrix.trace();
        if (tr - C64::new(target_trace, 0.0)).norm() > tol {
            return Err(Error::invalid(
                "density matrix",
                format!("trace {tr} differs from {target_trace}"),
            ));
        }
        Ok(())
    }
}

/// `D_L X = L†XL - ½(L†L X + X L†L)`
pub fn dissipator(l: &Operator, x: &Operator) -> Result<Operator> {
    l.check_same_dim(x, "dissipator")?;
    let ld = l.dagger();
    let ldl = &ld * l;
    let mut out = &(&ld * x) * l;
    out.add_scaled_real(&Operator::anticommutator(&ldl, x), -0.5);
    Ok(out)
}

/// `D*_L ρ = LρL† - ½(L†Lρ + ρL†L)`
pub fn dissipator_adjoint(l: &Operator, rho: &Operator) -> Result<Operator> {
    l.check_same_dim(rho, "dissipator_adjoint")?;
    let ld = l.dagger();
    let ldl = &ld * l;
    let mut out = &(l * rho) * &ld;
    out.add_scaled_real(&Operator::anticommutator(&ldl, rho), -0.5);
    Ok(out)
}

/// `L_G X = -i[X, H] + D_L X`. The scattering matrix does not enter.
pub fn lindbladian(g: &SlhTriple, x: &Operator) -> Result<Operator> {
    g.h().check_same_dim(x, "lindbladian")?;
    let mut out = dissipator(g.l(), x)?;
    out.add_scaled(&Operator::commutator(x, g.h()), -I);
    Ok(out)
}

/// `L*_G ρ = -i[H, ρ] + D*_L ρ`
pub fn liouvillian(g: &SlhTriple, rho: &Operator) -> Result<Operator> {
    g.h().check_same_dim(rho, "liouvillian")?;
    let mut out = dissipator_adjoint(g.l(), rho)?;
    out.add_scaled(&Operator::commutator(g.h(), rho), -I);
    Ok(out)
}

/// Operators of a two-level atom in the basis `{|g⟩, |e⟩}` (index 0 is the
/// ground state).
#[derive(Clone, Debug)]
pub struct TwoLevel {
    pub sigma_minus: Operator,
    pub sigma_plus: Operator,
    /// `σ₊σ₋ = |e⟩⟨e|`
    pub excited: Operator,
    pub ground: Operator,
    pub identity: Operator,
}

pub const GROUND: usize = 0;
pub const EXCITED: usize = 1;

pub fn preset_two_level() -> TwoLevel {
    let sigma_minus = Operator::transition(2, GROUND, EXCITED);
    TwoLevel {
        sigma_plus: sigma_minus.dagger(),
        excited: Operator::projector(2, EXCITED),
        ground: Operator::projector(2, GROUND),
        identity: Operator::identity(2),
        sigma_minus,
    }
}

/// Pauli x, y, z for the two-level basis above (`σ_z = |e⟩⟨e| - |g⟩⟨g|`).
pub fn pauli() -> [Operator; 3] {
    let tl = preset_two_level();
    let x = &tl.sigma_minus + &tl.sigma_plus;
    let y = (&tl.sigma_plus - &tl.sigma_minus).scale(-I);
    let z = &tl.excited - &tl.ground;
    [x, y, z]
}

/// Annihilation operator of a cavity mode truncated to `dim` Fock states.
pub fn annihilation(dim: usize) -> Operator {
    Operator::from_fn(dim, |i, j| {
        if j == i + 1 {
            C64::new((j as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    })
}

pub fn number(dim: usize) -> Operator {
    Operator::from_fn(dim, |i, j| if i == j { C64::new(i as f64, 0.0) } else { ZERO })
}

/// Basis ket `|k⟩`.
pub fn basis(dim: usize, k: usize) -> Vec<C64> {
    let mut v = vec![ZERO; dim];
    v[k] = ONE;
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tl() -> TwoLevel {
        preset_two_level()
    }

    fn atom(kappa: f64) -> SlhTriple {
        let t = tl();
        SlhTriple::new(
            Operator::identity(2),
            t.sigma_minus.scale_real(kappa.sqrt()),
            Operator::zeros(2),
        )
        .unwrap()
    }

    #[test]
    fn dissipator_on_excited_projector() {
        let t = tl();
        let out = dissipator(&t.sigma_minus, &t.excited).unwrap();
        assert!(out.distance(&(-&t.excited)) < 1e-15);
    }

    #[test]
    fn dissipator_annihilates_identity_and_zero_coupling() {
        let t = tl();
        let l = Operator::from_fn(2, |i, j| C64::new(i as f64 + 0.3, j as f64 - 0.7));
        assert!(dissipator(&l, &t.identity).unwrap().max_abs() < 1e-14);
        let x = Operator::from_fn(2, |i, j| C64::new(1.0 + i as f64, -(j as f64)));
        assert_eq!(dissipator(&Operator::zeros(2), &x).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn dissipator_reports_dimensions() {
        let err = dissipator(&Operator::zeros(2), &Operator::zeros(3)).unwrap_err();
        match err {
            Error::DimensionMismatch { left, right, .. } => assert_eq!((left, right), (2, 3)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn adjoint_dissipator_decay() {
        let t = tl();
        let out = dissipator_adjoint(&t.sigma_minus, &t.excited).unwrap();
        assert!(out.distance(&(&t.ground - &t.excited)) < 1e-15);
        let dark = dissipator_adjoint(&t.sigma_minus, &t.ground).unwrap();
        assert_eq!(dark.max_abs(), 0.0);
    }

    #[test]
    fn lindbladian_examples() {
        let t = tl();
        let g = atom(1.0);
        let out = lindbladian(&g, &t.excited).unwrap();
        assert!(out.distance(&(-&t.excited)) < 1e-15);
        assert!(lindbladian(&g, &t.identity).unwrap().max_abs() < 1e-15);

        let [sx, _, sz] = pauli();
        let h = sz.scale_real(0.8);
        let g = SlhTriple::new(Operator::identity(2), Operator::zeros(2), h.clone()).unwrap();
        let expected = Operator::commutator(&sx, &h).scale(-I);
        assert!(lindbladian(&g, &sx).unwrap().distance(&expected) < 1e-15);
    }

    #[test]
    fn liouvillian_examples() {
        let t = tl();
        let out = liouvillian(&atom(1.0), &t.excited).unwrap();
        assert!(out.distance(&(&t.ground - &t.excited)) < 1e-15);

        let free = SlhTriple::new(Operator::identity(3), Operator::zeros(3), Operator::zeros(3)).unwrap();
        let mixed = Operator::identity(3).scale_real(1.0 / 3.0);
        assert_eq!(liouvillian(&free, &mixed).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn two_level_catalog() {
        let t = tl();
        let anti = Operator::anticommutator(&t.sigma_minus, &t.sigma_plus);
        assert!(anti.distance(&t.identity) < 1e-15);
        assert_eq!(&t.sigma_plus * &t.sigma_minus, t.excited);
        assert_eq!(t.sigma_plus, t.sigma_minus.dagger());
        assert_eq!(t.sigma_minus.apply(&basis(2, EXCITED)), basis(2, GROUND));
        assert_eq!((&t.sigma_minus * &t.sigma_minus).max_abs(), 0.0);
    }

    #[test]
    fn pauli_algebra() {
        let [x, y, z] = pauli();
        let xy = &x * &y;
        assert!(xy.distance(&z.scale(I)) < 1e-15);
        assert!(x.is_hermitian(0.0) && y.is_hermitian(0.0) && z.is_hermitian(0.0));
    }

    #[test]
    fn cavity_operators() {
        let a = annihilation(4);
        let n = &a.dagger() * &a;
        assert!(n.distance(&number(4)) < 1e-14);
        let v = a.apply(&basis(4, 3));
        assert!((v[2].re - 3f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kron_and_trace_product() {
        let t = tl();
        let k = t.sigma_minus.kron(&t.identity);
        assert_eq!(k.dim(), 4);
        assert_eq!(k[(0, 2)], ONE);
        assert_eq!(k[(1, 3)], ONE);
        let a = Operator::from_fn(3, |i, j| C64::new(i as f64, j as f64 + 1.0));
        let b = Operator::from_fn(3, |i, j| C64::new(j as f64 - 1.0, i as f64 * 0.5));
        assert!((a.trace_product(&b) - (&a * &b).trace()).norm() < 1e-13);
    }

    #[test]
    fn density_like_validation() {
        let t = tl();
        assert!(DensityLike::density(t.excited.clone()).validate(1.0, 1e-9).is_ok());
        assert!(DensityLike::density(t.sigma_minus.clone()).validate(0.0, 1e-9).is_err());
        assert!(DensityLike::cross_term(t.sigma_minus.clone())
            .validate(1.0, 1e-9)
            .is_ok());
        assert!(DensityLike::density(t.identity.clone()).validate(1.0, 1e-9).is_err());
    }
}
