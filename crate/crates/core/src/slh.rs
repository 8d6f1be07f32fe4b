//! `(S, L, H)` parameterization of single-channel open systems, the series
//! product for cascades, and Kronecker embedding.
//!
//! Composite spaces are always ordered ancilla ⊗ system: the ancilla is the
//! left tensor factor.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::operator::{Operator, CHECK_TOL};

/// Time-dependent operator-valued function.
pub type OperatorFn = Arc<dyn Fn(f64) -> Operator + Send + Sync>;

/// A validated single-channel open system.
#[derive(Clone, Debug, PartialEq)]
pub struct SlhTriple {
    s: Operator,
    l: Operator,
    h: Operator,
}

impl SlhTriple {
    pub fn new(s: Operator, l: Operator, h: Operator) -> Result<Self> {
        s.check_same_dim(&l, "SLH triple (S vs L)")?;
        s.check_same_dim(&h, "SLH triple (S vs H)")?;
        let deviation = s.unitarity_defect();
        if deviation > CHECK_TOL {
            return Err(Error::NotUnitary {
                what: "scattering matrix S",
                deviation,
            });
        }
        let deviation = h.hermiticity_defect();
        if deviation > CHECK_TOL {
            return Err(Error::NotHermitian {
                what: "Hamiltonian H",
                deviation,
            });
        }
        Ok(SlhTriple { s, l, h })
    }

    /// `(I, 0, 0)` on a `dim`-dimensional space.
    pub fn trivial(dim: usize) -> Self {
        SlhTriple {
            s: Operator::identity(dim),
            l: Operator::zeros(dim),
            h: Operator::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn s(&self) -> &Operator {
        &self.s
    }

    pub fn l(&self) -> &Operator {
        &self.l
    }

    pub fn h(&self) -> &Operator {
        &self.h
    }

    /// `self ◁ g1`: the system obtained when the output of `g1` feeds `self`.
    pub fn series(&self, g1: &SlhTriple) -> Result<SlhTriple> {
        self.s.check_same_dim(&g1.s, "series product")?;
        let (s, l, h) = compose(&self.s, &self.l, &self.h, &g1.s, &g1.l, &g1.h);
        Ok(SlhTriple { s, l, h })
    }

    /// Embeds every component into a larger space (see [`embed`]).
    pub fn embed(&self, slot: Slot, other_dim: usize) -> SlhTriple {
        SlhTriple {
            s: embed(&self.s, slot, other_dim),
            l: embed(&self.l, slot, other_dim),
            h: embed(&self.h, slot, other_dim),
        }
    }
}

/// `(S₂S₁, L₂ + S₂L₁, H₁ + H₂ + Im{L₂†S₂L₁})`
fn compose(
    s2: &Operator,
    l2: &Operator,
    h2: &Operator,
    s1: &Operator,
    l1: &Operator,
    h1: &Operator,
) -> (Operator, Operator, Operator) {
    let s2l1 = s2 * l1;
    let s = s2 * s1;
    let l = l2 + &s2l1;
    let mut h = h1 + h2;
    h += &(&l2.dagger() * &s2l1).imag_part();
    (s, l, h)
}

/// An open system whose coupling and Hamiltonian may depend on time; the
/// scattering matrix is constant.
#[derive(Clone)]
pub struct TimedSlhTriple {
    s: Operator,
    l: OperatorFn,
    h: OperatorFn,
}

impl fmt::Debug for TimedSlhTriple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TimedSlhTriple")
            .field("dim", &self.dim())
            .field("s", &self.s)
            .finish_non_exhaustive()
    }
}

impl TimedSlhTriple {
    pub fn new(s: Operator, l: OperatorFn, h: OperatorFn) -> Result<Self> {
        let deviation = s.unitarity_defect();
        if deviation > CHECK_TOL {
            return Err(Error::NotUnitary {
                what: "scattering matrix S",
                deviation,
            });
        }
        Ok(TimedSlhTriple { s, l, h })
    }

    pub fn dim(&self) -> usize {
        self.s.dim()
    }

    pub fn s(&self) -> &Operator {
        &self.s
    }

    pub fn l_at(&self, t: f64) -> Operator {
        (self.l)(t)
    }

    pub fn h_at(&self, t: f64) -> Operator {
        (self.h)(t)
    }

    /// Samples the triple at time `t`, re-validating it.
    pub fn at(&self, t: f64) -> Result<SlhTriple> {
        SlhTriple::new(self.s.clone(), self.l_at(t), self.h_at(t))
    }

    pub fn embed(&self, slot: Slot, other_dim: usize) -> TimedSlhTriple {
        let (l, h) = (self.l.clone(), self.h.clone());
        TimedSlhTriple {
            s: embed(&self.s, slot, other_dim),
            l: Arc::new(move |t| embed(&l(t), slot, other_dim)),
            h: Arc::new(move |t| embed(&h(t), slot, other_dim)),
        }
    }
}

impl From<SlhTriple> for TimedSlhTriple {
    fn from(g: SlhTriple) -> Self {
        let (l, h) = (g.l, g.h);
        TimedSlhTriple {
            s: g.s,
            l: Arc::new(move |_| l.clone()),
            h: Arc::new(move |_| h.clone()),
        }
    }
}

/// `g2 ◁ g1` for possibly time-dependent operands living on the same space.
pub fn series_product(g2: impl Into<TimedSlhTriple>, g1: impl Into<TimedSlhTriple>) -> Result<TimedSlhTriple> {
    let (g2, g1) = (g2.into(), g1.into());
    g2.s.check_same_dim(&g1.s, "series product")?;
    let s = &g2.s * &g1.s;
    let (s2, s1) = (g2.s.clone(), g1.s.clone());
    let (l2, h2, l1, h1) = (g2.l, g2.h, g1.l, g1.h);
    let l_fn = {
        let (s2, l2, l1) = (s2.clone(), l2.clone(), l1.clone());
        Arc::new(move |t: f64| &l2(t) + &(&s2 * &l1(t))) as OperatorFn
    };
    let h_fn = Arc::new(move |t: f64| {
        let (_, _, h) = compose(&s2, &l2(t), &h2(t), &s1, &l1(t), &h1(t));
        h
    }) as OperatorFn;
    Ok(TimedSlhTriple { s, l: l_fn, h: h_fn })
}

/// Which tensor factor an operator occupies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Slot {
    /// `A ⊗ I`
    Left,
    /// `I ⊗ A`
    Right,
}

pub fn embed(a: &Operator, slot: Slot, other_dim: usize) -> Operator {
    let id = Operator::identity(other_dim);
    match slot {
        Slot::Left => a.kron(&id),
        Slot::Right => id.kron(a),
    }
}
