//! SLH composition: a coherent drive is the series product with a Weyl
//! displacement, and two cascaded cavities form one system on the tensor
//! product space.
//!
//! cargo run --example series_product

use qtraj::operator::{annihilation, Operator, C64};
use qtraj::slh::{SlhTriple, Slot};

fn main() -> qtraj::Result<()> {
    let dim = 3;
    let a = annihilation(dim);
    let cavity = SlhTriple::new(Operator::identity(dim), a.scale_real(0.8), Operator::zeros(dim))?;

    let alpha = C64::new(0.5, 0.2);
    let weyl = SlhTriple::new(
        Operator::identity(dim),
        Operator::identity(dim).scale(alpha),
        Operator::zeros(dim),
    )?;
    let driven = cavity.series(&weyl)?;
    println!("driven cavity L = {:?}", driven.l());
    println!("driven cavity H = {:?}", driven.h());

    // First cavity on the left factor feeds the second on the right.
    let first = cavity.embed(Slot::Left, dim);
    let second = cavity.embed(Slot::Right, dim);
    let cascade = second.series(&first)?;
    println!("cascade dimension {}", cascade.dim());
    println!("cascade H hermiticity defect {:.1e}", cascade.h().hermiticity_defect());
    Ok(())
}
