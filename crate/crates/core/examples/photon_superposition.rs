//! Inputs that are a superposition or a mixture of one photon and vacuum
//! differ only through the off-diagonal weights.
//!
//! cargo run --release --example photon_superposition

use qtraj::field::{gaussian_wavepacket, FieldSpec, WeightMatrix};
use qtraj::master::MasterModel;
use qtraj::operator::{pauli, preset_two_level, Operator, C64};
use qtraj::sde::TimeGrid;
use qtraj::slh::SlhTriple;

fn main() -> qtraj::Result<()> {
    let tl = preset_two_level();
    let [sx, _, _] = pauli();
    let atom = SlhTriple::new(Operator::identity(2), tl.sigma_minus.clone(), Operator::zeros(2))?;
    let xi = gaussian_wavepacket(1.46, 3.0)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let inputs = [
        ("single photon", WeightMatrix::single_photon()),
        ("50/50 mixture", WeightMatrix::photon_mixture(0.5)?),
        (
            "superposition",
            WeightMatrix::photon_superposition(C64::new(s, 0.0), C64::new(s, 0.0))?,
        ),
    ];
    let grid = TimeGrid::new(0.0, 8.0, 1e-3)?;
    for (label, gamma) in inputs {
        let model = MasterModel::new(atom.clone(), FieldSpec::PhotonCombination { gamma, xi: xi.clone() })?;
        let mut rows = Vec::new();
        let mut i = 0;
        model.propagate(model.initial_state(&tl.ground, 0.0)?, &grid, |st| {
            if i % 1000 == 0 {
                let rho = model.combine(st)?;
                rows.push((grid.time(i), rho.expectation(&tl.excited), rho.expectation(&sx)));
            }
            i += 1;
            Ok(())
        })?;
        println!("{label}");
        for (t, pe, x) in rows {
            println!("  t = {t:3.0}  P_e = {pe:.4}  <sigma_x> = {x:+.4}");
        }
    }
    Ok(())
}
