//! Excitation of a two-level atom by a Gaussian single-photon wavepacket.
//!
//! cargo run --release --example single_photon_excitation

use qtraj::field::{gaussian_wavepacket, FieldSpec};
use qtraj::master::MasterModel;
use qtraj::operator::{preset_two_level, Operator};
use qtraj::sde::TimeGrid;
use qtraj::slh::SlhTriple;

fn main() -> qtraj::Result<()> {
    let tl = preset_two_level();
    let atom = SlhTriple::new(Operator::identity(2), tl.sigma_minus.clone(), Operator::zeros(2))?;
    let grid = TimeGrid::new(0.0, 8.0, 1e-3)?;

    println!("{:>6} {:>10} {:>10}", "omega", "peak P_e", "at t");
    for omega in [0.5, 1.0, 1.46, 2.0, 3.0] {
        let xi = gaussian_wavepacket(omega, 3.0)?;
        let model = MasterModel::new(atom.clone(), FieldSpec::single_photon(xi))?;
        let (mut peak, mut t_peak, mut i) = (0.0, 0.0, 0);
        model.propagate(model.initial_state(&tl.ground, 0.0)?, &grid, |s| {
            let pe = model.combine(s)?.expectation(&tl.excited);
            if pe > peak {
                peak = pe;
                t_peak = grid.time(i);
            }
            i += 1;
            Ok(())
        })?;
        println!("{omega:>6.2} {peak:>10.4} {t_peak:>10.3}");
    }
    Ok(())
}
