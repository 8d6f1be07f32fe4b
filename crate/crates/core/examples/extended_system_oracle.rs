//! Cross-checks the photon and cat hierarchies against an ancilla-extended
//! vacuum master equation.
//!
//! cargo run --release --example extended_system_oracle

use qtraj::field::{gaussian_wavepacket, CoherentAmplitudes, FieldSpec, Profile, WeightMatrix};
use qtraj::master::{oracle_check, MasterModel};
use qtraj::operator::{preset_two_level, Operator, C64};
use qtraj::sde::TimeGrid;
use qtraj::slh::SlhTriple;

fn main() -> qtraj::Result<()> {
    let tl = preset_two_level();
    let atom = SlhTriple::new(
        Operator::identity(2),
        tl.sigma_minus.scale_real(0.9),
        tl.excited.scale_real(0.4),
    )?;
    let grid = TimeGrid::new(0.0, 8.0, 1e-3)?;

    let photon = FieldSpec::PhotonCombination {
        gamma: WeightMatrix::photon_superposition(C64::new(0.8, 0.0), C64::new(0.0, 0.6))?,
        xi: gaussian_wavepacket(1.46, 3.0)?,
    };
    let amps = CoherentAmplitudes::new(vec![
        Profile::gaussian(1.46, 3.0, C64::new(0.9, 0.0))?,
        Profile::gaussian(1.46, 3.0, C64::new(0.0, 0.9))?,
    ])?;
    let gram = amps.gram()?;
    let cat = FieldSpec::CoherentCombination {
        gamma: WeightMatrix::cat_superposition(&[C64::new(1.0, 0.0), C64::new(0.5, -0.5)], &gram)?,
        amps,
    };

    for (label, field) in [("photon superposition", photon), ("two-amplitude cat", cat)] {
        let report = oracle_check(&MasterModel::new(atom.clone(), field)?, &tl.ground, &grid)?;
        println!("{label}: max deviation {:.2e}", report.overall());
        for (b, dev) in report.max_deviation.iter().enumerate() {
            let (j, k) = (b / report.n, b % report.n);
            match report.invalid_from[b] {
                Some(t) => println!("  block {j}{k}: {dev:.2e} (oracle undefined from t = {t:.3})"),
                None => println!("  block {j}{k}: {dev:.2e}"),
            }
        }
    }
    Ok(())
}
