//! A two-level atom driven by an even cat state |α⟩ + |-α⟩ versus the
//! corresponding mixture, unconditionally and under homodyne detection.
//!
//! cargo run --release --example cat_state_drive

use qtraj::field::{CoherentAmplitudes, FieldSpec, Profile, WeightMatrix};
use qtraj::filter::{FilterModel, MeasurementScheme};
use qtraj::master::MasterModel;
use qtraj::operator::{preset_two_level, Operator, C64, ONE};
use qtraj::sde::{run_ensemble, EnsembleConfig, Observable, Sampling};
use qtraj::slh::SlhTriple;

fn main() -> qtraj::Result<()> {
    let tl = preset_two_level();
    let atom = SlhTriple::new(Operator::identity(2), tl.sigma_minus.clone(), Operator::zeros(2))?;
    let alpha = C64::new(1.2, 0.0);
    let amps = CoherentAmplitudes::new(vec![
        Profile::gaussian(1.46, 3.0, alpha)?,
        Profile::gaussian(1.46, 3.0, -alpha)?,
    ])?;
    let gram = amps.gram()?;
    println!("overlap <a|-a> = {:.4}", gram.get(0, 1).re);

    let cases = [
        ("even cat", WeightMatrix::cat_superposition(&[ONE, ONE], &gram)?),
        ("mixture", WeightMatrix::cat_mixture(&[0.5, 0.5], &gram)?),
    ];
    let sampling = Sampling::with_steps(0.0, 8.0, 1.0, 1e-3)?;
    let obs = [Observable::new("P_e", tl.excited.clone())];
    for (label, gamma) in cases {
        let field = FieldSpec::CoherentCombination {
            gamma,
            amps: amps.clone(),
        };
        let master = MasterModel::new(atom.clone(), field.clone())?;
        let mut pe = Vec::new();
        let mut i = 0;
        master.propagate(
            master.initial_state(&tl.ground, 0.0)?,
            &sampling.grid.refine(1000)?,
            |s| {
                if i % 1000 == 0 {
                    pe.push(master.combine(s)?.expectation(&tl.excited));
                }
                i += 1;
                Ok(())
            },
        )?;
        let filter = FilterModel::new(atom.clone(), field, MeasurementScheme::Homodyne)?;
        let config = EnsembleConfig {
            seed: 11,
            trajectories: 100,
            parallelism: 4,
        };
        let summary = run_ensemble(&filter, &tl.ground, &sampling, config, &obs, |_| Ok(()))?;
        let mean = &summary.observables[0].mean;
        println!("{label}");
        for (n, p) in pe.iter().enumerate() {
            println!("  t = {n}  master P_e = {p:.4}  filter mean = {:.4}", mean[n]);
        }
    }
    Ok(())
}
