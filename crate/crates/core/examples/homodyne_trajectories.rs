//! Conditional excitation under homodyne detection of the scattered photon,
//! and the ensemble average against the master equation.
//!
//! cargo run --release --example homodyne_trajectories

use qtraj::field::{gaussian_wavepacket, FieldSpec};
use qtraj::filter::{FilterModel, MeasurementScheme};
use qtraj::master::MasterModel;
use qtraj::operator::{preset_two_level, Operator};
use qtraj::sde::{run_ensemble, run_trajectory, EnsembleConfig, NoiseStream, Observable, Sampling};
use qtraj::slh::SlhTriple;

fn main() -> qtraj::Result<()> {
    let tl = preset_two_level();
    let atom = SlhTriple::new(Operator::identity(2), tl.sigma_minus.clone(), Operator::zeros(2))?;
    let field = FieldSpec::single_photon(gaussian_wavepacket(1.46, 3.0)?);
    let filter = FilterModel::new(atom.clone(), field.clone(), MeasurementScheme::Homodyne)?;
    let sampling = Sampling::with_steps(0.0, 8.0, 0.5, 1e-4)?;
    let obs = [Observable::new("P_e", tl.excited.clone())];

    let paths: Vec<_> = (0..4)
        .map(|i| run_trajectory(&filter, &tl.ground, &sampling, NoiseStream::new(7, i), &obs))
        .collect::<qtraj::Result<_>>()?;
    let config = EnsembleConfig {
        seed: 7,
        trajectories: 200,
        parallelism: 4,
    };
    let summary = run_ensemble(&filter, &tl.ground, &sampling, config, &obs, |_| Ok(()))?;

    let master = MasterModel::new(atom, field)?;
    let mut unconditional = Vec::new();
    let mut step = 0;
    master.propagate(
        master.initial_state(&tl.ground, 0.0)?,
        &sampling.grid.refine(50)?,
        |s| {
            if step % 50 == 0 {
                unconditional.push(master.combine(s)?.expectation(&tl.excited));
            }
            step += 1;
            Ok(())
        },
    )?;

    let pe = summary.observable("P_e").expect("observable");
    let sem = pe.sem.as_ref().expect("N > 1");
    println!("    t   traj0  traj1  traj2  traj3   mean +/- sem      master");
    for i in 0..sampling.grid.len() {
        print!("{:5.1} ", sampling.grid.time(i));
        for p in &paths {
            print!(" {:.3} ", p.observables[0][i]);
        }
        println!(" {:.4} +/- {:.4}   {:.4}", pe.mean[i], sem[i], unconditional[i]);
    }
    Ok(())
}
