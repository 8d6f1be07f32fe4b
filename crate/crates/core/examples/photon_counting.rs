//! Photon counting downstream of the atom: each trajectory registers the
//! photon exactly once, and the click times follow the output pulse.
//!
//! cargo run --release --example photon_counting

use qtraj::field::{gaussian_wavepacket, FieldSpec};
use qtraj::filter::{FilterModel, MeasurementScheme};
use qtraj::operator::{preset_two_level, Operator};
use qtraj::sde::{run_trajectory, NoiseStream, Observable, Sampling};
use qtraj::slh::SlhTriple;

fn main() -> qtraj::Result<()> {
    let tl = preset_two_level();
    let atom = SlhTriple::new(Operator::identity(2), tl.sigma_minus.clone(), Operator::zeros(2))?;
    let field = FieldSpec::single_photon(gaussian_wavepacket(1.46, 3.0)?);
    let filter = FilterModel::new(atom, field, MeasurementScheme::counting())?;
    let sampling = Sampling::with_steps(0.0, 12.0, 1e-2, 1e-3)?;
    let obs = [Observable::new("P_e", tl.excited.clone())];

    let mut histogram = [0usize; 12];
    let mut totals = Vec::new();
    for i in 0..500 {
        let rec = run_trajectory(&filter, &tl.ground, &sampling, NoiseStream::new(3, i), &obs)?;
        for (n, dy) in rec.d_y.iter().enumerate() {
            if *dy > 0.0 {
                histogram[(sampling.grid.time(n) as usize).min(11)] += 1;
            }
        }
        totals.push(rec.cumulative_record().last().copied().unwrap_or(0.0));
    }
    let mean = totals.iter().sum::<f64>() / totals.len() as f64;
    println!("mean clicks per trajectory: {mean:.4}");
    println!("click-time histogram (unit bins):");
    for (t, n) in histogram.iter().enumerate() {
        println!("  [{t:2}, {:2})  {}", t + 1, "#".repeat(n / 4));
    }
    Ok(())
}
