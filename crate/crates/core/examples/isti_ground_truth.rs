//! Recover beat-wise ISTI from synthetic ECG and dZ/dt, then spline it
//! onto a 15 fps frame grid.

use stressnet::isti::{compute_isti_knots, frame_grid, isti_continuous, CardiacPair, IstiConfig};
use stressnet::metrics::pearson;
use stressnet::signal::Knots;
use stressnet::synth::{gen_cardiac, programmed_isti, CardiacProfile};

fn main() -> stressnet::Result<()> {
    let mut profile = CardiacProfile::constant(40.0, 160.0, 1);
    // ISTI falls from 170 ms to 120 ms and partially recovers.
    profile.isti_trajectory = Knots::new(vec![0.0, 15.0, 25.0, 40.0], vec![170.0, 125.0, 120.0, 150.0])?;

    let (ecg, dzdt, truth) = gen_cardiac(&profile)?;
    let found = compute_isti_knots(&CardiacPair::new(ecg, dzdt)?, &IstiConfig::default())?;
    println!("{} beats paired, {} skipped", found.knots.len(), found.skipped_beats);

    let mut worst: f64 = 0.0;
    for ((t, got), want) in found.knots.pairs().zip(truth.values()) {
        worst = worst.max((got - want).abs());
        if t < 5.0 {
            println!("  beat at {t:6.3} s: {got:7.2} ms (programmed {want:7.2})");
        }
    }
    println!("max beat error {worst:.3} ms");

    let grid = frame_grid(15.0, 36.0, 1.0);
    let trace = isti_continuous(&found.knots, &grid)?;
    let programmed = programmed_isti(&profile.isti_trajectory, &grid)?;
    println!("frame-grid Pearson vs programmed trajectory: {:.5}", pearson(trace.samples(), &programmed)?);
    Ok(())
}
