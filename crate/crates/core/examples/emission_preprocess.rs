//! Render a synthetic thermal clip and run it through the preprocessing
//! stages one at a time.

use stressnet::emission::{preprocess, sign_log, spatiotemporal_gaussian, temporal_derivative, FeatureClip};
use stressnet::synth::{gen_thermal, CardiacProfile, EmissionProfile};

fn describe(name: &str, fc: &FeatureClip) {
    let d = fc.data();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let rms = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d.len() as f64).sqrt();
    let peak = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    println!("{name:<12} {:>4} frames  mean {mean:>10.4}  rms {rms:>9.4}  |max| {peak:>10.4}", fc.num_frames());
}

fn main() -> stressnet::Result<()> {
    let cardiac = CardiacProfile::constant(12.0, 150.0, 5);
    let emission = EmissionProfile::face(32, 32, 15.0, 5);
    let (clip, _) = gen_thermal(&emission, &cardiac)?;
    println!("clip {}x{}, {} frames at {} fps", clip.width(), clip.height(), clip.num_frames(), clip.fps());

    describe("raw counts", &clip.to_features());
    let d = temporal_derivative(&clip)?;
    describe("derivative", &d);
    let s = sign_log(&d)?;
    describe("sign-log", &s);
    let g = spatiotemporal_gaussian(&s, 3.0, 4.0)?;
    describe("smoothed", &g);

    let all = preprocess(&clip, &Default::default())?;
    assert_eq!(all.data(), g.data());
    println!("preprocess() matches the staged result");
    Ok(())
}
