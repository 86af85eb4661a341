//! Sliding-window heart rate and RMSSD from detected R-peaks.

use stressnet::isti::{compute_hr, compute_hrv_rmssd, RecordSpan};
use stressnet::signal::PeakDetector;
use stressnet::synth::{gen_cardiac, CardiacProfile, RrModulation};

fn main() -> stressnet::Result<()> {
    let steady = CardiacProfile::constant(60.0, 160.0, 3);
    let mut variable = steady.clone();
    variable.rr_modulation = RrModulation { amplitude_s: 0.08, period_s: 5.0 };

    for (name, profile) in [("steady", steady), ("variable", variable)] {
        let (ecg, _, _) = gen_cardiac(&profile)?;
        let peaks = PeakDetector::default().detect(&ecg)?;
        let span = RecordSpan::of(&ecg);
        let hr = compute_hr(&peaks, span, 15.0, 1.0)?;
        let hrv = compute_hrv_rmssd(&peaks, span, 15.0, 1.0)?;
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        println!(
            "{name:>8}: {} R-peaks, HR {:.1} bpm, RMSSD {:.1} ms (mean over {} windows)",
            peaks.len(),
            mean(hr.samples()),
            mean(hrv.samples()),
            hr.len()
        );
    }
    Ok(())
}
