//! Ground-truth ISTI from ECG and dZ/dt, plus the heart-rate, HRV and
//! breathing features used as comparison baselines.
//!
//! ISTI is measured beat by beat as the delay from an ECG R-peak to the
//! following dZ/dt peak, placed at the R-peak time, then turned into a
//! continuous trace with a natural cubic spline.

use crate::emission::{roi_mean_signal, ThermalClip};
use crate::error::{Error, Result};
use crate::signal::{cubic_interpolate, fir_bandpass, EventSeries, Knots, PeakDetector, Signal};

/// Default ISTI normalization scale in milliseconds.
pub const DEFAULT_ISTI_MAX_MS: f64 = 300.0;

/// Breathing band in Hz.
pub const BREATHING_BAND_HZ: (f64, f64) = (0.1, 0.85);

/// Simultaneous ECG and dZ/dt recordings.
#[derive(Debug, Clone)]
pub struct CardiacPair {
    ecg: Signal,
    dzdt: Signal,
}

impl CardiacPair {
    pub fn new(ecg: Signal, dzdt: Signal) -> Result<Self> {
        let start = ecg.t0_seconds().max(dzdt.t0_seconds());
        let end = ecg.t_end().min(dzdt.t_end());
        if end - start < 2.0 {
            return Err(Error::InvalidArgument(format!(
                "ECG and dZ/dt overlap by {:.3} s, need at least 2 s",
                end - start
            )));
        }
        Ok(CardiacPair { ecg, dzdt })
    }

    pub fn ecg(&self) -> &Signal {
        &self.ecg
    }

    pub fn dzdt(&self) -> &Signal {
        &self.dzdt
    }
}

/// Detector settings for both channels and the pairing window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IstiConfig {
    pub ecg_detector: PeakDetector,
    pub dzdt_detector: PeakDetector,
    /// A dZ/dt peak must follow its R-peak within this many seconds.
    pub max_lag_s: f64,
}

impl Default for IstiConfig {
    fn default() -> Self {
        IstiConfig {
            ecg_detector: PeakDetector::default(),
            dzdt_detector: PeakDetector::default(),
            max_lag_s: 0.5,
        }
    }
}

/// Beat-wise ISTI knots (R-peak time in s, ISTI in ms).
#[derive(Debug, Clone, PartialEq)]
pub struct IstiKnots {
    pub knots: Knots,
    /// R-peaks without a dZ/dt partner inside the lag window.
    pub skipped_beats: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IstiGroundTruth {
    pub knots: Knots,
    /// ISTI in ms at the requested frame times.
    pub continuous: Signal,
    pub skipped_beats: usize,
}

/// Pair each R-peak with the first dZ/dt peak in `(t_r, t_r + max_lag_s]`.
pub fn pair_peaks(r_peaks: &EventSeries, z_peaks: &EventSeries, max_lag_s: f64) -> Result<IstiKnots> {
    if !(max_lag_s > 0.0) {
        return Err(Error::InvalidArgument(format!("max_lag_s must be positive, got {max_lag_s}")));
    }
    let z = z_peaks.times();
    let mut t = Vec::new();
    let mut v = Vec::new();
    let mut skipped = 0;
    for &tr in r_peaks.times() {
        let j = z.partition_point(|&tz| tz <= tr);
        match z.get(j) {
            Some(&tz) if tz - tr <= max_lag_s => {
                t.push(tr);
                v.push((tz - tr) * 1000.0);
            }
            _ => skipped += 1,
        }
    }
    if t.len() < 2 {
        return Err(Error::FewerThanTwoKnots(t.len()));
    }
    Ok(IstiKnots { knots: Knots::new(t, v)?, skipped_beats: skipped })
}

/// Detect peaks on both channels and pair them into ISTI knots.
pub fn compute_isti_knots(pair: &CardiacPair, config: &IstiConfig) -> Result<IstiKnots> {
    let r = config.ecg_detector.detect(&pair.ecg)?;
    if r.is_empty() {
        return Err(Error::NoPeaksDetected("ECG"));
    }
    let z = config.dzdt_detector.detect(&pair.dzdt)?;
    if z.is_empty() {
        return Err(Error::NoPeaksDetected("dZ/dt"));
    }
    pair_peaks(&r, &z, config.max_lag_s)
}

/// Cubic-spline ISTI evaluated on a uniform frame grid.
pub fn isti_continuous(knots: &Knots, frame_times: &[f64]) -> Result<Signal> {
    let values = cubic_interpolate(knots, frame_times)?;
    let (rate, t0) = grid_timing(frame_times)?;
    Signal::new(values, rate, t0)
}

/// Frame grid of `n` frames at `fps` starting at `t0`.
pub fn frame_grid(fps: f64, duration_s: f64, t0: f64) -> Vec<f64> {
    let n = (fps * duration_s).round().max(0.0) as usize;
    (0..n).map(|i| t0 + i as f64 / fps).collect()
}

fn grid_timing(times: &[f64]) -> Result<(f64, f64)> {
    match times {
        [] => Err(Error::EmptySignal(0)),
        [t] => Ok((1.0, *t)),
        [a, b, ..] => {
            let step = b - a;
            if !(step > 0.0) {
                return Err(Error::NonMonotonicKnots(1));
            }
            Ok((1.0 / step, *a))
        }
    }
}

/// Full ground truth: knots, continuous trace at `frame_times`, skip count.
pub fn ground_truth(pair: &CardiacPair, config: &IstiConfig, frame_times: &[f64]) -> Result<IstiGroundTruth> {
    let k = compute_isti_knots(pair, config)?;
    let continuous = isti_continuous(&k.knots, frame_times)?;
    Ok(IstiGroundTruth { knots: k.knots, continuous, skipped_beats: k.skipped_beats })
}

/// `v / max`, clamped to `[0, 1]`.
pub fn normalize_isti(ms: &[f64], isti_max_ms: f64) -> Result<Vec<f64>> {
    if !(isti_max_ms > 0.0) || !isti_max_ms.is_finite() {
        return Err(Error::NonPositiveScale(isti_max_ms));
    }
    Ok(ms.iter().map(|v| (v / isti_max_ms).clamp(0.0, 1.0)).collect())
}

pub fn denormalize_isti(unit: &[f64], isti_max_ms: f64) -> Result<Vec<f64>> {
    if !(isti_max_ms > 0.0) || !isti_max_ms.is_finite() {
        return Err(Error::NonPositiveScale(isti_max_ms));
    }
    Ok(unit.iter().map(|v| v * isti_max_ms).collect())
}

/// Start and end of the recording the events were taken from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordSpan {
    pub start_s: f64,
    pub end_s: f64,
}

impl RecordSpan {
    pub fn new(start_s: f64, end_s: f64) -> Self {
        RecordSpan { start_s, end_s }
    }

    pub fn of(sig: &Signal) -> Self {
        RecordSpan { start_s: sig.t0_seconds(), end_s: sig.t0_seconds() + sig.len() as f64 / sig.sample_rate_hz() }
    }
}

/// Windowed statistic over `[t, t + window)` sliding by `stride`, sampled at
/// the window end.
fn sliding<F>(peaks: &EventSeries, span: RecordSpan, window_s: f64, stride_s: f64, stat: F) -> Result<Signal>
where
    F: Fn(&[f64]) -> f64,
{
    if !(window_s > 0.0) || !(stride_s > 0.0) {
        return Err(Error::InvalidArgument(format!("window {window_s} s, stride {stride_s} s")));
    }
    let record_s = span.end_s - span.start_s;
    if window_s > record_s {
        return Err(Error::WindowLongerThanRecord { window_s, record_s });
    }
    let n = ((record_s - window_s) / stride_s + 1e-9).floor() as usize + 1;
    let times = peaks.times();
    let out = (0..n)
        .map(|k| {
            let start = span.start_s + k as f64 * stride_s;
            let lo = times.partition_point(|&t| t < start);
            let hi = times.partition_point(|&t| t < start + window_s);
            stat(&times[lo..hi])
        })
        .collect();
    Signal::new(out, 1.0 / stride_s, span.start_s + window_s)
}

/// Heart rate in bpm: beats in each window times `60 / window_s`.
pub fn compute_hr(peaks: &EventSeries, span: RecordSpan, window_s: f64, stride_s: f64) -> Result<Signal> {
    sliding(peaks, span, window_s, stride_s, |w| w.len() as f64 * 60.0 / window_s)
}

/// RMSSD of RR intervals in each window, in ms. Windows with fewer than
/// three beats yield 0.
pub fn compute_hrv_rmssd(peaks: &EventSeries, span: RecordSpan, window_s: f64, stride_s: f64) -> Result<Signal> {
    sliding(peaks, span, window_s, stride_s, rmssd_ms)
}

/// RMSSD of the RR intervals between consecutive beat times (seconds in, ms out).
pub fn rmssd_ms(beats: &[f64]) -> f64 {
    if beats.len() < 3 {
        return 0.0;
    }
    let rr: Vec<f64> = beats.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
    let sq: f64 = rr.windows(2).map(|d| (d[1] - d[0]).powi(2)).sum();
    (sq / (rr.len() - 1) as f64).sqrt()
}

/// Per-frame mean raw counts inside a user-supplied rectangle.
pub fn roi_signal(clip: &ThermalClip, roi: [usize; 4]) -> Result<Signal> {
    roi_mean_signal(clip, roi)
}

/// ROI mean band-passed to the breathing band.
pub fn breathing_signal(clip: &ThermalClip, roi: [usize; 4]) -> Result<Signal> {
    let raw = roi_signal(clip, roi)?;
    fir_bandpass(&raw, BREATHING_BAND_HZ.0, BREATHING_BAND_HZ.1)
}
