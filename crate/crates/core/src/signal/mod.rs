//! Uniform time-series primitives shared by every pipeline stage.

mod filter;
mod peaks;
mod spline;

pub(crate) use filter::convolve_replicate;
pub use filter::{fir_bandpass, fir_bandpass_taps, gaussian_kernel, gaussian_smooth_1d};
pub use peaks::{detect_peaks, PeakDetector, Threshold};
pub use spline::{cubic_interpolate, CubicSpline};

use crate::error::{Error, Result};

/// Uniformly sampled real-valued series. Sample `i` sits at `t0 + i / rate`.
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    samples: Vec<f64>,
    sample_rate_hz: f64,
    t0_seconds: f64,
}

impl Signal {
    pub fn new(samples: Vec<f64>, sample_rate_hz: f64, t0_seconds: f64) -> Result<Self> {
        if !(sample_rate_hz.is_finite() && sample_rate_hz > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if !t0_seconds.is_finite() || samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(Signal { samples, sample_rate_hz, t0_seconds })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn t0_seconds(&self) -> f64 {
        self.t0_seconds
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.t0_seconds + i as f64 / self.sample_rate_hz
    }

    /// Time of the last sample (equals `t0` for a single sample).
    pub fn t_end(&self) -> f64 {
        self.time_at(self.len().saturating_sub(1))
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time_at(i)).collect()
    }

    /// Same timing, new values.
    pub fn with_samples(&self, samples: Vec<f64>) -> Result<Signal> {
        Signal::new(samples, self.sample_rate_hz, self.t0_seconds)
    }

    /// Linear interpolation at an arbitrary time, clamped to the end samples.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        let n = self.samples.len();
        if n == 0 {
            return None;
        }
        let pos = (t - self.t0_seconds) * self.sample_rate_hz;
        if pos <= 0.0 {
            return Some(self.samples[0]);
        }
        if pos >= (n - 1) as f64 {
            return Some(self.samples[n - 1]);
        }
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        Some(self.samples[i] + frac * (self.samples[i + 1] - self.samples[i]))
    }
}

/// Strictly increasing event timestamps in seconds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct EventSeries {
    times_s: Vec<f64>,
}

impl EventSeries {
    pub fn new(times_s: Vec<f64>) -> Result<Self> {
        if times_s.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(i) = times_s.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicKnots(i + 1));
        }
        Ok(EventSeries { times_s })
    }

    pub fn empty() -> Self {
        EventSeries::default()
    }

    pub fn times(&self) -> &[f64] {
        &self.times_s
    }

    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Every timestamp moved by `dt` seconds.
    pub fn shifted(&self, dt: f64) -> EventSeries {
        EventSeries { times_s: self.times_s.iter().map(|t| t + dt).collect() }
    }
}

/// Sample points `(t, v)` with strictly increasing `t`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Knots {
    t: Vec<f64>,
    v: Vec<f64>,
}

impl Knots {
    pub fn new(t: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if t.len() != v.len() {
            return Err(Error::LengthMismatch(t.len(), v.len()));
        }
        if t.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        if let Some(i) = t.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::NonMonotonicKnots(i + 1));
        }
        Ok(Knots { t, v })
    }

    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Knots::new(pairs.iter().map(|p| p.0).collect(), pairs.iter().map(|p| p.1).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.v
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.t.iter().copied().zip(self.v.iter().copied())
    }
}

/// Linear interpolation of `sig` at `n` equally spaced times spanning
/// its first and last sample.
pub fn resample_fixed(sig: &Signal, n: usize) -> Result<Vec<f64>> {
    if sig.is_empty() {
        return Err(Error::EmptySignal(0));
    }
    if n < 2 {
        return Err(Error::InvalidArgument(format!("resample length must be >= 2, got {n}")));
    }
    let src = sig.samples();
    let last = (src.len() - 1) as f64;
    Ok((0..n)
        .map(|j| {
            let pos = last * j as f64 / (n - 1) as f64;
            let i = (pos.floor() as usize).min(src.len() - 1);
            if i + 1 >= src.len() {
                src[i]
            } else {
                let frac = pos - i as f64;
                src[i] + frac * (src[i + 1] - src[i])
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_rejects_bad_rate_and_nan() {
        assert!(Signal::new(vec![1.0], 0.0, 0.0).is_err());
        assert!(matches!(Signal::new(vec![f64::NAN], 1.0, 0.0), Err(Error::NonFiniteInput)));
    }

    #[test]
    fn event_series_must_increase() {
        assert!(EventSeries::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(EventSeries::new(vec![0.0, 1.0, 2.0]).is_ok());
    }

    #[test]
    fn resample_midpoint() {
        let s = Signal::new(vec![0.0, 2.0], 1.0, 0.0).unwrap();
        assert_eq!(resample_fixed(&s, 3).unwrap(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn resample_constant() {
        let s = Signal::new(vec![4.5; 17], 3.0, 1.0).unwrap();
        assert!(resample_fixed(&s, 40).unwrap().iter().all(|&v| v == 4.5));
    }

    #[test]
    fn resample_identity_round_trip() {
        let vals: Vec<f64> = (0..128).map(|i| ((i * 37 % 101) as f64).sin()).collect();
        let s = Signal::new(vals.clone(), 15.0, 0.0).unwrap();
        let out = resample_fixed(&s, vals.len()).unwrap();
        for (a, b) in out.iter().zip(&vals) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn resample_errors() {
        let s = Signal::new(vec![], 1.0, 0.0).unwrap();
        assert!(matches!(resample_fixed(&s, 4), Err(Error::EmptySignal(_))));
        let s = Signal::new(vec![1.0, 2.0], 1.0, 0.0).unwrap();
        assert!(resample_fixed(&s, 1).is_err());
    }

    #[test]
    fn value_at_clamps_and_interpolates() {
        let s = Signal::new(vec![0.0, 10.0, 20.0], 2.0, 1.0).unwrap();
        assert_eq!(s.value_at(0.0), Some(0.0));
        assert_eq!(s.value_at(1.25), Some(5.0));
        assert_eq!(s.value_at(9.0), Some(20.0));
    }
}
