use super::{EventSeries, Signal};
use crate::error::{Error, Result};

/// How the amplitude threshold for a peak is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Fixed level in signal units.
    Absolute(f64),
    /// `mean + k * stddev` of the whole signal.
    Adaptive(f64),
}

/// Peak detector settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakDetector {
    pub threshold: Threshold,
    pub min_distance_s: f64,
}

impl Default for PeakDetector {
    fn default() -> Self {
        PeakDetector { threshold: Threshold::Adaptive(2.0), min_distance_s: 0.3 }
    }
}

impl PeakDetector {
    pub fn detect(&self, sig: &Signal) -> Result<EventSeries> {
        detect_peaks(sig, self.threshold, self.min_distance_s)
    }
}

/// Local maxima strictly above the threshold and their neighbours, pruned greedily by amplitude so
/// that surviving peaks are at least `min_distance_s` apart. Peak times are
/// refined to sub-sample precision with a three-point parabola.
pub fn detect_peaks(sig: &Signal, threshold: Threshold, min_distance_s: f64) -> Result<EventSeries> {
    let x = sig.samples();
    if x.len() < 3 {
        return Err(Error::EmptySignal(x.len()));
    }
    if !(min_distance_s >= 0.0) || !min_distance_s.is_finite() {
        return Err(Error::InvalidArgument(format!("min_distance_s = {min_distance_s}")));
    }
    let level = match threshold {
        Threshold::Absolute(theta) => theta,
        Threshold::Adaptive(k) => {
            let n = x.len() as f64;
            let mean = x.iter().sum::<f64>() / n;
            let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            mean + k * var.sqrt()
        }
    };
    if !level.is_finite() {
        return Err(Error::NonFiniteInput);
    }

    // (refined time, amplitude, sample index)
    // Flat tops (equal neighbouring samples) count once, at their midpoint.
    let mut candidates: Vec<(f64, f64, usize)> = Vec::new();
    let mut i = 1;
    while i < x.len() - 1 {
        if x[i] > x[i - 1] && x[i] > level {
            let mut j = i;
            while j + 1 < x.len() && x[j + 1] == x[i] {
                j += 1;
            }
            if j + 1 < x.len() && x[j + 1] < x[i] {
                let pos = if j == i {
                    let (a, b, c) = (x[i - 1], x[i], x[i + 1]);
                    let denom = a - 2.0 * b + c;
                    i as f64 + if denom != 0.0 { 0.5 * (a - c) / denom } else { 0.0 }
                } else {
                    (i + j) as f64 / 2.0
                };
                candidates.push((
                    sig.t0_seconds() + pos / sig.sample_rate_hz(),
                    x[i],
                    i,
                ));
            }
            i = j + 1;
        } else {
            i += 1;
        }
    }

    // Largest first; ties resolved by position so the result is deterministic.
    candidates.sort_by(|p, q| q.1.total_cmp(&p.1).then(p.2.cmp(&q.2)));
    let mut kept: Vec<f64> = Vec::new();
    for (t, _, _) in candidates {
        if kept.iter().all(|&k| (k - t).abs() >= min_distance_s) {
            kept.push(t);
        }
    }
    kept.sort_by(f64::total_cmp);
    EventSeries::new(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(freq: f64, rate: f64, secs: f64) -> Signal {
        let n = (rate * secs) as usize;
        let v = (0..n).map(|i| (2.0 * PI * freq * i as f64 / rate).sin()).collect();
        Signal::new(v, rate, 0.0).unwrap()
    }

    #[test]
    fn sine_maxima_are_located() {
        let s = sine(1.0, 250.0, 5.0);
        let peaks = detect_peaks(&s, Threshold::Adaptive(1.0), 0.4).unwrap();
        assert_eq!(peaks.len(), 5);
        for (k, t) in peaks.times().iter().enumerate() {
            assert!((t - (0.25 + k as f64)).abs() < 1.0 / 250.0, "peak {k} at {t}");
        }
    }

    #[test]
    fn constant_signal_has_no_peaks() {
        let s = Signal::new(vec![3.0; 100], 10.0, 0.0).unwrap();
        assert!(detect_peaks(&s, Threshold::Absolute(-1.0), 0.0).unwrap().is_empty());
    }

    #[test]
    fn close_bumps_keep_the_taller() {
        let rate = 250.0;
        let v: Vec<f64> = (0..500)
            .map(|i| {
                let t = i as f64 / rate;
                let g = |c: f64, a: f64| a * (-(t - c).powi(2) / (2.0 * 0.01f64.powi(2))).exp();
                g(1.0, 0.8) + g(1.1, 1.0)
            })
            .collect();
        let s = Signal::new(v, rate, 0.0).unwrap();
        let peaks = detect_peaks(&s, Threshold::Absolute(0.1), 0.4).unwrap();
        assert_eq!(peaks.len(), 1);
        assert!((peaks.times()[0] - 1.1).abs() < 1.0 / rate);
        // Without the distance constraint both survive.
        assert_eq!(detect_peaks(&s, Threshold::Absolute(0.1), 0.0).unwrap().len(), 2);
    }

    #[test]
    fn too_short_is_an_error() {
        let s = Signal::new(vec![0.0, 1.0], 10.0, 0.0).unwrap();
        assert!(matches!(detect_peaks(&s, Threshold::Adaptive(1.0), 0.1), Err(Error::EmptySignal(2))));
    }

    #[test]
    fn parabola_refinement_is_subsample() {
        // Peak of a sampled parabola lies between samples.
        let rate = 10.0;
        let v: Vec<f64> = (0..20).map(|i| -(i as f64 / rate - 1.03).powi(2)).collect();
        let s = Signal::new(v, rate, 0.0).unwrap();
        let p = detect_peaks(&s, Threshold::Absolute(-1.0), 0.0).unwrap();
        assert!((p.times()[0] - 1.03).abs() < 1e-12);
    }
}
