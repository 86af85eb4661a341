use std::f64::consts::PI;

use super::Signal;
use crate::error::{Error, Result};

/// Seconds of signal spanned by the band-pass kernel.
const FIR_SPAN_SECONDS: usize = 8;

/// Hamming-windowed sinc band-pass kernel with `8 * ceil(rate) + 1` taps.
///
/// Built as the difference of two low-pass prototypes, each normalized to
/// unit DC gain, so the band-pass rejects DC exactly.
pub fn fir_bandpass_taps(rate_hz: f64, low_hz: f64, high_hz: f64) -> Result<Vec<f64>> {
    let valid = rate_hz.is_finite()
        && low_hz.is_finite()
        && high_hz.is_finite()
        && 0.0 < low_hz
        && low_hz < high_hz
        && high_hz < rate_hz / 2.0;
    if !valid {
        return Err(Error::InvalidBand { low_hz, high_hz, rate_hz });
    }
    let n = FIR_SPAN_SECONDS * rate_hz.ceil() as usize + 1;
    let mid = (n - 1) as f64 / 2.0;
    let window: Vec<f64> =
        (0..n).map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (n - 1) as f64).cos()).collect();
    let lowpass = |cutoff_hz: f64| -> Vec<f64> {
        let fc = cutoff_hz / rate_hz;
        let mut h: Vec<f64> = (0..n)
            .map(|i| {
                let m = i as f64 - mid;
                let sinc = if m == 0.0 { 2.0 * fc } else { (2.0 * PI * fc * m).sin() / (PI * m) };
                sinc * window[i]
            })
            .collect();
        let sum: f64 = h.iter().sum();
        h.iter_mut().for_each(|v| *v /= sum);
        h
    };
    let hi = lowpass(high_hz);
    let lo = lowpass(low_hz);
    Ok(hi.iter().zip(&lo).map(|(a, b)| a - b).collect())
}

/// Zero-phase application of the windowed-sinc band-pass with replicate
/// padding; the output has the input's length and timing.
pub fn fir_bandpass(sig: &Signal, low_hz: f64, high_hz: f64) -> Result<Signal> {
    let taps = fir_bandpass_taps(sig.sample_rate_hz(), low_hz, high_hz)?;
    let x = sig.samples();
    if x.len() < taps.len() {
        return Err(Error::SignalTooShort { len: x.len(), taps: taps.len() });
    }
    let half = (taps.len() / 2) as isize;
    let last = x.len() as isize - 1;
    let out = (0..x.len() as isize)
        .map(|i| {
            taps.iter()
                .enumerate()
                .map(|(k, h)| h * x[(i + k as isize - half).clamp(0, last) as usize])
                .sum()
        })
        .collect();
    sig.with_samples(out)
}

/// Discrete Gaussian truncated at `±ceil(3 sigma)` and normalized to sum 1.
pub fn gaussian_kernel(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::NonPositiveSigma(sigma));
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> =
        (-r..=r).map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp()).collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Gaussian smoothing with replicate padding; output length equals input length.
pub fn gaussian_smooth_1d(values: &[f64], sigma: f64) -> Result<Vec<f64>> {
    let kernel = gaussian_kernel(sigma)?;
    let mut out = vec![0.0; values.len()];
    convolve_replicate(values, &kernel, &mut out);
    Ok(out)
}

/// Centered convolution with an odd-length symmetric kernel, replicate
/// padding, fixed left-to-right summation order.
pub(crate) fn convolve_replicate(values: &[f64], kernel: &[f64], out: &mut [f64]) {
    if values.is_empty() {
        return;
    }
    let r = (kernel.len() / 2) as isize;
    let last = values.len() as isize - 1;
    for (i, o) in out.iter_mut().enumerate() {
        let i = i as isize;
        let mut acc = 0.0;
        for (k, w) in kernel.iter().enumerate() {
            acc += w * values[(i + k as isize - r).clamp(0, last) as usize];
        }
        *o = acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, rate: f64, secs: f64, amp: f64, offset: f64) -> Signal {
        let n = (rate * secs) as usize;
        let v = (0..n).map(|i| offset + amp * (2.0 * PI * freq * i as f64 / rate).sin()).collect();
        Signal::new(v, rate, 0.0).unwrap()
    }

    fn interior_peak(sig: &Signal, skip: usize) -> f64 {
        let s = sig.samples();
        s[skip..s.len() - skip].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    #[test]
    fn passband_tone_preserved() {
        let s = tone(0.4, 15.0, 60.0, 1.0, 0.0);
        let f = fir_bandpass(&s, 0.1, 0.85).unwrap();
        let taps = fir_bandpass_taps(15.0, 0.1, 0.85).unwrap().len();
        let amp = interior_peak(&f, taps);
        assert!((amp - 1.0).abs() < 0.05, "gain {amp}");
    }

    #[test]
    fn dc_rejected() {
        let s = Signal::new(vec![7.0; 400], 15.0, 0.0).unwrap();
        let f = fir_bandpass(&s, 0.1, 0.85).unwrap();
        assert!(f.samples().iter().all(|v| v.abs() < 0.01 * 7.0));
    }

    #[test]
    fn zero_in_zero_out() {
        let s = Signal::new(vec![0.0; 200], 15.0, 0.0).unwrap();
        assert!(fir_bandpass(&s, 0.1, 0.85).unwrap().samples().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn band_validation() {
        let s = Signal::new(vec![0.0; 500], 15.0, 0.0).unwrap();
        assert!(matches!(fir_bandpass(&s, 0.9, 0.2), Err(Error::InvalidBand { .. })));
        assert!(matches!(fir_bandpass(&s, 0.1, 7.5), Err(Error::InvalidBand { .. })));
        let short = Signal::new(vec![0.0; 50], 15.0, 0.0).unwrap();
        assert!(matches!(fir_bandpass(&short, 0.1, 0.85), Err(Error::SignalTooShort { .. })));
    }

    #[test]
    fn kernel_is_odd_and_normalized() {
        let k = gaussian_kernel(1.3).unwrap();
        assert_eq!(k.len(), 2 * 4 + 1);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(gaussian_kernel(0.0).is_err());
    }

    #[test]
    fn smoothing_preserves_constants() {
        let out = gaussian_smooth_1d(&[5.0; 5], 2.0).unwrap();
        for v in out {
            assert!((v - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn impulse_response_symmetric() {
        let mut x = vec![0.0; 21];
        x[10] = 1.0;
        let y = gaussian_smooth_1d(&x, 1.0).unwrap();
        assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..10 {
            assert_eq!(y[10 - i], y[10 + i]);
        }
    }
}
