//! Thermal clip preprocessing: crop, temporal derivative, sign-log
//! compression and separable spatio-temporal Gaussian smoothing.
//!
//! A skin pixel's radiance is a large constant (skin emissivity times the
//! black-body term) plus small blood-pulse and motion variations. The forward
//! difference removes the constant, the sign-log compresses outliers while
//! keeping the sign, and the Gaussian removes high-frequency content. The
//! derivative is a plain forward difference in counts per frame; any
//! constant scale is absorbed by the network.

use crate::error::{Error, Result};
use crate::signal::{convolve_replicate, gaussian_kernel, Signal};

/// Raw 16-bit thermal frames stored contiguously, frame-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ThermalClip {
    width: usize,
    height: usize,
    fps: f64,
    t0_seconds: f64,
    data: Vec<u16>,
}

/// Real-valued frames produced by preprocessing.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClip {
    width: usize,
    height: usize,
    fps: f64,
    t0_seconds: f64,
    data: Vec<f64>,
}

fn check_geometry(width: usize, height: usize, fps: f64, len: usize) -> Result<usize> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidArgument(format!("frame size {width}x{height}")));
    }
    if !(fps.is_finite() && fps > 0.0) {
        return Err(Error::InvalidArgument(format!("fps must be positive, got {fps}")));
    }
    let px = width.checked_mul(height).ok_or(Error::DimensionOverflow)?;
    if len % px != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{len} values is not a whole number of {width}x{height} frames"
        )));
    }
    Ok(len / px)
}

macro_rules! clip_accessors {
    ($t:ty, $v:ty) => {
        impl $t {
            pub fn width(&self) -> usize {
                self.width
            }
            pub fn height(&self) -> usize {
                self.height
            }
            pub fn fps(&self) -> f64 {
                self.fps
            }
            pub fn t0_seconds(&self) -> f64 {
                self.t0_seconds
            }
            pub fn frame_len(&self) -> usize {
                self.width * self.height
            }
            pub fn num_frames(&self) -> usize {
                self.data.len() / self.frame_len()
            }
            pub fn frame(&self, i: usize) -> &[$v] {
                let n = self.frame_len();
                &self.data[i * n..(i + 1) * n]
            }
            pub fn frames(&self) -> std::slice::ChunksExact<'_, $v> {
                self.data.chunks_exact(self.frame_len())
            }
            pub fn data(&self) -> &[$v] {
                &self.data
            }
            pub fn frame_time(&self, i: usize) -> f64 {
                self.t0_seconds + i as f64 / self.fps
            }
            pub fn frame_times(&self) -> Vec<f64> {
                (0..self.num_frames()).map(|i| self.frame_time(i)).collect()
            }
        }
    };
}

clip_accessors!(ThermalClip, u16);
clip_accessors!(FeatureClip, f64);

impl ThermalClip {
    pub fn new(width: usize, height: usize, fps: f64, t0_seconds: f64, data: Vec<u16>) -> Result<Self> {
        check_geometry(width, height, fps, data.len())?;
        Ok(ThermalClip { width, height, fps, t0_seconds, data })
    }

    pub fn from_frames(width: usize, height: usize, fps: f64, frames: &[Vec<u16>]) -> Result<Self> {
        let mut data = Vec::with_capacity(frames.len() * width * height);
        for f in frames {
            if f.len() != width * height {
                return Err(Error::ShapeMismatch(format!(
                    "frame of {} values, expected {}",
                    f.len(),
                    width * height
                )));
            }
            data.extend_from_slice(f);
        }
        ThermalClip::new(width, height, fps, 0.0, data)
    }

    /// Clip starting `k` frames later.
    pub fn skip_frames(&self, k: usize) -> ThermalClip {
        let k = k.min(self.num_frames());
        ThermalClip {
            t0_seconds: self.frame_time(k),
            data: self.data[k * self.frame_len()..].to_vec(),
            ..*self
        }
    }

    /// Counts converted to reals, no other processing.
    pub fn to_features(&self) -> FeatureClip {
        FeatureClip {
            width: self.width,
            height: self.height,
            fps: self.fps,
            t0_seconds: self.t0_seconds,
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

impl FeatureClip {
    pub fn new(width: usize, height: usize, fps: f64, t0_seconds: f64, data: Vec<f64>) -> Result<Self> {
        check_geometry(width, height, fps, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput);
        }
        Ok(FeatureClip { width, height, fps, t0_seconds, data })
    }

    fn with_data(&self, data: Vec<f64>) -> FeatureClip {
        FeatureClip { data, ..*self }
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }
}

/// `x0, y0, w, h` rectangle centered in a `width x height` frame.
pub fn centered_rect(width: usize, height: usize, w: usize, h: usize) -> [usize; 4] {
    [width.saturating_sub(w) / 2, height.saturating_sub(h) / 2, w, h]
}

pub fn crop(clip: &ThermalClip, x0: usize, y0: usize, w: usize, h: usize) -> Result<ThermalClip> {
    let inside = w > 0
        && h > 0
        && x0.checked_add(w).is_some_and(|r| r <= clip.width)
        && y0.checked_add(h).is_some_and(|b| b <= clip.height);
    if !inside {
        return Err(Error::RectOutOfBounds([x0, y0, w, h]));
    }
    let mut data = Vec::with_capacity(clip.num_frames() * w * h);
    for frame in clip.frames() {
        for y in y0..y0 + h {
            let row = y * clip.width;
            data.extend_from_slice(&frame[row + x0..row + x0 + w]);
        }
    }
    Ok(ThermalClip { width: w, height: h, data, ..*clip })
}

/// Forward difference `W[t+1] - W[t]`, stamped with the time of frame `t`.
pub fn temporal_derivative(clip: &ThermalClip) -> Result<FeatureClip> {
    let n = clip.num_frames();
    if n < 2 {
        return Err(Error::TooFewFrames { need: 2, got: n });
    }
    let px = clip.frame_len();
    let data = clip.data[..(n - 1) * px]
        .iter()
        .zip(&clip.data[px..])
        .map(|(&a, &b)| b as f64 - a as f64)
        .collect();
    Ok(FeatureClip {
        width: clip.width,
        height: clip.height,
        fps: clip.fps,
        t0_seconds: clip.t0_seconds,
        data,
    })
}

/// `sign(x) * ln(1 + |x|)`.
pub fn sign_log_value(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().ln_1p()
    }
}

pub fn sign_log(fc: &FeatureClip) -> Result<FeatureClip> {
    if fc.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput);
    }
    Ok(fc.with_data(fc.data.iter().map(|&v| sign_log_value(v)).collect()))
}

/// Separable Gaussian: rows, then columns (`sigma_spatial` pixels), then
/// the frame axis (`sigma_temporal` frames). Replicate padding throughout.
pub fn spatiotemporal_gaussian(fc: &FeatureClip, sigma_spatial: f64, sigma_temporal: f64) -> Result<FeatureClip> {
    let ks = gaussian_kernel(sigma_spatial)?;
    let kt = gaussian_kernel(sigma_temporal)?;
    let (w, h, t) = (fc.width, fc.height, fc.num_frames());
    let px = w * h;
    let mut data = fc.data.clone();

    let mut line = vec![0.0; w.max(h).max(t)];
    let mut out = vec![0.0; w.max(h).max(t)];
    for f in 0..t {
        let frame = &mut data[f * px..(f + 1) * px];
        for y in 0..h {
            let row = &mut frame[y * w..(y + 1) * w];
            line[..w].copy_from_slice(row);
            convolve_replicate(&line[..w], &ks, &mut out[..w]);
            row.copy_from_slice(&out[..w]);
        }
        for x in 0..w {
            for y in 0..h {
                line[y] = frame[y * w + x];
            }
            convolve_replicate(&line[..h], &ks, &mut out[..h]);
            for y in 0..h {
                frame[y * w + x] = out[y];
            }
        }
    }
    for p in 0..px {
        for f in 0..t {
            line[f] = data[f * px + p];
        }
        convolve_replicate(&line[..t], &kt, &mut out[..t]);
        for f in 0..t {
            data[f * px + p] = out[f];
        }
    }
    Ok(fc.with_data(data))
}

/// Stage switches and parameters for [`preprocess`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionConfig {
    /// `x0, y0, w, h`; `None` keeps the full frame.
    pub crop: Option<[usize; 4]>,
    pub derivative: bool,
    pub signlog: bool,
    pub gaussian: bool,
    pub sigma_spatial: f64,
    pub sigma_temporal: f64,
}

impl Default for EmissionConfig {
    fn default() -> Self {
        EmissionConfig {
            crop: None,
            derivative: true,
            signlog: true,
            gaussian: true,
            sigma_spatial: 3.0,
            sigma_temporal: 4.0,
        }
    }
}

impl EmissionConfig {
    /// Everything off: raw counts as reals (after the optional crop).
    pub fn raw() -> Self {
        EmissionConfig { derivative: false, signlog: false, gaussian: false, ..Default::default() }
    }
}

/// crop -> temporal derivative -> sign-log -> spatio-temporal Gaussian,
/// each stage switchable.
pub fn preprocess(clip: &ThermalClip, config: &EmissionConfig) -> Result<FeatureClip> {
    let cropped;
    let clip = match config.crop {
        Some([x0, y0, w, h]) => {
            cropped = crop(clip, x0, y0, w, h)?;
            &cropped
        }
        None => clip,
    };
    let mut fc = if config.derivative { temporal_derivative(clip)? } else { clip.to_features() };
    if config.signlog {
        fc = sign_log(&fc)?;
    }
    if config.gaussian {
        fc = spatiotemporal_gaussian(&fc, config.sigma_spatial, config.sigma_temporal)?;
    }
    Ok(fc)
}

/// Per-frame mean of raw counts inside `roi = [x0, y0, w, h]`.
pub fn roi_mean_signal(clip: &ThermalClip, roi: [usize; 4]) -> Result<Signal> {
    let [x0, y0, w, h] = roi;
    let inside = w > 0
        && h > 0
        && x0.checked_add(w).is_some_and(|r| r <= clip.width)
        && y0.checked_add(h).is_some_and(|b| b <= clip.height);
    if !inside {
        return Err(Error::RoiOutOfBounds(roi));
    }
    let area = (w * h) as f64;
    let means = clip
        .frames()
        .map(|f| {
            let mut sum = 0u64;
            for y in y0..y0 + h {
                sum += f[y * clip.width + x0..y * clip.width + x0 + w].iter().map(|&v| v as u64).sum::<u64>();
            }
            sum as f64 / area
        })
        .collect();
    Signal::new(means, clip.fps, clip.t0_seconds)
}
