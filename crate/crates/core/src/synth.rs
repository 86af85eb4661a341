//! Seeded synthetic data: ECG and dZ/dt with a programmed ISTI trajectory,
//! thermal clips from a linearized emission model, and whole trials with
//! protocol phases.
//!
//! Thermal pixels follow
//! `W = K + E0·eps_b·mask·(p + a1·m + b1·p) + E0·eps_s·a2·m` with
//! `K = 2·E0·eps_s`. `m(t)` is a sinusoidal horizontal translation (pixels)
//! of the face, `p(t)` the pulse. Each beat contributes a raised-cosine
//! bump centred one ISTI after the beat whose height grows with ISTI.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::emission::ThermalClip;
use crate::error::{Error, Result};
use crate::io;
use crate::isti::{frame_grid, isti_continuous};
use crate::signal::{cubic_interpolate, CubicSpline, Knots, Signal};
use crate::stress::{phase_layout, Label, Phase, PhaseKind};

/// Sinusoidal modulation of the RR interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrModulation {
    pub amplitude_s: f64,
    pub period_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CardiacProfile {
    pub duration_s: f64,
    /// Sampling rate of both channels.
    pub cardiac_rate_hz: f64,
    pub base_rr_s: f64,
    pub rr_modulation: RrModulation,
    /// Programmed ISTI in ms as a function of time.
    pub isti_trajectory: Knots,
    pub r_wave_width_s: f64,
    pub z_wave_width_s: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl CardiacProfile {
    /// 60 bpm with a constant ISTI.
    pub fn constant(duration_s: f64, isti_ms: f64, seed: u64) -> Self {
        CardiacProfile {
            duration_s,
            cardiac_rate_hz: 250.0,
            base_rr_s: 1.0,
            rr_modulation: RrModulation { amplitude_s: 0.0, period_s: 10.0 },
            isti_trajectory: Knots::new(vec![0.0, duration_s.max(1.0)], vec![isti_ms, isti_ms]).expect("two knots"),
            r_wave_width_s: 0.012,
            z_wave_width_s: 0.025,
            noise_std: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.duration_s, self.cardiac_rate_hz, self.base_rr_s, self.r_wave_width_s, self.z_wave_width_s];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidProfile("durations, rates and widths must be positive".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidProfile(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        let m = self.rr_modulation;
        if !(m.period_s > 0.0) || !(m.amplitude_s >= 0.0) || m.amplitude_s >= 0.5 * self.base_rr_s {
            return Err(Error::InvalidProfile("RR modulation must be smaller than half the base RR".into()));
        }
        if let Some(v) = self.isti_trajectory.values().iter().find(|v| !(**v > 0.0 && **v < 500.0)) {
            return Err(Error::InvalidProfile(format!("ISTI {v} ms outside (0, 500)")));
        }
        Ok(())
    }
}

/// Beat times and the programmed ISTI (ms) at each beat. Beats stop early
/// enough that the matching dZ/dt wave is fully inside the record.
pub fn beat_schedule(profile: &CardiacProfile) -> Result<Knots> {
    profile.validate()?;
    let spline = CubicSpline::new(&profile.isti_trajectory)?;
    let m = profile.rr_modulation;
    let tail = 0.5 + 4.0 * profile.z_wave_width_s;
    let mut t = 0.3;
    let (mut times, mut values) = (Vec::new(), Vec::new());
    while t + tail <= profile.duration_s {
        times.push(t);
        values.push(spline.eval(t));
        t += profile.base_rr_s + m.amplitude_s * (2.0 * PI * t / m.period_s).sin();
    }
    if times.len() < 2 {
        return Err(Error::InvalidProfile(format!("{} s holds fewer than two beats", profile.duration_s)));
    }
    Knots::new(times, values)
}

fn bump_train(n: usize, rate: f64, centers: impl Iterator<Item = f64>, width: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    let reach = 5.0 * width;
    for c in centers {
        let lo = ((c - reach) * rate).floor().max(0.0) as usize;
        let hi = (((c + reach) * rate).ceil() as usize).min(n.saturating_sub(1));
        for (i, v) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let d = i as f64 / rate - c;
            *v += (-d * d / (2.0 * width * width)).exp();
        }
    }
    out
}

/// ECG and dZ/dt as Gaussian wave trains plus the programmed truth knots
/// `(beat time, ISTI ms)`.
pub fn gen_cardiac(profile: &CardiacProfile) -> Result<(Signal, Signal, Knots)> {
    let beats = beat_schedule(profile)?;
    let rate = profile.cardiac_rate_hz;
    let n = (profile.duration_s * rate).round() as usize;
    let mut ecg = bump_train(n, rate, beats.times().iter().copied(), profile.r_wave_width_s);
    let mut dzdt = bump_train(n, rate, beats.pairs().map(|(t, v)| t + v / 1000.0), profile.z_wave_width_s);
    if profile.noise_std > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
        let normal = Normal::new(0.0, profile.noise_std).map_err(|e| Error::InvalidProfile(e.to_string()))?;
        ecg.iter_mut().chain(dzdt.iter_mut()).for_each(|v| *v += normal.sample(&mut rng));
    }
    Ok((Signal::new(ecg, rate, 0.0)?, Signal::new(dzdt, rate, 0.0)?, beats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmissionProfile {
    pub width: usize,
    pub height: usize,
    pub fps: f64,
    /// Face weight per pixel in `[0, 1]`, row-major.
    pub face_mask: Vec<f64>,
    /// Black-body emission per pixel, row-major.
    pub e0_field: Vec<f64>,
    /// Pulse arrival delay per pixel in seconds, row-major.
    pub pulse_delay_s: Vec<f64>,
    pub eps_s: f64,
    pub eps_b: f64,
    /// `(a1, b1)`: motion and pulse coefficients of the skin term.
    pub f1_coeffs: (f64, f64),
    /// `a2`: motion coefficient of the surface term.
    pub f2_coeff: f64,
    /// Scale of the blood volume pulse relative to the emission level.
    pub pulse_amplitude: f64,
    pub motion_amplitude_px: f64,
    pub motion_period_s: f64,
    pub motion_phase_rad: f64,
    /// Counts per unit of `W`.
    pub gain: f64,
    pub offset: f64,
    /// Sensor noise in counts.
    pub noise_std_counts: f64,
    /// Instants averaged per frame exposure.
    pub subsamples: usize,
    pub seed: u64,
}

impl EmissionProfile {
    /// Elliptical face on a mildly textured emission field.
    pub fn face(width: usize, height: usize, fps: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xface);
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        let (rx, ry) = (0.38 * width as f64, 0.45 * height as f64);
        let waves: Vec<(f64, f64, f64, f64)> = (0..4)
            .map(|_| {
                (
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.05..0.3),
                    rng.random_range(0.0..2.0 * PI),
                    rng.random_range(0.01..0.03),
                )
            })
            .collect();
        let mut face_mask = Vec::with_capacity(width * height);
        let mut e0_field = Vec::with_capacity(width * height);
        let mut pulse_delay_s = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                let (dx, dy) = ((x as f64 - cx) / rx, (y as f64 - cy) / ry);
                let r = (dx * dx + dy * dy).sqrt();
                // Soft edge about two pixels wide.
                let edge = 2.0 / rx.min(ry);
                face_mask.push(((1.0 - r) / edge + 0.5).clamp(0.0, 1.0));
                let texture: f64 =
                    waves.iter().map(|&(kx, ky, ph, a)| a * (kx * x as f64 + ky * y as f64 + ph).sin()).sum();
                // Skin is warmer than the background.
                let m = *face_mask.last().expect("pushed above");
                e0_field.push(0.85 + 0.15 * m + texture);
                // The pulse reaches the upper left of the face first.
                let diag = ((dx + dy) / 2.0 + 0.5).clamp(0.0, 1.0);
                pulse_delay_s.push(0.4 * diag);
            }
        }
        EmissionProfile {
            width,
            height,
            fps,
            face_mask,
            e0_field,
            pulse_delay_s,
            eps_s: 0.95,
            eps_b: 0.9,
            f1_coeffs: (0.2, 0.2),
            f2_coeff: 0.1,
            pulse_amplitude: 0.2,
            motion_amplitude_px: 0.15,
            motion_period_s: 7.0,
            motion_phase_rad: 0.0,
            gain: 200.0,
            offset: 20000.0,
            noise_std_counts: 1.0,
            subsamples: 16,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let px = self.width * self.height;
        if px == 0 || self.face_mask.len() != px || self.e0_field.len() != px || self.pulse_delay_s.len() != px {
            return Err(Error::InvalidProfile("mask, emission and delay fields must match width x height".into()));
        }
        if self.pulse_delay_s.iter().any(|d| !(0.0..=2.0).contains(d)) {
            return Err(Error::InvalidProfile("pulse delays must lie in [0, 2] s".into()));
        }
        if !(self.fps > 0.0) || !(self.motion_period_s > 0.0) || self.subsamples == 0 {
            return Err(Error::InvalidProfile("fps, motion period and subsamples must be positive".into()));
        }
        if self.face_mask.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidProfile("mask values must lie in [0, 1]".into()));
        }
        for e in [self.eps_s, self.eps_b] {
            if !(e > 0.0 && e <= 1.0) {
                return Err(Error::InvalidProfile(format!("emissivity {e} outside (0, 1]")));
            }
        }
        if !(self.pulse_amplitude >= 0.0) {
            return Err(Error::InvalidProfile("pulse amplitude must be >= 0".into()));
        }
        if !(self.noise_std_counts >= 0.0) || !self.gain.is_finite() || !self.offset.is_finite() {
            return Err(Error::InvalidProfile("gain, offset and noise must be finite".into()));
        }
        Ok(())
    }

    fn motion(&self, t: f64) -> f64 {
        self.motion_amplitude_px * (2.0 * PI * t / self.motion_period_s + self.motion_phase_rad).sin()
    }
}

/// ISTI at which a pulse bump vanishes and the ISTI span per unit height.
pub const PULSE_ZERO_MS: f64 = 80.0;
pub const PULSE_SPAN_MS: f64 = 70.0;
/// Half-width of a pulse bump in seconds.
pub const PULSE_HALF_WIDTH_S: f64 = 0.35;

/// Pulse value at time `t` from beats `(time, ISTI ms)`: a raised-cosine
/// bump centred one ISTI after each beat with height
/// `(ISTI - 80 ms) / 70 ms`, so unit height at 150 ms.
pub fn pulse_at(beats: &Knots, t: f64) -> f64 {
    let h = PULSE_HALF_WIDTH_S;
    let mut p = 0.0;
    for (tb, ms) in beats.pairs() {
        let s = t - (tb + ms / 1000.0);
        if s < -h {
            break;
        }
        if s < h {
            p += (ms - PULSE_ZERO_MS).max(0.0) / PULSE_SPAN_MS * 0.5 * (1.0 + (PI * s / h).cos());
        }
    }
    p
}

/// Bilinear sample of a row-major field shifted right by `shift` pixels,
/// clamped at the borders.
fn shifted_row(field: &[f64], width: usize, y: usize, shift: f64, out: &mut [f64]) {
    let row = &field[y * width..(y + 1) * width];
    let last = (width - 1) as f64;
    for (x, o) in out.iter_mut().enumerate() {
        let sx = (x as f64 - shift).clamp(0.0, last);
        let i = (sx.floor() as usize).min(width - 1);
        let f = sx - i as f64;
        let j = (i + 1).min(width - 1);
        *o = row[i] * (1.0 - f) + row[j] * f;
    }
}

/// Renders a thermal clip for the beats of `cardiac`. Frame `k` averages
/// `subsamples` instants across `[k/fps, (k+1)/fps)`.
pub fn gen_thermal(profile: &EmissionProfile, cardiac: &CardiacProfile) -> Result<(ThermalClip, Knots)> {
    profile.validate()?;
    let beats = beat_schedule(cardiac)?;
    let (w, h) = (profile.width, profile.height);
    let px = w * h;
    let times = frame_grid(profile.fps, cardiac.duration_s, 0.0);
    let (a1, b1) = profile.f1_coeffs;
    let a2 = profile.f2_coeff;
    let skin: Vec<f64> = profile.e0_field.iter().zip(&profile.face_mask).map(|(e, m)| e * m).collect();

    // Pulse sampled at 1 kHz and read back by linear interpolation.
    let trace_rate = 1000.0;
    let trace_t0 = -2.0;
    let n_trace = ((cardiac.duration_s - trace_t0 + 1.0) * trace_rate) as usize;
    let trace: Vec<f64> = (0..n_trace)
        .map(|i| profile.pulse_amplitude * pulse_at(&beats, trace_t0 + i as f64 / trace_rate))
        .collect();
    let pulse = |t: f64| {
        let x = ((t - trace_t0) * trace_rate).clamp(0.0, (n_trace - 1) as f64);
        let i = (x.floor() as usize).min(n_trace - 2);
        let f = x - i as f64;
        trace[i] * (1.0 - f) + trace[i + 1] * f
    };

    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let noise = Normal::new(0.0, profile.noise_std_counts.max(f64::MIN_POSITIVE))
        .map_err(|e| Error::InvalidProfile(e.to_string()))?;
    let mut data = Vec::with_capacity(times.len() * px);
    let mut acc = vec![0.0; px];
    let (mut e0_row, mut skin_row, mut delay_row) = (vec![0.0; w], vec![0.0; w], vec![0.0; w]);
    let mut clipped = 0usize;
    let ns = profile.subsamples;
    for &t in &times {
        acc.iter_mut().for_each(|v| *v = 0.0);
        for s in 0..ns {
            let ts = t + (s as f64 + 0.5) / (ns as f64 * profile.fps);
            let m = profile.motion(ts);
            let surface_term = profile.eps_s * (2.0 + a2 * m);
            for y in 0..h {
                shifted_row(&profile.e0_field, w, y, m, &mut e0_row);
                shifted_row(&skin, w, y, m, &mut skin_row);
                shifted_row(&profile.pulse_delay_s, w, y, m, &mut delay_row);
                for x in 0..w {
                    let p = pulse(ts - delay_row[x]);
                    let skin_term = profile.eps_b * (p + a1 * m + b1 * p);
                    acc[y * w + x] += e0_row[x] * surface_term + skin_row[x] * skin_term;
                }
            }
        }
        for v in &acc {
            let mut counts = profile.gain * v / ns as f64 + profile.offset;
            if profile.noise_std_counts > 0.0 {
                counts += noise.sample(&mut rng);
            }
            let r = counts.round();
            if !(0.0..=65535.0).contains(&r) {
                clipped += 1;
            }
            data.push(r.clamp(0.0, 65535.0) as u16);
        }
    }
    let total = data.len().max(1) as f64;
    if clipped as f64 > 0.01 * total {
        return Err(Error::CountOverflowRisk(100.0 * clipped as f64 / total));
    }
    Ok((ThermalClip::new(w, h, profile.fps, 0.0, data)?, beats))
}

/// Durations of the four protocol phases.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialLayout {
    pub base_s: f64,
    pub prep_s: f64,
    pub immersion_s: f64,
    pub recovery_s: f64,
}

impl Default for TrialLayout {
    fn default() -> Self {
        TrialLayout { base_s: 10.0, prep_s: 10.0, immersion_s: 20.0, recovery_s: 10.0 }
    }
}

impl TrialLayout {
    pub fn duration_s(&self) -> f64 {
        self.base_s + self.prep_s + self.immersion_s + self.recovery_s
    }

    pub fn phases(&self) -> Vec<Phase> {
        phase_layout(
            0.0,
            &[
                (PhaseKind::Base, self.base_s),
                (PhaseKind::Prep, self.prep_s),
                (PhaseKind::Immersion, self.immersion_s),
                (PhaseKind::Recovery, self.recovery_s),
            ],
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetConfig {
    pub n_clips: usize,
    pub stress_fraction: f64,
    pub seed: u64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub layout: TrialLayout,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_clips: 10,
            stress_fraction: 0.5,
            seed: 0,
            fps: 15.0,
            width: 32,
            height: 32,
            layout: TrialLayout::default(),
        }
    }
}

impl DatasetConfig {
    /// Number of stress trials.
    pub fn n_stress(&self) -> usize {
        (self.n_clips as f64 * self.stress_fraction).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clips < 2 {
            return Err(Error::InvalidProfile(format!("need at least 2 clips, got {}", self.n_clips)));
        }
        if !(0.0..=1.0).contains(&self.stress_fraction) {
            return Err(Error::InvalidProfile(format!("stress fraction {} outside [0, 1]", self.stress_fraction)));
        }
        let s = self.n_stress();
        if s == 0 || s == self.n_clips {
            return Err(Error::InvalidProfile("both classes must be present".into()));
        }
        if !(self.layout.duration_s() > 2.0) {
            return Err(Error::InvalidProfile("trial shorter than 2 s".into()));
        }
        Ok(())
    }

    /// Labels in trial order: a seeded permutation with exactly
    /// `n_stress()` stress trials.
    pub fn labels(&self) -> Vec<Label> {
        use rand::seq::SliceRandom;
        let s = self.n_stress();
        let mut labels: Vec<Label> =
            (0..self.n_clips).map(|i| if i < s { Label::Stress } else { Label::NoStress }).collect();
        labels.shuffle(&mut ChaCha8Rng::seed_from_u64(self.seed ^ 0x1abe1));
        labels
    }
}

/// Programmed ISTI knots (ms). No-stress trials drift slowly around a
/// resting level in 150–180 ms; stress trials additionally dip to
/// 110–130 ms across prep and immersion.
pub fn isti_trajectory(layout: &TrialLayout, label: Label, rng: &mut impl Rng) -> Result<Knots> {
    let rest: f64 = rng.random_range(152.0..172.0);
    let drift_amp: f64 = rng.random_range(4.0..8.0);
    let drift_period: f64 = rng.random_range(15.0..30.0);
    let phase: f64 = rng.random_range(0.0..2.0 * PI);
    let dip_level: f64 = rng.random_range(110.0..130.0);
    let dip_start = layout.base_s;
    let dip_end = layout.base_s + layout.prep_s + layout.immersion_s;
    let ramp = 4.0;
    let step = 2.5;
    let n = (layout.duration_s() / step).ceil() as usize;
    let mut t = Vec::with_capacity(n + 1);
    let mut v = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let tk = (k as f64 * step).min(layout.duration_s());
        let mut value = rest + drift_amp * (2.0 * PI * tk / drift_period + phase).sin() + rng.random_range(-1.5..1.5);
        if label == Label::Stress {
            // Smooth entry into and recovery from the dip.
            let enter = ((tk - dip_start) / ramp).clamp(0.0, 1.0);
            let leave = ((dip_end - tk) / ramp).clamp(0.0, 1.0);
            let depth = 0.5 * (1.0 - (PI * enter.min(leave)).cos());
            value += depth * (dip_level - value);
        }
        value = value.clamp(105.0, 185.0);
        if t.last().is_some_and(|&last: &f64| tk <= last) {
            break;
        }
        t.push(tk);
        v.push(value);
    }
    Knots::new(t, v)
}

/// Breathing rate in breaths per minute at 1 Hz: about 15 at rest, rising
/// by 3–6 during prep and immersion for stress trials.
pub fn breathing_rate(layout: &TrialLayout, label: Label, rng: &mut impl Rng) -> Result<Signal> {
    let rest: f64 = rng.random_range(12.0..18.0);
    let rise: f64 = rng.random_range(3.0..6.0);
    let (a, b) = (layout.base_s, layout.base_s + layout.prep_s + layout.immersion_s);
    let n = layout.duration_s().floor() as usize;
    let values = (0..n)
        .map(|i| {
            let t = i as f64;
            let up = if label == Label::Stress && t >= a && t < b { rise } else { 0.0 };
            rest + up + rng.random_range(-1.0..1.0)
        })
        .collect();
    Signal::new(values, 1.0, 0.0)
}

/// Everything generated for one trial.
#[derive(Debug, Clone)]
pub struct SynthTrial {
    pub id: String,
    pub label: Label,
    pub phases: Vec<Phase>,
    pub clip: ThermalClip,
    pub ecg: Signal,
    pub dzdt: Signal,
    /// Programmed ISTI at each beat.
    pub truth_knots: Knots,
    /// Programmed ISTI on the clip's frame grid (ms).
    pub truth_isti: Signal,
    pub breathing: Signal,
}

/// Generates trial `index` of a dataset. Trials are independent: trial `i`
/// uses seed `config.seed + i`.
pub fn gen_trial(config: &DatasetConfig, index: usize, label: Label) -> Result<SynthTrial> {
    let seed = config.seed.wrapping_add(index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let layout = config.layout;
    let trajectory = isti_trajectory(&layout, label, &mut rng)?;
    let cardiac = CardiacProfile {
        duration_s: layout.duration_s(),
        cardiac_rate_hz: 250.0,
        base_rr_s: rng.random_range(0.9..1.0),
        rr_modulation: RrModulation { amplitude_s: rng.random_range(0.01..0.03), period_s: rng.random_range(4.0..8.0) },
        isti_trajectory: trajectory,
        r_wave_width_s: 0.012,
        z_wave_width_s: 0.025,
        noise_std: 0.0,
        seed,
    };
    let (ecg, dzdt, truth_knots) = gen_cardiac(&cardiac)?;
    let profile = EmissionProfile {
        motion_phase_rad: rng.random_range(0.0..2.0 * PI),
        ..EmissionProfile::face(config.width, config.height, config.fps, seed)
    };
    let (clip, _) = gen_thermal(&profile, &cardiac)?;
    let truth_isti = isti_continuous(&truth_knots, &clip.frame_times())?;
    let breathing = breathing_rate(&layout, label, &mut rng)?;
    Ok(SynthTrial {
        id: format!("trial_{index:03}"),
        label,
        phases: layout.phases(),
        clip,
        ecg,
        dzdt,
        truth_knots,
        truth_isti,
        breathing,
    })
}

/// All trials of a dataset in memory.
pub fn gen_trials(config: &DatasetConfig) -> Result<Vec<SynthTrial>> {
    config.validate()?;
    config.labels().into_iter().enumerate().map(|(i, label)| gen_trial(config, i, label)).collect()
}

/// File names written for one trial, relative to the dataset directory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialFiles {
    pub trial_id: String,
    pub label: Label,
    pub isti_csv: PathBuf,
    pub breathing_csv: PathBuf,
    pub tvf: PathBuf,
    pub ecg_csv: PathBuf,
    pub dzdt_csv: PathBuf,
    pub phases_csv: PathBuf,
}

/// Writes every trial plus `manifest.csv` into `out_dir` and returns the
/// manifest rows. Paths in the manifest are relative to `out_dir`.
pub fn gen_dataset(out_dir: &Path, config: &DatasetConfig) -> Result<Vec<TrialFiles>> {
    config.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut rows = Vec::with_capacity(config.n_clips);
    for (i, label) in config.labels().into_iter().enumerate() {
        let trial = gen_trial(config, i, label)?;
        let id = trial.id.clone();
        let files = TrialFiles {
            trial_id: id.clone(),
            label,
            isti_csv: PathBuf::from(format!("{id}_isti.csv")),
            breathing_csv: PathBuf::from(format!("{id}_breathing.csv")),
            tvf: PathBuf::from(format!("{id}.tvf")),
            ecg_csv: PathBuf::from(format!("{id}_ecg.csv")),
            dzdt_csv: PathBuf::from(format!("{id}_dzdt.csv")),
            phases_csv: PathBuf::from(format!("{id}_phases.csv")),
        };
        io::write_tvf(&out_dir.join(&files.tvf), &trial.clip)?;
        io::write_signal_csv(&out_dir.join(&files.ecg_csv), &trial.ecg)?;
        io::write_signal_csv(&out_dir.join(&files.dzdt_csv), &trial.dzdt)?;
        io::write_signal_csv(&out_dir.join(&files.isti_csv), &trial.truth_isti)?;
        io::write_knots_csv(&out_dir.join(format!("{id}_isti_knots.csv")), &trial.truth_knots)?;
        io::write_signal_csv(&out_dir.join(&files.breathing_csv), &trial.breathing)?;
        io::write_phases_csv(&out_dir.join(&files.phases_csv), &trial.phases)?;
        rows.push(files);
    }
    io::write_dataset_manifest(&out_dir.join("manifest.csv"), &rows)?;
    Ok(rows)
}

/// Programmed ISTI (ms) at arbitrary times.
pub fn programmed_isti(knots: &Knots, times: &[f64]) -> Result<Vec<f64>> {
    cubic_interpolate(knots, times)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emission::{preprocess, EmissionConfig};
    use crate::isti::{compute_isti_knots, CardiacPair, IstiConfig};

    #[test]
    fn constant_isti_is_recovered() {
        let p = CardiacProfile::constant(20.0, 160.0, 1);
        let (ecg, dzdt, truth) = gen_cardiac(&p).unwrap();
        let got = compute_isti_knots(&CardiacPair::new(ecg, dzdt).unwrap(), &IstiConfig::default()).unwrap();
        assert_eq!(got.knots.len(), truth.len());
        let tol = 1.5 / 250.0 * 1000.0;
        for v in got.knots.values() {
            assert!((v - 160.0).abs() <= tol, "{v}");
        }
    }

    #[test]
    fn unmodulated_beats_are_one_second_apart() {
        let beats = beat_schedule(&CardiacProfile::constant(12.0, 160.0, 0)).unwrap();
        for w in beats.times().windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cardiac_is_deterministic() {
        let mut p = CardiacProfile::constant(6.0, 150.0, 3);
        p.noise_std = 0.05;
        let a = gen_cardiac(&p).unwrap();
        let b = gen_cardiac(&p).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        p.seed = 4;
        assert_ne!(gen_cardiac(&p).unwrap().0, a.0);
    }

    #[test]
    fn invalid_profiles() {
        let mut p = CardiacProfile::constant(6.0, 150.0, 0);
        p.isti_trajectory = Knots::new(vec![0.0, 6.0], vec![150.0, 600.0]).unwrap();
        assert!(matches!(gen_cardiac(&p), Err(Error::InvalidProfile(_))));
        assert!(matches!(gen_cardiac(&CardiacProfile::constant(0.5, 150.0, 0)), Err(Error::InvalidProfile(_))));
    }

    fn small_profile() -> EmissionProfile {
        EmissionProfile { noise_std_counts: 0.0, ..EmissionProfile::face(12, 10, 15.0, 2) }
    }

    #[test]
    fn static_scene_preprocesses_to_zero() {
        let profile = EmissionProfile { eps_b: 1e-300, motion_amplitude_px: 0.0, ..small_profile() };
        let (clip, _) = gen_thermal(&profile, &CardiacProfile::constant(4.0, 150.0, 0)).unwrap();
        assert!(clip.frames().all(|f| f == clip.frame(0)));
        let fc = preprocess(&clip, &EmissionConfig::default()).unwrap();
        assert!(fc.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn pulse_only_clip_oscillates_at_beat_rate() {
        let profile = EmissionProfile { motion_amplitude_px: 0.0, ..small_profile() };
        let (clip, _) = gen_thermal(&profile, &CardiacProfile::constant(20.0, 150.0, 0)).unwrap();
        let sig = crate::emission::roi_mean_signal(&clip, [3, 3, 6, 4]).unwrap();
        let x = sig.samples();
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        // Power at 1 Hz against its neighbours.
        let power = |f: f64| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, v) in x.iter().enumerate() {
                let a = 2.0 * PI * f * i as f64 / 15.0;
                re += (v - mean) * a.cos();
                im += (v - mean) * a.sin();
            }
            re * re + im * im
        };
        let at_beat = power(1.0);
        for f in [0.35, 0.6, 0.8, 1.25, 1.6] {
            assert!(at_beat > 5.0 * power(f), "f={f}");
        }
    }

    #[test]
    fn overflow_is_reported() {
        let profile = EmissionProfile { offset: 65500.0, ..small_profile() };
        let r = gen_thermal(&profile, &CardiacProfile::constant(3.0, 150.0, 0));
        assert!(matches!(r, Err(Error::CountOverflowRisk(_))));
    }

    #[test]
    fn labels_follow_the_fraction() {
        let cfg = DatasetConfig { n_clips: 10, stress_fraction: 0.5, ..Default::default() };
        let labels = cfg.labels();
        assert_eq!(labels.iter().filter(|l| **l == Label::Stress).count(), 5);
        assert!(DatasetConfig { n_clips: 3, stress_fraction: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn trajectories_stay_in_range() {
        let layout = TrialLayout::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for label in [Label::Stress, Label::NoStress] {
            let k = isti_trajectory(&layout, label, &mut rng).unwrap();
            assert!(k.values().iter().all(|v| (105.0..=185.0).contains(v)));
            let mid = programmed_isti(&k, &[25.0]).unwrap()[0];
            if label == Label::Stress {
                assert!(mid < 135.0, "{mid}");
            } else {
                assert!(mid > 145.0, "{mid}");
            }
        }
    }
}
