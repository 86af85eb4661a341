use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::loss::BinLoss;
use super::model::{param_group, ArchDescriptor, Gradients, LossSums, Model, ParamGroup};
use crate::emission::FeatureClip;
use crate::error::{Error, Result};
use crate::isti::normalize_isti;
use crate::signal::Signal;

/// Optimizer schedule, batching and loss settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr_backbone: f64,
    pub lr_head: f64,
    pub lr_decay_factor: f64,
    pub decay_period_epochs: usize,
    pub epochs: usize,
    pub batch_frames: usize,
    pub n_bins: usize,
    pub alpha: f64,
    pub seq_seconds: f64,
    pub bin_loss: BinLoss,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_backbone: 0.001,
            lr_head: 0.01,
            lr_decay_factor: 0.1,
            decay_period_epochs: 10,
            epochs: 30,
            batch_frames: 500,
            n_bins: 33,
            alpha: 1.0,
            seq_seconds: 1.0,
            bin_loss: BinLoss::CrossEntropy,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.lr_backbone, self.lr_head, self.lr_decay_factor, self.seq_seconds];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("learning rates, decay and sequence length must be positive".into()));
        }
        if self.decay_period_epochs == 0 || self.batch_frames == 0 {
            return Err(Error::InvalidArgument("decay period and batch size must be positive".into()));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidArgument(format!("n_bins must be >= 2, got {}", self.n_bins)));
        }
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        Ok(())
    }

    /// Learning-rate multiplier at `epoch`: `decay ^ floor(epoch / period)`.
    pub fn decay_at(&self, epoch: usize) -> f64 {
        self.lr_decay_factor.powi((epoch / self.decay_period_epochs) as i32)
    }

    pub fn lr_at(&self, group: ParamGroup, epoch: usize) -> f64 {
        let base = match group {
            ParamGroup::Backbone => self.lr_backbone,
            ParamGroup::Head => self.lr_head,
        };
        base * self.decay_at(epoch)
    }

    /// Frames per LSTM sequence at the given frame rate (at least one).
    pub fn seq_len(&self, fps: f64) -> usize {
        ((fps * self.seq_seconds).round() as usize).max(1)
    }
}

/// A preprocessed clip with one normalized ISTI target per frame.
#[derive(Debug, Clone)]
pub struct TrainingClip {
    pub features: FeatureClip,
    pub targets: Signal,
}

impl TrainingClip {
    /// Pairs features with a normalized target signal already sampled on
    /// the clip's frame grid.
    pub fn new(features: FeatureClip, targets: Signal) -> Result<Self> {
        let n = features.num_frames();
        if targets.len() != n {
            return Err(Error::AlignmentError(format!("{} targets for {n} frames", targets.len())));
        }
        let rate_ok = (targets.sample_rate_hz() - features.fps()).abs() <= 1e-9 * features.fps();
        let t0_ok = (targets.t0_seconds() - features.t0_seconds()).abs() <= 0.5 / features.fps();
        if !rate_ok || !t0_ok {
            return Err(Error::AlignmentError(format!(
                "targets at {} Hz from {} s, frames at {} Hz from {} s",
                targets.sample_rate_hz(),
                targets.t0_seconds(),
                features.fps(),
                features.t0_seconds()
            )));
        }
        if let Some(v) = targets.samples().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::TargetOutOfRange(*v));
        }
        Ok(TrainingClip { features, targets })
    }

    /// Samples an ISTI trace (ms) at every frame time, normalizes it, and
    /// pairs it with the features. Frames more than one sample period
    /// outside the trace are an alignment error.
    pub fn from_isti_ms(features: FeatureClip, isti_ms: &Signal, isti_max_ms: f64) -> Result<Self> {
        if isti_ms.is_empty() {
            return Err(Error::AlignmentError("empty ISTI trace".into()));
        }
        let slack = 1.0 / isti_ms.sample_rate_hz();
        let (lo, hi) = (isti_ms.t0_seconds() - slack, isti_ms.t_end() + slack);
        let times = features.frame_times();
        if let Some(t) = times.iter().find(|&&t| t < lo || t > hi) {
            return Err(Error::AlignmentError(format!(
                "frame at {t:.3} s outside the ISTI trace [{:.3}, {:.3}] s",
                isti_ms.t0_seconds(),
                isti_ms.t_end()
            )));
        }
        let ms: Vec<f64> = times.iter().map(|&t| isti_ms.value_at(t).expect("non-empty")).collect();
        let unit = normalize_isti(&ms, isti_max_ms)?;
        let targets = Signal::new(unit, features.fps(), features.t0_seconds())?;
        TrainingClip::new(features, targets)
    }
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub ce: f64,
    pub mse: f64,
    pub lr_head: f64,
    pub lr_backbone: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

impl History {
    /// CSV with header `epoch,loss,ce,mse,lr_head,lr_backbone`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,ce,mse,lr_head,lr_backbone\n");
        for e in &self.epochs {
            s.push_str(&format!("{},{},{},{},{},{}\n", e.epoch, e.loss, e.ce, e.mse, e.lr_head, e.lr_backbone));
        }
        s
    }
}

/// `theta -= lr_group * decay^(epoch / period) * grad`, plain SGD.
pub fn sgd_step(model: &mut Model, grads: &Gradients, epoch: usize, config: &TrainConfig) -> Result<()> {
    if grads.0.len() != model.params().len() {
        return Err(Error::ShapeMismatch(format!(
            "{} gradient tensors for {} parameters",
            grads.0.len(),
            model.params().len()
        )));
    }
    for ((name, p), g) in model.params().iter().zip(&grads.0) {
        if p.shape() != g.shape() {
            return Err(Error::ShapeMismatch(format!("{name}: gradient {:?} vs {:?}", g.shape(), p.shape())));
        }
    }
    for ((name, p), g) in model.params_mut().iter_mut().zip(&grads.0) {
        let lr = config.lr_at(param_group(name), epoch);
        p.add_scaled(g, -lr);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
struct SeqRef {
    clip: usize,
    start: usize,
    len: usize,
}

fn sequences(data: &[TrainingClip], seq_len_of: impl Fn(f64) -> usize) -> Vec<SeqRef> {
    let mut out = Vec::new();
    for (c, clip) in data.iter().enumerate() {
        let n = clip.features.num_frames();
        let len = seq_len_of(clip.features.fps());
        let mut start = 0;
        while start < n {
            out.push(SeqRef { clip: c, start, len: len.min(n - start) });
            start += len;
        }
    }
    out
}

fn seq_frames<'a>(clip: &'a TrainingClip, s: &SeqRef) -> (Vec<&'a [f64]>, &'a [f64]) {
    let frames = (s.start..s.start + s.len).map(|i| clip.features.frame(i)).collect();
    (frames, &clip.targets.samples()[s.start..s.start + s.len])
}

/// Architecture with input size and bin count taken from the data and config.
pub fn arch_for(data: &[TrainingClip], base: &ArchDescriptor, config: &TrainConfig) -> Result<ArchDescriptor> {
    let first = data.first().ok_or(Error::EmptyDataset)?;
    let (h, w) = (first.features.height(), first.features.width());
    if let Some(c) = data.iter().find(|c| c.features.height() != h || c.features.width() != w) {
        return Err(Error::ShapeMismatch(format!(
            "clips of different sizes: {}x{} and {}x{}",
            w,
            h,
            c.features.width(),
            c.features.height()
        )));
    }
    let arch = ArchDescriptor { input_h: h, input_w: w, n_bins: config.n_bins, ..base.clone() };
    arch.validate()?;
    Ok(arch)
}

/// Trains a freshly initialized model. Deterministic given `config.seed`.
pub fn train(data: &[TrainingClip], base: &ArchDescriptor, config: &TrainConfig) -> Result<(Model, History)> {
    config.validate()?;
    let arch = arch_for(data, base, config)?;
    let model = Model::init(arch, config.seed)?;
    train_from(model, data, config)
}

/// Continues training an existing model.
pub fn train_from(mut model: Model, data: &[TrainingClip], config: &TrainConfig) -> Result<(Model, History)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    arch_for(data, model.arch(), config)?;
    if model.arch().n_bins != config.n_bins {
        return Err(Error::ShapeMismatch(format!(
            "model has {} bins, config {}",
            model.arch().n_bins,
            config.n_bins
        )));
    }
    let mut seqs = sequences(data, |fps| config.seq_len(fps));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x5eed));
    let mut grads = model.zero_gradients();
    let mut history = History::default();

    for epoch in 0..config.epochs {
        seqs.shuffle(&mut rng);
        let mut epoch_sums = LossSums::default();
        let mut i = 0;
        while i < seqs.len() {
            let mut j = i + 1;
            let mut frames = seqs[i].len;
            while j < seqs.len() && frames + seqs[j].len <= config.batch_frames {
                frames += seqs[j].len;
                j += 1;
            }
            grads.zero();
            let scale = 1.0 / frames as f64;
            for s in &seqs[i..j] {
                let (f, t) = seq_frames(&data[s.clip], s);
                let sums = model.sequence_loss(&f, t, config.alpha, config.bin_loss, Some((&mut grads, scale)))?;
                epoch_sums.add(&sums);
            }
            sgd_step(&mut model, &grads, epoch, config)?;
            i = j;
        }
        let n = epoch_sums.frames as f64;
        let stats = EpochStats {
            epoch,
            loss: epoch_sums.loss / n,
            ce: epoch_sums.classification / n,
            mse: epoch_sums.regression / n,
            lr_head: config.lr_at(ParamGroup::Head, epoch),
            lr_backbone: config.lr_at(ParamGroup::Backbone, epoch),
        };
        if !stats.loss.is_finite() {
            return Err(Error::InvalidArgument(format!("training diverged at epoch {epoch}")));
        }
        history.epochs.push(stats);
    }
    Ok((model, history))
}

/// Mean loss over a dataset without updating the model.
pub fn evaluate_loss(model: &Model, data: &[TrainingClip], config: &TrainConfig) -> Result<LossSums> {
    let mut total = LossSums::default();
    for s in sequences(data, |fps| config.seq_len(fps)) {
        let (f, t) = seq_frames(&data[s.clip], &s);
        total.add(&model.sequence_loss(&f, t, config.alpha, config.bin_loss, None)?);
    }
    Ok(total)
}

/// Per-frame ISTI in milliseconds. The LSTM restarts from zero state at
/// every `seq_seconds` window.
pub fn predict_isti(model: &Model, fc: &FeatureClip, isti_max_ms: f64, seq_seconds: f64) -> Result<Signal> {
    if fc.height() != model.arch().input_h || fc.width() != model.arch().input_w {
        return Err(Error::ShapeMismatch(format!(
            "clip is {}x{}, model expects {}x{}",
            fc.width(),
            fc.height(),
            model.arch().input_w,
            model.arch().input_h
        )));
    }
    if !(isti_max_ms > 0.0) {
        return Err(Error::NonPositiveScale(isti_max_ms));
    }
    let len = ((fc.fps() * seq_seconds).round() as usize).max(1);
    let n = fc.num_frames();
    let mut out = Vec::with_capacity(n);
    let mut start = 0;
    while start < n {
        let end = (start + len).min(n);
        let frames: Vec<&[f64]> = (start..end).map(|i| fc.frame(i)).collect();
        out.extend(model.predict_sequence(&frames)?.into_iter().map(|v| v * isti_max_ms));
        start = end;
    }
    Signal::new(out, fc.fps(), fc.t0_seconds())
}
