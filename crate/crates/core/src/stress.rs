//! Trial-level stress classifier: a small fully connected network on a
//! fixed-length resampling of a whole-trial signal, trained with binary
//! cross-entropy, plus multiplicative fusion with a second modality.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::isti::{normalize_isti, DEFAULT_ISTI_MAX_MS};
use crate::neural::layers::{linear_backward, linear_forward, relu_backward_inplace, relu_inplace, sigmoid};
use crate::neural::loss::sigmoid_bce;
use crate::neural::Tensor;
use crate::signal::{resample_fixed, Signal};

/// Protocol phase of a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PhaseKind {
    Base,
    Prep,
    Immersion,
    Recovery,
}

impl PhaseKind {
    pub const ALL: [PhaseKind; 4] = [PhaseKind::Base, PhaseKind::Prep, PhaseKind::Immersion, PhaseKind::Recovery];

    pub fn as_str(self) -> &'static str {
        match self {
            PhaseKind::Base => "base",
            PhaseKind::Prep => "prep",
            PhaseKind::Immersion => "immersion",
            PhaseKind::Recovery => "recovery",
        }
    }
}

impl fmt::Display for PhaseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for PhaseKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        PhaseKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Parse(format!("unknown phase {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Phase {
    pub kind: PhaseKind,
    pub start_s: f64,
    pub end_s: f64,
}

impl Phase {
    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t < self.end_s
    }
}

/// Consecutive phases starting at `t0` with the given durations.
pub fn phase_layout(t0: f64, durations: &[(PhaseKind, f64)]) -> Vec<Phase> {
    let mut t = t0;
    durations
        .iter()
        .map(|&(kind, d)| {
            let p = Phase { kind, start_s: t, end_s: t + d };
            t += d;
            p
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Stress,
    NoStress,
}

impl Label {
    /// 1 for stress, 0 otherwise.
    pub fn target(self) -> f64 {
        match self {
            Label::Stress => 1.0,
            Label::NoStress => 0.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stress => "stress",
            Label::NoStress => "no_stress",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "stress" | "1" => Ok(Label::Stress),
            "no_stress" | "nostress" | "control" | "0" => Ok(Label::NoStress),
            other => Err(Error::Parse(format!("unknown label {other:?}"))),
        }
    }
}

/// One trial: a whole-trial ISTI trace (ms), its protocol phases, an
/// optional label and an optional second signal for fusion.
#[derive(Debug, Clone)]
pub struct TrialRecord {
    pub id: String,
    pub isti: Signal,
    pub phases: Vec<Phase>,
    pub label: Option<Label>,
    pub breathing: Option<Signal>,
}

impl TrialRecord {
    pub fn new(
        id: impl Into<String>,
        isti: Signal,
        phases: Vec<Phase>,
        label: Option<Label>,
        breathing: Option<Signal>,
    ) -> Result<Self> {
        for (i, p) in phases.iter().enumerate() {
            if !(p.end_s > p.start_s) {
                return Err(Error::InvalidArgument(format!("phase {} has end <= start", p.kind)));
            }
            if i > 0 && p.start_s < phases[i - 1].end_s {
                return Err(Error::InvalidArgument(format!("phase {} overlaps {}", p.kind, phases[i - 1].kind)));
            }
        }
        Ok(TrialRecord { id: id.into(), isti, phases, label, breathing })
    }

    pub fn phase_at(&self, t: f64) -> Option<PhaseKind> {
        self.phases.iter().find(|p| p.contains(t)).map(|p| p.kind)
    }
}

/// Resample to `n_in` points and divide by `scale`, clamped to `[0, 1]`.
pub fn featurize_signal(sig: &Signal, n_in: usize, scale: f64) -> Result<Vec<f64>> {
    normalize_isti(&resample_fixed(sig, n_in)?, scale)
}

/// Classifier input for a trial's ISTI trace.
pub fn featurize(trial: &TrialRecord, n_in: usize, isti_max_ms: f64) -> Result<Vec<f64>> {
    featurize_signal(&trial.isti, n_in, isti_max_ms)
}

/// Layer widths from input to the single output, e.g. `[128, 64, 16, 1]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StressArch {
    pub widths: Vec<usize>,
}

impl Default for StressArch {
    fn default() -> Self {
        StressArch { widths: vec![128, 64, 16, 1] }
    }
}

impl StressArch {
    pub fn n_in(&self) -> usize {
        self.widths[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 || self.widths.last() != Some(&1) || self.widths.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "stress widths must be nonzero and end in 1, got {:?}",
                self.widths
            )));
        }
        if self.widths[0] < 2 {
            return Err(Error::InvalidArgument("stress input length must be >= 2".into()));
        }
        Ok(())
    }

    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, w) in self.widths.windows(2).enumerate() {
            out.push((format!("fc{}.weight", i + 1), vec![w[1], w[0]]));
            out.push((format!("fc{}.bias", i + 1), vec![w[1]]));
        }
        out
    }

    pub fn to_text(&self) -> String {
        let w: Vec<String> = self.widths.iter().map(|v| v.to_string()).collect();
        format!("kind=stress\nwidths={}\n", w.join(","))
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut widths = None;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("descriptor line without '=': {line:?}")))?;
            match (k.trim(), v.trim()) {
                ("kind", "stress") => {}
                ("kind", other) => return Err(Error::Parse(format!("descriptor kind {other:?} is not a stress model"))),
                ("widths", v) => {
                    widths = Some(
                        v.split(',')
                            .map(|s| s.trim().parse::<usize>().map_err(|e| Error::Parse(format!("widths: {e}"))))
                            .collect::<Result<Vec<_>>>()?,
                    )
                }
                (other, _) => return Err(Error::Parse(format!("unknown descriptor key {other:?}"))),
            }
        }
        let arch = StressArch { widths: widths.ok_or_else(|| Error::Parse("descriptor is missing widths".into()))? };
        arch.validate()?;
        Ok(arch)
    }
}

/// Fully connected ReLU network ending in a logistic sigmoid.
#[derive(Debug, Clone, PartialEq)]
pub struct StressModel {
    arch: StressArch,
    params: Vec<(String, Tensor)>,
}

impl StressModel {
    /// Uniform `[-a, a]` with `a = 1 / sqrt(fan_in)`.
    pub fn init(arch: StressArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = arch
            .widths
            .windows(2)
            .enumerate()
            .flat_map(|(i, w)| {
                let a = 1.0 / (w[0] as f64).sqrt();
                let weight = Tensor::uniform(&[w[1], w[0]], a, &mut rng);
                let bias = Tensor::uniform(&[w[1]], a, &mut rng);
                [(format!("fc{}.weight", i + 1), weight), (format!("fc{}.bias", i + 1), bias)]
            })
            .collect();
        Ok(StressModel { arch, params })
    }

    pub fn from_params(arch: StressArch, params: Vec<(String, Tensor)>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.param_layout();
        if layout.len() != params.len() {
            return Err(Error::ShapeMismatchWithDescriptor(format!(
                "descriptor expects {} tensors, got {}",
                layout.len(),
                params.len()
            )));
        }
        let mut ordered = Vec::with_capacity(layout.len());
        for (name, shape) in layout {
            let t = params
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, t)| t.clone())
                .ok_or_else(|| Error::ShapeMismatchWithDescriptor(format!("missing tensor {name}")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatchWithDescriptor(format!(
                    "{name}: shape {:?}, descriptor says {shape:?}",
                    t.shape()
                )));
            }
            ordered.push((name, t));
        }
        Ok(StressModel { arch, params: ordered })
    }

    pub fn arch(&self) -> &StressArch {
        &self.arch
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.params
    }

    fn layers(&self) -> usize {
        self.params.len() / 2
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.arch.n_in() {
            return Err(Error::ShapeMismatch(format!("input of length {}, model expects {}", x.len(), self.arch.n_in())));
        }
        Ok(())
    }

    /// Activations of every layer; the last entry holds the single logit.
    fn forward_cached(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![x.to_vec()];
        for l in 0..self.layers() {
            let mut y = linear_forward(self.params[2 * l].1.data(), self.params[2 * l + 1].1.data(), &acts[l]);
            if l + 1 < self.layers() {
                relu_inplace(&mut y);
            }
            acts.push(y);
        }
        acts
    }

    pub fn logit(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        Ok(self.forward_cached(x).last().expect("at least one layer")[0])
    }

    /// Mean BCE over the examples and its gradient for every parameter.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[f64]) -> Result<(f64, Vec<Tensor>)> {
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch(xs.len(), ys.len()));
        }
        if xs.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut grads: Vec<Tensor> = self.params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        let scale = 1.0 / xs.len() as f64;
        let mut total = 0.0;
        for (x, &y) in xs.iter().zip(ys) {
            self.check_input(x)?;
            let acts = self.forward_cached(x);
            let (loss, dz) = sigmoid_bce(acts[self.layers()][0], y);
            total += loss;
            let mut dy = vec![dz * scale];
            for l in (0..self.layers()).rev() {
                let (gw, rest) = grads[2 * l..].split_at_mut(1);
                let mut dx =
                    linear_backward(self.params[2 * l].1.data(), &acts[l], &dy, gw[0].data_mut(), rest[0].data_mut());
                if l > 0 {
                    relu_backward_inplace(&acts[l], &mut dx);
                }
                dy = dx;
            }
        }
        Ok((total * scale, grads))
    }
}

/// Stress probability in `(0, 1)`.
pub fn stress_forward(model: &StressModel, x: &[f64]) -> Result<f64> {
    Ok(sigmoid(model.logit(x)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct StressTrainConfig {
    pub arch: StressArch,
    pub lr: f64,
    pub epochs: usize,
    /// Examples per SGD step.
    pub batch: usize,
    /// Divisor that maps the input signal to `[0, 1]`.
    pub scale: f64,
    pub seed: u64,
}

impl Default for StressTrainConfig {
    fn default() -> Self {
        StressTrainConfig {
            arch: StressArch::default(),
            lr: 0.05,
            epochs: 400,
            batch: 4,
            scale: DEFAULT_ISTI_MAX_MS,
            seed: 0,
        }
    }
}

impl StressTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        if !(self.lr > 0.0) || !(self.scale > 0.0) || self.batch == 0 {
            return Err(Error::InvalidArgument("stress lr, scale and batch must be positive".into()));
        }
        Ok(())
    }
}

fn check_classes(ys: &[f64]) -> Result<()> {
    if !ys.contains(&1.0) || !ys.contains(&0.0) {
        return Err(Error::SingleClassDataset);
    }
    Ok(())
}

/// Plain minibatch SGD on BCE from a given starting model. Returns the
/// model and the mean training BCE of every epoch (measured before the
/// epoch's updates).
pub fn stress_train_from(
    mut model: StressModel,
    xs: &[Vec<f64>],
    ys: &[f64],
    config: &StressTrainConfig,
) -> Result<(StressModel, Vec<f64>)> {
    config.validate()?;
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch(xs.len(), ys.len()));
    }
    check_classes(ys)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x57e5));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        history.push(model.loss_and_grad(xs, ys)?.0);
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch) {
            let bx: Vec<Vec<f64>> = chunk.iter().map(|&i| xs[i].clone()).collect();
            let by: Vec<f64> = chunk.iter().map(|&i| ys[i]).collect();
            let (_, g) = model.loss_and_grad(&bx, &by)?;
            for ((_, p), g) in model.params.iter_mut().zip(&g) {
                p.add_scaled(g, -config.lr);
            }
        }
    }
    Ok((model, history))
}

/// Trains on feature vectors with 0/1 targets from a seeded initialization.
pub fn stress_train_vectors(xs: &[Vec<f64>], ys: &[f64], config: &StressTrainConfig) -> Result<(StressModel, Vec<f64>)> {
    config.validate()?;
    check_classes(ys)?;
    let model = StressModel::init(config.arch.clone(), config.seed)?;
    stress_train_from(model, xs, ys, config)
}

fn labelled(trials: &[TrialRecord]) -> Result<Vec<f64>> {
    trials
        .iter()
        .map(|t| {
            t.label
                .map(Label::target)
                .ok_or_else(|| Error::InvalidArgument(format!("trial {} has no label", t.id)))
        })
        .collect()
}

/// Trains the ISTI stress classifier on labelled trials.
pub fn stress_train(trials: &[TrialRecord], config: &StressTrainConfig) -> Result<(StressModel, Vec<f64>)> {
    let ys = labelled(trials)?;
    check_classes(&ys)?;
    let xs = trials
        .iter()
        .map(|t| featurize(t, config.arch.n_in(), config.scale))
        .collect::<Result<Vec<_>>>()?;
    stress_train_vectors(&xs, &ys, config)
}

/// Trains a classifier on the trials' second signal; every trial needs one.
pub fn breathing_train(trials: &[TrialRecord], config: &StressTrainConfig) -> Result<(StressModel, Vec<f64>)> {
    let ys = labelled(trials)?;
    check_classes(&ys)?;
    let xs = trials
        .iter()
        .map(|t| {
            let b = t
                .breathing
                .as_ref()
                .ok_or_else(|| Error::InvalidArgument(format!("trial {} has no breathing signal", t.id)))?;
            featurize_signal(b, config.arch.n_in(), config.scale)
        })
        .collect::<Result<Vec<_>>>()?;
    stress_train_vectors(&xs, &ys, config)
}

/// Product of the two probabilities, used as a ranking score.
pub fn fuse_breathing(p_isti: f64, p_breath: f64) -> Result<f64> {
    for p in [p_isti, p_breath] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::OutOfRangeProbability(p));
        }
    }
    Ok(p_isti * p_breath)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant_trial(ms: f64, n: usize) -> TrialRecord {
        TrialRecord::new("t", Signal::new(vec![ms; n], 15.0, 0.0).unwrap(), vec![], Some(Label::NoStress), None).unwrap()
    }

    #[test]
    fn featurize_constant_trial() {
        let x = featurize(&constant_trial(160.0, 500), 128, 300.0).unwrap();
        assert_eq!(x.len(), 128);
        assert!(x.iter().all(|v| (v - 160.0 / 300.0).abs() < 1e-12));
        let empty = TrialRecord { isti: Signal::new(vec![], 15.0, 0.0).unwrap(), ..constant_trial(1.0, 1) };
        assert!(matches!(featurize(&empty, 128, 300.0), Err(Error::EmptySignal(_))));
    }

    #[test]
    fn featurize_identity_length() {
        let v: Vec<f64> = (0..128).map(|i| 100.0 + i as f64).collect();
        let sig = Signal::new(v.clone(), 2.0, 0.0).unwrap();
        let x = featurize_signal(&sig, 128, 1000.0).unwrap();
        for (a, b) in x.iter().zip(&v) {
            assert!((a - b / 1000.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_model_outputs_half() {
        let mut m = StressModel::init(StressArch::default(), 1).unwrap();
        m.params_mut().iter_mut().for_each(|(_, t)| t.fill(0.0));
        assert_eq!(stress_forward(&m, &[0.3; 128]).unwrap(), 0.5);
        assert!(matches!(stress_forward(&m, &[0.3; 5]), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn two_two_one_hand_evaluation() {
        let arch = StressArch { widths: vec![2, 2, 1] };
        let params = vec![
            ("fc1.weight".to_string(), Tensor::new(vec![2, 2], vec![1.0, -1.0, 0.5, 2.0]).unwrap()),
            ("fc1.bias".to_string(), Tensor::new(vec![2], vec![0.1, -3.0]).unwrap()),
            ("fc2.weight".to_string(), Tensor::new(vec![1, 2], vec![2.0, -1.0]).unwrap()),
            ("fc2.bias".to_string(), Tensor::new(vec![1], vec![0.25]).unwrap()),
        ];
        let m = StressModel::from_params(arch, params).unwrap();
        let x = [0.8, 0.3];
        // Hidden: relu(0.8 - 0.3 + 0.1) = 0.6, relu(0.4 + 0.6 - 3) = 0.
        let z = 2.0 * 0.6 - 0.0 + 0.25;
        let p = 1.0 / (1.0 + (-z as f64).exp());
        assert!((stress_forward(&m, &x).unwrap() - p).abs() < 1e-15);
    }

    #[test]
    fn output_strictly_inside_unit_interval() {
        let m = StressModel::init(StressArch::default(), 2).unwrap();
        for s in [-5.0, -1.0, 0.0, 0.5, 1.0, 5.0] {
            let p = stress_forward(&m, &[s; 128]).unwrap();
            assert!(p > 0.0 && p < 1.0, "{p}");
        }
    }

    fn separable() -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..12 {
            let stress = i % 2 == 0;
            let level = if stress { 0.4 } else { 0.55 } + 0.01 * (i / 2) as f64;
            xs.push((0..128).map(|j| if stress && (32..96).contains(&j) { level - 0.1 } else { level }).collect());
            ys.push(if stress { 1.0 } else { 0.0 });
        }
        (xs, ys)
    }

    #[test]
    fn separable_training_reaches_low_bce() {
        let (xs, ys) = separable();
        let cfg = StressTrainConfig { epochs: 300, seed: 4, ..Default::default() };
        let (m, hist) = stress_train_vectors(&xs, &ys, &cfg).unwrap();
        let final_loss = m.loss_and_grad(&xs, &ys).unwrap().0;
        assert!(final_loss < 0.1, "{final_loss}, start {}", hist[0]);
        let (m2, _) = stress_train_vectors(&xs, &ys, &cfg).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn flipped_labels_give_symmetric_trajectory() {
        let (xs, ys) = separable();
        let flipped: Vec<f64> = ys.iter().map(|y| 1.0 - y).collect();
        let cfg = StressTrainConfig { epochs: 20, seed: 9, ..Default::default() };
        let m = StressModel::init(cfg.arch.clone(), cfg.seed).unwrap();
        let mut neg = m.clone();
        let n = neg.params().len();
        for (_, t) in &mut neg.params_mut()[n - 2..] {
            t.data_mut().iter_mut().for_each(|v| *v = -*v);
        }
        let (_, a) = stress_train_from(m, &xs, &ys, &cfg).unwrap();
        let (_, b) = stress_train_from(neg, &xs, &flipped, &cfg).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
    }

    #[test]
    fn single_class_rejected() {
        let xs = vec![vec![0.5; 128]; 3];
        assert!(matches!(
            stress_train_vectors(&xs, &[1.0, 1.0, 1.0], &StressTrainConfig::default()),
            Err(Error::SingleClassDataset)
        ));
    }

    #[test]
    fn fusion() {
        assert_eq!(fuse_breathing(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(fuse_breathing(0.37, 1.0).unwrap(), 0.37);
        assert_eq!(fuse_breathing(0.2, 0.7).unwrap(), fuse_breathing(0.7, 0.2).unwrap());
        assert!(fuse_breathing(0.2, 0.7).unwrap() <= 0.2);
        assert!(matches!(fuse_breathing(1.2, 0.5), Err(Error::OutOfRangeProbability(_))));
    }

    #[test]
    fn phases_and_labels_parse() {
        assert_eq!("Immersion".parse::<PhaseKind>().unwrap(), PhaseKind::Immersion);
        assert_eq!("no_stress".parse::<Label>().unwrap(), Label::NoStress);
        assert_eq!("1".parse::<Label>().unwrap(), Label::Stress);
        let ph = phase_layout(0.0, &[(PhaseKind::Base, 10.0), (PhaseKind::Prep, 5.0)]);
        assert_eq!(ph[1].start_s, 10.0);
        let overlapping = vec![ph[0], Phase { kind: PhaseKind::Prep, start_s: 9.0, end_s: 12.0 }];
        assert!(TrialRecord::new("x", Signal::new(vec![1.0], 1.0, 0.0).unwrap(), overlapping, None, None).is_err());
    }

    #[test]
    fn descriptor_round_trip() {
        let a = StressArch { widths: vec![16, 8, 1] };
        assert_eq!(StressArch::from_text(&a.to_text()).unwrap(), a);
        assert!(StressArch::from_text("kind=isti\nwidths=4,1").is_err());
    }
}
