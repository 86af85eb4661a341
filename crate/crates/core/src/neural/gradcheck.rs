//! Central finite-difference verification of the analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv_backward, conv_forward, gap_backward, gap_forward, linear_backward, linear_forward, lstm_step,
    lstm_step_backward, ConvDims,
};
use super::loss::{bin_center, multi_loss_from_logits, sigmoid_bce, softmax, BinLoss};
use super::model::{ArchDescriptor, Model};
use super::tensor::Tensor;
use crate::error::Result;
use crate::stress::{StressArch, StressModel};

/// Named tensors a scalar function is differentiated against.
pub type Named = Vec<(String, Tensor)>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradcheckConfig {
    pub eps: f64,
    pub coords_per_tensor: usize,
    pub seed: u64,
}

impl Default for GradcheckConfig {
    fn default() -> Self {
        GradcheckConfig { eps: 1e-5, coords_per_tensor: 20, seed: 0 }
    }
}

/// `|a - n| / max(1e-8, |a| + |n|)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub coords: usize,
    pub max_rel_error: f64,
    /// Analytic and numeric values at the worst coordinate.
    pub worst: (f64, f64),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GradcheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradcheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max)
    }

    pub fn passed(&self, tol: f64) -> bool {
        self.max_rel_error() < tol
    }
}

/// Compares the gradient returned by `f` against central differences of
/// the value returned by `f`, on up to `coords_per_tensor` random entries
/// of every tensor (all entries when the tensor is smaller).
pub fn check<F>(tensors: Named, f: F, cfg: &GradcheckConfig) -> Result<GradcheckReport>
where
    F: Fn(&Named) -> Result<(f64, Vec<Tensor>)>,
{
    check_parts(tensors, |t| f(t).map(|(v, g)| (vec![v], g)), cfg)
}

/// Like [`check`] for a value that is the sum of the returned terms. Each
/// term is differenced on its own before summing, so the roundoff of the
/// estimate scales with the terms rather than with their total.
pub fn check_parts<F>(mut tensors: Named, f: F, cfg: &GradcheckConfig) -> Result<GradcheckReport>
where
    F: Fn(&Named) -> Result<(Vec<f64>, Vec<Tensor>)>,
{
    let (_, analytic) = f(&tensors)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = GradcheckReport::default();
    for ti in 0..tensors.len() {
        let len = tensors[ti].1.len();
        let coords = sample(&mut rng, len, cfg.coords_per_tensor.min(len)).into_vec();
        let mut worst_err: f64 = 0.0;
        let mut worst = (0.0, 0.0);
        for &k in &coords {
            let orig = tensors[ti].1.data()[k];
            tensors[ti].1.data_mut()[k] = orig + cfg.eps;
            let (up, _) = f(&tensors)?;
            tensors[ti].1.data_mut()[k] = orig - cfg.eps;
            let (down, _) = f(&tensors)?;
            tensors[ti].1.data_mut()[k] = orig;
            let diff: f64 = up.iter().zip(&down).map(|(u, d)| u - d).sum();
            let numeric = diff / (2.0 * cfg.eps);
            let a = analytic[ti].data()[k];
            let e = rel_error(a, numeric);
            if e > worst_err || coords.len() == 1 {
                worst_err = worst_err.max(e);
                worst = (a, numeric);
            }
        }
        report.tensors.push(TensorCheck {
            name: tensors[ti].0.clone(),
            coords: coords.len(),
            max_rel_error: worst_err,
            worst,
        });
    }
    Ok(report)
}

fn random(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::uniform(shape, scale, rng)
}

fn named(items: Vec<(&str, Tensor)>) -> Named {
    items.into_iter().map(|(n, t)| (n.to_string(), t)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convolution: loss is a fixed random projection of the output.
pub fn check_conv(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xc0);
    let d = ConvDims { cin: 2, cout: 3, h: 7, w: 6 };
    let proj: Vec<f64> = (0..d.out_len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = named(vec![
        ("conv.weight", random(&[d.cout, d.cin, 3, 3], 0.5, &mut rng)),
        ("conv.bias", random(&[d.cout], 0.5, &mut rng)),
        ("conv.input", random(&[d.cin, d.h, d.w], 1.0, &mut rng)),
    ]);
    check(
        t,
        |t| {
            let (w, b, x) = (t[0].1.data(), t[1].1.data(), t[2].1.data());
            let mut out = vec![0.0; d.out_len()];
            conv_forward(d, w, b, x, &mut out);
            let mut g = vec![Tensor::zeros(t[0].1.shape()), Tensor::zeros(t[1].1.shape()), Tensor::zeros(t[2].1.shape())];
            let (gw, rest) = g.split_at_mut(1);
            let (gb, gx) = rest.split_at_mut(1);
            conv_backward(d, w, x, &proj, gw[0].data_mut(), gb[0].data_mut(), Some(gx[0].data_mut()));
            Ok((dot(&out, &proj), g))
        },
        cfg,
    )
}

/// Global average pooling.
pub fn check_gap(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x6a);
    let (c, plane) = (4, 15);
    let proj: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = named(vec![("gap.input", random(&[c, plane], 1.0, &mut rng))]);
    check(
        t,
        |t| {
            let y = gap_forward(c, t[0].1.data());
            let g = Tensor::new(vec![c, plane], gap_backward(plane, &proj))?;
            Ok((dot(&y, &proj), vec![g]))
        },
        cfg,
    )
}

/// Fully connected layer.
pub fn check_linear(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xfc);
    let (n_in, n_out) = (7, 5);
    let proj: Vec<f64> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = named(vec![
        ("fc.weight", random(&[n_out, n_in], 0.5, &mut rng)),
        ("fc.bias", random(&[n_out], 0.5, &mut rng)),
        ("fc.input", random(&[n_in], 1.0, &mut rng)),
    ]);
    check(
        t,
        |t| {
            let (w, b, x) = (t[0].1.data(), t[1].1.data(), t[2].1.data());
            let y = linear_forward(w, b, x);
            let mut gw = Tensor::zeros(t[0].1.shape());
            let mut gb = Tensor::zeros(t[1].1.shape());
            let gx = linear_backward(w, x, &proj, gw.data_mut(), gb.data_mut());
            Ok((dot(&y, &proj), vec![gw, gb, Tensor::new(vec![n_in], gx)?]))
        },
        cfg,
    )
}

/// One LSTM layer unrolled over a short sequence, loss projected from every
/// hidden output. With `corrupt` the backward pass drops the cell-state
/// path between steps, which the check must catch.
pub fn check_lstm_with(cfg: &GradcheckConfig, corrupt: bool) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x15);
    let (n_in, hidden, steps) = (3, 4, 5);
    let proj: Vec<Vec<f64>> =
        (0..steps).map(|_| (0..hidden).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
    let t = named(vec![
        ("lstm.w_ih", random(&[4 * hidden, n_in], 0.6, &mut rng)),
        ("lstm.w_hh", random(&[4 * hidden, hidden], 0.6, &mut rng)),
        ("lstm.bias", random(&[4 * hidden], 0.6, &mut rng)),
        ("lstm.input", random(&[steps, n_in], 1.0, &mut rng)),
    ]);
    check(
        t,
        |t| {
            let (wi, wh, b, xs) = (t[0].1.data(), t[1].1.data(), t[2].1.data(), t[3].1.data());
            let (mut h, mut c) = (vec![0.0; hidden], vec![0.0; hidden]);
            let mut cache = Vec::with_capacity(steps);
            let mut loss = 0.0;
            for s in 0..steps {
                let st = lstm_step(wi, wh, b, &xs[s * n_in..(s + 1) * n_in], &h, &c);
                loss += dot(&st.h, &proj[s]);
                h.clone_from(&st.h);
                c.clone_from(&st.c);
                cache.push(st);
            }
            let mut gwi = Tensor::zeros(t[0].1.shape());
            let mut gwh = Tensor::zeros(t[1].1.shape());
            let mut gb = Tensor::zeros(t[2].1.shape());
            let mut gx = Tensor::zeros(t[3].1.shape());
            let (mut dh_next, mut dc_next) = (vec![0.0; hidden], vec![0.0; hidden]);
            for s in (0..steps).rev() {
                let dh: Vec<f64> = proj[s].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (dx, dh_prev, dc_prev) =
                    lstm_step_backward(&cache[s], wi, wh, &dh, &dc_next, gwi.data_mut(), gwh.data_mut(), gb.data_mut());
                gx.data_mut()[s * n_in..(s + 1) * n_in].copy_from_slice(&dx);
                dh_next = dh_prev;
                dc_next = if corrupt { vec![0.0; hidden] } else { dc_prev };
            }
            Ok((loss, vec![gwi, gwh, gb, gx]))
        },
        cfg,
    )
}

pub fn check_lstm(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    check_lstm_with(cfg, false)
}

/// Softmax followed by categorical cross-entropy.
pub fn check_softmax_ce(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    check_multi_loss_with(cfg, 0.0, BinLoss::CrossEntropy, "softmax_ce.logits")
}

/// Softmax expectation decoding alone: value `E = sum p_j c_j`.
pub fn check_expectation(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xe0);
    let n = 9;
    let t = named(vec![("expectation.logits", random(&[n], 2.0, &mut rng))]);
    check(
        t,
        |t| {
            let p = softmax(t[0].1.data());
            let e: f64 = p.iter().enumerate().map(|(j, pj)| pj * bin_center(j, n)).sum();
            let g: Vec<f64> = p.iter().enumerate().map(|(j, pj)| pj * (bin_center(j, n) - e)).collect();
            Ok((e, vec![Tensor::new(vec![n], g)?]))
        },
        cfg,
    )
}

fn check_multi_loss_with(cfg: &GradcheckConfig, alpha: f64, kind: BinLoss, name: &str) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x77);
    let n = 11;
    let target = rng.random_range(0.0..1.0);
    let t = vec![(name.to_string(), random(&[n], 2.0, &mut rng))];
    check(
        t,
        |t| {
            let (parts, g) = multi_loss_from_logits(t[0].1.data(), target, alpha, kind)?;
            Ok((parts.loss, vec![Tensor::new(vec![n], g)?]))
        },
        cfg,
    )
}

/// Classification + weighted regression loss, for both bin-loss variants.
pub fn check_multi_loss(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut r = check_multi_loss_with(cfg, 0.7, BinLoss::CrossEntropy, "multi_loss.ce.logits")?;
    r.tensors.extend(check_multi_loss_with(cfg, 0.7, BinLoss::BinaryPerBin, "multi_loss.bce.logits")?.tensors);
    Ok(r)
}

/// Logistic sigmoid with binary cross-entropy, behind a linear layer.
pub fn check_sigmoid_bce(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xb0);
    let n_in = 6;
    let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
    let t = named(vec![("bce.weight", random(&[1, n_in], 0.8, &mut rng)), ("bce.bias", random(&[1], 0.8, &mut rng))]);
    check(
        t,
        |t| {
            let z = linear_forward(t[0].1.data(), t[1].1.data(), &x)[0];
            let mut loss = 0.0;
            let mut gw = Tensor::zeros(&[1, n_in]);
            let mut gb = Tensor::zeros(&[1]);
            for y in [0.0, 1.0] {
                let (l, dz) = sigmoid_bce(z, y);
                loss += l;
                linear_backward(t[0].1.data(), &x, &[dz], gw.data_mut(), gb.data_mut());
            }
            Ok((loss, vec![gw, gb]))
        },
        cfg,
    )
}

/// Stress classifier: ReLU layers, sigmoid output and mean BCE.
pub fn check_stress_model(cfg: &GradcheckConfig) -> Result<GradcheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5c);
    let arch = StressArch { widths: vec![12, 6, 4, 1] };
    let model = StressModel::init(arch.clone(), cfg.seed)?;
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..12).map(|_| rng.random_range(0.0..1.0)).collect()).collect();
    let ys: Vec<f64> = (0..5).map(|i| (i % 2) as f64).collect();
    check(
        model.params().to_vec(),
        |t| StressModel::from_params(arch.clone(), t.clone())?.loss_and_grad(&xs, &ys),
        cfg,
    )
}

/// Small architecture used by the end-to-end model check.
pub fn toy_arch() -> ArchDescriptor {
    ArchDescriptor { input_h: 9, input_w: 8, channels: vec![3, 4], lstm_layers: 2, hidden: 5, head_hidden: 6, n_bins: 7 }
}

/// Smallest distance of any ReLU input from zero accepted in the toy
/// batch. Far above `eps` times any input magnitude used here.
pub const TOY_RELU_MARGIN: f64 = 1e-3;

/// Random frames and targets for the model check: `n_seq` sequences of
/// `seq_len` frames. Frames are redrawn until every ReLU input stays at
/// least `TOY_RELU_MARGIN` from zero, so no central difference straddles a
/// kink.
pub fn toy_batch(model: &Model, n_seq: usize, seq_len: usize, seed: u64) -> Result<Vec<(Vec<Vec<f64>>, Vec<f64>)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xba);
    let arch = model.arch();
    let px = arch.input_h * arch.input_w;
    let mut batch = Vec::with_capacity(n_seq);
    while batch.len() < n_seq {
        let frames: Vec<Vec<f64>> =
            (0..seq_len).map(|_| (0..px).map(|_| rng.random_range(-4.0..4.0)).collect()).collect();
        let targets = (0..seq_len).map(|_| rng.random_range(0.8..1.0)).collect();
        let refs: Vec<&[f64]> = frames.iter().map(|f| f.as_slice()).collect();
        if model.relu_margin(&refs)? >= TOY_RELU_MARGIN {
            batch.push((frames, targets));
        }
    }
    Ok(batch)
}

/// Whole network: backbone, stacked LSTM, head and multi-loss, averaged
/// over every frame of the batch.
pub fn check_model(
    model: &Model,
    batch: &[(Vec<Vec<f64>>, Vec<f64>)],
    alpha: f64,
    kind: BinLoss,
    cfg: &GradcheckConfig,
) -> Result<GradcheckReport> {
    let arch = model.arch().clone();
    let frames: usize = batch.iter().map(|(f, _)| f.len()).sum();
    let scale = 1.0 / frames.max(1) as f64;
    check_parts(
        model.params().to_vec(),
        |t| {
            let m = Model::from_params(arch.clone(), t.clone())?;
            let mut g = m.zero_gradients();
            let mut terms = Vec::new();
            for (f, y) in batch {
                let refs: Vec<&[f64]> = f.iter().map(|v| v.as_slice()).collect();
                m.sequence_loss(&refs, y, alpha, kind, Some((&mut g, scale)))?;
                for p in m.frame_losses(&refs, y, alpha, kind)? {
                    terms.push(p.classification * scale);
                    terms.push(alpha * p.regression * scale);
                }
            }
            Ok((terms, g.0))
        },
        cfg,
    )
}

/// Every layer check plus the toy end-to-end model, keyed by layer name.
pub fn full_suite(cfg: &GradcheckConfig) -> Result<Vec<(&'static str, GradcheckReport)>> {
    let model = Model::init(toy_arch(), cfg.seed)?;
    let batch = toy_batch(&model, 2, 4, cfg.seed)?;
    Ok(vec![
        ("conv", check_conv(cfg)?),
        ("gap", check_gap(cfg)?),
        ("lstm", check_lstm(cfg)?),
        ("fc", check_linear(cfg)?),
        ("softmax_ce", check_softmax_ce(cfg)?),
        ("sigmoid_bce", check_sigmoid_bce(cfg)?),
        ("stress_fc", check_stress_model(cfg)?),
        ("expectation_head", check_expectation(cfg)?),
        ("multi_loss", check_multi_loss(cfg)?),
        ("model", check_model(&model, &batch, 1.0, BinLoss::CrossEntropy, cfg)?),
        ("model_bce_bins", check_model(&model, &batch, 0.5, BinLoss::BinaryPerBin, cfg)?),
    ])
}
