use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::layers::{
    conv_backward, conv_forward, gap_backward, gap_forward, linear_backward, linear_forward, lstm_step,
    lstm_step_backward, relu_backward_inplace, relu_inplace, ConvDims, LstmStep,
};
use super::loss::{bins_expectation, multi_loss_from_logits, softmax, BinLoss, LossParts};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Shape of the network: backbone widths, LSTM stack, head sizes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchDescriptor {
    pub input_h: usize,
    pub input_w: usize,
    /// Output channels of each stride-2 3x3 convolution.
    pub channels: Vec<usize>,
    pub lstm_layers: usize,
    pub hidden: usize,
    pub head_hidden: usize,
    pub n_bins: usize,
}

impl Default for ArchDescriptor {
    fn default() -> Self {
        ArchDescriptor {
            input_h: 32,
            input_w: 32,
            channels: vec![8, 16, 32],
            lstm_layers: 1,
            hidden: 32,
            head_hidden: 64,
            n_bins: 33,
        }
    }
}

impl ArchDescriptor {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::ShapeMismatch(m.to_string()));
        if self.input_h == 0 || self.input_w == 0 {
            return bad("input size must be positive");
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("backbone needs at least one non-empty layer");
        }
        if self.lstm_layers == 0 || self.hidden == 0 || self.head_hidden == 0 {
            return bad("LSTM and head sizes must be positive");
        }
        if self.n_bins < 2 {
            return bad("n_bins must be at least 2");
        }
        Ok(())
    }

    pub fn feature_len(&self) -> usize {
        *self.channels.last().expect("validated")
    }

    fn conv_dims(&self) -> Vec<ConvDims> {
        let (mut h, mut w, mut cin) = (self.input_h, self.input_w, 1);
        self.channels
            .iter()
            .map(|&cout| {
                let d = ConvDims { cin, cout, h, w };
                h = d.ho();
                w = d.wo();
                cin = cout;
                d
            })
            .collect()
    }

    /// `key=value` lines, one per field.
    pub fn to_text(&self) -> String {
        let ch: Vec<String> = self.channels.iter().map(|c| c.to_string()).collect();
        format!(
            "kind=isti\ninput_h={}\ninput_w={}\nchannels={}\nlstm_layers={}\nhidden={}\nhead_hidden={}\nn_bins={}\n",
            self.input_h,
            self.input_w,
            ch.join(","),
            self.lstm_layers,
            self.hidden,
            self.head_hidden,
            self.n_bins
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut d = ArchDescriptor { channels: Vec::new(), ..Default::default() };
        let mut seen = 0;
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("descriptor line without '=': {line:?}")))?;
            let num = |v: &str| v.trim().parse::<usize>().map_err(|e| Error::Parse(format!("{k}: {e}")));
            match k.trim() {
                "kind" if v.trim() == "isti" => continue,
                "kind" => return Err(Error::Parse(format!("descriptor kind {v:?} is not an ISTI model"))),
                "input_h" => d.input_h = num(v)?,
                "input_w" => d.input_w = num(v)?,
                "channels" => {
                    d.channels = v.split(',').map(num).collect::<Result<_>>()?;
                }
                "lstm_layers" => d.lstm_layers = num(v)?,
                "hidden" => d.hidden = num(v)?,
                "head_hidden" => d.head_hidden = num(v)?,
                "n_bins" => d.n_bins = num(v)?,
                other => return Err(Error::Parse(format!("unknown descriptor key {other:?}"))),
            }
            seen += 1;
        }
        if seen < 7 {
            return Err(Error::Parse("descriptor is missing fields".into()));
        }
        d.validate()?;
        Ok(d)
    }

    /// Names and shapes of every parameter tensor in storage order.
    pub fn param_layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, d) in self.conv_dims().iter().enumerate() {
            out.push((format!("backbone.conv{}.weight", i + 1), vec![d.cout, d.cin, 3, 3]));
            out.push((format!("backbone.conv{}.bias", i + 1), vec![d.cout]));
        }
        let h = self.hidden;
        for l in 0..self.lstm_layers {
            let n_in = if l == 0 { self.feature_len() } else { h };
            out.push((format!("lstm.l{l}.w_ih"), vec![4 * h, n_in]));
            out.push((format!("lstm.l{l}.w_hh"), vec![4 * h, h]));
            out.push((format!("lstm.l{l}.bias"), vec![4 * h]));
        }
        out.push(("head.fc1.weight".into(), vec![self.head_hidden, h]));
        out.push(("head.fc1.bias".into(), vec![self.head_hidden]));
        out.push(("head.fc2.weight".into(), vec![self.n_bins, self.head_hidden]));
        out.push(("head.fc2.bias".into(), vec![self.n_bins]));
        out
    }
}

/// Parameter group, used for the per-group learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Backbone,
    Head,
}

pub fn param_group(name: &str) -> ParamGroup {
    if name.starts_with("backbone.") {
        ParamGroup::Backbone
    } else {
        ParamGroup::Head
    }
}

/// One gradient tensor per model parameter, in the model's order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients(pub Vec<Tensor>);

impl Gradients {
    pub fn zero(&mut self) {
        self.0.iter_mut().for_each(|t| t.fill(0.0));
    }
}

/// Convolutional backbone + GAP, stacked LSTM, two-layer detection head.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    arch: ArchDescriptor,
    params: Vec<(String, Tensor)>,
}

/// Cached activations for one frame through the backbone.
struct FrameCache {
    /// Post-ReLU output of each conv layer.
    acts: Vec<Vec<f64>>,
}

/// Per-sequence totals (sums, not means).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossSums {
    pub loss: f64,
    pub classification: f64,
    pub regression: f64,
    pub frames: usize,
}

impl LossSums {
    pub fn add(&mut self, o: &LossSums) {
        self.loss += o.loss;
        self.classification += o.classification;
        self.regression += o.regression;
        self.frames += o.frames;
    }
}

impl Model {
    /// Seeded uniform initialization. Convolution kernels use
    /// `a = sqrt(6 / fan_in)` and zero biases so activations keep their scale
    /// through the ReLU stack; LSTM and head tensors use `a = 1 / sqrt(fan_in)`.
    pub fn init(arch: ArchDescriptor, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let layout = arch.param_layout();
        let mut fan_in = 1;
        for (name, shape) in layout {
            if shape.len() > 1 {
                fan_in = shape[1..].iter().product();
            }
            let conv = param_group(&name) == ParamGroup::Backbone;
            let t = match (conv, shape.len()) {
                (true, 1) => Tensor::zeros(&shape),
                (true, _) => Tensor::uniform(&shape, (6.0 / fan_in as f64).sqrt(), &mut rng),
                // Biases reuse the fan-in of the weight listed just before them.
                (false, _) => Tensor::uniform(&shape, 1.0 / (fan_in as f64).sqrt(), &mut rng),
            };
            params.push((name, t));
        }
        Ok(Model { arch, params })
    }

    /// Model from named tensors; names and shapes must match the descriptor.
    pub fn from_params(arch: ArchDescriptor, params: Vec<(String, Tensor)>) -> Result<Self> {
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
        Ok(Model { arch, params: ordered })
    }

    pub fn arch(&self) -> &ArchDescriptor {
        &self.arch
    }

    pub fn params(&self) -> &[(String, Tensor)] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients(self.params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect())
    }

    fn p(&self, i: usize) -> &[f64] {
        self.params[i].1.data()
    }

    fn lstm_base(&self) -> usize {
        2 * self.arch.channels.len()
    }

    fn head_base(&self) -> usize {
        self.lstm_base() + 3 * self.arch.lstm_layers
    }

    fn check_frame(&self, frame: &[f64]) -> Result<()> {
        let need = self.arch.input_h * self.arch.input_w;
        if frame.len() != need {
            return Err(Error::ShapeMismatch(format!(
                "frame has {} pixels, model expects {}x{}",
                frame.len(),
                self.arch.input_h,
                self.arch.input_w
            )));
        }
        Ok(())
    }

    fn backbone_cached(&self, frame: &[f64]) -> (Vec<f64>, FrameCache) {
        let dims = self.arch.conv_dims();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(dims.len());
        for (i, d) in dims.iter().enumerate() {
            let input: &[f64] = if i == 0 { frame } else { &acts[i - 1] };
            let mut out = vec![0.0; d.out_len()];
            conv_forward(*d, self.p(2 * i), self.p(2 * i + 1), input, &mut out);
            relu_inplace(&mut out);
            acts.push(out);
        }
        let f0 = gap_forward(self.arch.feature_len(), acts.last().expect("non-empty backbone"));
        (f0, FrameCache { acts })
    }

    /// Conv/ReLU stack followed by global average pooling.
    pub fn backbone_forward(&self, frame: &[f64]) -> Result<Vec<f64>> {
        self.check_frame(frame)?;
        Ok(self.backbone_cached(frame).0)
    }

    fn lstm_cached(&self, seq: &[Vec<f64>]) -> Vec<Vec<LstmStep>> {
        let h = self.arch.hidden;
        let mut layers: Vec<Vec<LstmStep>> = Vec::with_capacity(self.arch.lstm_layers);
        for l in 0..self.arch.lstm_layers {
            let base = self.lstm_base() + 3 * l;
            let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
            let mut steps = Vec::with_capacity(seq.len());
            for t in 0..seq.len() {
                let x: &[f64] = if l == 0 { &seq[t] } else { &layers[l - 1][t].h };
                let s = lstm_step(self.p(base), self.p(base + 1), self.p(base + 2), x, &hs, &cs);
                hs.clone_from(&s.h);
                cs.clone_from(&s.c);
                steps.push(s);
            }
            layers.push(steps);
        }
        layers
    }

    /// Stacked LSTM over one sequence starting from zero state; one output
    /// per input step.
    pub fn lstm_forward(&self, seq: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if seq.is_empty() {
            return Err(Error::ShapeMismatch("empty sequence".into()));
        }
        if let Some(v) = seq.iter().find(|v| v.len() != self.arch.feature_len()) {
            return Err(Error::ShapeMismatch(format!(
                "LSTM input of length {}, expected {}",
                v.len(),
                self.arch.feature_len()
            )));
        }
        let layers = self.lstm_cached(seq);
        Ok(layers.last().expect("at least one layer").iter().map(|s| s.h.clone()).collect())
    }

    /// Returns `(logits, fc1 activation)`.
    fn head_cached(&self, l0: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let b = self.head_base();
        let mut hid = linear_forward(self.p(b), self.p(b + 1), l0);
        relu_inplace(&mut hid);
        (linear_forward(self.p(b + 2), self.p(b + 3), &hid), hid)
    }

    /// Bin probabilities for one LSTM output.
    pub fn detection_head(&self, l0: &[f64]) -> Result<Vec<f64>> {
        if l0.len() != self.arch.hidden {
            return Err(Error::ShapeMismatch(format!(
                "head input of length {}, expected {}",
                l0.len(),
                self.arch.hidden
            )));
        }
        Ok(softmax(&self.head_cached(l0).0))
    }

    /// Smallest `|pre-activation|` over every ReLU in the network for one
    /// sequence. Finite differences are only valid when no perturbation
    /// pushes a unit across zero.
    pub fn relu_margin(&self, frames: &[&[f64]]) -> Result<f64> {
        for f in frames {
            self.check_frame(f)?;
        }
        let min_abs = |v: &[f64]| v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
        let mut margin = f64::INFINITY;
        let mut f0 = Vec::with_capacity(frames.len());
        for f in frames {
            let mut cur = f.to_vec();
            for (i, d) in self.arch.conv_dims().iter().enumerate() {
                let mut out = vec![0.0; d.out_len()];
                conv_forward(*d, self.p(2 * i), self.p(2 * i + 1), &cur, &mut out);
                margin = margin.min(min_abs(&out));
                relu_inplace(&mut out);
                cur = out;
            }
            f0.push(gap_forward(self.arch.feature_len(), &cur));
        }
        let b = self.head_base();
        for h in self.lstm_forward(&f0)? {
            margin = margin.min(min_abs(&linear_forward(self.p(b), self.p(b + 1), &h)));
        }
        Ok(margin)
    }

    /// Decoded ISTI in `[0, 1]` for each frame of one sequence.
    pub fn predict_sequence(&self, frames: &[&[f64]]) -> Result<Vec<f64>> {
        let f0: Vec<Vec<f64>> = frames.iter().map(|f| self.backbone_forward(f)).collect::<Result<_>>()?;
        let l0 = self.lstm_forward(&f0)?;
        l0.iter().map(|h| bins_expectation(&self.detection_head(h)?)).collect()
    }

    /// Forward-only loss terms for each frame of one sequence.
    pub fn frame_losses(&self, frames: &[&[f64]], targets: &[f64], alpha: f64, kind: BinLoss) -> Result<Vec<LossParts>> {
        if frames.len() != targets.len() {
            return Err(Error::LengthMismatch(frames.len(), targets.len()));
        }
        let f0: Vec<Vec<f64>> = frames.iter().map(|f| self.backbone_forward(f)).collect::<Result<_>>()?;
        let l0 = self.lstm_forward(&f0)?;
        l0.iter()
            .zip(targets)
            .map(|(h, &y)| Ok(multi_loss_from_logits(&self.head_cached(h).0, y, alpha, kind)?.0))
            .collect()
    }

    /// Loss over one sequence. When `grads` is given, accumulates
    /// `scale * dLoss/dParam` into it.
    pub fn sequence_loss(
        &self,
        frames: &[&[f64]],
        targets: &[f64],
        alpha: f64,
        kind: BinLoss,
        grads: Option<(&mut Gradients, f64)>,
    ) -> Result<LossSums> {
        if frames.len() != targets.len() {
            return Err(Error::LengthMismatch(frames.len(), targets.len()));
        }
        if frames.is_empty() {
            return Err(Error::ShapeMismatch("empty sequence".into()));
        }
        for f in frames {
            self.check_frame(f)?;
        }
        let mut f0 = Vec::with_capacity(frames.len());
        let mut caches = Vec::with_capacity(frames.len());
        for f in frames {
            let (v, c) = self.backbone_cached(f);
            f0.push(v);
            caches.push(c);
        }
        let lstm = self.lstm_cached(&f0);
        let top = lstm.last().expect("at least one layer");

        let mut sums = LossSums::default();
        let mut head_cache = Vec::with_capacity(frames.len());
        for (t, step) in top.iter().enumerate() {
            let (logits, hid) = self.head_cached(&step.h);
            let (parts, dlogits) = multi_loss_from_logits(&logits, targets[t], alpha, kind)?;
            sums.loss += parts.loss;
            sums.classification += parts.classification;
            sums.regression += parts.regression;
            sums.frames += 1;
            head_cache.push((hid, dlogits));
        }

        let Some((grads, scale)) = grads else {
            return Ok(sums);
        };
        let g = &mut grads.0;

        // Head.
        let hb = self.head_base();
        let mut dl0: Vec<Vec<f64>> = Vec::with_capacity(frames.len());
        for (t, (hid, dlogits)) in head_cache.iter().enumerate() {
            let dz: Vec<f64> = dlogits.iter().map(|v| v * scale).collect();
            let (g_lo, g_hi) = g.split_at_mut(hb + 3);
            let mut dhid = linear_backward(self.p(hb + 2), hid, &dz, g_lo[hb + 2].data_mut(), g_hi[0].data_mut());
            relu_backward_inplace(hid, &mut dhid);
            let (g_lo, g_hi) = g.split_at_mut(hb + 1);
            dl0.push(linear_backward(self.p(hb), &top[t].h, &dhid, g_lo[hb].data_mut(), g_hi[0].data_mut()));
        }

        // LSTM, top layer down, backwards in time.
        let hdim = self.arch.hidden;
        let mut dout = dl0;
        for l in (0..self.arch.lstm_layers).rev() {
            let base = self.lstm_base() + 3 * l;
            let steps = &lstm[l];
            let mut dx_seq = vec![Vec::new(); steps.len()];
            let (mut dh_next, mut dc_next) = (vec![0.0; hdim], vec![0.0; hdim]);
            for t in (0..steps.len()).rev() {
                let dh: Vec<f64> = dout[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (gw, rest) = g[base..base + 3].split_at_mut(1);
                let (gh, gb) = rest.split_at_mut(1);
                let (dx, dhp, dcp) = lstm_step_backward(
                    &steps[t],
                    self.p(base),
                    self.p(base + 1),
                    &dh,
                    &dc_next,
                    gw[0].data_mut(),
                    gh[0].data_mut(),
                    gb[0].data_mut(),
                );
                dx_seq[t] = dx;
                dh_next = dhp;
                dc_next = dcp;
            }
            dout = dx_seq;
        }

        // Backbone, frame by frame.
        let dims = self.arch.conv_dims();
        for (t, cache) in caches.iter().enumerate() {
            let last = dims.len() - 1;
            let plane = dims[last].ho() * dims[last].wo();
            let mut dact = gap_backward(plane, &dout[t]);
            for i in (0..dims.len()).rev() {
                relu_backward_inplace(&cache.acts[i], &mut dact);
                let input: &[f64] = if i == 0 { frames[t] } else { &cache.acts[i - 1] };
                let (gw, gb) = g[2 * i..2 * i + 2].split_at_mut(1);
                if i == 0 {
                    conv_backward(dims[i], self.p(0), input, &dact, gw[0].data_mut(), gb[0].data_mut(), None);
                } else {
                    let mut din = vec![0.0; dims[i].in_len()];
                    conv_backward(
                        dims[i],
                        self.p(2 * i),
                        input,
                        &dact,
                        gw[0].data_mut(),
                        gb[0].data_mut(),
                        Some(&mut din),
                    );
                    dact = din;
                }
            }
        }
        Ok(sums)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_arch() -> ArchDescriptor {
        ArchDescriptor {
            input_h: 8,
            input_w: 8,
            channels: vec![2, 3, 4],
            lstm_layers: 2,
            hidden: 3,
            head_hidden: 5,
            n_bins: 7,
        }
    }

    #[test]
    fn zero_frame_zero_bias_gives_zero_features() {
        let mut m = Model::init(small_arch(), 1).unwrap();
        for (name, t) in m.params_mut() {
            if name.starts_with("backbone.") && name.ends_with("bias") {
                t.fill(0.0);
            }
        }
        assert_eq!(m.backbone_forward(&[0.0; 64]).unwrap(), vec![0.0; 4]);
        assert!(m.backbone_forward(&[0.0; 63]).is_err());
    }

    #[test]
    fn zero_lstm_weights_give_zero_outputs() {
        let mut m = Model::init(small_arch(), 2).unwrap();
        for (name, t) in m.params_mut() {
            if name.starts_with("lstm.") {
                t.fill(0.0);
            }
        }
        let seq = vec![vec![1.0, -2.0, 3.0, 0.5]; 4];
        for h in m.lstm_forward(&seq).unwrap() {
            assert_eq!(h, vec![0.0; 3]);
        }
    }

    #[test]
    fn lstm_outputs_are_bounded() {
        let mut m = Model::init(small_arch(), 3).unwrap();
        for (_, t) in m.params_mut() {
            t.data_mut().iter_mut().for_each(|v| *v *= 50.0);
        }
        let seq: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64 * 10.0, -5.0, 2.0, 100.0]).collect();
        for h in m.lstm_forward(&seq).unwrap() {
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }

    #[test]
    fn head_is_a_distribution() {
        let m = Model::init(small_arch(), 4).unwrap();
        let p = m.detection_head(&[0.3, -0.9, 0.1]).unwrap();
        assert_eq!(p.len(), 7);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(m.detection_head(&[0.0; 2]).is_err());
    }

    #[test]
    fn descriptor_text_round_trip() {
        let a = small_arch();
        assert_eq!(ArchDescriptor::from_text(&a.to_text()).unwrap(), a);
        assert!(ArchDescriptor::from_text("kind=isti\nfoo=1").is_err());
    }

    #[test]
    fn layout_names_are_unique() {
        let layout = ArchDescriptor::default().param_layout();
        let mut names: Vec<_> = layout.iter().map(|(n, _)| n.clone()).collect();
        names.sort();
        names.dedup();
        assert_eq!(names.len(), layout.len());
    }
}
