//! Forward and backward kernels for the individual layer types.
//!
//! All kernels work on flat slices and accumulate parameter gradients, so a
//! batch is handled by calling backward once per example with the same
//! gradient buffers.

/// Spatial size after a 3x3, stride-2, pad-1 convolution.
pub fn conv_out_size(n: usize) -> usize {
    (n + 1) / 2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub cin: usize,
    pub cout: usize,
    pub h: usize,
    pub w: usize,
}

impl ConvDims {
    pub fn ho(&self) -> usize {
        conv_out_size(self.h)
    }
    pub fn wo(&self) -> usize {
        conv_out_size(self.w)
    }
    pub fn in_len(&self) -> usize {
        self.cin * self.h * self.w
    }
    pub fn out_len(&self) -> usize {
        self.cout * self.ho() * self.wo()
    }
}

/// 3x3 convolution, stride 2, zero padding 1. `weight` is `[cout, cin, 3, 3]`.
pub fn conv_forward(d: ConvDims, weight: &[f64], bias: &[f64], input: &[f64], out: &mut [f64]) {
    let (ho, wo) = (d.ho(), d.wo());
    for co in 0..d.cout {
        let plane = &mut out[co * ho * wo..(co + 1) * ho * wo];
        plane.iter_mut().for_each(|v| *v = bias[co]);
        for ci in 0..d.cin {
            let src = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let wv = weight[((co * d.cin + ci) * 3 + ky) * 3 + kx];
                    for oy in 0..ho {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let row = &src[iy as usize * d.w..(iy as usize + 1) * d.w];
                        let orow = &mut plane[oy * wo..(oy + 1) * wo];
                        for (ox, o) in orow.iter_mut().enumerate() {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < d.w as isize {
                                *o += wv * row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Accumulates weight and bias gradients; writes the input gradient when
/// `din` is given (it is overwritten, not accumulated).
pub fn conv_backward(
    d: ConvDims,
    weight: &[f64],
    input: &[f64],
    dout: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    mut din: Option<&mut [f64]>,
) {
    let (ho, wo) = (d.ho(), d.wo());
    if let Some(din) = din.as_deref_mut() {
        din.iter_mut().for_each(|v| *v = 0.0);
    }
    for co in 0..d.cout {
        let gplane = &dout[co * ho * wo..(co + 1) * ho * wo];
        dbias[co] += gplane.iter().sum::<f64>();
        for ci in 0..d.cin {
            let src = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..3 {
                for kx in 0..3 {
                    let widx = ((co * d.cin + ci) * 3 + ky) * 3 + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for oy in 0..ho {
                        let iy = (2 * oy + ky) as isize - 1;
                        if iy < 0 || iy >= d.h as isize {
                            continue;
                        }
                        let iy = iy as usize;
                        let grow = &gplane[oy * wo..(oy + 1) * wo];
                        for (ox, &g) in grow.iter().enumerate() {
                            let ix = (2 * ox + kx) as isize - 1;
                            if ix >= 0 && ix < d.w as isize {
                                acc += g * src[iy * d.w + ix as usize];
                            }
                        }
                        if let Some(din) = din.as_deref_mut() {
                            let drow = &mut din[ci * d.h * d.w + iy * d.w..ci * d.h * d.w + (iy + 1) * d.w];
                            for (ox, &g) in grow.iter().enumerate() {
                                let ix = (2 * ox + kx) as isize - 1;
                                if ix >= 0 && ix < d.w as isize {
                                    drow[ix as usize] += g * wv;
                                }
                            }
                        }
                    }
                    dweight[widx] += acc;
                }
            }
        }
    }
}

pub fn relu_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.max(0.0));
}

/// Zeroes gradient entries where the ReLU output was not positive.
pub fn relu_backward_inplace(activation: &[f64], grad: &mut [f64]) {
    for (g, &a) in grad.iter_mut().zip(activation) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}

/// Mean over the spatial plane of each channel.
pub fn gap_forward(channels: usize, input: &[f64]) -> Vec<f64> {
    let plane = input.len() / channels;
    input.chunks_exact(plane).map(|c| c.iter().sum::<f64>() / plane as f64).collect()
}

pub fn gap_backward(plane: usize, dout: &[f64]) -> Vec<f64> {
    let mut din = Vec::with_capacity(plane * dout.len());
    for &g in dout {
        din.extend(std::iter::repeat_n(g / plane as f64, plane));
    }
    din
}

/// `y = W x + b` with `W` of shape `[out, in]`.
pub fn linear_forward(weight: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, b)| b + weight[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

/// Accumulates `dW`, `db`; returns `dx`.
pub fn linear_backward(weight: &[f64], x: &[f64], dy: &[f64], dweight: &mut [f64], dbias: &mut [f64]) -> Vec<f64> {
    let n_in = x.len();
    let mut dx = vec![0.0; n_in];
    for (o, &g) in dy.iter().enumerate() {
        dbias[o] += g;
        let wrow = &weight[o * n_in..(o + 1) * n_in];
        let drow = &mut dweight[o * n_in..(o + 1) * n_in];
        for i in 0..n_in {
            drow[i] += g * x[i];
            dx[i] += g * wrow[i];
        }
    }
    dx
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Cached activations of one LSTM step.
#[derive(Debug, Clone)]
pub struct LstmStep {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate activations i, f, g, o (each of length `hidden`).
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    pub h: Vec<f64>,
}

/// One LSTM step. Gate blocks are stacked in the order i, f, g, o in
/// `w_ih` (`[4H, in]`), `w_hh` (`[4H, H]`) and `b` (`[4H]`).
pub fn lstm_step(w_ih: &[f64], w_hh: &[f64], b: &[f64], x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> LstmStep {
    let hidden = h_prev.len();
    let n_in = x.len();
    let mut gates = vec![0.0; 4 * hidden];
    for (r, z) in gates.iter_mut().enumerate() {
        let mut acc = b[r];
        acc += w_ih[r * n_in..(r + 1) * n_in].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        acc += w_hh[r * hidden..(r + 1) * hidden].iter().zip(h_prev).map(|(w, v)| w * v).sum::<f64>();
        *z = acc;
    }
    for k in 0..hidden {
        gates[k] = sigmoid(gates[k]);
        gates[hidden + k] = sigmoid(gates[hidden + k]);
        gates[2 * hidden + k] = gates[2 * hidden + k].tanh();
        gates[3 * hidden + k] = sigmoid(gates[3 * hidden + k]);
    }
    let mut c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, g, o) = (gates[k], gates[hidden + k], gates[2 * hidden + k], gates[3 * hidden + k]);
        c[k] = f * c_prev[k] + i * g;
        h[k] = o * c[k].tanh();
    }
    LstmStep { x: x.to_vec(), h_prev: h_prev.to_vec(), c_prev: c_prev.to_vec(), gates, c, h }
}

/// Backward through one step given `dh` (total gradient on this step's
/// hidden output) and `dc` (gradient flowing into this step's cell from the
/// next step). Accumulates parameter gradients and returns
/// `(dx, dh_prev, dc_prev)`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_step_backward(
    step: &LstmStep,
    w_ih: &[f64],
    w_hh: &[f64],
    dh: &[f64],
    dc_next: &[f64],
    dw_ih: &mut [f64],
    dw_hh: &mut [f64],
    db: &mut [f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hidden = dh.len();
    let n_in = step.x.len();
    let g = &step.gates;
    let mut dz = vec![0.0; 4 * hidden];
    let mut dc_prev = vec![0.0; hidden];
    for k in 0..hidden {
        let (i, f, gg, o) = (g[k], g[hidden + k], g[2 * hidden + k], g[3 * hidden + k]);
        let tc = step.c[k].tanh();
        let dc = dc_next[k] + dh[k] * o * (1.0 - tc * tc);
        let do_ = dh[k] * tc;
        let di = dc * gg;
        let dg = dc * i;
        let df = dc * step.c_prev[k];
        dc_prev[k] = dc * f;
        dz[k] = di * i * (1.0 - i);
        dz[hidden + k] = df * f * (1.0 - f);
        dz[2 * hidden + k] = dg * (1.0 - gg * gg);
        dz[3 * hidden + k] = do_ * o * (1.0 - o);
    }
    let mut dx = vec![0.0; n_in];
    let mut dh_prev = vec![0.0; hidden];
    for (r, &gz) in dz.iter().enumerate() {
        db[r] += gz;
        let wi = &w_ih[r * n_in..(r + 1) * n_in];
        let dwi = &mut dw_ih[r * n_in..(r + 1) * n_in];
        for j in 0..n_in {
            dwi[j] += gz * step.x[j];
            dx[j] += gz * wi[j];
        }
        let wh = &w_hh[r * hidden..(r + 1) * hidden];
        let dwh = &mut dw_hh[r * hidden..(r + 1) * hidden];
        for j in 0..hidden {
            dwh[j] += gz * step.h_prev[j];
            dh_prev[j] += gz * wh[j];
        }
    }
    (dx, dh_prev, dc_prev)
}
