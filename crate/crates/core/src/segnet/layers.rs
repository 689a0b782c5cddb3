//! Forward and backward kernels for the building blocks of the
//! encoder-decoder networks. Tensors are single samples in `C × H × W`
//! layout; batch norm is the only kernel that couples samples.

use serde::{Deserialize, Serialize};

pub const BN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Tensor {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    pub fn from_vec(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), channels * height * width, "tensor buffer size");
        Tensor {
            channels,
            height,
            width,
            data,
        }
    }

    #[inline]
    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    /// Channels `[start, end)` as a new tensor.
    pub fn channel_range(&self, start: usize, end: usize) -> Tensor {
        let n = self.plane_len();
        Tensor::from_vec(
            end - start,
            self.height,
            self.width,
            self.data[start * n..end * n].to_vec(),
        )
    }

    /// Stacks tensors of equal spatial size along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Tensor {
        let (h, w) = (parts[0].height, parts[0].width);
        let mut data = Vec::with_capacity(parts.iter().map(|t| t.data.len()).sum());
        let mut channels = 0;
        for p in parts {
            assert_eq!((p.height, p.width), (h, w), "concat spatial mismatch");
            data.extend_from_slice(&p.data);
            channels += p.channels;
        }
        Tensor::from_vec(channels, h, w, data)
    }

    pub fn add_assign(&mut self, other: &Tensor) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Placement of one convolution's parameters in a flat weight vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub weight_offset: usize,
    pub bias_offset: usize,
}

impl ConvSpec {
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.fan_in()
    }
}

/// Placement of one batch-norm layer: affine parameters in the weight vector,
/// running mean and variance in the statistics vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BnSpec {
    pub channels: usize,
    pub gamma_offset: usize,
    pub beta_offset: usize,
    pub mean_offset: usize,
    pub var_offset: usize,
}

fn im2col(x: &Tensor, k: usize) -> Vec<f64> {
    let (h, w) = (x.height, x.width);
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut cols = vec![0.0; x.channels * k * k * hw];
    for c in 0..x.channels {
        let plane = x.plane(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let dst_row = &mut dst[y * w..(y + 1) * w];
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xx in x0..x1 {
                        dst_row[xx] = src_row[(xx as isize + dx) as usize];
                    }
                }
            }
        }
    }
    cols
}

fn col2im(cols: &[f64], channels: usize, h: usize, w: usize, k: usize) -> Tensor {
    let pad = (k / 2) as isize;
    let hw = h * w;
    let mut out = Tensor::zeros(channels, h, w);
    for c in 0..channels {
        let plane = out.plane_mut(c);
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                let dy = ky as isize - pad;
                let dx = kx as isize - pad;
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = (-dx).max(0) as usize;
                    let x1 = (w as isize - dx).min(w as isize).max(0) as usize;
                    for xx in x0..x1 {
                        plane[sy as usize * w + (xx as isize + dx) as usize] += src[y * w + xx];
                    }
                }
            }
        }
    }
    out
}

/// `c[m×n] = beta·c + a[m×k]·b[k×n]` with explicit strides.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert!(c.len() >= m * n);
    // SAFETY: callers pass buffers sized for the given dimensions and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Stride-1 same-padded convolution.
pub fn conv_forward(params: &[f64], spec: &ConvSpec, x: &Tensor) -> Tensor {
    assert_eq!(x.channels, spec.in_channels, "conv input channels");
    let hw = x.plane_len();
    let kk = spec.fan_in();
    let weights = &params[spec.weight_offset..spec.weight_offset + spec.weight_len()];
    let bias = &params[spec.bias_offset..spec.bias_offset + spec.out_channels];
    let mut out = Tensor::zeros(spec.out_channels, x.height, x.width);
    for (o, &b) in bias.iter().enumerate() {
        out.plane_mut(o).fill(b);
    }
    let owned;
    let cols: &[f64] = if spec.kernel == 1 {
        &x.data
    } else {
        owned = im2col(x, spec.kernel);
        &owned
    };
    gemm(
        spec.out_channels,
        kk,
        hw,
        weights,
        kk as isize,
        1,
        cols,
        hw as isize,
        1,
        1.0,
        &mut out.data,
    );
    out
}

/// Accumulates parameter gradients into `grads` and returns the input gradient.
pub fn conv_backward(
    params: &[f64],
    spec: &ConvSpec,
    x: &Tensor,
    dy: &Tensor,
    grads: &mut [f64],
) -> Tensor {
    let hw = x.plane_len();
    let kk = spec.fan_in();
    let owned;
    let cols: &[f64] = if spec.kernel == 1 {
        &x.data
    } else {
        owned = im2col(x, spec.kernel);
        &owned
    };
    {
        let dw = &mut grads[spec.weight_offset..spec.weight_offset + spec.weight_len()];
        // dW += dY · colsᵀ
        gemm(
            spec.out_channels,
            hw,
            kk,
            &dy.data,
            hw as isize,
            1,
            cols,
            1,
            hw as isize,
            1.0,
            dw,
        );
    }
    {
        let db = &mut grads[spec.bias_offset..spec.bias_offset + spec.out_channels];
        for (o, g) in db.iter_mut().enumerate() {
            *g += dy.plane(o).iter().sum::<f64>();
        }
    }
    let weights = &params[spec.weight_offset..spec.weight_offset + spec.weight_len()];
    let mut dcols = vec![0.0; kk * hw];
    // dcols = Wᵀ · dY
    gemm(
        kk,
        spec.out_channels,
        hw,
        weights,
        1,
        kk as isize,
        &dy.data,
        hw as isize,
        1,
        0.0,
        &mut dcols,
    );
    if spec.kernel == 1 {
        Tensor::from_vec(x.channels, x.height, x.width, dcols)
    } else {
        col2im(&dcols, x.channels, x.height, x.width, spec.kernel)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; gradients flow through mean and variance.
    Train,
    /// Running statistics; batch norm is a fixed per-channel affine map.
    Eval,
}

/// Normalized activations and per-channel inverse std, kept for backward.
#[derive(Debug, Clone)]
pub struct BnCache {
    pub xhat: Vec<Tensor>,
    pub inv_std: Vec<f64>,
    /// Batch mean and biased variance (train mode only).
    pub batch_stats: Option<(Vec<f64>, Vec<f64>)>,
}

pub fn bn_forward(
    params: &[f64],
    stats: &[f64],
    spec: &BnSpec,
    xs: &[Tensor],
    mode: Mode,
) -> (Vec<Tensor>, BnCache) {
    let c = spec.channels;
    let gamma = &params[spec.gamma_offset..spec.gamma_offset + c];
    let beta = &params[spec.beta_offset..spec.beta_offset + c];
    let (mean, var, batch_stats) = match mode {
        Mode::Eval => (
            stats[spec.mean_offset..spec.mean_offset + c].to_vec(),
            stats[spec.var_offset..spec.var_offset + c].to_vec(),
            None,
        ),
        Mode::Train => {
            let count = (xs.len() * xs[0].plane_len()) as f64;
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ch in 0..c {
                let s: f64 = xs.iter().map(|x| x.plane(ch).iter().sum::<f64>()).sum();
                let m = s / count;
                let v: f64 = xs
                    .iter()
                    .map(|x| x.plane(ch).iter().map(|&v| (v - m) * (v - m)).sum::<f64>())
                    .sum();
                mean[ch] = m;
                var[ch] = v / count;
            }
            (mean.clone(), var.clone(), Some((mean, var)))
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BN_EPS).sqrt()).collect();
    let mut outs = Vec::with_capacity(xs.len());
    let mut xhats = Vec::with_capacity(xs.len());
    for x in xs {
        let mut xhat = x.clone();
        let mut y = Tensor::zeros(x.channels, x.height, x.width);
        for ch in 0..c {
            let (m, s, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for (xh, out) in xhat.plane_mut(ch).iter_mut().zip(y.plane_mut(ch)) {
                *xh = (*xh - m) * s;
                *out = g * *xh + b;
            }
        }
        xhats.push(xhat);
        outs.push(y);
    }
    (
        outs,
        BnCache {
            xhat: xhats,
            inv_std,
            batch_stats,
        },
    )
}

pub fn bn_backward(
    params: &[f64],
    spec: &BnSpec,
    cache: &BnCache,
    dys: &[Tensor],
    mode: Mode,
    grads: &mut [f64],
) -> Vec<Tensor> {
    let c = spec.channels;
    let gamma = &params[spec.gamma_offset..spec.gamma_offset + c];
    let count = (dys.len() * dys[0].plane_len()) as f64;
    let mut dxs: Vec<Tensor> = dys
        .iter()
        .map(|d| Tensor::zeros(d.channels, d.height, d.width))
        .collect();
    for ch in 0..c {
        let mut sum_dy = 0.0;
        let mut sum_dy_xhat = 0.0;
        for (dy, xhat) in dys.iter().zip(&cache.xhat) {
            for (&d, &xh) in dy.plane(ch).iter().zip(xhat.plane(ch)) {
                sum_dy += d;
                sum_dy_xhat += d * xh;
            }
        }
        grads[spec.gamma_offset + ch] += sum_dy_xhat;
        grads[spec.beta_offset + ch] += sum_dy;
        let g = gamma[ch];
        let s = cache.inv_std[ch];
        for ((dy, xhat), dx) in dys.iter().zip(&cache.xhat).zip(dxs.iter_mut()) {
            let dst = dx.plane_mut(ch);
            match mode {
                Mode::Eval => {
                    for (o, &d) in dst.iter_mut().zip(dy.plane(ch)) {
                        *o = d * g * s;
                    }
                }
                Mode::Train => {
                    // dxhat = g·dy; dx = s·(dxhat − mean(dxhat) − xhat·mean(dxhat·xhat))
                    let m_dxhat = g * sum_dy / count;
                    let m_dxhat_xhat = g * sum_dy_xhat / count;
                    for ((o, &d), &xh) in dst.iter_mut().zip(dy.plane(ch)).zip(xhat.plane(ch)) {
                        *o = s * (g * d - m_dxhat - xh * m_dxhat_xhat);
                    }
                }
            }
        }
    }
    dxs
}

pub fn relu_forward(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks `dy` by the positive entries of the ReLU output.
pub fn relu_backward(out: &Tensor, dy: &mut Tensor) {
    for (d, &o) in dy.data.iter_mut().zip(&out.data) {
        if o <= 0.0 {
            *d = 0.0;
        }
    }
}

/// 2×2 stride-2 max pooling. Returns pooled values and, for every output
/// position, the flat in-plane index of the winning input. Ties resolve to
/// the first maximum in raster order within the window.
pub fn max_pool2(x: &Tensor) -> (Tensor, Vec<u32>) {
    let (h2, w2) = (x.height / 2, x.width / 2);
    let mut out = Tensor::zeros(x.channels, h2, w2);
    let mut idx = vec![0u32; x.channels * h2 * w2];
    for c in 0..x.channels {
        let plane = x.plane(c);
        for y in 0..h2 {
            for xx in 0..w2 {
                let mut best_i = (2 * y) * x.width + 2 * xx;
                let mut best = plane[best_i];
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = (2 * y + dy) * x.width + 2 * xx + dx;
                    if plane[i] > best {
                        best = plane[i];
                        best_i = i;
                    }
                }
                let o = (c * h2 + y) * w2 + xx;
                out.data[o] = best;
                idx[o] = best_i as u32;
            }
        }
    }
    (out, idx)
}

/// Routes pooled gradients back to the recorded argmax positions.
pub fn max_pool2_backward(dy: &Tensor, idx: &[u32], height: usize, width: usize) -> Tensor {
    max_unpool2(dy, idx, height, width)
}

/// Places each value at its recorded argmax position in a zeroed map of the
/// pre-pooling size.
pub fn max_unpool2(x: &Tensor, idx: &[u32], height: usize, width: usize) -> Tensor {
    let mut out = Tensor::zeros(x.channels, height, width);
    let n = x.plane_len();
    for c in 0..x.channels {
        let src = x.plane(c);
        let dst = out.plane_mut(c);
        for (i, &v) in src.iter().enumerate() {
            dst[idx[c * n + i] as usize] = v;
        }
    }
    out
}

/// Gradient of unpooling: gather from the argmax positions.
pub fn max_unpool2_backward(dy: &Tensor, idx: &[u32], pooled_h: usize, pooled_w: usize) -> Tensor {
    let mut out = Tensor::zeros(dy.channels, pooled_h, pooled_w);
    let n = pooled_h * pooled_w;
    for c in 0..dy.channels {
        let src = dy.plane(c);
        let dst = out.plane_mut(c);
        for (i, d) in dst.iter_mut().enumerate() {
            *d = src[idx[c * n + i] as usize];
        }
    }
    out
}
