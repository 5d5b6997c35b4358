//! Forward and backward kernels for every layer the backbone uses.
//!
//! Convolution is cross-correlation (no kernel flip) with zero padding.
//! Batch-parallel loops write disjoint per-sample slices and per-sample
//! partial gradients are reduced in index order, which keeps every result
//! bit-identical regardless of thread count.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{matmul_at_into, matmul_bt_into, matmul_into, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

// ---------------------------------------------------------------------------
// conv2d
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug)]
pub struct ConvDims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub h_out: usize,
    pub w_out: usize,
}

pub fn conv_dims(
    x_shape: &[usize],
    w_shape: &[usize],
    stride: usize,
    padding: usize,
) -> Result<ConvDims> {
    if x_shape.len() != 4 || w_shape.len() != 4 {
        return Err(Error::Shape(format!(
            "conv2d expects 4-d input and weight, got {x_shape:?} and {w_shape:?}"
        )));
    }
    let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let (f, wc, kh, kw) = (w_shape[0], w_shape[1], w_shape[2], w_shape[3]);
    if wc != c {
        return Err(Error::Shape(format!(
            "conv2d channel mismatch: input has {c} channels, weight expects {wc}"
        )));
    }
    if stride < 1 {
        return Err(Error::Shape("conv2d stride must be >= 1".into()));
    }
    let hp = h + 2 * padding;
    let wp = w + 2 * padding;
    if kh > hp || kw > wp {
        return Err(Error::Shape(format!(
            "conv2d kernel {kh}x{kw} exceeds padded input {hp}x{wp}"
        )));
    }
    Ok(ConvDims {
        n,
        c,
        h,
        w,
        f,
        kh,
        kw,
        stride,
        padding,
        h_out: (hp - kh) / stride + 1,
        w_out: (wp - kw) / stride + 1,
    })
}

fn pad_sample(x: &[f64], c: usize, h: usize, w: usize, p: usize) -> Vec<f64> {
    if p == 0 {
        return x.to_vec();
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; c * hp * wp];
    for ch in 0..c {
        for row in 0..h {
            let src = &x[ch * h * w + row * w..ch * h * w + row * w + w];
            let dst_off = ch * hp * wp + (row + p) * wp + p;
            out[dst_off..dst_off + w].copy_from_slice(src);
        }
    }
    out
}

fn im2col(xp: &[f64], d: &ConvDims, col: &mut [f64]) {
    let (hp, wp) = (d.h + 2 * d.padding, d.w + 2 * d.padding);
    let positions = d.h_out * d.w_out;
    for ch in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ch * d.kh + ki) * d.kw + kj;
                let dst = &mut col[row * positions..(row + 1) * positions];
                for oy in 0..d.h_out {
                    let src_row = ch * hp * wp + (oy * d.stride + ki) * wp + kj;
                    let dst_row = &mut dst[oy * d.w_out..(oy + 1) * d.w_out];
                    if d.stride == 1 {
                        dst_row.copy_from_slice(&xp[src_row..src_row + d.w_out]);
                    } else {
                        for (ox, v) in dst_row.iter_mut().enumerate() {
                            *v = xp[src_row + ox * d.stride];
                        }
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], d: &ConvDims, xp_grad: &mut [f64]) {
    let (hp, wp) = (d.h + 2 * d.padding, d.w + 2 * d.padding);
    let positions = d.h_out * d.w_out;
    for ch in 0..d.c {
        for ki in 0..d.kh {
            for kj in 0..d.kw {
                let row = (ch * d.kh + ki) * d.kw + kj;
                let src = &col[row * positions..(row + 1) * positions];
                for oy in 0..d.h_out {
                    let dst_row = ch * hp * wp + (oy * d.stride + ki) * wp + kj;
                    for ox in 0..d.w_out {
                        xp_grad[dst_row + ox * d.stride] += src[oy * d.w_out + ox];
                    }
                }
            }
        }
    }
}

fn crop_padding(xp: &[f64], c: usize, h: usize, w: usize, p: usize) -> Vec<f64> {
    if p == 0 {
        return xp.to_vec();
    }
    let (hp, wp) = (h + 2 * p, w + 2 * p);
    let mut out = vec![0.0; c * h * w];
    for ch in 0..c {
        for row in 0..h {
            let src_off = ch * hp * wp + (row + p) * wp + p;
            out[ch * h * w + row * w..ch * h * w + (row + 1) * w]
                .copy_from_slice(&xp[src_off..src_off + w]);
        }
    }
    out
}

/// Cross-correlation with zero padding:
/// `out[n,f,y,x] = b[f] + Σ_{c,i,j} x[n,c,y·s+i−p,x·s+j−p] · w[f,c,i,j]`.
pub fn conv2d_forward(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let d = conv_dims(x.shape(), w.shape(), stride, padding)?;
    if b.shape() != [d.f] {
        return Err(Error::Shape(format!(
            "conv2d bias must have shape [{}], got {:?}",
            d.f,
            b.shape()
        )));
    }
    let positions = d.h_out * d.w_out;
    let ckk = d.c * d.kh * d.kw;
    let sample_in = d.c * d.h * d.w;
    let sample_out = d.f * positions;
    let mut out = vec![0.0; d.n * sample_out];

    out.par_chunks_mut(sample_out)
        .zip(x.data().par_chunks(sample_in))
        .for_each(|(out_s, x_s)| {
            let xp = pad_sample(x_s, d.c, d.h, d.w, d.padding);
            let mut col = vec![0.0; ckk * positions];
            im2col(&xp, &d, &mut col);
            matmul_into(out_s, w.data(), &col, d.f, ckk, positions, 0.0);
            for f in 0..d.f {
                let bias = b.data()[f];
                for v in &mut out_s[f * positions..(f + 1) * positions] {
                    *v += bias;
                }
            }
        });

    Ok(Tensor::new(vec![d.n, d.f, d.h_out, d.w_out], out))
}

/// Gradients of conv2d w.r.t. input, weight, and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
) -> (Tensor, Tensor, Tensor) {
    let d = conv_dims(x.shape(), w.shape(), stride, padding).expect("checked at forward");
    let positions = d.h_out * d.w_out;
    let ckk = d.c * d.kh * d.kw;
    let sample_in = d.c * d.h * d.w;
    let sample_out = d.f * positions;

    struct PerSample {
        grad_x: Vec<f64>,
        grad_w: Vec<f64>,
    }

    let parts: Vec<PerSample> = (0..d.n)
        .into_par_iter()
        .map(|s| {
            let x_s = &x.data()[s * sample_in..(s + 1) * sample_in];
            let g_s = &grad_out.data()[s * sample_out..(s + 1) * sample_out];
            let xp = pad_sample(x_s, d.c, d.h, d.w, d.padding);
            let mut col = vec![0.0; ckk * positions];
            im2col(&xp, &d, &mut col);

            // grad_w_s = g_s(F×P) · colᵀ(P×CKK)
            let mut grad_w = vec![0.0; d.f * ckk];
            matmul_bt_into(&mut grad_w, g_s, &col, d.f, positions, ckk, 0.0);

            // grad_col = wᵀ(CKK×F) · g_s(F×P), scattered back to the image
            let mut grad_col = vec![0.0; ckk * positions];
            matmul_at_into(&mut grad_col, w.data(), g_s, ckk, d.f, positions, 0.0);
            let (hp, wp) = (d.h + 2 * d.padding, d.w + 2 * d.padding);
            let mut xp_grad = vec![0.0; d.c * hp * wp];
            col2im(&grad_col, &d, &mut xp_grad);
            let grad_x = crop_padding(&xp_grad, d.c, d.h, d.w, d.padding);

            PerSample { grad_x, grad_w }
        })
        .collect();

    let mut grad_x = vec![0.0; d.n * sample_in];
    let mut grad_w = vec![0.0; d.f * ckk];
    for (s, part) in parts.iter().enumerate() {
        grad_x[s * sample_in..(s + 1) * sample_in].copy_from_slice(&part.grad_x);
        for (dst, src) in grad_w.iter_mut().zip(&part.grad_w) {
            *dst += src;
        }
    }

    let mut grad_b = vec![0.0; d.f];
    for s in 0..d.n {
        let g_s = &grad_out.data()[s * sample_out..(s + 1) * sample_out];
        for f in 0..d.f {
            grad_b[f] += g_s[f * positions..(f + 1) * positions].iter().sum::<f64>();
        }
    }

    (
        Tensor::new(x.shape().to_vec(), grad_x),
        Tensor::new(w.shape().to_vec(), grad_w),
        Tensor::new(vec![d.f], grad_b),
    )
}

// ---------------------------------------------------------------------------
// batch normalization
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct BnCache {
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
}

/// Per-channel batch normalization over a `[N,C,H,W]` tensor.
///
/// Train mode normalizes with biased batch statistics and updates the running
/// stats in place (`running ← (1−momentum)·running + momentum·batch`); the
/// running variance uses the unbiased estimate. Eval mode normalizes with the
/// running stats and leaves them untouched.
pub fn batchnorm2d_forward(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running_mean: &mut Tensor,
    running_var: &mut Tensor,
    mode: Mode,
    momentum: f64,
    eps: f64,
) -> (Tensor, BnCache) {
    assert!(eps > 0.0, "batchnorm eps must be positive");
    let (n, c, h, w) = shape4(x);
    let hw = h * w;
    let m = n * hw;
    assert!(m >= 1);
    assert_eq!(gamma.shape(), [c]);
    assert_eq!(beta.shape(), [c]);

    let mut xhat = vec![0.0; x.len()];
    let mut inv_std = vec![0.0; c];
    let data = x.data();

    for ch in 0..c {
        let (mean, var) = match mode {
            Mode::Train => {
                let mut sum = 0.0;
                for s in 0..n {
                    let off = (s * c + ch) * hw;
                    sum += data[off..off + hw].iter().sum::<f64>();
                }
                let mean = sum / m as f64;
                let mut sq = 0.0;
                for s in 0..n {
                    let off = (s * c + ch) * hw;
                    sq += data[off..off + hw].iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                }
                let var = sq / m as f64;
                let unbiased = if m > 1 { sq / (m - 1) as f64 } else { var };
                running_mean.data_mut()[ch] =
                    (1.0 - momentum) * running_mean.data()[ch] + momentum * mean;
                running_var.data_mut()[ch] =
                    (1.0 - momentum) * running_var.data()[ch] + momentum * unbiased;
                (mean, var)
            }
            Mode::Eval => (running_mean.data()[ch], running_var.data()[ch]),
        };
        let istd = 1.0 / (var + eps).sqrt();
        inv_std[ch] = istd;
        for s in 0..n {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                xhat[i] = (data[i] - mean) * istd;
            }
        }
    }

    let g = gamma.data();
    let b = beta.data();
    let mut out = vec![0.0; x.len()];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                out[i] = g[ch] * xhat[i] + b[ch];
            }
        }
    }

    (
        Tensor::new(x.shape().to_vec(), out),
        BnCache {
            xhat: Tensor::new(x.shape().to_vec(), xhat),
            inv_std,
        },
    )
}

pub fn batchnorm2d_backward(
    cache: &BnCache,
    gamma: &Tensor,
    grad_out: &Tensor,
    mode: Mode,
) -> (Tensor, Tensor, Tensor) {
    let (n, c, h, w) = shape4(grad_out);
    let hw = h * w;
    let m = (n * hw) as f64;
    let xhat = cache.xhat.data();
    let g_out = grad_out.data();

    let mut grad_gamma = vec![0.0; c];
    let mut grad_beta = vec![0.0; c];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * hw;
            for i in off..off + hw {
                grad_gamma[ch] += g_out[i] * xhat[i];
                grad_beta[ch] += g_out[i];
            }
        }
    }

    let mut grad_x = vec![0.0; grad_out.len()];
    match mode {
        Mode::Train => {
            // dx = γ·istd·(g − mean(g) − x̂·mean(g·x̂)) per channel
            for ch in 0..c {
                let scale = gamma.data()[ch] * cache.inv_std[ch];
                let mean_g = grad_beta[ch] / m;
                let mean_gx = grad_gamma[ch] / m;
                for s in 0..n {
                    let off = (s * c + ch) * hw;
                    for i in off..off + hw {
                        grad_x[i] = scale * (g_out[i] - mean_g - xhat[i] * mean_gx);
                    }
                }
            }
        }
        Mode::Eval => {
            // running stats are constants: dx = g·γ·istd
            for ch in 0..c {
                let scale = gamma.data()[ch] * cache.inv_std[ch];
                for s in 0..n {
                    let off = (s * c + ch) * hw;
                    for i in off..off + hw {
                        grad_x[i] = g_out[i] * scale;
                    }
                }
            }
        }
    }

    (
        Tensor::new(grad_out.shape().to_vec(), grad_x),
        Tensor::new(vec![c], grad_gamma),
        Tensor::new(vec![c], grad_beta),
    )
}

// ---------------------------------------------------------------------------
// max pooling (2×2, stride 2, floor semantics)
// ---------------------------------------------------------------------------

/// 2×2/stride-2 max pooling; a trailing row or column is dropped when the
/// input side is odd (174→87, 87→43, 43→21, 21→10). Returns the argmax as
/// flat input indices for the backward pass; ties go to the first maximum in
/// scan order.
pub fn maxpool2d_forward(x: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (n, c, h, w) = shape4(x);
    if h < 2 || w < 2 {
        return Err(Error::Shape(format!(
            "maxpool2d needs spatial dims >= 2, got {h}x{w}"
        )));
    }
    let (ho, wo) = (h / 2, w / 2);
    let data = x.data();
    let mut out = vec![0.0; n * c * ho * wo];
    let mut argmax = vec![0usize; n * c * ho * wo];
    for s in 0..n {
        for ch in 0..c {
            let base = (s * c + ch) * h * w;
            let obase = (s * c + ch) * ho * wo;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best_idx = base + (2 * oy) * w + 2 * ox;
                    let mut best = data[best_idx];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if data[idx] > best {
                            best = data[idx];
                            best_idx = idx;
                        }
                    }
                    out[obase + oy * wo + ox] = best;
                    argmax[obase + oy * wo + ox] = best_idx;
                }
            }
        }
    }
    Ok((Tensor::new(vec![n, c, ho, wo], out), argmax))
}

pub fn maxpool2d_backward(x_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut grad = Tensor::zeros(x_shape.to_vec());
    let gd = grad.data_mut();
    for (i, &src) in argmax.iter().enumerate() {
        gd[src] += grad_out.data()[i];
    }
    grad
}

// ---------------------------------------------------------------------------
// relu
// ---------------------------------------------------------------------------

pub fn relu_forward(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at exactly x = 0.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let data: Vec<f64> = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

// ---------------------------------------------------------------------------
// linear
// ---------------------------------------------------------------------------

/// `out = x(N×d) · wᵀ(d×out) + b`.
pub fn linear_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (n, d) = shape2(x)?;
    let (o, wd) = shape2(w)?;
    if wd != d {
        return Err(Error::Shape(format!(
            "linear: input dim {d} does not match weight dim {wd}"
        )));
    }
    if b.shape() != [o] {
        return Err(Error::Shape(format!(
            "linear: bias must have shape [{o}], got {:?}",
            b.shape()
        )));
    }
    let mut out = vec![0.0; n * o];
    matmul_bt_into(&mut out, x.data(), w.data(), n, d, o, 0.0);
    for row in out.chunks_mut(o) {
        for (v, bias) in row.iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    Ok(Tensor::new(vec![n, o], out))
}

pub fn linear_backward(x: &Tensor, w: &Tensor, grad_out: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, d) = shape2(x).unwrap();
    let (o, _) = shape2(w).unwrap();
    let mut grad_x = vec![0.0; n * d];
    matmul_into(&mut grad_x, grad_out.data(), w.data(), n, o, d, 0.0);
    let mut grad_w = vec![0.0; o * d];
    matmul_at_into(&mut grad_w, grad_out.data(), x.data(), o, n, d, 0.0);
    let mut grad_b = vec![0.0; o];
    for row in grad_out.data().chunks(o) {
        for (g, v) in grad_b.iter_mut().zip(row) {
            *g += v;
        }
    }
    (
        Tensor::new(vec![n, d], grad_x),
        Tensor::new(vec![o, d], grad_w),
        Tensor::new(vec![o], grad_b),
    )
}

// ---------------------------------------------------------------------------
// log-softmax + NLL
// ---------------------------------------------------------------------------

/// Numerically stable row-wise log-softmax (max subtraction).
pub fn log_softmax_forward(x: &Tensor) -> Tensor {
    let (n, k) = shape2(x).expect("log_softmax expects [N,K]");
    assert!(k >= 2, "log_softmax needs at least two classes");
    let mut out = vec![0.0; n * k];
    for (row_in, row_out) in x.data().chunks(k).zip(out.chunks_mut(k)) {
        let max = row_in.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum = row_in.iter().map(|v| (v - max).exp()).sum::<f64>().ln() + max;
        for (o, v) in row_out.iter_mut().zip(row_in) {
            *o = v - log_sum;
        }
    }
    Tensor::new(vec![n, k], out)
}

pub fn log_softmax_backward(out: &Tensor, grad_out: &Tensor) -> Tensor {
    let (n, k) = shape2(out).unwrap();
    let mut grad = vec![0.0; n * k];
    for i in 0..n {
        let row_out = &out.data()[i * k..(i + 1) * k];
        let row_g = &grad_out.data()[i * k..(i + 1) * k];
        let g_sum: f64 = row_g.iter().sum();
        for j in 0..k {
            grad[i * k + j] = row_g[j] - row_out[j].exp() * g_sum;
        }
    }
    Tensor::new(vec![n, k], grad)
}

/// Mean over the batch of `−log_probs[i, target_i]`.
pub fn nll_loss_forward(log_probs: &Tensor, targets: &[usize]) -> Result<f64> {
    let (n, k) = shape2(log_probs)?;
    if targets.len() != n {
        return Err(Error::Shape(format!(
            "nll_loss: {n} rows but {} targets",
            targets.len()
        )));
    }
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        if t >= k {
            return Err(Error::InvalidInput(format!(
                "nll_loss: target {t} out of range for {k} classes"
            )));
        }
        total -= log_probs.data()[i * k + t];
    }
    Ok(total / n as f64)
}

pub fn nll_loss_backward(log_probs_shape: &[usize], targets: &[usize], grad_out: f64) -> Tensor {
    let n = log_probs_shape[0];
    let k = log_probs_shape[1];
    let mut grad = Tensor::zeros(vec![n, k]);
    let scale = grad_out / n as f64;
    for (i, &t) in targets.iter().enumerate() {
        grad.data_mut()[i * k + t] = -scale;
    }
    grad
}

// ---------------------------------------------------------------------------
// pooling heads
// ---------------------------------------------------------------------------

/// Spatial average of the channel outer product:
/// `b = (1/(h·w)) Σ_p f_p f_pᵀ`, flattened row-major to `C²`.
pub fn bilinear_pool_forward(x: &Tensor) -> Tensor {
    let (n, c, h, w) = shape4(x);
    let p = h * w;
    let mut out = vec![0.0; n * c * c];
    out.par_chunks_mut(c * c)
        .zip(x.data().par_chunks(c * p))
        .for_each(|(out_s, f)| {
            // f is C×P; out_s = (1/P)·f·fᵀ
            matmul_bt_into(out_s, f, f, c, p, c, 0.0);
            let inv = 1.0 / p as f64;
            for v in out_s.iter_mut() {
                *v *= inv;
            }
        });
    Tensor::new(vec![n, c * c], out)
}

pub fn bilinear_pool_backward(x: &Tensor, grad_out: &Tensor) -> Tensor {
    let (n, c, h, w) = shape4(x);
    let p = h * w;
    let mut grad = vec![0.0; x.len()];
    grad.par_chunks_mut(c * p)
        .zip(x.data().par_chunks(c * p))
        .zip(grad_out.data().par_chunks(c * c))
        .for_each(|((gx, f), g)| {
            // gx = (1/P)·(G + Gᵀ)·f
            let mut sym = vec![0.0; c * c];
            for a in 0..c {
                for b in 0..c {
                    sym[a * c + b] = (g[a * c + b] + g[b * c + a]) / p as f64;
                }
            }
            matmul_into(gx, &sym, f, c, c, p, 0.0);
        });
    Tensor::new(x.shape().to_vec(), grad)
}

/// Mean across channels at every spatial position: `[N,C,H,W] → [N,H·W]`.
pub fn spectral_average_forward(x: &Tensor) -> Tensor {
    let (n, c, h, w) = shape4(x);
    let p = h * w;
    let mut out = vec![0.0; n * p];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * p;
            for i in 0..p {
                out[s * p + i] += x.data()[off + i];
            }
        }
        for v in &mut out[s * p..(s + 1) * p] {
            *v /= c as f64;
        }
    }
    Tensor::new(vec![n, p], out)
}

pub fn spectral_average_backward(x_shape: &[usize], grad_out: &Tensor) -> Tensor {
    let (n, c, h, w) = (x_shape[0], x_shape[1], x_shape[2], x_shape[3]);
    let p = h * w;
    let mut grad = vec![0.0; n * c * p];
    for s in 0..n {
        for ch in 0..c {
            let off = (s * c + ch) * p;
            for i in 0..p {
                grad[off + i] = grad_out.data()[s * p + i] / c as f64;
            }
        }
    }
    Tensor::new(x_shape.to_vec(), grad)
}

// ---------------------------------------------------------------------------
// helpers
// ---------------------------------------------------------------------------

pub(crate) fn shape4(t: &Tensor) -> (usize, usize, usize, usize) {
    let s = t.shape();
    assert_eq!(s.len(), 4, "expected 4-d tensor, got {s:?}");
    (s[0], s[1], s[2], s[3])
}

pub(crate) fn shape2(t: &Tensor) -> Result<(usize, usize)> {
    let s = t.shape();
    if s.len() != 2 {
        return Err(Error::Shape(format!("expected 2-d tensor, got {s:?}")));
    }
    Ok((s[0], s[1]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec())
    }

    #[test]
    fn conv_shape_matches_front_layer_geometry() {
        // 3×350×350 through a 5×5/stride-2/pad-1 conv with 16 filters
        let d = conv_dims(&[1, 3, 350, 350], &[16, 3, 5, 5], 2, 1).unwrap();
        assert_eq!((d.h_out, d.w_out), (174, 174));
    }

    #[test]
    fn conv_identity_kernel() {
        let x = Tensor::full(vec![1, 1, 4, 4], 1.0);
        let w = t(&[1, 1, 1, 1], &[1.0]);
        let b = t(&[1], &[0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 4, 4]);
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_hand_summed_windows() {
        let x = t(&[1, 1, 3, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let w = Tensor::full(vec![1, 1, 2, 2], 1.0);
        let b = t(&[1], &[0.0]);
        let y = conv2d_forward(&x, &w, &b, 1, 0).unwrap();
        assert_eq!(y.shape(), [1, 1, 2, 2]);
        assert_eq!(y.data(), &[12.0, 16.0, 24.0, 28.0]);
    }

    #[test]
    fn conv_channel_mismatch_is_an_error() {
        let x = Tensor::zeros(vec![1, 3, 8, 8]);
        let w = Tensor::zeros(vec![4, 2, 3, 3]);
        let b = Tensor::zeros(vec![4]);
        assert!(conv2d_forward(&x, &w, &b, 1, 1).is_err());
    }

    #[test]
    fn batchnorm_train_standardizes_channels() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let gamma = t(&[1], &[1.0]);
        let beta = t(&[1], &[0.0]);
        let mut rm = Tensor::zeros(vec![1]);
        let mut rv = Tensor::full(vec![1], 1.0);
        let (y, cache) =
            batchnorm2d_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Train, 0.1, 1e-5);
        // mean 2.5, biased var 1.25
        let istd = 1.0 / (1.25f64 + 1e-5).sqrt();
        for (i, &v) in x.data().iter().enumerate() {
            assert!((y.data()[i] - (v - 2.5) * istd).abs() < 1e-12);
        }
        assert!((cache.inv_std[0] - istd).abs() < 1e-12);
        // running stats moved toward batch stats (unbiased var 5/3)
        assert!((rm.item() - 0.25).abs() < 1e-12);
        assert!((rv.item() - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn batchnorm_eval_is_affine_with_running_stats() {
        let x = t(&[1, 1, 1, 3], &[-1.0, 0.0, 1.0]);
        let gamma = t(&[1], &[2.0]);
        let beta = t(&[1], &[3.0]);
        let mut rm = Tensor::zeros(vec![1]);
        let mut rv = Tensor::full(vec![1], 1.0);
        let (y, _) =
            batchnorm2d_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Eval, 0.1, 1e-12);
        for (o, &v) in y.data().iter().zip(x.data()) {
            assert!((o - (2.0 * v + 3.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn batchnorm_single_element_does_not_blow_up() {
        let x = t(&[1, 1, 1, 1], &[7.0]);
        let gamma = t(&[1], &[1.0]);
        let beta = t(&[1], &[0.0]);
        let mut rm = Tensor::zeros(vec![1]);
        let mut rv = Tensor::full(vec![1], 1.0);
        let (y, _) =
            batchnorm2d_forward(&x, &gamma, &beta, &mut rm, &mut rv, Mode::Train, 0.1, 1e-5);
        assert!(y.all_finite());
        assert!(y.item().abs() < 1e-6);
    }

    #[test]
    fn maxpool_floor_semantics() {
        for (input, expected) in [(174usize, 87usize), (87, 43), (43, 21), (21, 10)] {
            let x = Tensor::zeros(vec![1, 1, input, input]);
            let (y, _) = maxpool2d_forward(&x).unwrap();
            assert_eq!(y.shape(), [1, 1, expected, expected]);
        }
    }

    #[test]
    fn maxpool_takes_window_max() {
        let x = t(&[1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let (y, argmax) = maxpool2d_forward(&x).unwrap();
        assert_eq!(y.data(), &[4.0]);
        assert_eq!(argmax, vec![3]);
    }

    #[test]
    fn relu_clamps_and_masks_gradient() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        let y = relu_forward(&x);
        assert_eq!(y.data(), &[0.0, 0.0, 2.0]);
        let g = relu_backward(&t(&[2], &[-0.5, 0.5]), &t(&[2], &[1.0, 1.0]));
        assert_eq!(g.data(), &[0.0, 1.0]);
    }

    #[test]
    fn linear_hand_example() {
        let x = t(&[1, 2], &[1.0, 2.0]);
        let w = t(&[1, 2], &[3.0, 4.0]);
        let b = t(&[1], &[5.0]);
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), &[16.0]);
    }

    #[test]
    fn linear_identity() {
        let x = t(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let w = t(&[2, 2], &[1.0, 0.0, 0.0, 1.0]);
        let b = Tensor::zeros(vec![2]);
        let y = linear_forward(&x, &w, &b).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn linear_dim_mismatch_is_error() {
        let x = t(&[1, 3], &[1.0, 2.0, 3.0]);
        let w = t(&[1, 2], &[1.0, 1.0]);
        let b = Tensor::zeros(vec![1]);
        assert!(linear_forward(&x, &w, &b).is_err());
    }

    #[test]
    fn log_softmax_symmetric_and_stable() {
        let y = log_softmax_forward(&t(&[1, 2], &[0.0, 0.0]));
        assert!((y.data()[0] - 0.5f64.ln()).abs() < 1e-15);
        assert!((y.data()[1] - 0.5f64.ln()).abs() < 1e-15);

        let y = log_softmax_forward(&t(&[1, 2], &[1000.0, 0.0]));
        assert!(y.all_finite());
        assert!(y.data()[0].abs() < 1e-12);
        assert!((y.data()[1] + 1000.0).abs() < 1e-9);
    }

    #[test]
    fn log_softmax_direct_values() {
        let y = log_softmax_forward(&t(&[1, 2], &[1.0, 2.0]));
        assert!((y.data()[0] - (-1.313261687518223)).abs() < 1e-12);
        assert!((y.data()[1] - (-0.313261687518223)).abs() < 1e-12);
    }

    #[test]
    fn log_softmax_rows_exponentiate_to_one() {
        let y = log_softmax_forward(&t(&[2, 3], &[0.3, -2.0, 5.0, 1.0, 1.0, 1.0]));
        for row in y.data().chunks(3) {
            let sum: f64 = row.iter().map(|v| v.exp()).sum();
            assert!((sum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn nll_loss_examples() {
        // perfect prediction
        let lp = t(&[1, 2], &[0.0, -50.0]);
        assert_eq!(nll_loss_forward(&lp, &[0]).unwrap(), 0.0);
        // uniform two-class
        let lp = t(&[1, 2], &[0.5f64.ln(), 0.5f64.ln()]);
        assert!((nll_loss_forward(&lp, &[1]).unwrap() - 2.0f64.ln()).abs() < 1e-15);
        // lookup
        let lp = t(&[1, 2], &[-0.1, -2.4]);
        assert!((nll_loss_forward(&lp, &[1]).unwrap() - 2.4).abs() < 1e-15);
        // out of range
        assert!(nll_loss_forward(&lp, &[2]).is_err());
    }

    #[test]
    fn bilinear_pool_constant_feature_vector() {
        // f equal to v at every position → outer product of v with itself
        let c = 3;
        let (h, w) = (2, 2);
        let v = [1.0, -2.0, 0.5];
        let mut data = vec![0.0; c * h * w];
        for ch in 0..c {
            for p in 0..h * w {
                data[ch * h * w + p] = v[ch];
            }
        }
        let x = Tensor::new(vec![1, c, h, w], data);
        let y = bilinear_pool_forward(&x);
        assert_eq!(y.shape(), [1, 9]);
        for a in 0..c {
            for b in 0..c {
                assert!((y.data()[a * c + b] - v[a] * v[b]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bilinear_pool_basis_vector_single_position() {
        let c = 4;
        let k = 2;
        let mut data = vec![0.0; c];
        data[k] = 1.0;
        let x = Tensor::new(vec![1, c, 1, 1], data);
        let y = bilinear_pool_forward(&x);
        for (i, &v) in y.data().iter().enumerate() {
            if i == k * c + k {
                assert_eq!(v, 1.0);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    #[test]
    fn spectral_average_identical_and_cancelling_channels() {
        let m = [1.0, 2.0, 3.0, 4.0];
        let mut data = Vec::new();
        data.extend_from_slice(&m);
        data.extend_from_slice(&m);
        let x = Tensor::new(vec![1, 2, 2, 2], data);
        let y = spectral_average_forward(&x);
        assert_eq!(y.data(), &m);

        let mut data = Vec::new();
        data.extend_from_slice(&m);
        data.extend(m.iter().map(|v| -v));
        let x = Tensor::new(vec![1, 2, 2, 2], data);
        let y = spectral_average_forward(&x);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}
