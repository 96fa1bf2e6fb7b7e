//! Forward-only layer kernels. All image tensors are H × W × C.

use rayon::prelude::*;

use super::gemm::{gemm_block, PackedFilters, MR};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Output pixels per parallel work item; a multiple of the micro-kernel height.
const ROW_BLOCK: usize = MR * 16;

/// Spatial output size of a sliding window; `None` when the window does not fit.
pub fn window_output(size: usize, window: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || window == 0 || window > size + 2 * pad {
        return None;
    }
    Some((size + 2 * pad - window) / stride + 1)
}

/// 2-D convolution. `kernel` is `filters × kh × kw × channels`, `bias` has one value per filter.
pub fn conv2d(
    input: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    let (filters, kh, kw, kc) = match kernel.shape()[..] {
        [f, kh, kw, kc] => (f, kh, kw, kc),
        _ => {
            return Err(Error::config(
                "conv2d",
                format!("kernel must be rank 4, got shape {:?}", kernel.shape()),
            ))
        }
    };
    if kc != c {
        return Err(Error::config(
            "conv2d",
            format!("kernel expects {kc} input channels, input has {c}"),
        ));
    }
    if bias.len() != filters {
        return Err(Error::config(
            "conv2d",
            format!("bias has {} values for {filters} filters", bias.len()),
        ));
    }
    let oh = window_output(h, kh, stride, pad);
    let ow = window_output(w, kw, stride, pad);
    let (oh, ow) = match (oh, ow) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::config(
                "conv2d",
                format!(
                    "{kh}×{kw} kernel with stride {stride} and pad {pad} does not fit a {h}×{w} input"
                ),
            ))
        }
    };

    let k = kh * kw * c;
    let packed = PackedFilters::pack(kernel.data(), filters, k);
    let src = input.data();
    let bias = bias.data();
    let pixels = oh * ow;
    let mut out = vec![0.0f32; pixels * filters];

    out.par_chunks_mut(ROW_BLOCK * filters)
        .enumerate()
        .for_each_init(
            || (Vec::new(), Vec::new()),
            |(cols, scratch), (block, chunk)| {
                let p0 = block * ROW_BLOCK;
                let rows = chunk.len() / filters;
                cols.clear();
                cols.resize(rows * k, 0.0);
                for (r, col) in cols.chunks_exact_mut(k).enumerate() {
                    let p = p0 + r;
                    let (oy, ox) = (p / ow, p % ow);
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let row = &mut col[ky * kw * c..(ky + 1) * kw * c];
                        if iy < 0 || iy >= h as isize {
                            row.fill(0.0);
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            let dst = &mut row[kx * c..(kx + 1) * c];
                            if ix < 0 || ix >= w as isize {
                                dst.fill(0.0);
                            } else {
                                let at = (iy as usize * w + ix as usize) * c;
                                dst.copy_from_slice(&src[at..at + c]);
                            }
                        }
                    }
                }
                gemm_block(cols, rows, &packed, bias, chunk, scratch);
            },
        );
    debug_assert_eq!(packed.n(), filters);
    Tensor::new(vec![oh, ow, filters], out)
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    relu_in_place(&mut out);
    out
}

pub fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

/// Max pooling with truncating borders (no partial windows).
pub fn maxpool(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    let (h, w, c) = input.hwc()?;
    let (oh, ow) = match (
        window_output(h, window, stride, 0),
        window_output(w, window, stride, 0),
    ) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::config(
                "maxpool",
                format!("window {window} stride {stride} does not fit a {h}×{w} input"),
            ))
        }
    };
    let src = input.data();
    let mut out = vec![f32::NEG_INFINITY; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut out[(oy * ow + ox) * c..(oy * ow + ox + 1) * c];
            for ky in 0..window {
                for kx in 0..window {
                    let at = ((oy * stride + ky) * w + ox * stride + kx) * c;
                    for (d, &s) in dst.iter_mut().zip(&src[at..at + c]) {
                        if s > *d {
                            *d = s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oh, ow, c], out)
}

/// `out[j] = bias[j] + Σ_i weights[j, i] · input[i]` over the flattened input.
pub fn fully_connected(input: &Tensor, weights: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (outputs, inputs) = match weights.shape()[..] {
        [o, i] => (o, i),
        _ => {
            return Err(Error::config(
                "fc",
                format!("weights must be rank 2, got shape {:?}", weights.shape()),
            ))
        }
    };
    if inputs != input.len() {
        return Err(Error::config(
            "fc",
            format!("weights expect {inputs} inputs, got {}", input.len()),
        ));
    }
    if bias.len() != outputs {
        return Err(Error::config(
            "fc",
            format!("bias has {} values for {outputs} outputs", bias.len()),
        ));
    }
    let x = input.data();
    let b = bias.data();
    let out: Vec<f32> = weights
        .data()
        .par_chunks_exact(inputs)
        .zip(b.par_iter())
        .map(|(row, &bj)| bj + dot(row, x))
        .collect();
    Tensor::from_vec(out)
}

/// Eight-lane dot product with a fixed reduction order.
fn dot(a: &[f32], b: &[f32]) -> f32 {
    let mut lanes = [0.0f32; 8];
    let ac = a.chunks_exact(8);
    let bc = b.chunks_exact(8);
    let (ar, br) = (ac.remainder(), bc.remainder());
    for (x, y) in ac.zip(bc) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0f32;
    for (x, y) in ar.iter().zip(br) {
        tail += x * y;
    }
    let quad = [
        lanes[0] + lanes[4],
        lanes[1] + lanes[5],
        lanes[2] + lanes[6],
        lanes[3] + lanes[7],
    ];
    (quad[0] + quad[2]) + (quad[1] + quad[3]) + tail
}

/// Max-subtracted softmax over a flat tensor.
pub fn softmax(input: &Tensor) -> Tensor {
    let max = input
        .data()
        .iter()
        .copied()
        .fold(f32::NEG_INFINITY, f32::max);
    let exps: Vec<f64> = input
        .data()
        .iter()
        .map(|&v| ((v - max) as f64).exp())
        .collect();
    let total: f64 = exps.iter().sum();
    let data = exps.iter().map(|&e| (e / total) as f32).collect();
    Tensor::new(input.shape().to_vec(), data).expect("shape preserved")
}

/// Cross-channel local response normalisation:
/// `y[c] = x[c] / (bias + alpha · Σ_{c' ∈ window(c)} x[c']²)^beta`, with a window of
/// `size` channels centred on `c` and clipped at the channel ends.
pub fn lrn(input: &Tensor, size: usize, alpha: f32, beta: f32, bias: f32) -> Result<Tensor> {
    if size == 0 || size % 2 == 0 {
        return Err(Error::config("lrn", format!("size must be odd, got {size}")));
    }
    let c = *input.shape().last().expect("non-empty shape");
    let half = size / 2;
    let mut out = input.clone();
    for (src, dst) in input
        .data()
        .chunks_exact(c)
        .zip(out.data_mut().chunks_exact_mut(c))
    {
        for ch in 0..c {
            let lo = ch.saturating_sub(half);
            let hi = (ch + half).min(c - 1);
            let sq: f64 = src[lo..=hi].iter().map(|&v| (v as f64) * (v as f64)).sum();
            let denom = (bias as f64 + alpha as f64 * sq).powf(beta as f64);
            dst[ch] = (src[ch] as f64 / denom) as f32;
        }
    }
    Ok(out)
}
