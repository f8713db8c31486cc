//! Batched layer kernels. Activations are flat `f64` buffers laid out
//! `(batch, channels, length)` or `(batch, features)`.

use alloc::vec;
use alloc::vec::Vec;

use super::BlockShape;
use crate::math;
use crate::tensor::{gemm, Operand};

/// `cols[t, ci * k + j] = x[ci, t * stride + j - pad]`, zero outside.
fn im2col(x: &[f64], b: &BlockShape, cols: &mut [f64]) {
    let kc = b.in_channels * b.kernel;
    let pad = b.kernel / 2;
    for t in 0..b.conv_len {
        let row = &mut cols[t * kc..(t + 1) * kc];
        for ci in 0..b.in_channels {
            let src = &x[ci * b.in_len..(ci + 1) * b.in_len];
            for j in 0..b.kernel {
                let pos = (t * b.stride + j) as isize - pad as isize;
                row[ci * b.kernel + j] = if pos >= 0 && (pos as usize) < b.in_len { src[pos as usize] } else { 0.0 };
            }
        }
    }
}

fn col2im_add(cols: &[f64], b: &BlockShape, dx: &mut [f64]) {
    let kc = b.in_channels * b.kernel;
    let pad = b.kernel / 2;
    for t in 0..b.conv_len {
        let row = &cols[t * kc..(t + 1) * kc];
        for ci in 0..b.in_channels {
            let dst = &mut dx[ci * b.in_len..(ci + 1) * b.in_len];
            for j in 0..b.kernel {
                let pos = (t * b.stride + j) as isize - pad as isize;
                if pos >= 0 && (pos as usize) < b.in_len {
                    dst[pos as usize] += row[ci * b.kernel + j];
                }
            }
        }
    }
}

/// Output of a conv block forward pass.
pub(crate) struct BlockOutput {
    /// `relu(maxpool(conv(x)))`, shape `(n, out_channels, pooled_len)`.
    pub pooled: Vec<f64>,
    /// Position inside the conv output that won each pooling window.
    pub argmax: Vec<u32>,
}

/// conv -> ReLU -> max-pool. Max-pool and ReLU commute, so pooling is done
/// on raw conv outputs and ReLU applied to the pooled values.
pub(crate) fn conv_block_forward(x: &[f64], n: usize, b: &BlockShape, weight: &[f64], bias: &[f64]) -> BlockOutput {
    let kc = b.in_channels * b.kernel;
    let in_size = b.in_channels * b.in_len;
    let out_size = b.out_channels * b.pooled_len;
    let mut cols = vec![0.0; b.conv_len * kc];
    let mut conv = vec![0.0; b.out_channels * b.conv_len];
    let mut pooled = vec![0.0; n * out_size];
    let mut argmax = vec![0u32; n * out_size];
    for s in 0..n {
        im2col(&x[s * in_size..(s + 1) * in_size], b, &mut cols);
        for (co, row) in conv.chunks_mut(b.conv_len).enumerate() {
            row.iter_mut().for_each(|v| *v = bias[co]);
        }
        gemm(
            b.out_channels,
            kc,
            b.conv_len,
            1.0,
            Operand::normal(weight, kc),
            Operand::transposed(&cols, kc),
            1.0,
            &mut conv,
        );
        let out = &mut pooled[s * out_size..(s + 1) * out_size];
        let arg = &mut argmax[s * out_size..(s + 1) * out_size];
        for co in 0..b.out_channels {
            let src = &conv[co * b.conv_len..(co + 1) * b.conv_len];
            for p in 0..b.pooled_len {
                let start = p * b.pool;
                let mut best = start;
                for t in start + 1..start + b.pool {
                    if src[t] > src[best] {
                        best = t;
                    }
                }
                out[co * b.pooled_len + p] = src[best].max(0.0);
                arg[co * b.pooled_len + p] = best as u32;
            }
        }
    }
    BlockOutput { pooled, argmax }
}

/// Backward through a conv block. Accumulates into `dweight`/`dbias` and
/// returns the input gradient when `want_dx`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_block_backward(
    x: &[f64],
    n: usize,
    b: &BlockShape,
    weight: &[f64],
    out: &BlockOutput,
    dpooled: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    let kc = b.in_channels * b.kernel;
    let in_size = b.in_channels * b.in_len;
    let out_size = b.out_channels * b.pooled_len;
    let mut cols = vec![0.0; b.conv_len * kc];
    let mut dconv = vec![0.0; b.out_channels * b.conv_len];
    let mut dcols = vec![0.0; b.conv_len * kc];
    let mut dx = if want_dx { vec![0.0; n * in_size] } else { Vec::new() };
    for s in 0..n {
        dconv.iter_mut().for_each(|v| *v = 0.0);
        let dp = &dpooled[s * out_size..(s + 1) * out_size];
        let pooled = &out.pooled[s * out_size..(s + 1) * out_size];
        let arg = &out.argmax[s * out_size..(s + 1) * out_size];
        let mut any = false;
        for co in 0..b.out_channels {
            for p in 0..b.pooled_len {
                let i = co * b.pooled_len + p;
                if pooled[i] > 0.0 && dp[i] != 0.0 {
                    dconv[co * b.conv_len + arg[i] as usize] += dp[i];
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        for (co, row) in dconv.chunks(b.conv_len).enumerate() {
            dbias[co] += row.iter().sum::<f64>();
        }
        im2col(&x[s * in_size..(s + 1) * in_size], b, &mut cols);
        // dW (Cout x kc) += dconv (Cout x L) * cols (L x kc)
        gemm(
            b.out_channels,
            b.conv_len,
            kc,
            1.0,
            Operand::normal(&dconv, b.conv_len),
            Operand::normal(&cols, kc),
            1.0,
            dweight,
        );
        if want_dx {
            // dcols (L x kc) = dconv^T (L x Cout) * W (Cout x kc)
            gemm(
                b.conv_len,
                b.out_channels,
                kc,
                1.0,
                Operand::transposed(&dconv, b.conv_len),
                Operand::normal(weight, kc),
                0.0,
                &mut dcols,
            );
            col2im_add(&dcols, b, &mut dx[s * in_size..(s + 1) * in_size]);
        }
    }
    want_dx.then_some(dx)
}

/// `y = x W^T + b` for `x: (n, in)`, `W: (out, in)`.
pub(crate) fn dense_forward(x: &[f64], n: usize, inputs: usize, weight: &[f64], bias: &[f64], outputs: usize) -> Vec<f64> {
    let mut y = Vec::with_capacity(n * outputs);
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    gemm(n, inputs, outputs, 1.0, Operand::normal(x, inputs), Operand::transposed(weight, inputs), 1.0, &mut y);
    y
}

/// Accumulates `dW += dy^T x`, `db += sum(dy)`; returns `dx = dy W` when asked.
#[allow(clippy::too_many_arguments)]
pub(crate) fn dense_backward(
    x: &[f64],
    n: usize,
    inputs: usize,
    weight: &[f64],
    outputs: usize,
    dy: &[f64],
    dweight: &mut [f64],
    dbias: &mut [f64],
    want_dx: bool,
) -> Option<Vec<f64>> {
    gemm(outputs, n, inputs, 1.0, Operand::transposed(dy, outputs), Operand::normal(x, inputs), 1.0, dweight);
    for row in dy.chunks(outputs) {
        for (b, g) in dbias.iter_mut().zip(row) {
            *b += g;
        }
    }
    want_dx.then(|| {
        let mut dx = vec![0.0; n * inputs];
        gemm(n, outputs, inputs, 1.0, Operand::normal(dy, outputs), Operand::normal(weight, inputs), 0.0, &mut dx);
        dx
    })
}

/// Batch-norm cache for one layer (training mode).
#[derive(Debug, Clone)]
pub(crate) struct BatchNormCache {
    pub xhat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// Normalises each feature over the batch (biased variance).
pub(crate) fn batch_norm_train(x: &mut [f64], n: usize, features: usize, gamma: &[f64], beta: &[f64], eps: f64) -> BatchNormCache {
    let mut mean = vec![0.0; features];
    let mut var = vec![0.0; features];
    for row in x.chunks(features) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in x.chunks(features) {
        for j in 0..features {
            let d = row[j] - mean[j];
            var[j] += d * d;
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / math::sqrt(v + eps)).collect();
    let mut xhat = vec![0.0; x.len()];
    for (row, hrow) in x.chunks_mut(features).zip(xhat.chunks_mut(features)) {
        for j in 0..features {
            hrow[j] = (row[j] - mean[j]) * inv_std[j];
            row[j] = gamma[j] * hrow[j] + beta[j];
        }
    }
    BatchNormCache { xhat, inv_std, mean, var }
}

pub(crate) fn batch_norm_eval(x: &mut [f64], features: usize, gamma: &[f64], beta: &[f64], mean: &[f64], var: &[f64], eps: f64) {
    for row in x.chunks_mut(features) {
        for j in 0..features {
            row[j] = gamma[j] * (row[j] - mean[j]) / math::sqrt(var[j] + eps) + beta[j];
        }
    }
}

/// Returns `dx`; accumulates `dgamma`, `dbeta`.
pub(crate) fn batch_norm_backward(
    dy: &[f64],
    n: usize,
    features: usize,
    gamma: &[f64],
    cache: &BatchNormCache,
    dgamma: &mut [f64],
    dbeta: &mut [f64],
) -> Vec<f64> {
    let mut sum_dy = vec![0.0; features];
    let mut sum_dy_xhat = vec![0.0; features];
    for (row, hrow) in dy.chunks(features).zip(cache.xhat.chunks(features)) {
        for j in 0..features {
            sum_dy[j] += row[j];
            sum_dy_xhat[j] += row[j] * hrow[j];
        }
    }
    for j in 0..features {
        dgamma[j] += sum_dy_xhat[j];
        dbeta[j] += sum_dy[j];
    }
    let nf = n as f64;
    let mut dx = vec![0.0; dy.len()];
    for ((drow, hrow), dxrow) in dy.chunks(features).zip(cache.xhat.chunks(features)).zip(dx.chunks_mut(features)) {
        for j in 0..features {
            dxrow[j] = gamma[j] * cache.inv_std[j] / nf * (nf * drow[j] - sum_dy[j] - hrow[j] * sum_dy_xhat[j]);
        }
    }
    dx
}
