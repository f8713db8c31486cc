//! Independent reference implementations used by several test targets.
//!
//! These are written as plain scalar loops, without the library's matrix
//! kernels, so agreement with the library is a meaningful check.

#![allow(dead_code)]

pub mod gradcheck;

use fedssl_core::model::{ArchitectureSpec, ConvSpec, ParameterSet};

pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    dot / (nu * nv)
}

/// NT-Xent by direct evaluation of every pair term. Returns `(sum, mean)`
/// over the `2B` directed pairs.
pub fn ntxent_oracle(za: &[Vec<f64>], zb: &[Vec<f64>], tau: f64, include_self: bool) -> (f64, f64) {
    let b = za.len();
    let all: Vec<&Vec<f64>> = za.iter().chain(zb.iter()).collect();
    let mut sum = 0.0;
    for i in 0..2 * b {
        let pos = if i < b { i + b } else { i - b };
        let s_pos = cosine(all[i], all[pos]) / tau;
        // log-sum-exp with an explicit shift, term by term
        let mut terms = Vec::new();
        for k in 0..2 * b {
            if k == i && !include_self {
                continue;
            }
            terms.push(cosine(all[i], all[k]) / tau);
        }
        let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = terms.iter().map(|t| (t - m).exp()).sum();
        sum += -(s_pos - m - denom.ln());
    }
    (sum, sum / (2 * b) as f64)
}

/// Accuracy and quantity-weighted precision/recall/F1 in percent, with
/// zero-denominator classes contributing 0.
pub fn metrics_oracle(counts: &[Vec<u64>]) -> (f64, f64, f64, f64) {
    let c = counts.len();
    let mut total = 0u64;
    let mut correct = 0u64;
    for t in 0..c {
        for p in 0..c {
            total += counts[t][p];
            if t == p {
                correct += counts[t][p];
            }
        }
    }
    let (mut wp, mut wr, mut wf) = (0.0, 0.0, 0.0);
    for k in 0..c {
        let tp = counts[k][k] as f64;
        let mut fp = 0.0;
        let mut fneg = 0.0;
        for j in 0..c {
            if j != k {
                fp += counts[j][k] as f64;
                fneg += counts[k][j] as f64;
            }
        }
        let p = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let r = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
        let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let share = (tp + fneg) / total as f64;
        wp += share * p;
        wr += share * r;
        wf += share * f;
    }
    (100.0 * correct as f64 / total as f64, 100.0 * wp, 100.0 * wr, 100.0 * wf)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() / scale <= tol
}

/// `|a - n| / max(|a|, |n|)` over whole vectors.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

pub const FD_STEP: f64 = 1e-6;

/// Central-difference gradient of `f` at `x`.
pub fn numeric_grad(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + FD_STEP;
            let up = f(&probe);
            probe[i] = orig - FD_STEP;
            let down = f(&probe);
            probe[i] = orig;
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

/// Trainable values of a parameter set, in tensor order.
pub fn flatten_trainable(p: &ParameterSet) -> Vec<f64> {
    p.tensors().iter().filter(|t| t.trainable).flat_map(|t| t.data.iter().copied()).collect()
}

/// Inverse of [`flatten_trainable`].
pub fn with_trainable(p: &ParameterSet, values: &[f64]) -> ParameterSet {
    let mut out = p.clone();
    let mut it = values.iter();
    for t in out.tensors_mut().iter_mut().filter(|t| t.trainable) {
        for v in t.data.iter_mut() {
            *v = *it.next().expect("value count matches trainable size");
        }
    }
    out
}

/// A small network with every layer type, for exhaustive checks.
pub fn tiny_arch(bn_count: usize, dropout: f64) -> ArchitectureSpec {
    ArchitectureSpec {
        input_dim: 12,
        conv: vec![
            ConvSpec { out_channels: 3, kernel: 3, stride: 1, pool: 2 },
            ConvSpec { out_channels: 2, kernel: 3, stride: 1, pool: 2 },
        ],
        embedding_dim: 6,
        projection_hidden: 5,
        projection_dim: 4,
        projection_bn_count: bn_count,
        dropout_rate: dropout,
        num_classes: 3,
        param_budget: 55_000,
    }
}
