//! Training objectives and their gradients.
//!
//! * NT-Xent over weak/strong latent pairs (client contrastive phase).
//! * Cross-entropy (server supervised phase).
//! * FixMatch, UDA and CR consistency terms and the FedProx proximal term
//!   for the comparison methods.
//!
//! Softmax-style reductions use max-subtracted log-sum-exp throughout.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{exp, ln, log_sum_exp, sqrt};
use crate::model::{ParameterSet, Submodel};
use crate::tensor::{gemm, Matrix, Operand};
use crate::{Error, Result};

/// Probabilities are clamped below at this value before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContrastiveConfig {
    pub temperature: f64,
    /// Keep the anchor's similarity with itself in the denominator (the
    /// literal formula); off by default, following SimCLR.
    pub include_self_term: bool,
}

impl Default for ContrastiveConfig {
    fn default() -> Self {
        Self { temperature: 0.5, include_self_term: false }
    }
}

/// Latents of the weak (`z_a`) and strong (`z_b`) views, row `i` of each
/// coming from the same source sample.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentBatch {
    pub z_a: Matrix,
    pub z_b: Matrix,
}

impl LatentBatch {
    pub fn new(z_a: Matrix, z_b: Matrix) -> Result<Self> {
        if z_a.shape() != z_b.shape() {
            return Err(Error::Shape(alloc::format!(
                "view latents differ: {:?} vs {:?}",
                z_a.shape(),
                z_b.shape()
            )));
        }
        if z_a.rows() == 0 {
            return Err(Error::Empty("latent batch"));
        }
        Ok(Self { z_a, z_b })
    }

    pub fn len(&self) -> usize {
        self.z_a.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.z_a.rows() == 0
    }

    /// Row `r` of the stacked `[z_a; z_b]` matrix.
    fn stacked_row(&self, r: usize) -> &[f64] {
        let b = self.len();
        if r < b {
            self.z_a.row(r)
        } else {
            self.z_b.row(r - b)
        }
    }
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

fn norm(u: &[f64]) -> f64 {
    sqrt(dot(u, u))
}

/// Cosine similarity; errors on a zero vector.
pub fn cosine_sim(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Shape(alloc::format!("vectors of length {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// `L(a_i, b_i)` for a 0-based anchor `i`.
pub fn ntxent_pair(i: usize, batch: &LatentBatch, cfg: &ContrastiveConfig) -> Result<f64> {
    anchor_loss(i, batch, cfg)
}

/// Loss of stacked anchor `r` (`r < B`: weak view `a_r`; otherwise strong
/// view `b_{r-B}`), positive at the other view of the same sample.
fn anchor_loss(r: usize, batch: &LatentBatch, cfg: &ContrastiveConfig) -> Result<f64> {
    let b = batch.len();
    if r >= 2 * b {
        return Err(Error::Shape(alloc::format!("anchor {r} outside batch of {b}")));
    }
    let anchor = batch.stacked_row(r);
    let pos = if r < b { r + b } else { r - b };
    let inv_t = 1.0 / cfg.temperature;
    let positive = cosine_sim(anchor, batch.stacked_row(pos))? * inv_t;
    let mut logits = Vec::with_capacity(2 * b);
    for c in 0..2 * b {
        if c == r && !cfg.include_self_term {
            continue;
        }
        logits.push(cosine_sim(anchor, batch.stacked_row(c))? * inv_t);
    }
    Ok(log_sum_exp(logits.iter().copied()) - positive)
}

/// NT-Xent of a batch: `sum` over all `2B` directed pairs, and their mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NtXent {
    pub sum: f64,
    pub mean: f64,
}

fn validate_temperature(cfg: &ContrastiveConfig) -> Result<()> {
    if cfg.temperature > 0.0 && cfg.temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::Config("contrastive temperature must be positive".into()))
    }
}

/// Batch NT-Xent value only.
pub fn ntxent_batch(batch: &LatentBatch, cfg: &ContrastiveConfig) -> Result<NtXent> {
    ntxent_with_grad(batch, cfg).map(|(v, _)| v)
}

/// Batch NT-Xent and the gradient of its **mean** w.r.t. `z_a`, `z_b`.
pub fn ntxent_with_grad(batch: &LatentBatch, cfg: &ContrastiveConfig) -> Result<(NtXent, LatentBatch)> {
    validate_temperature(cfg)?;
    let b = batch.len();
    if b == 0 {
        return Err(Error::Empty("latent batch"));
    }
    let d = batch.z_a.cols();
    let m = 2 * b;
    let inv_t = 1.0 / cfg.temperature;

    // Unit rows of [z_a; z_b].
    let mut units = Vec::with_capacity(m * d);
    let mut norms = Vec::with_capacity(m);
    for r in 0..m {
        let row = batch.stacked_row(r);
        let n = norm(row);
        if n == 0.0 {
            return Err(Error::ZeroVector);
        }
        norms.push(n);
        units.extend(row.iter().map(|v| v / n));
    }
    // sim[r, c] = u_r . u_c / tau
    let mut sim = vec![0.0; m * m];
    gemm(m, d, m, inv_t, Operand::normal(&units, d), Operand::transposed(&units, d), 0.0, &mut sim);

    // dL/dsim, accumulated row by row: softmax over the denominator set
    // minus the indicator of the positive.
    let mut g = vec![0.0; m * m];
    let mut sum = 0.0;
    for r in 0..m {
        let pos = if r < b { r + b } else { r - b };
        let row = &sim[r * m..(r + 1) * m];
        let allowed = |c: usize| cfg.include_self_term || c != r;
        let lse = log_sum_exp((0..m).filter(|&c| allowed(c)).map(|c| row[c]));
        sum += lse - row[pos];
        let grow = &mut g[r * m..(r + 1) * m];
        for c in (0..m).filter(|&c| allowed(c)) {
            grow[c] = exp(row[c] - lse);
        }
        grow[pos] -= 1.0;
    }
    let mean = sum / m as f64;

    // d(mean)/dU = (G + G^T) U / (tau * m)
    let scale = inv_t / m as f64;
    let mut du = vec![0.0; m * d];
    gemm(m, m, d, scale, Operand::normal(&g, m), Operand::normal(&units, d), 0.0, &mut du);
    gemm(m, m, d, scale, Operand::transposed(&g, m), Operand::normal(&units, d), 1.0, &mut du);

    // Through the normalisation: dz = (du - u (u . du)) / |z|
    let mut dz = vec![0.0; m * d];
    for r in 0..m {
        let u = &units[r * d..(r + 1) * d];
        let gu = &du[r * d..(r + 1) * d];
        let proj = dot(u, gu);
        for j in 0..d {
            dz[r * d + j] = (gu[j] - u[j] * proj) / norms[r];
        }
    }
    let dz_b = dz.split_off(b * d);
    let grads = LatentBatch { z_a: Matrix::from_vec(b, d, dz)?, z_b: Matrix::from_vec(b, d, dz_b)? };
    Ok((NtXent { sum, mean }, grads))
}

/// Row-wise softmax.
pub fn softmax(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let lse = log_sum_exp(row.iter().copied());
        row.iter_mut().for_each(|v| *v = exp(*v - lse));
    }
    out
}

fn log_softmax_row(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row.iter().copied());
    row.iter().map(|v| v - lse).collect()
}

/// One-hot rows for class indices.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Matrix> {
    let mut m = Matrix::zeros(labels.len(), classes);
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::LabelRange { label: l, classes });
        }
        m.set(i, l, 1.0);
    }
    Ok(m)
}

/// Mean cross-entropy of softmax(logits) against target distributions,
/// with `p` clamped at [`PROB_FLOOR`]; returns the logit gradient.
pub fn cross_entropy(logits: &Matrix, targets: &Matrix) -> Result<(f64, Matrix)> {
    if logits.shape() != targets.shape() {
        return Err(Error::Shape(alloc::format!(
            "logits {:?} vs targets {:?}",
            logits.shape(),
            targets.shape()
        )));
    }
    let n = logits.rows();
    if n == 0 {
        return Err(Error::Empty("cross-entropy batch"));
    }
    let floor = ln(PROB_FLOOR);
    let mut total = 0.0;
    let mut grad = Matrix::zeros(n, logits.cols());
    for i in 0..n {
        let logp = log_softmax_row(logits.row(i));
        let y = targets.row(i);
        // Only classes whose probability is above the floor carry gradient.
        let mut live_mass = 0.0;
        for c in 0..logp.len() {
            if logp[c] > floor {
                total -= y[c] * logp[c];
                live_mass += y[c];
            } else {
                total -= y[c] * floor;
            }
        }
        let g = grad.row_mut(i);
        for c in 0..logp.len() {
            let live_y = if logp[c] > floor { y[c] } else { 0.0 };
            g[c] = (exp(logp[c]) * live_mass - live_y) / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

/// Cross-entropy against class indices.
pub fn cross_entropy_labels(logits: &Matrix, labels: &[usize]) -> Result<(f64, Matrix)> {
    let targets = one_hot(labels, logits.cols())?;
    cross_entropy(logits, &targets)
}

/// FixMatch unlabeled term: hard pseudo-labels from weak-view predictions
/// (softmax of `weak / temperature`), kept where the confidence reaches
/// `threshold`, scored by cross-entropy on the strong view and averaged
/// over the whole batch. Returns the gradient w.r.t. the strong logits;
/// the weak branch is treated as constant.
pub fn fixmatch_loss(weak: &Matrix, strong: &Matrix, threshold: f64, temperature: f64) -> Result<(f64, Matrix)> {
    if weak.shape() != strong.shape() {
        return Err(Error::Shape("weak and strong logits differ in shape".into()));
    }
    let n = weak.rows();
    let mut grad = Matrix::zeros(n, strong.cols());
    if n == 0 {
        return Ok((0.0, grad));
    }
    let mut sharpened = weak.clone();
    sharpened.scale(1.0 / temperature);
    let probs = softmax(&sharpened);
    let pseudo = probs.argmax_rows();
    let floor = ln(PROB_FLOOR);
    let mut total = 0.0;
    for i in 0..n {
        if probs.get(i, pseudo[i]) < threshold {
            continue;
        }
        let logp = log_softmax_row(strong.row(i));
        let target = pseudo[i];
        if logp[target] > floor {
            total -= logp[target];
            let g = grad.row_mut(i);
            for c in 0..logp.len() {
                g[c] = (exp(logp[c]) - f64::from(u8::from(c == target))) / n as f64;
            }
        } else {
            total -= floor;
        }
    }
    Ok((total / n as f64, grad))
}

/// KL divergence `sum q (ln q - ln p)` per row, averaged; `q` and `p` are
/// probability rows.
pub fn kl_divergence(q: &Matrix, p: &Matrix) -> Result<f64> {
    if q.shape() != p.shape() || q.rows() == 0 {
        return Err(Error::Shape("KL inputs must be equal, non-empty shapes".into()));
    }
    let mut total = 0.0;
    for i in 0..q.rows() {
        for (&qc, &pc) in q.row(i).iter().zip(p.row(i)) {
            if qc > 0.0 {
                total += qc * (ln(qc) - ln(pc.max(PROB_FLOOR)));
            }
        }
    }
    Ok(total / q.rows() as f64)
}

/// UDA consistency: KL(sharpened weak || strong) with the weak side held
/// constant. Returns the gradient w.r.t. the strong logits.
pub fn uda_consistency(weak: &Matrix, strong: &Matrix, temperature: f64) -> Result<(f64, Matrix)> {
    if weak.shape() != strong.shape() {
        return Err(Error::Shape("weak and strong logits differ in shape".into()));
    }
    let n = weak.rows();
    if n == 0 {
        return Ok((0.0, Matrix::zeros(0, strong.cols())));
    }
    let mut sharpened = weak.clone();
    sharpened.scale(1.0 / temperature);
    let q = softmax(&sharpened);
    let mut total = 0.0;
    let mut grad = Matrix::zeros(n, strong.cols());
    for i in 0..n {
        let logp = log_softmax_row(strong.row(i));
        let qrow = q.row(i);
        for c in 0..logp.len() {
            if qrow[c] > 0.0 {
                total += qrow[c] * (ln(qrow[c]) - logp[c]);
            }
        }
        let g = grad.row_mut(i);
        for c in 0..logp.len() {
            g[c] = (exp(logp[c]) - qrow[c]) / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

/// Representation consistency: `MSE(a, b) + (1 - mean_i cos(a_i, b_i))`,
/// equal weights. Returns gradients for both views.
pub fn cr_consistency(a: &Matrix, b: &Matrix) -> Result<(f64, Matrix, Matrix)> {
    if a.shape() != b.shape() {
        return Err(Error::Shape("representation batches differ in shape".into()));
    }
    let (n, d) = a.shape();
    if n == 0 || d == 0 {
        return Err(Error::Empty("representation batch"));
    }
    let elems = (n * d) as f64;
    let mut mse = 0.0;
    let mut cos_sum = 0.0;
    let mut ga = Matrix::zeros(n, d);
    let mut gb = Matrix::zeros(n, d);
    for i in 0..n {
        let (u, v) = (a.row(i), b.row(i));
        let (nu, nv) = (norm(u), norm(v));
        if nu == 0.0 || nv == 0.0 {
            return Err(Error::ZeroVector);
        }
        let c = dot(u, v) / (nu * nv);
        cos_sum += c;
        let (gu, gv) = (ga.row_mut(i), gb.row_mut(i));
        for j in 0..d {
            let diff = u[j] - v[j];
            mse += diff * diff;
            // d/du of -(1/n) cos = -(1/n) (v/(|u||v|) - c u/|u|^2)
            let dcos_u = v[j] / (nu * nv) - c * u[j] / (nu * nu);
            gu[j] = 2.0 * diff / elems - dcos_u / n as f64;
        }
        for j in 0..d {
            let diff = u[j] - v[j];
            let dcos_v = u[j] / (nu * nv) - c * v[j] / (nv * nv);
            gv[j] = -2.0 * diff / elems - dcos_v / n as f64;
        }
    }
    Ok((mse / elems + 1.0 - cos_sum / n as f64, ga, gb))
}

/// Proximal term `(mu / 2) |local - global|^2` over trainable tensors of
/// `groups`.
pub fn fedprox_term(local: &ParameterSet, global: &ParameterSet, mu: f64, groups: &[Submodel]) -> Result<f64> {
    Ok(0.5 * mu * local.squared_distance(global, groups)?)
}

/// Adds `mu (local - global)` to `grads` for trainable tensors of `groups`.
pub fn fedprox_grad(
    local: &ParameterSet,
    global: &ParameterSet,
    mu: f64,
    groups: &[Submodel],
    grads: &mut ParameterSet,
) -> Result<()> {
    local.ensure_congruent(global)?;
    local.ensure_congruent(grads)?;
    for ((g, l), w) in grads.tensors_mut().iter_mut().zip(local.tensors()).zip(global.tensors()) {
        if l.trainable && groups.contains(&l.group) {
            for ((gv, lv), wv) in g.data.iter_mut().zip(&l.data).zip(&w.data) {
                *gv += mu * (lv - wv);
            }
        }
    }
    Ok(())
}

/// Mean of the per-sample squared distance, exposed for diagnostics.
pub fn mean_squared_error(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() || a.rows() == 0 {
        return Err(Error::Shape("MSE inputs must be equal, non-empty shapes".into()));
    }
    let s: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.as_slice().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(rows: usize, cols: usize, v: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_sim(&[3.0, 4.0], &[3.0, 4.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine_sim(&[1.0, 1.0], &[1.0, 0.0]).unwrap() - core::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
        assert_eq!(cosine_sim(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::ZeroVector));
    }

    #[test]
    fn lone_positive_pair() {
        let batch = LatentBatch::new(m(1, 2, &[1.0, 0.0]), m(1, 2, &[1.0, 0.0])).unwrap();
        let excl = ContrastiveConfig { temperature: 1.0, include_self_term: false };
        let incl = ContrastiveConfig { temperature: 1.0, include_self_term: true };
        assert!(ntxent_pair(0, &batch, &excl).unwrap().abs() < 1e-12);
        assert!((ntxent_pair(0, &batch, &incl).unwrap() - core::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_negatives_example() {
        // -log(e / (e + 2)) = ln(e + 2) - 1
        let expected = ln(core::f64::consts::E + 2.0) - 1.0;
        assert!((expected - 0.5514).abs() < 1e-4);
        let z = m(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        let batch = LatentBatch::new(z.clone(), z).unwrap();
        let cfg = ContrastiveConfig { temperature: 1.0, include_self_term: false };
        assert!((ntxent_pair(0, &batch, &cfg).unwrap() - expected).abs() < 1e-12);
        let v = ntxent_batch(&batch, &cfg).unwrap();
        assert!((v.sum - 4.0 * expected).abs() < 1e-12);
        assert!((v.mean - expected).abs() < 1e-12);
    }

    #[test]
    fn ntxent_is_scale_invariant() {
        let za = m(3, 2, &[1.0, 0.2, -0.3, 0.9, 0.5, 0.5]);
        let zb = m(3, 2, &[0.8, 0.1, -0.2, 1.0, 0.7, 0.2]);
        let cfg = ContrastiveConfig::default();
        let v1 = ntxent_batch(&LatentBatch::new(za.clone(), zb.clone()).unwrap(), &cfg).unwrap();
        let (mut za10, mut zb10) = (za, zb);
        za10.scale(10.0);
        zb10.scale(10.0);
        let v2 = ntxent_batch(&LatentBatch::new(za10, zb10).unwrap(), &cfg).unwrap();
        assert!((v1.sum - v2.sum).abs() < 1e-12);
    }

    #[test]
    fn ntxent_rejects_zero_latent_and_bad_temperature() {
        let za = m(1, 2, &[0.0, 0.0]);
        let zb = m(1, 2, &[1.0, 0.0]);
        let batch = LatentBatch::new(za, zb).unwrap();
        assert_eq!(ntxent_batch(&batch, &ContrastiveConfig::default()), Err(Error::ZeroVector));
        let ok = LatentBatch::new(m(1, 1, &[1.0]), m(1, 1, &[1.0])).unwrap();
        let cfg = ContrastiveConfig { temperature: 0.0, include_self_term: false };
        assert!(ntxent_batch(&ok, &cfg).is_err());
        assert!(LatentBatch::new(Matrix::zeros(0, 2), Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn cross_entropy_examples() {
        let uniform = Matrix::zeros(1, 5);
        let (loss, _) = cross_entropy_labels(&uniform, &[2]).unwrap();
        assert!((loss - ln(5.0)).abs() < 1e-12);

        let confident = m(1, 3, &[1000.0, 0.0, 0.0]);
        let (loss, _) = cross_entropy_labels(&confident, &[0]).unwrap();
        assert!(loss.abs() < 1e-12);

        // wrong and saturated: clamped at -ln(1e-12)
        let (loss, grad) = cross_entropy_labels(&confident, &[1]).unwrap();
        assert!((loss + ln(PROB_FLOOR)).abs() < 1e-9);
        assert!(grad.as_slice().iter().all(|g| *g == 0.0));

        // N = 2: mean of per-sample NLLs, evaluated by hand
        let logits = m(2, 2, &[0.0, 0.0, 2.0, 0.0]);
        let (loss, _) = cross_entropy_labels(&logits, &[0, 1]).unwrap();
        let nll0 = ln(2.0);
        let nll1 = -ln(1.0 / (exp(2.0) + 1.0));
        assert!((loss - (nll0 + nll1) / 2.0).abs() < 1e-12);
        assert!(cross_entropy_labels(&logits, &[0]).is_err());
    }

    #[test]
    fn fixmatch_examples() {
        let weak = m(2, 3, &[3.0, 0.0, 0.0, 0.0, 2.0, 0.5]);
        let strong = m(2, 3, &[1.0, 0.5, 0.0, 0.0, 0.1, 0.2]);
        let (loss, grad) = fixmatch_loss(&weak, &strong, 1.01, 1.0).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.as_slice().iter().all(|g| *g == 0.0));

        let (loss, _) = fixmatch_loss(&weak, &strong, 0.0, 1.0).unwrap();
        let (ce, _) = cross_entropy_labels(&strong, &[0, 1]).unwrap();
        assert!((loss - ce).abs() < 1e-12);
    }

    #[test]
    fn uda_examples() {
        let l = m(2, 4, &[0.3, -1.0, 2.0, 0.0, 1.0, 1.0, 0.0, -0.5]);
        let (loss, _) = uda_consistency(&l, &l, 1.0).unwrap();
        assert!(loss.abs() < 1e-12);
        // one-hot (very sharp) vs uniform
        let weak = m(1, 5, &[60.0, 0.0, 0.0, 0.0, 0.0]);
        let strong = Matrix::zeros(1, 5);
        let (loss, _) = uda_consistency(&weak, &strong, 0.4).unwrap();
        assert!((loss - ln(5.0)).abs() < 1e-9);
    }

    #[test]
    fn cr_examples() {
        let a = m(2, 3, &[1.0, 2.0, 3.0, -1.0, 0.5, 0.0]);
        let (loss, _, _) = cr_consistency(&a, &a).unwrap();
        assert!(loss.abs() < 1e-12);
        let u = m(1, 2, &[1.0, 0.0]);
        let v = m(1, 2, &[0.0, 1.0]);
        let (loss, _, _) = cr_consistency(&u, &v).unwrap();
        assert!((loss - (1.0 + 1.0)).abs() < 1e-12); // MSE = (1 + 1) / 2
        let w = m(1, 2, &[2.0, 0.0]);
        let (loss, _, _) = cr_consistency(&u, &w).unwrap();
        assert!((loss - 0.5).abs() < 1e-12); // cosine term vanishes
        assert_eq!(cr_consistency(&u, &Matrix::zeros(1, 2)).unwrap_err(), Error::ZeroVector);
    }

    #[test]
    fn fedprox_examples() {
        use crate::model::NamedTensor;
        let p = |v: f64| {
            ParameterSet::new(vec![NamedTensor {
                name: "encoder.w".into(),
                group: Submodel::Encoder,
                shape: vec![2],
                trainable: true,
                data: vec![v, 0.0],
            }])
        };
        let g = [Submodel::Encoder];
        assert_eq!(fedprox_term(&p(1.0), &p(1.0), 0.3, &g).unwrap(), 0.0);
        assert_eq!(fedprox_term(&p(1.0), &p(0.0), 0.0, &g).unwrap(), 0.0);
        assert_eq!(fedprox_term(&p(1.0), &p(0.0), 2.0, &g).unwrap(), 1.0);
    }
}
