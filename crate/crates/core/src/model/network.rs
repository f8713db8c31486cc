use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use super::layers::{self, BatchNormCache, BlockOutput};
use super::{ArchitectureSpec, ParameterSet};
use crate::tensor::Matrix;
use crate::{Error, Result};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

/// Training mode enables dropout and batch statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Everything the encoder backward pass needs.
pub struct EncoderCache {
    input: Vec<f64>,
    blocks: Vec<BlockOutput>,
    dense_out: Vec<f64>,
    dropout_scale: Option<Vec<f64>>,
    n: usize,
}

impl EncoderCache {
    pub fn batch(&self) -> usize {
        self.n
    }
}

/// Embeddings `(n, embedding_dim)` for a batch `x: (n, input_dim)`.
pub fn encode<R: Rng + ?Sized>(
    params: &ParameterSet,
    arch: &ArchitectureSpec,
    x: &Matrix,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, EncoderCache)> {
    if x.cols() != arch.input_dim {
        return Err(Error::Shape(format!("encoder expects {} features, got {}", arch.input_dim, x.cols())));
    }
    let n = x.rows();
    if n == 0 {
        return Err(Error::Empty("encoder batch"));
    }
    let mut blocks = Vec::with_capacity(arch.conv.len());
    for (i, b) in arch.blocks().iter().enumerate() {
        let input = if i == 0 { x.as_slice() } else { &blocks.last().map(|o: &BlockOutput| &o.pooled).unwrap()[..] };
        let out = layers::conv_block_forward(
            input,
            n,
            b,
            params.data(&format!("encoder.conv{i}.weight")),
            params.data(&format!("encoder.conv{i}.bias")),
        );
        blocks.push(out);
    }
    let flat = arch.flat_dim();
    let e = arch.embedding_dim;
    let mut dense_out = {
        let input = blocks.last().map_or(x.as_slice(), |o| &o.pooled[..]);
        layers::dense_forward(input, n, flat, params.data("encoder.dense.weight"), params.data("encoder.dense.bias"), e)
    };
    dense_out.iter_mut().for_each(|v| *v = v.max(0.0));

    let mut emb = dense_out.clone();
    let dropout_scale = if mode == Mode::Train && arch.dropout_rate > 0.0 {
        let keep = 1.0 - arch.dropout_rate;
        let scale: Vec<f64> = (0..emb.len())
            .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        emb.iter_mut().zip(&scale).for_each(|(v, s)| *v *= s);
        Some(scale)
    } else {
        None
    };
    let cache = EncoderCache { input: x.as_slice().to_vec(), blocks, dense_out, dropout_scale, n };
    Ok((Matrix::from_vec(n, e, emb)?, cache))
}

/// Accumulates encoder parameter gradients for upstream `d_emb`.
pub fn encode_backward(
    params: &ParameterSet,
    arch: &ArchitectureSpec,
    cache: &EncoderCache,
    d_emb: &Matrix,
    grads: &mut ParameterSet,
) -> Result<()> {
    let n = cache.n;
    let e = arch.embedding_dim;
    d_emb.ensure_shape(n, e, "embedding gradient")?;
    let mut d = d_emb.as_slice().to_vec();
    if let Some(scale) = &cache.dropout_scale {
        d.iter_mut().zip(scale).for_each(|(g, s)| *g *= s);
    }
    d.iter_mut().zip(&cache.dense_out).for_each(|(g, &y)| {
        if y <= 0.0 {
            *g = 0.0
        }
    });

    let flat = arch.flat_dim();
    let blocks = arch.blocks();
    let dense_in = cache.blocks.last().map_or(&cache.input[..], |o| &o.pooled[..]);
    let want_dx = !blocks.is_empty();
    let mut dflat = {
        let (dw, db) = grads.data_pair_mut("encoder.dense.weight", "encoder.dense.bias");
        layers::dense_backward(dense_in, n, flat, params.data("encoder.dense.weight"), e, &d, dw, db, want_dx)
    };

    for i in (0..blocks.len()).rev() {
        let b = &blocks[i];
        let input = if i == 0 { &cache.input[..] } else { &cache.blocks[i - 1].pooled[..] };
        let wname = format!("encoder.conv{i}.weight");
        let bname = format!("encoder.conv{i}.bias");
        let (dw, db) = grads.data_pair_mut(&wname, &bname);
        let dpooled = dflat.take().expect("upstream gradient");
        dflat = layers::conv_block_backward(input, n, b, params.data(&wname), &cache.blocks[i], &dpooled, dw, db, i > 0);
    }
    Ok(())
}

struct ProjectorLayer {
    input: Vec<f64>,
    bn: Option<BatchNormCache>,
    /// Post-activation output (pre-ReLU values are not needed).
    output: Vec<f64>,
}

pub struct ProjectorCache {
    layers: Vec<ProjectorLayer>,
    n: usize,
}

impl ProjectorCache {
    /// Batch mean and variance of each normalised layer, for running stats.
    pub fn batch_stats(&self) -> impl Iterator<Item = (usize, &[f64], &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| l.bn.as_ref().map(|c| (i, &c.mean[..], &c.var[..])))
    }
}

fn projector_widths(arch: &ArchitectureSpec) -> [(usize, usize); 2] {
    [(arch.embedding_dim, arch.projection_hidden), (arch.projection_hidden, arch.projection_dim)]
}

/// Latents `(n, projection_dim)` for embeddings `(n, embedding_dim)`.
pub fn project(params: &ParameterSet, arch: &ArchitectureSpec, emb: &Matrix, mode: Mode) -> Result<(Matrix, ProjectorCache)> {
    if emb.cols() != arch.embedding_dim {
        return Err(Error::Shape(format!("projector expects {} inputs, got {}", arch.embedding_dim, emb.cols())));
    }
    let n = emb.rows();
    let mut x = emb.as_slice().to_vec();
    let mut cache = ProjectorCache { layers: Vec::with_capacity(2), n };
    for (i, &(inp, out)) in projector_widths(arch).iter().enumerate() {
        let mut y = layers::dense_forward(
            &x,
            n,
            inp,
            params.data(&format!("projector.fc{i}.weight")),
            params.data(&format!("projector.fc{i}.bias")),
            out,
        );
        let mut bn = None;
        if i < arch.projection_bn_count {
            let gamma = params.data(&format!("projector.bn{i}.gamma"));
            let beta = params.data(&format!("projector.bn{i}.beta"));
            match mode {
                Mode::Train => bn = Some(layers::batch_norm_train(&mut y, n, out, gamma, beta, BN_EPS)),
                Mode::Eval => layers::batch_norm_eval(
                    &mut y,
                    out,
                    gamma,
                    beta,
                    params.data(&format!("projector.bn{i}.running_mean")),
                    params.data(&format!("projector.bn{i}.running_var")),
                    BN_EPS,
                ),
            }
        }
        if i == 0 {
            y.iter_mut().for_each(|v| *v = v.max(0.0));
        }
        cache.layers.push(ProjectorLayer { input: x, bn, output: y.clone() });
        x = y;
    }
    Ok((Matrix::from_vec(n, arch.projection_dim, x)?, cache))
}

/// Accumulates projector gradients; returns the embedding gradient.
pub fn project_backward(
    params: &ParameterSet,
    arch: &ArchitectureSpec,
    cache: &ProjectorCache,
    d_latent: &Matrix,
    grads: &mut ParameterSet,
) -> Result<Matrix> {
    let n = cache.n;
    d_latent.ensure_shape(n, arch.projection_dim, "latent gradient")?;
    let mut d = d_latent.as_slice().to_vec();
    for (i, &(inp, out)) in projector_widths(arch).iter().enumerate().rev() {
        let layer = &cache.layers[i];
        if i == 0 {
            d.iter_mut().zip(&layer.output).for_each(|(g, &y)| {
                if y <= 0.0 {
                    *g = 0.0
                }
            });
        }
        if let Some(bn) = &layer.bn {
            let gname = format!("projector.bn{i}.gamma");
            let bname = format!("projector.bn{i}.beta");
            let (dg, dbeta) = grads.data_pair_mut(&gname, &bname);
            d = layers::batch_norm_backward(&d, n, out, params.data(&gname), bn, dg, dbeta);
        }
        let wname = format!("projector.fc{i}.weight");
        let bname = format!("projector.fc{i}.bias");
        let (dw, db) = grads.data_pair_mut(&wname, &bname);
        d = layers::dense_backward(&layer.input, n, inp, params.data(&wname), out, &d, dw, db, true)
            .expect("dx requested");
    }
    Matrix::from_vec(n, arch.embedding_dim, d)
}

/// Exponential update of batch-norm running statistics from a training
/// pass. No-op when the projector has no batch norm.
pub fn update_running_stats(params: &mut ParameterSet, cache: &ProjectorCache) {
    let n = cache.n as f64;
    for (i, mean, var) in cache.batch_stats() {
        let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
        let rm = params.data_mut(&format!("projector.bn{i}.running_mean"));
        rm.iter_mut().zip(mean).for_each(|(r, m)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * m);
        let rv = params.data_mut(&format!("projector.bn{i}.running_var"));
        rv.iter_mut().zip(var).for_each(|(r, v)| *r = (1.0 - BN_MOMENTUM) * *r + BN_MOMENTUM * v * unbiased);
    }
}

pub struct ClassifierCache {
    input: Vec<f64>,
    n: usize,
}

/// Logits `(n, num_classes)`; softmax is left to losses and metrics.
pub fn classify(params: &ParameterSet, arch: &ArchitectureSpec, emb: &Matrix) -> Result<(Matrix, ClassifierCache)> {
    if emb.cols() != arch.embedding_dim {
        return Err(Error::Shape(format!("classifier expects {} inputs, got {}", arch.embedding_dim, emb.cols())));
    }
    let n = emb.rows();
    let y = layers::dense_forward(
        emb.as_slice(),
        n,
        arch.embedding_dim,
        params.data("classifier.weight"),
        params.data("classifier.bias"),
        arch.num_classes,
    );
    Ok((Matrix::from_vec(n, arch.num_classes, y)?, ClassifierCache { input: emb.as_slice().to_vec(), n }))
}

/// Accumulates classifier gradients; returns the embedding gradient.
pub fn classify_backward(
    params: &ParameterSet,
    arch: &ArchitectureSpec,
    cache: &ClassifierCache,
    d_logits: &Matrix,
    grads: &mut ParameterSet,
) -> Result<Matrix> {
    d_logits.ensure_shape(cache.n, arch.num_classes, "logit gradient")?;
    let (dw, db) = grads.data_pair_mut("classifier.weight", "classifier.bias");
    let dx = layers::dense_backward(
        &cache.input,
        cache.n,
        arch.embedding_dim,
        params.data("classifier.weight"),
        arch.num_classes,
        d_logits.as_slice(),
        dw,
        db,
        true,
    )
    .expect("dx requested");
    Matrix::from_vec(cache.n, arch.embedding_dim, dx)
}

/// Eval-mode logits for a batch, without caches.
pub fn forward_logits(params: &ParameterSet, arch: &ArchitectureSpec, x: &Matrix) -> Result<Matrix> {
    let mut unused = crate::rng::seeded(0);
    let (emb, _) = encode(params, arch, x, Mode::Eval, &mut unused)?;
    classify(params, arch, &emb).map(|(logits, _)| logits)
}
