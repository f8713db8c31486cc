//! Lightweight 1D CNN encoder, projection head and classifier.
//!
//! The input vector is read as a single-channel sequence of length `D`.
//! Each conv block is `conv (same padding) -> ReLU -> max-pool`; the last
//! block is flattened into a dense ReLU layer whose output (after dropout
//! in training mode) is the embedding. The projection head is
//! `Linear -> [BN] -> ReLU -> Linear -> [BN]`, the classifier a single
//! linear layer producing logits.
//!
//! FLOPs count one multiply-add as 2 operations over conv, dense and
//! classifier layers for a single-sample inference pass.

mod layers;
mod network;
mod params;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::{Error, Result};

pub use network::{
    classify, classify_backward, encode, encode_backward, forward_logits, project, project_backward,
    update_running_stats, ClassifierCache, EncoderCache, Mode, ProjectorCache, BN_EPS, BN_MOMENTUM,
};
pub use params::{weighted_mean, NamedTensor, ParameterSet, Submodel};

/// One conv block: `conv(kernel, stride, padding = kernel / 2) -> ReLU ->
/// max-pool(pool)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "one")]
    pub pool: usize,
}

fn one() -> usize {
    1
}

impl ConvSpec {
    fn out_len(&self, len: usize) -> usize {
        let pad = self.kernel / 2;
        if len + 2 * pad < self.kernel {
            return 0;
        }
        (len + 2 * pad - self.kernel) / self.stride + 1
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchitectureSpec {
    pub input_dim: usize,
    pub conv: Vec<ConvSpec>,
    pub embedding_dim: usize,
    pub projection_hidden: usize,
    pub projection_dim: usize,
    pub projection_bn_count: usize,
    pub dropout_rate: f64,
    pub num_classes: usize,
    pub param_budget: usize,
}

impl Default for ArchitectureSpec {
    fn default() -> Self {
        Self {
            input_dim: 122,
            conv: vec![
                ConvSpec { out_channels: 40, kernel: 3, stride: 1, pool: 2 },
                ConvSpec { out_channels: 40, kernel: 3, stride: 1, pool: 4 },
            ],
            embedding_dim: 64,
            projection_hidden: 64,
            projection_dim: 32,
            projection_bn_count: 0,
            dropout_rate: 0.2,
            num_classes: 5,
            param_budget: 55_000,
        }
    }
}

/// Shape bookkeeping derived from an [`ArchitectureSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct BlockShape {
    pub in_channels: usize,
    pub in_len: usize,
    pub out_channels: usize,
    pub conv_len: usize,
    pub pooled_len: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pool: usize,
}

impl ArchitectureSpec {
    pub fn with_input_dim(mut self, input_dim: usize) -> Self {
        self.input_dim = input_dim;
        self
    }

    pub fn with_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    pub(crate) fn blocks(&self) -> Vec<BlockShape> {
        let mut channels = 1;
        let mut len = self.input_dim;
        let mut out = Vec::with_capacity(self.conv.len());
        for c in &self.conv {
            let conv_len = c.out_len(len);
            let pooled_len = conv_len / c.pool.max(1);
            out.push(BlockShape {
                in_channels: channels,
                in_len: len,
                out_channels: c.out_channels,
                conv_len,
                pooled_len,
                kernel: c.kernel,
                stride: c.stride,
                pool: c.pool.max(1),
            });
            channels = c.out_channels;
            len = pooled_len;
        }
        out
    }

    /// Width of the flattened conv output feeding the dense layer.
    pub fn flat_dim(&self) -> usize {
        match self.blocks().last() {
            Some(b) => b.out_channels * b.pooled_len,
            None => self.input_dim,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.embedding_dim == 0 || self.num_classes == 0 {
            return Err(Error::Config("input, embedding and class dimensions must be positive".into()));
        }
        if self.projection_hidden == 0 || self.projection_dim == 0 {
            return Err(Error::Config("projection dimensions must be positive".into()));
        }
        if self.projection_bn_count > 2 {
            return Err(Error::Config("projection head supports at most 2 batch-norm layers".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout_rate must lie in [0, 1)".into()));
        }
        for (i, (c, b)) in self.conv.iter().zip(self.blocks()).enumerate() {
            if c.kernel == 0 || c.stride == 0 || c.out_channels == 0 {
                return Err(Error::Config(format!("conv block {i} has a zero-sized kernel, stride or width")));
            }
            if b.pooled_len == 0 {
                return Err(Error::Config(format!("conv block {i} reduces the sequence to zero length")));
            }
        }
        Ok(())
    }

    /// Tensor layout: `(name, group, shape, trainable)` in build order.
    pub(crate) fn tensor_layout(&self) -> Vec<(String, Submodel, Vec<usize>, bool)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks().iter().enumerate() {
            out.push((format!("encoder.conv{i}.weight"), Submodel::Encoder, vec![b.out_channels, b.in_channels, b.kernel], true));
            out.push((format!("encoder.conv{i}.bias"), Submodel::Encoder, vec![b.out_channels], true));
        }
        out.push(("encoder.dense.weight".into(), Submodel::Encoder, vec![self.embedding_dim, self.flat_dim()], true));
        out.push(("encoder.dense.bias".into(), Submodel::Encoder, vec![self.embedding_dim], true));

        let widths = [(self.projection_hidden, self.embedding_dim), (self.projection_dim, self.projection_hidden)];
        for (i, &(out_w, in_w)) in widths.iter().enumerate() {
            out.push((format!("projector.fc{i}.weight"), Submodel::Projector, vec![out_w, in_w], true));
            out.push((format!("projector.fc{i}.bias"), Submodel::Projector, vec![out_w], true));
            if i < self.projection_bn_count {
                out.push((format!("projector.bn{i}.gamma"), Submodel::Projector, vec![out_w], true));
                out.push((format!("projector.bn{i}.beta"), Submodel::Projector, vec![out_w], true));
                out.push((format!("projector.bn{i}.running_mean"), Submodel::Projector, vec![out_w], false));
                out.push((format!("projector.bn{i}.running_var"), Submodel::Projector, vec![out_w], false));
            }
        }

        out.push(("classifier.weight".into(), Submodel::Classifier, vec![self.num_classes, self.embedding_dim], true));
        out.push(("classifier.bias".into(), Submodel::Classifier, vec![self.num_classes], true));
        out
    }
}

/// Exact trainable parameter count over encoder, projector and classifier.
pub fn count_params(arch: &ArchitectureSpec) -> usize {
    arch.tensor_layout()
        .iter()
        .filter(|(_, _, _, trainable)| *trainable)
        .map(|(_, _, shape, _)| shape.iter().product::<usize>())
        .sum()
}

/// Trainable parameters of one submodel.
pub fn count_group_params(arch: &ArchitectureSpec, group: Submodel) -> usize {
    arch.tensor_layout()
        .iter()
        .filter(|(_, g, _, trainable)| *trainable && *g == group)
        .map(|(_, _, shape, _)| shape.iter().product::<usize>())
        .sum()
}

/// FLOPs of one single-sample inference pass (encoder + classifier),
/// multiply-add counted as 2.
pub fn count_flops(arch: &ArchitectureSpec) -> usize {
    let conv: usize = arch
        .blocks()
        .iter()
        .map(|b| b.out_channels * b.conv_len * b.in_channels * b.kernel)
        .sum();
    let dense = arch.flat_dim() * arch.embedding_dim;
    let classifier = arch.embedding_dim * arch.num_classes;
    2 * (conv + dense + classifier)
}

/// Fan-in of a weight tensor shaped `[out, in, (kernel)]`.
fn fan_in(shape: &[usize]) -> usize {
    shape.iter().skip(1).product::<usize>().max(1)
}

/// Initialised parameters: weights and biases uniform in
/// `±1/sqrt(fan_in)`, batch-norm scale 1 / shift 0, running variance 1.
pub fn build<R: Rng + ?Sized>(arch: &ArchitectureSpec, rng: &mut R) -> Result<ParameterSet> {
    arch.validate()?;
    let count = count_params(arch);
    if count > arch.param_budget {
        return Err(Error::Config(format!(
            "architecture has {count} trainable parameters, budget is {}",
            arch.param_budget
        )));
    }
    let layout = arch.tensor_layout();
    let mut tensors = Vec::with_capacity(layout.len());
    let mut last_fan_in = 1;
    for (name, group, shape, trainable) in layout {
        let len: usize = shape.iter().product();
        let data = if name.ends_with(".gamma") || name.ends_with(".running_var") {
            vec![1.0; len]
        } else if name.ends_with(".beta") || name.ends_with(".running_mean") {
            vec![0.0; len]
        } else {
            // biases share the fan-in of the weight preceding them
            if name.ends_with(".weight") {
                last_fan_in = fan_in(&shape);
            }
            let bound = 1.0 / math::sqrt(last_fan_in as f64);
            (0..len).map(|_| rng.random_range(-bound..bound)).collect()
        };
        tensors.push(NamedTensor { name, group, shape, trainable, data });
    }
    Ok(ParameterSet::new(tensors))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_architecture_fits_budget() {
        let arch = ArchitectureSpec::default();
        assert_eq!(arch.flat_dim(), 40 * 15);
        assert_eq!(count_params(&arch), 50_029);
        assert!(count_params(&arch) <= 55_000);
        assert_eq!(count_flops(&arch), 692_320);
        assert!(count_flops(&arch) <= 800_000);
    }

    #[test]
    fn single_linear_and_small_conv_counts() {
        // dense 122 -> 64 with bias, no conv blocks
        let linear = ArchitectureSpec {
            input_dim: 122,
            conv: vec![],
            embedding_dim: 64,
            ..ArchitectureSpec::default()
        };
        assert_eq!(count_group_params(&linear, Submodel::Encoder), 7872);

        let conv = ArchitectureSpec {
            conv: vec![ConvSpec { out_channels: 8, kernel: 3, stride: 1, pool: 1 }],
            ..ArchitectureSpec::default()
        };
        let conv_only = count_group_params(&conv, Submodel::Encoder) - (8 * 122 * 64 + 64);
        assert_eq!(conv_only, 32);
    }

    #[test]
    fn class_count_only_changes_classifier() {
        let five = ArchitectureSpec::default();
        let two = ArchitectureSpec::default().with_classes(2);
        assert_eq!(count_params(&five) - count_params(&two), 3 * 64 + 3);
        assert_eq!(
            count_group_params(&five, Submodel::Encoder),
            count_group_params(&two, Submodel::Encoder)
        );
    }

    #[test]
    fn build_is_deterministic_and_congruent() {
        let arch = ArchitectureSpec::default();
        let a = build(&arch, &mut seeded(1)).unwrap();
        let b = build(&arch, &mut seeded(1)).unwrap();
        let c = build(&arch, &mut seeded(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.is_congruent(&c));
        assert_eq!(a.trainable_len(), count_params(&arch));
    }

    #[test]
    fn budget_violation_reports_count() {
        let arch = ArchitectureSpec { param_budget: 1000, ..ArchitectureSpec::default() };
        match build(&arch, &mut seeded(0)) {
            Err(Error::Config(msg)) => assert!(msg.contains("50029"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_norm_adds_scale_shift_and_running_stats() {
        let arch = ArchitectureSpec { projection_bn_count: 2, ..ArchitectureSpec::default() };
        let p = build(&arch, &mut seeded(0)).unwrap();
        assert_eq!(count_params(&arch), 50_029 + 2 * 64 + 2 * 32);
        assert!(!p.get("projector.bn0.running_mean").unwrap().trainable);
        let plain = build(&ArchitectureSpec::default(), &mut seeded(0)).unwrap();
        assert!(plain.tensors().iter().all(|t| !t.name.contains(".bn")));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let arch = ArchitectureSpec { dropout_rate: 1.0, ..ArchitectureSpec::default() };
        assert!(arch.validate().is_err());
        let arch = ArchitectureSpec { input_dim: 4, ..ArchitectureSpec::default() };
        assert!(arch.validate().is_err());
    }
}
