//! Weak/strong noise views of traffic vectors.
//!
//! A positive pair is `(x + weak noise, x + strong noise)` for the same
//! source row. One pair of noise scales is drawn per batch and shared by
//! every sample in it; the noise itself is drawn per sample.

use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::features::{FeatureLayout, FeatureVector};
use crate::math;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentationPolicy {
    pub weak_sigma_range: [f64; 2],
    pub strong_sigma_range: [f64; 2],
    pub strong_mask_fraction: f64,
    pub clip_to_unit: bool,
}

impl Default for AugmentationPolicy {
    fn default() -> Self {
        Self {
            weak_sigma_range: [0.001, 0.05],
            strong_sigma_range: [0.10, 0.40],
            strong_mask_fraction: 0.10,
            clip_to_unit: true,
        }
    }
}

impl AugmentationPolicy {
    pub fn validate(&self) -> Result<()> {
        let [wl, wh] = self.weak_sigma_range;
        let [sl, sh] = self.strong_sigma_range;
        if !(wl > 0.0 && wl <= wh && sl > 0.0 && sl <= sh) {
            return Err(Error::Config("augmentation ranges must be positive with low <= high".into()));
        }
        if wh >= sh {
            return Err(Error::Config("weak noise range must lie below the strong range".into()));
        }
        if !(0.0..1.0).contains(&self.strong_mask_fraction) {
            return Err(Error::Config("strong_mask_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedPair {
    /// Weak view.
    pub a: FeatureVector,
    /// Strong view.
    pub b: FeatureVector,
    pub source_index: usize,
}

/// Pairs for one batch plus the noise scales drawn for it.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
    pub pairs: Vec<AugmentedPair>,
}

fn add_noise<R: Rng + ?Sized>(values: &mut [f32], sigma: f64, layout: &FeatureLayout, rng: &mut R) {
    if sigma == 0.0 {
        return;
    }
    for (v, &numeric) in values.iter_mut().zip(&layout.numeric_mask) {
        if numeric {
            let z: f64 = StandardNormal.sample(rng);
            *v = (*v as f64 + sigma * z) as f32;
        }
    }
}

fn clip(values: &mut [f32]) {
    values.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
}

/// Gaussian noise of std `sigma` on numeric columns; one-hot columns are
/// left alone.
pub fn weak_augment<R: Rng + ?Sized>(
    x: &FeatureVector,
    sigma: f64,
    layout: &FeatureLayout,
    clip_to_unit: bool,
    rng: &mut R,
) -> FeatureVector {
    let mut values = x.values.clone();
    add_noise(&mut values, sigma, layout, rng);
    if clip_to_unit {
        clip(&mut values);
    }
    FeatureVector::new(values, x.class)
}

/// Gaussian noise on numeric columns, then `floor(mask_fraction * D)`
/// distinct random columns (any kind) set to zero.
pub fn strong_augment<R: Rng + ?Sized>(
    x: &FeatureVector,
    sigma: f64,
    mask_fraction: f64,
    layout: &FeatureLayout,
    clip_to_unit: bool,
    rng: &mut R,
) -> FeatureVector {
    let mut values = x.values.clone();
    add_noise(&mut values, sigma, layout, rng);
    let masked = math::floor(mask_fraction * values.len() as f64) as usize;
    if masked > 0 {
        for j in index::sample(rng, values.len(), masked.min(values.len())) {
            values[j] = 0.0;
        }
    }
    if clip_to_unit {
        clip(&mut values);
    }
    FeatureVector::new(values, x.class)
}

fn draw<R: Rng + ?Sized>(range: [f64; 2], rng: &mut R) -> f64 {
    if range[1] > range[0] {
        rng.random_range(range[0]..range[1])
    } else {
        range[0]
    }
}

/// One weak/strong pair per sample, with per-batch noise scales.
pub fn make_pairs<R: Rng + ?Sized>(
    batch: &[&FeatureVector],
    policy: &AugmentationPolicy,
    layout: &FeatureLayout,
    rng: &mut R,
) -> Result<PairBatch> {
    if batch.is_empty() {
        return Err(Error::Empty("cannot augment an empty batch"));
    }
    let sigma_weak = draw(policy.weak_sigma_range, rng);
    let sigma_strong = draw(policy.strong_sigma_range, rng);
    let pairs = batch
        .iter()
        .enumerate()
        .map(|(i, x)| AugmentedPair {
            a: weak_augment(x, sigma_weak, layout, policy.clip_to_unit, rng),
            b: strong_augment(x, sigma_strong, policy.strong_mask_fraction, layout, policy.clip_to_unit, rng),
            source_index: i,
        })
        .collect();
    Ok(PairBatch { sigma_weak, sigma_strong, pairs })
}
