use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Which part of the network a tensor belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Submodel {
    Encoder,
    Projector,
    Classifier,
}

impl Submodel {
    pub const ALL: [Submodel; 3] = [Submodel::Encoder, Submodel::Projector, Submodel::Classifier];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedTensor {
    pub name: String,
    pub group: Submodel,
    pub shape: Vec<usize>,
    /// Running statistics are carried and averaged but never optimised.
    pub trainable: bool,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Named tensors for encoder, projector and classifier.
///
/// Sets built from the same architecture are shape-congruent and support
/// the elementwise linear combinations used by FedAvg, EMA and the
/// optimisers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ParameterSet {
    tensors: Vec<NamedTensor>,
}

impl ParameterSet {
    pub fn new(tensors: Vec<NamedTensor>) -> Self {
        Self { tensors }
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [NamedTensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Data of tensor `name`; panics if absent (network code only asks for
    /// names it created).
    pub fn data(&self, name: &str) -> &[f64] {
        &self.get(name).unwrap_or_else(|| panic!("missing tensor {name}")).data
    }

    pub fn data_mut(&mut self, name: &str) -> &mut [f64] {
        &mut self
            .tensors
            .iter_mut()
            .find(|t| t.name == name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
            .data
    }

    /// Mutable data of two distinct tensors at once.
    pub fn data_pair_mut(&mut self, a: &str, b: &str) -> (&mut [f64], &mut [f64]) {
        let ia = self.index_of(a);
        let ib = self.index_of(b);
        assert_ne!(ia, ib, "tensor pair must be distinct");
        if ia < ib {
            let (lo, hi) = self.tensors.split_at_mut(ib);
            (&mut lo[ia].data, &mut hi[0].data)
        } else {
            let (lo, hi) = self.tensors.split_at_mut(ia);
            (&mut hi[0].data, &mut lo[ib].data)
        }
    }

    fn index_of(&self, name: &str) -> usize {
        self.tensors
            .iter()
            .position(|t| t.name == name)
            .unwrap_or_else(|| panic!("missing tensor {name}"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    /// Number of trainable scalars.
    pub fn trainable_len(&self) -> usize {
        self.tensors.iter().filter(|t| t.trainable).map(NamedTensor::len).sum()
    }

    pub fn total_len(&self) -> usize {
        self.tensors.iter().map(NamedTensor::len).sum()
    }

    /// Same names, shapes and order; data zeroed.
    pub fn zeros_like(&self) -> Self {
        let mut out = self.clone();
        out.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v = 0.0));
        out
    }

    pub fn is_congruent(&self, other: &Self) -> bool {
        self.tensors.len() == other.tensors.len()
            && self
                .tensors
                .iter()
                .zip(&other.tensors)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape && a.data.len() == b.data.len())
    }

    pub fn ensure_congruent(&self, other: &Self) -> Result<()> {
        if self.is_congruent(other) {
            Ok(())
        } else {
            Err(Error::Shape("parameter sets are not shape-congruent".into()))
        }
    }

    /// `self = self * keep + other * (1 - keep)` over tensors in `groups`.
    pub fn lerp_toward(&mut self, other: &Self, keep: f64, groups: &[Submodel]) -> Result<()> {
        self.ensure_congruent(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if groups.contains(&a.group) {
                for (x, &y) in a.data.iter_mut().zip(&b.data) {
                    *x = keep * *x + (1.0 - keep) * y;
                }
            }
        }
        Ok(())
    }

    /// `self += alpha * other` on every tensor.
    pub fn add_scaled(&mut self, other: &Self, alpha: f64) -> Result<()> {
        self.ensure_congruent(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, &y) in a.data.iter_mut().zip(&b.data) {
                *x += alpha * y;
            }
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        self.tensors.iter_mut().for_each(|t| t.data.iter_mut().for_each(|v| *v *= alpha));
    }

    /// Copies tensors of `groups` from `other`.
    pub fn copy_groups_from(&mut self, other: &Self, groups: &[Submodel]) -> Result<()> {
        self.ensure_congruent(other)?;
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            if groups.contains(&a.group) {
                a.data.copy_from_slice(&b.data);
            }
        }
        Ok(())
    }

    /// Squared Euclidean distance over trainable tensors of `groups`.
    pub fn squared_distance(&self, other: &Self, groups: &[Submodel]) -> Result<f64> {
        self.ensure_congruent(other)?;
        Ok(self
            .tensors
            .iter()
            .zip(&other.tensors)
            .filter(|(a, _)| a.trainable && groups.contains(&a.group))
            .flat_map(|(a, b)| a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)))
            .sum())
    }

    /// Rounds every value to the nearest `f32`.
    pub fn round_to_f32(&mut self) {
        self.tensors
            .iter_mut()
            .for_each(|t| t.data.iter_mut().for_each(|v| *v = *v as f32 as f64));
    }

    /// All values as little-endian `f32`, tensors in order.
    pub fn to_f32_le_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.total_len() * 4);
        for t in &self.tensors {
            for &v in &t.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors.iter().flat_map(|t| t.data.iter()).fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Sample-count weighted mean of congruent sets, reduced in input order.
pub fn weighted_mean(sets: &[&ParameterSet], weights: &[f64]) -> Result<ParameterSet> {
    let first = *sets.first().ok_or(Error::Empty("no parameter sets to average"))?;
    if sets.len() != weights.len() {
        return Err(Error::Shape(alloc::format!("{} sets but {} weights", sets.len(), weights.len())));
    }
    let mut out = first.zeros_like();
    for (set, &w) in sets.iter().zip(weights) {
        out.add_scaled(set, w)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn set(vals: &[f64]) -> ParameterSet {
        ParameterSet::new(vec![
            NamedTensor {
                name: "encoder.w".into(),
                group: Submodel::Encoder,
                shape: vec![vals.len()],
                trainable: true,
                data: vals.to_vec(),
            },
            NamedTensor {
                name: "classifier.w".into(),
                group: Submodel::Classifier,
                shape: vec![1],
                trainable: true,
                data: vec![vals[0] * 2.0],
            },
        ])
    }

    #[test]
    fn lerp_only_touches_requested_groups() {
        let mut a = set(&[1.0, 1.0]);
        let b = set(&[0.0, 0.0]);
        a.lerp_toward(&b, 0.25, &[Submodel::Encoder]).unwrap();
        assert_eq!(a.data("encoder.w"), &[0.25, 0.25]);
        assert_eq!(a.data("classifier.w"), &[2.0]);
    }

    #[test]
    fn incongruent_sets_are_rejected() {
        let a = set(&[1.0, 1.0]);
        let b = set(&[1.0]);
        assert!(!a.is_congruent(&b));
        assert!(weighted_mean(&[&a, &b], &[0.5, 0.5]).is_err());
        assert!(weighted_mean(&[], &[]).is_err());
    }

    #[test]
    fn squared_distance_and_rounding() {
        let a = set(&[1.0, 2.0]);
        let b = set(&[1.0, 0.0]);
        assert_eq!(a.squared_distance(&b, &[Submodel::Encoder]).unwrap(), 4.0);
        let mut c = set(&[0.1, 1.0 / 3.0]);
        c.round_to_f32();
        assert_eq!(c.data("encoder.w")[1], (1.0f64 / 3.0) as f32 as f64);
        assert_eq!(c.to_f32_le_bytes().len(), 12);
    }
}
