//! First-order optimisers over a selected subset of parameter groups.
//!
//! Only trainable tensors whose group is in the optimiser's group list are
//! updated; everything else (frozen heads, batch-norm running statistics)
//! is left untouched.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::model::{ParameterSet, Submodel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    adam: AdamConfig,
    groups: Vec<Submodel>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, groups: &[Submodel]) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Config(alloc::format!("learning rate must be positive, got {lr}")));
        }
        Ok(Self { kind, lr, adam: AdamConfig::default(), groups: groups.to_vec(), m: Vec::new(), v: Vec::new(), step: 0 })
    }

    pub fn adam(lr: f64, groups: &[Submodel]) -> Result<Self> {
        Self::new(OptimizerKind::Adam, lr, groups)
    }

    pub fn sgd(lr: f64, groups: &[Submodel]) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, lr, groups)
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn groups(&self) -> &[Submodel] {
        &self.groups
    }

    /// Applies one update with gradients `grads` (congruent with `params`).
    pub fn step(&mut self, params: &mut ParameterSet, grads: &ParameterSet) -> Result<()> {
        params.ensure_congruent(grads)?;
        self.step += 1;
        if self.kind == OptimizerKind::Adam && self.m.is_empty() {
            self.m = params.tensors().iter().map(|t| alloc::vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        let AdamConfig { beta1, beta2, eps } = self.adam;
        let bc1 = 1.0 - libm::pow(beta1, self.step as f64);
        let bc2 = 1.0 - libm::pow(beta2, self.step as f64);
        for (i, (p, g)) in params.tensors_mut().iter_mut().zip(grads.tensors()).enumerate() {
            if !p.trainable || !self.groups.contains(&p.group) {
                continue;
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (w, dw) in p.data.iter_mut().zip(&g.data) {
                        *w -= self.lr * dw;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    for j in 0..p.data.len() {
                        let dw = g.data[j];
                        m[j] = beta1 * m[j] + (1.0 - beta1) * dw;
                        v[j] = beta2 * v[j] + (1.0 - beta2) * dw * dw;
                        let mhat = m[j] / bc1;
                        let vhat = v[j] / bc2;
                        p.data[j] -= self.lr * mhat / (sqrt(vhat) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NamedTensor;
    use alloc::vec;

    fn params(v: f64, group: Submodel, trainable: bool) -> ParameterSet {
        ParameterSet::new(vec![NamedTensor { name: "t".into(), group, shape: vec![1], trainable, data: vec![v] }])
    }

    #[test]
    fn sgd_step() {
        let mut p = params(1.0, Submodel::Encoder, true);
        let g = params(0.5, Submodel::Encoder, true);
        Optimizer::sgd(0.1, &[Submodel::Encoder]).unwrap().step(&mut p, &g).unwrap();
        assert!((p.data("t")[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        let mut p = params(1.0, Submodel::Encoder, true);
        let g = params(3.0, Submodel::Encoder, true);
        let mut opt = Optimizer::adam(0.01, &[Submodel::Encoder]).unwrap();
        opt.step(&mut p, &g).unwrap();
        assert!((p.data("t")[0] - 0.99).abs() < 1e-9);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn frozen_groups_and_buffers_are_untouched() {
        let mut p = params(1.0, Submodel::Classifier, true);
        let g = params(1.0, Submodel::Classifier, true);
        Optimizer::adam(0.1, &[Submodel::Encoder]).unwrap().step(&mut p, &g).unwrap();
        assert_eq!(p.data("t"), &[1.0]);
        let mut p = params(1.0, Submodel::Encoder, false);
        let g = params(1.0, Submodel::Encoder, false);
        Optimizer::sgd(0.1, &[Submodel::Encoder]).unwrap().step(&mut p, &g).unwrap();
        assert_eq!(p.data("t"), &[1.0]);
    }

    #[test]
    fn rejects_bad_learning_rate() {
        assert!(Optimizer::adam(0.0, &[]).is_err());
        assert!(Optimizer::sgd(f64::NAN, &[]).is_err());
    }
}
