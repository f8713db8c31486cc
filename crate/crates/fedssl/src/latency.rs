//! Inference latency on the calling thread.

use std::time::Instant;

use fedssl_core::federation::batch_matrix;
use fedssl_core::features::FeatureVector;
use fedssl_core::model::{forward_logits, ArchitectureSpec, ParameterSet};
use serde::{Deserialize, Serialize};

use crate::error::{data_err, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latency {
    pub batch_size: usize,
    /// Milliseconds per sample of each timed trial.
    pub trials_ms_per_sample: Vec<f64>,
    pub ms_per_sample: f64,
}

/// Times `trials` forward passes of `batch_size` samples (cycling through
/// `samples`) after one untimed warmup pass.
pub fn measure_latency(
    params: &ParameterSet,
    arch: &ArchitectureSpec,
    samples: &[FeatureVector],
    batch_size: usize,
    trials: usize,
) -> Result<Latency> {
    if trials == 0 || batch_size == 0 || samples.is_empty() {
        return Err(Error::Config("latency needs trials, a batch size and samples".into()));
    }
    let batch = |t: usize| {
        let refs: Vec<&FeatureVector> = (0..batch_size).map(|i| &samples[(t * batch_size + i) % samples.len()]).collect();
        batch_matrix(&refs).map_err(data_err)
    };
    let warmup = batch(trials)?;
    std::hint::black_box(forward_logits(params, arch, &warmup).map_err(data_err)?);
    let mut per_sample = Vec::with_capacity(trials);
    for t in 0..trials {
        let x = batch(t)?;
        let start = Instant::now();
        let logits = forward_logits(params, arch, &x).map_err(data_err)?;
        let elapsed = start.elapsed();
        std::hint::black_box(logits);
        per_sample.push(elapsed.as_secs_f64() * 1e3 / batch_size as f64);
    }
    let ms_per_sample = per_sample.iter().sum::<f64>() / trials as f64;
    Ok(Latency { batch_size, trials_ms_per_sample: per_sample, ms_per_sample })
}
