//! Analytic gradients against central finite differences. Each check
//! returns the worst relative error it saw for one seed.

use fedssl_core::losses::{
    cr_consistency, cross_entropy, fedprox_grad, fedprox_term, fixmatch_loss, ntxent_with_grad, one_hot,
    uda_consistency, ContrastiveConfig, LatentBatch,
};
use fedssl_core::model::{self, ArchitectureSpec, Mode, ParameterSet, Submodel};
use fedssl_core::rng::{seeded, StreamRng};
use fedssl_core::tensor::Matrix;
use rand::Rng;

use super::{flatten_trainable, numeric_grad, relative_error, tiny_arch, with_trainable, FD_STEP};

pub const SEEDS: u64 = 20;
pub const TOL: f64 = 1e-4;

pub type Check = fn(u64) -> f64;

/// Every loss and model head, by name.
pub const CHECKS: [(&str, Check); 11] = [
    ("ntxent", ntxent),
    ("cross-entropy", cross_entropy_check),
    ("fixmatch", fixmatch),
    ("uda", uda),
    ("cr consistency", consistency),
    ("fedprox", fedprox),
    ("encoder with dropout", encoder_with_dropout),
    ("projector with batch norm", projector_with_batch_norm),
    ("classifier", classifier),
    ("contrastive pipeline", contrastive_pipeline),
    ("default network", default_network),
];

fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut StreamRng) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

/// Parameters of `arch` with every trainable value randomised, so gamma,
/// beta and biases are exercised away from their initial constants.
fn random_params(arch: &ArchitectureSpec, rng: &mut StreamRng) -> ParameterSet {
    let p = model::build(arch, rng).unwrap();
    let values: Vec<f64> = flatten_trainable(&p).iter().map(|_| rng.random_range(-0.8..0.8)).collect();
    with_trainable(&p, &values)
}

/// Sum of `out * probe`, a linear read-out whose gradient is `probe`.
fn probe_dot(out: &Matrix, probe: &Matrix) -> f64 {
    out.as_slice().iter().zip(probe.as_slice()).map(|(a, b)| a * b).sum()
}

pub fn ntxent(seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for include_self in [false, true] {
        let mut rng = seeded(seed);
        let (b, d) = (1 + seed as usize % 6, 2 + seed as usize % 5);
        let za = random_matrix(b, d, 1.0, &mut rng);
        let zb = random_matrix(b, d, 1.0, &mut rng);
        let cfg = ContrastiveConfig { temperature: rng.random_range(0.1..1.0), include_self_term: include_self };
        let (_, g) = ntxent_with_grad(&LatentBatch::new(za.clone(), zb.clone()).unwrap(), &cfg).unwrap();
        let mut x = za.as_slice().to_vec();
        x.extend_from_slice(zb.as_slice());
        let numeric = numeric_grad(&x, |v| {
            let a = Matrix::from_vec(b, d, v[..b * d].to_vec()).unwrap();
            let bb = Matrix::from_vec(b, d, v[b * d..].to_vec()).unwrap();
            ntxent_with_grad(&LatentBatch::new(a, bb).unwrap(), &cfg).unwrap().0.mean
        });
        let mut analytic = g.z_a.as_slice().to_vec();
        analytic.extend_from_slice(g.z_b.as_slice());
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    worst
}

pub fn cross_entropy_check(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let (n, c) = (1 + seed as usize % 7, 2 + seed as usize % 4);
    let logits = random_matrix(n, c, 3.0, &mut rng);
    // soft targets exercise the general form
    let mut targets = Matrix::zeros(n, c);
    for i in 0..n {
        let raw: Vec<f64> = (0..c).map(|_| rng.random_range(0.0..1.0)).collect();
        let s: f64 = raw.iter().sum();
        raw.iter().enumerate().for_each(|(j, v)| targets.set(i, j, v / s));
    }
    let (_, g) = cross_entropy(&logits, &targets).unwrap();
    let numeric = numeric_grad(logits.as_slice(), |v| {
        cross_entropy(&Matrix::from_vec(n, c, v.to_vec()).unwrap(), &targets).unwrap().0
    });
    relative_error(g.as_slice(), &numeric)
}

fn pseudo_label_logits(seed: u64) -> (Matrix, Matrix) {
    let mut rng = seeded(seed);
    let (n, c) = (2 + seed as usize % 6, 3 + seed as usize % 3);
    (random_matrix(n, c, 4.0, &mut rng), random_matrix(n, c, 2.0, &mut rng))
}

pub fn fixmatch(seed: u64) -> f64 {
    let (weak, strong) = pseudo_label_logits(seed);
    let (n, c) = (strong.rows(), strong.cols());
    let (_, g) = fixmatch_loss(&weak, &strong, 0.3, 1.0).unwrap();
    let numeric = numeric_grad(strong.as_slice(), |v| {
        fixmatch_loss(&weak, &Matrix::from_vec(n, c, v.to_vec()).unwrap(), 0.3, 1.0).unwrap().0
    });
    relative_error(g.as_slice(), &numeric)
}

pub fn uda(seed: u64) -> f64 {
    let (weak, strong) = pseudo_label_logits(seed);
    let (n, c) = (strong.rows(), strong.cols());
    let (_, g) = uda_consistency(&weak, &strong, 0.4).unwrap();
    let numeric = numeric_grad(strong.as_slice(), |v| {
        uda_consistency(&weak, &Matrix::from_vec(n, c, v.to_vec()).unwrap(), 0.4).unwrap().0
    });
    relative_error(g.as_slice(), &numeric)
}

pub fn consistency(seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let (n, d) = (1 + seed as usize % 5, 2 + seed as usize % 6);
    let a = random_matrix(n, d, 1.0, &mut rng);
    let b = random_matrix(n, d, 1.0, &mut rng);
    let at = |v: &[f64]| Matrix::from_vec(n, d, v.to_vec()).unwrap();
    let (_, ga, gb) = cr_consistency(&a, &b).unwrap();
    let na = numeric_grad(a.as_slice(), |v| cr_consistency(&at(v), &b).unwrap().0);
    let nb = numeric_grad(b.as_slice(), |v| cr_consistency(&a, &at(v)).unwrap().0);
    relative_error(ga.as_slice(), &na).max(relative_error(gb.as_slice(), &nb))
}

pub fn fedprox(seed: u64) -> f64 {
    let arch = tiny_arch(0, 0.0);
    let groups = [Submodel::Encoder, Submodel::Classifier];
    let mut rng = seeded(seed);
    let local = random_params(&arch, &mut rng);
    let global = random_params(&arch, &mut rng);
    let mut grads = local.zeros_like();
    fedprox_grad(&local, &global, 0.3, &groups, &mut grads).unwrap();
    let numeric = numeric_grad(&flatten_trainable(&local), |v| {
        fedprox_term(&with_trainable(&local, v), &global, 0.3, &groups).unwrap()
    });
    relative_error(&flatten_trainable(&grads), &numeric)
}

pub fn encoder_with_dropout(seed: u64) -> f64 {
    let arch = tiny_arch(0, 0.3);
    let mut rng = seeded(seed);
    let params = random_params(&arch, &mut rng);
    let x = random_matrix(4, arch.input_dim, 1.0, &mut rng);
    let probe = random_matrix(4, arch.embedding_dim, 1.0, &mut rng);
    // every evaluation replays the same dropout mask
    let mask_rng = seeded(1000 + seed);
    let (_, cache) = model::encode(&params, &arch, &x, Mode::Train, &mut mask_rng.clone()).unwrap();
    let mut grads = params.zeros_like();
    model::encode_backward(&params, &arch, &cache, &probe, &mut grads).unwrap();
    let numeric = numeric_grad(&flatten_trainable(&params), |v| {
        let p = with_trainable(&params, v);
        let (emb, _) = model::encode(&p, &arch, &x, Mode::Train, &mut mask_rng.clone()).unwrap();
        probe_dot(&emb, &probe)
    });
    relative_error(&flatten_trainable(&grads), &numeric)
}

pub fn projector_with_batch_norm(seed: u64) -> f64 {
    let mut worst = 0.0f64;
    for bn in [0, 1, 2] {
        let arch = tiny_arch(bn, 0.0);
        let mut rng = seeded(seed);
        let params = random_params(&arch, &mut rng);
        let emb = random_matrix(5, arch.embedding_dim, 1.0, &mut rng);
        let probe = random_matrix(5, arch.projection_dim, 1.0, &mut rng);
        let (_, cache) = model::project(&params, &arch, &emb, Mode::Train).unwrap();
        let mut grads = params.zeros_like();
        let demb = model::project_backward(&params, &arch, &cache, &probe, &mut grads).unwrap();
        let numeric = numeric_grad(&flatten_trainable(&params), |v| {
            let (z, _) = model::project(&with_trainable(&params, v), &arch, &emb, Mode::Train).unwrap();
            probe_dot(&z, &probe)
        });
        worst = worst.max(relative_error(&flatten_trainable(&grads), &numeric));
        let numeric = numeric_grad(emb.as_slice(), |v| {
            let e = Matrix::from_vec(5, arch.embedding_dim, v.to_vec()).unwrap();
            probe_dot(&model::project(&params, &arch, &e, Mode::Train).unwrap().0, &probe)
        });
        worst = worst.max(relative_error(demb.as_slice(), &numeric));
    }
    worst
}

pub fn classifier(seed: u64) -> f64 {
    let arch = tiny_arch(0, 0.0);
    let mut rng = seeded(seed);
    let params = random_params(&arch, &mut rng);
    let emb = random_matrix(6, arch.embedding_dim, 1.0, &mut rng);
    let labels: Vec<usize> = (0..6).map(|i| (i + seed as usize) % arch.num_classes).collect();
    let targets = one_hot(&labels, arch.num_classes).unwrap();
    let (logits, cache) = model::classify(&params, &arch, &emb).unwrap();
    let (_, dlogits) = cross_entropy(&logits, &targets).unwrap();
    let mut grads = params.zeros_like();
    let demb = model::classify_backward(&params, &arch, &cache, &dlogits, &mut grads).unwrap();
    let loss = |p: &ParameterSet, e: &Matrix| cross_entropy(&model::classify(p, &arch, e).unwrap().0, &targets).unwrap().0;
    let numeric = numeric_grad(&flatten_trainable(&params), |v| loss(&with_trainable(&params, v), &emb));
    let params_err = relative_error(&flatten_trainable(&grads), &numeric);
    let numeric = numeric_grad(emb.as_slice(), |v| {
        loss(&params, &Matrix::from_vec(6, arch.embedding_dim, v.to_vec()).unwrap())
    });
    params_err.max(relative_error(demb.as_slice(), &numeric))
}

/// The client objective end to end: stacked views through encoder and
/// projector (with batch norm and dropout) into NT-Xent.
pub fn contrastive_pipeline(seed: u64) -> f64 {
    let arch = tiny_arch(1, 0.2);
    let cfg = ContrastiveConfig::default();
    let mut rng = seeded(seed);
    let params = random_params(&arch, &mut rng);
    let x = random_matrix(6, arch.input_dim, 1.0, &mut rng);
    let mask_rng = seeded(2000 + seed);
    let p_dim = arch.projection_dim;
    let loss = |p: &ParameterSet| {
        let (emb, ec) = model::encode(p, &arch, &x, Mode::Train, &mut mask_rng.clone()).unwrap();
        let (z, pc) = model::project(p, &arch, &emb, Mode::Train).unwrap();
        let za = Matrix::from_vec(3, p_dim, z.as_slice()[..3 * p_dim].to_vec()).unwrap();
        let zb = Matrix::from_vec(3, p_dim, z.as_slice()[3 * p_dim..].to_vec()).unwrap();
        let (v, g) = ntxent_with_grad(&LatentBatch::new(za, zb).unwrap(), &cfg).unwrap();
        (v.mean, g, ec, pc)
    };
    let (_, g, ec, pc) = loss(&params);
    let mut dz = g.z_a.into_vec();
    dz.extend(g.z_b.into_vec());
    let dz = Matrix::from_vec(6, p_dim, dz).unwrap();
    let mut grads = params.zeros_like();
    let demb = model::project_backward(&params, &arch, &pc, &dz, &mut grads).unwrap();
    model::encode_backward(&params, &arch, &ec, &demb, &mut grads).unwrap();
    let numeric = numeric_grad(&flatten_trainable(&params), |v| loss(&with_trainable(&params, v)).0);
    relative_error(&flatten_trainable(&grads), &numeric)
}

/// Spot check on the default network: a sample of coordinates in every
/// encoder and classifier tensor.
pub fn default_network(seed: u64) -> f64 {
    let arch = ArchitectureSpec::default();
    let mut rng = seeded(seed);
    let params = model::build(&arch, &mut rng).unwrap();
    let x = random_matrix(3, arch.input_dim, 1.0, &mut rng);
    let labels = [0usize, 3, 4];
    let targets = one_hot(&labels, arch.num_classes).unwrap();
    let mask_rng = seeded(99 + seed);
    let loss = |p: &ParameterSet| {
        let (emb, _) = model::encode(p, &arch, &x, Mode::Train, &mut mask_rng.clone()).unwrap();
        cross_entropy(&model::classify(p, &arch, &emb).unwrap().0, &targets).unwrap().0
    };
    let (emb, ec) = model::encode(&params, &arch, &x, Mode::Train, &mut mask_rng.clone()).unwrap();
    let (logits, cc) = model::classify(&params, &arch, &emb).unwrap();
    let (_, dl) = cross_entropy(&logits, &targets).unwrap();
    let mut grads = params.zeros_like();
    let demb = model::classify_backward(&params, &arch, &cc, &dl, &mut grads).unwrap();
    model::encode_backward(&params, &arch, &ec, &demb, &mut grads).unwrap();

    let mut analytic = Vec::new();
    let mut numeric = Vec::new();
    for (ti, t) in params.tensors().iter().enumerate() {
        if !t.trainable || t.group == Submodel::Projector {
            continue;
        }
        for j in (0..t.len()).step_by((t.len() / 25).max(1)) {
            analytic.push(grads.tensors()[ti].data[j]);
            let mut p = params.clone();
            p.tensors_mut()[ti].data[j] += FD_STEP;
            let up = loss(&p);
            p.tensors_mut()[ti].data[j] -= 2.0 * FD_STEP;
            let down = loss(&p);
            numeric.push((up - down) / (2.0 * FD_STEP));
        }
    }
    relative_error(&analytic, &numeric)
}
