//! Federated rounds: client updates, FedAvg, EMA fusion and server
//! fine-tuning.
//!
//! A round runs:
//!
//! 1. every client starts from the broadcast global parameters and trains
//!    its objective on its own shard;
//! 2. client parameters are averaged with weights `n_k / n` (FedAvg);
//! 3. the global encoder is fused with the aggregate,
//!    `E <- xi * E + (1 - xi) * E_agg`; every other aggregated group is
//!    replaced by the aggregate;
//! 4. the server fine-tunes encoder and classifier on its labeled data;
//! 5. parameters are rounded to `f32`, the precision they are stored at.
//!
//! Clients draw from streams derived from `(seed, round, client id)` and
//! results are reduced in client-id order, so a round's output does not
//! depend on how clients were scheduled.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{make_pairs, AugmentationPolicy};
use crate::features::{FeatureLayout, FeatureVector};
use crate::labels::TrafficClass;
use crate::losses::{self, ContrastiveConfig, LatentBatch};
use crate::metrics::ConfusionMatrix;
use crate::model::{self, ArchitectureSpec, Mode, ParameterSet, Submodel};
use crate::optim::{Optimizer, OptimizerKind};
use crate::partition::{ClientShard, DatasetSplit};
use crate::rng::{self, Purpose, StreamRng};
use crate::tensor::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    /// K
    pub clients: usize,
    /// R_s
    pub rounds: usize,
    /// P_c
    pub local_epochs: usize,
    /// B
    pub client_batch: usize,
    /// B_S
    pub server_batch: usize,
    /// xi
    pub ema_weight: f64,
    pub server_epochs_per_round: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            clients: 10,
            rounds: 10,
            local_epochs: 5,
            client_batch: 1024,
            server_batch: 128,
            ema_weight: 0.5,
            server_epochs_per_round: 5,
            learning_rate: 0.01,
            optimizer: OptimizerKind::Adam,
            seed: 1,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.clients == 0 {
            return bad("clients must be at least 1");
        }
        if self.rounds == 0 {
            return bad("rounds must be at least 1");
        }
        if self.client_batch == 0 || self.server_batch == 0 {
            return bad("batch sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.ema_weight) {
            return bad("ema_weight must lie in [0, 1]");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        Ok(())
    }
}

/// Component switched off in an ablation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    /// Clients contrast the raw sample with itself and dropout is disabled
    /// everywhere.
    NoAugmentationNoDropout,
    /// No client phase; the server trains alone.
    NoLatentContrastive,
    /// The aggregated encoder replaces the global one (`xi = 0`).
    NoEma,
}

impl Ablation {
    pub const ALL: [Ablation; 4] =
        [Ablation::NoAugmentationNoDropout, Ablation::NoLatentContrastive, Ablation::NoEma, Ablation::None];

    pub fn label(self) -> &'static str {
        match self {
            Ablation::None => "CFedSSL-NID",
            Ablation::NoAugmentationNoDropout => "w/o W/S Augs and Dropout",
            Ablation::NoLatentContrastive => "w/o Latent Contrastive",
            Ablation::NoEma => "w/o EMA Update",
        }
    }
}

/// What a client optimises locally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClientObjective {
    /// NT-Xent between weak and strong views (encoder + projector).
    Contrastive { augment: bool },
    /// Cross-entropy on labeled client data (encoder + classifier).
    Supervised,
    /// MSE + cosine consistency of the two views' latents (encoder + projector).
    Consistency,
    /// KL from sharpened weak predictions to strong ones (encoder + classifier).
    Uda { temperature: f64 },
    /// Confident weak-view pseudo-labels on the strong view (encoder + classifier).
    FixMatch { threshold: f64, temperature: f64 },
}

impl ClientObjective {
    pub fn groups(&self) -> &'static [Submodel] {
        match self {
            ClientObjective::Contrastive { .. } | ClientObjective::Consistency => {
                &[Submodel::Encoder, Submodel::Projector]
            }
            _ => &[Submodel::Encoder, Submodel::Classifier],
        }
    }

    pub fn needs_labels(&self) -> bool {
        matches!(self, ClientObjective::Supervised)
    }
}

/// How each round is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundMethod {
    /// `None`: the round has no client phase.
    pub client: Option<ClientObjective>,
    /// FedProx proximal weight; 0 disables the term.
    pub prox_mu: f64,
    /// Weight of the previous global encoder in the EMA fusion.
    pub ema_weight: f64,
    pub server_finetune: bool,
}

impl RoundMethod {
    pub fn cfedssl(ema_weight: f64) -> Self {
        Self {
            client: Some(ClientObjective::Contrastive { augment: true }),
            prox_mu: 0.0,
            ema_weight,
            server_finetune: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.ema_weight) || !(self.prox_mu >= 0.0) {
            return Err(Error::Config("ema weight must lie in [0, 1] and mu must be non-negative".into()));
        }
        if self.client.is_none() && !self.server_finetune {
            return Err(Error::Config("a round needs a client or a server phase".into()));
        }
        Ok(())
    }
}

/// Everything a round needs besides data and parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSetup {
    pub federation: FederationConfig,
    pub arch: ArchitectureSpec,
    pub augmentation: AugmentationPolicy,
    pub contrastive: ContrastiveConfig,
    pub layout: FeatureLayout,
    pub method: RoundMethod,
}

impl TrainingSetup {
    /// The full method, or one of its ablations.
    pub fn cfedssl(
        federation: FederationConfig,
        mut arch: ArchitectureSpec,
        augmentation: AugmentationPolicy,
        contrastive: ContrastiveConfig,
        layout: FeatureLayout,
        ablation: Ablation,
    ) -> Self {
        let mut method = RoundMethod::cfedssl(federation.ema_weight);
        match ablation {
            Ablation::None => {}
            Ablation::NoAugmentationNoDropout => {
                method.client = Some(ClientObjective::Contrastive { augment: false });
                arch.dropout_rate = 0.0;
            }
            Ablation::NoLatentContrastive => method.client = None,
            Ablation::NoEma => method.ema_weight = 0.0,
        }
        Self { federation, arch, augmentation, contrastive, layout, method }
    }

    pub fn validate(&self) -> Result<()> {
        self.federation.validate()?;
        self.arch.validate()?;
        self.augmentation.validate()?;
        self.method.validate()?;
        if self.layout.dim != self.arch.input_dim {
            return Err(Error::Config(format!(
                "feature layout has {} columns but the model expects {}",
                self.layout.dim, self.arch.input_dim
            )));
        }
        if !(self.contrastive.temperature > 0.0) {
            return Err(Error::Config("temperature must be positive".into()));
        }
        Ok(())
    }

    /// Initial global parameters for this setup's seed.
    pub fn init_params(&self) -> Result<ParameterSet> {
        let mut rng = rng::derive(self.federation.seed, Purpose::Init, 0, 0);
        let mut p = model::build(&self.arch, &mut rng)?;
        p.round_to_f32();
        Ok(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    NtXent,
    CrossEntropy,
    Consistency,
    Uda,
    FixMatch,
    Proximal,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            LossKind::NtXent => "ntxent",
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Consistency => "consistency",
            LossKind::Uda => "uda",
            LossKind::FixMatch => "fixmatch",
            LossKind::Proximal => "proximal",
        }
    }
}

/// One optimiser step's loss. `client == 0` denotes the server.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub round: usize,
    pub client: usize,
    pub epoch: usize,
    pub step: usize,
    pub loss: LossKind,
    pub value: f64,
}

/// Stacks feature vectors into a dense `f64` matrix.
pub fn batch_matrix(samples: &[&FeatureVector]) -> Result<Matrix> {
    let dim = samples.first().ok_or(Error::Empty("batch"))?.dim();
    let mut data = Vec::with_capacity(samples.len() * dim);
    for s in samples {
        if s.dim() != dim {
            return Err(Error::Shape(format!("mixed feature widths {} and {}", dim, s.dim())));
        }
        data.extend(s.values.iter().map(|&v| f64::from(v)));
    }
    Matrix::from_vec(samples.len(), dim, data)
}

fn labels_of(samples: &[&FeatureVector]) -> Result<Vec<usize>> {
    samples
        .iter()
        .map(|s| s.class.map(TrafficClass::index).ok_or(Error::Config("labeled data expected".into())))
        .collect()
}

fn stack(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Matrix::from_vec(a.rows() + b.rows(), a.cols(), data)
}

fn split_rows(m: &Matrix, at: usize) -> Result<(Matrix, Matrix)> {
    let cut = at * m.cols();
    let (lo, hi) = m.as_slice().split_at(cut);
    Ok((Matrix::from_vec(at, m.cols(), lo.to_vec())?, Matrix::from_vec(m.rows() - at, m.cols(), hi.to_vec())?))
}

fn make_optimizer(cfg: &FederationConfig, groups: &[Submodel]) -> Result<Optimizer> {
    Optimizer::new(cfg.optimizer, cfg.learning_rate, groups)
}

/// Weak and strong views of a batch; the raw rows twice when `augment` is
/// off.
fn views(batch: &[&FeatureVector], augment: bool, setup: &TrainingSetup, rng: &mut StreamRng) -> Result<(Matrix, Matrix)> {
    if !augment {
        let x = batch_matrix(batch)?;
        return Ok((x.clone(), x));
    }
    let pairs = make_pairs(batch, &setup.augmentation, &setup.layout, rng)?;
    let a: Vec<&FeatureVector> = pairs.pairs.iter().map(|p| &p.a).collect();
    let b: Vec<&FeatureVector> = pairs.pairs.iter().map(|p| &p.b).collect();
    Ok((batch_matrix(&a)?, batch_matrix(&b)?))
}

/// NT-Xent or CR consistency on projector latents. Both views go through
/// the network as one stacked batch.
fn latent_step(
    params: &mut ParameterSet,
    batch: &[&FeatureVector],
    augment: bool,
    consistency: bool,
    setup: &TrainingSetup,
    rng: &mut StreamRng,
) -> Result<(LossKind, f64, ParameterSet)> {
    let arch = &setup.arch;
    let n = batch.len();
    let mut grads = params.zeros_like();
    let (xa, xb) = views(batch, augment, setup, rng)?;
    let (emb, ecache) = model::encode(params, arch, &stack(&xa, &xb)?, Mode::Train, rng)?;
    let (z, pcache) = model::project(params, arch, &emb, Mode::Train)?;
    let (za, zb) = split_rows(&z, n)?;
    let (kind, value, dza, dzb) = if consistency {
        let (v, ga, gb) = losses::cr_consistency(&za, &zb)?;
        (LossKind::Consistency, v, ga, gb)
    } else {
        let (v, g) = losses::ntxent_with_grad(&LatentBatch::new(za, zb)?, &setup.contrastive)?;
        (LossKind::NtXent, v.mean, g.z_a, g.z_b)
    };
    let demb = model::project_backward(params, arch, &pcache, &stack(&dza, &dzb)?, &mut grads)?;
    model::encode_backward(params, arch, &ecache, &demb, &mut grads)?;
    model::update_running_stats(params, &pcache);
    Ok((kind, value, grads))
}

/// UDA or FixMatch on classifier logits. The weak branch is a fixed
/// target: eval mode, no gradient.
fn pseudo_label_step(
    params: &ParameterSet,
    batch: &[&FeatureVector],
    objective: ClientObjective,
    setup: &TrainingSetup,
    rng: &mut StreamRng,
) -> Result<(LossKind, f64, ParameterSet)> {
    let arch = &setup.arch;
    let mut grads = params.zeros_like();
    let (xa, xb) = views(batch, true, setup, rng)?;
    let weak = model::forward_logits(params, arch, &xa)?;
    let (emb, ecache) = model::encode(params, arch, &xb, Mode::Train, rng)?;
    let (strong, ccache) = model::classify(params, arch, &emb)?;
    let (kind, (value, dlogits)) = match objective {
        ClientObjective::Uda { temperature } => (LossKind::Uda, losses::uda_consistency(&weak, &strong, temperature)?),
        ClientObjective::FixMatch { threshold, temperature } => {
            (LossKind::FixMatch, losses::fixmatch_loss(&weak, &strong, threshold, temperature)?)
        }
        _ => return Err(Error::Config("not a pseudo-label objective".into())),
    };
    let demb = model::classify_backward(params, arch, &ccache, &dlogits, &mut grads)?;
    model::encode_backward(params, arch, &ecache, &demb, &mut grads)?;
    Ok((kind, value, grads))
}

/// Loss and gradient of one client minibatch.
fn client_step(
    params: &mut ParameterSet,
    batch: &[&FeatureVector],
    objective: ClientObjective,
    setup: &TrainingSetup,
    rng: &mut StreamRng,
) -> Result<(LossKind, f64, ParameterSet)> {
    match objective {
        ClientObjective::Contrastive { augment } => latent_step(params, batch, augment, false, setup, rng),
        ClientObjective::Consistency => latent_step(params, batch, true, true, setup, rng),
        ClientObjective::Supervised => {
            let (value, grads) = supervised_grads(params, batch, &setup.arch, rng)?;
            Ok((LossKind::CrossEntropy, value, grads))
        }
        ClientObjective::Uda { .. } | ClientObjective::FixMatch { .. } => {
            pseudo_label_step(params, batch, objective, setup, rng)
        }
    }
}

/// Result of one client's local training.
#[derive(Debug, Clone)]
pub struct ClientOutcome {
    pub client_id: usize,
    pub n_k: usize,
    pub params: ParameterSet,
    pub trace: Vec<LossRecord>,
}

impl ClientOutcome {
    /// Mean objective value over the client's last epoch.
    pub fn final_loss(&self) -> Option<f64> {
        let last = self.trace.iter().filter(|r| r.loss != LossKind::Proximal).map(|r| r.epoch).max()?;
        let vals: Vec<f64> = self
            .trace
            .iter()
            .filter(|r| r.epoch == last && r.loss != LossKind::Proximal)
            .map(|r| r.value)
            .collect();
        Some(vals.iter().sum::<f64>() / vals.len() as f64)
    }
}

/// Local training of one client from the broadcast `global` parameters.
///
/// The batch size is clamped to the shard size; a trailing batch with a
/// single sample is skipped since neither the contrastive loss nor batch
/// statistics are defined for it.
pub fn client_update(
    global: &ParameterSet,
    shard: &ClientShard,
    setup: &TrainingSetup,
    round: usize,
) -> Result<ClientOutcome> {
    let objective = setup.method.client.ok_or(Error::Config("method has no client phase".into()))?;
    if shard.samples.is_empty() {
        return Err(Error::Empty("client shard"));
    }
    let cfg = &setup.federation;
    let mut rng = rng::derive(cfg.seed, Purpose::Client, round as u64, shard.client_id as u64);
    let mut params = global.clone();
    let mut trace = Vec::new();
    let batch = if cfg.client_batch > shard.n_k() {
        log::warn!(
            "client {}: batch size {} exceeds shard size {}; clamped",
            shard.client_id,
            cfg.client_batch,
            shard.n_k()
        );
        shard.n_k()
    } else {
        cfg.client_batch
    };
    let groups = objective.groups();
    let mut opt = make_optimizer(cfg, groups)?;
    let mut order: Vec<usize> = (0..shard.n_k()).collect();
    for epoch in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(batch).enumerate() {
            if chunk.len() < 2 {
                continue;
            }
            let samples: Vec<&FeatureVector> = chunk.iter().map(|&i| &shard.samples[i]).collect();
            let (kind, value, mut grads) = client_step(&mut params, &samples, objective, setup, &mut rng)?;
            trace.push(LossRecord { round, client: shard.client_id, epoch, step, loss: kind, value });
            if setup.method.prox_mu > 0.0 {
                let prox = losses::fedprox_term(&params, global, setup.method.prox_mu, groups)?;
                losses::fedprox_grad(&params, global, setup.method.prox_mu, groups, &mut grads)?;
                trace.push(LossRecord { round, client: shard.client_id, epoch, step, loss: LossKind::Proximal, value: prox });
            }
            opt.step(&mut params, &grads)?;
        }
    }
    Ok(ClientOutcome { client_id: shard.client_id, n_k: shard.n_k(), params, trace })
}

/// FedAvg: mean of client parameters weighted by `n_k / sum n_k`, reduced
/// in input order.
pub fn fedavg(client_params: &[&ParameterSet], counts: &[usize]) -> Result<ParameterSet> {
    if client_params.is_empty() {
        return Err(Error::Empty("no client parameters to aggregate"));
    }
    if client_params.len() != counts.len() {
        return Err(Error::Shape(format!("{} parameter sets but {} counts", client_params.len(), counts.len())));
    }
    if counts.contains(&0) {
        return Err(Error::Config("client sample counts must be positive".into()));
    }
    let total: usize = counts.iter().sum();
    let weights: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
    model::weighted_mean(client_params, &weights)
}

/// `xi * prev + (1 - xi) * aggregated` over `groups`; other tensors keep
/// `prev`'s values.
pub fn ema_update(
    prev: &ParameterSet,
    aggregated: &ParameterSet,
    xi: f64,
    groups: &[Submodel],
) -> Result<ParameterSet> {
    if !(0.0..=1.0).contains(&xi) {
        return Err(Error::Config(format!("ema weight {xi} outside [0, 1]")));
    }
    let mut out = prev.clone();
    out.lerp_toward(aggregated, xi, groups)?;
    Ok(out)
}

/// Supervised training of encoder and classifier on the server's labeled
/// data, with a fresh optimiser.
pub fn server_finetune(
    global: &ParameterSet,
    labeled: &[FeatureVector],
    setup: &TrainingSetup,
    round: usize,
) -> Result<(ParameterSet, Vec<LossRecord>)> {
    let cfg = &setup.federation;
    let mut params = global.clone();
    let mut trace = Vec::new();
    if cfg.server_epochs_per_round == 0 {
        return Ok((params, trace));
    }
    if labeled.is_empty() {
        return Err(Error::Empty("server labeled set"));
    }
    let mut rng = rng::derive(cfg.seed, Purpose::Server, round as u64, 0);
    let groups = [Submodel::Encoder, Submodel::Classifier];
    let mut opt = make_optimizer(cfg, &groups)?;
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    for epoch in 0..cfg.server_epochs_per_round {
        order.shuffle(&mut rng);
        for (step, chunk) in order.chunks(cfg.server_batch).enumerate() {
            let samples: Vec<&FeatureVector> = chunk.iter().map(|&i| &labeled[i]).collect();
            let (value, grads) = supervised_grads(&params, &samples, &setup.arch, &mut rng)?;
            trace.push(LossRecord { round, client: 0, epoch, step, loss: LossKind::CrossEntropy, value });
            opt.step(&mut params, &grads)?;
        }
    }
    Ok((params, trace))
}

/// Cross-entropy and its gradient for a labeled batch (train mode).
pub fn supervised_grads<R: Rng + ?Sized>(
    params: &ParameterSet,
    batch: &[&FeatureVector],
    arch: &ArchitectureSpec,
    rng: &mut R,
) -> Result<(f64, ParameterSet)> {
    let x = batch_matrix(batch)?;
    let labels = labels_of(batch)?;
    let mut grads = params.zeros_like();
    let (emb, ecache) = model::encode(params, arch, &x, Mode::Train, rng)?;
    let (logits, ccache) = model::classify(params, arch, &emb)?;
    let (value, dlogits) = losses::cross_entropy_labels(&logits, &labels)?;
    let demb = model::classify_backward(params, arch, &ccache, &dlogits, &mut grads)?;
    model::encode_backward(params, arch, &ecache, &demb, &mut grads)?;
    Ok((value, grads))
}

/// Runs client updates, possibly in parallel. Implementations must return
/// outcomes in the order of `shards`.
pub trait ClientMap {
    fn map(
        &self,
        shards: &[ClientShard],
        f: &(dyn Fn(&ClientShard) -> Result<ClientOutcome> + Sync),
    ) -> Vec<Result<ClientOutcome>>;
}

/// Runs clients one after another.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ClientMap for Sequential {
    fn map(
        &self,
        shards: &[ClientShard],
        f: &(dyn Fn(&ClientShard) -> Result<ClientOutcome> + Sync),
    ) -> Vec<Result<ClientOutcome>> {
        shards.iter().map(f).collect()
    }
}

/// Error with the round and client it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundError {
    pub round: usize,
    /// `None` for server-side failures.
    pub client: Option<usize>,
    pub source: Error,
}

impl core::fmt::Display for RoundError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self.client {
            Some(c) => write!(f, "round {}, client {}: {}", self.round, c, self.source),
            None => write!(f, "round {}, server: {}", self.round, self.source),
        }
    }
}

impl core::error::Error for RoundError {}

#[derive(Debug, Clone)]
pub struct RoundOutcome {
    pub params: ParameterSet,
    /// `(client id, mean loss of its last epoch)` in client-id order.
    pub client_losses: Vec<(usize, f64)>,
    pub trace: Vec<LossRecord>,
}

/// One full round starting from `global`.
pub fn run_round<M: ClientMap + ?Sized>(
    global: &ParameterSet,
    split: &DatasetSplit,
    setup: &TrainingSetup,
    round: usize,
    clients: &M,
) -> core::result::Result<RoundOutcome, RoundError> {
    let server_err = |source| RoundError { round, client: None, source };
    let mut params = global.clone();
    let mut trace = Vec::new();
    let mut client_losses = Vec::new();

    if let Some(objective) = setup.method.client {
        if split.client_shards.is_empty() {
            return Err(server_err(Error::Empty("client shards")));
        }
        if objective.needs_labels() {
            if let Some(s) = split.client_shards.iter().find(|s| s.samples.iter().any(|x| x.class.is_none())) {
                return Err(RoundError {
                    round,
                    client: Some(s.client_id),
                    source: Error::Config("supervised clients need labeled shards".into()),
                });
            }
        }
        let results = clients.map(&split.client_shards, &|shard| client_update(global, shard, setup, round));
        let mut outcomes = Vec::with_capacity(results.len());
        for (shard, r) in split.client_shards.iter().zip(results) {
            outcomes.push(r.map_err(|source| RoundError { round, client: Some(shard.client_id), source })?);
        }
        let sets: Vec<&ParameterSet> = outcomes.iter().map(|o| &o.params).collect();
        let counts: Vec<usize> = outcomes.iter().map(|o| o.n_k).collect();
        let aggregated = fedavg(&sets, &counts).map_err(server_err)?;
        params = ema_update(&params, &aggregated, setup.method.ema_weight, &[Submodel::Encoder]).map_err(server_err)?;
        let others: Vec<Submodel> =
            objective.groups().iter().copied().filter(|g| *g != Submodel::Encoder).collect();
        params.copy_groups_from(&aggregated, &others).map_err(server_err)?;
        for o in outcomes {
            if let Some(l) = o.final_loss() {
                client_losses.push((o.client_id, l));
            }
            trace.extend(o.trace);
        }
    }

    if setup.method.server_finetune {
        let (p, t) = server_finetune(&params, &split.server_labeled, setup, round).map_err(server_err)?;
        params = p;
        trace.extend(t);
    }
    params.round_to_f32();
    Ok(RoundOutcome { params, client_losses, trace })
}

/// All rounds from `init`, calling `on_round` after each one (the hook
/// evaluates and checkpoints; an error from it aborts the run).
pub fn run_training<M, F>(
    init: ParameterSet,
    split: &DatasetSplit,
    setup: &TrainingSetup,
    first_round: usize,
    clients: &M,
    mut on_round: F,
) -> core::result::Result<ParameterSet, RoundError>
where
    M: ClientMap + ?Sized,
    F: FnMut(usize, &RoundOutcome) -> Result<()>,
{
    setup.validate().map_err(|source| RoundError { round: first_round, client: None, source })?;
    let mut params = init;
    for round in first_round..setup.federation.rounds {
        let outcome = run_round(&params, split, setup, round, clients)?;
        on_round(round, &outcome).map_err(|source| RoundError { round, client: None, source })?;
        params = outcome.params;
    }
    Ok(params)
}

/// Eval-mode class predictions, computed in chunks.
pub fn predict(params: &ParameterSet, arch: &ArchitectureSpec, samples: &[FeatureVector]) -> Result<Vec<usize>> {
    const CHUNK: usize = 512;
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(CHUNK) {
        let refs: Vec<&FeatureVector> = chunk.iter().collect();
        let logits = model::forward_logits(params, arch, &batch_matrix(&refs)?)?;
        out.extend(logits.argmax_rows());
    }
    Ok(out)
}

/// Five-class confusion matrix of `params` on labeled `samples`.
pub fn evaluate(params: &ParameterSet, arch: &ArchitectureSpec, samples: &[FeatureVector]) -> Result<ConfusionMatrix> {
    let refs: Vec<&FeatureVector> = samples.iter().collect();
    let truth = labels_of(&refs)?;
    let pred = predict(params, arch, samples)?;
    let mut cm = ConfusionMatrix::traffic();
    for (t, p) in truth.into_iter().zip(pred) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// Projector outputs (eval mode), e.g. for embedding plots.
pub fn project_samples(params: &ParameterSet, arch: &ArchitectureSpec, samples: &[FeatureVector]) -> Result<Matrix> {
    let refs: Vec<&FeatureVector> = samples.iter().collect();
    let x = batch_matrix(&refs)?;
    let mut unused = rng::seeded(0);
    let (emb, _) = model::encode(params, arch, &x, Mode::Eval, &mut unused)?;
    model::project(params, arch, &emb, Mode::Eval).map(|(z, _)| z)
}
