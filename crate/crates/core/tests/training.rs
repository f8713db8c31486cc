//! Behaviour of client updates, server fine-tuning and whole rounds on
//! small synthetic data.

use fedssl_core::augment::AugmentationPolicy;
use fedssl_core::baselines::{regime_split, BaselineName, BaselineSpec};
use fedssl_core::features::{FeatureLayout, FeatureVector};
use fedssl_core::federation::{
    client_update, evaluate, run_round, run_training, server_finetune, Ablation, ClientMap, ClientOutcome,
    FederationConfig, LossKind, Sequential, TrainingSetup,
};
use fedssl_core::labels::TrafficClass;
use fedssl_core::losses::ContrastiveConfig;
use fedssl_core::metrics::accuracy;
use fedssl_core::model::ArchitectureSpec;
use fedssl_core::partition::{ClientShard, DatasetSplit};
use fedssl_core::rng::seeded;
use fedssl_core::Result;
use rand::Rng;

const DIM: usize = 12;

/// Class `c` puts its mass on columns `2c` and `2c + 1`.
fn toy_samples(n: usize, seed: u64, labeled: bool) -> Vec<FeatureVector> {
    let mut rng = seeded(seed);
    (0..n)
        .map(|i| {
            let class = TrafficClass::ALL[i % 3];
            let c = class.index();
            let values = (0..DIM)
                .map(|j| {
                    let base = if j / 2 == c { 0.8 } else { 0.15 };
                    (base + rng.random_range(-0.1f32..0.1)).clamp(0.0, 1.0)
                })
                .collect();
            FeatureVector::new(values, labeled.then_some(class))
        })
        .collect()
}

fn toy_split(clients: usize) -> DatasetSplit {
    DatasetSplit {
        server_labeled: toy_samples(60, 1, true),
        client_shards: (0..clients)
            .map(|k| ClientShard { client_id: k + 1, samples: toy_samples(40, 10 + k as u64, false) })
            .collect(),
        test_set: toy_samples(30, 99, true),
    }
}

fn toy_setup(ablation: Ablation) -> TrainingSetup {
    let federation = FederationConfig {
        clients: 3,
        rounds: 2,
        local_epochs: 2,
        client_batch: 16,
        server_batch: 16,
        server_epochs_per_round: 2,
        seed: 5,
        ..FederationConfig::default()
    };
    TrainingSetup::cfedssl(
        federation,
        ArchitectureSpec::default().with_input_dim(DIM),
        AugmentationPolicy::default(),
        ContrastiveConfig::default(),
        FeatureLayout::all_numeric(DIM),
        ablation,
    )
}

#[test]
fn server_finetune_reduces_loss_on_toy_set() {
    let mut setup = toy_setup(Ablation::None);
    setup.federation.server_epochs_per_round = 30;
    setup.federation.server_batch = 20;
    let data = toy_samples(100, 3, true);
    let init = setup.init_params().unwrap();
    let (_, trace) = server_finetune(&init, &data, &setup, 0).unwrap();
    let epoch_mean = |e: usize| {
        let v: Vec<f64> = trace.iter().filter(|r| r.epoch == e).map(|r| r.value).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(trace.iter().all(|r| r.loss == LossKind::CrossEntropy && r.client == 0));
    assert!(epoch_mean(29) < epoch_mean(0), "{} !< {}", epoch_mean(29), epoch_mean(0));
}

#[test]
fn zero_epochs_leave_parameters_unchanged() {
    let mut setup = toy_setup(Ablation::None);
    setup.federation.server_epochs_per_round = 0;
    setup.federation.local_epochs = 0;
    let init = setup.init_params().unwrap();
    let split = toy_split(1);
    let (after, trace) = server_finetune(&init, &split.server_labeled, &setup, 0).unwrap();
    assert_eq!(after, init);
    assert!(trace.is_empty());
    let out = client_update(&init, &split.client_shards[0], &setup, 0).unwrap();
    assert_eq!(out.params, init);
}

#[test]
fn client_update_trains_only_encoder_and_projector() {
    let setup = toy_setup(Ablation::None);
    let init = setup.init_params().unwrap();
    let split = toy_split(1);
    let a = client_update(&init, &split.client_shards[0], &setup, 0).unwrap();
    let b = client_update(&init, &split.client_shards[0], &setup, 0).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.params.data("classifier.weight"), init.data("classifier.weight"));
    assert_ne!(a.params.data("encoder.dense.weight"), init.data("encoder.dense.weight"));
    assert_ne!(a.params.data("projector.fc1.weight"), init.data("projector.fc1.weight"));
    assert!(a.trace.iter().all(|r| r.loss == LossKind::NtXent && r.client == 1));
    // 40 samples at batch 16: steps of 16, 16, 8 per epoch
    assert_eq!(a.trace.len(), 6);
}

#[test]
fn oversized_batch_is_clamped() {
    let mut setup = toy_setup(Ablation::None);
    setup.federation.client_batch = 1024;
    let init = setup.init_params().unwrap();
    let out = client_update(&init, &toy_split(1).client_shards[0], &setup, 0).unwrap();
    assert_eq!(out.trace.len(), setup.federation.local_epochs);
}

/// Runs clients in reverse order, then restores shard order.
struct Reversed;

impl ClientMap for Reversed {
    fn map(
        &self,
        shards: &[ClientShard],
        f: &(dyn Fn(&ClientShard) -> Result<ClientOutcome> + Sync),
    ) -> Vec<Result<ClientOutcome>> {
        let mut out: Vec<_> = shards.iter().rev().map(f).collect();
        out.reverse();
        out
    }
}

#[test]
fn rounds_are_deterministic_and_schedule_independent() {
    let setup = toy_setup(Ablation::None);
    let split = toy_split(3);
    let init = setup.init_params().unwrap();
    let a = run_round(&init, &split, &setup, 0, &Sequential).unwrap();
    let b = run_round(&init, &split, &setup, 0, &Reversed).unwrap();
    assert_eq!(a.params.to_f32_le_bytes(), b.params.to_f32_le_bytes());
    assert_eq!(a.client_losses, b.client_losses);
    assert!(a.params.is_congruent(&init));
    assert_eq!(a.client_losses.iter().map(|c| c.0).collect::<Vec<_>>(), vec![1, 2, 3]);
}

#[test]
fn single_client_without_ema_alternates_phases() {
    let mut setup = toy_setup(Ablation::None);
    setup.method.ema_weight = 0.0;
    let split = toy_split(1);
    let init = setup.init_params().unwrap();
    let round = run_round(&init, &split, &setup, 0, &Sequential).unwrap();
    let local = client_update(&init, &split.client_shards[0], &setup, 0).unwrap();
    let (mut expected, _) = server_finetune(&local.params, &split.server_labeled, &setup, 0).unwrap();
    expected.round_to_f32();
    assert_eq!(round.params, expected);
}

#[test]
fn ablations_change_the_round() {
    let split = toy_split(2);
    let full = toy_setup(Ablation::None);
    let init = full.init_params().unwrap();
    let base = run_round(&init, &split, &full, 0, &Sequential).unwrap();
    for ablation in [Ablation::NoAugmentationNoDropout, Ablation::NoLatentContrastive, Ablation::NoEma] {
        let setup = toy_setup(ablation);
        let out = run_round(&init, &split, &setup, 0, &Sequential).unwrap();
        assert_ne!(out.params, base.params, "{ablation:?}");
    }
    let no_clients = run_round(&init, &split, &toy_setup(Ablation::NoLatentContrastive), 0, &Sequential).unwrap();
    assert!(no_clients.trace.iter().all(|r| r.client == 0));
}

#[test]
fn latent_contrastive_ablation_equals_server_only_baseline() {
    let setup = toy_setup(Ablation::NoLatentContrastive);
    let split = toy_split(2);
    let csl = BaselineSpec::new(BaselineName::CslSd).setup(&toy_setup(Ablation::None));
    let csl_split = regime_split(BaselineName::CslSd.regime(), &split, &split.server_labeled, 3, 5).unwrap();
    let init = setup.init_params().unwrap();
    let a = run_training(init.clone(), &split, &setup, 0, &Sequential, |_, _| Ok(())).unwrap();
    let b = run_training(init, &csl_split, &csl, 0, &Sequential, |_, _| Ok(())).unwrap();
    assert_eq!(a, b);
}

#[test]
fn every_baseline_runs_a_round() {
    let base = toy_setup(Ablation::None);
    let split = toy_split(3);
    let train = toy_samples(150, 7, true);
    let init = base.init_params().unwrap();
    for name in BaselineName::ALL {
        let spec = BaselineSpec::new(name);
        let setup = spec.setup(&base);
        let data = regime_split(name.regime(), &split, &train, 3, 5).unwrap();
        let out = run_round(&init, &data, &setup, 0, &Sequential).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(out.params.is_congruent(&init), "{name}");
        let cm = evaluate(&out.params, &setup.arch, &data.test_set).unwrap();
        assert_eq!(cm.total(), 30);
        assert!(accuracy(&cm).unwrap() >= 0.0);
    }
}

#[test]
fn supervised_clients_reject_unlabeled_shards() {
    let base = toy_setup(Ablation::None);
    let setup = BaselineSpec::new(BaselineName::SFedAvgAd).setup(&base);
    let err = run_round(&base.init_params().unwrap(), &toy_split(2), &setup, 3, &Sequential).unwrap_err();
    assert_eq!(err.round, 3);
    assert_eq!(err.client, Some(1));
}

#[test]
fn training_learns_the_toy_task() {
    let mut setup = toy_setup(Ablation::None);
    setup.federation.rounds = 4;
    setup.federation.server_epochs_per_round = 8;
    let split = toy_split(3);
    let mut seen = Vec::new();
    let params = run_training(setup.init_params().unwrap(), &split, &setup, 0, &Sequential, |r, _| {
        seen.push(r);
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, vec![0, 1, 2, 3]);
    let cm = evaluate(&params, &setup.arch, &split.test_set).unwrap();
    assert!(accuracy(&cm).unwrap() > 90.0, "{:?}", cm.counts);
}
