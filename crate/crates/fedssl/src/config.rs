//! TOML run configuration. Every section has the reference protocol as
//! its default, so an empty file is a valid config.
//!
//! ```toml
//! seeds = [1, 2, 3, 4, 5]
//! workers = 0            # 0: min(clients, available cores)
//! ablation = "none"      # no_augmentation_no_dropout | no_latent_contrastive | no_ema
//!
//! [data]
//! train_file = "KDDTrain+.txt"
//! test_file = "KDDTest+.txt"
//! artifact_dir = "artifacts/nslkdd"
//! partition_seed = 1
//!
//! [partition]
//! server_labeled_count = 50000
//! client_unlabeled_total = 69070
//! clients = 10
//!
//! [federation]
//! rounds = 10
//! local_epochs = 5
//! client_batch = 1024
//! server_batch = 128
//! learning_rate = 0.01
//! ema_weight = 0.5
//!
//! [contrastive]
//! temperature = 0.5
//!
//! [method]
//! name = "CFedSSL-NID"
//! ```

use std::path::{Path, PathBuf};

use fedssl_core::augment::AugmentationPolicy;
use fedssl_core::baselines::{BaselineName, BaselineSpec};
use fedssl_core::features::FeatureLayout;
use fedssl_core::federation::{Ablation, FederationConfig, TrainingSetup};
use fedssl_core::losses::ContrastiveConfig;
use fedssl_core::model::ArchitectureSpec;
use fedssl_core::partition::PartitionConfig;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, Error, Result};
use crate::fsio::read_string;

/// Environment variable naming the directory that holds the raw files.
pub const DATA_DIR_ENV: &str = "FEDSSL_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Directory holding the raw files; falls back to `$FEDSSL_DATA_DIR`,
    /// then `data`.
    pub root: Option<PathBuf>,
    pub train_file: String,
    pub test_file: String,
    pub artifact_dir: PathBuf,
    /// Seed of the server/client partition, shared by all training seeds.
    pub partition_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            root: None,
            train_file: "KDDTrain+.txt".into(),
            test_file: "KDDTest+.txt".into(),
            artifact_dir: "artifacts/nslkdd".into(),
            partition_seed: 1,
        }
    }
}

impl DataConfig {
    pub fn resolved_root(&self) -> PathBuf {
        self.root
            .clone()
            .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    pub fn train_path(&self) -> PathBuf {
        self.resolved_root().join(&self.train_file)
    }

    pub fn test_path(&self) -> PathBuf {
        self.resolved_root().join(&self.test_file)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Test samples whose projector latents are stored for the embedding
    /// scatter; 0 disables.
    pub projections: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "runs".into(), projections: 2000 }
    }
}

/// What `suite` runs besides the configured method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub baselines: Vec<BaselineName>,
    pub ablations: bool,
    pub temperatures: Vec<f64>,
    /// Projector batch-norm counts, run at `bn_temperature`.
    pub bn_counts: Vec<usize>,
    pub bn_temperature: f64,
    pub client_batches: Vec<usize>,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            baselines: BaselineName::ALL.to_vec(),
            ablations: true,
            temperatures: vec![0.07, 0.5, 1.0],
            bn_counts: Vec::new(),
            bn_temperature: 1.0,
            client_batches: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seeds: Vec<u64>,
    pub workers: usize,
    pub ablation: Ablation,
    pub data: DataConfig,
    pub partition: PartitionConfig,
    pub federation: FederationConfig,
    pub model: ArchitectureSpec,
    pub augmentation: AugmentationPolicy,
    pub contrastive: ContrastiveConfig,
    pub method: BaselineSpec,
    pub output: OutputConfig,
    pub suite: SuiteConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seeds: vec![1, 2, 3, 4, 5],
            workers: 0,
            ablation: Ablation::None,
            data: DataConfig::default(),
            partition: PartitionConfig::default(),
            federation: FederationConfig::default(),
            model: ArchitectureSpec::default(),
            augmentation: AugmentationPolicy::default(),
            contrastive: ContrastiveConfig::default(),
            method: BaselineSpec::default(),
            output: OutputConfig::default(),
            suite: SuiteConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = read_string(path).map_err(|e| match e {
            Error::MissingInput(p) => Error::Config(format!("config file `{}` not found", p.display())),
            other => other,
        })?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run configs always serialize")
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if self.federation.clients != self.partition.clients {
            return Err(Error::Config(format!(
                "federation.clients ({}) and partition.clients ({}) disagree",
                self.federation.clients, self.partition.clients
            )));
        }
        if self.ablation != Ablation::None && self.method.name != BaselineName::CFedSslNid {
            return Err(Error::Config("ablations apply to CFedSSL-NID only".into()));
        }
        self.federation.validate().map_err(config_err)?;
        self.augmentation.validate().map_err(config_err)?;
        if !(self.contrastive.temperature > 0.0) {
            return Err(Error::Config("contrastive.temperature must be positive".into()));
        }
        Ok(())
    }

    /// Copy with a single training seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seeds = vec![seed];
        c.federation.seed = seed;
        c
    }

    /// Worker threads for client updates.
    pub fn effective_workers(&self) -> usize {
        let cores = std::thread::available_parallelism().map_or(1, |n| n.get());
        match self.workers {
            0 => self.federation.clients.min(cores).max(1),
            w => w,
        }
    }

    /// Round setup for the configured method on data with `layout`.
    pub fn setup(&self, layout: &FeatureLayout) -> Result<TrainingSetup> {
        let base = TrainingSetup::cfedssl(
            self.federation.clone(),
            self.model.clone().with_input_dim(layout.dim),
            self.augmentation.clone(),
            self.contrastive,
            layout.clone(),
            self.ablation,
        );
        let setup = match self.method.name {
            BaselineName::CFedSslNid => base,
            _ => self.method.setup(&base),
        };
        setup.validate().map_err(config_err)?;
        Ok(setup)
    }

    /// Short name of the configured method, used for directories and
    /// table rows.
    pub fn label(&self) -> String {
        match self.ablation {
            Ablation::None => self.method.name.label().to_string(),
            a => a.label().to_string(),
        }
    }
}
