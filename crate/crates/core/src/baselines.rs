//! Comparison methods, all sharing the model, data and round machinery.
//!
//! Baselines differ in what clients optimise, which data they see and
//! whether the server fine-tunes:
//!
//! | method                 | clients                         | server phase |
//! |------------------------|---------------------------------|--------------|
//! | SFedAvg_AD / SFedProx_AD | cross-entropy, all data labeled | no         |
//! | CSL_SD / CSL_AD        | none                            | 50000 / all  |
//! | FedAvg+CR / FedProx+CR | CR consistency, unlabeled       | yes          |
//! | FedUDA                 | UDA, unlabeled                  | yes          |
//! | FedAvg/FedProx+Fixmatch| FixMatch, unlabeled             | yes          |
//!
//! Federated baselines replace the global model by the aggregate each
//! round; only the proposed method fuses encoders with EMA.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::federation::{ClientObjective, RoundMethod, TrainingSetup};
use crate::partition::{shard_sizes, ClientShard, DatasetSplit};
use crate::rng::{self, Purpose};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineName {
    #[serde(rename = "SFedAvg_AD")]
    SFedAvgAd,
    #[serde(rename = "SFedProx_AD")]
    SFedProxAd,
    #[serde(rename = "CSL_SD")]
    CslSd,
    #[serde(rename = "CSL_AD")]
    CslAd,
    #[serde(rename = "FedAvg+CR")]
    FedAvgCr,
    #[serde(rename = "FedProx+CR")]
    FedProxCr,
    #[serde(rename = "FedUDA")]
    FedUda,
    #[serde(rename = "FedAvg+Fixmatch")]
    FedAvgFixmatch,
    #[serde(rename = "FedProx+Fixmatch")]
    FedProxFixmatch,
    #[serde(rename = "CFedSSL-NID")]
    CFedSslNid,
}

impl BaselineName {
    /// Table row order.
    pub const ALL: [BaselineName; 10] = [
        BaselineName::SFedAvgAd,
        BaselineName::SFedProxAd,
        BaselineName::CslSd,
        BaselineName::CslAd,
        BaselineName::FedAvgCr,
        BaselineName::FedProxCr,
        BaselineName::FedUda,
        BaselineName::FedAvgFixmatch,
        BaselineName::FedProxFixmatch,
        BaselineName::CFedSslNid,
    ];

    pub fn label(self) -> &'static str {
        match self {
            BaselineName::SFedAvgAd => "SFedAvg_AD",
            BaselineName::SFedProxAd => "SFedProx_AD",
            BaselineName::CslSd => "CSL_SD",
            BaselineName::CslAd => "CSL_AD",
            BaselineName::FedAvgCr => "FedAvg+CR",
            BaselineName::FedProxCr => "FedProx+CR",
            BaselineName::FedUda => "FedUDA",
            BaselineName::FedAvgFixmatch => "FedAvg+Fixmatch",
            BaselineName::FedProxFixmatch => "FedProx+Fixmatch",
            BaselineName::CFedSslNid => "CFedSSL-NID",
        }
    }

    pub fn regime(self) -> DataRegime {
        match self {
            BaselineName::SFedAvgAd | BaselineName::SFedProxAd => DataRegime::LabeledClients,
            BaselineName::CslSd => DataRegime::ServerOnly,
            BaselineName::CslAd => DataRegime::CentralizedAll,
            _ => DataRegime::UnlabeledClients,
        }
    }

    fn uses_prox(self) -> bool {
        matches!(self, BaselineName::SFedProxAd | BaselineName::FedProxCr | BaselineName::FedProxFixmatch)
    }
}

impl fmt::Display for BaselineName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for BaselineName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        BaselineName::ALL
            .into_iter()
            .find(|n| n.label().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::Config(alloc::format!("unknown method {s:?}")))
    }
}

/// Which data a method trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataRegime {
    /// Labeled server split plus unlabeled client shards.
    UnlabeledClients,
    /// The whole labeled training pool spread evenly over the clients.
    LabeledClients,
    /// The labeled server split alone.
    ServerOnly,
    /// The whole labeled training pool on one machine.
    CentralizedAll,
}

/// A method and its constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSpec {
    pub name: BaselineName,
    /// FedProx proximal weight.
    pub prox_mu: f64,
    pub fixmatch_threshold: f64,
    pub fixmatch_temperature: f64,
    /// UDA sharpening temperature.
    pub uda_temperature: f64,
}

impl Default for BaselineSpec {
    fn default() -> Self {
        Self::new(BaselineName::CFedSslNid)
    }
}

impl BaselineSpec {
    pub fn new(name: BaselineName) -> Self {
        Self { name, prox_mu: 0.01, fixmatch_threshold: 0.95, fixmatch_temperature: 1.0, uda_temperature: 0.4 }
    }

    /// Round structure for this method; `ema_weight` is only used by the
    /// proposed method.
    pub fn method(&self, ema_weight: f64) -> RoundMethod {
        let prox_mu = if self.name.uses_prox() { self.prox_mu } else { 0.0 };
        let federated = |client, server_finetune| RoundMethod { client: Some(client), prox_mu, ema_weight: 0.0, server_finetune };
        match self.name {
            BaselineName::CFedSslNid => RoundMethod::cfedssl(ema_weight),
            BaselineName::SFedAvgAd | BaselineName::SFedProxAd => federated(ClientObjective::Supervised, false),
            BaselineName::CslSd | BaselineName::CslAd => {
                RoundMethod { client: None, prox_mu: 0.0, ema_weight: 0.0, server_finetune: true }
            }
            BaselineName::FedAvgCr | BaselineName::FedProxCr => federated(ClientObjective::Consistency, true),
            BaselineName::FedUda => federated(ClientObjective::Uda { temperature: self.uda_temperature }, true),
            BaselineName::FedAvgFixmatch | BaselineName::FedProxFixmatch => federated(
                ClientObjective::FixMatch { threshold: self.fixmatch_threshold, temperature: self.fixmatch_temperature },
                true,
            ),
        }
    }

    /// `base` with this method's round structure.
    pub fn setup(&self, base: &TrainingSetup) -> TrainingSetup {
        let mut s = base.clone();
        s.method = self.method(base.federation.ema_weight);
        s
    }
}

/// Shards the labeled training pool evenly (after a seeded shuffle) over
/// `clients` clients, keeping labels.
pub fn labeled_shards(train: &[FeatureVector], clients: usize, seed: u64) -> Result<Vec<ClientShard>> {
    if clients == 0 || train.len() < clients {
        return Err(Error::Config(alloc::format!("cannot spread {} samples over {clients} clients", train.len())));
    }
    if train.iter().any(|x| x.class.is_none()) {
        return Err(Error::Config("labeled shards need labeled data".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut rng::derive(seed, Purpose::Partition, 1, 0));
    let mut next = 0;
    Ok(shard_sizes(train.len(), clients)
        .into_iter()
        .enumerate()
        .map(|(k, size)| {
            let samples = order[next..next + size].iter().map(|&i| train[i].clone()).collect();
            next += size;
            ClientShard { client_id: k + 1, samples }
        })
        .collect())
}

/// The data split a method trains on, derived from the shared split and
/// the full labeled training pool.
pub fn regime_split(
    regime: DataRegime,
    split: &DatasetSplit,
    train: &[FeatureVector],
    clients: usize,
    seed: u64,
) -> Result<DatasetSplit> {
    let test_set = split.test_set.clone();
    Ok(match regime {
        DataRegime::UnlabeledClients => split.clone(),
        DataRegime::LabeledClients => DatasetSplit {
            server_labeled: Vec::new(),
            client_shards: labeled_shards(train, clients, seed)?,
            test_set,
        },
        DataRegime::ServerOnly => {
            DatasetSplit { server_labeled: split.server_labeled.clone(), client_shards: Vec::new(), test_set }
        }
        DataRegime::CentralizedAll => {
            DatasetSplit { server_labeled: train.to_vec(), client_shards: Vec::new(), test_set }
        }
    })
}
