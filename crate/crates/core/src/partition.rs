//! Server/client split of the training pool.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;
use crate::labels::TrafficClass;
use crate::rng::{self, Purpose};
use crate::{Error, Result};

/// Sizes of the labeled server split and the unlabeled client pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PartitionConfig {
    pub server_labeled_count: usize,
    pub client_unlabeled_total: usize,
    pub clients: usize,
}

impl Default for PartitionConfig {
    fn default() -> Self {
        Self { server_labeled_count: 50_000, client_unlabeled_total: 69_070, clients: 10 }
    }
}

/// Index-level partition of a training pool.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub server: Vec<usize>,
    /// `clients[k]` holds the pool indices of client `k + 1`.
    pub clients: Vec<Vec<usize>>,
    pub discarded: Vec<usize>,
}

/// One client's unlabeled data.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientShard {
    /// 1-based client id.
    pub client_id: usize,
    pub samples: Vec<FeatureVector>,
}

impl ClientShard {
    #[inline]
    pub fn n_k(&self) -> usize {
        self.samples.len()
    }
}

/// Materialised split: labeled server data, unlabeled shards, test set.
#[derive(Debug, Clone, Default)]
pub struct DatasetSplit {
    pub server_labeled: Vec<FeatureVector>,
    pub client_shards: Vec<ClientShard>,
    pub test_set: Vec<FeatureVector>,
}

impl DatasetSplit {
    pub fn client_total(&self) -> usize {
        self.client_shards.iter().map(ClientShard::n_k).sum()
    }

    pub fn dim(&self) -> Option<usize> {
        self.server_labeled
            .first()
            .or_else(|| self.client_shards.first().and_then(|s| s.samples.first()))
            .map(FeatureVector::dim)
    }
}

/// Shard sizes for `total` samples over `clients`: even split, remainder
/// handed out one per client starting at client 1.
pub fn shard_sizes(total: usize, clients: usize) -> Vec<usize> {
    let base = total / clients;
    let extra = total % clients;
    (0..clients).map(|k| base + usize::from(k < extra)).collect()
}

/// Plans a stratified server split and IID client shards over a pool
/// whose records have the given classes.
pub fn plan(classes: &[TrafficClass], cfg: &PartitionConfig, seed: u64) -> Result<PartitionPlan> {
    let n = classes.len();
    if cfg.clients == 0 {
        return Err(Error::Config("at least one client is required".into()));
    }
    if cfg.server_labeled_count + cfg.client_unlabeled_total > n {
        return Err(Error::Config(alloc::format!(
            "server ({}) + client ({}) samples exceed the {n} available",
            cfg.server_labeled_count,
            cfg.client_unlabeled_total
        )));
    }
    if cfg.client_unlabeled_total < cfg.clients {
        return Err(Error::Config(alloc::format!(
            "{} unlabeled samples cannot give each of {} clients a non-empty shard",
            cfg.client_unlabeled_total,
            cfg.clients
        )));
    }

    let mut rng = rng::derive(seed, Purpose::Partition, 0, 0);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);

    // Largest-remainder quotas so the stratified total is exact.
    let mut per_class = [0usize; TrafficClass::COUNT];
    for c in classes {
        per_class[c.index()] += 1;
    }
    let target = cfg.server_labeled_count as u128;
    let mut quota = [0usize; TrafficClass::COUNT];
    let mut remainders = [(0u128, 0usize); TrafficClass::COUNT];
    for c in 0..TrafficClass::COUNT {
        let num = per_class[c] as u128 * target;
        quota[c] = (num / n.max(1) as u128) as usize;
        remainders[c] = (num % n.max(1) as u128, c);
    }
    let assigned: usize = quota.iter().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in remainders.iter().take(cfg.server_labeled_count - assigned) {
        quota[c] += 1;
    }

    let mut server = Vec::with_capacity(cfg.server_labeled_count);
    let mut pool = Vec::with_capacity(n - cfg.server_labeled_count);
    let mut taken = [0usize; TrafficClass::COUNT];
    for &i in &order {
        let c = classes[i].index();
        if taken[c] < quota[c] {
            taken[c] += 1;
            server.push(i);
        } else {
            pool.push(i);
        }
    }

    let mut clients = Vec::with_capacity(cfg.clients);
    let mut start = 0;
    for size in shard_sizes(cfg.client_unlabeled_total, cfg.clients) {
        clients.push(pool[start..start + size].to_vec());
        start += size;
    }
    let discarded = pool[start..].to_vec();
    Ok(PartitionPlan { server, clients, discarded })
}

impl PartitionPlan {
    /// Builds the split; client samples lose their labels.
    pub fn materialize(&self, train: &[FeatureVector]) -> DatasetSplit {
        let server_labeled = self.server.iter().map(|&i| train[i].clone()).collect();
        let client_shards = self
            .clients
            .iter()
            .enumerate()
            .map(|(k, idx)| ClientShard {
                client_id: k + 1,
                samples: idx.iter().map(|&i| train[i].unlabeled()).collect(),
            })
            .collect();
        DatasetSplit { server_labeled, client_shards, test_set: Vec::new() }
    }
}

/// Partitions labeled training vectors. The returned split has an empty
/// test set; callers attach the encoded test file.
pub fn partition(train: &[FeatureVector], cfg: &PartitionConfig, seed: u64) -> Result<DatasetSplit> {
    let classes = train
        .iter()
        .map(|v| v.class.ok_or(Error::Config("partition input must be labeled".into())))
        .collect::<Result<Vec<_>>>()?;
    Ok(plan(&classes, cfg, seed)?.materialize(train))
}
