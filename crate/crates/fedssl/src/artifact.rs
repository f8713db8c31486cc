//! Prepared-dataset directory: encoded train/test matrices, labels, the
//! partition plan, the fitted encoder and a manifest with checksums.
//!
//! ```text
//! manifest.json        dimension, counts, seed, taxonomy version, sha256 per file
//! train.f32 test.f32   row-major little-endian f32, N x D
//! train.labels ...     one class index byte per row
//! partition.json       server / client / discarded row indices into train
//! encoder_state.json   category inventories and numeric min/max
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use fedssl_core::features::{preprocess, EncoderState, FeatureLayout, FeatureVector, RawRecord};
use fedssl_core::labels::{Taxonomy, TrafficClass};
use fedssl_core::partition::{plan, DatasetSplit, PartitionConfig, PartitionPlan};
use serde::{Deserialize, Serialize};

use crate::error::{data_err, Error, Result};
use crate::fsio::{f32_from_le_bytes, f32_le_bytes, read_bytes, read_json, sha256_hex, write_bytes, write_json};
use crate::nslkdd::load_nslkdd;

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactManifest {
    pub format_version: u32,
    pub dim: usize,
    pub train_count: usize,
    pub test_count: usize,
    pub server_count: usize,
    pub client_counts: Vec<usize>,
    pub discarded_count: usize,
    pub seed: u64,
    pub partition: PartitionConfig,
    pub taxonomy_version: String,
    /// Per-class counts in `TrafficClass::ALL` order.
    pub train_class_counts: Vec<u64>,
    pub test_class_counts: Vec<u64>,
    /// File name to sha256 hex digest.
    pub files: BTreeMap<String, String>,
}

impl ArtifactManifest {
    /// Per-class totals over train and test.
    pub fn class_totals(&self) -> Vec<u64> {
        self.train_class_counts.iter().zip(&self.test_class_counts).map(|(a, b)| a + b).collect()
    }
}

/// An encoded, partitioned dataset held in memory.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub manifest: ArtifactManifest,
    pub train: Vec<FeatureVector>,
    pub test: Vec<FeatureVector>,
    pub plan: PartitionPlan,
    pub encoder: EncoderState,
}

fn class_counts(v: &[FeatureVector]) -> Vec<u64> {
    let mut counts = vec![0u64; TrafficClass::COUNT];
    for x in v {
        if let Some(c) = x.class {
            counts[c.index()] += 1;
        }
    }
    counts
}

fn matrix_bytes(v: &[FeatureVector]) -> Vec<u8> {
    f32_le_bytes(v.iter().flat_map(|x| x.values.iter().copied()))
}

fn json_bytes<T: Serialize>(v: &T) -> Result<Vec<u8>> {
    serde_json::to_vec(v).map_err(|e| Error::Data(e.to_string()))
}

fn label_bytes(v: &[FeatureVector]) -> Vec<u8> {
    v.iter().map(|x| x.class.map_or(u8::MAX, |c| c.index() as u8)).collect()
}

impl Prepared {
    /// Encodes with statistics fitted on `train` and plans the partition.
    pub fn from_records(
        train: &[RawRecord],
        test: &[RawRecord],
        partition: &PartitionConfig,
        seed: u64,
    ) -> Result<Self> {
        let (train_vecs, encoder) = preprocess(train).map_err(data_err)?;
        let test_vecs = encoder.transform(test).map_err(data_err)?;
        let classes: Vec<TrafficClass> = train.iter().map(|r| r.class).collect();
        let plan = plan(&classes, partition, seed).map_err(data_err)?;
        let manifest = ArtifactManifest {
            format_version: FORMAT_VERSION,
            dim: encoder.dim(),
            train_count: train_vecs.len(),
            test_count: test_vecs.len(),
            server_count: plan.server.len(),
            client_counts: plan.clients.iter().map(Vec::len).collect(),
            discarded_count: plan.discarded.len(),
            seed,
            partition: *partition,
            taxonomy_version: Taxonomy::nslkdd().version().to_string(),
            train_class_counts: class_counts(&train_vecs),
            test_class_counts: class_counts(&test_vecs),
            files: BTreeMap::new(),
        };
        Ok(Self { manifest, train: train_vecs, test: test_vecs, plan, encoder })
    }

    fn payload(&self) -> Result<Vec<(&'static str, Vec<u8>)>> {
        Ok(vec![
            ("train.f32", matrix_bytes(&self.train)),
            ("train.labels", label_bytes(&self.train)),
            ("test.f32", matrix_bytes(&self.test)),
            ("test.labels", label_bytes(&self.test)),
            ("partition.json", json_bytes(&self.plan)?),
            ("encoder_state.json", json_bytes(&self.encoder)?),
        ])
    }

    /// Writes the directory and fills in the manifest checksums. Output is
    /// a pure function of the inputs, so rewriting gives identical files.
    pub fn write(&mut self, dir: &Path) -> Result<()> {
        let mut files = BTreeMap::new();
        for (name, bytes) in self.payload()? {
            files.insert(name.to_string(), sha256_hex(&bytes));
            write_bytes(&dir.join(name), &bytes)?;
        }
        self.manifest.files = files;
        write_json(&dir.join(MANIFEST), &self.manifest)
    }

    /// Reads a directory written by [`Prepared::write`], verifying checksums.
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: ArtifactManifest = read_json(&dir.join(MANIFEST))?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Data(format!("unsupported artifact format {}", manifest.format_version)));
        }
        let read = |name: &str| -> Result<Vec<u8>> {
            let path = dir.join(name);
            let bytes = read_bytes(&path)?;
            match manifest.files.get(name) {
                Some(sum) if *sum == sha256_hex(&bytes) => Ok(bytes),
                Some(_) => Err(Error::Data(format!("{}: checksum mismatch", path.display()))),
                None => Err(Error::Data(format!("{name} is not listed in the manifest"))),
            }
        };
        let vectors = |stem: &str, count: usize| -> Result<Vec<FeatureVector>> {
            let path = dir.join(format!("{stem}.f32"));
            let values = f32_from_le_bytes(&path, &read(&format!("{stem}.f32"))?)?;
            let labels = read(&format!("{stem}.labels"))?;
            if values.len() != count * manifest.dim || labels.len() != count {
                return Err(Error::Data(format!("{stem}: sizes disagree with the manifest")));
            }
            values
                .chunks_exact(manifest.dim.max(1))
                .zip(labels)
                .map(|(row, l)| {
                    let class = TrafficClass::from_index(l as usize)
                        .ok_or_else(|| Error::Data(format!("{stem}.labels: bad class byte {l}")))?;
                    Ok(FeatureVector::new(row.to_vec(), Some(class)))
                })
                .collect()
        };
        let train = vectors("train", manifest.train_count)?;
        let test = vectors("test", manifest.test_count)?;
        let parse = |name: &str| -> Result<serde_json::Value> {
            serde_json::from_slice(&read(name)?).map_err(|e| Error::Data(format!("{name}: {e}")))
        };
        let plan: PartitionPlan =
            serde_json::from_value(parse("partition.json")?).map_err(|e| Error::Data(format!("partition.json: {e}")))?;
        let encoder: EncoderState = serde_json::from_value(parse("encoder_state.json")?)
            .map_err(|e| Error::Data(format!("encoder_state.json: {e}")))?;
        if plan.server.iter().chain(plan.clients.iter().flatten()).any(|&i| i >= train.len()) {
            return Err(Error::Data("partition indices out of range".into()));
        }
        Ok(Self { manifest, train, test, plan, encoder })
    }

    pub fn layout(&self) -> FeatureLayout {
        self.encoder.layout()
    }

    /// Server split, unlabeled client shards and the test set.
    pub fn split(&self) -> DatasetSplit {
        let mut split = self.plan.materialize(&self.train);
        split.test_set = self.test.clone();
        split
    }
}

/// Loads the raw files, encodes, partitions and writes `out`.
pub fn prepare(train: &Path, test: &Path, partition: &PartitionConfig, seed: u64, out: &Path) -> Result<Prepared> {
    let (train_records, test_records) = load_nslkdd(train, test)?;
    if train_records.is_empty() {
        return Err(Error::Data(format!("{} holds no records", train.display())));
    }
    let mut prepared = Prepared::from_records(&train_records, &test_records, partition, seed)?;
    prepared.write(out)?;
    log::info!(
        "prepared D={} server={} clients={:?} into {}",
        prepared.manifest.dim,
        prepared.manifest.server_count,
        prepared.manifest.client_counts,
        out.display()
    );
    Ok(prepared)
}
