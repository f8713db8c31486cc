//! NSL-KDD record encoding: one-hot categorical columns, min-max scaled
//! numeric columns.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};

use crate::labels::{map_class, TrafficClass};
use crate::{Error, Result};

/// Number of feature fields in an NSL-KDD record (label and difficulty excluded).
pub const FEATURE_FIELDS: usize = 41;

/// Positions of the categorical fields among the 41 features.
pub const CATEGORICAL_COLUMNS: [usize; 3] = [1, 2, 3];

pub const NUMERIC_FIELDS: usize = FEATURE_FIELDS - CATEGORICAL_COLUMNS.len();

/// Feature column names, in file order.
pub const COLUMN_NAMES: [&str; FEATURE_FIELDS] = [
    "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
    "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in", "num_compromised",
    "root_shell", "su_attempted", "num_root", "num_file_creations", "num_shells",
    "num_access_files", "num_outbound_cmds", "is_host_login", "is_guest_login", "count",
    "srv_count", "serror_rate", "srv_serror_rate", "rerror_rate", "srv_rerror_rate",
    "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
    "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
    "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate", "dst_host_serror_rate",
    "dst_host_srv_serror_rate", "dst_host_rerror_rate", "dst_host_srv_rerror_rate",
];

/// One parsed NSL-KDD row.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRecord {
    /// The 38 numeric fields in file order.
    pub numeric: Vec<f64>,
    /// protocol_type, service, flag.
    pub categorical: [String; 3],
    pub label: String,
    pub class: TrafficClass,
    /// NSL-KDD difficulty level; kept but not used downstream.
    pub difficulty: Option<u32>,
}

impl RawRecord {
    /// Builds a record from the 41 feature fields plus its label.
    pub fn from_fields(fields: &[&str], label: &str, difficulty: Option<u32>) -> Result<Self> {
        if fields.len() != FEATURE_FIELDS {
            return Err(Error::FieldCount { found: fields.len(), expected: FEATURE_FIELDS });
        }
        let class = map_class(label)?;
        let mut numeric = Vec::with_capacity(NUMERIC_FIELDS);
        let mut categorical: [String; 3] = Default::default();
        for (col, raw) in fields.iter().enumerate() {
            let raw = raw.trim();
            if let Some(slot) = CATEGORICAL_COLUMNS.iter().position(|&c| c == col) {
                categorical[slot] = raw.to_string();
            } else {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::Numeric { column: col, value: raw.to_string() })?;
                if !v.is_finite() {
                    return Err(Error::Numeric { column: col, value: raw.to_string() });
                }
                numeric.push(v);
            }
        }
        Ok(Self {
            numeric,
            categorical,
            label: label.trim().to_string(),
            class,
            difficulty,
        })
    }
}

/// A preprocessed record. `class` is `None` once labels are stripped for
/// client shards.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f32>,
    pub class: Option<TrafficClass>,
}

impl FeatureVector {
    pub fn new(values: Vec<f32>, class: Option<TrafficClass>) -> Self {
        Self { values, class }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn unlabeled(&self) -> Self {
        Self { values: self.values.clone(), class: None }
    }
}

/// Which encoded columns are numeric and where the one-hot blocks sit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub dim: usize,
    pub numeric_mask: Vec<bool>,
    pub one_hot_blocks: Vec<Range<usize>>,
}

impl FeatureLayout {
    /// Layout where every column is numeric (used for raw vectors).
    pub fn all_numeric(dim: usize) -> Self {
        Self { dim, numeric_mask: alloc::vec![true; dim], one_hot_blocks: Vec::new() }
    }

    pub fn numeric_count(&self) -> usize {
        self.numeric_mask.iter().filter(|&&b| b).count()
    }
}

/// Fitted preprocessing statistics: category inventories and min/max of
/// each numeric field, all taken from the training file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderState {
    pub categories: [Vec<String>; 3],
    pub numeric_min: Vec<f64>,
    pub numeric_max: Vec<f64>,
}

impl EncoderState {
    /// Fits inventories and ranges on `records`.
    pub fn fit(records: &[RawRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Empty("cannot fit an encoder on zero records"));
        }
        let mut inventories: [BTreeSet<&str>; 3] = Default::default();
        let mut min = alloc::vec![f64::INFINITY; NUMERIC_FIELDS];
        let mut max = alloc::vec![f64::NEG_INFINITY; NUMERIC_FIELDS];
        for r in records {
            for (inv, value) in inventories.iter_mut().zip(&r.categorical) {
                inv.insert(value.as_str());
            }
            for (j, &v) in r.numeric.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        let categories = inventories.map(|s| s.into_iter().map(String::from).collect());
        Ok(Self { categories, numeric_min: min, numeric_max: max })
    }

    /// Encoded dimension: numeric fields plus one column per category.
    pub fn dim(&self) -> usize {
        NUMERIC_FIELDS + self.categories.iter().map(Vec::len).sum::<usize>()
    }

    pub fn layout(&self) -> FeatureLayout {
        let mut numeric_mask = Vec::with_capacity(self.dim());
        let mut blocks = Vec::new();
        for col in 0..FEATURE_FIELDS {
            if let Some(slot) = CATEGORICAL_COLUMNS.iter().position(|&c| c == col) {
                let start = numeric_mask.len();
                let width = self.categories[slot].len();
                numeric_mask.extend(core::iter::repeat_n(false, width));
                blocks.push(start..start + width);
            } else {
                numeric_mask.push(true);
            }
        }
        FeatureLayout { dim: numeric_mask.len(), numeric_mask, one_hot_blocks: blocks }
    }

    #[inline]
    fn scale(&self, j: usize, v: f64) -> f32 {
        let (lo, hi) = (self.numeric_min[j], self.numeric_max[j]);
        if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0) as f32
        } else {
            0.0
        }
    }

    /// Encodes one record. Returns the vector and whether a categorical
    /// value was missing from the fitted inventory (encoded as all zeros).
    pub fn encode(&self, record: &RawRecord) -> Result<(FeatureVector, bool)> {
        if record.numeric.len() != NUMERIC_FIELDS {
            return Err(Error::FieldCount {
                found: record.numeric.len() + 3,
                expected: FEATURE_FIELDS,
            });
        }
        let mut values = Vec::with_capacity(self.dim());
        let mut unseen = false;
        let mut numeric = record.numeric.iter().enumerate();
        for col in 0..FEATURE_FIELDS {
            if let Some(slot) = CATEGORICAL_COLUMNS.iter().position(|&c| c == col) {
                let inv = &self.categories[slot];
                let hit = inv.binary_search_by(|c| c.as_str().cmp(&record.categorical[slot])).ok();
                unseen |= hit.is_none();
                values.extend((0..inv.len()).map(|i| if Some(i) == hit { 1.0f32 } else { 0.0 }));
            } else {
                let (j, &v) = numeric.next().expect("38 numeric fields");
                values.push(self.scale(j, v));
            }
        }
        Ok((FeatureVector::new(values, Some(record.class)), unseen))
    }

    /// Encodes records with this (already fitted) state.
    pub fn transform(&self, records: &[RawRecord]) -> Result<Vec<FeatureVector>> {
        let mut unseen = 0usize;
        let mut out = Vec::with_capacity(records.len());
        for r in records {
            let (v, miss) = self.encode(r)?;
            unseen += usize::from(miss);
            out.push(v);
        }
        if unseen > 0 {
            log::warn!("{unseen} record(s) carried categories unseen in training; encoded as all-zero one-hot groups");
        }
        Ok(out)
    }
}

/// Fits the encoder on `records` and encodes them.
pub fn preprocess(records: &[RawRecord]) -> Result<(Vec<FeatureVector>, EncoderState)> {
    let state = EncoderState::fit(records)?;
    let vectors = state.transform(records)?;
    Ok((vectors, state))
}
