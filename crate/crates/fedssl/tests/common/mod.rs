#![allow(dead_code)]

use std::path::Path;

use fedssl::config::RunConfig;
use fedssl::synthetic::{write_dataset, SyntheticSpec};

pub const SMALL_TRAIN: [usize; 5] = [400, 300, 150, 40, 20];
pub const SMALL_TEST: [usize; 5] = [100, 80, 40, 30, 10];

/// Writes a small synthetic dataset into `dir`.
pub fn small_dataset(dir: &Path, seed: u64) {
    let train = SyntheticSpec::new(SMALL_TRAIN, seed, 1);
    let test = SyntheticSpec { cover_categories: false, ..SyntheticSpec::new(SMALL_TEST, seed, 2) };
    write_dataset(dir, &train, &test).unwrap();
}

/// A few quick rounds on the small dataset, rooted at `work`.
pub fn small_config_toml(work: &Path, rounds: usize) -> String {
    format!(
        r#"seeds = [1]
workers = 2

[data]
root = "{root}"
artifact_dir = "{artifact}"

[partition]
server_labeled_count = 300
client_unlabeled_total = 400
clients = 4

[federation]
clients = 4
rounds = {rounds}
local_epochs = 1
client_batch = 64
server_batch = 32
server_epochs_per_round = 1

[output]
dir = "{runs}"
projections = 50
"#,
        root = work.join("raw").display(),
        artifact = work.join("artifact").display(),
        runs = work.join("runs").display(),
    )
}

pub fn small_config(work: &Path, rounds: usize) -> RunConfig {
    RunConfig::from_toml(&small_config_toml(work, rounds)).unwrap()
}
