//! Training runs on disk: threaded client execution, per-round
//! checkpoints, round and loss logs, resume, and the final report.
//!
//! ```text
//! <run>/config.toml            the exact config (single seed)
//! <run>/rounds.jsonl           one RoundRecord per round
//! <run>/metrics.csv            every optimiser step's loss
//! <run>/checkpoints/round-NNN  parameters after round NNN
//! <run>/report.json|txt        final test-set metrics
//! <run>/confusion.csv          5-class confusion matrix (and _binary)
//! <run>/projections.csv        projector latents of test samples
//! ```

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use fedssl_core::baselines::regime_split;
use fedssl_core::federation::{
    evaluate, project_samples, run_training, ClientMap, ClientOutcome, LossKind, LossRecord, RoundOutcome, TrainingSetup,
};
use fedssl_core::metrics::{ConfusionMatrix, MetricsReport};
use fedssl_core::model::ParameterSet;
use fedssl_core::partition::{ClientShard, DatasetSplit};
use serde::{Deserialize, Serialize};

use crate::artifact::Prepared;
use crate::checkpoint;
use crate::config::RunConfig;
use crate::error::{data_err, Error, Result};
use crate::fsio::{create_dir, read_json, read_string, write_bytes, write_json};
use crate::report;

/// Runs client updates on up to `workers` scoped threads. Results come
/// back in shard order, so aggregation order is fixed.
#[derive(Debug, Clone, Copy)]
pub struct Threaded {
    pub workers: usize,
}

impl ClientMap for Threaded {
    fn map(
        &self,
        shards: &[ClientShard],
        f: &(dyn Fn(&ClientShard) -> fedssl_core::Result<ClientOutcome> + Sync),
    ) -> Vec<fedssl_core::Result<ClientOutcome>> {
        let workers = self.workers.min(shards.len());
        if workers <= 1 {
            return shards.iter().map(f).collect();
        }
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<fedssl_core::Result<ClientOutcome>>>> =
            shards.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(shard) = shards.get(i) else { break };
                    let out = f(shard);
                    *slots[i].lock().expect("slot lock") = Some(out);
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot lock").expect("every shard ran")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientLoss {
    pub client: usize,
    pub loss: f64,
}

/// Audit line written after each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub client_losses: Vec<ClientLoss>,
    /// Mean server loss over the last fine-tuning epoch.
    pub server_loss: Option<f64>,
    pub checksum: String,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub binary_accuracy: f64,
    /// Excluded from reproducibility comparisons.
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub workers: usize,
    pub resume: bool,
    /// Test samples whose latents go to `projections.csv`.
    pub projections: usize,
    /// Row label stored in checkpoints and reports.
    pub label: String,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub report: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub params: ParameterSet,
    /// Checksum of each round's checkpoint, in round order.
    pub checksums: Vec<String>,
}

pub const CONFIG_FILE: &str = "config.toml";
pub const ROUNDS_FILE: &str = "rounds.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TXT: &str = "report.txt";
pub const CONFUSION_CSV: &str = "confusion.csv";
pub const CONFUSION_BINARY_CSV: &str = "confusion_binary.csv";
pub const PROJECTIONS_CSV: &str = "projections.csv";

fn server_loss(trace: &[LossRecord]) -> Option<f64> {
    let server: Vec<&LossRecord> = trace.iter().filter(|r| r.client == 0 && r.loss == LossKind::CrossEntropy).collect();
    let last = server.iter().map(|r| r.epoch).max()?;
    let v: Vec<f64> = server.iter().filter(|r| r.epoch == last).map(|r| r.value).collect();
    Some(v.iter().sum::<f64>() / v.len() as f64)
}

fn append_trace(path: &Path, trace: &[LossRecord]) -> Result<()> {
    let fresh = std::fs::metadata(path).map_or(true, |m| m.len() == 0);
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    if fresh && trace.is_empty() {
        w.write_record(["round", "client", "epoch", "step", "loss", "value"]).map_err(|e| csv_err(path, e))?;
    }
    for r in trace {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Data(format!("{}: {e}", path.display()))
}

pub fn read_trace(path: &Path) -> Result<Vec<LossRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

pub fn read_rounds(path: &Path) -> Result<Vec<RoundRecord>> {
    read_string(path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| Error::Data(format!("{}: {e}", path.display()))))
        .collect()
}

fn append_round(path: &Path, record: &RoundRecord) -> Result<()> {
    use std::io::Write;
    let mut file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
    let line = serde_json::to_string(record).map_err(|e| Error::Data(e.to_string()))?;
    writeln!(file, "{line}").map_err(|e| Error::io(path, e))
}

/// Drops log entries after `last_round` so a resumed run appends cleanly.
fn truncate_logs(dir: &Path, last_round: usize) -> Result<()> {
    let rounds_path = dir.join(ROUNDS_FILE);
    if rounds_path.exists() {
        let kept: Vec<RoundRecord> = read_rounds(&rounds_path)?.into_iter().filter(|r| r.round <= last_round).collect();
        let _ = std::fs::remove_file(&rounds_path);
        for r in &kept {
            append_round(&rounds_path, r)?;
        }
    }
    let metrics_path = dir.join(METRICS_FILE);
    if metrics_path.exists() {
        let kept: Vec<LossRecord> = read_trace(&metrics_path)?.into_iter().filter(|r| r.round <= last_round).collect();
        let _ = std::fs::remove_file(&metrics_path);
        append_trace(&metrics_path, &kept)?;
    }
    Ok(())
}

fn clear_run(dir: &Path) -> Result<()> {
    for name in [ROUNDS_FILE, METRICS_FILE, REPORT_JSON, REPORT_TXT, PROJECTIONS_CSV] {
        let p = dir.join(name);
        if p.exists() {
            std::fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    let ck = dir.join("checkpoints");
    if ck.exists() {
        std::fs::remove_dir_all(&ck).map_err(|e| Error::io(&ck, e))?;
    }
    Ok(())
}

/// Trains `setup` on `split`, writing the run directory `dir`.
pub fn run(setup: &TrainingSetup, split: &DatasetSplit, config_toml: &str, dir: &Path, opts: &RunOptions) -> Result<RunSummary> {
    create_dir(dir)?;
    let config_path = dir.join(CONFIG_FILE);
    let checkpoints = dir.join("checkpoints");
    let seed = setup.federation.seed;

    let mut first_round = 0;
    let mut params = None;
    if opts.resume {
        if config_path.exists() && read_string(&config_path)? != config_toml {
            return Err(Error::Config(format!("{} differs from the requested config; refusing to resume", config_path.display())));
        }
        if let Some(last) = checkpoint::latest(&checkpoints)? {
            let (manifest, p) = checkpoint::load(&checkpoint::round_dir(&checkpoints, last))?;
            if manifest.arch != setup.arch || manifest.seed != seed {
                return Err(Error::Config("checkpoint was written by a different architecture or seed".into()));
            }
            truncate_logs(dir, last)?;
            log::info!("resuming {} after round {last}", dir.display());
            first_round = last + 1;
            params = Some(p);
        }
    }
    if params.is_none() {
        clear_run(dir)?;
    }
    write_bytes(&config_path, config_toml.as_bytes())?;
    let init = match params {
        Some(p) => p,
        None => setup.init_params().map_err(crate::error::config_err)?,
    };

    let workers = Threaded { workers: opts.workers.max(1) };
    let mut clock = Instant::now();
    let mut hook_error = None;
    let on_round = |round: usize, out: &RoundOutcome| -> fedssl_core::Result<()> {
        let mut step = || -> Result<()> {
            append_trace(&dir.join(METRICS_FILE), &out.trace)?;
            let manifest = checkpoint::save(
                &checkpoint::round_dir(&checkpoints, round),
                &out.params,
                &setup.arch,
                seed,
                round,
                &opts.label,
            )?;
            let cm = evaluate(&out.params, &setup.arch, &split.test_set).map_err(data_err)?;
            let rep = MetricsReport::from_confusion(&cm, seed).map_err(data_err)?;
            let record = RoundRecord {
                round,
                client_losses: out.client_losses.iter().map(|&(client, loss)| ClientLoss { client, loss }).collect(),
                server_loss: server_loss(&out.trace),
                checksum: manifest.checksum,
                accuracy: rep.accuracy,
                weighted_f1: rep.weighted.f1,
                binary_accuracy: rep.binary_accuracy,
                wall_ms: clock.elapsed().as_secs_f64() * 1e3,
            };
            log::info!(
                "{} seed {seed} round {round}: acc {:.2} F1 {:.2} ({:.1}s)",
                opts.label,
                record.accuracy,
                record.weighted_f1,
                record.wall_ms / 1e3
            );
            append_round(&dir.join(ROUNDS_FILE), &record)?;
            clock = Instant::now();
            Ok(())
        };
        step().map_err(|e| {
            let msg = e.to_string();
            hook_error = Some(e);
            fedssl_core::Error::Config(msg)
        })
    };
    let trained = run_training(init, split, setup, first_round, &workers, on_round);
    if let Some(e) = hook_error {
        return Err(e);
    }
    let params = trained?;
    finish(setup, split, dir, opts, params)
}

fn finish(setup: &TrainingSetup, split: &DatasetSplit, dir: &Path, opts: &RunOptions, params: ParameterSet) -> Result<RunSummary> {
    let seed = setup.federation.seed;
    let cm = evaluate(&params, &setup.arch, &split.test_set).map_err(data_err)?;
    let report = MetricsReport::from_confusion(&cm, seed).map_err(data_err)?;
    write_json(&dir.join(REPORT_JSON), &report)?;
    write_bytes(&dir.join(REPORT_TXT), report::format_report(&opts.label, &report, None).as_bytes())?;
    report::write_confusion_csv(&dir.join(CONFUSION_CSV), &cm)?;
    report::write_confusion_csv(&dir.join(CONFUSION_BINARY_CSV), &cm.binarized().map_err(data_err)?)?;
    if opts.projections > 0 {
        let n = opts.projections.min(split.test_set.len());
        let z = project_samples(&params, &setup.arch, &split.test_set[..n]).map_err(data_err)?;
        let labels: Vec<usize> = split.test_set[..n].iter().map(|x| x.class.map_or(usize::MAX, |c| c.index())).collect();
        report::write_projections(&dir.join(PROJECTIONS_CSV), &z, &labels)?;
    }
    let checksums = read_rounds(&dir.join(ROUNDS_FILE))
        .map(|rs| rs.into_iter().map(|r| r.checksum).collect())
        .unwrap_or_default();
    Ok(RunSummary { dir: dir.to_path_buf(), report, confusion: cm, params, checksums })
}

/// The data a configured method trains on.
pub fn method_split(config: &RunConfig, prepared: &Prepared) -> Result<DatasetSplit> {
    let split = prepared.split();
    regime_split(
        config.method.name.regime(),
        &split,
        &prepared.train,
        config.federation.clients,
        config.data.partition_seed,
    )
    .map_err(data_err)
}

/// One run per seed under `out/seed-<s>`, then the seed-averaged report in
/// `out`.
pub fn train_seeds(config: &RunConfig, prepared: &Prepared, out: &Path, resume: bool) -> Result<(MetricsReport, Vec<RunSummary>)> {
    let split = method_split(config, prepared)?;
    let mut runs = Vec::with_capacity(config.seeds.len());
    for &seed in &config.seeds {
        let cfg = config.with_seed(seed);
        let setup = cfg.setup(&prepared.layout())?;
        let opts = RunOptions {
            workers: config.effective_workers(),
            resume,
            projections: config.output.projections,
            label: config.label(),
        };
        runs.push(run(&setup, &split, &cfg.to_toml(), &out.join(format!("seed-{seed}")), &opts)?);
    }
    let reports: Vec<MetricsReport> = runs.iter().map(|r| r.report.clone()).collect();
    let mean = MetricsReport::average(&reports).map_err(data_err)?;
    let totals = prepared.manifest.class_totals();
    write_json(&out.join(REPORT_JSON), &mean)?;
    write_bytes(&out.join(REPORT_TXT), report::format_report(&config.label(), &mean, Some(&totals)).as_bytes())?;
    write_bytes(&out.join(CONFIG_FILE), config.to_toml().as_bytes())?;
    Ok((mean, runs))
}

/// Reads `report.json` of a finished run.
pub fn load_report(dir: &Path) -> Result<MetricsReport> {
    read_json(&dir.join(REPORT_JSON))
}
