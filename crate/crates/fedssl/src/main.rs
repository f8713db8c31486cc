use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fedssl::artifact::{prepare, Prepared};
use fedssl::config::{RunConfig, DATA_DIR_ENV};
use fedssl::error::{Error, Result};
use fedssl::latency::measure_latency;
use fedssl::synthetic::{write_dataset, SyntheticSpec, NSLKDD_TEST_COUNTS, NSLKDD_TRAIN_COUNTS};
use fedssl::{checkpoint, report, runner, suite};
use fedssl_core::features::FeatureVector;
use fedssl_core::model::{count_flops, count_params};
use fedssl_core::rng::{derive, Purpose};
use rand::Rng;

#[derive(Parser)]
#[command(name = "fedssl", version, about = "Contrastive federated semi-supervised intrusion detection on NSL-KDD")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding KDDTrain+.txt and KDDTest+.txt.
    #[arg(long, env = DATA_DIR_ENV)]
    data_dir: Option<PathBuf>,
    /// Single training seed (replaces the configured list).
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Comma-separated training seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Threads for client updates (default: min(clients, cores)).
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Encode and partition the raw files into an artifact directory.
    Prepare {
        #[command(flatten)]
        common: Common,
        /// Artifact directory (default: data.artifact_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the configured method for every seed and report on the test set.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue each seed from its latest round checkpoint.
        #[arg(long)]
        resume: bool,
        /// Run directory (default: output.dir/<method>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run ablations, baselines and sweeps and write comparison tables.
    Suite {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        resume: bool,
        /// Suite directory (default: output.dir/suite).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Re-render the report and plots of a finished run directory.
    Report { run_dir: PathBuf },
    /// Dump original / weak / strong views of test samples as CSV and SVG.
    Augment {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 8)]
        count: usize,
        #[arg(long, default_value = "augmentation")]
        out: PathBuf,
    },
    /// Write a synthetic dataset in NSL-KDD format.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Fraction of the real per-class file sizes.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
    /// Parameter count, FLOPs, checkpoint size and inference latency.
    Model {
        #[command(flatten)]
        common: Common,
        /// Checkpoint directory to time (default: fresh initialisation).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = 16)]
        batch: usize,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
}

fn load_config(c: &Common) -> Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if c.data_dir.is_some() && cfg.data.root.is_none() {
        cfg.data.root = c.data_dir.clone();
    }
    if let Some(s) = c.seed {
        cfg.seeds = vec![s];
    }
    if let Some(s) = &c.seeds {
        cfg.seeds = s.clone();
    }
    if let Some(w) = c.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_artifact(cfg: &RunConfig) -> Result<Prepared> {
    let dir = &cfg.data.artifact_dir;
    if !dir.join(fedssl::artifact::MANIFEST).is_file() {
        return Err(Error::Data(format!("no prepared dataset at {}; run `fedssl prepare` first", dir.display())));
    }
    Prepared::load(dir)
}

fn slug(label: &str) -> String {
    label.to_ascii_lowercase().replace(|c: char| !c.is_ascii_alphanumeric(), "-")
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare { common, out } => {
            let cfg = load_config(&common)?;
            let out = out.unwrap_or_else(|| cfg.data.artifact_dir.clone());
            let p = prepare(&cfg.data.train_path(), &cfg.data.test_path(), &cfg.partition, cfg.data.partition_seed, &out)?;
            let m = &p.manifest;
            println!("D = {}", m.dim);
            println!("train {} / test {}", m.train_count, m.test_count);
            println!("server {} / clients {:?} / discarded {}", m.server_count, m.client_counts, m.discarded_count);
            println!("class totals (train+test): {:?}", m.class_totals());
            println!("written to {}", out.display());
        }
        Command::Train { common, resume, out } => {
            let cfg = load_config(&common)?;
            let prepared = load_artifact(&cfg)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.join(slug(&cfg.label())));
            let (mean, _) = runner::train_seeds(&cfg, &prepared, &out, resume)?;
            print!("{}", report::format_report(&cfg.label(), &mean, Some(&prepared.manifest.class_totals())));
            println!("run directory: {}", out.display());
        }
        Command::Suite { common, resume, out } => {
            let cfg = load_config(&common)?;
            let prepared = load_artifact(&cfg)?;
            let out = out.unwrap_or_else(|| cfg.output.dir.join("suite"));
            let outcome = suite::run_suite(&cfg, &prepared, &out, resume)?;
            for (_, t) in &outcome.tables {
                println!("{}", t.text);
            }
            let failed = outcome.results.values().filter(|r| r.is_err()).count();
            if failed > 0 {
                eprintln!("{failed} run(s) failed; see {}", out.join("failures.txt").display());
            }
        }
        Command::Report { run_dir } => {
            let r = report::render(&run_dir)?;
            print!("{}", r.text);
            for f in r.files {
                println!("wrote {}", f.display());
            }
        }
        Command::Augment { common, count, out } => {
            let cfg = load_config(&common)?;
            let prepared = load_artifact(&cfg)?;
            let triples =
                report::augmentation_triples(&prepared.test, count, &cfg.augmentation, &prepared.layout(), cfg.seeds[0])?;
            let csv = out.join("augmentation.csv");
            report::write_augmentation_csv(&csv, &triples)?;
            println!("wrote {}", csv.display());
            for t in triples.iter().take(3) {
                let svg = out.join(format!("augmentation-{}.svg", t.sample));
                report::plot_augmentation(&svg, t)?;
                println!("wrote {}", svg.display());
            }
        }
        Command::Synth { out, scale, seed } => {
            if !(scale > 0.0) {
                return Err(Error::Config("--scale must be positive".into()));
            }
            let scaled = |counts: [usize; 5]| counts.map(|n| ((n as f64 * scale).round() as usize).max(1));
            let train = SyntheticSpec::new(scaled(NSLKDD_TRAIN_COUNTS), seed, 1);
            let test = SyntheticSpec { cover_categories: false, ..SyntheticSpec::new(scaled(NSLKDD_TEST_COUNTS), seed, 2) };
            write_dataset(&out, &train, &test)?;
            println!("wrote {} training and {} test records to {}", train.total(), test.total(), out.display());
        }
        Command::Model { common, checkpoint: ck, batch, trials } => {
            let cfg = load_config(&common)?;
            let (arch, params, size) = match ck {
                Some(dir) => {
                    let (m, p) = checkpoint::load(&dir)?;
                    (m.arch, p, Some(checkpoint::size_on_disk(&dir)?))
                }
                None => {
                    let setup = cfg.setup(&fedssl_core::features::FeatureLayout::all_numeric(cfg.model.input_dim))?;
                    (setup.arch.clone(), setup.init_params().map_err(|e| Error::Config(e.to_string()))?, None)
                }
            };
            println!("parameters: {}", count_params(&arch));
            println!("FLOPs per sample: {}", count_flops(&arch));
            println!("f32 size: {:.2} KiB", count_params(&arch) as f64 * 4.0 / 1024.0);
            if let Some(s) = size {
                println!("checkpoint on disk: {:.2} KiB", s as f64 / 1024.0);
            }
            let mut rng = derive(cfg.seeds[0], Purpose::Evaluation, 0, 0);
            let samples: Vec<FeatureVector> = (0..batch.max(1) * 4)
                .map(|_| FeatureVector::new((0..arch.input_dim).map(|_| rng.random::<f32>()).collect(), None))
                .collect();
            let l = measure_latency(&params, &arch, &samples, batch, trials)?;
            println!("latency: {:.4} ms/sample (batch {batch}, {trials} trials)", l.ms_per_sample);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

