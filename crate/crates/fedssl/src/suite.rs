//! Comparison suite: ablations, baselines and hyperparameter sweeps over
//! the configured seeds, written as CSV and aligned text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedssl_core::baselines::{BaselineName, BaselineSpec};
use fedssl_core::federation::Ablation;
use fedssl_core::metrics::{imbalance_ratios, MetricsReport};

use crate::artifact::Prepared;
use crate::config::RunConfig;
use crate::error::Result;
use crate::fsio::write_bytes;
use crate::runner::train_seeds;

/// One distinct training configuration of the suite.
#[derive(Debug, Clone)]
pub struct SuiteRun {
    /// Directory under the suite output.
    pub key: String,
    pub config: RunConfig,
}

/// Rows of one output table: (row label, run key).
#[derive(Debug, Clone)]
pub struct TablePlan {
    pub name: &'static str,
    pub title: String,
    pub rows: Vec<(String, String)>,
    pub kind: TableKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    /// Rows are methods; columns Acc/Pre/Recall/F1 (weighted).
    Multi,
    /// Same, on the normal/attack reduction with attack-positive P/R/F1.
    Binary,
    /// Settings as columns, metrics as rows (weighted multi-class).
    Sweep,
    /// Per-class breakdown of the first row's run.
    PerClass,
}

#[derive(Debug, Clone, Default)]
pub struct SuitePlan {
    pub runs: Vec<SuiteRun>,
    pub tables: Vec<TablePlan>,
}

impl SuitePlan {
    /// Registers `config`, reusing an identical earlier run.
    fn add(&mut self, key: String, config: RunConfig) -> String {
        let text = config.to_toml();
        if let Some(r) = self.runs.iter().find(|r| r.config.to_toml() == text) {
            return r.key.clone();
        }
        self.runs.push(SuiteRun { key: key.clone(), config });
        key
    }
}

fn slug(s: &str) -> String {
    let mut out = String::new();
    for ch in s.chars() {
        if ch.is_ascii_alphanumeric() || ch == '.' {
            out.push(ch.to_ascii_lowercase());
        } else if !out.ends_with('-') {
            out.push('-');
        }
    }
    out.trim_matches('-').to_string()
}

fn base(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.ablation = Ablation::None;
    c.method = BaselineSpec { name: BaselineName::CFedSslNid, ..cfg.method };
    c
}

/// Expands the suite section into distinct runs and the tables that read
/// them.
pub fn plan(cfg: &RunConfig) -> SuitePlan {
    let mut p = SuitePlan::default();
    let full = base(cfg);
    let full_key = p.add(slug(BaselineName::CFedSslNid.label()), full.clone());

    if cfg.suite.ablations {
        let mut rows = Vec::new();
        for a in Ablation::ALL {
            let mut c = full.clone();
            c.ablation = a;
            let key = p.add(format!("ablation-{}", slug(a.label())), c);
            rows.push((a.label().to_string(), key));
        }
        p.tables.push(TablePlan { name: "ablation", title: "Ablation results (%)".into(), rows, kind: TableKind::Multi });
    }
    if !cfg.suite.baselines.is_empty() {
        let mut rows = Vec::new();
        for &name in &cfg.suite.baselines {
            let mut c = full.clone();
            c.method = BaselineSpec { name, ..cfg.method };
            let key = p.add(slug(name.label()), c);
            rows.push((name.label().to_string(), key));
        }
        p.tables.push(TablePlan {
            name: "binary",
            title: "Binary classification results (%)".into(),
            rows: rows.clone(),
            kind: TableKind::Binary,
        });
        p.tables.push(TablePlan { name: "multiclass", title: "Multi-class results (%)".into(), rows, kind: TableKind::Multi });
    }
    let mut sweep = |name: &'static str, title: String, settings: Vec<(String, RunConfig)>| {
        if settings.is_empty() {
            return;
        }
        let rows = settings.into_iter().map(|(label, c)| {
            let key = p.add(format!("{name}-{}", slug(&label)), c);
            (label, key)
        });
        let rows = rows.collect();
        p.tables.push(TablePlan { name, title, rows, kind: TableKind::Sweep });
    };
    sweep(
        "temperature",
        format!("Temperature sweep, B={} (%)", full.federation.client_batch),
        cfg.suite
            .temperatures
            .iter()
            .map(|&t| {
                let mut c = full.clone();
                c.contrastive.temperature = t;
                (format!("tau={t}"), c)
            })
            .collect(),
    );
    sweep(
        "bn",
        format!("Projection-head BN sweep, tau={} (%)", cfg.suite.bn_temperature),
        cfg.suite
            .bn_counts
            .iter()
            .map(|&b| {
                let mut c = full.clone();
                c.model.projection_bn_count = b;
                c.contrastive.temperature = cfg.suite.bn_temperature;
                (format!("BN={b}"), c)
            })
            .collect(),
    );
    sweep(
        "batch",
        format!("Client batch sweep, tau={} (%)", full.contrastive.temperature),
        cfg.suite
            .client_batches
            .iter()
            .map(|&b| {
                let mut c = full.clone();
                c.federation.client_batch = b;
                (format!("B={b}"), c)
            })
            .collect(),
    );
    p.tables.push(TablePlan {
        name: "per_class",
        title: "CFedSSL-NID per-class results (%)".into(),
        rows: vec![(BaselineName::CFedSslNid.label().to_string(), full_key)],
        kind: TableKind::PerClass,
    });
    p
}

/// Outcome of every run, keyed by run key; failures carry the message.
pub type SuiteResults = BTreeMap<String, std::result::Result<MetricsReport, String>>;

/// Text and CSV renderings of one table.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedTable {
    pub text: String,
    pub csv: String,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "failed".into(), |v| if v.is_finite() { format!("{v:.2}") } else { "inf".into() })
}

fn grid(title: &str, header: &[String], rows: &[(String, Vec<Option<f64>>)]) -> RenderedTable {
    let mut csv = header.join(",");
    csv.push('\n');
    for (label, vals) in rows {
        let cells: Vec<String> = vals.iter().map(|v| cell(*v)).collect();
        let _ = writeln!(csv, "{},{}", label.replace(',', ";"), cells.join(","));
    }
    let first = rows.iter().map(|r| r.0.len()).chain([header[0].len()]).max().unwrap_or(0) + 2;
    let width = header.iter().skip(1).map(String::len).max().unwrap_or(0).max(8) + 2;
    let mut text = format!("{title}\n");
    let _ = write!(text, "{:<first$}", header[0]);
    for h in &header[1..] {
        let _ = write!(text, "{h:>width$}");
    }
    text.push('\n');
    for (label, vals) in rows {
        let _ = write!(text, "{label:<first$}");
        for v in vals {
            let _ = write!(text, "{:>width$}", cell(*v));
        }
        text.push('\n');
    }
    RenderedTable { text, csv }
}

fn metrics_row(r: &MetricsReport, binary: bool) -> Vec<Option<f64>> {
    if binary {
        vec![Some(r.binary_accuracy), Some(r.binary.precision), Some(r.binary.recall), Some(r.binary.f1)]
    } else {
        vec![Some(r.accuracy), Some(r.weighted.precision), Some(r.weighted.recall), Some(r.weighted.f1)]
    }
}

/// Renders a planned table from finished results. `class_totals` feeds the
/// imbalance-ratio column of the per-class table.
pub fn render_table(t: &TablePlan, results: &SuiteResults, class_totals: &[u64]) -> RenderedTable {
    let metric_names = ["Acc", "Pre", "Recall", "F1"];
    let get = |key: &String| results.get(key).and_then(|r| r.as_ref().ok());
    match t.kind {
        TableKind::Multi | TableKind::Binary => {
            let mut header = vec!["Methods".to_string()];
            header.extend(metric_names.iter().map(|s| s.to_string()));
            let rows: Vec<_> = t
                .rows
                .iter()
                .map(|(label, key)| {
                    (label.clone(), get(key).map_or(vec![None; 4], |r| metrics_row(r, t.kind == TableKind::Binary)))
                })
                .collect();
            grid(&t.title, &header, &rows)
        }
        TableKind::Sweep => {
            let mut header = vec!["Metrics".to_string()];
            header.extend(t.rows.iter().map(|r| r.0.clone()));
            let cols: Vec<Vec<Option<f64>>> =
                t.rows.iter().map(|(_, key)| get(key).map_or(vec![None; 4], |r| metrics_row(r, false))).collect();
            let rows: Vec<_> = metric_names
                .iter()
                .enumerate()
                .map(|(m, name)| (name.to_string(), cols.iter().map(|c| c[m]).collect()))
                .collect();
            grid(&t.title, &header, &rows)
        }
        TableKind::PerClass => {
            let header: Vec<String> =
                ["Classes", "Imbalanced Ratio", "Pre", "Recall", "F1"].iter().map(|s| s.to_string()).collect();
            let ratios = imbalance_ratios(class_totals).unwrap_or_default();
            let rows = match t.rows.first().and_then(|(_, k)| get(k)) {
                Some(r) => r
                    .per_class
                    .iter()
                    .enumerate()
                    .map(|(c, prf)| {
                        (
                            r.class_names[c].clone(),
                            vec![ratios.get(c).copied(), Some(prf.precision), Some(prf.recall), Some(prf.f1)],
                        )
                    })
                    .collect(),
                None => vec![("CFedSSL-NID".to_string(), vec![None; 4])],
            };
            grid(&t.title, &header, &rows)
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteOutcome {
    pub plan: SuitePlan,
    pub results: SuiteResults,
    pub tables: Vec<(String, RenderedTable)>,
    pub files: Vec<PathBuf>,
}

/// Runs every planned configuration (a failing run is recorded and the
/// suite moves on), then writes `table_<name>.csv|txt`, `tables.txt` and
/// `failures.txt` under `out`.
pub fn run_suite(cfg: &RunConfig, prepared: &Prepared, out: &Path, resume: bool) -> Result<SuiteOutcome> {
    let plan = plan(cfg);
    let mut results = SuiteResults::new();
    for run in &plan.runs {
        log::info!("suite: {} ({} seeds)", run.key, run.config.seeds.len());
        let r = train_seeds(&run.config, prepared, &out.join(&run.key), resume);
        if let Err(e) = &r {
            log::error!("suite run {} failed: {e}", run.key);
        }
        results.insert(run.key.clone(), r.map(|(m, _)| m).map_err(|e| e.to_string()));
    }
    let totals = prepared.manifest.class_totals();
    let mut tables = Vec::new();
    let mut files = Vec::new();
    let mut all = String::new();
    for t in &plan.tables {
        let rendered = render_table(t, &results, &totals);
        for (ext, body) in [("csv", &rendered.csv), ("txt", &rendered.text)] {
            let path = out.join(format!("table_{}.{ext}", t.name));
            write_bytes(&path, body.as_bytes())?;
            files.push(path);
        }
        all.push_str(&rendered.text);
        all.push('\n');
        tables.push((t.name.to_string(), rendered));
    }
    write_bytes(&out.join("tables.txt"), all.as_bytes())?;
    let failures: String = results
        .iter()
        .filter_map(|(k, r)| r.as_ref().err().map(|e| format!("{k}: {e}\n")))
        .collect();
    write_bytes(&out.join("failures.txt"), failures.as_bytes())?;
    Ok(SuiteOutcome { plan, results, tables, files })
}
