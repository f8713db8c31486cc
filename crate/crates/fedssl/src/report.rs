//! Text and CSV reports, and SVG plots: confusion heatmaps, loss curves,
//! a 2-D PCA scatter of projector latents and augmentation comparisons.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use fedssl_core::augment::{make_pairs, AugmentationPolicy};
use fedssl_core::features::{FeatureLayout, FeatureVector};
use fedssl_core::labels::TrafficClass;
use fedssl_core::metrics::{imbalance_ratios, ConfusionMatrix, MetricsReport};
use fedssl_core::rng::{derive, Purpose};
use fedssl_core::tensor::Matrix;
use nalgebra::{DMatrix, SymmetricEigen};
use plotters::prelude::*;

use crate::error::{data_err, Error, Result};
use crate::fsio::{read_json, write_bytes};
use crate::runner::{self, CONFUSION_BINARY_CSV, CONFUSION_CSV, METRICS_FILE, PROJECTIONS_CSV, REPORT_JSON, REPORT_TXT};

fn ratio(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.2}")
    } else {
        "inf".into()
    }
}

/// Headline metrics plus a per-class table. Imbalance ratios come from
/// `class_totals` when given, else from the test support.
pub fn format_report(label: &str, r: &MetricsReport, class_totals: Option<&[u64]>) -> String {
    let mut s = String::new();
    let seeds: Vec<String> = r.seeds.iter().map(u64::to_string).collect();
    let _ = writeln!(s, "{label} (seeds: {})", seeds.join(", "));
    let _ = writeln!(s, "{:<12}{:>9}{:>9}{:>9}{:>9}", "", "Acc", "Pre", "Recall", "F1");
    let _ = writeln!(
        s,
        "{:<12}{:>9.2}{:>9.2}{:>9.2}{:>9.2}",
        "multi-class", r.accuracy, r.weighted.precision, r.weighted.recall, r.weighted.f1
    );
    let _ = writeln!(
        s,
        "{:<12}{:>9.2}{:>9.2}{:>9.2}{:>9.2}",
        "binary", r.binary_accuracy, r.binary.precision, r.binary.recall, r.binary.f1
    );
    let _ = writeln!(s);
    let counts = class_totals.unwrap_or(&r.support);
    let ratios = imbalance_ratios(counts).unwrap_or_else(|_| vec![f64::NAN; counts.len()]);
    let _ = writeln!(s, "{:<12}{:>9}{:>9}{:>9}{:>9}{:>11}", "class", "Pre", "Recall", "F1", "support", "imbalance");
    for (c, prf) in r.per_class.iter().enumerate() {
        let _ = writeln!(
            s,
            "{:<12}{:>9.2}{:>9.2}{:>9.2}{:>9}{:>11}",
            r.class_names.get(c).map_or("?", String::as_str),
            prf.precision,
            prf.recall,
            prf.f1,
            r.support.get(c).copied().unwrap_or(0),
            ratios.get(c).map_or("-".into(), |&v| ratio(v))
        );
    }
    s
}

pub fn write_confusion_csv(path: &Path, cm: &ConfusionMatrix) -> Result<()> {
    let mut s = String::from("true\\pred");
    for n in &cm.class_names {
        let _ = write!(s, ",{n}");
    }
    s.push('\n');
    for (name, row) in cm.class_names.iter().zip(&cm.counts) {
        s.push_str(name);
        for v in row {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

pub fn read_confusion_csv(path: &Path) -> Result<ConfusionMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let names: Vec<String> = r
        .headers()
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        .iter()
        .skip(1)
        .map(String::from)
        .collect();
    let mut cm = ConfusionMatrix::new(names);
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        if i >= cm.classes() || row.len() != cm.classes() + 1 {
            return Err(Error::Data(format!("{}: not a square confusion matrix", path.display())));
        }
        for (j, v) in row.iter().skip(1).enumerate() {
            cm.counts[i][j] = v.parse().map_err(|_| Error::Data(format!("{}: bad count `{v}`", path.display())))?;
        }
    }
    Ok(cm)
}

/// `class,z0,z1,...` with the class index of each test sample.
pub fn write_projections(path: &Path, z: &Matrix, classes: &[usize]) -> Result<()> {
    let mut s = String::from("class");
    for j in 0..z.cols() {
        let _ = write!(s, ",z{j}");
    }
    s.push('\n');
    for (i, &c) in classes.iter().enumerate() {
        let _ = write!(s, "{c}");
        for v in z.row(i) {
            let _ = write!(s, ",{v}");
        }
        s.push('\n');
    }
    write_bytes(path, s.as_bytes())
}

fn read_projections(path: &Path) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut classes = Vec::new();
    let mut rows = Vec::new();
    for row in r.records() {
        let row = row.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let parse = |v: &str| v.parse::<f64>().map_err(|_| Error::Data(format!("{}: bad value `{v}`", path.display())));
        classes.push(parse(&row[0])? as usize);
        rows.push(row.iter().skip(1).map(parse).collect::<Result<Vec<f64>>>()?);
    }
    Ok((classes, rows))
}

/// First two principal components of the rows of `x`.
pub fn pca_2d(x: &[Vec<f64>]) -> Vec<(f64, f64)> {
    let n = x.len();
    let d = x.first().map_or(0, Vec::len);
    if n == 0 || d == 0 {
        return Vec::new();
    }
    let m = DMatrix::from_fn(n, d, |i, j| x[i][j]);
    let mean = m.row_mean();
    let centered = DMatrix::from_fn(n, d, |i, j| m[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n.max(2) - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let axis = |k: usize| order.get(k).map(|&c| eig.eigenvectors.column(c).into_owned());
    let (a, b) = (axis(0), axis(1));
    (0..n)
        .map(|i| {
            let row = centered.row(i);
            let p = |v: &Option<nalgebra::DVector<f64>>| v.as_ref().map_or(0.0, |v| row.dot(&v.transpose()));
            (p(&a), p(&b))
        })
        .collect()
}

fn plot_err<E: std::fmt::Display>(path: &Path) -> impl Fn(E) -> Error + '_ {
    move |e| Error::Data(format!("{}: plotting failed: {e}", path.display()))
}

/// C x C heatmap, counts annotated, colour by row-normalised share.
pub fn plot_confusion(path: &Path, cm: &ConfusionMatrix, title: &str) -> Result<()> {
    let c = cm.classes();
    let root = SVGBackend::new(path, (120 + 90 * c as u32, 100 + 80 * c as u32)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err(path))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(80)
        .build_cartesian_2d(0..c, 0..c)
        .map_err(plot_err(path))?;
    let names = cm.class_names.clone();
    let label = move |v: &usize| names.get(*v).cloned().unwrap_or_default();
    chart
        .configure_mesh()
        .disable_mesh()
        .x_desc("predicted")
        .y_desc("true")
        .x_labels(c)
        .y_labels(c)
        .x_label_formatter(&label)
        .y_label_formatter(&|v| cm.class_names.get(c.saturating_sub(1) - (*v).min(c - 1)).cloned().unwrap_or_default())
        .draw()
        .map_err(plot_err(path))?;
    for (t, row) in cm.counts.iter().enumerate() {
        let total = row.iter().sum::<u64>().max(1) as f64;
        for (p, &v) in row.iter().enumerate() {
            let share = v as f64 / total;
            let y = c - 1 - t;
            let shade = (255.0 * (1.0 - share)) as u8;
            chart
                .draw_series(std::iter::once(Rectangle::new([(p, y), (p + 1, y + 1)], RGBColor(shade, shade, 255).filled())))
                .map_err(plot_err(path))?;
            let colour = if share > 0.5 { WHITE } else { BLACK };
            chart
                .draw_series(std::iter::once(Text::new(
                    v.to_string(),
                    (p, y + 1),
                    ("sans-serif", 14).into_font().color(&colour),
                )))
                .map_err(plot_err(path))?;
        }
    }
    root.present().map_err(plot_err(path))
}

/// Mean loss per (loss kind, party, round, epoch) against fractional round.
pub fn plot_losses(path: &Path, trace: &[fedssl_core::federation::LossRecord]) -> Result<()> {
    let mut series: BTreeMap<String, BTreeMap<(usize, usize), (f64, usize)>> = BTreeMap::new();
    let mut epochs: BTreeMap<String, usize> = BTreeMap::new();
    for r in trace {
        let party = if r.client == 0 { "server" } else { "clients" };
        let key = format!("{} ({party})", r.loss.name());
        let e = series.entry(key.clone()).or_default().entry((r.round, r.epoch)).or_insert((0.0, 0));
        e.0 += r.value;
        e.1 += 1;
        let m = epochs.entry(key).or_insert(0);
        *m = (*m).max(r.epoch + 1);
    }
    let points: Vec<(String, Vec<(f64, f64)>)> = series
        .into_iter()
        .map(|(k, v)| {
            let per = epochs[&k] as f64;
            let pts = v.into_iter().map(|((round, epoch), (s, n))| (round as f64 + (epoch as f64 + 1.0) / per, s / n as f64)).collect();
            (k, pts)
        })
        .collect();
    let x_max = points.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).fold(1.0, f64::max);
    let y_max = points.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).fold(0.1, f64::max) * 1.05;
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err(path))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("training loss", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0.0..x_max, 0.0..y_max)
        .map_err(plot_err(path))?;
    chart.configure_mesh().x_desc("round").y_desc("loss").draw().map_err(plot_err(path))?;
    for (i, (name, pts)) in points.into_iter().enumerate() {
        let colour = Palette99::pick(i).to_rgba();
        chart
            .draw_series(LineSeries::new(pts, colour.stroke_width(2)))
            .map_err(plot_err(path))?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], colour));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err(path))?;
    root.present().map_err(plot_err(path))
}

/// PCA scatter of stored projections, coloured by class.
pub fn plot_embedding(path: &Path, classes: &[usize], rows: &[Vec<f64>]) -> Result<()> {
    let pts = pca_2d(rows);
    let bound = |f: fn(&(f64, f64)) -> f64| {
        let (lo, hi) = pts.iter().map(f).fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
        if lo.is_finite() && hi > lo {
            let pad = 0.05 * (hi - lo);
            (lo - pad)..(hi + pad)
        } else {
            -1.0..1.0
        }
    };
    let root = SVGBackend::new(path, (720, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err(path))?;
    let mut chart = ChartBuilder::on(&root)
        .caption("projector latents (PCA)", ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(bound(|p| p.0), bound(|p| p.1))
        .map_err(plot_err(path))?;
    chart.configure_mesh().draw().map_err(plot_err(path))?;
    for class in TrafficClass::ALL {
        let colour = Palette99::pick(class.index()).to_rgba();
        let mine: Vec<(f64, f64)> =
            pts.iter().zip(classes).filter(|(_, &c)| c == class.index()).map(|(p, _)| *p).collect();
        chart
            .draw_series(mine.into_iter().map(|p| Circle::new(p, 2, colour.filled())))
            .map_err(plot_err(path))?
            .label(class.name())
            .legend(move |(x, y)| Circle::new((x + 10, y), 4, colour.filled()));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err(path))?;
    root.present().map_err(plot_err(path))
}

/// Original / weak / strong views of one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationTriple {
    pub sample: usize,
    pub class: Option<TrafficClass>,
    pub original: Vec<f32>,
    pub weak: Vec<f32>,
    pub strong: Vec<f32>,
    pub sigma_weak: f64,
    pub sigma_strong: f64,
}

/// Views of the first `count` samples, drawn from the augmentation stream.
pub fn augmentation_triples(
    samples: &[FeatureVector],
    count: usize,
    policy: &AugmentationPolicy,
    layout: &FeatureLayout,
    seed: u64,
) -> Result<Vec<AugmentationTriple>> {
    let refs: Vec<&FeatureVector> = samples.iter().take(count).collect();
    let mut rng = derive(seed, Purpose::Augment, 0, 0);
    let batch = make_pairs(&refs, policy, layout, &mut rng).map_err(data_err)?;
    Ok(batch
        .pairs
        .into_iter()
        .map(|p| AugmentationTriple {
            sample: p.source_index,
            class: refs[p.source_index].class,
            original: refs[p.source_index].values.clone(),
            weak: p.a.values,
            strong: p.b.values,
            sigma_weak: batch.sigma_weak,
            sigma_strong: batch.sigma_strong,
        })
        .collect())
}

/// Long format: `sample,class,feature,original,weak,strong`.
pub fn write_augmentation_csv(path: &Path, triples: &[AugmentationTriple]) -> Result<()> {
    let mut s = String::from("sample,class,feature,original,weak,strong\n");
    for t in triples {
        let class = t.class.map_or("unlabeled", TrafficClass::name);
        for j in 0..t.original.len() {
            let _ = writeln!(s, "{},{class},{j},{},{},{}", t.sample, t.original[j], t.weak[j], t.strong[j]);
        }
    }
    write_bytes(path, s.as_bytes())
}

/// The three views of one sample against feature index.
pub fn plot_augmentation(path: &Path, t: &AugmentationTriple) -> Result<()> {
    let d = t.original.len();
    let root = SVGBackend::new(path, (900, 420)).into_drawing_area();
    root.fill(&WHITE).map_err(plot_err(path))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(format!("sample {}: original, weak, strong", t.sample), ("sans-serif", 18))
        .margin(10)
        .x_label_area_size(30)
        .y_label_area_size(40)
        .build_cartesian_2d(0..d, -0.05f64..1.05)
        .map_err(plot_err(path))?;
    chart.configure_mesh().x_desc("feature").draw().map_err(plot_err(path))?;
    let views: [(&str, &Vec<f32>, RGBColor); 3] =
        [("original", &t.original, BLACK), ("weak", &t.weak, BLUE), ("strong", &t.strong, RED)];
    for (name, values, colour) in views {
        chart
            .draw_series(LineSeries::new(values.iter().enumerate().map(|(j, &v)| (j, f64::from(v))), colour))
            .map_err(plot_err(path))?
            .label(name)
            .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 20, y)], colour));
    }
    chart.configure_series_labels().background_style(WHITE.mix(0.8)).border_style(BLACK).draw().map_err(plot_err(path))?;
    root.present().map_err(plot_err(path))
}

/// Files written by [`render`].
#[derive(Debug, Clone, Default)]
pub struct Rendered {
    pub text: String,
    pub files: Vec<PathBuf>,
}

/// Rebuilds the report and plots of a finished run directory (or of a
/// multi-seed directory, which holds only the averaged report).
pub fn render(run_dir: &Path) -> Result<Rendered> {
    let report_path = run_dir.join(REPORT_JSON);
    if !report_path.is_file() {
        return Err(Error::MissingInput(report_path));
    }
    let report: MetricsReport = read_json(&report_path)?;
    let label = std::fs::read_to_string(run_dir.join(REPORT_TXT))
        .ok()
        .and_then(|t| t.lines().next().and_then(|l| l.split(" (seeds").next()).map(String::from))
        .unwrap_or_else(|| "run".into());
    let mut out = Rendered { text: format_report(&label, &report, None), files: Vec::new() };
    let mut csv = String::from("scope,class,precision,recall,f1,support\n");
    for (c, prf) in report.per_class.iter().enumerate() {
        let _ = writeln!(csv, "class,{},{:.2},{:.2},{:.2},{}", report.class_names[c], prf.precision, prf.recall, prf.f1, report.support[c]);
    }
    let w = report.weighted;
    let _ = writeln!(csv, "weighted,all,{:.2},{:.2},{:.2},{}", w.precision, w.recall, w.f1, report.support.iter().sum::<u64>());
    let b = report.binary;
    let _ = writeln!(csv, "binary,Attack,{:.2},{:.2},{:.2},", b.precision, b.recall, b.f1);
    let _ = writeln!(csv, "accuracy,multi,{:.2},,,", report.accuracy);
    let _ = writeln!(csv, "accuracy,binary,{:.2},,,", report.binary_accuracy);
    let csv_path = run_dir.join("report.csv");
    write_bytes(&csv_path, csv.as_bytes())?;
    out.files.push(csv_path);

    for (name, title) in [(CONFUSION_CSV, "confusion (5-class)"), (CONFUSION_BINARY_CSV, "confusion (binary)")] {
        let p = run_dir.join(name);
        if p.is_file() {
            let cm = read_confusion_csv(&p)?;
            let svg = p.with_extension("svg");
            plot_confusion(&svg, &cm, title)?;
            out.files.push(svg);
        }
    }
    let metrics = run_dir.join(METRICS_FILE);
    if metrics.is_file() {
        let trace = runner::read_trace(&metrics)?;
        if !trace.is_empty() {
            let svg = run_dir.join("losses.svg");
            plot_losses(&svg, &trace)?;
            out.files.push(svg);
        }
    }
    let proj = run_dir.join(PROJECTIONS_CSV);
    if proj.is_file() {
        let (classes, rows) = read_projections(&proj)?;
        let svg = run_dir.join("embedding.svg");
        plot_embedding(&svg, &classes, &rows)?;
        out.files.push(svg);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let mut cm = ConfusionMatrix::traffic();
        for (t, p) in [(0, 0), (1, 1), (4, 0), (3, 3), (3, 0)] {
            cm.add(t, p).unwrap();
        }
        let p = dir.path().join("c.csv");
        write_confusion_csv(&p, &cm).unwrap();
        assert_eq!(read_confusion_csv(&p).unwrap(), cm);
        let svg = dir.path().join("c.svg");
        plot_confusion(&svg, &cm, "t").unwrap();
        assert!(std::fs::read_to_string(svg).unwrap().contains("<svg"));
    }

    #[test]
    fn pca_recovers_the_dominant_axis() {
        let rows: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, 2.0 * i as f64, 0.01 * (i % 3) as f64]).collect();
        let pts = pca_2d(&rows);
        // first component spans the line, second is tiny
        let spread = |f: fn(&(f64, f64)) -> f64| pts.iter().map(f).fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(spread(|p| p.0) > 50.0);
        assert!(spread(|p| p.1) < 0.1);
    }

    #[test]
    fn report_text_lists_headline_metrics() {
        let mut cm = ConfusionMatrix::traffic();
        for (t, p) in [(0, 0), (1, 1), (2, 2), (3, 0), (4, 4), (0, 0)] {
            cm.add(t, p).unwrap();
        }
        let r = MetricsReport::from_confusion(&cm, 3).unwrap();
        let text = format_report("CFedSSL-NID", &r, Some(&[77054, 53385, 14077, 3749, 252]));
        for key in ["Acc", "Pre", "Recall", "F1", "binary", "305.77", "U2R"] {
            assert!(text.contains(key), "missing {key}:\n{text}");
        }
    }
}
