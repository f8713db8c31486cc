//! Confusion matrices and classification metrics.
//!
//! Rates are returned as percentages. A class whose precision or recall
//! denominator is zero contributes 0 to that metric and logs a warning.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::labels::{binarize_index, BinaryClass, TrafficClass};
use crate::{Error, Result};

/// `counts[t][p]`: samples of true class `t` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub class_names: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let c = class_names.len();
        Self { class_names, counts: vec![vec![0; c]; c] }
    }

    /// Unnamed classes `"0"`, `"1"`, ...
    pub fn with_classes(c: usize) -> Self {
        Self::new((0..c).map(|i| alloc::format!("{i}")).collect())
    }

    pub fn traffic() -> Self {
        Self::new(TrafficClass::ALL.iter().map(|c| c.name().into()).collect())
    }

    pub fn binary() -> Self {
        Self::new(BinaryClass::ALL.iter().map(|c| c.name().into()).collect())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }

    /// Number of samples whose true class is `c`.
    pub fn support(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn predicted(&self, c: usize) -> u64 {
        self.counts.iter().map(|row| row[c]).sum()
    }

    pub fn add(&mut self, truth: usize, pred: usize) -> Result<()> {
        let c = self.classes();
        for l in [truth, pred] {
            if l >= c {
                return Err(Error::LabelRange { label: l, classes: c });
            }
        }
        self.counts[truth][pred] += 1;
        Ok(())
    }

    /// Collapses a five-class matrix to normal / attack.
    pub fn binarized(&self) -> Result<Self> {
        if self.classes() != TrafficClass::COUNT {
            return Err(Error::Shape(alloc::format!("cannot binarize a {}-class matrix", self.classes())));
        }
        let mut out = Self::binary();
        for t in 0..self.classes() {
            for p in 0..self.classes() {
                out.counts[binarize_index(t)][binarize_index(p)] += self.counts[t][p];
            }
        }
        Ok(out)
    }

    fn ensure_nonempty(&self) -> Result<()> {
        if self.total() == 0 {
            Err(Error::Empty("confusion matrix"))
        } else {
            Ok(())
        }
    }
}

/// Builds a `c`-class confusion matrix from paired labels.
pub fn confusion(truth: &[usize], pred: &[usize], c: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Shape(alloc::format!("{} true labels but {} predictions", truth.len(), pred.len())));
    }
    let mut cm = ConfusionMatrix::with_classes(c);
    for (&t, &p) in truth.iter().zip(pred) {
        cm.add(t, p)?;
    }
    Ok(cm)
}

/// `100 * trace / total`.
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    cm.ensure_nonempty()?;
    Ok(100.0 * cm.trace() as f64 / cm.total() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64, what: &str, class: &str) -> f64 {
    if den == 0 {
        log::warn!("{what} of class {class} is undefined (zero denominator); counted as 0");
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

/// Precision/recall/F1 of each class, treating it as the positive class.
pub fn per_class(cm: &ConfusionMatrix) -> Vec<Prf> {
    (0..cm.classes())
        .map(|c| {
            let tp = cm.counts[c][c];
            let name = &cm.class_names[c];
            let p = ratio(tp, cm.predicted(c), "precision", name);
            let r = ratio(tp, cm.support(c), "recall", name);
            Prf { precision: 100.0 * p, recall: 100.0 * r, f1: 100.0 * harmonic(p, r) }
        })
        .collect()
}

/// `sum_i values_i * counts_i / sum_j counts_j`.
pub fn quantity_weighted(values: &[f64], counts: &[u64]) -> Result<f64> {
    if values.len() != counts.len() {
        return Err(Error::Shape(alloc::format!("{} values but {} counts", values.len(), counts.len())));
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Empty("class counts"));
    }
    Ok(values.iter().zip(counts).map(|(v, &n)| v * n as f64).sum::<f64>() / total as f64)
}

/// Per-class metrics averaged with weights equal to each class's share of
/// true samples.
pub fn weighted_prf(cm: &ConfusionMatrix) -> Result<Prf> {
    cm.ensure_nonempty()?;
    let support: Vec<u64> = (0..cm.classes()).map(|c| cm.support(c)).collect();
    let pc = per_class(cm);
    let field = |f: fn(&Prf) -> f64| quantity_weighted(&pc.iter().map(f).collect::<Vec<_>>(), &support);
    Ok(Prf { precision: field(|m| m.precision)?, recall: field(|m| m.recall)?, f1: field(|m| m.f1)? })
}

/// Metrics of the attack class in a two-class normal/attack matrix.
pub fn attack_prf(binary: &ConfusionMatrix) -> Result<Prf> {
    if binary.classes() != 2 {
        return Err(Error::Shape("attack metrics need a two-class matrix".into()));
    }
    binary.ensure_nonempty()?;
    Ok(per_class(binary)[BinaryClass::Attack.index()])
}

/// `max_count / count_i`; a zero count yields `f64::INFINITY`.
pub fn imbalance_ratios(counts: &[u64]) -> Result<Vec<f64>> {
    let max = counts.iter().copied().max().ok_or(Error::Empty("class counts"))?;
    if max == 0 {
        return Err(Error::Empty("class counts are all zero"));
    }
    Ok(counts
        .iter()
        .map(|&n| if n == 0 { f64::INFINITY } else { max as f64 / n as f64 })
        .collect())
}

/// Scores of one evaluated model (or the mean over several seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub class_names: Vec<String>,
    pub accuracy: f64,
    pub weighted: Prf,
    pub per_class: Vec<Prf>,
    pub support: Vec<u64>,
    /// Attack-class metrics after collapsing to normal / attack.
    pub binary_accuracy: f64,
    pub binary: Prf,
    pub seeds: Vec<u64>,
}

impl MetricsReport {
    /// Five-class report with its binary reduction.
    pub fn from_confusion(cm: &ConfusionMatrix, seed: u64) -> Result<Self> {
        let bin = cm.binarized()?;
        Ok(Self {
            class_names: cm.class_names.clone(),
            accuracy: accuracy(cm)?,
            weighted: weighted_prf(cm)?,
            per_class: per_class(cm),
            support: (0..cm.classes()).map(|c| cm.support(c)).collect(),
            binary_accuracy: accuracy(&bin)?,
            binary: attack_prf(&bin)?,
            seeds: vec![seed],
        })
    }

    /// Element-wise mean of reports over seeds.
    pub fn average(reports: &[MetricsReport]) -> Result<Self> {
        let first = reports.first().ok_or(Error::Empty("no reports to average"))?;
        let n = reports.len() as f64;
        let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        let mean_prf = |f: &dyn Fn(&MetricsReport) -> Prf| Prf {
            precision: mean(&|r| f(r).precision),
            recall: mean(&|r| f(r).recall),
            f1: mean(&|r| f(r).f1),
        };
        if reports.iter().any(|r| r.per_class.len() != first.per_class.len()) {
            return Err(Error::Shape("reports have different class counts".into()));
        }
        Ok(Self {
            class_names: first.class_names.clone(),
            accuracy: mean(&|r| r.accuracy),
            weighted: mean_prf(&|r| r.weighted),
            per_class: (0..first.per_class.len()).map(|c| mean_prf(&|r| r.per_class[c])).collect(),
            support: first.support.clone(),
            binary_accuracy: mean(&|r| r.binary_accuracy),
            binary: mean_prf(&|r| r.binary),
            seeds: reports.iter().flat_map(|r| r.seeds.iter().copied()).collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_examples() {
        let cm = confusion(&[0, 1, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(cm.trace(), 3);
        assert_eq!(accuracy(&cm).unwrap(), 100.0);
        let cm = confusion(&[0], &[1], 2).unwrap();
        assert_eq!(cm.counts, vec![vec![0, 1], vec![0, 0]]);
        assert!(confusion(&[0], &[2], 2).is_err());
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(accuracy(&ConfusionMatrix::with_classes(2)).is_err());
    }

    #[test]
    fn binary_accuracy_direct() {
        // TP=50, TN=30, FP=10, FN=10 (class 1 positive)
        let mut cm = ConfusionMatrix::with_classes(2);
        cm.counts = vec![vec![30, 10], vec![10, 50]];
        assert!((accuracy(&cm).unwrap() - 80.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_f1_two_classes() {
        let f1 = quantity_weighted(&[100.0, 50.0], &[3, 1]).unwrap();
        assert!((f1 - 87.5).abs() < 1e-12);
        assert!(quantity_weighted(&[1.0], &[0]).is_err());
    }

    #[test]
    fn zero_denominator_counts_as_zero() {
        let cm = confusion(&[0, 0, 1], &[0, 0, 0], 2).unwrap();
        let pc = per_class(&cm);
        assert_eq!(pc[1], Prf::default());
        let w = weighted_prf(&cm).unwrap();
        assert!((w.recall - accuracy(&cm).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn imbalance_examples() {
        let r = imbalance_ratios(&[77054, 53385, 14077, 3749, 252]).unwrap();
        assert_eq!(r[0], 1.0);
        assert!((r[4] - 305.77).abs() < 0.005);
        assert_eq!(imbalance_ratios(&[5, 5, 5]).unwrap(), vec![1.0; 3]);
        assert!(imbalance_ratios(&[5, 0]).unwrap()[1].is_infinite());
        assert!(imbalance_ratios(&[]).is_err());
    }

    #[test]
    fn report_average() {
        let cm = confusion(&[0, 1, 2, 3, 4, 0], &[0, 1, 2, 3, 0, 4], 5).unwrap();
        let r = MetricsReport::from_confusion(&cm, 1).unwrap();
        let mut r2 = r.clone();
        r2.seeds = vec![2];
        r2.accuracy += 2.0;
        let avg = MetricsReport::average(&[r.clone(), r2]).unwrap();
        assert!((avg.accuracy - r.accuracy - 1.0).abs() < 1e-12);
        assert_eq!(avg.seeds, vec![1, 2]);
    }
}
