//! Clustering quality, calibration and sparsification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::canonical_labels;

/// Contingency counts between two labelings.
struct Contingency {
    n: usize,
    cells: Vec<u64>,
    rows: Vec<u64>,
    cols: Vec<u64>,
}

impl Contingency {
    fn new(pred: &[usize], truth: &[usize]) -> Result<Self> {
        if pred.len() != truth.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                actual: pred.len(),
            });
        }
        // relabel so that table size follows the number of distinct labels
        let p = canonical_labels(pred);
        let t = canonical_labels(truth);
        let kp = p.n_groups();
        let kt = t.n_groups();
        let mut cells = vec![0u64; kp * kt];
        let mut rows = vec![0u64; kp];
        let mut cols = vec![0u64; kt];
        for (&a, &b) in p.as_slice().iter().zip(t.as_slice()) {
            cells[a * kt + b] += 1;
            rows[a] += 1;
            cols[b] += 1;
        }
        Ok(Contingency {
            n: pred.len(),
            cells,
            rows,
            cols,
        })
    }
}

fn pairs(x: u64) -> f64 {
    (x as f64) * (x.saturating_sub(1) as f64) / 2.0
}

fn entropy(counts: &[u64], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// 1 when the two labelings describe the same partition, else 0.
pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::DimensionMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(f64::from(u8::from(
        canonical_labels(pred) == canonical_labels(truth),
    )))
}

/// Completeness `1 − H(pred | truth) / H(pred)`; 1 when `H(pred) = 0`.
pub fn completeness(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let h_pred = entropy(&c.rows, c.n);
    if h_pred == 0.0 {
        return Ok(1.0);
    }
    let kt = c.cols.len();
    let n = c.n as f64;
    // H(pred | truth) = −Σ n_pt/n · ln(n_pt / n_t)
    let mut h_cond = 0.0;
    for (idx, &cell) in c.cells.iter().enumerate() {
        if cell > 0 {
            let col = c.cols[idx % kt] as f64;
            h_cond -= cell as f64 / n * (cell as f64 / col).ln();
        }
    }
    Ok(1.0 - h_cond / h_pred)
}

/// Adjusted Rand index with the permutation-model expectation.
pub fn adjusted_rand(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let sum_cells: f64 = c.cells.iter().map(|&x| pairs(x)).sum();
    let sum_rows: f64 = c.rows.iter().map(|&x| pairs(x)).sum();
    let sum_cols: f64 = c.cols.iter().map(|&x| pairs(x)).sum();
    let total = pairs(c.n as u64);
    if total == 0.0 {
        return Ok(1.0);
    }
    let expected = sum_rows * sum_cols / total;
    let max_index = 0.5 * (sum_rows + sum_cols);
    if max_index == expected {
        // both labelings trivial (one cluster or all singletons)
        return Ok(if canonical_labels(pred) == canonical_labels(truth) {
            1.0
        } else {
            0.0
        });
    }
    Ok((sum_cells - expected) / (max_index - expected))
}

/// Fowlkes–Mallows index `TP / √((TP + FP)(TP + FN))` over point pairs.
pub fn fowlkes_mallows(pred: &[usize], truth: &[usize]) -> Result<f64> {
    let c = Contingency::new(pred, truth)?;
    let tp: f64 = c.cells.iter().map(|&x| pairs(x)).sum();
    let pred_pairs: f64 = c.rows.iter().map(|&x| pairs(x)).sum();
    let truth_pairs: f64 = c.cols.iter().map(|&x| pairs(x)).sum();
    if pred_pairs == 0.0 || truth_pairs == 0.0 {
        return Ok(if pred_pairs == truth_pairs { 1.0 } else { 0.0 });
    }
    Ok(tp / (pred_pairs * truth_pairs).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Completeness,
    AdjustedRand,
    FowlkesMallows,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Accuracy,
        Metric::Completeness,
        Metric::AdjustedRand,
        Metric::FowlkesMallows,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Completeness => "completeness",
            Metric::AdjustedRand => "adjusted_rand",
            Metric::FowlkesMallows => "fowlkes_mallows",
        }
    }

    pub fn eval(self, pred: &[usize], truth: &[usize]) -> Result<f64> {
        match self {
            Metric::Accuracy => accuracy(pred, truth),
            Metric::Completeness => completeness(pred, truth),
            Metric::AdjustedRand => adjusted_rand(pred, truth),
            Metric::FowlkesMallows => fowlkes_mallows(pred, truth),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub n_solutions: u64,
    pub mean_predicted_p: Option<f64>,
    pub empirical_correct_fraction: Option<f64>,
}

impl CalibrationBin {
    /// `|empirical − mean predicted|`, if the bin is populated.
    pub fn gap(&self) -> Option<f64> {
        Some((self.empirical_correct_fraction? - self.mean_predicted_p?).abs())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub bins: Vec<CalibrationBin>,
    pub ece: f64,
    pub total: u64,
}

/// Streaming equal-width binning of `(predicted p, correct)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationAccumulator {
    n_bins: usize,
    counts: Vec<u64>,
    sum_p: Vec<f64>,
    correct: Vec<u64>,
}

impl CalibrationAccumulator {
    pub fn new(n_bins: usize) -> Result<Self> {
        if n_bins == 0 {
            return Err(Error::invalid("at least one calibration bin is required"));
        }
        Ok(CalibrationAccumulator {
            n_bins,
            counts: vec![0; n_bins],
            sum_p: vec![0.0; n_bins],
            correct: vec![0; n_bins],
        })
    }

    pub fn bin_of(&self, p: f64) -> usize {
        ((p.clamp(0.0, 1.0) * self.n_bins as f64) as usize).min(self.n_bins - 1)
    }

    pub fn add(&mut self, p: f64, correct: bool) {
        let b = self.bin_of(p);
        self.counts[b] += 1;
        self.sum_p[b] += p;
        self.correct[b] += u64::from(correct);
    }

    /// Adds `count` solutions whose probabilities sum to `sum_p`, all of
    /// which fall into the bin of `p_max`.
    pub fn add_many(&mut self, p_max: f64, count: u64, sum_p: f64, n_correct: u64) {
        let b = self.bin_of(p_max);
        self.counts[b] += count;
        self.sum_p[b] += sum_p;
        self.correct[b] += n_correct;
    }

    pub fn merge(&mut self, other: &CalibrationAccumulator) {
        for b in 0..self.n_bins.min(other.n_bins) {
            self.counts[b] += other.counts[b];
            self.sum_p[b] += other.sum_p[b];
            self.correct[b] += other.correct[b];
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn report(&self) -> Result<CalibrationReport> {
        let total = self.total();
        if total == 0 {
            return Err(Error::invalid("calibration needs at least one solution"));
        }
        let width = 1.0 / self.n_bins as f64;
        let mut ece = 0.0;
        let bins = (0..self.n_bins)
            .map(|b| {
                let n = self.counts[b];
                let (mean_p, frac) = if n > 0 {
                    let m = self.sum_p[b] / n as f64;
                    let f = self.correct[b] as f64 / n as f64;
                    ece += n as f64 / total as f64 * (m - f).abs();
                    (Some(m), Some(f))
                } else {
                    (None, None)
                };
                CalibrationBin {
                    lower: b as f64 * width,
                    upper: (b + 1) as f64 * width,
                    n_solutions: n,
                    mean_predicted_p: mean_p,
                    empirical_correct_fraction: frac,
                }
            })
            .collect();
        Ok(CalibrationReport { bins, ece, total })
    }
}

pub fn calibration_report(solutions: &[(f64, bool)], n_bins: usize) -> Result<CalibrationReport> {
    let mut acc = CalibrationAccumulator::new(n_bins)?;
    for &(p, c) in solutions {
        acc.add(p, c);
    }
    acc.report()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationCurve {
    pub fractions_removed: Vec<f64>,
    pub metric_predicted: Vec<f64>,
    pub metric_oracle: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsificationInput {
    pub task_id: String,
    pub predicted_p: f64,
    pub metric: f64,
}

/// Default grid `0, 0.05, …, 0.9`.
pub fn default_grid() -> Vec<f64> {
    (0..=18).map(|i| i as f64 * 0.05).collect()
}

/// Mean metric over the tasks left after removing the `⌊f·N⌋` least
/// confident ones (predicted) or the `⌊f·N⌋` worst ones (oracle).
pub fn sparsification(tasks: &[SparsificationInput], grid: &[f64]) -> Result<SparsificationCurve> {
    if tasks.is_empty() {
        return Err(Error::invalid("sparsification needs at least one task"));
    }
    if grid.iter().any(|f| !(0.0..1.0).contains(f)) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("grid must be increasing within [0, 1)"));
    }
    let mut by_pred: Vec<&SparsificationInput> = tasks.iter().collect();
    by_pred.sort_by(|a, b| {
        a.predicted_p
            .total_cmp(&b.predicted_p)
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
    let mut by_metric: Vec<&SparsificationInput> = tasks.iter().collect();
    by_metric.sort_by(|a, b| {
        a.metric
            .total_cmp(&b.metric)
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
    let n = tasks.len();
    let mean_from = |order: &[&SparsificationInput], skip: usize| -> f64 {
        let rest = &order[skip..];
        rest.iter().map(|t| t.metric).sum::<f64>() / rest.len() as f64
    };
    let mut predicted = Vec::with_capacity(grid.len());
    let mut oracle = Vec::with_capacity(grid.len());
    for &f in grid {
        let removed = ((f * n as f64).floor() as usize).min(n - 1);
        predicted.push(mean_from(&by_pred, removed));
        oracle.push(mean_from(&by_metric, removed));
    }
    Ok(SparsificationCurve {
        fractions_removed: grid.to_vec(),
        metric_predicted: predicted,
        metric_oracle: oracle,
    })
}

/// Mean and standard error of the mean.
pub fn mean_sem(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
