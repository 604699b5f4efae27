//! Boltzmann reparametrization of measured solutions.
//!
//! Only feasible measurements are kept. Each distinct partition is scored
//! with its exact Gaussian energy and the posterior is the softmax of the
//! negative energies over the observed partitions. Occurrence counts are
//! carried along for diagnostics but never enter the probabilities, so the
//! result does not depend on the sampler's effective temperature.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{
    canonical_labels, canonicalize, for_each_partition, is_feasible, Assignment, ClusteringTask,
    PartitionKey,
};
use crate::sampler::{SampleSet, DEFAULT_PARTITION_CAP};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub partition: PartitionKey,
    pub energy: f64,
    pub probability: f64,
    pub count: u64,
}

/// Distinct feasible partitions sorted by descending probability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTable {
    pub rows: Vec<PosteriorRow>,
    pub feasible_fraction: f64,
    /// True when the rows cover every feasible partition.
    #[serde(default)]
    pub complete: bool,
    /// Rows dropped by [`PosteriorTable::truncated`].
    #[serde(default)]
    pub omitted_rows: u64,
    #[serde(default)]
    pub omitted_mass: f64,
}

impl PosteriorTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn probability_of(&self, key: &PartitionKey) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| &r.partition == key)
            .map(|r| r.probability)
    }

    /// Keeps rows with probability at least `min_probability` (and at least
    /// the first row); the remainder is summarized in `omitted_*`.
    pub fn truncated(&self, min_probability: f64) -> PosteriorTable {
        let keep = self
            .rows
            .iter()
            .position(|r| r.probability < min_probability)
            .unwrap_or(self.rows.len())
            .max(1.min(self.rows.len()));
        let dropped = &self.rows[keep..];
        PosteriorTable {
            rows: self.rows[..keep].to_vec(),
            feasible_fraction: self.feasible_fraction,
            complete: self.complete,
            omitted_rows: self.omitted_rows + dropped.len() as u64,
            omitted_mass: self.omitted_mass + dropped.iter().map(|r| r.probability).sum::<f64>(),
        }
    }
}

/// `Σ_k ½ Σ_{i∈k} ‖x_i − μ̂_k‖²` for a feasible assignment.
pub fn exact_energy(t: &ClusteringTask, a: &Assignment) -> Result<f64> {
    if !is_feasible(a, t)? {
        return Err(Error::invalid(
            "exact energy requires a feasible assignment",
        ));
    }
    Ok(labels_energy(t, a.labels(), t.k()))
}

/// Centroid-form energy of any labeling with labels below `k`.
pub(crate) fn labels_energy(t: &ClusteringTask, labels: &[usize], k: usize) -> f64 {
    let dim = t.dim();
    let mut means = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &l) in t.points().iter().zip(labels) {
        counts[l] += 1;
        for (d, v) in p.iter().enumerate() {
            means[l * dim + d] += v;
        }
    }
    for c in 0..k {
        if counts[c] > 0 {
            for m in &mut means[c * dim..(c + 1) * dim] {
                *m /= counts[c] as f64;
            }
        }
    }
    let mut e = 0.0;
    for (p, &l) in t.points().iter().zip(labels) {
        let mu = &means[l * dim..(l + 1) * dim];
        e += p
            .iter()
            .zip(mu)
            .map(|(x, m)| (x - m) * (x - m))
            .sum::<f64>();
    }
    0.5 * e
}

/// Share of reads whose state is a feasible assignment.
pub fn feasible_fraction(s: &SampleSet, t: &ClusteringTask) -> f64 {
    let total = s.total_count();
    if total == 0 {
        return 0.0;
    }
    let feasible: u64 = s
        .entries
        .iter()
        .filter(|e| feasible_assignment(e.z.as_bytes(), t).is_some())
        .map(|e| e.count)
        .sum();
    feasible as f64 / total as f64
}

fn feasible_assignment(bits: &[u8], t: &ClusteringTask) -> Option<Vec<usize>> {
    let n = t.n_points();
    if bits.len() != t.n_vars() {
        return None;
    }
    let mut labels = vec![usize::MAX; n];
    let mut counts = vec![0usize; t.k()];
    for c in 0..t.k() {
        for i in 0..n {
            if bits[c * n + i] == 1 {
                if labels[i] != usize::MAX {
                    return None;
                }
                labels[i] = c;
                counts[c] += 1;
            }
        }
    }
    if labels.contains(&usize::MAX) || counts != t.sizes() {
        return None;
    }
    Some(labels)
}

/// Posterior over the distinct feasible partitions found in `s`.
pub fn reparametrize(s: &SampleSet, t: &ClusteringTask) -> Result<PosteriorTable> {
    let total = s.total_count();
    let mut merged: HashMap<PartitionKey, (u64, Vec<usize>)> = HashMap::new();
    let mut feasible = 0u64;
    for e in &s.entries {
        if let Some(labels) = feasible_assignment(e.z.as_bytes(), t) {
            feasible += e.count;
            merged
                .entry(canonical_labels(&labels))
                .or_insert_with(|| (0, labels))
                .0 += e.count;
        }
    }
    if merged.is_empty() {
        return Err(Error::EmptyPosterior);
    }
    let scored = merged
        .into_iter()
        .map(|(key, (count, labels))| (key, labels_energy(t, &labels, t.k()), count))
        .collect();
    let fraction = if total == 0 {
        0.0
    } else {
        feasible as f64 / total as f64
    };
    Ok(normalize(scored, fraction, false))
}

/// Gold posterior from every feasible partition.
///
/// Equivalent to `reparametrize(enumerate_exhaustive(..))`, but scores the
/// partitions as they are enumerated instead of going through bit vectors.
pub fn exact_posterior(t: &ClusteringTask) -> Result<PosteriorTable> {
    exact_posterior_capped(t, DEFAULT_PARTITION_CAP)
}

pub fn exact_posterior_capped(t: &ClusteringTask, cap: u128) -> Result<PosteriorTable> {
    let count = t.partition_count();
    if count > cap {
        return Err(Error::ResourceLimit { count, cap });
    }
    let mut scored = Vec::with_capacity(count as usize);
    for_each_partition(t, |labels| {
        scored.push((canonical_labels(labels), labels_energy(t, labels, t.k()), 1));
    });
    Ok(normalize(scored, 1.0, true))
}

fn normalize(
    mut scored: Vec<(PartitionKey, f64, u64)>,
    feasible_fraction: f64,
    complete: bool,
) -> PosteriorTable {
    scored.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
    let e_min = scored[0].1;
    let weights: Vec<f64> = scored
        .iter()
        .map(|(_, e, _)| (-(e - e_min)).exp())
        .collect();
    let z: f64 = weights.iter().sum();
    let rows = scored
        .into_iter()
        .zip(weights)
        .map(|((partition, energy, count), w)| PosteriorRow {
            partition,
            energy,
            probability: w / z,
            count,
        })
        .collect();
    PosteriorTable {
        rows,
        feasible_fraction,
        complete,
        omitted_rows: 0,
        omitted_mass: 0.0,
    }
}

/// Maximum-a-posteriori partition; equal probabilities go to the smaller key.
pub fn map_solution(pt: &PosteriorTable) -> Result<(PartitionKey, f64)> {
    let first = pt.rows.first().ok_or(Error::EmptyPosterior)?;
    let best = pt
        .rows
        .iter()
        .take_while(|r| r.probability == first.probability)
        .min_by(|a, b| a.partition.cmp(&b.partition))
        .unwrap_or(first);
    Ok((best.partition.clone(), best.probability))
}

/// Total-variation distance between two posteriors over partitions.
pub fn total_variation(a: &PosteriorTable, b: &PosteriorTable) -> f64 {
    let mut probs: HashMap<&PartitionKey, (f64, f64)> = HashMap::new();
    for r in &a.rows {
        probs.entry(&r.partition).or_default().0 += r.probability;
    }
    for r in &b.rows {
        probs.entry(&r.partition).or_default().1 += r.probability;
    }
    0.5 * probs.values().map(|(p, q)| (p - q).abs()).sum::<f64>()
}

/// Whether `labels` describes the same partition as `key`.
pub fn same_partition(key: &PartitionKey, a: &Assignment) -> bool {
    &canonicalize(a) == key
}
