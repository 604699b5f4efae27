//! Balanced k-means baseline.
//!
//! Lloyd-style iterations where the assignment step is solved exactly as a
//! capacitated transport problem: cluster `k` is expanded into `s_k` slots
//! and points are matched to slots by minimum squared distance.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::solve_assignment;
use crate::error::Result;
use crate::posterior::labels_energy;
use crate::problem::{Assignment, ClusteringTask};

pub const DEFAULT_MAX_ITER: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    pub assignment: Assignment,
    pub energy: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Exact energy after every assignment step.
    pub energy_trace: Vec<f64>,
}

pub fn balanced_kmeans(t: &ClusteringTask, max_iter: usize, seed: u64) -> Result<KMeansResult> {
    let k = t.k();
    let n = t.n_points();
    let dim = t.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Vec<f64>> = sample(&mut rng, n, k)
        .into_iter()
        .map(|i| t.points()[i].clone())
        .collect();

    // slot -> cluster, clusters in index order
    let slots: Vec<usize> = t
        .sizes()
        .iter()
        .enumerate()
        .flat_map(|(c, &s)| std::iter::repeat_n(c, s))
        .collect();

    let mut labels: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let mut cost = vec![0.0; n * n];
        for (i, p) in t.points().iter().enumerate() {
            for (slot, &c) in slots.iter().enumerate() {
                cost[i * n + slot] = sq_dist(p, &centroids[c]);
            }
        }
        let matched = solve_assignment(n, &cost);
        let next: Vec<usize> = matched.iter().map(|&slot| slots[slot]).collect();
        trace.push(labels_energy(t, &next, k));
        if next == labels {
            converged = true;
            break;
        }
        labels = next;
        for (c, centroid) in centroids.iter_mut().enumerate() {
            let mut mean = vec![0.0; dim];
            let mut count = 0usize;
            for (p, _) in t.points().iter().zip(&labels).filter(|(_, &l)| l == c) {
                count += 1;
                for (m, v) in mean.iter_mut().zip(p) {
                    *m += v;
                }
            }
            for m in &mut mean {
                *m /= count as f64;
            }
            *centroid = mean;
        }
    }
    if converged {
        // the final step only confirmed the fixpoint
        trace.pop();
    }
    let energy = labels_energy(t, &labels, k);
    Ok(KMeansResult {
        assignment: Assignment::new(labels, k)?,
        energy,
        iterations,
        converged,
        energy_trace: trace,
    })
}

/// Runs `restarts` seeds derived from `seed` and keeps the lowest energy.
pub fn balanced_kmeans_best_of(
    t: &ClusteringTask,
    max_iter: usize,
    seed: u64,
    restarts: usize,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let res = balanced_kmeans(t, max_iter, crate::data::derive_seed(seed, r as u64))?;
        if best.as_ref().is_none_or(|b| res.energy < b.energy) {
            best = Some(res);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
