//! Greedy maximum point-set search.
//!
//! Starting from the MAP partition, lower-ranked partitions are merged one
//! at a time: each is aligned to the running consensus and every retained
//! point on which they disagree is dropped. The probabilities of the merged
//! partitions accumulate until they reach `p_min`.

use serde::{Deserialize, Serialize};

use crate::assignment::solve_assignment;
use crate::error::{Error, Result};
use crate::posterior::PosteriorTable;
use crate::problem::canonical_labels;

/// Brute force over all K! permutations up to this K.
const BRUTE_FORCE_MAX_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alignment {
    /// `permutation[c]` is the reference label given to cluster `c`.
    pub permutation: Vec<usize>,
    pub disagreements: usize,
}

impl Alignment {
    pub fn apply(&self, labels: &[usize]) -> Vec<usize> {
        labels.iter().map(|&l| self.permutation[l]).collect()
    }
}

/// Relabeling of `labels` that agrees with `reference` on the most points.
///
/// Exact: brute force over all permutations (lexicographically smallest
/// optimum) for `k <= 8`, otherwise an optimal assignment on the agreement
/// matrix.
pub fn align(labels: &[usize], reference: &[usize], k: usize) -> Result<Alignment> {
    align_masked(labels, reference, k, None)
}

/// As [`align`], counting only points where `mask` is true.
pub fn align_masked(
    labels: &[usize],
    reference: &[usize],
    k: usize,
    mask: Option<&[bool]>,
) -> Result<Alignment> {
    if labels.len() != reference.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            actual: labels.len(),
        });
    }
    if let Some(m) = mask {
        if m.len() != labels.len() {
            return Err(Error::DimensionMismatch {
                expected: labels.len(),
                actual: m.len(),
            });
        }
    }
    if labels.iter().chain(reference).any(|&l| l >= k) {
        return Err(Error::invalid(format!("labels must be below k={k}")));
    }
    let mut agree = vec![0usize; k * k];
    let mut total = 0usize;
    for (i, (&a, &r)) in labels.iter().zip(reference).enumerate() {
        if mask.is_none_or(|m| m[i]) {
            agree[a * k + r] += 1;
            total += 1;
        }
    }
    let permutation = if k <= BRUTE_FORCE_MAX_K {
        best_permutation_brute(&agree, k)
    } else {
        let cost: Vec<f64> = agree.iter().map(|&a| -(a as f64)).collect();
        solve_assignment(k, &cost)
    };
    let matched: usize = permutation
        .iter()
        .enumerate()
        .map(|(c, &r)| agree[c * k + r])
        .sum();
    Ok(Alignment {
        permutation,
        disagreements: total - matched,
    })
}

fn best_permutation_brute(agree: &[usize], k: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..k).collect();
    let score =
        |p: &[usize]| -> usize { p.iter().enumerate().map(|(c, &r)| agree[c * k + r]).sum() };
    let mut best = perm.clone();
    let mut best_score = score(&perm);
    // lexicographic order, so the first optimum found is the smallest
    while next_permutation(&mut perm) {
        let s = score(&perm);
        if s > best_score {
            best_score = s;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn next_permutation(p: &mut [usize]) -> bool {
    if p.len() < 2 {
        return false;
    }
    let mut i = p.len() - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = p.len() - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxsetStep {
    /// Row index of the merged partition in the posterior table.
    pub solution_index: usize,
    pub removed: Vec<usize>,
    pub accumulated_p: f64,
    /// Set when some consensus cluster lost all its retained points.
    pub emptied_cluster: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxsetResult {
    pub retained: Vec<bool>,
    /// Consensus label per point, `None` for removed points.
    pub consensus: Vec<Option<usize>>,
    pub accumulated_p: f64,
    pub trace: Vec<MaxsetStep>,
    /// False when the table ran out before `p_min` was reached.
    pub reached: bool,
}

impl MaxsetResult {
    pub fn n_retained(&self) -> usize {
        self.retained.iter().filter(|&&r| r).count()
    }

    /// Whether the consensus equals `truth` (as a partition) on the
    /// retained points.
    pub fn matches(&self, truth: &[usize]) -> bool {
        let pred: Vec<usize> = self.consensus.iter().flatten().copied().collect();
        let gt: Vec<usize> = truth
            .iter()
            .zip(&self.retained)
            .filter(|(_, &r)| r)
            .map(|(&l, _)| l)
            .collect();
        canonical_labels(&pred) == canonical_labels(&gt)
    }
}

pub fn maxset_search(pt: &PosteriorTable, p_min: f64) -> Result<MaxsetResult> {
    if !(p_min > 0.0 && p_min <= 1.0) {
        return Err(Error::invalid(format!(
            "p_min must lie in (0, 1], got {p_min}"
        )));
    }
    let first = pt.rows.first().ok_or(Error::EmptyPosterior)?;
    let consensus: Vec<usize> = first.partition.as_slice().to_vec();
    let n = consensus.len();
    let k = pt
        .rows
        .iter()
        .map(|r| r.partition.n_groups())
        .max()
        .unwrap_or(1);
    let mut retained = vec![true; n];
    let mut p = first.probability;
    let mut trace = Vec::new();
    let mut next = 1;
    while p < p_min {
        let Some(row) = pt.rows.get(next) else { break };
        if row.probability <= 0.0 {
            break;
        }
        let labels = row.partition.as_slice();
        let al = align_masked(labels, &consensus, k, Some(&retained))?;
        let aligned = al.apply(labels);
        let removed: Vec<usize> = (0..n)
            .filter(|&i| retained[i] && aligned[i] != consensus[i])
            .collect();
        for &i in &removed {
            retained[i] = false;
        }
        p += row.probability;
        let emptied_cluster = removed.iter().any(|&i| {
            let c = consensus[i];
            !(0..n).any(|j| retained[j] && consensus[j] == c)
        });
        trace.push(MaxsetStep {
            solution_index: next,
            removed,
            accumulated_p: p,
            emptied_cluster,
        });
        next += 1;
    }
    Ok(MaxsetResult {
        consensus: consensus
            .iter()
            .zip(&retained)
            .map(|(&l, &r)| r.then_some(l))
            .collect(),
        retained,
        accumulated_p: p,
        trace,
        reached: p >= p_min,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::PosteriorRow;

    fn table(rows: &[(&[usize], f64)]) -> PosteriorTable {
        PosteriorTable {
            rows: rows
                .iter()
                .map(|(l, p)| PosteriorRow {
                    partition: canonical_labels(l),
                    energy: -p.ln(),
                    probability: *p,
                    count: 1,
                })
                .collect(),
            feasible_fraction: 1.0,
            complete: false,
            omitted_rows: 0,
            omitted_mass: 0.0,
        }
    }

    #[test]
    fn align_identity_and_swap() {
        let a = [0, 0, 1, 1, 2];
        let al = align(&a, &a, 3).unwrap();
        assert_eq!(al.permutation, vec![0, 1, 2]);
        assert_eq!(al.disagreements, 0);

        let swapped = [1, 1, 0, 0, 2];
        let al = align(&swapped, &a, 3).unwrap();
        assert_eq!(al.permutation, vec![1, 0, 2]);
        assert_eq!(al.disagreements, 0);
        assert_eq!(al.apply(&swapped), a.to_vec());
    }

    #[test]
    fn align_matches_brute_force_example() {
        let a = [0, 0, 1, 1, 0, 2];
        let reference = [1, 1, 0, 0, 2, 2];
        let al = align(&a, &reference, 3).unwrap();
        let mut best = (usize::MAX, vec![]);
        let mut perm = vec![0, 1, 2];
        loop {
            let d = a
                .iter()
                .zip(&reference)
                .filter(|(&x, &r)| perm[x] != r)
                .count();
            if d < best.0 {
                best = (d, perm.clone());
            }
            if !next_permutation(&mut perm) {
                break;
            }
        }
        assert_eq!(al.disagreements, best.0);
        assert_eq!(al.permutation, best.1);
        assert_eq!(al.disagreements, 1);
    }

    #[test]
    fn align_errors() {
        assert!(align(&[0, 1], &[0, 1, 1], 2).is_err());
        assert!(align(&[0, 2], &[0, 1], 2).is_err());
    }

    #[test]
    fn large_k_uses_assignment() {
        let k = 10;
        let reference: Vec<usize> = (0..30).map(|i| i % k).collect();
        let shifted: Vec<usize> = reference.iter().map(|&l| (l + 3) % k).collect();
        let al = align(&shifted, &reference, k).unwrap();
        assert_eq!(al.disagreements, 0);
        assert_eq!(al.apply(&shifted), reference);
    }

    #[test]
    fn p_min_below_map_returns_map() {
        let pt = table(&[(&[0, 0, 1, 1], 0.6), (&[0, 1, 0, 1], 0.4)]);
        let r = maxset_search(&pt, 0.5).unwrap();
        assert!(r.trace.is_empty());
        assert_eq!(r.n_retained(), 4);
        assert_eq!(r.accumulated_p, 0.6);
        assert!(r.reached);
    }

    #[test]
    fn swapped_pair_is_removed() {
        let pt = table(&[
            (&[0, 0, 1, 1, 2, 2], 0.61),
            (&[0, 0, 1, 2, 1, 2], 0.16),
            (&[0, 1, 0, 1, 2, 2], 0.13),
            (&[0, 1, 2, 0, 1, 2], 0.10),
        ]);
        let r = maxset_search(&pt, 0.7).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].removed, vec![3, 4]);
        assert!((r.accumulated_p - 0.77).abs() < 1e-12);
    }

    #[test]
    fn one_point_difference_removes_that_point() {
        // sizes [3, 2, 1]: moving point 2 between the first two groups
        let pt = table(&[
            (&[0, 0, 0, 1, 1, 2], 0.61),
            (&[0, 0, 1, 1, 1, 2], 0.16),
            (&[0, 1, 0, 0, 1, 2], 0.1),
        ]);
        let r = maxset_search(&pt, 0.7).unwrap();
        assert_eq!(r.trace.len(), 1);
        assert_eq!(r.trace[0].removed, vec![2]);
        assert!((r.accumulated_p - 0.77).abs() < 1e-12);
        assert!(r.reached);
    }

    #[test]
    fn full_consumption_stops_at_table_end() {
        let pt = table(&[
            (&[0, 0, 1, 1], 0.5),
            (&[0, 1, 0, 1], 0.3),
            (&[0, 1, 1, 0], 0.2),
        ]);
        let r = maxset_search(&pt, 1.0).unwrap();
        assert_eq!(r.trace.len(), 2);
        assert!(r
            .trace
            .windows(2)
            .all(|w| w[1].accumulated_p > w[0].accumulated_p));
        assert!(r
            .consensus
            .iter()
            .zip(&r.retained)
            .all(|(c, &k)| c.is_some() == k));
    }

    #[test]
    fn rejects_bad_threshold() {
        let pt = table(&[(&[0, 1], 1.0)]);
        assert!(maxset_search(&pt, 0.0).is_err());
        assert!(maxset_search(&pt, 1.5).is_err());
    }

    #[test]
    fn matches_compares_retained_partition() {
        let r = MaxsetResult {
            retained: vec![true, true, false, true],
            consensus: vec![Some(0), Some(0), None, Some(1)],
            accumulated_p: 0.9,
            trace: vec![],
            reached: true,
        };
        assert!(r.matches(&[2, 2, 0, 1]));
        assert!(!r.matches(&[2, 1, 2, 1]));
    }
}
