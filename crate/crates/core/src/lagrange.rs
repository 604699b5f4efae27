//! Penalty weight selection.
//!
//! A first-order bound comes from a feasible seed: flipping any single bit of
//! a feasible vector leaves one point-row and one cluster-row of `Gz − d`
//! off by one, so the penalty grows by `2λ`. Taking `λ` above the largest
//! data-cost decrease among those flips makes the seed a strict local
//! minimum. The bound is then refined with annealing feedback on the share
//! of feasible reads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kmeans::{balanced_kmeans, DEFAULT_MAX_ITER};
use crate::posterior::feasible_fraction;
use crate::problem::{is_feasible, Assignment, ClusteringTask};
use crate::qubo::{build_data_costs, build_qubo};
use crate::sampler::{sample_sa, AnnealSchedule};

/// Returned when no flip can lower the data cost.
pub const LAMBDA_FLOOR: f64 = 1e-6;
pub const DEFAULT_MAX_ROUNDS: usize = 8;
pub const LOW_FEASIBLE: f64 = 0.2;
pub const HIGH_FEASIBLE: f64 = 0.8;

/// Largest data-cost decrease over all single-bit flips of the seed,
/// floored at [`LAMBDA_FLOOR`].
///
/// The penalty increase of a flip is at least `λ` (exactly `2λ` from a
/// feasible point), so any `λ` above this value makes every one-flip
/// neighbour of the seed strictly worse.
pub fn lambda_lower_bound(t: &ClusteringTask, seed: &Assignment) -> Result<f64> {
    if !is_feasible(seed, t)? {
        return Err(Error::invalid(
            "lambda bound needs a feasible seed assignment",
        ));
    }
    let data = build_data_costs(t);
    let z = seed.vectorize();
    let bits = z.as_bytes();
    let mut worst: f64 = 0.0;
    for u in 0..data.n() {
        let row = data.q_row(u);
        let field: f64 = row
            .iter()
            .zip(bits)
            .enumerate()
            .filter(|&(v, (_, &b))| v != u && b == 1)
            .map(|(_, (q, _))| q)
            .sum();
        let delta = if bits[u] == 1 {
            -(row[u] + 2.0 * field)
        } else {
            row[u] + 2.0 * field
        };
        worst = worst.max(-delta);
    }
    Ok(worst.max(LAMBDA_FLOOR))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneRound {
    pub lambda: f64,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneResult {
    pub lambda: f64,
    pub lower_bound: f64,
    pub rounds: Vec<TuneRound>,
}

/// Doubles `λ` while fewer than 20% of reads are feasible and halves it
/// while more than 80% are and it is still above four times the bound.
pub fn tune_lambda(
    t: &ClusteringTask,
    sched: &AnnealSchedule,
    max_rounds: usize,
    seed: u64,
) -> Result<TuneResult> {
    let kmeans = balanced_kmeans(t, DEFAULT_MAX_ITER, seed)?;
    let bound = lambda_lower_bound(t, &kmeans.assignment)?;
    let mut lambda = bound;
    let mut rounds = Vec::new();
    for round in 0..max_rounds {
        let p = build_qubo(t, lambda)?;
        let set = sample_sa(&p, sched, crate::data::derive_seed(seed, round as u64))?;
        let fraction = feasible_fraction(&set, t);
        rounds.push(TuneRound {
            lambda,
            feasible_fraction: fraction,
        });
        if fraction < LOW_FEASIBLE {
            lambda *= 2.0;
        } else if fraction > HIGH_FEASIBLE && lambda > 4.0 * bound {
            lambda /= 2.0;
        } else {
            break;
        }
    }
    Ok(TuneResult {
        lambda,
        lower_bound: bound,
        rounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_task;
    use crate::qubo::pairwise_sq_dists;

    #[test]
    fn coincident_points_hit_the_floor() {
        let t = ClusteringTask::new("t", 0, vec![2, 2], vec![vec![1.0, 1.0]; 4]).unwrap();
        let a = Assignment::new(vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(lambda_lower_bound(&t, &a).unwrap(), LAMBDA_FLOOR);
    }

    #[test]
    fn bound_is_below_max_pairwise_distance() {
        let t = ClusteringTask::new(
            "t",
            0,
            vec![2, 2],
            vec![
                vec![0.0, 0.0],
                vec![1.0, 3.0],
                vec![4.0, 0.5],
                vec![2.0, 2.0],
            ],
        )
        .unwrap();
        let d_max = pairwise_sq_dists(t.points())
            .into_iter()
            .fold(0.0, f64::max);
        let a = Assignment::new(vec![0, 1, 0, 1], 2).unwrap();
        let bound = lambda_lower_bound(&t, &a).unwrap();
        assert!(bound > 0.0 && bound <= d_max);
    }

    #[test]
    fn every_single_flip_is_uphill() {
        for seed in 0..10 {
            let t = generate_task(3, 3, 2, 1.0, 4.0, seed).unwrap();
            let a = balanced_kmeans(&t, DEFAULT_MAX_ITER, seed)
                .unwrap()
                .assignment;
            let bound = lambda_lower_bound(&t, &a).unwrap();
            let p = build_qubo(&t, bound * (1.0 + 1e-9)).unwrap();
            let z = a.vectorize();
            let e0 = p.energy(&z).unwrap();
            let mut bits = z.as_bytes().to_vec();
            for u in 0..bits.len() {
                bits[u] ^= 1;
                let e = p.energy_bits(&bits);
                assert!(e > e0, "flip {u} lowers the energy");
                bits[u] ^= 1;
            }
        }
    }

    #[test]
    fn rejects_infeasible_seed() {
        let t = ClusteringTask::new("t", 0, vec![1, 1], vec![vec![0.0], vec![1.0]]).unwrap();
        let a = Assignment::new(vec![0, 0], 2).unwrap();
        assert!(lambda_lower_bound(&t, &a).is_err());
    }

    #[test]
    fn tuned_lambda_never_drops_below_bound() {
        let sched = AnnealSchedule::default().with_reads(500);
        for seed in 0..5 {
            let t = generate_task(3, 5, 2, 2.0, 6.0, seed).unwrap();
            let r = tune_lambda(&t, &sched, DEFAULT_MAX_ROUNDS, seed).unwrap();
            assert!(r.lambda >= r.lower_bound);
            assert!(!r.rounds.is_empty() && r.rounds.len() <= DEFAULT_MAX_ROUNDS);
        }
    }
}
