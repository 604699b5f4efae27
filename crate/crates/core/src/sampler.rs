//! Sample sets and the backends that produce them.
//!
//! [`sample_sa`] is a single-bit-flip Metropolis annealer with a geometric
//! inverse-temperature ramp. Every read starts from its own uniformly random
//! state and draws from its own ChaCha stream, keyed by `(seed, read index)`,
//! so results do not depend on how reads are scheduled across threads.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{for_each_partition, Assignment, BinaryVector, ClusteringTask};
use crate::qubo::{QuboExport, QuboProblem};

pub const DEFAULT_SWEEPS: usize = 30;
pub const DEFAULT_READS: usize = 5000;
pub const DEFAULT_PARTITION_CAP: u128 = 10_000_000;

/// Acceptance of the largest uphill move at the start of the ramp.
const HOT_ACCEPTANCE: f64 = 0.5;
/// Acceptance of the smallest uphill move at the end of the ramp.
const COLD_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleEntry {
    pub z: BinaryVector,
    pub energy: f64,
    pub count: u64,
}

/// Deduplicated multiset of measured states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    pub backend: String,
    pub reads: u64,
    pub sweeps: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_max: Option<f64>,
    pub entries: Vec<SampleEntry>,
    /// Not serialized so result files stay byte-identical across runs.
    #[serde(skip)]
    pub wall_time_secs: f64,
}

impl SampleSet {
    pub fn total_count(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn min_energy(&self) -> Option<f64> {
        self.entries.iter().map(|e| e.energy).min_by(f64::total_cmp)
    }

    /// Checks the sample-set invariants against `p`: matching dimensions,
    /// unique bit vectors, positive counts and energies that recompute.
    pub fn verify(&self, p: &QuboProblem) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for e in &self.entries {
            if e.z.len() != p.n() {
                return Err(Error::MalformedResponse(format!(
                    "sample has {} variables, problem has {}",
                    e.z.len(),
                    p.n()
                )));
            }
            if e.count == 0 {
                return Err(Error::MalformedResponse("zero occurrence count".into()));
            }
            if !seen.insert(&e.z) {
                return Err(Error::MalformedResponse("duplicate sample".into()));
            }
            let actual = p.energy(&e.z)?;
            if (actual - e.energy).abs() > 1e-9 * actual.abs().max(1.0) {
                return Err(Error::MalformedResponse(format!(
                    "reported energy {} differs from recomputed {actual}",
                    e.energy
                )));
            }
        }
        if self.total_count() != self.reads {
            return Err(Error::MalformedResponse(format!(
                "counts sum to {} but {} reads were reported",
                self.total_count(),
                self.reads
            )));
        }
        Ok(())
    }
}

/// Annealing parameters. Unset betas are derived from the problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub reads: usize,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            sweeps: DEFAULT_SWEEPS,
            reads: DEFAULT_READS,
            beta_min: None,
            beta_max: None,
        }
    }
}

impl AnnealSchedule {
    pub fn with_reads(mut self, reads: usize) -> Self {
        self.reads = reads;
        self
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.sweeps = sweeps;
        self
    }

    pub fn with_betas(mut self, beta_min: f64, beta_max: f64) -> Self {
        self.beta_min = Some(beta_min);
        self.beta_max = Some(beta_max);
        self
    }

    fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::invalid("sweeps must be >= 1"));
        }
        if self.reads == 0 {
            return Err(Error::invalid("reads must be >= 1"));
        }
        for b in [self.beta_min, self.beta_max].into_iter().flatten() {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::invalid(format!(
                    "inverse temperature must be positive, got {b}"
                )));
            }
        }
        Ok(())
    }

    /// Concrete `(beta_min, beta_max)` for `p`.
    pub fn resolve_betas(&self, p: &QuboProblem) -> Result<(f64, f64)> {
        self.validate()?;
        let (auto_min, auto_max) = match (self.beta_min, self.beta_max) {
            (Some(lo), Some(hi)) => (lo, hi),
            _ => default_betas(p),
        };
        let lo = self.beta_min.unwrap_or(auto_min);
        let hi = self.beta_max.unwrap_or(auto_max);
        if lo >= hi {
            return Err(Error::invalid(format!(
                "beta_min ({lo}) must be below beta_max ({hi})"
            )));
        }
        Ok((lo, hi))
    }
}

/// Betas from the Ising form of `p`. The hot end accepts the largest
/// possible single-flip increase with probability 1/2, the cold end accepts
/// the smallest nonzero coefficient's flip with probability 1/100.
fn default_betas(p: &QuboProblem) -> (f64, f64) {
    let ising = p.to_ising();
    let n = p.n();
    let mut max_delta: f64 = 0.0;
    let mut min_delta = f64::INFINITY;
    for i in 0..n {
        let h = ising.fields()[i].abs();
        let mut total = h;
        if h > 0.0 {
            min_delta = min_delta.min(h);
        }
        for j in (0..n).filter(|&j| j != i) {
            let c = ising.coupling(i, j).abs();
            total += c;
            if c > 0.0 {
                min_delta = min_delta.min(c);
            }
        }
        max_delta = max_delta.max(total);
    }
    if max_delta == 0.0 {
        return (0.1, 1.0);
    }
    // a spin flip changes the energy by twice its coefficient sum
    let hot = HOT_ACCEPTANCE.recip().ln() / (2.0 * max_delta);
    let cold = COLD_ACCEPTANCE.recip().ln() / (2.0 * min_delta);
    (hot, cold.max(hot * 1.0001))
}

/// `f_i = Σ_{j≠i} q_ij z_j`.
fn local_fields(p: &QuboProblem, z: &[u8]) -> Vec<f64> {
    (0..p.n())
        .map(|i| {
            p.q_row(i)
                .iter()
                .zip(z)
                .enumerate()
                .filter(|&(j, (_, &zj))| j != i && zj == 1)
                .map(|(_, (q, _))| q)
                .sum()
        })
        .collect()
}

#[inline]
fn flip_delta(p: &QuboProblem, z: &[u8], fields: &[f64], i: usize) -> f64 {
    let sign = if z[i] == 1 { -1.0 } else { 1.0 };
    sign * (p.q(i, i) + p.linear()[i] + 2.0 * fields[i])
}

fn anneal_read(p: &QuboProblem, betas: &[f64], seed: u64, read: u64) -> Vec<u8> {
    let n = p.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(read);
    let mut z: Vec<u8> = (0..n).map(|_| rng.random_range(0..=1)).collect();
    let mut fields = local_fields(p, &z);
    for &beta in betas {
        for i in 0..n {
            let delta = flip_delta(p, &z, &fields, i);
            let accept = delta <= 0.0 || rng.random::<f64>() < (-beta * delta).exp();
            if accept {
                let step = if z[i] == 1 { -1.0 } else { 1.0 };
                z[i] ^= 1;
                for (f, q) in fields.iter_mut().zip(p.q_row(i)) {
                    *f += step * q;
                }
                // f_i excludes the diagonal
                fields[i] -= step * p.q(i, i);
            }
        }
    }
    z
}

/// Geometric inverse-temperature ramp with `sweeps` points.
pub fn beta_ramp(beta_min: f64, beta_max: f64, sweeps: usize) -> Vec<f64> {
    if sweeps == 1 {
        return vec![beta_max];
    }
    let ratio = beta_max / beta_min;
    (0..sweeps)
        .map(|s| beta_min * ratio.powf(s as f64 / (sweeps - 1) as f64))
        .collect()
}

/// Simulated annealing over `sched.reads` independent restarts.
pub fn sample_sa(p: &QuboProblem, sched: &AnnealSchedule, seed: u64) -> Result<SampleSet> {
    if p.n() == 0 {
        return Err(Error::invalid("QUBO has no variables"));
    }
    let start = Instant::now();
    let (beta_min, beta_max) = sched.resolve_betas(p)?;
    let betas = beta_ramp(beta_min, beta_max, sched.sweeps);
    let states: Vec<Vec<u8>> = (0..sched.reads as u64)
        .into_par_iter()
        .map(|read| anneal_read(p, &betas, seed, read))
        .collect();
    let mut merged: BTreeMap<Vec<u8>, u64> = BTreeMap::new();
    for z in states {
        *merged.entry(z).or_insert(0) += 1;
    }
    let entries = merged
        .into_iter()
        .map(|(bits, count)| SampleEntry {
            energy: p.energy_bits(&bits),
            z: BinaryVector::from_bits(bits).expect("annealer produces 0/1 bits"),
            count,
        })
        .collect();
    Ok(SampleSet {
        backend: "sa".into(),
        reads: sched.reads as u64,
        sweeps: sched.sweeps as u64,
        seed,
        beta_min: Some(beta_min),
        beta_max: Some(beta_max),
        entries,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

/// One entry per feasible partition, each with count 1.
pub fn enumerate_exhaustive(t: &ClusteringTask, p: &QuboProblem) -> Result<SampleSet> {
    enumerate_exhaustive_capped(t, p, DEFAULT_PARTITION_CAP)
}

pub fn enumerate_exhaustive_capped(
    t: &ClusteringTask,
    p: &QuboProblem,
    cap: u128,
) -> Result<SampleSet> {
    if p.n() != t.n_vars() {
        return Err(Error::DimensionMismatch {
            expected: t.n_vars(),
            actual: p.n(),
        });
    }
    let count = t.partition_count();
    if count > cap {
        return Err(Error::ResourceLimit { count, cap });
    }
    let start = Instant::now();
    let mut entries = Vec::with_capacity(count as usize);
    for_each_partition(t, |labels| {
        let z = Assignment::new(labels.to_vec(), t.k())
            .expect("enumerated labels are in range")
            .vectorize();
        entries.push(SampleEntry {
            energy: p.energy_bits(z.as_bytes()),
            z,
            count: 1,
        });
    });
    entries.sort_by(|a, b| a.z.cmp(&b.z));
    Ok(SampleSet {
        backend: "exhaustive".into(),
        reads: entries.len() as u64,
        sweeps: 0,
        seed: 0,
        beta_min: None,
        beta_max: None,
        entries,
        wall_time_secs: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubmitParams {
    pub schedule: AnnealSchedule,
    pub seed: u64,
}

/// A source of sample sets for a QUBO.
///
/// Implementations must return sets that pass [`SampleSet::verify`];
/// [`submit_verified`] enforces this on receipt.
pub trait SamplerBackend: Send + Sync {
    fn name(&self) -> &str;

    fn submit(&self, p: &QuboProblem, params: &SubmitParams) -> Result<SampleSet>;
}

/// Submits and re-verifies the returned energies locally.
pub fn submit_verified(
    backend: &dyn SamplerBackend,
    p: &QuboProblem,
    params: &SubmitParams,
) -> Result<SampleSet> {
    let set = backend.submit(p, params)?;
    set.verify(p)?;
    Ok(set)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SaBackend;

impl SamplerBackend for SaBackend {
    fn name(&self) -> &str {
        "sa"
    }

    fn submit(&self, p: &QuboProblem, params: &SubmitParams) -> Result<SampleSet> {
        sample_sa(p, &params.schedule, params.seed)
    }
}

#[derive(Debug, Clone)]
pub struct ExhaustiveBackend {
    task: ClusteringTask,
    cap: u128,
}

impl ExhaustiveBackend {
    pub fn new(task: ClusteringTask) -> Self {
        ExhaustiveBackend {
            task,
            cap: DEFAULT_PARTITION_CAP,
        }
    }

    pub fn with_cap(mut self, cap: u128) -> Self {
        self.cap = cap;
        self
    }
}

impl SamplerBackend for ExhaustiveBackend {
    fn name(&self) -> &str {
        "exhaustive"
    }

    fn submit(&self, p: &QuboProblem, _params: &SubmitParams) -> Result<SampleSet> {
        enumerate_exhaustive_capped(&self.task, p, self.cap)
    }
}

/// Request body sent to a remote sampler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRequest {
    pub qubo: QuboExport,
    pub params: SubmitParams,
}

/// Moves JSON text to a remote sampler and back.
pub trait Transport: Send + Sync {
    fn round_trip(&self, request: &str) -> Result<String>;
}

/// Backend that speaks the JSON wire format over a [`Transport`].
pub struct RemoteBackend<T> {
    name: String,
    transport: T,
}

impl<T: Transport> RemoteBackend<T> {
    pub fn new(name: impl Into<String>, transport: T) -> Self {
        RemoteBackend {
            name: name.into(),
            transport,
        }
    }
}

impl<T: Transport> SamplerBackend for RemoteBackend<T> {
    fn name(&self) -> &str {
        &self.name
    }

    fn submit(&self, p: &QuboProblem, params: &SubmitParams) -> Result<SampleSet> {
        let request = serde_json::to_string(&SampleRequest {
            qubo: p.to_export(),
            params: *params,
        })?;
        let response = self.transport.round_trip(&request)?;
        serde_json::from_str(&response).map_err(|e| Error::MalformedResponse(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qubo::build_qubo;

    fn one_var() -> QuboProblem {
        QuboProblem::new(1, vec![0.0], vec![-1.0], 0.0, 0.0).unwrap()
    }

    #[test]
    fn two_state_problem_prefers_low_energy() {
        // Boltzmann at beta = 3: P(z = 1) = 1 / (1 + e^-3) ≈ 0.953
        let sched = AnnealSchedule::default().with_betas(0.1, 3.0);
        let set = sample_sa(&one_var(), &sched, 42).unwrap();
        assert_eq!(set.total_count(), 5000);
        let ones = set
            .entries
            .iter()
            .find(|e| e.z.get(0))
            .map_or(0, |e| e.count);
        assert!(
            ones as f64 / 5000.0 > 0.85,
            "fraction {}",
            ones as f64 / 5000.0
        );
    }

    #[test]
    fn sa_is_deterministic() {
        let t = ClusteringTask::new(
            "t",
            0,
            vec![2, 2],
            vec![vec![0.0], vec![0.1], vec![3.0], vec![3.2]],
        )
        .unwrap();
        let p = build_qubo(&t, 2.0).unwrap();
        let sched = AnnealSchedule::default().with_reads(300);
        let a = sample_sa(&p, &sched, 9).unwrap();
        let b = sample_sa(&p, &sched, 9).unwrap();
        assert_eq!(a.entries, b.entries);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let c = sample_sa(&p, &sched, 10).unwrap();
        assert_ne!(a.entries, c.entries);
        a.verify(&p).unwrap();
    }

    #[test]
    fn energies_and_counts_verify() {
        let t =
            ClusteringTask::new("t", 0, vec![1, 2], vec![vec![0.0], vec![1.0], vec![1.5]]).unwrap();
        let p = build_qubo(&t, 1.0).unwrap();
        let set = sample_sa(&p, &AnnealSchedule::default().with_reads(100), 1).unwrap();
        set.verify(&p).unwrap();
        let mut bad = set.clone();
        bad.entries[0].energy += 1.0;
        assert!(bad.verify(&p).is_err());
        let mut bad = set;
        bad.reads += 1;
        assert!(bad.verify(&p).is_err());
    }

    #[test]
    fn schedule_validation() {
        let p = one_var();
        assert!(sample_sa(&p, &AnnealSchedule::default().with_sweeps(0), 0).is_err());
        assert!(sample_sa(&p, &AnnealSchedule::default().with_betas(2.0, 1.0), 0).is_err());
        assert!(sample_sa(&p, &AnnealSchedule::default().with_reads(0), 0).is_err());
    }

    #[test]
    fn ramp_is_geometric() {
        let r = beta_ramp(0.5, 8.0, 5);
        assert_eq!(r.len(), 5);
        assert!((r[0] - 0.5).abs() < 1e-12 && (r[4] - 8.0).abs() < 1e-12);
        assert!((r[2] - 2.0).abs() < 1e-12);
        assert_eq!(beta_ramp(0.5, 8.0, 1), vec![8.0]);
    }

    #[test]
    fn default_betas_are_ordered() {
        let t = ClusteringTask::new(
            "t",
            0,
            vec![2, 2],
            vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
        )
        .unwrap();
        let p = build_qubo(&t, 3.0).unwrap();
        let (lo, hi) = AnnealSchedule::default().resolve_betas(&p).unwrap();
        assert!(lo > 0.0 && lo < hi);
    }

    #[test]
    fn exhaustive_small_counts() {
        let t = ClusteringTask::new("t", 0, vec![1, 1], vec![vec![0.0], vec![1.0]]).unwrap();
        let p = build_qubo(&t, 1.0).unwrap();
        assert_eq!(enumerate_exhaustive(&t, &p).unwrap().entries.len(), 1);
        let t =
            ClusteringTask::new("t", 0, vec![2, 1], vec![vec![0.0], vec![1.0], vec![5.0]]).unwrap();
        let p = build_qubo(&t, 1.0).unwrap();
        let set = enumerate_exhaustive(&t, &p).unwrap();
        assert_eq!(set.entries.len(), 3);
        assert!(set.entries.iter().all(|e| e.count == 1));
        set.verify(&p).unwrap();
    }

    #[test]
    fn exhaustive_cap_is_enforced() {
        let points = (0..15).map(|i| vec![i as f64]).collect();
        let t = ClusteringTask::new("t", 0, vec![5, 5, 5], points).unwrap();
        assert_eq!(t.partition_count(), 126_126);
        let p = build_qubo(&t, 1.0).unwrap();
        match enumerate_exhaustive_capped(&t, &p, 1000) {
            Err(Error::ResourceLimit { count, cap }) => {
                assert_eq!(count, 126_126);
                assert_eq!(cap, 1000);
            }
            other => panic!("expected resource limit, got {other:?}"),
        }
    }

    #[test]
    fn wire_format_uses_bit_strings() {
        let set = SampleSet {
            backend: "mock".into(),
            reads: 3,
            sweeps: 30,
            seed: 5,
            beta_min: None,
            beta_max: None,
            entries: vec![SampleEntry {
                z: BinaryVector::from_bits(vec![0, 1, 1]).unwrap(),
                energy: -1.5,
                count: 3,
            }],
            wall_time_secs: 0.25,
        };
        let json = serde_json::to_value(&set).unwrap();
        assert_eq!(json["entries"][0]["z"], "011");
        assert!(json.get("wall_time_secs").is_none());
    }
}
