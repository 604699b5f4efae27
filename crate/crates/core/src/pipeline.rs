//! Suite-level solving and evaluation.
//!
//! [`run_suite`] solves every task of a suite and writes one JSON result per
//! task plus a manifest with content hashes. Result files carry no wall-clock
//! data, so two runs with the same seeds produce byte-identical output.
//! [`evaluate`] reads results back and aggregates metrics, calibration and
//! sparsification per solver.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{content_hash, derive_seed, read_json, write_bytes, ManifestEntry};
use crate::error::{Error, Result};
use crate::kmeans::{balanced_kmeans, DEFAULT_MAX_ITER};
use crate::lagrange::{tune_lambda, TuneResult, DEFAULT_MAX_ROUNDS};
use crate::maxset::{maxset_search, MaxsetResult};
use crate::metrics::{
    default_grid, mean_sem, sparsification, CalibrationAccumulator, CalibrationReport, Metric,
    SparsificationCurve, SparsificationInput,
};
use crate::posterior::{exact_posterior_capped, map_solution, reparametrize, PosteriorTable};
use crate::problem::{canonical_labels, canonicalize, ClusteringTask, PartitionKey};
use crate::qubo::build_qubo;
use crate::sampler::{sample_sa, AnnealSchedule, DEFAULT_PARTITION_CAP};

pub const RESULTS_MANIFEST: &str = "manifest.json";
pub const CALIBRATION_BINS: usize = 10;
/// Posterior rows below this probability are summarized rather than written.
pub const DEFAULT_MIN_ROW_PROBABILITY: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Sa,
    Exhaustive,
    Kmeans,
}

impl Solver {
    pub const ALL: [Solver; 3] = [Solver::Sa, Solver::Exhaustive, Solver::Kmeans];

    pub fn name(self) -> &'static str {
        match self {
            Solver::Sa => "sa",
            Solver::Exhaustive => "exhaustive",
            Solver::Kmeans => "kmeans",
        }
    }

    pub fn is_probabilistic(self) -> bool {
        self != Solver::Kmeans
    }
}

impl fmt::Display for Solver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Solver::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown solver {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub solver: Solver,
    pub schedule: AnnealSchedule,
    pub max_rounds: usize,
    pub p_min: Option<f64>,
    pub seed: u64,
    pub partition_cap: u128,
    pub min_row_probability: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            solver: Solver::Sa,
            schedule: AnnealSchedule::default(),
            max_rounds: DEFAULT_MAX_ROUNDS,
            p_min: None,
            seed: 0,
            partition_cap: DEFAULT_PARTITION_CAP,
            min_row_probability: DEFAULT_MIN_ROW_PROBABILITY,
        }
    }
}

impl SolveConfig {
    pub fn new(solver: Solver) -> Self {
        SolveConfig {
            solver,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if let Some(p) = self.p_min {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::invalid(format!("p_min must lie in (0, 1], got {p}")));
            }
        }
        if !(0.0..1.0).contains(&self.min_row_probability) {
            return Err(Error::invalid("min_row_probability must lie in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSummary {
    pub reads: u64,
    pub distinct: usize,
    pub feasible_fraction: f64,
    pub beta_min: Option<f64>,
    pub beta_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansSummary {
    pub iterations: usize,
    pub converged: bool,
    pub energy_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskResult {
    pub task_id: String,
    pub solver: Solver,
    pub seed: u64,
    /// MAP partition, or the k-means partition.
    pub map: PartitionKey,
    pub map_energy: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map_probability: Option<f64>,
    /// Posterior probability of the ground-truth partition, if it was observed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<TuneResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<SamplingSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub posterior: Option<PosteriorTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxset: Option<MaxsetResult>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmeans: Option<KMeansSummary>,
}

/// Seed used for a task: a function of the run seed and the task's own seed.
pub fn task_seed(cfg: &SolveConfig, t: &ClusteringTask) -> u64 {
    derive_seed(cfg.seed, t.seed())
}

pub fn solve_task(t: &ClusteringTask, cfg: &SolveConfig) -> Result<TaskResult> {
    cfg.validate()?;
    let seed = task_seed(cfg, t);
    let mut result = TaskResult {
        task_id: t.task_id().to_owned(),
        solver: cfg.solver,
        seed,
        map: PartitionKey::default(),
        map_energy: 0.0,
        map_probability: None,
        truth_probability: None,
        lambda: None,
        sampling: None,
        posterior: None,
        maxset: None,
        kmeans: None,
    };
    let pt = match cfg.solver {
        Solver::Kmeans => {
            let km = balanced_kmeans(t, DEFAULT_MAX_ITER, seed)?;
            result.map = canonicalize(&km.assignment);
            result.map_energy = km.energy;
            result.kmeans = Some(KMeansSummary {
                iterations: km.iterations,
                converged: km.converged,
                energy_trace: km.energy_trace,
            });
            return Ok(result);
        }
        Solver::Exhaustive => exact_posterior_capped(t, cfg.partition_cap)?,
        Solver::Sa => {
            let tune = tune_lambda(t, &cfg.schedule, cfg.max_rounds, seed)?;
            let p = build_qubo(t, tune.lambda)?;
            let set = sample_sa(&p, &cfg.schedule, derive_seed(seed, u64::MAX))?;
            let pt = reparametrize(&set, t)?;
            result.sampling = Some(SamplingSummary {
                reads: set.reads,
                distinct: set.entries.len(),
                feasible_fraction: pt.feasible_fraction,
                beta_min: set.beta_min,
                beta_max: set.beta_max,
            });
            result.lambda = Some(tune);
            pt
        }
    };
    let (map, p_map) = map_solution(&pt)?;
    result.map_energy = pt
        .rows
        .iter()
        .find(|r| r.partition == map)
        .map(|r| r.energy)
        .unwrap_or(f64::NAN);
    result.map = map;
    result.map_probability = Some(p_map);
    if let Some(gt) = t.ground_truth() {
        result.truth_probability = pt.probability_of(&canonical_labels(gt));
    }
    if let Some(p_min) = cfg.p_min {
        result.maxset = Some(maxset_search(&pt, p_min)?);
    }
    result.posterior = Some(pt.truncated(cfg.min_row_probability));
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFailure {
    pub task_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsManifest {
    pub solver: Solver,
    pub config: SolveConfig,
    pub tasks: Vec<ManifestEntry>,
    #[serde(default)]
    pub failures: Vec<TaskFailure>,
}

/// Solves all tasks (in parallel on the current rayon pool) and writes
/// results into `out`. Task failures are recorded in the manifest.
pub fn run_suite(
    tasks: &[ClusteringTask],
    cfg: &SolveConfig,
    out: impl AsRef<Path>,
) -> Result<ResultsManifest> {
    cfg.validate()?;
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let solved: Vec<Result<TaskResult>> = tasks.par_iter().map(|t| solve_task(t, cfg)).collect();
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in tasks.iter().zip(solved) {
        match r {
            Ok(res) => {
                let file = format!("{}.json", t.task_id());
                let bytes = serde_json::to_vec_pretty(&res)?;
                write_bytes(out.join(&file), &bytes)?;
                entries.push(ManifestEntry {
                    task_id: res.task_id,
                    file,
                    sha256: content_hash(&bytes),
                });
            }
            Err(e) => failures.push(TaskFailure {
                task_id: t.task_id().to_owned(),
                message: e.to_string(),
            }),
        }
    }
    let manifest = ResultsManifest {
        solver: cfg.solver,
        config: *cfg,
        tasks: entries,
        failures,
    };
    write_bytes(
        out.join(RESULTS_MANIFEST),
        &serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Loads a results manifest and its task results.
pub fn read_results(dir: impl AsRef<Path>) -> Result<(ResultsManifest, Vec<TaskResult>)> {
    let dir = dir.as_ref();
    let manifest: ResultsManifest = read_json(dir.join(RESULTS_MANIFEST))?;
    let results = manifest
        .tasks
        .iter()
        .map(|e| read_json(dir.join(&e.file)))
        .collect::<Result<Vec<TaskResult>>>()?;
    Ok((manifest, results))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: String,
    pub mean: f64,
    pub sem: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricCurve {
    pub metric: String,
    pub curve: SparsificationCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverReport {
    pub solver: Solver,
    pub n_tasks: usize,
    pub n_failures: usize,
    /// Fractions in `[0, 1]` (adjusted Rand may be negative).
    pub metrics: Vec<MetricSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub maxset_calibration: Option<CalibrationReport>,
    #[serde(default)]
    pub sparsification: Vec<MetricCurve>,
}

impl SolverReport {
    pub fn metric(&self, m: Metric) -> Option<&MetricSummary> {
        self.metrics.iter().find(|s| s.metric == m.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub solvers: Vec<SolverReport>,
}

impl EvaluationReport {
    pub fn solver(&self, s: Solver) -> Option<&SolverReport> {
        self.solvers.iter().find(|r| r.solver == s)
    }
}

/// Pools every posterior row of every task as one solution. Rows dropped by
/// truncation enter the lowest bin in bulk; the ground truth counts as one
/// of them when it was observed but not written out.
pub fn accumulate_calibration(
    acc: &mut CalibrationAccumulator,
    pt: &PosteriorTable,
    truth: &PartitionKey,
    truth_probability: Option<f64>,
) {
    let mut truth_listed = false;
    for r in &pt.rows {
        let correct = &r.partition == truth;
        truth_listed |= correct;
        acc.add(r.probability, correct);
    }
    if pt.omitted_rows > 0 {
        let hidden_truth = u64::from(truth_probability.is_some() && !truth_listed);
        acc.add_many(0.0, pt.omitted_rows, pt.omitted_mass, hidden_truth);
    }
}

pub fn evaluate_solver(
    tasks: &[ClusteringTask],
    manifest: &ResultsManifest,
    results: &[TaskResult],
) -> Result<SolverReport> {
    if results.is_empty() {
        return Err(Error::invalid(format!(
            "no {} results to evaluate",
            manifest.solver
        )));
    }
    let by_id: HashMap<&str, &ClusteringTask> = tasks.iter().map(|t| (t.task_id(), t)).collect();
    let mut values: Vec<Vec<f64>> = vec![Vec::with_capacity(results.len()); Metric::ALL.len()];
    let mut calibration = CalibrationAccumulator::new(CALIBRATION_BINS)?;
    let mut maxset_cal = CalibrationAccumulator::new(CALIBRATION_BINS)?;
    let mut has_posterior = false;
    let mut spars: Vec<Vec<SparsificationInput>> = vec![Vec::new(); Metric::ALL.len()];
    for r in results {
        if r.solver != manifest.solver {
            return Err(Error::invalid(format!(
                "result {} was produced by {}, manifest says {}",
                r.task_id, r.solver, manifest.solver
            )));
        }
        let t = by_id.get(r.task_id.as_str()).ok_or_else(|| {
            Error::invalid(format!("result {} has no task in the suite", r.task_id))
        })?;
        let gt = t.ground_truth().ok_or(Error::MissingGroundTruth)?;
        if r.map.len() != gt.len() {
            return Err(Error::DimensionMismatch {
                expected: gt.len(),
                actual: r.map.len(),
            });
        }
        let truth = canonical_labels(gt);
        for (m, vals) in Metric::ALL.iter().zip(&mut values) {
            vals.push(m.eval(r.map.as_slice(), gt)?);
        }
        if let Some(pt) = &r.posterior {
            has_posterior = true;
            accumulate_calibration(&mut calibration, pt, &truth, r.truth_probability);
            let p_map = r.map_probability.unwrap_or(0.0);
            for (vals, s) in values.iter().zip(&mut spars) {
                s.push(SparsificationInput {
                    task_id: r.task_id.clone(),
                    predicted_p: p_map,
                    metric: *vals.last().expect("pushed above"),
                });
            }
        }
        if let Some(ms) = &r.maxset {
            maxset_cal.add(ms.accumulated_p.min(1.0), ms.matches(gt));
        }
    }
    let metrics = Metric::ALL
        .iter()
        .zip(&values)
        .map(|(m, v)| {
            let (mean, sem) = mean_sem(v);
            MetricSummary {
                metric: m.name().to_owned(),
                mean,
                sem,
            }
        })
        .collect();
    let sparsification = if has_posterior {
        let grid = default_grid();
        Metric::ALL
            .iter()
            .zip(&spars)
            .map(|(m, inputs)| {
                Ok(MetricCurve {
                    metric: m.name().to_owned(),
                    curve: sparsification(inputs, &grid)?,
                })
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    Ok(SolverReport {
        solver: manifest.solver,
        n_tasks: results.len(),
        n_failures: manifest.failures.len(),
        metrics,
        calibration: has_posterior.then(|| calibration.report()).transpose()?,
        maxset_calibration: (maxset_cal.total() > 0)
            .then(|| maxset_cal.report())
            .transpose()?,
        sparsification,
    })
}

pub fn evaluate(
    tasks: &[ClusteringTask],
    runs: &[(ResultsManifest, Vec<TaskResult>)],
) -> Result<EvaluationReport> {
    if runs.is_empty() {
        return Err(Error::invalid("no result sets given"));
    }
    let solvers = runs
        .iter()
        .map(|(m, r)| evaluate_solver(tasks, m, r))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport { solvers })
}

/// Writes `report.json`, `metrics.csv`, `calibration.csv` and
/// `sparsification.csv` into `out`.
pub fn write_report(report: &EvaluationReport, out: impl AsRef<Path>) -> Result<()> {
    let out = out.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    write_bytes(out.join("report.json"), &serde_json::to_vec_pretty(report)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["solver", "metric", "mean", "sem", "n_tasks"])?;
    for s in &report.solvers {
        for m in &s.metrics {
            w.write_record([
                s.solver.name(),
                &m.metric,
                &m.mean.to_string(),
                &m.sem.to_string(),
                &s.n_tasks.to_string(),
            ])?;
        }
    }
    write_bytes(out.join("metrics.csv"), &finish(w)?)?;

    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "solver",
        "kind",
        "lower",
        "upper",
        "n_solutions",
        "mean_predicted_p",
        "empirical_correct_fraction",
    ])?;
    for s in &report.solvers {
        let kinds = [
            ("posterior", &s.calibration),
            ("maxset", &s.maxset_calibration),
        ];
        for (kind, rep) in kinds {
            for b in rep.iter().flat_map(|r| &r.bins) {
                w.write_record([
                    s.solver.name(),
                    kind,
                    &b.lower.to_string(),
                    &b.upper.to_string(),
                    &b.n_solutions.to_string(),
                    &opt(b.mean_predicted_p),
                    &opt(b.empirical_correct_fraction),
                ])?;
            }
        }
    }
    write_bytes(out.join("calibration.csv"), &finish(w)?)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "solver",
        "metric",
        "fraction_removed",
        "predicted",
        "oracle",
    ])?;
    for s in &report.solvers {
        for mc in &s.sparsification {
            let c = &mc.curve;
            for i in 0..c.fractions_removed.len() {
                w.write_record([
                    s.solver.name(),
                    &mc.metric,
                    &c.fractions_removed[i].to_string(),
                    &c.metric_predicted[i].to_string(),
                    &c.metric_oracle[i].to_string(),
                ])?;
            }
        }
    }
    write_bytes(out.join("sparsification.csv"), &finish(w)?)
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<Vec<u8>> {
    w.into_inner()
        .map_err(|e| Error::invalid(format!("csv buffer: {}", e.error())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::generate_task;

    fn small_cfg(solver: Solver) -> SolveConfig {
        SolveConfig {
            schedule: AnnealSchedule::default().with_reads(300),
            p_min: Some(0.9),
            ..SolveConfig::new(solver)
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for s in Solver::ALL {
            assert_eq!(s.name().parse::<Solver>().unwrap(), s);
            assert_eq!(
                serde_json::to_string(&s).unwrap(),
                format!("\"{}\"", s.name())
            );
        }
        assert!("quantum".parse::<Solver>().is_err());
    }

    #[test]
    fn exhaustive_result_is_consistent() {
        let t = generate_task(2, 3, 2, 2.0, 5.0, 4).unwrap();
        let r = solve_task(&t, &small_cfg(Solver::Exhaustive)).unwrap();
        let pt = r.posterior.as_ref().unwrap();
        assert!(pt.complete);
        assert_eq!(pt.rows[0].partition, r.map);
        let total: f64 = pt.rows.iter().map(|r| r.probability).sum::<f64>() + pt.omitted_mass;
        assert!((total - 1.0).abs() < 1e-9);
        assert!(r.truth_probability.is_some());
        assert!(r.maxset.is_some() && r.lambda.is_none());
    }

    #[test]
    fn kmeans_has_no_posterior() {
        let t = generate_task(3, 3, 2, 2.0, 5.0, 1).unwrap();
        let r = solve_task(&t, &small_cfg(Solver::Kmeans)).unwrap();
        assert!(r.posterior.is_none() && r.map_probability.is_none());
        assert_eq!(r.map.len(), 9);
    }

    #[test]
    fn truncation_keeps_calibration_totals() {
        let t = generate_task(2, 4, 2, 1.0, 3.0, 2).unwrap();
        let full = crate::posterior::exact_posterior(&t).unwrap();
        let truth = canonical_labels(t.ground_truth().unwrap());
        let tp = full.probability_of(&truth);
        let mut a = CalibrationAccumulator::new(10).unwrap();
        accumulate_calibration(&mut a, &full, &truth, tp);
        let mut b = CalibrationAccumulator::new(10).unwrap();
        accumulate_calibration(&mut b, &full.truncated(0.05), &truth, tp);
        let (ra, rb) = (a.report().unwrap(), b.report().unwrap());
        assert_eq!(ra.total, rb.total);
        let correct = |r: &CalibrationReport| -> f64 {
            r.bins
                .iter()
                .map(|b| b.empirical_correct_fraction.unwrap_or(0.0) * b.n_solutions as f64)
                .sum()
        };
        assert!((correct(&ra) - correct(&rb)).abs() < 1e-9);
        assert!((correct(&ra) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn perfect_results_score_one() {
        let t = generate_task(2, 3, 2, 2.0, 5.0, 9).unwrap();
        let mut r = solve_task(&t, &small_cfg(Solver::Kmeans)).unwrap();
        r.map = canonical_labels(t.ground_truth().unwrap());
        let manifest = ResultsManifest {
            solver: Solver::Kmeans,
            config: small_cfg(Solver::Kmeans),
            tasks: Vec::new(),
            failures: Vec::new(),
        };
        let rep = evaluate_solver(std::slice::from_ref(&t), &manifest, &[r]).unwrap();
        for m in &rep.metrics {
            assert_eq!(m.mean, 1.0, "{}", m.metric);
        }
    }

    #[test]
    fn mismatched_suite_is_rejected() {
        let t = generate_task(2, 3, 2, 2.0, 5.0, 9).unwrap();
        let other = generate_task_with_other_id(&t);
        let r = solve_task(&t, &small_cfg(Solver::Kmeans)).unwrap();
        let manifest = ResultsManifest {
            solver: Solver::Kmeans,
            config: small_cfg(Solver::Kmeans),
            tasks: Vec::new(),
            failures: Vec::new(),
        };
        assert!(evaluate_solver(&[other], &manifest, &[r]).is_err());
        assert!(evaluate_solver(&[t], &manifest, &[]).is_err());
    }

    fn generate_task_with_other_id(t: &ClusteringTask) -> ClusteringTask {
        ClusteringTask::new("other", t.seed(), t.sizes().to_vec(), t.points().to_vec())
            .unwrap()
            .with_ground_truth(t.ground_truth().unwrap().to_vec())
            .unwrap()
    }
}
