//! Probabilistic balanced k-means.
//!
//! A balanced clustering task is encoded as a penalized QUBO over the one-hot
//! assignment matrix, sampled with simulated annealing (or enumerated
//! exhaustively on small tasks), and the feasible samples are turned into a
//! posterior over partitions by renormalizing `exp(−E)` with exact Gaussian
//! energies. On top of the posterior sit maximum point-set extraction,
//! clustering metrics, calibration and sparsification analysis.

pub mod assignment;
pub mod data;
pub mod error;
pub mod kmeans;
pub mod lagrange;
pub mod maxset;
pub mod metrics;
pub mod pipeline;
pub mod plot;
pub mod posterior;
pub mod problem;
pub mod qubo;
pub mod sampler;

pub use error::{Error, Result};
pub use maxset::{align, maxset_search, Alignment, MaxsetResult};
pub use pipeline::{
    evaluate, run_suite, solve_task, EvaluationReport, SolveConfig, Solver, TaskResult,
};
pub use posterior::{exact_energy, exact_posterior, map_solution, reparametrize, PosteriorTable};
pub use problem::{
    canonicalize, is_feasible, Assignment, BinaryVector, ClusteringTask, PartitionKey,
};
pub use qubo::{build_constraints, build_data_costs, build_qubo, qubo_energy, QuboProblem};
pub use sampler::{enumerate_exhaustive, sample_sa, AnnealSchedule, SampleSet, SamplerBackend};
