//! `bkm`: generate task suites, solve them, evaluate results and plot.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bkm_core::data::{
    generate_suite, read_json, read_suite, write_bytes, write_suite, GenerationParams,
};
use bkm_core::pipeline::{
    evaluate, read_results, run_suite, write_report, EvaluationReport, SolveConfig, Solver,
    TaskResult,
};
use bkm_core::plot::{reliability_svg, scatter_svg, sparsification_svg};
use bkm_core::{AnnealSchedule, ClusteringTask, Error};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "bkm",
    version,
    about = "Probabilistic balanced k-means via QUBO sampling"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a suite of synthetic Gaussian clustering tasks.
    Generate {
        #[arg(long)]
        k: usize,
        #[arg(long)]
        points_per_cluster: usize,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long)]
        dmin: f64,
        #[arg(long)]
        dmax: f64,
        #[arg(long)]
        tasks: usize,
        /// Overridden by BKM_SEED.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Solve every task of a suite.
    Solve {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, value_enum)]
        solver: SolverArg,
        #[arg(long, default_value_t = bkm_core::sampler::DEFAULT_READS)]
        reads: usize,
        #[arg(long, default_value_t = bkm_core::sampler::DEFAULT_SWEEPS)]
        sweeps: usize,
        /// Run maximum point-set search up to this accumulated probability.
        #[arg(long)]
        pmin: Option<f64>,
        /// Overridden by BKM_SEED.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics, calibration and sparsification for one or more result sets.
    Evaluate {
        #[arg(long)]
        suite: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        results: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render an SVG chart.
    Plot {
        /// `report.json` for reliability/sparsification, a task result file
        /// for maxset/scatter.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Solver section of the report to plot (default: first with data).
        #[arg(long, value_enum)]
        solver: Option<SolverArg>,
        /// Task file with the points, required for maxset/scatter.
        #[arg(long)]
        task: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Sa,
    Exhaustive,
    Kmeans,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Sa => Solver::Sa,
            SolverArg::Exhaustive => Solver::Exhaustive,
            SolverArg::Kmeans => Solver::Kmeans,
        }
    }
}

#[derive(Clone, Copy, PartialEq, ValueEnum)]
enum PlotKind {
    Reliability,
    Sparsification,
    Maxset,
    Scatter,
}

/// Successful run, possibly with some tasks failing.
enum Outcome {
    Done,
    Partial(usize),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: cannot start {jobs} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Partial(n)) => {
            eprintln!("warning: {n} task(s) failed; see the manifest");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// `BKM_SEED`, when set, takes precedence over `--seed`.
fn seed_override(flag: u64) -> Result<u64, Error> {
    match std::env::var("BKM_SEED") {
        Ok(v) => v.trim().parse().map_err(|_| {
            Error::InvalidArgument(format!("BKM_SEED must be an unsigned integer, got {v:?}"))
        }),
        Err(_) => Ok(flag),
    }
}

fn run(cmd: Command) -> Result<Outcome, Error> {
    match cmd {
        Command::Generate {
            k,
            points_per_cluster,
            dim,
            dmin,
            dmax,
            tasks,
            seed,
            out,
        } => {
            let seed = seed_override(seed)?;
            let params = GenerationParams {
                k,
                points_per_cluster,
                dim,
                d_min: dmin,
                d_max: dmax,
            };
            params.validate()?;
            let (generated, failures) = generate_suite(&params, tasks, seed);
            for f in &failures {
                eprintln!("task {}: {}", f.index, f.message);
            }
            let n_failed = failures.len();
            let manifest = write_suite(&out, &params, seed, &generated, failures)?;
            println!(
                "wrote {} task(s) to {}",
                manifest.tasks.len(),
                out.display()
            );
            Ok(partial(n_failed))
        }
        Command::Solve {
            suite,
            solver,
            reads,
            sweeps,
            pmin,
            seed,
            out,
        } => {
            let seed = seed_override(seed)?;
            let (_, tasks) = read_suite(&suite)?;
            let cfg = SolveConfig {
                schedule: AnnealSchedule::default()
                    .with_reads(reads)
                    .with_sweeps(sweeps),
                p_min: pmin,
                seed,
                ..SolveConfig::new(solver.into())
            };
            let manifest = run_suite(&tasks, &cfg, &out)?;
            for f in &manifest.failures {
                eprintln!("task {}: {}", f.task_id, f.message);
            }
            println!(
                "solved {} task(s) into {}",
                manifest.tasks.len(),
                out.display()
            );
            Ok(partial(manifest.failures.len()))
        }
        Command::Evaluate {
            suite,
            results,
            out,
        } => {
            let (_, tasks) = read_suite(&suite)?;
            let runs = results
                .iter()
                .map(read_results)
                .collect::<Result<Vec<_>, _>>()?;
            let report = evaluate(&tasks, &runs)?;
            write_report(&report, &out)?;
            for s in &report.solvers {
                let cols: Vec<String> = s
                    .metrics
                    .iter()
                    .map(|m| format!("{} {:.1} ± {:.1}", m.metric, 100.0 * m.mean, 100.0 * m.sem))
                    .collect();
                println!(
                    "{:<10} n={:<5} {}",
                    s.solver.name(),
                    s.n_tasks,
                    cols.join("  ")
                );
            }
            let failed: usize = report.solvers.iter().map(|s| s.n_failures).sum();
            Ok(partial(failed))
        }
        Command::Plot {
            report,
            kind,
            solver,
            task,
            out,
        } => {
            let svg = render(&report, kind, solver.map(Solver::from), task.as_deref())?;
            write_bytes(&out, svg.as_bytes())?;
            Ok(Outcome::Done)
        }
    }
}

fn partial(n_failed: usize) -> Outcome {
    if n_failed == 0 {
        Outcome::Done
    } else {
        Outcome::Partial(n_failed)
    }
}

fn render(
    report: &Path,
    kind: PlotKind,
    solver: Option<Solver>,
    task: Option<&Path>,
) -> Result<String, Error> {
    match kind {
        PlotKind::Reliability | PlotKind::Sparsification => {
            let rep: EvaluationReport = read_json(report)?;
            let has_data = |s: &&bkm_core::pipeline::SolverReport| match kind {
                PlotKind::Reliability => s.calibration.is_some(),
                _ => !s.sparsification.is_empty(),
            };
            let section = rep
                .solvers
                .iter()
                .filter(|s| solver.is_none_or(|want| s.solver == want))
                .find(has_data)
                .ok_or_else(|| Error::InvalidArgument("report has no data for this plot".into()))?;
            if kind == PlotKind::Reliability {
                let cal = section.calibration.as_ref().expect("filtered above");
                Ok(reliability_svg(
                    cal,
                    &format!("Reliability ({})", section.solver),
                ))
            } else {
                sparsification_svg(
                    &section.sparsification,
                    &format!("Sparsification ({})", section.solver),
                )
            }
        }
        PlotKind::Maxset | PlotKind::Scatter => {
            let task_path = task
                .ok_or_else(|| Error::InvalidArgument("--task is required for this plot".into()))?;
            let t: ClusteringTask = read_json(task_path)?;
            let res: TaskResult = read_json(report)?;
            if res.task_id != t.task_id() {
                return Err(Error::InvalidArgument(format!(
                    "result is for {}, task file is {}",
                    res.task_id,
                    t.task_id()
                )));
            }
            if kind == PlotKind::Maxset {
                let ms = res.maxset.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("result has no maxset; solve with --pmin".into())
                })?;
                let title = format!("{}: maxset p = {:.2}", t.task_id(), ms.accumulated_p);
                scatter_svg(&t, &ms.consensus, &title)
            } else {
                let labels: Vec<Option<usize>> =
                    res.map.as_slice().iter().map(|&l| Some(l)).collect();
                scatter_svg(&t, &labels, &format!("{}: {}", t.task_id(), res.solver))
            }
        }
    }
}
