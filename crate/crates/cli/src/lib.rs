//! Benchmark harness: run any registered solver on any registered problem and
//! write iteration logs, final values and a comparison table.
//!
//! Everything written to `<out>` except `timing.csv` is a pure function of the
//! problem, solver list, flags and seed.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use cmc_opt::baselines::{self, BaselineConfig};
use cmc_opt::optimizer::{self, IterationRecord, SolveResult, SolveStatus, SolverConfig};
use cmc_opt::problems::{self, Problem};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("solver failed: {0}")]
    Solver(#[from] cmc_opt::Error),
    #[error("{solver} on {problem} ended with status {status}")]
    Failed {
        problem: String,
        solver: String,
        status: &'static str,
    },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// 2 for usage errors, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Solver {
    CmcRgd,
    CmcLm,
    Penalty,
    Auglag,
    Cmopt,
}

impl Solver {
    pub const ALL: [Solver; 5] = [
        Solver::CmcRgd,
        Solver::CmcLm,
        Solver::Penalty,
        Solver::Auglag,
        Solver::Cmopt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Solver::CmcRgd => "cmc_rgd",
            Solver::CmcLm => "cmc_lm",
            Solver::Penalty => "penalty",
            Solver::Auglag => "auglag",
            Solver::Cmopt => "cmopt",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|s| s.name() == name)
            .ok_or_else(|| CliError::Usage(format!("unknown solver {name}; expected one of {}", solver_names())))
    }
}

fn solver_names() -> String {
    Solver::ALL.map(Solver::name).join(", ")
}

/// Flags shared by `run` and `compare`. `None` keeps the library default.
#[derive(Clone, Debug)]
pub struct Options {
    pub max_iters: Option<usize>,
    pub grad_tol: Option<f64>,
    pub outer_iters: Option<usize>,
    pub seed: u64,
    pub params: Vec<(String, f64)>,
    pub out: PathBuf,
}

impl Default for Options {
    fn default() -> Self {
        Self {
            max_iters: None,
            grad_tol: None,
            outer_iters: None,
            seed: 0,
            params: Vec::new(),
            out: PathBuf::from("out"),
        }
    }
}

impl Options {
    pub fn solver_config(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(n) = self.max_iters {
            c.max_iters = n;
        }
        if let Some(t) = self.grad_tol {
            c.grad_tol = t;
        }
        c
    }

    pub fn baseline_config(&self) -> BaselineConfig {
        let mut c = BaselineConfig {
            inner: self.solver_config(),
            ..BaselineConfig::default()
        };
        if let Some(n) = self.outer_iters {
            c.outer_iters = n;
        }
        c
    }
}

/// Parses `key=value` into a numeric problem override.
pub fn parse_param(s: &str) -> std::result::Result<(String, f64), String> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| format!("expected key=value, got {s}"))?;
    let v: f64 = v.trim().parse().map_err(|e| format!("bad value for {k}: {e}"))?;
    if k.trim().is_empty() {
        return Err(format!("empty key in {s}"));
    }
    Ok((k.trim().to_string(), v))
}

/// One summary row. Deterministic given the inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub problem: String,
    pub method: String,
    pub status: String,
    /// Coordinates the solver searched over.
    pub dimension: usize,
    pub ambient_dim: usize,
    pub iterations: usize,
    pub violation: f64,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub summary: Summary,
    pub time_s: f64,
    pub log_path: PathBuf,
    pub final_path: PathBuf,
}

#[derive(Serialize)]
struct JsonSummary<'a> {
    #[serde(flatten)]
    summary: &'a Summary,
    time_s: f64,
}

impl RunOutput {
    /// Summary plus wall time as one JSON object.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&JsonSummary {
            summary: &self.summary,
            time_s: self.time_s,
        })?)
    }
}

#[derive(Serialize)]
struct FinalVariable {
    id: usize,
    value: Vec<f64>,
}

#[derive(Serialize)]
struct FinalValues<'a> {
    problem: &'a str,
    solver: &'a str,
    status: &'a str,
    variables: Vec<FinalVariable>,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn build_problem(name: &str, opts: &Options) -> Result<Problem> {
    let spec = problems::find(name).ok_or_else(|| {
        let known: Vec<_> = problems::registry().iter().map(|s| s.name).collect();
        CliError::Usage(format!("unknown problem {name}; expected one of {}", known.join(", ")))
    })?;
    spec.build(&opts.params, opts.seed).map_err(|e| match e {
        cmc_opt::Error::InvalidParameter(m) | cmc_opt::Error::InvalidSchedule(m) => CliError::Usage(m),
        other => CliError::Solver(other),
    })
}

fn solve(problem: &Problem, solver: Solver, opts: &Options, sink: optimizer::Sink<'_>) -> cmc_opt::Result<SolveResult> {
    let g = &problem.graph;
    match solver {
        Solver::CmcRgd => {
            optimizer::solve_rgd_with_sink(g, &g.extract_components(), &problem.init, &opts.solver_config(), sink)
        }
        Solver::CmcLm => {
            optimizer::solve_lm_with_sink(g, &g.extract_components(), &problem.init, &opts.solver_config(), sink)
        }
        Solver::Penalty => baselines::solve_penalty_with_sink(g, &problem.init, &opts.baseline_config(), sink),
        Solver::Auglag => baselines::solve_auglag_with_sink(g, &problem.init, &opts.baseline_config(), sink),
        Solver::Cmopt => baselines::solve_cmopt_with_sink(g, &problem.init, &opts.baseline_config(), sink),
    }
}

fn log_row(r: &IterationRecord) -> [String; 6] {
    [
        r.iter.to_string(),
        fmt_f64(r.cost),
        fmt_f64(r.violation),
        fmt_f64(r.grad_norm),
        fmt_f64(r.step),
        r.accepted.to_string(),
    ]
}

/// Runs one solver and writes `<problem>_<solver>_log.csv` and
/// `<problem>_<solver>_final.json`. The log is streamed, so it is present
/// even when the solver errors out.
pub fn run_one(problem_name: &str, solver: Solver, opts: &Options) -> Result<RunOutput> {
    let problem = build_problem(problem_name, opts)?;
    run_built(&problem, problem_name, solver, opts)
}

fn run_built(problem: &Problem, problem_name: &str, solver: Solver, opts: &Options) -> Result<RunOutput> {
    std::fs::create_dir_all(&opts.out)?;
    let stem = format!("{problem_name}_{}", solver.name());
    let log_path = opts.out.join(format!("{stem}_log.csv"));
    let final_path = opts.out.join(format!("{stem}_final.json"));

    let mut log = csv::Writer::from_path(&log_path)?;
    log.write_record(["iter", "cost", "violation", "grad_norm", "step", "accepted"])?;
    let mut log_err: Option<csv::Error> = None;
    let start = Instant::now();
    let solved = solve(problem, solver, opts, &mut |r| {
        if log_err.is_none() {
            if let Err(e) = log.write_record(log_row(r)) {
                log_err = Some(e);
            }
        }
    });
    let time_s = start.elapsed().as_secs_f64();
    log.flush()?;
    if let Some(e) = log_err {
        return Err(e.into());
    }
    let result = solved?;

    let graph = &problem.graph;
    let summary = Summary {
        problem: problem_name.to_string(),
        method: solver.name().to_string(),
        status: result.status.as_str().to_string(),
        dimension: result.search_dim,
        ambient_dim: result.ambient_dim,
        iterations: result.history.len().saturating_sub(1),
        violation: graph.total_violation(&result.final_values)?,
        cost: graph.total_cost(&result.final_values)?,
    };

    let fv = FinalValues {
        problem: problem_name,
        solver: solver.name(),
        status: result.status.as_str(),
        variables: result
            .final_values
            .iter()
            .map(|(k, v)| FinalVariable {
                id: k.id(),
                value: v.iter().copied().collect(),
            })
            .collect(),
    };
    let mut f = BufWriter::new(File::create(&final_path)?);
    serde_json::to_writer_pretty(&mut f, &fv)?;
    writeln!(f)?;
    f.flush()?;

    Ok(RunOutput {
        summary,
        time_s,
        log_path,
        final_path,
    })
}

fn write_summary(path: &Path, rows: &[RunOutput]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "problem",
        "method",
        "status",
        "dimension",
        "ambient_dim",
        "iterations",
        "violation",
        "cost",
    ])?;
    for r in rows {
        let s = &r.summary;
        w.write_record([
            s.problem.clone(),
            s.method.clone(),
            s.status.clone(),
            s.dimension.to_string(),
            s.ambient_dim.to_string(),
            s.iterations.to_string(),
            fmt_f64(s.violation),
            fmt_f64(s.cost),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_timing(path: &Path, rows: &[RunOutput]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["problem", "method", "time_s"])?;
    for r in rows {
        w.write_record([
            r.summary.problem.as_str(),
            r.summary.method.as_str(),
            &format!("{:.6}", r.time_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Result of a batch of runs on one problem instance.
#[derive(Debug)]
pub struct Comparison {
    pub rows: Vec<RunOutput>,
    pub summary_path: PathBuf,
    pub timing_path: PathBuf,
}

impl Comparison {
    /// First run that errored out of the harness's contract: retraction failure.
    pub fn failure(&self) -> Option<CliError> {
        self.rows
            .iter()
            .find(|r| r.summary.status == SolveStatus::RetractionFailure.as_str())
            .map(|r| CliError::Failed {
                problem: r.summary.problem.clone(),
                solver: r.summary.method.clone(),
                status: SolveStatus::RetractionFailure.as_str(),
            })
    }

    /// Fixed-width table for terminals.
    pub fn render_table(&self) -> String {
        let mut s = format!(
            "{:<10} {:>9} {:>9} {:>10} {:>12} {:>14}  {}\n",
            "method", "dimension", "ambient", "time_s", "violation", "cost", "status"
        );
        for r in &self.rows {
            let m = &r.summary;
            s.push_str(&format!(
                "{:<10} {:>9} {:>9} {:>10.3} {:>12.3e} {:>14.6}  {}\n",
                m.method, m.dimension, m.ambient_dim, r.time_s, m.violation, m.cost, m.status
            ));
        }
        s
    }
}

/// Runs each solver in turn on the same instance and writes `summary.csv`
/// (deterministic) and `timing.csv` (wall clock) next to the per-run files.
pub fn compare(problem_name: &str, solvers: &[Solver], opts: &Options) -> Result<Comparison> {
    if solvers.is_empty() {
        return Err(CliError::Usage("no solvers given".into()));
    }
    let problem = build_problem(problem_name, opts)?;
    let mut rows = Vec::new();
    for &s in solvers {
        rows.push(run_built(&problem, problem_name, s, opts)?);
    }
    let summary_path = opts.out.join("summary.csv");
    let timing_path = opts.out.join("timing.csv");
    write_summary(&summary_path, &rows)?;
    write_timing(&timing_path, &rows)?;
    Ok(Comparison {
        rows,
        summary_path,
        timing_path,
    })
}

/// Parses a comma-separated solver list.
pub fn parse_solvers(list: &str) -> Result<Vec<Solver>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(Solver::parse)
        .collect()
}
