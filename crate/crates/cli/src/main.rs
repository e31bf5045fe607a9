use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cmc_bench::{compare, parse_param, parse_solvers, CliError, Options, Solver};

#[derive(Parser)]
#[command(name = "cmcopt", version, about = "Constraint-manifold optimization benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on one problem.
    Run {
        problem: String,
        solver: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// Run several solvers on the same problem instance.
    Compare {
        problem: String,
        /// Comma-separated solver names.
        #[arg(default_value = "penalty,auglag,cmopt,cmc_lm")]
        solvers: String,
        #[command(flatten)]
        flags: Flags,
    },
    /// List problems, their parameters, and solvers.
    List,
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    /// Outer iterations of the penalty-style baselines.
    #[arg(long)]
    outer_iters: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Problem parameter override, repeatable.
    #[arg(long = "param", value_parser = parse_param)]
    params: Vec<(String, f64)>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

impl From<Flags> for Options {
    fn from(f: Flags) -> Self {
        Options {
            max_iters: f.max_iters,
            grad_tol: f.grad_tol,
            outer_iters: f.outer_iters,
            seed: f.seed,
            params: f.params,
            out: f.out,
        }
    }
}

fn list() {
    println!("problems:");
    for spec in cmc_opt::problems::registry() {
        println!("  {:<14} {}", spec.name, spec.description);
        let params: Vec<String> = spec.defaults.iter().map(|(k, v)| format!("{k}={v}")).collect();
        println!("  {:<14} params: {} init_noise=0", "", params.join(" "));
    }
    println!("solvers: {}", Solver::ALL.map(Solver::name).join(", "));
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let (problem, solvers, flags) = match cli.command {
        Command::List => {
            list();
            return Ok(());
        }
        Command::Run { problem, solver, flags } => (problem, vec![Solver::parse(&solver)?], flags),
        Command::Compare {
            problem,
            solvers,
            flags,
        } => (problem, parse_solvers(&solvers)?, flags),
    };
    let opts = Options::from(flags);
    let cmp = compare(&problem, &solvers, &opts)?;
    for row in &cmp.rows {
        println!("{}", row.to_json()?);
    }
    eprint!("{}", cmp.render_table());
    match cmp.failure() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
