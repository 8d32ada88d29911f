//! `ad3`: generate factor graphs, run the LP-MAP solvers, write traces.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use ad3_core::generators::{generate, Family, GeneratorError, GeneratorSpec};
use ad3_core::graph::{Assignment, FactorGraph, GraphError};
use ad3_core::solvers::{
    branch_and_bound, format_g12, solve, write_trace_csv, Algorithm, BranchingBudget, SolveReport,
    SolverConfig, SolverError, Status,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "ad3", version, about = "LP-MAP inference on factor graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic grid instance.
    Gen {
        #[command(flatten)]
        generator: GeneratorArgs,
        /// Where to write the graph (stdout when omitted).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run AD3 and/or the subgradient baseline on a graph.
    Solve(SolveArgs),
    /// Exact MAP by branch-and-bound (same as `solve --exact`).
    Exact(SolveArgs),
}

#[derive(Args, Debug)]
struct GeneratorArgs {
    #[arg(long, value_enum)]
    family: Option<FamilyArg>,
    #[arg(long, default_value_t = 4)]
    rows: usize,
    #[arg(long, default_value_t = 4)]
    cols: usize,
    /// States per variable (Potts).
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// Coupling half-width (Ising).
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Graph file; without it a graph is generated from the generator flags.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Save the generated graph here.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Trace CSV path. With `--algorithm both` its stem gets `.ad3.csv` and `.psg.csv`.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::Ad3)]
    algorithm: AlgorithmArg,
    /// AD3 penalty, or the initial subgradient step.
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    no_eta_adapt: bool,
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    inner_iters: Option<usize>,
    #[arg(long)]
    no_cache: bool,
    #[arg(long)]
    exact: bool,
    /// Exit with status 2 unless every run converges.
    #[arg(long)]
    require_convergence: bool,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[command(flatten)]
    generator: GeneratorArgs,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FamilyArg {
    Ising,
    Potts,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum AlgorithmArg {
    Ad3,
    Psg,
    Both,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: GraphError },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("{0}")]
    Usage(&'static str),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

impl GeneratorArgs {
    fn spec(&self) -> Result<GeneratorSpec, CliError> {
        let family = match self.family {
            Some(FamilyArg::Ising) => Family::Ising,
            Some(FamilyArg::Potts) => Family::Potts,
            None => return Err(CliError::Usage("either --input or --family is required")),
        };
        Ok(GeneratorSpec {
            family,
            rows: self.rows,
            cols: self.cols,
            num_states: self.states,
            rho: self.rho,
            seed: self.seed,
        })
    }
}

fn write_graph(graph: &FactorGraph, path: &Path) -> Result<(), CliError> {
    fs::write(path, graph.to_text()).map_err(io_err(path))
}

fn load_graph(args: &SolveArgs) -> Result<FactorGraph, CliError> {
    if let Some(path) = &args.input {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        return FactorGraph::parse(&text).map_err(|source| CliError::Parse {
            path: path.clone(),
            source,
        });
    }
    let graph = generate(&args.generator.spec()?)?;
    if let Some(path) = &args.output {
        write_graph(&graph, path)?;
    }
    Ok(graph)
}

fn config(args: &SolveArgs, algorithm: Algorithm) -> SolverConfig {
    let mut c = SolverConfig {
        algorithm,
        eta_adapt: !args.no_eta_adapt,
        caching: !args.no_cache,
        threads: args.threads,
        seed: args.generator.seed,
        ..SolverConfig::default()
    };
    if let Some(eta) = args.eta {
        c.eta = eta;
        c.subgrad_eta0 = eta;
    }
    if let Some(n) = args.max_iters {
        c.max_iters = n;
    }
    if let Some(tol) = args.tol {
        c.residual_tol = tol;
    }
    if let Some(n) = args.inner_iters {
        c.inner_iters = n;
    }
    c
}

/// Trace destinations per algorithm, if any.
fn trace_path(args: &SolveArgs, tag: &str) -> Option<PathBuf> {
    let both = args.algorithm == AlgorithmArg::Both;
    match (&args.trace, &args.input) {
        (Some(t), _) if !both => Some(t.clone()),
        (Some(t), _) => Some(suffixed(&t.with_extension(""), tag)),
        (None, Some(input)) => Some(suffixed(input, tag)),
        (None, None) => None,
    }
}

fn suffixed(stem: &Path, tag: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(format!(".{tag}.csv"));
    PathBuf::from(s)
}

fn join(assignment: &Assignment) -> String {
    assignment
        .0
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

fn summary(tag: &str, r: &SolveReport, seconds: f64) -> String {
    format!(
        "algorithm={tag} status={} best_dual={} best_primal={} iterations={} time={seconds:.3}s assignment={}",
        r.status,
        format_g12(r.best_dual),
        format_g12(r.best_primal_value),
        r.iterations,
        join(&r.assignment)
    )
}

/// Returns whether every run converged.
fn run_solve(args: &SolveArgs) -> Result<bool, CliError> {
    let graph = load_graph(args)?;
    if args.exact {
        return run_exact(&graph, args);
    }
    let runs: &[(Algorithm, &str)] = match args.algorithm {
        AlgorithmArg::Ad3 => &[(Algorithm::Ad3, "ad3")],
        AlgorithmArg::Psg => &[(Algorithm::Subgradient, "psg")],
        AlgorithmArg::Both => &[(Algorithm::Ad3, "ad3"), (Algorithm::Subgradient, "psg")],
    };
    let mut all_converged = true;
    for &(algorithm, tag) in runs {
        let start = Instant::now();
        let report = solve(&graph, &config(args, algorithm))?;
        let seconds = start.elapsed().as_secs_f64();
        if let Some(path) = trace_path(args, tag) {
            let file = File::create(&path).map_err(io_err(&path))?;
            write_trace_csv(BufWriter::new(file), &report.trace).map_err(io_err(&path))?;
        }
        println!("{}", summary(tag, &report, seconds));
        all_converged &= matches!(report.status, Status::Converged | Status::CertifiedOptimal);
    }
    Ok(all_converged)
}

fn run_exact(graph: &FactorGraph, args: &SolveArgs) -> Result<bool, CliError> {
    let start = Instant::now();
    let result = branch_and_bound(
        graph,
        &config(args, Algorithm::Ad3),
        BranchingBudget::default(),
    );
    let seconds = start.elapsed().as_secs_f64();
    match result {
        Ok(r) => {
            let status = if r.map.value == f64::NEG_INFINITY {
                "INFEASIBLE"
            } else {
                "OPTIMAL"
            };
            println!(
                "algorithm=bnb status={status} value={} root_dual={} nodes={} time={seconds:.3}s assignment={}",
                format_g12(r.map.value),
                format_g12(r.root_dual),
                r.nodes,
                join(&r.map.assignment)
            );
            Ok(true)
        }
        Err(SolverError::BudgetExhausted {
            nodes,
            incumbent,
            upper_bound,
            ..
        }) => {
            let (value, assignment) = incumbent.map_or((f64::NEG_INFINITY, String::new()), |m| {
                (m.value, join(&m.assignment))
            });
            println!(
                "algorithm=bnb status=BUDGET_EXHAUSTED value={} upper_bound={} nodes={nodes} time={seconds:.3}s assignment={assignment}",
                format_g12(value),
                format_g12(upper_bound)
            );
            Ok(false)
        }
        Err(e) => Err(e.into()),
    }
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Gen { generator, output } => {
            let graph = generate(&generator.spec()?)?;
            match output {
                Some(path) => write_graph(&graph, &path)?,
                None => print!("{}", graph.to_text()),
            }
            Ok(true)
        }
        Command::Solve(args) => {
            let ok = run_solve(&args)?;
            Ok(ok || !args.require_convergence)
        }
        Command::Exact(mut args) => {
            args.exact = true;
            let ok = run_solve(&args)?;
            Ok(ok || !args.require_convergence)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(extra: &[&str]) -> SolveArgs {
        let mut argv = vec!["ad3", "solve"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Solve(a) => a,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trace_paths() {
        let a = args(&["--input", "g.fg"]);
        assert_eq!(trace_path(&a, "ad3"), Some(PathBuf::from("g.fg.ad3.csv")));
        let a = args(&["--input", "g.fg", "--trace", "t.csv"]);
        assert_eq!(trace_path(&a, "ad3"), Some(PathBuf::from("t.csv")));
        let a = args(&[
            "--input",
            "g.fg",
            "--trace",
            "out/t.csv",
            "--algorithm",
            "both",
        ]);
        assert_eq!(trace_path(&a, "psg"), Some(PathBuf::from("out/t.psg.csv")));
        assert_eq!(trace_path(&args(&["--family", "ising"]), "ad3"), None);
    }

    #[test]
    fn flags_reach_the_config() {
        let a = args(&[
            "--eta",
            "5",
            "--no-eta-adapt",
            "--max-iters",
            "9",
            "--tol",
            "1e-3",
            "--no-cache",
            "--inner-iters",
            "4",
        ]);
        let c = config(&a, Algorithm::Ad3);
        assert_eq!(
            (c.eta, c.subgrad_eta0, c.max_iters, c.inner_iters),
            (5.0, 5.0, 9, 4)
        );
        assert!(!c.eta_adapt && !c.caching);
        assert_eq!(c.residual_tol, 1e-3);
    }
}
