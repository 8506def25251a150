//! `permsync` command-line driver.
//!
//! Exit codes: 0 success, 2 argument or format error, 3 numerical failure,
//! 4 sweep with at least one cell where every trial failed.

mod config;
mod plot;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use permsync::eigen::EigOptions;
use permsync::experiment::{
    format_summary_table, run_sweep, solve, write_raw_csv, write_summary_csv, SolverConfig, SweepSpec,
};
use permsync::cluster::ClusterConfig;
use permsync::permutation::hamming_loss;
use permsync::sync::Method;
use permsync::{Error, Instance, ModelParams, TruthMode};

use config::{pick, ConfigFile};

const DEFAULT_SIGMAS: [f64; 5] = [1.5, 1.25, 1.0, 0.75, 0.5];

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(String),
    PartialSweep(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::PartialSweep(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Numerical(m) | CliError::PartialSweep(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::NoConvergence { .. } | Error::NonFinite => CliError::Numerical(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Usage(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "permsync", version, about = "Spectral permutation synchronization: generate, solve, sweep, plot")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic instance and write it to disk
    Gen(GenArgs),
    /// Estimate permutations for an instance file or inline parameters
    Solve(SolveArgs),
    /// Run a Monte Carlo sweep over a sigma grid
    Sweep(SweepArgs),
    /// Render a summary CSV as an SVG chart
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
struct ModelArgs {
    /// Number of objects [default: 64]
    #[arg(long)]
    n: Option<usize>,
    /// Permutation size [default: 2]
    #[arg(long)]
    d: Option<usize>,
    /// Observation probability of each pair [default: 0.5]
    #[arg(long)]
    p: Option<f64>,
    /// Noise level [default: 0.5]
    #[arg(long)]
    sigma: Option<f64>,
    /// Random seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Ground truth: uniform or identity [default: uniform]
    #[arg(long)]
    truth_mode: Option<String>,
    /// Flat TOML file with default values for any flag [default: none]
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Output file; a .json extension selects JSON, anything else binary [default: instance.bin]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    /// Eigensolver relative residual tolerance [default: 1e-8]
    #[arg(long)]
    tol: Option<f64>,
    /// Eigensolver block-step budget [default: 50 * d]
    #[arg(long)]
    max_iter: Option<usize>,
    /// k-means++ restarts for the anchor [default: 10]
    #[arg(long)]
    restarts: Option<usize>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Instance file written by `gen`; inline parameters are used when absent [default: none]
    #[arg(long)]
    input: Option<PathBuf>,
    /// Estimator: anchored or vanilla [default: anchored]
    #[arg(long)]
    method: Option<String>,
    /// Estimates CSV [default: estimates.csv]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the top eigenvectors to this CSV [default: none]
    #[arg(long)]
    dump_eigen: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[command(flatten)]
    solver: SolverArgs,
    /// Comma-separated sigma grid [default: 1.5,1.25,1,0.75,0.5]
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    /// Trials per grid point [default: 20]
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated estimators [default: vanilla,anchored]
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Worker threads [default: 1]
    #[arg(long)]
    parallelism: Option<usize>,
    /// Output directory for raw.csv and summary.csv [default: sweep-out]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Use n=512, d=2, p=0.5, sigmas 1.5,1.25,1,0.75,0.5 and 100 trials as defaults [default: off]
    #[arg(long)]
    paper_default: bool,
    /// Record gap and error diagnostics in the raw CSV [default: off]
    #[arg(long)]
    collect_diagnostics: bool,
    /// Record per-stage wall times in the raw CSV; makes output run-dependent [default: off]
    #[arg(long)]
    timings: bool,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Style {
    Lines,
    Box,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Summary CSV written by `sweep`
    input: PathBuf,
    /// Chart style
    #[arg(long, value_enum, default_value = "lines")]
    style: Style,
    /// Output SVG [default: <input stem>.svg]
    #[arg(long)]
    out: Option<PathBuf>,
}

struct ModelDefaults {
    n: usize,
    d: usize,
    p: f64,
}

const BASE_DEFAULTS: ModelDefaults = ModelDefaults { n: 64, d: 2, p: 0.5 };

fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse().map_err(|e: Error| CliError::Usage(e.to_string()))
}

fn model_params(a: &ModelArgs, file: &ConfigFile, defaults: &ModelDefaults) -> Result<ModelParams, CliError> {
    let truth_mode: TruthMode = pick(a.truth_mode.clone(), file.truth_mode.clone(), "uniform".into())
        .parse()
        .map_err(|e: Error| CliError::Usage(e.to_string()))?;
    let params = ModelParams::new(
        pick(a.n, file.n, defaults.n),
        pick(a.d, file.d, defaults.d),
        pick(a.p, file.p, defaults.p),
        pick(a.sigma, file.sigma, 0.5),
        pick(a.seed, file.seed, 0),
    )
    .with_truth_mode(truth_mode);
    params.validate()?;
    Ok(params)
}

fn solver_config(a: &SolverArgs, file: &ConfigFile) -> SolverConfig {
    let eig = EigOptions::default();
    let cluster = ClusterConfig::default();
    SolverConfig {
        eig: EigOptions { tol: pick(a.tol, file.tol, eig.tol), max_iter: a.max_iter.or(file.max_iter), ..eig },
        cluster: ClusterConfig { restarts: pick(a.restarts, file.restarts, cluster.restarts), ..cluster },
    }
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", path.display())))
}

fn read_instance(path: &Path) -> Result<Instance, CliError> {
    let f = File::open(path).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    let r = BufReader::new(f);
    Ok(if is_json(path) { Instance::read_json(r)? } else { Instance::read_binary(r)? })
}

fn cmd_gen(a: GenArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(a.model.config.as_deref())?;
    let params = model_params(&a.model, &file, &BASE_DEFAULTS)?;
    let out = pick(a.out, file.out.clone(), PathBuf::from("instance.bin"));
    let inst = Instance::generate(&params)?;
    let mut w = create(&out)?;
    if is_json(&out) {
        inst.write_json(&mut w)?;
    } else {
        inst.write_binary(&mut w)?;
    }
    w.flush()?;
    drop(w);
    let size = std::fs::metadata(&out)?.len();
    println!("observed pairs: {}", inst.num_observed());
    println!("file size: {size} bytes");
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_solve(a: SolveArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(a.model.config.as_deref())?;
    let inst = match &a.input {
        Some(path) => read_instance(path)?,
        None => Instance::generate(&model_params(&a.model, &file, &BASE_DEFAULTS)?)?,
    };
    let method = parse_method(&pick(a.method, file.method.clone(), "anchored".into()))?;
    let cfg = solver_config(&a.solver, &file);
    let out = pick(a.out, file.out.clone(), PathBuf::from("estimates.csv"));

    let sol = solve(&inst, method, &cfg)?;
    let mut w = create(&out)?;
    sol.estimates.write_csv(&mut w)?;
    w.flush()?;
    if let Some(path) = &a.dump_eigen {
        let mut w = create(path)?;
        sol.eigenspace.write_csv(&mut w)?;
        w.flush()?;
    }

    let es = &sol.eigenspace;
    println!("method: {method}");
    println!("n: {}  d: {}  observed pairs: {}", inst.n(), inst.d(), inst.num_observed());
    let lambdas: Vec<String> = es.lambdas.iter().map(|l| format!("{l:.6}")).collect();
    println!("top eigenvalues: {}", lambdas.join(" "));
    if let Some(gap) = es.gap() {
        println!("spectral gap: {gap:.6}");
    }
    if let Some(anchor) = &sol.anchor {
        println!("clustering objective: {:.6}", anchor.clustering_objective);
    }
    if let Some(truth) = inst.truth() {
        println!("loss: {:.6}", hamming_loss(&sol.estimates.perms, truth)?);
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<(), CliError> {
    let file = ConfigFile::load(a.model.config.as_deref())?;
    let (defaults, default_sigmas, default_trials) = if a.paper_default {
        (ModelDefaults { n: 512, d: 2, p: 0.5 }, DEFAULT_SIGMAS.to_vec(), 100)
    } else {
        (BASE_DEFAULTS, DEFAULT_SIGMAS.to_vec(), 20)
    };
    let base = model_params(&a.model, &file, &defaults)?;
    let methods = pick(a.methods, file.methods.clone(), vec!["vanilla".into(), "anchored".into()])
        .iter()
        .map(|m| parse_method(m))
        .collect::<Result<Vec<_>, _>>()?;
    let spec = SweepSpec {
        base,
        sigma_grid: pick(a.sigmas, file.sigmas.clone(), default_sigmas),
        trials: pick(a.trials, file.trials, default_trials),
        methods,
        collect_diagnostics: a.collect_diagnostics || file.collect_diagnostics.unwrap_or(false),
        parallelism: pick(a.parallelism, file.parallelism, 1),
        master_seed: base.seed,
        solver: solver_config(&a.solver, &file),
    };
    let timings = a.timings || file.timings.unwrap_or(false);
    let out = pick(a.out, file.out.clone(), PathBuf::from("sweep-out"));

    spec.validate()?;
    let (results, summary) = run_sweep(&spec)?;
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let mut methods = spec.methods.clone();
    methods.sort();
    methods.dedup();
    let mut w = create(&out.join("raw.csv"))?;
    write_raw_csv(&results, &methods, timings, &mut w)?;
    w.flush()?;
    let mut w = create(&out.join("summary.csv"))?;
    write_summary_csv(&summary, &mut w)?;
    w.flush()?;

    print!("{}", format_summary_table(&summary));
    let failed = results.iter().filter(|r| r.failed()).count();
    if failed > 0 {
        eprintln!("{failed} of {} trials failed", results.len());
    }
    println!("wrote {} and {}", out.join("raw.csv").display(), out.join("summary.csv").display());
    if !summary.all_cells_ok() {
        return Err(CliError::PartialSweep("some grid points have no successful trial".into()));
    }
    Ok(())
}

fn cmd_plot(a: PlotArgs) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", a.input.display())))?;
    let rows = plot::parse_summary(&text)?;
    let svg = match a.style {
        Style::Lines => plot::render_lines(&rows),
        Style::Box => plot::render_box(&rows),
    };
    let out = a.out.unwrap_or_else(|| a.input.with_extension("svg"));
    std::fs::write(&out, svg).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", out.display())))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Plot(a) => cmd_plot(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
