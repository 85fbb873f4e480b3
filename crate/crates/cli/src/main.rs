mod diagnose;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tmula::experiments::{preset, run_experiment, ExperimentConfig, MapSource, Study, PRESETS};
use tmula::map_learning::{train_map_adaptive, train_map_with_report, MapTrainingSpec};
use tmula::theory_checks::{run_suite, Suite};
use tmula::transport::{save_map, Rectifier};
use tmula::Error;

/// Transport-map preconditioned Langevin samplers and diagnostics.
///
/// Exit codes: 0 success (divergences are recorded, not fatal), 2 invalid
/// configuration or input, 3 numerical failure or a failed verification.
#[derive(Parser, Debug)]
#[command(name = "tmula", version)]
struct Cli {
    /// Master seed; overrides the seed in a config or preset.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Use the shortened desk-scale run lengths for presets.
    #[arg(long, global = true)]
    desk_scale: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a preset experiment or a config file; writes CSV tables, chains,
    /// report.json, SVG plots and a MANIFEST of SHA-256 hashes.
    Run(RunArgs),
    /// Run the chains described by a config and write them to a directory.
    Sample(SampleArgs),
    /// Fit a monotone triangular map to samples by maximum likelihood.
    TrainMap(TrainArgs),
    /// Compute ergodic averages, batch-means AVar and KSD for a directory
    /// written by `sample` or `run`.
    Diagnose(diagnose::DiagnoseArgs),
    /// Run a numerical verification suite; exits 3 if any check fails.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Preset name (banana-bias, funnel, rosenbrock, mixture).
    #[arg(conflicts_with = "config", required_unless_present = "config")]
    preset: Option<String>,
    /// Experiment config file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (default: config output_dir, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Experiment config file (JSON); the chains study is always used.
    #[arg(long)]
    config: PathBuf,
    /// Use this map file instead of the config's map source.
    #[arg(long)]
    map: Option<PathBuf>,
    /// Output directory (default: config output_dir, else out/<name>).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Sample file: a chain CSV (`step,y_1,..`) or a plain CSV with a header.
    #[arg(long)]
    samples: PathBuf,
    /// Total order of the multivariate Hermite basis.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Choose the order in 1..=N by held-out likelihood (overrides --order).
    #[arg(long)]
    max_order: Option<usize>,
    /// Positive rectifier g: softplus or shifted-elu.
    #[arg(long, default_value = "softplus")]
    rectifier: String,
    /// Gauss-Legendre points for the monotone integral.
    #[arg(long, default_value_t = 32)]
    quadrature: usize,
    /// Skip this many leading rows (burn-in).
    #[arg(long, default_value_t = 0)]
    skip: usize,
    /// Do not standardize samples before fitting.
    #[arg(long)]
    no_standardize: bool,
    /// Output map file (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional training report (JSON).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Suite: tmrmld, giirr, onestep or rate.
    #[arg(long)]
    suite: String,
    /// Random points per map for the equivalence suites.
    #[arg(long, default_value_t = 50)]
    points: usize,
    /// Monte-Carlo sample size for the one-step suite.
    #[arg(long, default_value_t = 1_000_000)]
    n_mc: usize,
    /// Write the suite report (JSON) here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// CLI failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn numerics(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidParameter(_)
            | Error::DimensionMismatch { .. }
            | Error::Config(_)
            | Error::Schema(_)
            | Error::Io(_) => 2,
            Error::InversionFailure { .. }
            | Error::Step(_)
            | Error::ImplicitSolve { .. }
            | Error::TrainingNumerics { .. }
            | Error::ChainTooShort { .. }
            | Error::NonFiniteScore(_) => 3,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot size the worker pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Run(a) => {
            let mut config = match (&a.preset, &a.config) {
                (Some(name), None) => preset(name, cli.desk_scale).map_err(|e| {
                    Failure::config(format!("{e}; presets: {}", PRESETS.join(", ")))
                })?,
                (None, Some(path)) => ExperimentConfig::load(path)?,
                _ => return Err(Failure::config("give a preset name or --config")),
            };
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            execute(&config, a.out.as_deref())
        }
        Command::Sample(a) => {
            let mut config = ExperimentConfig::load(&a.config)?;
            if let Some(seed) = cli.seed {
                config.seed = seed;
            }
            if let Some(map) = &a.map {
                config.map = MapSource::File {
                    path: map.to_string_lossy().into_owned(),
                };
            }
            if !matches!(config.study, Study::Chains {}) {
                return Err(Failure::config("sample runs chains studies only; use `run` for other studies"));
            }
            config.diagnostics.save_chains = true;
            execute(&config, a.out.as_deref())
        }
        Command::TrainMap(a) => train(a),
        Command::Diagnose(a) => diagnose::run(a),
        Command::Verify(a) => verify(a, cli.seed.unwrap_or(1)),
    }
}

fn execute(config: &ExperimentConfig, out: Option<&Path>) -> Result<(), Failure> {
    let dir = match (out, &config.output_dir) {
        (Some(p), _) => p.to_path_buf(),
        (None, Some(p)) => PathBuf::from(p),
        (None, None) => Path::new("out").join(&config.name),
    };
    let output = run_experiment(config)?;
    output
        .write_to(&dir)
        .map_err(|e| Failure::config(format!("cannot write {}: {e}", dir.display())))?;
    manifest::write_manifest(&dir, &output.files)
        .map_err(|e| Failure::config(format!("cannot write MANIFEST: {e}")))?;
    let r = &output.report;
    println!("{}: {} files written to {}", r.name, output.files.len() + 1, dir.display());
    if r.divergences > 0 {
        println!("divergences recorded: {}", r.divergences);
    }
    for row in &r.lambda {
        let cells: Vec<String> = row
            .lambda_hat
            .iter()
            .map(|(k, v)| format!("{k} = {}", v.map_or("n/a".into(), |x| format!("{x:.4}"))))
            .collect();
        println!("seed {}: lambda_1 {}", row.seed, cells.join(", "));
    }
    Ok(())
}

fn parse_rectifier(s: &str) -> Result<Rectifier, Failure> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| Failure::config(format!("unknown rectifier {s:?} (softplus, shifted-elu)")))
}

/// Reads a chain CSV or a plain numeric CSV with a header row.
fn read_samples(path: &Path) -> Result<Vec<Vec<f64>>, Failure> {
    if let Ok((_, states, d)) = tmula::samplers::load_chain_csv(path) {
        return Ok(states.chunks(d).map(|r| r.to_vec()).collect());
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines.next().ok_or_else(|| Failure::config("empty sample file"))?;
    let d = header.split(',').count();
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse::<f64>()).collect();
        let row = row.map_err(|_| Failure::config(format!("bad number on line {}", i + 2)))?;
        if row.len() != d {
            return Err(Failure::config(format!("wrong column count on line {}", i + 2)));
        }
        out.push(row);
    }
    Ok(out)
}

fn train(a: &TrainArgs) -> Result<(), Failure> {
    let samples = read_samples(&a.samples)?;
    if a.skip >= samples.len() {
        return Err(Failure::config("--skip removes every sample"));
    }
    let spec = MapTrainingSpec {
        total_order: a.order,
        rectifier: parse_rectifier(&a.rectifier)?,
        quadrature_points: a.quadrature,
        standardize: !a.no_standardize,
        ..MapTrainingSpec::default()
    };
    let samples = &samples[a.skip..];
    let (map, report) = match a.max_order {
        Some(m) => {
            let (map, report, scores) = train_map_adaptive(samples, &spec, m, 0.2)?;
            for s in &scores {
                match s.validation_nll {
                    Some(v) => println!("order {}: held-out negative log-likelihood {v:.6}", s.order),
                    None => println!("order {}: fit failed", s.order),
                }
            }
            (map, report)
        }
        None => train_map_with_report(samples, &spec)?,
    };
    save_map(&map, &a.out).map_err(|e| Failure::config(format!("cannot write {}: {e}", a.out.display())))?;
    if let Some(p) = &a.report {
        let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
        json.push('\n');
        std::fs::write(p, json).map_err(|e| Failure::config(format!("cannot write {}: {e}", p.display())))?;
    }
    println!(
        "trained order-{} map on {} samples in dimension {}: mean negative log-likelihood {:.6}",
        report.spec.total_order, report.samples, report.dim, report.final_nll
    );
    if report.components.iter().any(|c| !c.converged) {
        println!("warning: some components stopped before the gradient tolerance");
    }
    Ok(())
}

fn verify(a: &VerifyArgs, seed: u64) -> Result<(), Failure> {
    let suite = Suite::parse(&a.suite)?;
    let report = run_suite(suite, seed, a.points, a.n_mc)?;
    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    print!("{json}");
    if let Some(p) = &a.out {
        std::fs::write(p, &json).map_err(|e| Failure::config(format!("cannot write {}: {e}", p.display())))?;
    }
    for c in &report.checks {
        eprintln!(
            "{} {}: {:e} (tolerance {:e})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.tolerance
        );
    }
    if report.pass {
        Ok(())
    } else {
        Err(Failure::numerics(format!("suite {} failed", suite.name())))
    }
}
