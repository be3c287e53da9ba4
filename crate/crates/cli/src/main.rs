use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use fixrank::newton::Status;
use fixrank_cli::bench::{self, BenchConfig};
use fixrank_cli::config::{self, ExperimentConfig, Objective};
use fixrank_cli::experiment;
use fixrank_cli::verify::{self, VerifyConfig};
use fixrank_cli::CliError;

/// Riemannian Newton methods on fixed-rank matrices.
#[derive(Parser, Debug)]
#[command(name = "fixrank", version)]
struct Cli {
    /// Flat `key = value` configuration file; command-line flags take
    /// precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the geometry property battery.
    Verify(VerifyArgs),
    /// Newton's method on ½‖MNᵀ − A‖².
    Approx(ExperimentArgs),
    /// Low-rank matrix completion: warm start, then Newton.
    Complete(ExperimentArgs),
    /// Time the lift/projection/connection kernels.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct VerifyArgs {
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Tolerance override `name=value`; repeatable.
    #[arg(long = "tol", value_name = "NAME=VALUE")]
    tol: Vec<String>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// balanced or stiefel.
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// MatrixMarket input (array or coordinate).
    #[arg(long)]
    input: Option<PathBuf>,
    /// MatrixMarket coordinate file selecting observed entries of a dense input.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Path of the CSV convergence log.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    max_outer: Option<usize>,
    #[arg(long)]
    grad_tol: Option<f64>,
    #[arg(long)]
    krylov_tol: Option<f64>,
    #[arg(long)]
    krylov_max: Option<usize>,
    /// Number of gradient-descent warm-start steps.
    #[arg(long)]
    warmstart: Option<usize>,
    /// Armijo-damped Newton steps instead of full steps.
    #[arg(long)]
    damped: bool,
    /// Rank of the synthetic target (`full` for a dense Gaussian matrix).
    #[arg(long)]
    rank: Option<String>,
    #[arg(long)]
    noise: Option<f64>,
    /// Fraction of observed entries for synthetic completion.
    #[arg(long)]
    sampling: Option<f64>,
    /// Approximation start: svd or random.
    #[arg(long)]
    start: Option<String>,
    /// Relative perturbation of the SVD start.
    #[arg(long)]
    perturb: Option<f64>,
}

impl ExperimentArgs {
    fn pairs(&self) -> Vec<(String, String)> {
        let mut v: Vec<(&str, Option<String>)> = vec![
            ("geometry", self.geometry.clone()),
            ("m", self.m.map(|x| x.to_string())),
            ("n", self.n.map(|x| x.to_string())),
            ("p", self.p.map(|x| x.to_string())),
            ("seed", self.seed.map(|x| x.to_string())),
            ("input", self.input.as_ref().map(|x| x.display().to_string())),
            ("mask", self.mask.as_ref().map(|x| x.display().to_string())),
            ("out", self.out.as_ref().map(|x| x.display().to_string())),
            ("max_outer", self.max_outer.map(|x| x.to_string())),
            ("grad_tol", self.grad_tol.map(|x| x.to_string())),
            ("krylov_tol", self.krylov_tol.map(|x| x.to_string())),
            ("krylov_max", self.krylov_max.map(|x| x.to_string())),
            ("warmstart", self.warmstart.map(|x| x.to_string())),
            ("rank", self.rank.clone()),
            ("noise", self.noise.map(|x| x.to_string())),
            ("sampling", self.sampling.map(|x| x.to_string())),
            ("start", self.start.clone()),
            ("perturb", self.perturb.map(|x| x.to_string())),
        ];
        if self.damped {
            v.push(("damped", Some("true".into())));
        }
        v.into_iter().filter_map(|(k, x)| x.map(|x| (k.to_string(), x))).collect()
    }
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated values of m+n.
    #[arg(long, value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long)]
    p: Option<usize>,
    /// Comma-separated ranks for the rank sweep.
    #[arg(long, value_delimiter = ',')]
    p_values: Option<Vec<usize>>,
    /// m+n used by the rank sweep.
    #[arg(long)]
    p_total: Option<usize>,
    #[arg(long)]
    no_p_sweep: bool,
    /// balanced, stiefel, or both.
    #[arg(long)]
    geometry: Option<String>,
    #[arg(long)]
    min_batch_ms: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Path of the timings CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn config_pairs(path: &Option<PathBuf>) -> Result<Vec<(String, String)>, CliError> {
    match path {
        Some(p) => config::read_pairs(p),
        None => Ok(Vec::new()),
    }
}

fn usage(msg: String) -> CliError {
    CliError::Usage(msg)
}

fn cmd_verify(args: &VerifyArgs, file: Vec<(String, String)>) -> Result<bool, CliError> {
    let mut cfg = VerifyConfig::default();
    let mut set = |k: &str, v: &str| -> Result<(), CliError> {
        match k {
            "trials" => cfg.trials = v.parse().map_err(|_| usage(format!("invalid trials `{v}`")))?,
            "seed" => cfg.seed = v.parse().map_err(|_| usage(format!("invalid seed `{v}`")))?,
            _ => {
                let name = k
                    .strip_prefix("tol.")
                    .or_else(|| k.strip_prefix("tol_"))
                    .ok_or_else(|| usage(format!("unknown verify setting `{k}`")))?;
                let value: f64 = v.parse().map_err(|_| usage(format!("invalid tolerance `{v}`")))?;
                cfg.tolerances.set(name, value).map_err(usage)?;
            }
        }
        Ok(())
    };
    for (k, v) in &file {
        set(k, v)?;
    }
    if let Some(t) = args.trials {
        set("trials", &t.to_string())?;
    }
    if let Some(s) = args.seed {
        set("seed", &s.to_string())?;
    }
    for t in &args.tol {
        let (k, v) = t
            .split_once('=')
            .ok_or_else(|| usage(format!("--tol expects NAME=VALUE, got `{t}`")))?;
        set(&format!("tol.{}", k.trim()), v.trim())?;
    }
    if cfg.trials == 0 {
        return Err(usage("trials must be positive".into()));
    }
    let report = verify::run(&cfg);
    let mut out = io::stdout().lock();
    let _ = report.write_to(&mut out);
    Ok(report.all_passed())
}

fn experiment_config(
    objective: Objective,
    args: &ExperimentArgs,
    file: Vec<(String, String)>,
) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::defaults(objective);
    for (k, v) in file.iter().chain(args.pairs().iter()) {
        cfg.apply(k, v)?;
    }
    cfg.objective = objective;
    if cfg.input.is_none() {
        cfg.validate()?;
    }
    Ok(cfg)
}

fn cmd_approx(args: &ExperimentArgs, file: Vec<(String, String)>) -> Result<bool, CliError> {
    let cfg = experiment_config(Objective::Approx, args, file)?;
    let outcome = experiment::run_approx(&cfg)?;
    let _ = outcome.report(&mut io::stdout().lock());
    Ok(outcome.summary.status == Status::Converged)
}

fn cmd_complete(args: &ExperimentArgs, file: Vec<(String, String)>) -> Result<bool, CliError> {
    let cfg = experiment_config(Objective::Completion, args, file)?;
    let outcome = experiment::run_completion(&cfg)?;
    let _ = outcome.report(&mut io::stdout().lock());
    Ok(outcome.summary.status == Status::Converged)
}

fn parse_list(v: &str) -> Result<Vec<usize>, CliError> {
    v.split(',')
        .map(|t| t.trim().parse().map_err(|_| usage(format!("invalid list entry `{t}`"))))
        .collect()
}

fn cmd_bench(args: &BenchArgs, file: Vec<(String, String)>) -> Result<bool, CliError> {
    let mut cfg = BenchConfig::default();
    let mut out: Option<PathBuf> = None;
    let geometry = |v: &str, cfg: &mut BenchConfig| -> Result<(), CliError> {
        cfg.geometries = match v {
            "both" | "all" => vec![fixrank::GeometryKind::Balanced, fixrank::GeometryKind::Stiefel],
            _ => vec![v.parse().map_err(usage)?],
        };
        Ok(())
    };
    for (k, v) in &file {
        match k.as_str() {
            "sizes" => cfg.sizes = parse_list(v)?,
            "p" => cfg.p = v.parse().map_err(|_| usage(format!("invalid p `{v}`")))?,
            "p_values" => cfg.p_values = parse_list(v)?,
            "p_total" => cfg.p_total = v.parse().map_err(|_| usage(format!("invalid p_total `{v}`")))?,
            "p_sweep" => {
                if !config::parse_bool(v).ok_or_else(|| usage(format!("invalid p_sweep `{v}`")))? {
                    cfg.p_values.clear();
                }
            }
            "geometry" => geometry(v, &mut cfg)?,
            "min_batch_ms" => {
                cfg.min_batch = Duration::from_millis(v.parse().map_err(|_| usage(format!("invalid min_batch_ms `{v}`")))?)
            }
            "seed" => cfg.seed = v.parse().map_err(|_| usage(format!("invalid seed `{v}`")))?,
            "out" => out = Some(PathBuf::from(v)),
            _ => return Err(usage(format!("unknown bench setting `{k}`"))),
        }
    }
    if let Some(s) = &args.sizes {
        cfg.sizes = s.clone();
    }
    if let Some(p) = args.p {
        cfg.p = p;
    }
    if let Some(pv) = &args.p_values {
        cfg.p_values = pv.clone();
    }
    if let Some(t) = args.p_total {
        cfg.p_total = t;
    }
    if args.no_p_sweep {
        cfg.p_values.clear();
    }
    if let Some(g) = &args.geometry {
        geometry(g, &mut cfg)?;
    }
    if let Some(ms) = args.min_batch_ms {
        cfg.min_batch = Duration::from_millis(ms);
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if args.out.is_some() {
        out = args.out.clone();
    }
    let smallest = cfg.sizes.iter().chain(std::iter::once(&cfg.p_total)).min().copied().unwrap_or(0);
    let largest_p = cfg.p_values.iter().chain(std::iter::once(&cfg.p)).max().copied().unwrap_or(0);
    if cfg.sizes.is_empty() || cfg.p == 0 || cfg.p_values.contains(&0) || largest_p > smallest / 2 {
        return Err(usage("bench needs non-empty sizes and ranks 1 <= p <= (m+n)/2".into()));
    }

    let report = bench::run(&cfg)?;
    let _ = report.report(&mut io::stdout().lock());
    if let Some(path) = out {
        std::fs::write(&path, report.to_csv()).map_err(|source| CliError::Io { path, source })?;
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = config_pairs(&cli.config).and_then(|file| match &cli.command {
        Command::Verify(a) => cmd_verify(a, file),
        Command::Approx(a) => cmd_approx(a, file),
        Command::Complete(a) => cmd_complete(a, file),
        Command::Bench(a) => cmd_bench(a, file),
    });
    let _ = io::stdout().flush();
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
