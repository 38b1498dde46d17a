//! `rc`: generate, corrupt and analyse point sets under combined contamination.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or input error,
//! 3 degenerate run.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rc_core::adversaries::contaminate;
use rc_core::filter::{estimate_mean, learn_distribution, FilterOutcome, FilterParams, FilterTrace};
use rc_core::harness::baselines;
use rc_core::harness::config::{Estimator, ExperimentConfig};
use rc_core::harness::sweep::{config_delta, run_sweep};
use rc_core::harness::verify::{run_suite, Suite};
use rc_core::io::{read_points, write_points};
use rc_core::pca::{pca_error, robust_pca, Centering, PcaParams};
use rc_core::stability::{rate_formula, RateFamily, RateQuery};
use rc_core::wasserstein::{sliced_w_p, SlicedOptions};
use rc_core::{AlgoConstants, Error, PointSet};
use serde_json::{json, Value};

#[derive(Parser)]
#[command(name = "rc", version, about = "Robust statistics under global and local contamination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; defaults to the first seed of the configuration, else 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Output path.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Worker threads for seed-level parallelism.
    #[arg(long, env = "RC_THREADS")]
    threads: Option<usize>,
}

#[derive(Args)]
struct FilterArgs {
    /// Input point set (.csv or binary).
    #[arg(long = "in")]
    input: PathBuf,
    /// Contamination fraction; overrides the configuration.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Local budget; overrides the configuration.
    #[arg(long)]
    rho: Option<f64>,
    /// Stability parameter; defaults to the subgaussian rate formula.
    #[arg(long)]
    delta: Option<f64>,
    /// Write the per-iteration trace as JSON lines.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a clean point set from the configured generator.
    Gen(Common),
    /// Apply the configured contamination recipe to a point set.
    Corrupt {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Run an estimator and print the result.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        filter: FilterArgs,
    },
    /// Run the configured grid over epsilon and rho, writing CSV rows.
    Sweep(Common),
    /// Run the self-verification suites.
    Verify {
        #[command(flatten)]
        common: Common,
        /// core, adversaries, stability, saddle, filter, wasserstein, pca or all.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Filter for distribution learning under the sliced Wasserstein distance.
    Distlearn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        filter: FilterArgs,
        #[arg(long, default_value_t = 1)]
        k_prime: usize,
        /// Reference sample; when given, sliced W1 bounds to it are reported.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// Robust top principal component.
    Pca {
        #[command(flatten)]
        common: Common,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        epsilon: Option<f64>,
        /// PCA-stability parameter of the clean data.
        #[arg(long, default_value_t = 0.1)]
        gamma: f64,
        /// Whitened local budget.
        #[arg(long, default_value_t = 0.0)]
        rho_bar: f64,
        #[arg(long, value_enum, default_value = "none")]
        centering: CenteringArg,
        #[arg(long)]
        trace: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CenteringArg {
    None,
    Pairs,
    Robust,
}

/// Failure classes mapped onto exit codes.
enum Failure {
    Verification(String),
    Input(String),
    Degenerate(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Degenerate { .. } => Failure::Degenerate(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(m)) => {
            eprintln!("verification failed: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Degenerate(m)) => {
            eprintln!("degenerate run: {m}");
            ExitCode::from(3)
        }
    }
}

fn run(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Gen(c) => gen(&c),
        Command::Corrupt { common, input } => corrupt(&common, &input),
        Command::Estimate { common, filter } => estimate(&common, &filter),
        Command::Sweep(c) => sweep(&c),
        Command::Verify { common, suite } => verify(&common, &suite),
        Command::Distlearn {
            common,
            filter,
            k_prime,
            reference,
        } => distlearn(&common, &filter, k_prime, reference.as_deref()),
        Command::Pca {
            common,
            input,
            epsilon,
            gamma,
            rho_bar,
            centering,
            trace,
        } => pca(&common, &input, epsilon, gamma, rho_bar, centering, trace.as_deref()),
    }
}

fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::Malformed { line, msg } => Failure::Input(format!("{}:{line}: {msg}", path.display())),
        other => Failure::Input(format!("{}: {other}", path.display())),
    })
}

fn optional_config(c: &Common) -> CliResult<Option<ExperimentConfig>> {
    c.config.as_deref().map(load_config).transpose()
}

fn require_config(c: &Common, cmd: &str) -> CliResult<ExperimentConfig> {
    optional_config(c)?.ok_or_else(|| Failure::Input(format!("`{cmd}` needs --config")))
}

fn seed_of(c: &Common, cfg: Option<&ExperimentConfig>) -> u64 {
    c.seed.or_else(|| cfg.and_then(|x| x.seeds.first().copied())).unwrap_or(0)
}

fn require_out<'a>(c: &'a Common, cmd: &str) -> CliResult<&'a Path> {
    c.out.as_deref().ok_or_else(|| Failure::Input(format!("`{cmd}` needs --out")))
}

/// Prints (or writes to --out) a flat JSON object, or `key,value` CSV rows.
fn emit(c: &Common, value: &Value) -> CliResult<()> {
    let text = match c.format {
        Format::Json => serde_json::to_string_pretty(value).map_err(Error::from)? + "\n",
        Format::Csv => {
            let mut s = String::from("key,value\n");
            if let Value::Object(map) = value {
                for (k, v) in map {
                    match v {
                        Value::Array(items) => {
                            for (i, x) in items.iter().enumerate() {
                                s.push_str(&format!("{k}[{i}],{x}\n"));
                            }
                        }
                        other => s.push_str(&format!("{k},{other}\n")),
                    }
                }
            }
            s
        }
    };
    match &c.out {
        Some(p) => std::fs::write(p, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn gen(c: &Common) -> CliResult<()> {
    let cfg = require_config(c, "gen")?;
    let out = require_out(c, "gen")?;
    let mut rng = rc_core::rng::child(seed_of(c, Some(&cfg)), 0);
    let sample = cfg.generator.sample(cfg.n, &mut rng)?;
    write_points(&sample.points, out)?;
    Ok(())
}

fn corrupt(c: &Common, input: &Path) -> CliResult<()> {
    let cfg = require_config(c, "corrupt")?;
    let out = require_out(c, "corrupt")?;
    let s0 = read_points(input)?;
    let mut recipe = cfg.recipe.clone();
    if let Some(seed) = c.seed {
        recipe.seed = seed;
    }
    let (t, _) = contaminate(&s0, &recipe)?;
    write_points(&t, out)?;
    Ok(())
}

/// Filter settings from flags, falling back to the configuration.
struct Settings {
    eps: f64,
    rho: f64,
    delta: f64,
    constants: AlgoConstants,
}

fn settings(cfg: Option<&ExperimentConfig>, f: &FilterArgs, t: &PointSet) -> CliResult<Settings> {
    let eps = f.epsilon.or(cfg.map(|x| x.recipe.epsilon)).unwrap_or(0.05);
    let rho = f.rho.or(cfg.map(|x| x.recipe.rho)).unwrap_or(0.0);
    let constants = cfg.map(|x| x.constants).unwrap_or_default();
    let delta = match (f.delta, cfg) {
        (Some(d), _) => d,
        (None, Some(x)) if f.epsilon.is_none() => config_delta(x)?,
        _ => {
            let q = RateQuery {
                family: RateFamily::Subgaussian,
                epsilon: eps,
                n: Some(t.len() as u64),
                d: t.dim(),
                tau: cfg.map_or(0.1, |x| x.tau),
            };
            rate_formula(&q, constants.c_small)?.max(eps)
        }
    };
    Ok(Settings {
        eps,
        rho,
        delta,
        constants,
    })
}

fn write_trace(path: Option<&Path>, trace: &FilterTrace) -> CliResult<()> {
    if let Some(p) = path {
        let mut w = BufWriter::new(File::create(p)?);
        trace.write_jsonl(&mut w)?;
        w.flush()?;
    }
    Ok(())
}

/// Writes the partial trace of a degenerate run before reporting it.
fn filter_result(res: rc_core::Result<FilterOutcome>, trace: Option<&Path>) -> CliResult<FilterOutcome> {
    match res {
        Ok(out) => {
            write_trace(trace, &out.trace)?;
            Ok(out)
        }
        Err(Error::Degenerate { reason, trace: partial }) => {
            if let Some(t) = partial.as_deref() {
                write_trace(trace, t)?;
            }
            Err(Failure::Degenerate(reason))
        }
        Err(e) => Err(e.into()),
    }
}

fn estimate(c: &Common, f: &FilterArgs) -> CliResult<()> {
    let cfg = optional_config(c)?;
    let t = read_points(&f.input)?;
    let seed = seed_of(c, cfg.as_ref());
    let estimator = cfg.as_ref().map_or(Estimator::FilterMean, |x| x.estimator.clone());
    let value = match estimator {
        Estimator::FilterMean => {
            let s = settings(cfg.as_ref(), f, &t)?;
            let mut mean = Vec::new();
            let res = estimate_mean(&t, s.eps, s.delta, s.rho, s.constants, seed).map(|(mu, out)| {
                mean = mu;
                out
            });
            let out = filter_result(res, f.trace.as_deref())?;
            json!({
                "estimator": "filter_mean",
                "mean": mean,
                "epsilon": s.eps,
                "delta": s.delta,
                "rho": s.rho,
                "survivors": out.kept.len(),
                "iterations": out.iterations(),
            })
        }
        Estimator::LearnDist { k_prime } => {
            let s = settings(cfg.as_ref(), f, &t)?;
            let out = run_learn(&t, &s, k_prime, seed, f.trace.as_deref())?;
            json!({
                "estimator": "learn_dist",
                "mean": out.survivors.mean(),
                "survivors": out.kept.len(),
                "iterations": out.iterations(),
            })
        }
        Estimator::RobustPca { gamma } => {
            let eps = f.epsilon.or(cfg.as_ref().map(|x| x.recipe.epsilon)).unwrap_or(0.05);
            let rho = f.rho.or(cfg.as_ref().map(|x| x.recipe.rho)).unwrap_or(0.0);
            let params = PcaParams {
                epsilon: eps,
                gamma: gamma.unwrap_or(0.1),
                rho_bar: rho,
                constants: cfg.as_ref().map(|x| x.constants).unwrap_or_default(),
                seed,
                centering: Centering::None,
                max_iters: None,
            };
            let out = robust_pca(&t, &params)?;
            json!({ "estimator": "robust_pca", "v": out.v, "iterations": out.trace.len() })
        }
        Estimator::SampleMean => json!({ "estimator": "sample_mean", "mean": baselines::sample_mean(&t)? }),
        Estimator::CoordinateMedian => {
            json!({ "estimator": "coordinate_median", "mean": baselines::coordinate_median(&t)? })
        }
        Estimator::GeometricMedian => {
            json!({ "estimator": "geometric_median", "mean": baselines::geometric_median(&t)? })
        }
    };
    emit(c, &value)
}

fn run_learn(t: &PointSet, s: &Settings, k_prime: usize, seed: u64, trace: Option<&Path>) -> CliResult<FilterOutcome> {
    let params = FilterParams {
        epsilon: s.eps,
        delta: s.delta,
        rho: s.rho,
        k_prime,
        constants: s.constants,
        seed,
        max_iters: None,
    };
    filter_result(learn_distribution(t, &params), trace)
}

fn sweep(c: &Common) -> CliResult<()> {
    let cfg = require_config(c, "sweep")?;
    let threads = c
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let csv_path = c
        .out
        .clone()
        .or_else(|| cfg.output.as_ref().and_then(|o| o.csv.clone()).map(PathBuf::from));
    let result = match &csv_path {
        Some(p) => run_sweep(&cfg, threads, BufWriter::new(File::create(p)?))?,
        None => run_sweep(&cfg, threads, std::io::stdout().lock())?,
    };
    let summary = serde_json::to_value(&result).map_err(Error::from)?;
    if let Some(p) = cfg.output.as_ref().and_then(|o| o.json.as_ref()) {
        std::fs::write(p, serde_json::to_string_pretty(&summary).map_err(Error::from)? + "\n")?;
    }
    if csv_path.is_some() && c.format == Format::Json {
        println!("{}", serde_json::to_string_pretty(&summary).map_err(Error::from)?);
    }
    if result.degenerate_runs > 0 {
        eprintln!("{} degenerate runs recorded as NaN", result.degenerate_runs);
    }
    Ok(())
}

fn verify(c: &Common, suite: &str) -> CliResult<()> {
    let suites = Suite::parse_list(suite).ok_or_else(|| Failure::Input(format!("unknown suite `{suite}`")))?;
    let reports: Vec<_> = suites.into_iter().map(run_suite).collect();
    match c.format {
        Format::Json => println!("{}", serde_json::to_string_pretty(&reports).map_err(Error::from)?),
        Format::Csv => {
            println!("suite,check,passed,detail");
            for r in &reports {
                for ch in &r.checks {
                    println!("{},{},{},\"{}\"", r.suite.name(), ch.name, ch.passed, ch.detail.replace('"', "'"));
                }
            }
        }
    }
    let failed: Vec<String> = reports
        .iter()
        .flat_map(|r| {
            r.checks
                .iter()
                .filter(|ch| !ch.passed)
                .map(move |ch| format!("{}/{}", r.suite.name(), ch.name))
        })
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::Verification(failed.join(", ")))
    }
}

fn distlearn(c: &Common, f: &FilterArgs, k_prime: usize, reference: Option<&Path>) -> CliResult<()> {
    let cfg = optional_config(c)?;
    let t = read_points(&f.input)?;
    let seed = seed_of(c, cfg.as_ref());
    let s = settings(cfg.as_ref(), f, &t)?;
    let out = run_learn(&t, &s, k_prime, seed, f.trace.as_deref())?;
    let mut value = json!({
        "survivors": out.kept.len(),
        "iterations": out.iterations(),
        "delta_tilde": out.trace.delta_tilde,
        "threshold": out.trace.threshold,
        "kept": out.kept,
    });
    if let Some(r) = reference {
        let s0 = read_points(r)?;
        let mut rng = rc_core::rng::child(seed, 7);
        let b = sliced_w_p(&out.survivors, &s0, k_prime, 1.0, SlicedOptions::default(), &mut rng)?;
        value["sliced_w1_lower"] = json!(b.lower);
        value["sliced_w1_upper"] = json!(b.upper);
    }
    emit(c, &value)
}

#[allow(clippy::too_many_arguments)]
fn pca(
    c: &Common,
    input: &Path,
    epsilon: Option<f64>,
    gamma: f64,
    rho_bar: f64,
    centering: CenteringArg,
    trace: Option<&Path>,
) -> CliResult<()> {
    let cfg = optional_config(c)?;
    let t = read_points(input)?;
    let eps = epsilon.or(cfg.as_ref().map(|x| x.recipe.epsilon)).unwrap_or(0.05);
    let constants = cfg.as_ref().map(|x| x.constants).unwrap_or_default();
    let centering = match centering {
        CenteringArg::None => Centering::None,
        CenteringArg::Pairs => Centering::PairDifferences,
        CenteringArg::Robust => {
            let q = RateQuery {
                family: RateFamily::Subgaussian,
                epsilon: eps,
                n: Some(t.len() as u64),
                d: t.dim(),
                tau: 0.1,
            };
            Centering::RobustMean {
                delta: rate_formula(&q, constants.c_small)?.max(eps),
            }
        }
    };
    let params = PcaParams {
        epsilon: eps,
        gamma,
        rho_bar,
        constants,
        seed: seed_of(c, cfg.as_ref()),
        centering,
        max_iters: None,
    };
    let out = robust_pca(&t, &params)?;
    let mut value = json!({ "v": out.v, "iterations": out.trace.len() });
    if let Some(cfg) = &cfg {
        if let rc_core::harness::generators::Generator::BoundedCov { sigma, .. } = &cfg.generator {
            let m = PointSet::from_rows(sigma)?.to_matrix();
            value["error_vs_sigma"] = json!(pca_error(&out.v, &m)?);
        }
    }
    if let Some(p) = trace {
        let mut w = BufWriter::new(File::create(p)?);
        for it in &out.trace {
            writeln!(w, "{}", serde_json::to_string(it).map_err(Error::from)?)?;
        }
        w.flush()?;
        value["trace"] = json!(p.display().to_string());
    }
    emit(c, &value)
}
