//! `linfunc` command-line interface.
//!
//! Machine-readable output (CSV or JSON) goes to stdout or `--out`; progress
//! and diagnostics go to stderr. Exit status: 0 success, 1 usage error,
//! 2 failed assertion, 3 runtime error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::LazyLock;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use linfunc::estimators::{
    adaptive_estimator, adaptive_estimator_unknown_sigma, collection_estimator, oracle_estimator, EstimatorConfig,
    Preset, PRACTICAL_ALPHA, PRACTICAL_BETA, THEORETICAL_ALPHA,
};
use linfunc::harness::{
    calibrate_d0, lower_bound_consistency, run_experiment, sigma_impossibility_demo, write_csv, EstimatorKind,
    ExperimentSpec, DEFAULT_REPS, DEFAULT_SEED,
};
use linfunc::rates::{
    is_thresholded_regime, lower_bound_value, omega, phi_l, phi_ratio, psi_star, s_zero, LowerBound,
};
use linfunc::{tailbounds, LowerBoundQuery, ObservationVector, RateQuery};

#[derive(Parser, Debug)]
#[command(name = "linfunc", about = "Adaptive estimation of linear functionals in the sparse Gaussian sequence model")]
#[command(version, long_version = LONG_VERSION.as_str(), disable_help_subcommand = true)]
struct Cli {
    /// Master seed for every random draw (a seed in a spec file takes precedence).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for Monte Carlo work; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rate functions, log factors and Lepski thresholds as CSV.
    Rates(RatesArgs),
    /// Apply an estimator to an observation vector read from JSON.
    Estimate(EstimateArgs),
    /// Run a Monte Carlo experiment grid and write results as CSV.
    Simulate(SimulateArgs),
    /// Numerical audit of the Gaussian tail and testing bounds.
    Tailcheck(TailcheckArgs),
    /// Lower-bound quantities, optionally with the Monte Carlo functional of an estimator.
    LowerBound(LowerBoundArgs),
    /// Risk of the fully adaptive estimator under a Gaussian prior on the signal.
    SigmaDemo(SigmaDemoArgs),
}

#[derive(Args, Debug)]
struct RatesArgs {
    #[arg(long)]
    d: usize,
    /// Sparsity: a single value or an inclusive range `a..b`.
    #[arg(long)]
    s: String,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Preset whose β scales the Lepski thresholds.
    #[arg(long, default_value = "practical")]
    preset: String,
    /// Override β (implies the custom preset).
    #[arg(long)]
    beta: Option<f64>,
}

#[derive(Args, Debug)]
struct EstimateArgs {
    /// JSON file `{"dim": d, "values": [...], "sigma": σ?}`; `-` reads stdin.
    #[arg(long)]
    input: PathBuf,
    /// One of oracle, collection, adaptive, adaptive_unknown_sigma.
    #[arg(long, default_value = "adaptive_unknown_sigma")]
    estimator: String,
    /// Sparsity for the oracle and collection estimators.
    #[arg(long)]
    s: Option<usize>,
    /// Noise level; overrides the `sigma` field of the input.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value = "practical")]
    preset: String,
    /// Print a JSON object with the selection trace instead of plain lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Experiment spec (JSON). Required unless --calibrate-d0 is given.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Exit with status 2 if any row fails its checks or errors.
    #[arg(long)]
    assert: bool,
    /// Run the d₀ calibration scan instead of a spec; prints JSON.
    #[arg(long)]
    calibrate_d0: bool,
    /// Replicates for --calibrate-d0.
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
}

#[derive(Args, Debug)]
struct TailcheckArgs {
    /// Exit with status 2 if any audited bound fails.
    #[arg(long)]
    assert: bool,
}

#[derive(Args, Debug)]
struct LowerBoundArgs {
    #[arg(long)]
    d: usize,
    #[arg(long)]
    a: f64,
    #[arg(long)]
    s: usize,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    /// Also evaluate the two-term functional of this estimator by Monte Carlo.
    #[arg(long)]
    estimator: Option<String>,
    #[arg(long, default_value = "practical")]
    preset: String,
    #[arg(long, default_value_t = DEFAULT_REPS)]
    reps: usize,
    /// Exit with status 2 if the bound misses its floor or the functional misses the bound.
    #[arg(long)]
    assert: bool,
}

#[derive(Args, Debug)]
struct SigmaDemoArgs {
    #[arg(long, default_value_t = 1000)]
    d: usize,
    /// Comma-separated prior scales.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 1.0, 10.0, 100.0])]
    a: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, default_value = "practical")]
    preset: String,
}

static LONG_VERSION: LazyLock<String> = LazyLock::new(long_version);

fn long_version() -> String {
    let theo = EstimatorConfig::theoretical();
    format!(
        "{}\npreset theoretical: alpha={} beta={}\npreset practical: alpha={} beta={}",
        env!("CARGO_PKG_VERSION"),
        THEORETICAL_ALPHA,
        theo.beta,
        PRACTICAL_ALPHA,
        PRACTICAL_BETA
    )
}

/// Failure classes mapped to exit codes.
enum Failure {
    Assertion(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

impl From<linfunc::Error> for Failure {
    fn from(e: linfunc::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Runtime(e.into())
    }
}

type Outcome = Result<(), Failure>;

fn config_for(preset: &str) -> anyhow::Result<EstimatorConfig> {
    let p: Preset = preset.parse()?;
    Ok(EstimatorConfig::from_preset(p)?)
}

fn parse_s_range(text: &str) -> anyhow::Result<Vec<usize>> {
    match text.split_once("..") {
        Some((lo, hi)) => {
            let lo: usize = lo.trim().parse().with_context(|| format!("bad range start in {text:?}"))?;
            let hi = hi.trim().trim_start_matches('=');
            let hi: usize = hi.parse().with_context(|| format!("bad range end in {text:?}"))?;
            if lo > hi {
                bail!("empty sparsity range {text:?}");
            }
            Ok((lo..=hi).collect())
        }
        None => Ok(vec![text.trim().parse().with_context(|| format!("bad sparsity {text:?}"))?]),
    }
}

fn rates(args: &RatesArgs, out: &mut dyn Write) -> Outcome {
    let cfg = match args.beta {
        Some(beta) => EstimatorConfig::custom(PRACTICAL_ALPHA, beta)?,
        None => config_for(&args.preset)?,
    };
    writeln!(out, "d,s,sigma,phi_L,psi_star,phi_ratio,omega,s_zero,thresholded")?;
    for s in parse_s_range(&args.s)? {
        let q = RateQuery::new(args.d, s, args.sigma)?;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            args.d,
            s,
            args.sigma,
            phi_l(&q),
            psi_star(&q),
            phi_ratio(&q),
            omega(&q, cfg.beta),
            s_zero(args.d),
            is_thresholded_regime(args.d, s)
        )?;
    }
    Ok(())
}

fn read_input(path: &Path) -> anyhow::Result<String> {
    if path == Path::new("-") {
        return io::read_to_string(io::stdin()).context("reading stdin");
    }
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn estimate(args: &EstimateArgs, out: &mut dyn Write) -> Outcome {
    let y: ObservationVector = serde_json::from_str(&read_input(&args.input)?).context("parsing observation JSON")?;
    let cfg = config_for(&args.preset)?;
    let kind: EstimatorKind = args.estimator.parse()?;
    let sigma = args.sigma.or(y.sigma_true());
    let need_sigma = || sigma.context("this estimator needs --sigma or a sigma field in the input");
    let need_s = || args.s.context("this estimator needs --s");
    let (estimate, sigma_hat, trace) = match kind {
        EstimatorKind::Oracle => (oracle_estimator(&y, need_s()?, need_sigma()?)?, None, None),
        EstimatorKind::Collection => (collection_estimator(&y, need_s()?, need_sigma()?, &cfg)?, None, None),
        EstimatorKind::Adaptive => {
            let (est, trace) = adaptive_estimator(&y, need_sigma()?, &cfg)?;
            (est, None, Some(trace))
        }
        EstimatorKind::AdaptiveUnknownSigma => {
            let (est, trace, sh) = adaptive_estimator_unknown_sigma(&y, &cfg)?;
            (est, Some(sh), Some(trace))
        }
        EstimatorKind::Zero => (0.0, None, None),
    };
    if args.json {
        let value = serde_json::json!({
            "estimator": kind.as_str(),
            "estimate": estimate,
            "sigma_hat": sigma_hat,
            "s_hat": trace.as_ref().map(|t| t.s_hat),
            "trace": trace,
        });
        writeln!(out, "{value}")?;
    } else {
        writeln!(out, "{estimate}")?;
        if let Some(sh) = sigma_hat {
            writeln!(out, "{sh}")?;
        }
    }
    Ok(())
}

fn open_out(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            fs::File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

/// Reads a spec; its own `seed` wins over the command-line seed, which wins
/// over the built-in default.
fn load_spec(path: &Path, flag_seed: Option<u64>) -> anyhow::Result<ExperimentSpec> {
    let text = read_input(path)?;
    let mut value: serde_json::Value = serde_json::from_str(&text).context("parsing spec JSON")?;
    if let (Some(obj), Some(seed)) = (value.as_object_mut(), flag_seed) {
        obj.entry("seed").or_insert(seed.into());
    }
    Ok(ExperimentSpec::from_json(&value.to_string())?)
}

fn simulate(args: &SimulateArgs, seed: Option<u64>) -> Outcome {
    if args.calibrate_d0 {
        let report = calibrate_d0(args.reps, seed.unwrap_or(DEFAULT_SEED))?;
        let mut out = open_out(args.out.as_deref())?;
        writeln!(out, "{}", serde_json::to_string(&report).context("serialising report")?)?;
        out.flush()?;
        match report.d0 {
            Some(d0) => eprintln!("operational d0 = {d0}"),
            None => eprintln!("no scanned dimension passes every check"),
        }
        if args.assert && report.d0.is_none() {
            return Err(Failure::Assertion("d0 calibration: no dimension passes".into()));
        }
        return Ok(());
    }
    let Some(path) = &args.spec else {
        return Err(Failure::Runtime(anyhow::anyhow!("simulate needs --spec (or --calibrate-d0)")));
    };
    let spec = load_spec(path, seed)?;
    eprintln!("running {} grid points with {} replicates each", spec.expand().len(), spec.reps);
    let rows = run_experiment(&spec);
    let mut out = open_out(args.out.as_deref())?;
    write_csv(&rows, &mut out)?;
    out.flush()?;
    let mut problems = Vec::new();
    for row in &rows {
        let s = row.s.map_or_else(|| "?".to_owned(), |s| s.to_string());
        if let Some(e) = row.error() {
            eprintln!("error at d={} s={s}: {e}", row.d);
            problems.push(format!("d={} s={s}: {e}", row.d));
        }
        for f in row.check_failures() {
            eprintln!("check failed at d={} s={s} ({}): {f}", row.d, row.estimator);
            problems.push(format!("d={} s={s}: {f}", row.d));
        }
    }
    if args.assert && !problems.is_empty() {
        return Err(Failure::Assertion(format!("{} row problems", problems.len())));
    }
    Ok(())
}

fn tailcheck(args: &TailcheckArgs, seed: Option<u64>, out: &mut dyn Write) -> Outcome {
    let rows = tailbounds::audit(seed.unwrap_or(DEFAULT_SEED))?;
    writeln!(out, "check,value,threshold,pass,detail")?;
    for r in &rows {
        let threshold = r.threshold.map(|t| t.to_string()).unwrap_or_default();
        writeln!(out, "{},{},{},{},\"{}\"", r.check, r.value, threshold, r.pass, r.detail.replace('"', "'"))?;
    }
    let failed: Vec<&str> = rows.iter().filter(|r| !r.pass).map(|r| r.check).collect();
    for f in &failed {
        eprintln!("tail audit failed: {f}");
    }
    if args.assert && !failed.is_empty() {
        return Err(Failure::Assertion(failed.join(", ")));
    }
    Ok(())
}

fn lower_bound(args: &LowerBoundArgs, seed: Option<u64>, out: &mut dyn Write) -> Outcome {
    let q = LowerBoundQuery::new(args.d, args.a, args.s, args.sigma)?;
    let lb = lower_bound_value(&q);
    let floor = LowerBound::floor(args.a);
    let chi2_budget = (args.d as f64).powf(0.5 - args.a);
    let mut header = "d,a,s,sigma,bound,floor,bound_ge_floor,q_weight,tau,q_tau,chi2_bound,chi2_budget".to_owned();
    let mut line = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{}",
        args.d,
        args.a,
        args.s,
        args.sigma,
        lb.bound,
        floor,
        lb.bound >= floor,
        lb.q_weight,
        lb.tau,
        lb.q_weight * lb.tau,
        lb.chi2_bound,
        chi2_budget
    );
    let mut failed = lb.bound < floor;
    if let Some(name) = &args.estimator {
        let kind: EstimatorKind = name.parse()?;
        let cfg = config_for(&args.preset)?;
        let r = lower_bound_consistency(&q, kind, &cfg, args.reps, seed.unwrap_or(DEFAULT_SEED))?;
        header.push_str(",estimator,reps,null_term,prior_term,r_hat,std_error,margin");
        line.push_str(&format!(
            ",{},{},{},{},{},{},{}",
            kind.as_str(),
            r.reps,
            r.null_term,
            r.prior_term,
            r.r_hat,
            r.std_error,
            r.margin
        ));
        failed |= r.r_hat + 4.0 * r.std_error < lb.bound;
    }
    writeln!(out, "{header}\n{line}")?;
    if args.assert && failed {
        return Err(Failure::Assertion("lower-bound check failed".into()));
    }
    Ok(())
}

fn sigma_demo(args: &SigmaDemoArgs, seed: Option<u64>, out: &mut dyn Write) -> Outcome {
    let cfg = config_for(&args.preset)?;
    let rows = sigma_impossibility_demo(args.d, &args.a, &cfg, args.reps, seed.unwrap_or(DEFAULT_SEED))?;
    writeln!(out, "d,a,reps,mse,std_error,ratio,y_mean,y_var,y_var_target")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            args.d, r.a, args.reps, r.mse, r.std_error, r.ratio, r.y_mean, r.y_var, r.y_var_target
        )?;
    }
    Ok(())
}

fn dispatch(cli: &Cli) -> Outcome {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Rates(a) => rates(a, &mut out),
        Command::Estimate(a) => estimate(a, &mut out),
        Command::Simulate(a) => {
            drop(out);
            simulate(a, cli.seed)
        }
        Command::Tailcheck(a) => tailcheck(a, cli.seed, &mut out),
        Command::LowerBound(a) => lower_bound(a, cli.seed, &mut out),
        Command::SigmaDemo(a) => sigma_demo(a, cli.seed, &mut out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(3);
        }
    }
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Assertion(msg)) => {
            eprintln!("assertion failed: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
