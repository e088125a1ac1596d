//! `mtlb`: simulate FDR/FNR tradeoff lower bounds and compare them with
//! Benjamini-Hochberg.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 flag/config error,
//! 3 verify-suite failure.

mod verify;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use mtlb::bounds;
use mtlb::frontier::{self, FrontierResult, GridSpec};
use mtlb::model::{build_layout, sample_batch, ModelConfig, ModelSpec};
use mtlb::procedures::{estimate_fdr_fnr, BhRule};
use mtlb::proxies::{proxy_set, theorem_bounds, ProxyConfig};
use mtlb::Error;

#[derive(Parser)]
#[command(
    name = "mtlb",
    version,
    about = "Lower bounds on FDR/FNR tradeoffs in multiple testing, with BH comparison curves"
)]
struct Cli {
    /// Worker threads (default: all cores). Outputs are byte-identical
    /// for any value.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw one model replicate and emit it as CSV
    Sample(SampleArgs),
    /// Compute the four FDP*/FNP* proxies and their lower bounds
    Proxies(ProxiesArgs),
    /// Estimate BH's realized FDR/FNR on a model
    Bh(BhArgs),
    /// Evaluate a closed-form feasibility bound (corollaries 1-5)
    Bounds(BoundsArgs),
    /// Lower-bound curve vs BH curve over an FDR grid, with calibration
    Frontier(FrontierArgs),
    /// Run the lemma-check suite and print a pass/fail table
    Verify(VerifyArgs),
}

/// Flat model flags, mirroring the JSON config keys.
#[derive(Args, Clone)]
struct ModelArgs {
    /// One of: iid_location, iid_scale, spiked, grouped, lehmann
    #[arg(long)]
    family: String,
    /// Number of hypotheses
    #[arg(long)]
    n: usize,
    /// Number of signals
    #[arg(long)]
    m: usize,
    /// Location shift (iid_location, spiked, grouped)
    #[arg(long)]
    mu: Option<f64>,
    /// Scale factor >= 1 (iid_scale)
    #[arg(long)]
    sigma: Option<f64>,
    /// Lehmann exponent in (0,1)
    #[arg(long)]
    gamma: Option<f64>,
    /// Correlation within nulls (spiked)
    #[arg(long)]
    rho0: Option<f64>,
    /// Correlation within signals (spiked)
    #[arg(long)]
    rho1: Option<f64>,
    /// Cross correlation (spiked); at most min(rho0, rho1)
    #[arg(long)]
    rhoc: Option<f64>,
    /// Sign of the cross-correlation block, +1 or -1 (spiked)
    #[arg(long)]
    cross_sign: Option<i8>,
    /// Nulls coupled to each signal (grouped)
    #[arg(long)]
    group_size: Option<usize>,
}

impl ModelArgs {
    fn to_spec(&self) -> Result<ModelSpec, Error> {
        ModelConfig {
            family: self.family.clone(),
            n: self.n,
            m: self.m,
            mu: self.mu,
            sigma: self.sigma,
            gamma: self.gamma,
            rho0: self.rho0,
            rho1: self.rho1,
            rhoc: self.rhoc,
            cross_sign: self.cross_sign,
            group_size: self.group_size,
        }
        .try_into()
    }
}

#[derive(Args)]
struct SampleArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Master seed (required; there is no wall-clock default)
    #[arg(long)]
    seed: u64,
    /// Replicate index to draw
    #[arg(long, default_value_t = 0)]
    replicate: u64,
    /// Output path (stdout if omitted)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProxiesArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// Target FDR
    #[arg(long)]
    alpha: f64,
    /// Target FNR
    #[arg(long)]
    beta: f64,
    /// Analysis parameter in (2 max(alpha, beta), 1/3)
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    #[arg(long, default_value_t = 1000)]
    replicates: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BhArgs {
    #[command(flatten)]
    model: ModelArgs,
    /// BH level
    #[arg(long)]
    q: f64,
    #[arg(long, default_value_t = 400)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// 1 = iid location, 2 = scale, 3 = spiked, 4 = grouped, 5 = Lehmann
    #[arg(long)]
    corollary: u8,
    /// Sparsity exponent (corollaries 1, 3, 4)
    #[arg(long)]
    s: Option<f64>,
    /// Signal exponent (corollaries 1, 3, 4)
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    kappa_alpha: Option<f64>,
    #[arg(long)]
    kappa_beta: Option<f64>,
    /// Within-null correlation (corollary 3)
    #[arg(long)]
    rho0: Option<f64>,
    /// Within-signal correlation (corollary 3)
    #[arg(long)]
    rho1: Option<f64>,
    /// Group exponent (corollary 4)
    #[arg(long)]
    t: Option<f64>,
    /// Effective sparsity log(n/m)/log(n) (corollary 2)
    #[arg(long)]
    s_n: Option<f64>,
    /// FDR level (corollaries 2, 5)
    #[arg(long)]
    alpha: Option<f64>,
    /// FNR level (corollaries 2, 5)
    #[arg(long)]
    beta: Option<f64>,
    /// Signal count (corollaries 2, 5)
    #[arg(long)]
    m: Option<usize>,
    /// Hypothesis count (corollary 5)
    #[arg(long)]
    n: Option<usize>,
    #[arg(long, default_value_t = 0.25)]
    epsilon: f64,
    /// Slowly-varying factor of corollary 2 (default 0)
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Args)]
struct FrontierArgs {
    /// JSON config: {"models": [...], "epsilon": .., "grid_b": ..,
    /// "replicates": .., "trials": .., "seed": ..}
    #[arg(long)]
    config: PathBuf,
    /// Grid size B (overrides the config)
    #[arg(long)]
    grid_b: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// Replicates for the lower-bound batch
    #[arg(long)]
    replicates: Option<usize>,
    /// Trials for the BH curve
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    seed: u64,
}

/// On-disk frontier run configuration; flags override file values.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrontierFileConfig {
    models: Vec<ModelSpec>,
    epsilon: Option<f64>,
    grid_b: Option<usize>,
    replicates: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .is_err()
        {
            eprintln!("error: could not configure {threads} worker threads");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

enum CliError {
    /// Bad flags or config: exit 2.
    Usage(String),
    /// Failure while computing or writing: exit 1.
    Runtime(String),
}

/// Errors raised while assembling inputs are usage errors.
fn usage<T>(r: Result<T, Error>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

/// Errors raised mid-computation are runtime errors.
fn runtime<T>(r: Result<T, Error>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Runtime(e.to_string()))
}

fn run(command: Command) -> Result<ExitCode, CliError> {
    match command {
        Command::Sample(args) => cmd_sample(args),
        Command::Proxies(args) => cmd_proxies(args),
        Command::Bh(args) => cmd_bh(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::Frontier(args) => cmd_frontier(args),
        Command::Verify(args) => verify::cmd_verify(args.seed),
    }
}

fn write_output(text: &str, out: Option<&Path>) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn to_pretty_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    serde_json::to_string_pretty(value)
        .map(|mut s| {
            s.push('\n');
            s
        })
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))
}

fn cmd_sample(args: SampleArgs) -> Result<ExitCode, CliError> {
    let spec = usage(args.model.to_spec())?;
    let layout = usage(build_layout(&spec))?;
    let batch = runtime(sample_batch(&spec, &layout, args.replicate, args.seed))?;
    let mut group_of = vec![None; layout.n()];
    if let Some(groups) = layout.groups() {
        for (g, members) in groups.iter().enumerate() {
            group_of[layout.signals()[g]] = Some(g);
            for &i in members {
                group_of[i] = Some(g);
            }
        }
    }
    let mut text = String::from("index,hypothesis,group,w,x\n");
    for (i, group) in group_of.iter().enumerate() {
        let hypothesis = if layout.is_signal(i) {
            "signal"
        } else {
            "null"
        };
        let group = group.map_or(String::new(), |g| g.to_string());
        text.push_str(&format!(
            "{i},{hypothesis},{group},{},{}\n",
            batch.w[i], batch.x[i]
        ));
    }
    write_output(&text, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ProxiesOutput {
    k_minus: usize,
    k_plus: usize,
    ell_minus: usize,
    ell_plus: usize,
    fdp_minus: f64,
    fnp_minus: f64,
    fdp_plus: f64,
    fnp_plus: f64,
    epsilon: f64,
    replicates: usize,
    seed: u64,
    degenerate: bool,
    alpha_lb: f64,
    beta_lb: f64,
    max_lb: f64,
    config: serde_json::Value,
}

fn cmd_proxies(args: ProxiesArgs) -> Result<ExitCode, CliError> {
    let spec = usage(args.model.to_spec())?;
    let layout = usage(build_layout(&spec))?;
    let config = ProxyConfig {
        alpha: args.alpha,
        beta: args.beta,
        epsilon: args.epsilon,
        replicates: args.replicates,
        master_seed: args.seed,
    };
    usage(config.validate())?;
    let p = runtime(proxy_set(&spec, &layout, &config))?;
    let b = runtime(theorem_bounds(&p, args.epsilon))?;
    let out = ProxiesOutput {
        k_minus: p.k_minus,
        k_plus: p.k_plus,
        ell_minus: p.ell_minus,
        ell_plus: p.ell_plus,
        fdp_minus: p.fdp_minus,
        fnp_minus: p.fnp_minus,
        fdp_plus: p.fdp_plus,
        fnp_plus: p.fnp_plus,
        epsilon: args.epsilon,
        replicates: args.replicates,
        seed: args.seed,
        degenerate: p.degenerate,
        alpha_lb: b.alpha_lb,
        beta_lb: b.beta_lb,
        max_lb: b.max_lb,
        config: resolved_model_config(&spec, &[("alpha", args.alpha), ("beta", args.beta)])?,
    };
    write_output(&to_pretty_json(&out)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct BhOutput {
    fdr: f64,
    fnr: f64,
    fdr_se: f64,
    fnr_se: f64,
    mean_k: f64,
    trials: usize,
    seed: u64,
    config: serde_json::Value,
}

fn cmd_bh(args: BhArgs) -> Result<ExitCode, CliError> {
    let spec = usage(args.model.to_spec())?;
    if !(args.q > 0.0 && args.q < 1.0) {
        return Err(CliError::Usage(format!(
            "key `q` must lie in (0, 1), got {}",
            args.q
        )));
    }
    let layout = usage(build_layout(&spec))?;
    let rates = runtime(estimate_fdr_fnr(
        &spec,
        &layout,
        &BhRule { q: args.q },
        args.trials,
        args.seed,
    ))?;
    let out = BhOutput {
        fdr: rates.fdr,
        fnr: rates.fnr,
        fdr_se: rates.fdr_se,
        fnr_se: rates.fnr_se,
        mean_k: rates.mean_k,
        trials: rates.trials,
        seed: args.seed,
        config: resolved_model_config(&spec, &[("q", args.q)])?,
    };
    write_output(&to_pretty_json(&out)?, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

/// The model config plus the run parameters, for provenance.
fn resolved_model_config(
    spec: &ModelSpec,
    extras: &[(&str, f64)],
) -> Result<serde_json::Value, CliError> {
    let mut value = serde_json::to_value(spec)
        .map_err(|e| CliError::Runtime(format!("serialization failed: {e}")))?;
    if let serde_json::Value::Object(map) = &mut value {
        for (key, v) in extras {
            map.insert((*key).to_string(), serde_json::json!(v));
        }
    }
    Ok(value)
}

fn require<T: Copy>(field: Option<T>, key: &str, corollary: u8) -> Result<T, CliError> {
    field.ok_or_else(|| CliError::Usage(format!("corollary {corollary} requires key `{key}`")))
}

fn cmd_bounds(args: BoundsArgs) -> Result<ExitCode, CliError> {
    let c = args.corollary;
    let value = match c {
        1 | 3 | 4 => {
            let e = usage(bounds::RateExponents::new(
                require(args.s, "s", c)?,
                require(args.r, "r", c)?,
                require(args.kappa_alpha, "kappa_alpha", c)?,
                require(args.kappa_beta, "kappa_beta", c)?,
            ))?;
            match c {
                1 => {
                    let f = bounds::iid_location_feasible(&e);
                    let ks = usage(bounds::kappa_star(e.s, e.r))?;
                    serde_json::json!({
                        "corollary": 1, "feasible": f.feasible, "slack": f.slack,
                        "kappa_star": ks, "exponents": e,
                    })
                }
                3 => {
                    let f = usage(bounds::spiked_feasible(
                        &e,
                        require(args.rho0, "rho0", c)?,
                        require(args.rho1, "rho1", c)?,
                    ))?;
                    serde_json::json!({
                        "corollary": 3, "feasible": f.feasible, "slack": f.slack,
                        "rho0": args.rho0, "rho1": args.rho1, "exponents": e,
                    })
                }
                _ => {
                    let f = usage(bounds::grouped_feasible(&e, require(args.t, "t", c)?))?;
                    serde_json::json!({
                        "corollary": 4, "feasible": f.feasible, "slack": f.slack,
                        "t": args.t, "exponents": e,
                    })
                }
            }
        }
        2 => {
            let sigma = usage(bounds::scale_sigma_lower(
                require(args.s_n, "s_n", c)?,
                require(args.alpha, "alpha", c)?,
                require(args.beta, "beta", c)?,
                require(args.m, "m", c)?,
                args.epsilon,
                args.eta,
            ))?;
            serde_json::json!({
                "corollary": 2, "sigma_lower": sigma,
                "s_n": args.s_n, "alpha": args.alpha, "beta": args.beta,
                "m": args.m, "epsilon": args.epsilon, "eta": args.eta,
            })
        }
        5 => {
            let b = usage(bounds::lehmann_gamma_lower(
                require(args.alpha, "alpha", c)?,
                require(args.beta, "beta", c)?,
                args.epsilon,
                require(args.m, "m", c)?,
                require(args.n, "n", c)?,
            ))?;
            serde_json::json!({
                "corollary": 5, "t_param": b.t_param, "inv_gamma_lb": b.inv_gamma_lb,
                "alpha": args.alpha, "beta": args.beta, "m": args.m, "n": args.n,
                "epsilon": args.epsilon,
            })
        }
        other => {
            return Err(CliError::Usage(format!(
                "key `corollary` must be 1..=5, got {other}"
            )))
        }
    };
    let text = to_pretty_json(&value)?;
    write_output(&text, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_frontier(args: FrontierArgs) -> Result<ExitCode, CliError> {
    let raw = fs::read_to_string(&args.config)
        .map_err(|e| CliError::Usage(format!("reading config {}: {e}", args.config.display())))?;
    let file: FrontierFileConfig = serde_json::from_str(&raw)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", args.config.display())))?;
    if file.models.is_empty() {
        return Err(CliError::Usage("config key `models` is empty".into()));
    }
    let epsilon = args.epsilon.or(file.epsilon).unwrap_or(0.25);
    let grid_b = args.grid_b.or(file.grid_b).unwrap_or(25);
    let replicates = args.replicates.or(file.replicates).unwrap_or(1000);
    let trials = args.trials.or(file.trials).unwrap_or(400);
    let seed = args.seed.or(file.seed).ok_or_else(|| {
        CliError::Usage("missing key `seed`: pass --seed or set it in the config".into())
    })?;
    let grid_spec = GridSpec { b: grid_b, epsilon };
    usage(grid_spec.validate())?;
    for spec in &file.models {
        usage(spec.validate())?;
    }
    let result: FrontierResult = runtime(frontier::run_frontier(
        &file.models,
        &grid_spec,
        replicates,
        trials,
        seed,
    ))?;
    let text = match args.format {
        OutputFormat::Csv => {
            let mut buf = Vec::new();
            runtime(frontier::write_csv(&result, &mut buf))?;
            String::from_utf8(buf).expect("csv is utf-8")
        }
        OutputFormat::Json => {
            let mut s = runtime(frontier::to_json(&result))?;
            s.push('\n');
            s
        }
    };
    write_output(&text, args.out.as_deref())?;
    Ok(ExitCode::SUCCESS)
}
