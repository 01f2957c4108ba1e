use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use symnorm::estimator::{exact_norm, one_pass_symmetric_norm, tradeoff_estimate, EstimatorConfig, MmcInput, TradeoffConfig};
use symnorm::harness::acceptance::{run_acceptance_suite, AcceptanceOptions};
use symnorm::harness::experiment::{run_experiment, ExperimentConfig, ORACLE_CAP};
use symnorm::levels::{estimate_levels_two_pass, level1, one_pass_lab, LabScale, LabTargets, LevelConstants};
use symnorm::stream::{read_stream, FrequencyVector, StreamUpdate};
use symnorm::{compute_mmc, exact_level_vector, NormSpec, Norm64};

#[derive(Parser)]
#[command(name = "symnorm", version, about = "Symmetric-norm estimation over turnstile streams")]
struct Cli {
    /// Root seed; SYMNORM_SEED takes precedence when set.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Profile a norm's concentration over a grid of dimensions.
    Profile(ProfileArgs),
    /// Recover the level vector of a stream.
    Levels(LevelsArgs),
    /// One-pass (1±ε) estimate of a norm.
    Estimate(EstimateArgs),
    /// Space-for-accuracy estimate with approximation factor D.
    Tradeoff(TradeoffArgs),
    /// Run an experiment config and write JSON and CSV reports.
    Bench(BenchArgs),
    /// Run the acceptance criteria.
    Accept(AcceptArgs),
}

#[derive(Args)]
struct StreamArgs {
    /// File of `<index> <delta>` lines.
    #[arg(long)]
    stream: PathBuf,
    /// Dimension; defaults to the largest index plus one.
    #[arg(long)]
    n: Option<usize>,
    /// Compare against the exact vector.
    #[arg(long)]
    oracle: bool,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProfileArgs {
    /// Norm record, inline JSON or a file.
    #[arg(long)]
    norm: String,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Number of grid points.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LevelsArgs {
    #[command(flatten)]
    input: StreamArgs,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 0.06)]
    beta: f64,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long)]
    delta: Option<f64>,
    /// Fixed base offset x for `1 + xγ`.
    #[arg(long)]
    x: Option<f64>,
    /// Use the exact second pass at this fixed base instead.
    #[arg(long)]
    two_pass_base: Option<f64>,
    /// Lab factors or absolute targets, inline JSON or a file.
    #[arg(long)]
    lab_scale: Option<String>,
    /// Level constants, inline JSON or a file.
    #[arg(long)]
    constants: Option<String>,
}

#[derive(Args)]
struct EstimateArgs {
    #[command(flatten)]
    input: StreamArgs,
    #[arg(long)]
    norm: String,
    #[arg(long, default_value_t = 0.2)]
    eps: f64,
    #[arg(long)]
    delta: Option<f64>,
    /// Known bound on the concentration constant; otherwise the norm is profiled.
    #[arg(long)]
    mmc: Option<f64>,
    #[arg(long)]
    lab_scale: Option<String>,
    /// Full estimator config, inline JSON or a file; flags above fill its gaps.
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct TradeoffArgs {
    #[command(flatten)]
    input: StreamArgs,
    #[arg(long)]
    norm: String,
    #[arg(long = "D", alias = "d")]
    d: f64,
    #[arg(long)]
    mmc: Option<f64>,
    #[arg(long)]
    lab_scale: Option<String>,
    #[arg(long)]
    config: Option<String>,
}

#[derive(Args)]
struct BenchArgs {
    /// Experiment config file.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "bench-out")]
    out_dir: PathBuf,
    /// Override the config's trial count.
    #[arg(long)]
    trials: Option<usize>,
    /// Skip the exact oracle.
    #[arg(long)]
    no_oracle: bool,
}

#[derive(Args)]
struct AcceptArgs {
    #[arg(long, default_value = "acceptance-out")]
    out_dir: PathBuf,
    /// Reduced trial counts; the status is marked "smoke".
    #[arg(long)]
    quick: bool,
    /// Level constants to use instead of the defaults, inline JSON or a file.
    #[arg(long)]
    constants: Option<String>,
}

fn root_seed(flag: Option<u64>) -> Result<u64> {
    match std::env::var("SYMNORM_SEED") {
        Ok(s) => s.trim().parse().with_context(|| format!("SYMNORM_SEED={s:?} is not an integer")),
        Err(_) => Ok(flag.unwrap_or(0)),
    }
}

/// Inline JSON when the text starts with `{`, otherwise a path to read.
fn json_arg(text: &str) -> Result<Value> {
    let body = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        std::fs::read_to_string(text).with_context(|| format!("reading {text}"))?
    };
    serde_json::from_str(&body).with_context(|| format!("parsing JSON from {text}"))
}

fn norm_arg(text: &str) -> Result<NormSpec> {
    Ok(NormSpec::from_value(json_arg(text)?)?)
}

enum Lab {
    Factors(LabScale),
    Targets(LabTargets),
}

fn lab_arg(text: Option<&str>) -> Result<Lab> {
    let Some(text) = text else {
        return Ok(Lab::Factors(LabScale::default()));
    };
    let v = json_arg(text)?;
    if v.get("table_beta").is_some() {
        Ok(Lab::Targets(serde_json::from_value(v)?))
    } else {
        Ok(Lab::Factors(serde_json::from_value(v)?))
    }
}

struct Loaded {
    updates: Vec<StreamUpdate>,
    n: usize,
}

fn load(args: &StreamArgs) -> Result<Loaded> {
    let file = File::open(&args.stream).with_context(|| format!("opening {}", args.stream.display()))?;
    let updates = read_stream(BufReader::new(file))?;
    let n = match args.n {
        Some(n) => n,
        None => updates.iter().map(|u| u.index as usize + 1).max().unwrap_or(1).max(2),
    };
    Ok(Loaded { updates, n })
}

fn exact_vector(args: &StreamArgs, s: &Loaded) -> Result<Option<FrequencyVector>> {
    if !args.oracle {
        return Ok(None);
    }
    if s.n > ORACLE_CAP {
        bail!("the exact oracle caps at n ≤ {ORACLE_CAP}");
    }
    let mut v = FrequencyVector::new(s.n);
    v.apply_all(&s.updates)?;
    Ok(Some(v))
}

fn emit(report: &Value, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn mmc_input(l: &Norm64, n: usize, bound: Option<f64>, seed: u64) -> Result<MmcInput> {
    Ok(match bound {
        Some(b) => MmcInput::bound(b),
        None => MmcInput::from_profile(&compute_mmc(l.as_ref(), n, None, 1000, seed)?),
    })
}

fn profile(args: ProfileArgs, seed: u64) -> Result<()> {
    let spec = norm_arg(&args.norm)?;
    let l: Norm64 = spec.build(args.n)?;
    let p = compute_mmc(l.as_ref(), args.n, args.grid, args.samples, seed)?;
    if let Some(path) = &args.csv {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["k", "median", "max", "mc", "heuristic"])?;
        for pt in &p.points {
            w.write_record([
                pt.k.to_string(),
                pt.median.to_string(),
                pt.max.to_string(),
                pt.mc.to_string(),
                pt.heuristic.to_string(),
            ])?;
        }
        w.flush()?;
    }
    emit(&serde_json::to_value(&p)?, args.out.as_deref())
}

fn levels(args: LevelsArgs, seed: u64) -> Result<()> {
    let s = load(&args.input)?;
    let exact = exact_vector(&args.input, &s)?;
    let delta = args.delta.unwrap_or(0.01 * args.eps / s.n as f64);
    let constants: LevelConstants = match &args.constants {
        Some(c) => serde_json::from_value(json_arg(c)?)?,
        None => LevelConstants::default(),
    };
    let lab = match lab_arg(args.lab_scale.as_deref())? {
        Lab::Factors(f) => f,
        Lab::Targets(t) => one_pass_lab(s.n, args.gamma, args.beta, args.eps, delta, args.x.unwrap_or(0.75), &constants, &t)?,
    };
    let est = match args.two_pass_base {
        Some(base) => estimate_levels_two_pass(&s.updates, s.n, base, args.beta, args.eps, delta, &constants, &lab, seed)?,
        None => level1(&s.updates, s.n, args.gamma, args.beta, args.eps, delta, args.x, &constants, &lab, seed)?,
    };
    let exact_counts = match &exact {
        Some(v) => Some(exact_level_vector(v, est.base)?.counts),
        None => None,
    };
    emit(
        &json!({
            "n": s.n,
            "seed": seed,
            "base": est.base,
            "counts": est.counts,
            "exact_counts": exact_counts,
            "counters": est.counters,
            "levels": est,
        }),
        args.input.out.as_deref(),
    )
}

fn estimate(args: EstimateArgs, seed: u64) -> Result<()> {
    let s = load(&args.input)?;
    let spec = norm_arg(&args.norm)?;
    let l: Norm64 = spec.build(s.n)?;
    let mut cfg: EstimatorConfig = match &args.config {
        Some(c) => serde_json::from_value(json_arg(c)?)?,
        None => EstimatorConfig::new(args.eps, MmcInput::default()),
    };
    if args.config.is_none() {
        cfg.delta = args.delta;
    }
    if cfg.mmc.raw().is_err() || args.mmc.is_some() {
        cfg.mmc = mmc_input(&l, s.n, args.mmc, seed)?;
    }
    match lab_arg(args.lab_scale.as_deref())? {
        Lab::Factors(f) if args.lab_scale.is_some() => cfg.lab = f,
        Lab::Factors(_) => {}
        Lab::Targets(t) => cfg = cfg.with_lab_targets(s.n, &t)?,
    }
    let est = one_pass_symmetric_norm(&s.updates, l.as_ref(), &cfg, seed)?;
    let exact = exact_vector(&args.input, &s)?.map(|v| exact_norm(&v, l.as_ref()));
    emit(
        &json!({
            "estimate": est.estimate,
            "exact": exact,
            "ratio": exact.map(|x| est.estimate / x),
            "norm": spec,
            "n": s.n,
            "seed": seed,
            "config": cfg,
            "parameters": est.params,
            "truncated": est.truncated,
            "diagnostics": {
                "base": est.levels.base,
                "counts": est.levels.counts,
                "counters": est.levels.counters,
                "maps": est.levels.maps,
                "discarded_maps": est.levels.discarded_maps,
                "levels": est.levels.diagnostics,
            },
        }),
        args.input.out.as_deref(),
    )
}

fn tradeoff(args: TradeoffArgs, seed: u64) -> Result<()> {
    let s = load(&args.input)?;
    let spec = norm_arg(&args.norm)?;
    let l: Norm64 = spec.build(s.n)?;
    let mut cfg: TradeoffConfig = match &args.config {
        Some(c) => serde_json::from_value(json_arg(c)?)?,
        None => TradeoffConfig::new(args.d, MmcInput::default()),
    };
    cfg.d = args.d;
    if cfg.mmc.raw().is_err() || args.mmc.is_some() {
        cfg.mmc = mmc_input(&l, s.n, args.mmc, seed)?;
    }
    match lab_arg(args.lab_scale.as_deref())? {
        Lab::Factors(f) if args.lab_scale.is_some() => cfg.lab = f,
        Lab::Factors(_) => {}
        Lab::Targets(t) => cfg = cfg.with_lab_targets(s.n, &t)?,
    }
    let est = tradeoff_estimate(&s.updates, l.as_ref(), &cfg, seed)?;
    let exact = exact_vector(&args.input, &s)?.map(|v| exact_norm(&v, l.as_ref()));
    emit(
        &json!({
            "estimate": est.recentred,
            "raw": est.raw,
            "exact": exact,
            "ratio": exact.map(|x| est.recentred / x),
            "norm": spec,
            "n": s.n,
            "seed": seed,
            "config": cfg,
            "sketch": {
                "beta": est.beta,
                "beta_prime": est.beta_prime,
                "counters": est.counters,
                "shape": est.levels.shape,
            },
            "truncated": est.truncated,
            "diagnostics": {
                "base": est.levels.base,
                "counts": est.levels.counts,
                "half_support_slack": est.half_support_slack,
                "levels": est.levels.diagnostics,
            },
        }),
        args.input.out.as_deref(),
    )
}

fn bench(args: BenchArgs, seed_flag: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(&args.config).with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if std::env::var("SYMNORM_SEED").is_ok() || seed_flag.is_some() {
        cfg.seed = root_seed(seed_flag)?;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if args.no_oracle {
        cfg.oracle = false;
    }
    if let Some(file) = &cfg.stream_file {
        if file.is_relative() {
            let base = args.config.parent().unwrap_or(Path::new("."));
            cfg.stream_file = Some(base.join(file));
        }
    }
    let report = run_experiment(&cfg)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let json_path = args.out_dir.join("report.json");
    let csv_path = args.out_dir.join("trials.csv");
    std::fs::write(&json_path, report.to_json()? + "\n")?;
    report.write_csv(BufWriter::new(File::create(&csv_path)?))?;
    let a = &report.aggregate;
    let mut out = std::io::stdout().lock();
    writeln!(
        out,
        "{}: {} trials, success rate {}, geomean ratio {}, counters {}, {:.2}s",
        if cfg.name.is_empty() { "experiment" } else { &cfg.name },
        a.trials,
        a.success_rate.map_or("n/a".into(), |r| format!("{r:.3}")),
        a.geomean_ratio.map_or("n/a".into(), |r| format!("{r:.4}")),
        a.counters,
        a.wall_time_s
    )?;
    writeln!(out, "wrote {} and {}", json_path.display(), csv_path.display())?;
    Ok(())
}

fn accept(args: AcceptArgs, seed: u64) -> Result<bool> {
    let constants = match &args.constants {
        Some(c) => Some(serde_json::from_value(json_arg(c)?)?),
        None => None,
    };
    let opts = AcceptanceOptions {
        quick: args.quick,
        seed,
        constants,
    };
    let (status, path) = run_acceptance_suite(&args.out_dir, &opts)?;
    for c in &status.criteria {
        println!("{}", c.line());
    }
    println!("{} ({}) -> {}", if status.passed { "all passed" } else { "FAILED" }, status.mode, path.display());
    Ok(status.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<bool> {
        let seed = root_seed(cli.seed)?;
        match cli.command {
            Command::Profile(a) => profile(a, seed)?,
            Command::Levels(a) => levels(a, seed)?,
            Command::Estimate(a) => estimate(a, seed)?,
            Command::Tradeoff(a) => tradeoff(a, seed)?,
            Command::Bench(a) => bench(a, cli.seed)?,
            Command::Accept(a) => return accept(a, seed),
        }
        Ok(true)
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
