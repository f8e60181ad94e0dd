use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use disgrem::harness::{self, ExperimentConfig};
use disgrem::Error;

/// Decentralized regularized Newton experiments over simulated gossip
/// networks.
#[derive(Debug, Parser)]
#[command(name = "disgrem", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a Monte-Carlo campaign and write per-trial CSVs plus summary.json.
    Run(ConfigArgs),
    /// Compute and cache the reference optimum of every trial.
    Reference(ConfigArgs),
    /// Run the invariant suite on the first trials of a config.
    Check(ConfigArgs),
    /// Aggregate campaign directories into performance and data profiles.
    Profile(ProfileArgs),
}

#[derive(Debug, Args)]
struct ConfigArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long, short)]
    config: PathBuf,
    /// Override one key, e.g. `--override mc_trials=5`. Repeatable.
    #[arg(long = "override", short = 'o', value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory; defaults to `output_dir` or the config file stem.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ProfileArgs {
    /// Accuracy levels; one profile per level.
    #[arg(long, required = true, value_delimiter = ',')]
    eps: Vec<f64>,
    /// Campaign directories (each holding summary.json and trial CSVs).
    dirs: Vec<PathBuf>,
    /// Also write the profiles as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Instead of profiling, pick a baseline step size for this config by
    /// preliminary runs.
    #[arg(long, requires = "alphas")]
    select_alpha: Option<PathBuf>,
    /// Candidate `alpha_base` values for `--select-alpha`.
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    /// Preliminary runs per candidate.
    #[arg(long, default_value_t = 5)]
    prelim_trials: usize,
}

enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load(args: &ConfigArgs) -> Result<ExperimentConfig, Failure> {
    if !args.config.exists() {
        return Err(Failure::Validation(format!("config file {} does not exist", args.config.display())));
    }
    let mut cfg = ExperimentConfig::load(&args.config, &args.overrides)?;
    if let Some(out) = &args.out {
        cfg.output_dir = Some(out.clone());
    } else if cfg.output_dir.is_none() {
        let stem = args.config.file_stem().unwrap_or_default();
        cfg.output_dir = Some(PathBuf::from(stem));
    }
    Ok(cfg)
}

fn sci(v: Option<f64>) -> String {
    v.map_or("-".into(), |v| format!("{v:.2e}"))
}

fn run(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let dir = cfg.out_dir();
    let summary = harness::run_campaign(&cfg)?;
    println!("{} on {}: {} trials -> {}", cfg.method, cfg.problem, summary.trials.len(), dir.display());
    println!("{:>5} {:>6} {:>6} {:>10} {:>10} {:>12}", "trial", "rho", "iters", "stop", "min relF", "MB");
    for t in &summary.trials {
        println!(
            "{:>5} {:>6.3} {:>6} {:>10} {:>10.2e} {:>12.3}",
            t.trial,
            t.rho,
            t.iterations,
            format!("{:?}", t.stop),
            t.min_rel_f,
            t.bytes_total as f64 / 1e6
        );
    }
    println!(
        "median iterations {}, median min relF {}, diverged {}",
        summary.median_iterations.map_or("-".into(), |v| v.to_string()),
        sci(summary.median_min_rel_f),
        summary.diverged
    );
    for (eps, rate) in &summary.success {
        println!("success at relF <= {eps}: {:.0}%", 100.0 * rate);
    }
    Ok(())
}

fn reference(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let dir = cfg.out_dir();
    let refs = harness::compute_references(&cfg, &dir)?;
    for (t, r) in refs.iter().enumerate() {
        println!(
            "trial {t:>3}: f_ref = {:.15e}  |grad| = {:.2e}  {:?}{}",
            r.f_ref,
            r.grad_norm,
            r.provenance,
            if r.certified { "" } else { " (uncertified)" }
        );
    }
    println!("cached in {}", dir.join("references.json").display());
    Ok(())
}

fn check(args: &ConfigArgs) -> Result<(), Failure> {
    let cfg = load(args)?;
    let report = harness::check(&cfg)?;
    for c in &report.checks {
        println!("{} {:<48} {:>10.2e} {}", if c.passed { "ok  " } else { "FAIL" }, c.name, c.worst, c.detail);
    }
    if report.passed() {
        println!("all {} checks passed", report.checks.len());
        Ok(())
    } else {
        let n = report.checks.iter().filter(|c| !c.passed).count();
        Err(Failure::Runtime(format!("{n} invariant check(s) failed")))
    }
}

fn select_alpha(path: &Path, args: &ProfileArgs) -> Result<(), Failure> {
    let cfg = ExperimentConfig::load(path, &[])?;
    let (cands, best) = harness::select_alpha(&cfg, &args.alphas, args.prelim_trials)?;
    for (i, c) in cands.iter().enumerate() {
        println!(
            "alpha_base {:<8} median min relF {:>10.2e}  diverged {}{}",
            c.alpha_base,
            c.median_min_rel_f,
            c.diverged,
            if i == best { "  <- selected" } else { "" }
        );
    }
    Ok(())
}

fn profile(args: &ProfileArgs) -> Result<(), Failure> {
    if let Some(path) = &args.select_alpha {
        return select_alpha(path, args);
    }
    if args.dirs.is_empty() {
        return Err(Failure::Validation("profile needs at least one campaign directory".into()));
    }
    if let Some(bad) = args.eps.iter().find(|e| !(**e > 0.0)) {
        return Err(Failure::Validation(format!("accuracy level must be positive, got {bad}")));
    }
    let runs = args
        .dirs
        .iter()
        .map(|d| harness::load_solver_runs(d).map_err(|e| Failure::Runtime(format!("{}: {e}", d.display()))))
        .collect::<Result<Vec<_>, _>>()?;
    let tables: Vec<_> = args.eps.iter().map(|&e| harness::build_profiles(&runs, e)).collect();
    for t in &tables {
        println!("{}", t.render());
    }
    if let Some(path) = &args.json {
        let text = serde_json::to_string_pretty(&tables).map_err(|e| Failure::Runtime(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(a) => run(a),
        Command::Reference(a) => reference(a),
        Command::Check(a) => check(a),
        Command::Profile(a) => profile(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
