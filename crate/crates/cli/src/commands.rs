use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use besteffort::config::{parse_config, AppConfig};
use besteffort::eval::{
    hardware_utility, per_rate, run_eval, scenario, selection_distribution, threshold_counts, trial_band,
    windowed, write_metrics_csv, write_summary_csv, EvalRun, Policy, Scenario, ScenarioSummary,
    TABLE_THRESHOLDS, WINDOW,
};
use besteffort::policy::{load_checkpoint, save_checkpoint, QNetwork};
use besteffort::rng::derive_seed;
use besteffort::trainer::{run_training_from, save_train_log, TrainConfig};
use besteffort::workload::{read_trace, write_trace, WorkloadTrace};

/// Learned best-effort LLM serving: simulate, train a router, evaluate.
#[derive(Debug, Parser)]
#[command(name = "besteffort", version)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate workload traces for a scenario.
    Gen(Common),
    /// Train a router from scratch.
    Train(TrainArgs),
    /// Continue training a checkpoint, typically under a new reward config.
    Finetune(FinetuneArgs),
    /// Evaluate one policy on a scenario and write per-request metrics.
    Eval(EvalArgs),
    /// Compare a policy with every static baseline on a scenario.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct Common {
    /// Config file, or `default` for the built-in system.
    #[arg(long, default_value = "default")]
    config: PathBuf,
    /// Global seed; every component seed is derived from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario name; defaults to the config's scenario section.
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory; defaults to the config's out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of trials; defaults to the config's scenario section.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Also write a checkpoint every N steps.
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
}

#[derive(Debug, Args)]
struct FinetuneArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint to start from.
    #[arg(long)]
    policy: PathBuf,
    #[arg(long, default_value_t = TrainConfig::fine_tune_defaults().total_iterations)]
    iterations: u64,
    #[arg(long, default_value_t = TrainConfig::fine_tune_defaults().epsilon_start)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0)]
    checkpoint_every: u64,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    /// A checkpoint path or `static:<tier index or name>`.
    #[arg(long)]
    policy: String,
    /// Replay this trace instead of generating one per trial.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    #[command(flatten)]
    common: Common,
    /// Checkpoint of the learned router; baselines only when omitted.
    #[arg(long)]
    policy: Option<PathBuf>,
}

/// A malformed argument, reported with exit status 2.
#[derive(Debug)]
pub struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

struct Context_ {
    config: AppConfig,
    seed: u64,
    scenario: Scenario,
    out: PathBuf,
    trials: usize,
}

fn load(common: &Common) -> Result<Context_> {
    let loaded = parse_config(&common.config)?;
    for w in &loaded.warnings {
        eprintln!("warning: {w}");
    }
    let config = loaded.config;
    let name = common.scenario.clone().unwrap_or_else(|| config.scenario.name.clone());
    let scenario = scenario(&name, &config.cluster, &config.reward)?;
    let out = common.out.clone().unwrap_or_else(|| config.out_dir.clone());
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let trials = common.trials.unwrap_or(config.scenario.trials);
    if trials == 0 {
        return Err(UsageError("--trials must be >= 1".into()).into());
    }
    Ok(Context_ { config, seed: common.seed, scenario, out, trials })
}

fn trace_seed(ctx: &Context_, trial: usize) -> u64 {
    derive_seed(ctx.seed, &format!("trace/{}/{trial}", ctx.scenario.name))
}

fn traces(ctx: &Context_, given: Option<&Path>) -> Result<Vec<WorkloadTrace>> {
    if let Some(path) = given {
        return Ok(vec![read_trace(path, ctx.config.reward.num_tasks())?]);
    }
    (0..ctx.trials)
        .into_par_iter()
        .map(|t| Ok(ctx.scenario.generate(trace_seed(ctx, t))?))
        .collect()
}

fn parse_policy(spec: &str, config: &AppConfig) -> Result<Policy> {
    if let Some(tier) = spec.strip_prefix("static:") {
        let tiers = &config.cluster.tiers;
        let idx = tier
            .parse::<usize>()
            .ok()
            .filter(|i| *i < tiers.len())
            .or_else(|| tiers.iter().position(|t| t.name == tier))
            .ok_or_else(|| UsageError(format!("unknown tier `{tier}` in --policy")))?;
        return Ok(Policy::Static(idx));
    }
    Ok(Policy::Greedy(load_network(Path::new(spec), config)?))
}

fn load_network(path: &Path, config: &AppConfig) -> Result<QNetwork> {
    let dims = (config.reward.num_tasks(), config.cluster.num_tiers());
    load_checkpoint(path, Some(dims)).with_context(|| format!("loading checkpoint {}", path.display()))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<fs::File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

fn file_label(policy: &Policy) -> String {
    policy.label().replace(':', "")
}

fn evaluate(ctx: &Context_, policy: &Policy, traces: &[WorkloadTrace]) -> Result<Vec<EvalRun>> {
    let setup = ctx.scenario.setup_for(policy, &ctx.config.estimator);
    traces
        .par_iter()
        .enumerate()
        .map(|(t, trace)| Ok(run_eval(policy, trace, &setup, trace_seed(ctx, t))?))
        .collect()
}

fn summarize(ctx: &Context_, runs: &[EvalRun]) -> Result<ScenarioSummary> {
    let mut rewards = Vec::new();
    let mut windows = Vec::new();
    for run in runs {
        let r = run.rewards();
        windows.extend(windowed(&r, WINDOW)?);
        rewards.extend(r);
    }
    let gpu_count = runs[0].gpu_count;
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    let pooled = EvalRun { records: runs.iter().flat_map(|r| r.records.clone()).collect(), ..runs[0].clone() };
    let mut riemann = Vec::new();
    if let Some(buckets) = ctx.scenario.rate_buckets() {
        let reward = &ctx.scenario.reward;
        let dist = selection_distribution(runs, buckets, reward.num_tasks(), ctx.config.cluster.num_tiers())?;
        for (task, spec) in reward.tasks.iter().enumerate() {
            for (tier, t) in ctx.config.cluster.tiers.iter().enumerate() {
                riemann.push((spec.name.clone(), t.name.clone(), dist.riemann_usage(task, tier)));
            }
        }
    }
    Ok(ScenarioSummary {
        policy: runs[0].policy.clone(),
        mean_reward: mean(&rewards),
        mean_utility: mean(&hardware_utility(&rewards, gpu_count)?),
        thresholds: threshold_counts(&windows, &TABLE_THRESHOLDS)?,
        per_rate: per_rate(&pooled, &ctx.scenario.reward),
        riemann,
    })
}

fn cmd_gen(common: &Common) -> Result<()> {
    let ctx = load(common)?;
    for (t, trace) in traces(&ctx, None)?.iter().enumerate() {
        let path = ctx.out.join(format!("trace-{}-{t}.csv", ctx.scenario.name));
        write_trace(trace, &path)?;
        eprintln!("wrote {} ({} requests)", path.display(), trace.len());
    }
    Ok(())
}

fn train_into(
    ctx: &Context_,
    cfg: TrainConfig,
    init: Option<QNetwork>,
    checkpoint_every: u64,
    stem: &str,
) -> Result<()> {
    let ckpt_dir = ctx.out.join("checkpoints");
    if checkpoint_every > 0 {
        fs::create_dir_all(&ckpt_dir)?;
    }
    let mut hook = |step: u64, net: &QNetwork| -> besteffort::Result<()> {
        eprintln!("step {step}");
        save_checkpoint(net, &ckpt_dir.join(format!("{stem}-{step}.ckpt")))
    };
    let outcome = run_training_from(&ctx.config.train_env(), &cfg, init, checkpoint_every, &mut hook)?;
    let ckpt = ctx.out.join(format!("{stem}.ckpt"));
    save_checkpoint(&outcome.network, &ckpt)?;
    save_train_log(&outcome.log, &ctx.out.join(format!("{stem}_log.csv")))?;
    eprintln!("wrote {}", ckpt.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let ctx = load(&args.common)?;
    let cfg = TrainConfig { seed: derive_seed(ctx.seed, "train"), ..ctx.config.training.clone() };
    train_into(&ctx, cfg, None, args.checkpoint_every, "policy")
}

fn cmd_finetune(args: &FinetuneArgs) -> Result<()> {
    let ctx = load(&args.common)?;
    let init = load_network(&args.policy, &ctx.config)?;
    let cfg = TrainConfig {
        seed: derive_seed(ctx.seed, "finetune"),
        total_iterations: args.iterations,
        epsilon_start: args.epsilon_start,
        epsilon_decay_steps: None,
        ..ctx.config.training.clone()
    };
    let errs = cfg.validation_errors();
    if !errs.is_empty() {
        return Err(UsageError(errs.join("; ")).into());
    }
    train_into(&ctx, cfg, Some(init), args.checkpoint_every, "finetuned")
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let ctx = load(&args.common)?;
    let policy = parse_policy(&args.policy, &ctx.config)?;
    let traces = traces(&ctx, args.trace.as_deref())?;
    let runs = evaluate(&ctx, &policy, &traces)?;
    let label = file_label(&policy);
    for (t, run) in runs.iter().enumerate() {
        let path = ctx.out.join(format!("metrics-{}-{label}-{t}.csv", ctx.scenario.name));
        write_file(&path, |w| write_metrics_csv(run, w))?;
        eprintln!("wrote {}  mean reward {:.4}", path.display(), run.mean_reward());
    }
    let summary = summarize(&ctx, &runs)?;
    write_file(&ctx.out.join(format!("summary-{}-{label}.csv", ctx.scenario.name)), |w| {
        write_summary_csv(std::slice::from_ref(&summary), w)
    })
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let ctx = load(&args.common)?;
    let traces = traces(&ctx, None)?;
    let mut policies: Vec<Policy> = Vec::new();
    if let Some(path) = &args.policy {
        policies.push(Policy::Greedy(load_network(path, &ctx.config)?));
    }
    policies.extend((0..ctx.config.cluster.num_tiers()).map(Policy::Static));
    let mut summaries = Vec::new();
    let mut band_rows: Vec<(String, Vec<f64>, Vec<f64>)> = Vec::new();
    for policy in &policies {
        let runs = evaluate(&ctx, policy, &traces)?;
        summaries.push(summarize(&ctx, &runs)?);
        if runs.len() >= 2 && runs.iter().all(|r| r.records.len() == runs[0].records.len()) {
            let series: Vec<Vec<f64>> = runs.iter().map(|r| windowed(&r.rewards(), WINDOW)).collect::<Result<_, _>>()?;
            let band = trial_band(&series)?;
            band_rows.push((policy.label(), band.mean, band.std));
        }
    }
    let name = &ctx.scenario.name;
    let summary_path = ctx.out.join(format!("report-{name}.csv"));
    write_file(&summary_path, |w| write_summary_csv(&summaries, w))?;
    if !band_rows.is_empty() {
        write_file(&ctx.out.join(format!("band-{name}.csv")), |w| {
            use std::io::Write;
            writeln!(w, "policy,window_end_index,mean,std")?;
            for (label, mean, std) in &band_rows {
                for (k, (m, s)) in mean.iter().zip(std).enumerate() {
                    writeln!(w, "{label},{},{m},{s}", k + WINDOW - 1)?;
                }
            }
            Ok(())
        })?;
    }
    for s in &summaries {
        eprintln!("{:>10}  mean reward {:.4}  per-GPU utility {:.4}", s.policy, s.mean_reward, s.mean_utility);
    }
    eprintln!("wrote {}", summary_path.display());
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(c) => cmd_gen(c),
        Command::Train(a) => cmd_train(a),
        Command::Finetune(a) => cmd_finetune(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    }
}
