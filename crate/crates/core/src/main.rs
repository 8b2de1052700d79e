use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hpcsched::cli::{
    cmd_bench, cmd_evaluate, cmd_gen, cmd_stats, cmd_train, BackfillSetting, CliError, EvalOpts,
    SchedulerSpec, TraceSpec, TrainOpts,
};
use hpcsched::trainer::Goal;

/// Batch-job scheduling toolkit: simulate SWF traces, compare schedulers,
/// and train scheduling policies.
#[derive(Parser)]
#[command(name = "hpcsched", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a scheduling policy on a trace.
    Train(TrainArgs),
    /// Schedule shared random sequences with several schedulers and
    /// tabulate the results.
    Evaluate(EvalArgs),
    /// Print trace statistics (size, arrival interval, runtime, processors).
    Stats(StatsArgs),
    /// Time policy inference and heuristic selection.
    Bench(BenchArgs),
    /// Generate a synthetic trace as an SWF file.
    Gen(GenArgs),
}

#[derive(Args)]
struct TraceArgs {
    /// SWF trace file.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Use the synthetic generator instead of a trace file.
    #[arg(long)]
    synthetic: bool,
    /// Cluster size override for traces without a MaxProcs header.
    #[arg(long)]
    max_procs: Option<u32>,
    /// Keep only the first N jobs.
    #[arg(long)]
    first: Option<usize>,
    /// Synthetic generator: cluster size.
    #[arg(long)]
    cluster_size: Option<u32>,
    /// Synthetic generator: number of jobs.
    #[arg(long)]
    job_count: Option<usize>,
    /// Synthetic generator: mean arrivals per second.
    #[arg(long)]
    arrival_rate: Option<f64>,
    /// Synthetic generator: minimum runtime in seconds.
    #[arg(long)]
    runtime_min: Option<u64>,
    /// Synthetic generator: maximum runtime in seconds.
    #[arg(long)]
    runtime_max: Option<u64>,
    /// Synthetic generator: minimum processors per job.
    #[arg(long)]
    proc_min: Option<u32>,
    /// Synthetic generator: maximum processors per job.
    #[arg(long)]
    proc_max: Option<u32>,
}

impl TraceArgs {
    fn to_spec(&self) -> TraceSpec {
        TraceSpec {
            trace_path: self.trace.clone(),
            synthetic: self.synthetic,
            max_procs: self.max_procs,
            first: self.first,
            cluster_size: self.cluster_size,
            job_count: self.job_count,
            arrival_rate: self.arrival_rate,
            runtime_min: self.runtime_min,
            runtime_max: self.runtime_max,
            proc_min: self.proc_min,
            proc_max: self.proc_max,
        }
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    source: TraceArgs,
    /// Config file with defaults for any flag of the same name.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Optimization goal: bsld, slowdown, wait, util or fairness.
    #[arg(long, default_value = "bsld")]
    goal: String,
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for collection and updates.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Trajectories collected per epoch.
    #[arg(long, default_value_t = 100)]
    trajectories: usize,
    /// Jobs per trajectory.
    #[arg(long, default_value_t = 256)]
    traj_len: usize,
    /// Update iterations per epoch for each network.
    #[arg(long, default_value_t = 80)]
    update_iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// on/off: backfill during training episodes.
    #[arg(long, default_value = "on")]
    backfilling: String,
    /// Mask jobs that cannot start immediately instead of reserving.
    #[arg(long)]
    mask_non_runnable: bool,
    /// Enable trajectory filtering for the first training phase.
    #[arg(long)]
    filter: bool,
    /// SJF samples used to estimate the filter range.
    #[arg(long, default_value_t = 100)]
    filter_samples: usize,
    /// Epochs spent in the filtered phase (default: half of --epochs).
    #[arg(long)]
    filter_step1_epochs: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "run")]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    source: TraceArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated schedulers: heuristic names and/or checkpoint paths.
    #[arg(long, default_value = "fcfs,sjf,wfp3,unicep,f1")]
    schedulers: String,
    #[arg(long, default_value = "bsld")]
    goal: String,
    /// Shared random sequences per run.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    /// Jobs per evaluation sequence.
    #[arg(long, default_value_t = 1024)]
    seq_len: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// on, off or both.
    #[arg(long, default_value = "on")]
    backfilling: String,
    /// Output directory for table.csv and manifest (optional).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    /// SWF trace file (positional).
    #[arg(value_name = "TRACE")]
    trace_file: Option<PathBuf>,
    #[command(flatten)]
    source: TraceArgs,
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Policy checkpoint; a fresh random policy is timed when omitted.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10_000)]
    trials: usize,
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    source: TraceArgs,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output SWF path.
    #[arg(long)]
    out: PathBuf,
}

fn parse_goal(s: &str) -> Result<Goal, CliError> {
    s.parse::<Goal>().map_err(CliError::Input)
}

/// Print without panicking when the reader goes away (e.g. `| head`).
fn emit(text: &str) {
    use std::io::Write;
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn parse_on_off(s: &str) -> Result<bool, CliError> {
    match s.to_ascii_lowercase().as_str() {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        other => Err(CliError::Input(format!("expected on or off, got {other:?}"))),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train(args) => {
            let opts = TrainOpts {
                goal: parse_goal(&args.goal)?,
                epochs: args.epochs,
                seed: args.seed,
                workers: args.workers,
                trajectories: args.trajectories,
                trajectory_len: args.traj_len,
                update_iterations: args.update_iters,
                learning_rate: args.lr,
                backfilling: parse_on_off(&args.backfilling)?,
                mask_non_runnable: args.mask_non_runnable,
                filter: args.filter,
                filter_samples: args.filter_samples,
                filter_step1_epochs: args.filter_step1_epochs,
            };
            cmd_train(&args.source.to_spec(), &opts, args.config.as_deref(), &args.out, |line| {
                emit(&format!("{line}\n"));
            })
        }
        Command::Evaluate(args) => {
            let schedulers = args
                .schedulers
                .split(',')
                .map(|s| SchedulerSpec::parse(s.trim()))
                .collect::<Result<Vec<_>, _>>()?;
            let opts = EvalOpts {
                goal: parse_goal(&args.goal)?,
                repetitions: args.reps,
                sequence_len: args.seq_len,
                seed: args.seed,
                backfilling: BackfillSetting::parse(&args.backfilling)?,
            };
            let table = cmd_evaluate(
                &args.source.to_spec(),
                &schedulers,
                &opts,
                args.config.as_deref(),
                args.out.as_deref(),
            )?;
            emit(&table.to_csv());
            Ok(())
        }
        Command::Stats(args) => {
            let mut spec = args.source.to_spec();
            if spec.trace_path.is_none() {
                spec.trace_path = args.trace_file;
            }
            let out = cmd_stats(&spec, args.config.as_deref())?;
            emit(&out);
            Ok(())
        }
        Command::Bench(args) => {
            let out = cmd_bench(args.checkpoint.as_deref(), args.trials)?;
            emit(&out);
            Ok(())
        }
        Command::Gen(args) => {
            let out = cmd_gen(&args.source.to_spec(), args.config.as_deref(), args.seed, &args.out)?;
            emit(&out);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
