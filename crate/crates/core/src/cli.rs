//! Command implementations behind the `hpcsched` binary. Kept in the
//! library so integration tests can drive them without spawning processes.
//!
//! Output-directory layout for runs that produce files:
//! config copy, `curve.csv`, `table.csv`, `checkpoints/`, `manifest.txt`.
//! Exit codes: 0 ok, 2 input error, 3 model error, 4 training diverged.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::config::{fnv1a, ConfigFile};
use crate::error::TrainError;
use crate::heuristics::{Heuristic, HeuristicKind};
use crate::neural::{policy_argmax, policy_forward, PolicyNet};
use crate::sim::{
    run_with_scheduler, ClusterState, ObservationMatrix, PendingJob, SchedulerPolicy,
    DEFAULT_MAX_OBSV_SIZE, JOB_FEATURES,
};
use crate::trainer::{
    compute_filter_range, derive_seed, train_with_progress, Goal, LearnedPolicy, PpoConfig,
};
use crate::workload::{
    generate_synthetic, parse_swf, sample_sequence, serialize_swf, trace_stats, JobSequence,
    JobTrace, SyntheticConfig,
};

/// Errors mapped to process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad inputs: missing files, parse failures, malformed options (exit 2).
    Input(String),
    /// Model files that cannot be loaded or do not match (exit 3).
    Model(String),
    /// Training diverged fatally (exit 4).
    Diverged(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Model(_) => 3,
            CliError::Diverged(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Model(m) | CliError::Diverged(m) => m,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::TrainingDiverged(m) => CliError::Diverged(format!("training: {m}")),
            TrainError::Neural(n) => CliError::Model(format!("model: {n}")),
            other => CliError::Input(format!("training setup: {other}")),
        }
    }
}

/// Where the jobs come from: an SWF file or the synthetic generator.
#[derive(Debug, Clone, Default)]
pub struct TraceSpec {
    pub trace_path: Option<PathBuf>,
    pub synthetic: bool,
    pub max_procs: Option<u32>,
    /// Keep only the first N jobs after parsing.
    pub first: Option<usize>,
    pub cluster_size: Option<u32>,
    pub job_count: Option<usize>,
    pub arrival_rate: Option<f64>,
    pub runtime_min: Option<u64>,
    pub runtime_max: Option<u64>,
    pub proc_min: Option<u32>,
    pub proc_max: Option<u32>,
}

impl TraceSpec {
    /// Resolve the synthetic generator parameters: defaults, then the
    /// `[workload]` config section, then explicit flags.
    pub fn synthetic_config(&self, file: &ConfigFile) -> Result<SyntheticConfig, CliError> {
        let mut cfg = SyntheticConfig::default();
        let section = "workload";
        let bad = |e: String| CliError::Input(format!("config: {e}"));
        if let Some(v) = file.parse_value::<u32>(section, "cluster_size").map_err(bad)? {
            cfg.cluster_size = v;
        }
        if let Some(v) = file.parse_value::<usize>(section, "job_count").map_err(bad)? {
            cfg.job_count = v;
        }
        if let Some(v) = file.parse_value::<f64>(section, "arrival_rate").map_err(bad)? {
            cfg.arrival_rate = v;
        }
        if let Some(v) = file.parse_value::<u64>(section, "runtime_min").map_err(bad)? {
            cfg.runtime_range.0 = v;
        }
        if let Some(v) = file.parse_value::<u64>(section, "runtime_max").map_err(bad)? {
            cfg.runtime_range.1 = v;
        }
        if let Some(v) = file.parse_value::<u32>(section, "proc_min").map_err(bad)? {
            cfg.proc_range.0 = v;
        }
        if let Some(v) = file.parse_value::<u32>(section, "proc_max").map_err(bad)? {
            cfg.proc_range.1 = v;
        }
        if let Some(v) = self.cluster_size {
            cfg.cluster_size = v;
        }
        if let Some(v) = self.job_count {
            cfg.job_count = v;
        }
        if let Some(v) = self.arrival_rate {
            cfg.arrival_rate = v;
        }
        if let Some(v) = self.runtime_min {
            cfg.runtime_range.0 = v;
        }
        if let Some(v) = self.runtime_max {
            cfg.runtime_range.1 = v;
        }
        if let Some(v) = self.proc_min {
            cfg.proc_range.0 = v;
        }
        if let Some(v) = self.proc_max {
            cfg.proc_range.1 = v;
        }
        Ok(cfg)
    }

    pub fn load(&self, file: &ConfigFile, seed: u64) -> Result<JobTrace, CliError> {
        let mut trace = if let Some(path) = &self.trace_path {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Input(format!("trace not found: {}: {e}", path.display())))?;
            let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
            parse_swf(&text, name, self.max_procs)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        } else if self.synthetic {
            let cfg = self.synthetic_config(file)?;
            generate_synthetic(&cfg, derive_seed(seed, 0x5E, 0, 0))
                .map_err(|e| CliError::Input(format!("synthetic generator: {e}")))?
        } else {
            return Err(CliError::Input("either --trace or --synthetic is required".into()));
        };
        if let Some(n) = self.first {
            if n == 0 {
                return Err(CliError::Input("--first must be at least 1".into()));
            }
            trace.truncate(n);
        }
        Ok(trace)
    }
}

fn load_config_file(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Input(format!("config not found: {}: {e}", p.display())))?;
            ConfigFile::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))
        }
    }
}

/// `stats`: print the trace characteristics in the usual reporting order
/// (cluster size, mean arrival interval, mean requested runtime, mean
/// requested processors), rounded.
pub fn cmd_stats(spec: &TraceSpec, config_path: Option<&Path>) -> Result<String, CliError> {
    let file = load_config_file(config_path)?;
    let trace = spec.load(&file, 0)?;
    let stats = trace_stats(&trace).map_err(|e| CliError::Input(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(out, "trace: {} ({} jobs, {} dropped)", trace.source_name, stats.job_count, trace.dropped_jobs);
    let _ = writeln!(out, "size interval runtime procs");
    let _ = writeln!(
        out,
        "{} {} {} {}",
        trace.cluster_size,
        stats.avg_arrival_interval.round(),
        stats.avg_requested_runtime.round(),
        stats.avg_requested_processors.round()
    );
    Ok(out)
}

/// `gen`: write a synthetic trace as an SWF file.
pub fn cmd_gen(
    spec: &TraceSpec,
    config_path: Option<&Path>,
    seed: u64,
    out: &Path,
) -> Result<String, CliError> {
    let file = load_config_file(config_path)?;
    let cfg = spec.synthetic_config(&file)?;
    let trace = generate_synthetic(&cfg, seed)
        .map_err(|e| CliError::Input(format!("synthetic generator: {e}")))?;
    fs::write(out, serialize_swf(&trace))
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", out.display())))?;
    Ok(format!("wrote {} jobs to {}\n", trace.jobs.len(), out.display()))
}

#[derive(Debug, Clone)]
pub struct TrainOpts {
    pub goal: Goal,
    pub epochs: usize,
    pub seed: u64,
    pub workers: usize,
    pub trajectories: usize,
    pub trajectory_len: usize,
    pub update_iterations: usize,
    pub learning_rate: f64,
    pub backfilling: bool,
    pub mask_non_runnable: bool,
    pub filter: bool,
    pub filter_samples: usize,
    pub filter_step1_epochs: Option<usize>,
}

impl Default for TrainOpts {
    fn default() -> Self {
        let ppo = PpoConfig::default();
        Self {
            goal: Goal::AvgBoundedSlowdown,
            epochs: 50,
            seed: 0,
            workers: 1,
            trajectories: ppo.trajectories_per_epoch,
            trajectory_len: ppo.trajectory_len,
            update_iterations: ppo.update_iterations,
            learning_rate: ppo.learning_rate,
            backfilling: true,
            mask_non_runnable: false,
            filter: false,
            filter_samples: 100,
            filter_step1_epochs: None,
        }
    }
}

/// `train`: learn a policy and write the best checkpoint, learning curve,
/// config copy and manifest into `out_dir`.
pub fn cmd_train(
    spec: &TraceSpec,
    opts: &TrainOpts,
    config_path: Option<&Path>,
    out_dir: &Path,
    mut log: impl FnMut(&str),
) -> Result<(), CliError> {
    let file = load_config_file(config_path)?;
    let trace = spec.load(&file, opts.seed)?;
    if trace.jobs.len() < opts.trajectory_len {
        return Err(CliError::Input(format!(
            "trace has {} jobs, fewer than the trajectory length {}",
            trace.jobs.len(),
            opts.trajectory_len
        )));
    }

    let mut cfg = PpoConfig {
        trajectories_per_epoch: opts.trajectories,
        trajectory_len: opts.trajectory_len,
        update_iterations: opts.update_iterations,
        learning_rate: opts.learning_rate,
        epochs: opts.epochs,
        seed: opts.seed,
        goal: opts.goal,
        backfilling: opts.backfilling,
        mask_non_runnable: opts.mask_non_runnable,
        workers: opts.workers,
        ..PpoConfig::default()
    };
    if opts.filter {
        log("estimating filter range from SJF samples...");
        let est =
            compute_filter_range(&trace, opts.goal, opts.filter_samples, derive_seed(opts.seed, 0xF0, 0, 0))?;
        log(&format!("filter range: ({:.3}, {:.3})", est.range.low, est.range.high));
        cfg.filter = Some(est.range);
        cfg.filter_step1_epochs = opts.filter_step1_epochs.unwrap_or(opts.epochs / 2);
    }

    fs::create_dir_all(out_dir.join("checkpoints"))
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;

    let result = train_with_progress(&trace, &cfg, |row| {
        log(&format!(
            "epoch {:>4}  metric {:>12.4}  std {:>10.4}  pi_loss {:>10.5}  v_loss {:>12.5}  {:>6.1}s",
            row.epoch, row.mean_metric, row.std_metric, row.policy_loss, row.value_loss, row.seconds
        ));
    })?;

    let policy_path = out_dir.join("checkpoints/policy.bin");
    let value_path = out_dir.join("checkpoints/value.bin");
    result.best_policy.save(&policy_path).map_err(|e| CliError::Model(e.to_string()))?;
    result.best_value.save(&value_path).map_err(|e| CliError::Model(e.to_string()))?;
    write_file(out_dir.join("curve.csv"), &result.curve.to_csv())?;

    let mut effective = file.clone();
    effective.set("train", "goal", opts.goal.name());
    effective.set("train", "epochs", opts.epochs);
    effective.set("train", "seed", opts.seed);
    effective.set("train", "trajectories", opts.trajectories);
    effective.set("train", "trajectory_len", opts.trajectory_len);
    effective.set("train", "learning_rate", opts.learning_rate);
    effective.set("train", "backfilling", opts.backfilling);
    effective.set("train", "filter", opts.filter);
    write_file(out_dir.join("config.txt"), &effective.render())?;

    let mut manifest = String::new();
    let _ = writeln!(manifest, "command = train");
    let _ = writeln!(manifest, "goal = {}", opts.goal.name());
    let _ = writeln!(manifest, "trace = {}", trace.source_name);
    let _ = writeln!(manifest, "config_hash = {:016x}", effective.hash());
    let _ = writeln!(manifest, "best_epoch = {}", result.best_epoch);
    let _ = writeln!(manifest, "filter_rejections = {}", result.collect_stats.filter_rejections);
    let _ = writeln!(manifest, "forced_accepts = {}", result.collect_stats.forced_accepts);
    write_file(out_dir.join("manifest.txt"), &manifest)?;
    log(&format!("best epoch {} saved to {}", result.best_epoch, policy_path.display()));
    Ok(())
}

/// One scheduler column in an evaluation run: either a heuristic or a
/// checkpoint path.
pub enum SchedulerSpec {
    Heuristic(HeuristicKind),
    Checkpoint(PathBuf),
}

impl SchedulerSpec {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        if let Ok(kind) = s.parse::<HeuristicKind>() {
            return Ok(SchedulerSpec::Heuristic(kind));
        }
        let path = PathBuf::from(s);
        let candidate = if path.is_dir() { path.join("checkpoints/policy.bin") } else { path };
        if candidate.exists() {
            Ok(SchedulerSpec::Checkpoint(candidate))
        } else {
            Err(CliError::Input(format!(
                "scheduler {s:?} is neither a heuristic (fcfs, sjf, wfp3, unicep, f1) nor a checkpoint path"
            )))
        }
    }

    pub fn label(&self) -> String {
        match self {
            SchedulerSpec::Heuristic(k) => k.name().to_string(),
            SchedulerSpec::Checkpoint(p) => {
                p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string()
            }
        }
    }

    fn build(&self, seq: &JobSequence) -> Result<Box<dyn SchedulerPolicy>, CliError> {
        match self {
            SchedulerSpec::Heuristic(kind) => Ok(Box::new(Heuristic::new(*kind))),
            SchedulerSpec::Checkpoint(path) => {
                let net = PolicyNet::load(path)
                    .map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?;
                Ok(Box::new(LearnedPolicy::new(
                    net,
                    DEFAULT_MAX_OBSV_SIZE,
                    seq.time_cap,
                    seq.cluster_size,
                    &self.label(),
                )))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackfillSetting {
    On,
    Off,
    Both,
}

impl BackfillSetting {
    pub fn parse(s: &str) -> Result<Self, CliError> {
        match s.to_ascii_lowercase().as_str() {
            "on" | "true" | "1" => Ok(BackfillSetting::On),
            "off" | "false" | "0" => Ok(BackfillSetting::Off),
            "both" => Ok(BackfillSetting::Both),
            other => Err(CliError::Input(format!("--backfilling expects on, off or both, got {other:?}"))),
        }
    }

    fn modes(self) -> Vec<bool> {
        match self {
            BackfillSetting::On => vec![true],
            BackfillSetting::Off => vec![false],
            BackfillSetting::Both => vec![true, false],
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalOpts {
    pub goal: Goal,
    pub repetitions: usize,
    pub sequence_len: usize,
    pub seed: u64,
    pub backfilling: BackfillSetting,
}

impl Default for EvalOpts {
    fn default() -> Self {
        Self {
            goal: Goal::AvgBoundedSlowdown,
            repetitions: 10,
            sequence_len: 1024,
            seed: 0,
            backfilling: BackfillSetting::On,
        }
    }
}

/// Table of mean goal metrics: one row per (trace, backfilling mode), one
/// column per scheduler.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTable {
    pub schedulers: Vec<String>,
    pub rows: Vec<EvalRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub trace: String,
    pub backfilling: bool,
    pub values: Vec<f64>,
}

impl EvalTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("trace,backfilling");
        for s in &self.schedulers {
            let _ = write!(out, ",{s}");
        }
        out.push('\n');
        for row in &self.rows {
            let _ = write!(out, "{},{}", row.trace, if row.backfilling { "on" } else { "off" });
            for v in &row.values {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty table")?;
        let mut cols = header.split(',');
        if cols.next() != Some("trace") || cols.next() != Some("backfilling") {
            return Err(format!("unexpected table header {header:?}"));
        }
        let schedulers: Vec<String> = cols.map(|c| c.to_string()).collect();
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != schedulers.len() + 2 {
                return Err(format!("table line {} has {} fields", i + 2, fields.len()));
            }
            let backfilling = match fields[1] {
                "on" => true,
                "off" => false,
                other => return Err(format!("table line {}: bad backfilling flag {other:?}", i + 2)),
            };
            let values = fields[2..]
                .iter()
                .map(|f| f.parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2)))
                .collect::<Result<Vec<_>, _>>()?;
            rows.push(EvalRow { trace: fields[0].to_string(), backfilling, values });
        }
        Ok(Self { schedulers, rows })
    }
}

fn sequence_hash(seq: &JobSequence) -> u64 {
    let mut bytes = Vec::with_capacity(seq.jobs.len() * 16);
    for j in &seq.jobs {
        bytes.extend_from_slice(&j.job_id.to_le_bytes());
        bytes.extend_from_slice(&j.submit_time.to_le_bytes());
    }
    fnv1a(&bytes)
}

/// `evaluate`: schedule the same random sequences with every listed
/// scheduler and tabulate mean goal metrics.
pub fn cmd_evaluate(
    spec: &TraceSpec,
    schedulers: &[SchedulerSpec],
    opts: &EvalOpts,
    config_path: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<EvalTable, CliError> {
    if schedulers.is_empty() {
        return Err(CliError::Input("at least one scheduler is required".into()));
    }
    if opts.repetitions == 0 {
        return Err(CliError::Input("--reps must be at least 1".into()));
    }
    let file = load_config_file(config_path)?;
    let trace = spec.load(&file, opts.seed)?;
    let seq_len = opts.sequence_len.min(trace.jobs.len());

    // The same sequences are replayed for every scheduler and both
    // backfilling modes; the per-run hashes prove it in the manifest.
    let sequences: Vec<JobSequence> = (0..opts.repetitions)
        .map(|rep| {
            sample_sequence(&trace, seq_len, derive_seed(opts.seed, 0xE7A1, rep as u64, 0))
                .map_err(|e| CliError::Input(e.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let hashes: Vec<u64> = sequences.iter().map(sequence_hash).collect();

    let mut table = EvalTable {
        schedulers: schedulers.iter().map(|s| s.label()).collect(),
        rows: Vec::new(),
    };
    let mut manifest = String::new();
    let _ = writeln!(manifest, "command = evaluate");
    let _ = writeln!(manifest, "goal = {}", opts.goal.name());
    let _ = writeln!(manifest, "trace = {}", trace.source_name);
    let _ = writeln!(manifest, "sequence_len = {seq_len}");
    for (rep, h) in hashes.iter().enumerate() {
        let _ = writeln!(manifest, "sequence_{rep} = {h:016x}");
    }

    for backfilling in opts.backfilling.modes() {
        let mut values = Vec::with_capacity(schedulers.len());
        for sched in schedulers {
            let mut total = 0.0;
            for (rep, seq) in sequences.iter().enumerate() {
                let run_seq = seq.clone();
                assert_eq!(
                    sequence_hash(&run_seq),
                    hashes[rep],
                    "scheduler saw a different sequence"
                );
                let mut policy = sched.build(&run_seq)?;
                let metrics = run_with_scheduler(run_seq, policy.as_mut(), backfilling)
                    .map_err(|e| CliError::Input(format!("simulation: {e}")))?;
                let value = metrics
                    .goal_value(opts.goal)
                    .ok_or_else(|| CliError::Input("goal needs per-user info".into()))?;
                total += value;
            }
            values.push(total / opts.repetitions as f64);
        }
        table.rows.push(EvalRow {
            trace: trace.source_name.clone(),
            backfilling,
            values,
        });
    }

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Input(format!("cannot create {}: {e}", dir.display())))?;
        write_file(dir.join("table.csv"), &table.to_csv())?;
        write_file(dir.join("manifest.txt"), &manifest)?;
        write_file(dir.join("config.txt"), &file.render())?;
    }
    Ok(table)
}

/// `bench`: time greedy policy decisions on full observations, and SJF
/// selection over the same queue size for comparison.
pub fn cmd_bench(checkpoint: Option<&Path>, trials: usize) -> Result<String, CliError> {
    if trials == 0 {
        return Ok(String::new());
    }
    let net = match checkpoint {
        Some(path) => {
            PolicyNet::load(path).map_err(|e| CliError::Model(format!("{}: {e}", path.display())))?
        }
        None => PolicyNet::init(0),
    };

    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
    let observations: Vec<ObservationMatrix> = (0..trials.min(1024))
        .map(|_| {
            let rows: Vec<[f64; JOB_FEATURES]> = (0..DEFAULT_MAX_OBSV_SIZE)
                .map(|_| std::array::from_fn(|_| rng.gen::<f64>()))
                .collect();
            ObservationMatrix {
                legal: vec![true; DEFAULT_MAX_OBSV_SIZE],
                slot_to_queue_index: (0..DEFAULT_MAX_OBSV_SIZE).map(Some).collect(),
                rows,
            }
        })
        .collect();

    let mut decisions = Vec::with_capacity(trials);
    let mut samples_us = Vec::with_capacity(trials);
    for i in 0..trials {
        let obs = &observations[i % observations.len()];
        let t0 = Instant::now();
        let probs = policy_forward(&net, obs).map_err(|e| CliError::Model(e.to_string()))?;
        let slot = policy_argmax(&probs);
        samples_us.push(t0.elapsed().as_secs_f64() * 1e6);
        decisions.push(slot);
    }
    let stats = |mut xs: Vec<f64>| {
        xs.sort_by(|a, b| a.partial_cmp(b).expect("finite timings"));
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let p50 = xs[xs.len() / 2];
        let p99 = xs[(xs.len() * 99 / 100).min(xs.len() - 1)];
        (mean, p50, p99)
    };
    let (mean, p50, p99) = stats(samples_us.clone());

    // SJF over the same number of pending jobs.
    let queue: Vec<PendingJob> = (0..DEFAULT_MAX_OBSV_SIZE as u64)
        .map(|i| {
            PendingJob::at(
                crate::workload::Job {
                    job_id: i,
                    submit_time: i,
                    requested_processors: 1 + (i % 16) as u32,
                    requested_time: 60 + (i * 37) % 3600,
                    actual_runtime: 60,
                    user_id: None,
                },
                4000,
            )
        })
        .collect();
    let cluster = ClusterState::idle(256);
    let mut sjf = Heuristic::new(HeuristicKind::Sjf);
    let mut sjf_us = Vec::with_capacity(trials);
    for _ in 0..trials {
        let t0 = Instant::now();
        let _ = sjf.select(&queue, &cluster, 4000).map_err(|e| CliError::Input(e.to_string()))?;
        sjf_us.push(t0.elapsed().as_secs_f64() * 1e6);
    }
    let (sjf_mean, sjf_p50, sjf_p99) = stats(sjf_us);

    let mut out = String::new();
    let _ = writeln!(out, "policy argmax over {DEFAULT_MAX_OBSV_SIZE} jobs ({trials} trials)");
    let _ = writeln!(out, "  mean {mean:.1} us  p50 {p50:.1} us  p99 {p99:.1} us");
    let _ = writeln!(out, "sjf select over {DEFAULT_MAX_OBSV_SIZE} jobs ({trials} trials)");
    let _ = writeln!(out, "  mean {sjf_mean:.1} us  p50 {sjf_p50:.1} us  p99 {sjf_p99:.1} us");
    let _ = writeln!(out, "decisions hash {:016x}", fnv1a(&decisions.iter().flat_map(|d| d.to_le_bytes()).collect::<Vec<u8>>()));
    Ok(out)
}

fn write_file(path: PathBuf, content: &str) -> Result<(), CliError> {
    fs::write(&path, content)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}
