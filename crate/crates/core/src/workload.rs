//! Job traces: SWF parsing and serialization, trace statistics, sequence
//! sampling for training/evaluation, and a simple synthetic generator.
//!
//! SWF data lines carry 18 whitespace-separated fields; the ones retained
//! here are job id (1), submit time (2), wait time (3), run time (4),
//! allocated processors (5), requested processors (8), requested time (9)
//! and user id (12). Everything else is parsed and discarded.

use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::WorkloadError;

/// One batch job. `requested_time` is what schedulers see; `actual_runtime`
/// is only ever read by the simulator. Traces contain underestimates, so
/// `requested_time >= actual_runtime` is not guaranteed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Job {
    pub job_id: u64,
    pub submit_time: u64,
    pub requested_processors: u32,
    pub requested_time: u64,
    pub actual_runtime: u64,
    pub user_id: Option<u32>,
}

/// A parsed trace: jobs sorted by submit time plus the cluster size from
/// the `MaxProcs` header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobTrace {
    pub jobs: Vec<Job>,
    pub cluster_size: u32,
    pub source_name: String,
    /// Lines rejected during parsing (negative runtime, zero processors,
    /// cancelled-before-start, oversized requests).
    pub dropped_jobs: usize,
}

/// A contiguous slice of a trace with submit times re-based to zero.
/// Carries the parent trace's cluster size and normalization cap so that
/// observations built from different sequences of one trace are comparable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobSequence {
    pub jobs: Vec<Job>,
    pub cluster_size: u32,
    /// Maximum requested time over the parent trace, used as the fixed
    /// normalization cap for time-valued observation features.
    pub time_cap: u64,
}

/// Aggregate trace statistics in the usual reporting order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceStats {
    pub avg_arrival_interval: f64,
    pub avg_requested_runtime: f64,
    pub avg_requested_processors: f64,
    pub job_count: usize,
}

/// Parameters for the synthetic generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticConfig {
    pub cluster_size: u32,
    pub job_count: usize,
    /// Mean arrivals per second; inter-arrival gaps are exponential with
    /// mean `1 / arrival_rate`.
    pub arrival_rate: f64,
    /// Inclusive runtime bounds in seconds; runtimes are log-uniform.
    pub runtime_range: (u64, u64),
    /// Inclusive processor bounds; counts are powers of two within range.
    pub proc_range: (u32, u32),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            cluster_size: 256,
            job_count: 10_000,
            arrival_rate: 1.0 / 75.0,
            runtime_range: (60, 3_600),
            proc_range: (1, 64),
        }
    }
}

/// Number of distinct synthetic users cycled through by the generator, so
/// per-user goals are exercisable without a real trace.
pub const SYNTHETIC_USER_COUNT: u32 = 8;

const SWF_FIELDS: usize = 18;

impl JobTrace {
    /// Fixed normalization cap: the largest requested time in the trace.
    pub fn time_cap(&self) -> u64 {
        self.jobs.iter().map(|j| j.requested_time).max().unwrap_or(1)
    }

    /// Whether every job carries a user id (required by per-user goals).
    pub fn has_user_info(&self) -> bool {
        self.jobs.iter().all(|j| j.user_id.is_some())
    }

    /// Keep only the first `n` jobs (by submit order).
    pub fn truncate(&mut self, n: usize) {
        self.jobs.truncate(n);
    }

    /// View the whole trace as a sequence (already submit-sorted); submit
    /// times are re-based so the first job starts at zero.
    pub fn as_sequence(&self) -> JobSequence {
        let time_cap = self.time_cap();
        let base = self.jobs.first().map(|j| j.submit_time).unwrap_or(0);
        let jobs = self
            .jobs
            .iter()
            .cloned()
            .map(|mut j| {
                j.submit_time -= base;
                j
            })
            .collect();
        JobSequence { jobs, cluster_size: self.cluster_size, time_cap }
    }
}

/// Parse SWF text into a trace. `max_procs_override` substitutes for a
/// missing `; MaxProcs:` header.
pub fn parse_swf(
    text: &str,
    source_name: &str,
    max_procs_override: Option<u32>,
) -> Result<JobTrace, WorkloadError> {
    let mut cluster_size: Option<u32> = max_procs_override;
    let mut jobs = Vec::new();
    let mut dropped = 0usize;
    // Oversized requests can only be rejected once the header is known;
    // SWF puts MaxProcs before any data line.
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix(';') {
            if max_procs_override.is_none() {
                if let Some(rest) = comment.trim().strip_prefix("MaxProcs:") {
                    let n = rest.trim().parse::<u32>().map_err(|_| WorkloadError::ParseError {
                        line: idx + 1,
                        message: format!("bad MaxProcs value {:?}", rest.trim()),
                    })?;
                    cluster_size = Some(n);
                }
            }
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < SWF_FIELDS {
            return Err(WorkloadError::ParseError {
                line: idx + 1,
                message: format!("expected {} fields, found {}", SWF_FIELDS, fields.len()),
            });
        }
        let field = |i: usize| -> Result<i64, WorkloadError> {
            fields[i - 1].parse::<f64>().map(|v| v as i64).map_err(|_| WorkloadError::ParseError {
                line: idx + 1,
                message: format!("field {} is not numeric: {:?}", i, fields[i - 1]),
            })
        };
        let job_id = field(1)?;
        let submit = field(2)?;
        let wait = field(3)?;
        let run = field(4)?;
        let allocated = field(5)?;
        let requested_procs = field(8)?;
        let requested_time = field(9)?;
        let user = field(12)?;

        let procs = if requested_procs > 0 { requested_procs } else { allocated };
        let req_time = if requested_time >= 0 { requested_time } else { run };
        let cancelled = run == 0 && wait == -1;
        if run < 0 || procs < 1 || submit < 0 || cancelled {
            dropped += 1;
            continue;
        }
        if let Some(size) = cluster_size {
            if procs as u32 > size {
                dropped += 1;
                continue;
            }
        }
        jobs.push(Job {
            job_id: job_id.max(0) as u64,
            submit_time: submit as u64,
            requested_processors: procs as u32,
            requested_time: req_time.max(0) as u64,
            actual_runtime: run as u64,
            user_id: if user >= 0 { Some(user as u32) } else { None },
        });
    }
    let cluster_size = cluster_size.ok_or(WorkloadError::MissingMaxProcs)?;
    if jobs.is_empty() {
        return Err(WorkloadError::EmptyTrace);
    }
    jobs.sort_by_key(|j| (j.submit_time, j.job_id));
    Ok(JobTrace { jobs, cluster_size, source_name: to_owned_name(source_name), dropped_jobs: dropped })
}

fn to_owned_name(name: &str) -> String {
    if name.is_empty() { "unnamed".to_string() } else { name.to_string() }
}

/// Write a trace back out as SWF text. Retained fields round-trip through
/// `parse_swf`; everything else is emitted as the SWF "unknown" value.
pub fn serialize_swf(trace: &JobTrace) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "; MaxProcs: {}", trace.cluster_size);
    for j in &trace.jobs {
        let user = j.user_id.map(|u| u as i64).unwrap_or(-1);
        // job submit wait run alloc cpu mem reqproc reqtime reqmem status user group exe queue part prec think
        let _ = writeln!(
            out,
            "{} {} -1 {} {} -1 -1 {} {} -1 1 {} -1 -1 -1 -1 -1 -1",
            j.job_id,
            j.submit_time,
            j.actual_runtime,
            j.requested_processors,
            j.requested_processors,
            j.requested_time,
            user,
        );
    }
    out
}

/// Mean arrival interval, requested runtime and requested processors.
pub fn trace_stats(trace: &JobTrace) -> Result<TraceStats, WorkloadError> {
    stats_over(&trace.jobs)
}

pub(crate) fn stats_over(jobs: &[Job]) -> Result<TraceStats, WorkloadError> {
    if jobs.is_empty() {
        return Err(WorkloadError::EmptyTrace);
    }
    let n = jobs.len();
    let avg_arrival_interval = if n < 2 {
        0.0
    } else {
        let span = jobs[n - 1].submit_time - jobs[0].submit_time;
        span as f64 / (n - 1) as f64
    };
    let total_runtime: u64 = jobs.iter().map(|j| j.requested_time).sum();
    let total_procs: u64 = jobs.iter().map(|j| j.requested_processors as u64).sum();
    Ok(TraceStats {
        avg_arrival_interval,
        avg_requested_runtime: total_runtime as f64 / n as f64,
        avg_requested_processors: total_procs as f64 / n as f64,
        job_count: n,
    })
}

/// Draw a contiguous window of `length` jobs at a uniformly random offset,
/// re-based so the first job's submit time is zero. Deterministic per seed.
pub fn sample_sequence(trace: &JobTrace, length: usize, seed: u64) -> Result<JobSequence, WorkloadError> {
    let n = trace.jobs.len();
    if length == 0 || length > n {
        return Err(WorkloadError::InsufficientJobs { requested: length, available: n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.gen_range(0..=n - length);
    Ok(window_sequence(trace, offset, length))
}

/// The window starting at `offset`, re-based to zero. Used directly by the
/// enumeration oracle in tests; `sample_sequence` picks the offset.
pub fn window_sequence(trace: &JobTrace, offset: usize, length: usize) -> JobSequence {
    let window = &trace.jobs[offset..offset + length];
    let base = window[0].submit_time;
    let jobs = window
        .iter()
        .cloned()
        .map(|mut j| {
            j.submit_time -= base;
            j
        })
        .collect();
    JobSequence { jobs, cluster_size: trace.cluster_size, time_cap: trace.time_cap() }
}

/// Generate a synthetic trace: exponential inter-arrival gaps, log-uniform
/// runtimes, power-of-two processor counts. Deterministic per seed.
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<JobTrace, WorkloadError> {
    let (rt_min, rt_max) = config.runtime_range;
    let (p_min, p_max) = config.proc_range;
    if rt_min == 0 || rt_min > rt_max {
        return Err(WorkloadError::ConfigError(format!(
            "runtime_range [{rt_min}, {rt_max}] is empty or starts at zero"
        )));
    }
    if p_min == 0 || p_min > p_max {
        return Err(WorkloadError::ConfigError(format!("proc_range [{p_min}, {p_max}] is empty")));
    }
    if p_max > config.cluster_size {
        return Err(WorkloadError::ConfigError(format!(
            "proc_max {} exceeds cluster_size {}",
            p_max, config.cluster_size
        )));
    }
    if config.arrival_rate.is_nan() || config.arrival_rate <= 0.0 {
        return Err(WorkloadError::ConfigError(format!(
            "arrival_rate {} must be positive",
            config.arrival_rate
        )));
    }
    if config.job_count == 0 {
        return Err(WorkloadError::EmptyTrace);
    }

    // Powers of two inside the processor range, capped at cluster size.
    let proc_choices: Vec<u32> = (0..32)
        .map(|k| 1u32 << k)
        .filter(|&p| p >= p_min && p <= p_max && p <= config.cluster_size)
        .collect();
    if proc_choices.is_empty() {
        return Err(WorkloadError::ConfigError(format!(
            "no power of two inside proc_range [{p_min}, {p_max}]"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ln_min = (rt_min as f64).ln();
    let ln_max = (rt_max as f64).ln();
    let mut clock = 0.0f64;
    let mut jobs = Vec::with_capacity(config.job_count);
    for i in 0..config.job_count {
        let gap = -rng.gen::<f64>().max(f64::MIN_POSITIVE).ln() / config.arrival_rate;
        clock += gap;
        let runtime = (ln_min + rng.gen::<f64>() * (ln_max - ln_min)).exp().round() as u64;
        let runtime = runtime.clamp(rt_min, rt_max);
        let procs = proc_choices[rng.gen_range(0..proc_choices.len())];
        jobs.push(Job {
            job_id: i as u64 + 1,
            submit_time: clock as u64,
            requested_processors: procs,
            requested_time: runtime,
            actual_runtime: runtime,
            user_id: Some(rng.gen_range(0..SYNTHETIC_USER_COUNT)),
        });
    }
    jobs.sort_by_key(|j| (j.submit_time, j.job_id));
    Ok(JobTrace {
        jobs,
        cluster_size: config.cluster_size,
        source_name: format!("synthetic-{seed}"),
        dropped_jobs: 0,
    })
}
