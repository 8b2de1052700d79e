//! Discrete-event cluster simulator.
//!
//! The environment replays a job sequence against an idle homogeneous
//! cluster. Each scheduler decision commits one pending job: if it fits it
//! starts immediately, otherwise it gets a reservation at the earliest time
//! enough processors free up (estimated from *requested* runtimes, the only
//! runtime information schedulers may see) and the queue is scanned for
//! backfill candidates that cannot delay that reservation. The clock then
//! advances through completions and arrivals until another decision is due.
//!
//! Time is integer seconds throughout, matching SWF. Event ties resolve as
//! completions, then the reserved start, then arrivals; equal completions
//! resolve by lower job id.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::SimError;
use crate::trainer::{sequence_reward, Goal};
use crate::workload::{Job, JobSequence};

pub const JOB_FEATURES: usize = 5;
pub const DEFAULT_MAX_OBSV_SIZE: usize = 128;

/// Bounded slowdown with the usual 10-second interactive floor.
pub fn bounded_slowdown(wait: u64, runtime: u64) -> f64 {
    ((wait + runtime) as f64 / runtime.max(10) as f64).max(1.0)
}

/// A job currently holding processors. `requested_end` is what schedulers
/// may assume; `actual_end` is when the simulator really releases it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunningJob {
    pub job_id: u64,
    pub processors: u32,
    pub actual_end: u64,
    pub requested_end: u64,
}

/// Processor accounting plus the set of running jobs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterState {
    pub total_processors: u32,
    pub free_processors: u32,
    pub running: Vec<RunningJob>,
}

impl ClusterState {
    pub fn idle(total: u32) -> Self {
        Self { total_processors: total, free_processors: total, running: Vec::new() }
    }

    pub fn fits(&self, processors: u32) -> bool {
        processors <= self.free_processors
    }

    fn allocate(&mut self, job: &Job, now: u64) {
        debug_assert!(self.fits(job.requested_processors));
        self.free_processors -= job.requested_processors;
        self.running.push(RunningJob {
            job_id: job.job_id,
            processors: job.requested_processors,
            actual_end: now + job.actual_runtime,
            requested_end: now + job.requested_time,
        });
    }

    fn check_conservation(&self) {
        debug_assert_eq!(
            self.free_processors + self.running.iter().map(|r| r.processors).sum::<u32>(),
            self.total_processors,
            "processor conservation violated"
        );
    }
}

/// A pending job together with how long it has waited so far.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingJob {
    pub job: Job,
    pub wait_so_far: u64,
}

impl PendingJob {
    pub fn at(job: Job, now: u64) -> Self {
        let wait_so_far = now.saturating_sub(job.submit_time);
        Self { job, wait_so_far }
    }
}

/// One scheduled job's outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JobRecord {
    pub job_id: u64,
    pub user_id: Option<u32>,
    pub submit: u64,
    pub start: u64,
    pub end: u64,
    pub processors: u32,
}

impl JobRecord {
    pub fn wait(&self) -> u64 {
        self.start - self.submit
    }

    pub fn runtime(&self) -> u64 {
        self.end - self.start
    }
}

/// Full schedule outcome: per-job rows (sorted by job id) and the horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleRecord {
    pub rows: Vec<JobRecord>,
    pub first_submit: u64,
    pub last_completion: u64,
}

impl ScheduleRecord {
    pub fn from_rows(mut rows: Vec<JobRecord>) -> Self {
        rows.sort_by_key(|r| r.job_id);
        let first_submit = rows.iter().map(|r| r.submit).min().unwrap_or(0);
        let last_completion = rows.iter().map(|r| r.end).max().unwrap_or(0);
        Self { rows, first_submit, last_completion }
    }

    /// CSV export with one row per job.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("job_id,user_id,submit,start,end,procs,wait,bsld\n");
        for r in &self.rows {
            let user = r.user_id.map(|u| u as i64).unwrap_or(-1);
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.job_id,
                user,
                r.submit,
                r.start,
                r.end,
                r.processors,
                r.wait(),
                bounded_slowdown(r.wait(), r.runtime()),
            );
        }
        out
    }
}

/// Aggregate schedule metrics. Means run over jobs in ascending job-id
/// order so independent recomputations land on identical floats.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleMetrics {
    pub avg_bounded_slowdown: f64,
    pub avg_slowdown: f64,
    pub avg_wait: f64,
    pub avg_turnaround: f64,
    pub utilization: f64,
    pub per_user_avg_bsld: BTreeMap<u32, f64>,
}

impl ScheduleMetrics {
    /// The metric value for one optimization goal, in its natural units.
    pub fn goal_value(&self, goal: Goal) -> Option<f64> {
        match goal {
            Goal::AvgBoundedSlowdown => Some(self.avg_bounded_slowdown),
            Goal::AvgSlowdown => Some(self.avg_slowdown),
            Goal::AvgWait => Some(self.avg_wait),
            Goal::Utilization => Some(self.utilization),
            Goal::FairMaxUserBsld => {
                self.per_user_avg_bsld.values().cloned().fold(None, |acc, v| {
                    Some(match acc {
                        None => v,
                        Some(a) if v > a => v,
                        Some(a) => a,
                    })
                })
            }
        }
    }
}

/// Time-integral of allocated processors over the horizon, normalized by
/// cluster capacity. Exact integer arithmetic until the final division.
pub fn utilization(record: &ScheduleRecord, cluster_size: u32) -> f64 {
    let horizon = record.last_completion.saturating_sub(record.first_submit);
    if horizon == 0 {
        return 0.0;
    }
    let used: u128 =
        record.rows.iter().map(|r| r.processors as u128 * r.runtime() as u128).sum();
    used as f64 / (cluster_size as u128 * horizon as u128) as f64
}

pub fn metrics_from_record(record: &ScheduleRecord, cluster_size: u32) -> ScheduleMetrics {
    let n = record.rows.len().max(1) as f64;
    let mut sum_bsld = 0.0;
    let mut sum_slow = 0.0;
    let mut sum_wait = 0.0;
    let mut sum_run = 0.0;
    let mut user_sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in &record.rows {
        let bsld = bounded_slowdown(r.wait(), r.runtime());
        sum_bsld += bsld;
        sum_slow += (r.wait() + r.runtime()) as f64 / r.runtime().max(1) as f64;
        sum_wait += r.wait() as f64;
        sum_run += r.runtime() as f64;
        if let Some(u) = r.user_id {
            let e = user_sums.entry(u).or_insert((0.0, 0));
            e.0 += bsld;
            e.1 += 1;
        }
    }
    let avg_wait = sum_wait / n;
    let avg_runtime = sum_run / n;
    ScheduleMetrics {
        avg_bounded_slowdown: sum_bsld / n,
        avg_slowdown: sum_slow / n,
        avg_wait,
        avg_turnaround: avg_wait + avg_runtime,
        utilization: utilization(record, cluster_size),
        per_user_avg_bsld: user_sums
            .into_iter()
            .map(|(u, (s, c))| (u, s / c as f64))
            .collect(),
    }
}

/// Fixed-size agent state: one feature row per visible pending job, padded
/// with zero rows that are masked illegal.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationMatrix {
    pub rows: Vec<[f64; JOB_FEATURES]>,
    pub legal: Vec<bool>,
    pub slot_to_queue_index: Vec<Option<usize>>,
}

impl ObservationMatrix {
    pub fn size(&self) -> usize {
        self.rows.len()
    }

    pub fn legal_slots(&self) -> impl Iterator<Item = usize> + '_ {
        self.legal.iter().enumerate().filter(|(_, &l)| l).map(|(i, _)| i)
    }

    /// Flatten to `size * JOB_FEATURES` reals, padded rows included.
    pub fn flattened(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows.len() * JOB_FEATURES);
        for row in &self.rows {
            out.extend_from_slice(row);
        }
        out
    }
}

/// Normalization caps for observation features.
#[derive(Debug, Clone, Copy)]
pub struct ObsNorm {
    pub time_cap: u64,
    pub cluster_size: u32,
}

impl ObsNorm {
    fn time(&self, v: u64) -> f64 {
        (v as f64 / self.time_cap.max(1) as f64).clamp(0.0, 1.0)
    }

    fn procs(&self, v: u32) -> f64 {
        (v as f64 / self.cluster_size.max(1) as f64).clamp(0.0, 1.0)
    }
}

/// Build the agent state from a pending queue. When more than `max_obsv`
/// jobs wait, the earliest-submitted ones are kept (FCFS cut-off). Feature
/// order per row: wait, requested time, requested processors, fits-now
/// flag, free processors; the first three are normalized by the caps.
pub fn build_observation(
    queue: &[PendingJob],
    cluster: &ClusterState,
    norm: &ObsNorm,
    max_obsv: usize,
    mask_non_runnable: bool,
) -> ObservationMatrix {
    let mut order: Vec<usize> = (0..queue.len()).collect();
    order.sort_by_key(|&i| (queue[i].job.submit_time, queue[i].job.job_id));
    order.truncate(max_obsv);

    let mut rows = vec![[0.0; JOB_FEATURES]; max_obsv];
    let mut legal = vec![false; max_obsv];
    let mut slot_to_queue_index = vec![None; max_obsv];
    let free_frac = norm.procs(cluster.free_processors);
    for (slot, &qi) in order.iter().enumerate() {
        let p = &queue[qi];
        let can_run = cluster.fits(p.job.requested_processors);
        rows[slot] = [
            norm.time(p.wait_so_far),
            norm.time(p.job.requested_time),
            norm.procs(p.job.requested_processors),
            if can_run { 1.0 } else { 0.0 },
            free_frac,
        ];
        legal[slot] = if mask_non_runnable { can_run } else { true };
        slot_to_queue_index[slot] = Some(qi);
    }
    ObservationMatrix { rows, legal, slot_to_queue_index }
}

/// Earliest time `processors` could be available, assuming every running
/// job releases at its requested end (clamped to `now` for overruns).
pub fn reservation_start_estimate(cluster: &ClusterState, processors: u32, now: u64) -> u64 {
    if cluster.fits(processors) {
        return now;
    }
    let mut releases: Vec<(u64, u64, u32)> = cluster
        .running
        .iter()
        .map(|r| (r.requested_end.max(now), r.job_id, r.processors))
        .collect();
    releases.sort_unstable();
    let mut free = cluster.free_processors;
    for (t, _, p) in releases {
        free += p;
        if free >= processors {
            return t;
        }
    }
    // All jobs released means the whole cluster is free.
    debug_assert!(cluster.total_processors >= processors);
    now
}

/// Queue indices (in admission order) of jobs that can start now without
/// pushing the reservation at `t_res` later. A candidate must fit the free
/// processors and either finish (by its requested time, boundary inclusive)
/// before `t_res`, or fit the processors left over at `t_res` once the
/// reserved job's share is set aside.
pub fn backfill_plan(
    cluster: &ClusterState,
    reserved_processors: u32,
    t_res: u64,
    queue: &[PendingJob],
    now: u64,
) -> Vec<usize> {
    let occupied_at_res: u32 = cluster
        .running
        .iter()
        .filter(|r| r.requested_end.max(now) > t_res)
        .map(|r| r.processors)
        .sum();
    let free_at_res = cluster.total_processors - occupied_at_res;
    debug_assert!(free_at_res >= reserved_processors);
    let mut long_budget = free_at_res - reserved_processors;
    let mut free_now = cluster.free_processors;

    let mut order: Vec<usize> = (0..queue.len()).collect();
    order.sort_by_key(|&i| (queue[i].job.submit_time, queue[i].job.job_id));

    let mut picked = Vec::new();
    for qi in order {
        let job = &queue[qi].job;
        if job.requested_processors > free_now {
            continue;
        }
        if now + job.requested_time <= t_res {
            free_now -= job.requested_processors;
            picked.push(qi);
        } else if job.requested_processors <= long_budget {
            free_now -= job.requested_processors;
            long_budget -= job.requested_processors;
            picked.push(qi);
        }
    }
    picked
}

/// A reservation made for a job that did not fit when selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReservationEvent {
    pub job_id: u64,
    pub reserved_at: u64,
    pub estimated_start: u64,
    pub realized_start: Option<u64>,
}

/// Per-episode environment configuration.
#[derive(Debug, Clone, Copy)]
pub struct EnvOptions {
    pub goal: Goal,
    pub backfilling: bool,
    pub max_obsv_size: usize,
    /// When set, jobs that cannot start immediately are masked illegal
    /// instead of triggering a reservation.
    pub mask_non_runnable: bool,
}

impl Default for EnvOptions {
    fn default() -> Self {
        Self {
            goal: Goal::AvgBoundedSlowdown,
            backfilling: true,
            max_obsv_size: DEFAULT_MAX_OBSV_SIZE,
            mask_non_runnable: false,
        }
    }
}

/// Result of one environment step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Option<ObservationMatrix>,
    pub reward: f64,
    pub done: bool,
}

/// The scheduling environment for one episode.
pub struct SchedEnv {
    sequence: JobSequence,
    opts: EnvOptions,
    norm: ObsNorm,
    now: u64,
    cluster: ClusterState,
    pending: Vec<Job>,
    next_arrival: usize,
    waiting: Option<Job>,
    records: Vec<JobRecord>,
    reservations: Vec<ReservationEvent>,
    current_obs: Option<ObservationMatrix>,
    done: bool,
}

impl SchedEnv {
    pub fn new(sequence: JobSequence, opts: EnvOptions) -> Result<Self, SimError> {
        if sequence.jobs.is_empty() {
            return Err(SimError::EmptySequence);
        }
        let norm = ObsNorm { time_cap: sequence.time_cap, cluster_size: sequence.cluster_size };
        let mut env = Self {
            cluster: ClusterState::idle(sequence.cluster_size),
            sequence,
            opts,
            norm,
            now: 0,
            pending: Vec::new(),
            next_arrival: 0,
            waiting: None,
            records: Vec::new(),
            reservations: Vec::new(),
            current_obs: None,
            done: false,
        };
        env.reset();
        Ok(env)
    }

    /// Restart the episode: idle cluster, clock at the first submit time,
    /// every job submitted at that instant pending.
    pub fn reset(&mut self) -> ObservationMatrix {
        self.cluster = ClusterState::idle(self.sequence.cluster_size);
        self.pending.clear();
        self.records.clear();
        self.reservations.clear();
        self.waiting = None;
        self.done = false;
        self.next_arrival = 0;
        let first = self.sequence.jobs[0].submit_time;
        self.now = first;
        while self.next_arrival < self.sequence.jobs.len()
            && self.sequence.jobs[self.next_arrival].submit_time == first
        {
            let job = self.sequence.jobs[self.next_arrival].clone();
            self.insert_pending(job);
            self.next_arrival += 1;
        }
        self.advance();
        debug_assert!(!self.done, "episode finished during reset");
        self.current_observation()
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn cluster(&self) -> &ClusterState {
        &self.cluster
    }

    pub fn goal(&self) -> Goal {
        self.opts.goal
    }

    pub fn reservation_log(&self) -> &[ReservationEvent] {
        &self.reservations
    }

    /// Pending jobs in FCFS order with their waits at the current clock.
    pub fn pending_view(&self) -> Vec<PendingJob> {
        self.pending.iter().map(|j| PendingJob::at(j.clone(), self.now)).collect()
    }

    /// The observation the agent should act on right now.
    pub fn current_observation(&mut self) -> ObservationMatrix {
        if self.current_obs.is_none() {
            let queue = self.pending_view();
            self.current_obs = Some(build_observation(
                &queue,
                &self.cluster,
                &self.norm,
                self.opts.max_obsv_size,
                self.opts.mask_non_runnable,
            ));
        }
        self.current_obs.clone().expect("observation just built")
    }

    /// Schedule record once every job in the sequence has been started.
    pub fn record(&self) -> Option<ScheduleRecord> {
        if self.records.len() == self.sequence.jobs.len() {
            Some(ScheduleRecord::from_rows(self.records.clone()))
        } else {
            None
        }
    }

    pub fn metrics(&self) -> Option<ScheduleMetrics> {
        self.record().map(|r| metrics_from_record(&r, self.sequence.cluster_size))
    }

    /// Act on an observation slot. Training code must mask illegal slots;
    /// hitting one here is a programming error surfaced as `IllegalAction`.
    pub fn step(&mut self, slot: usize) -> Result<StepOutcome, SimError> {
        if self.done {
            return Err(SimError::EpisodeDone);
        }
        let obs = self.current_observation();
        if slot >= obs.legal.len() || !obs.legal[slot] {
            return Err(SimError::IllegalAction { slot });
        }
        let queue_index =
            obs.slot_to_queue_index[slot].ok_or(SimError::IllegalAction { slot })?;
        self.step_queue(queue_index)
    }

    /// Act by pending-queue index, bypassing the observation cut-off. This
    /// is the path heuristic schedulers use on queues longer than the
    /// observation window.
    pub fn step_queue(&mut self, queue_index: usize) -> Result<StepOutcome, SimError> {
        if self.done {
            return Err(SimError::EpisodeDone);
        }
        if queue_index >= self.pending.len() {
            return Err(SimError::BadQueueIndex { index: queue_index, len: self.pending.len() });
        }
        debug_assert!(self.waiting.is_none());
        let job = self.pending.remove(queue_index);
        self.current_obs = None;
        self.commit(job);
        self.advance();
        if self.done {
            let metrics = self.metrics().expect("all jobs started at episode end");
            let reward = sequence_reward(&metrics, self.opts.goal).unwrap_or(0.0);
            Ok(StepOutcome { observation: None, reward, done: true })
        } else {
            Ok(StepOutcome { observation: Some(self.current_observation()), reward: 0.0, done: false })
        }
    }

    fn insert_pending(&mut self, job: Job) {
        let key = (job.submit_time, job.job_id);
        let pos = self
            .pending
            .partition_point(|j| (j.submit_time, j.job_id) <= key);
        self.pending.insert(pos, job);
    }

    fn start_job(&mut self, job: &Job) {
        debug_assert!(job.submit_time <= self.now, "job started before submission");
        self.records.push(JobRecord {
            job_id: job.job_id,
            user_id: job.user_id,
            submit: job.submit_time,
            start: self.now,
            end: self.now + job.actual_runtime,
            processors: job.requested_processors,
        });
        self.cluster.allocate(job, self.now);
        self.cluster.check_conservation();
    }

    fn commit(&mut self, job: Job) {
        if self.cluster.fits(job.requested_processors) {
            self.start_job(&job);
            return;
        }
        let t_res = reservation_start_estimate(&self.cluster, job.requested_processors, self.now);
        self.reservations.push(ReservationEvent {
            job_id: job.job_id,
            reserved_at: self.now,
            estimated_start: t_res,
            realized_start: None,
        });
        if self.opts.backfilling {
            let queue = self.pending_view();
            let plan = backfill_plan(&self.cluster, job.requested_processors, t_res, &queue, self.now);
            let mut picked = plan;
            picked.sort_unstable();
            for &qi in picked.iter().rev() {
                let candidate = self.pending.remove(qi);
                self.start_job(&candidate);
            }
            debug_assert!(
                reservation_start_estimate(&self.cluster, job.requested_processors, self.now)
                    <= t_res,
                "backfilling moved the reservation later"
            );
        }
        self.waiting = Some(job);
    }

    /// Advance the clock until the next decision point: the reserved job
    /// (if any) has started and at least one pending job is actionable.
    fn advance(&mut self) {
        loop {
            self.cluster.check_conservation();
            if self.waiting.is_none() {
                if !self.pending.is_empty() && self.has_actionable_job() {
                    return;
                }
                if self.pending.is_empty()
                    && self.next_arrival == self.sequence.jobs.len()
                {
                    debug_assert_eq!(self.records.len(), self.sequence.jobs.len());
                    self.done = true;
                    return;
                }
            }

            let next_completion = self
                .cluster
                .running
                .iter()
                .map(|r| (r.actual_end, r.job_id))
                .min();
            let next_arrival_time = self.sequence.jobs.get(self.next_arrival).map(|j| j.submit_time);
            let t = match (next_completion, next_arrival_time) {
                (Some((tc, _)), Some(ta)) => tc.min(ta),
                (Some((tc, _)), None) => tc,
                (None, Some(ta)) => ta,
                (None, None) => {
                    // Nothing running and nothing due: with an empty cluster
                    // any pending or reserved job fits, so this is only
                    // reachable with an empty queue.
                    debug_assert!(self.waiting.is_none() && self.pending.is_empty());
                    self.done = true;
                    return;
                }
            };
            debug_assert!(t >= self.now, "event time went backwards");
            self.now = t;

            // Completions first. Everything ending at this instant frees
            // its processors before the reserved start or any arrival is
            // looked at, so batch order among equals is unobservable.
            let mut finished: Vec<usize> = self
                .cluster
                .running
                .iter()
                .enumerate()
                .filter(|(_, r)| r.actual_end == t)
                .map(|(i, _)| i)
                .collect();
            finished.sort_unstable();
            for &i in finished.iter().rev() {
                let r = self.cluster.running.remove(i);
                self.cluster.free_processors += r.processors;
            }
            self.cluster.check_conservation();

            // The reserved job starts as soon as it fits, before arrivals
            // at the same instant are considered.
            if let Some(w) = &self.waiting {
                if self.cluster.fits(w.requested_processors) {
                    let job = self.waiting.take().expect("reserved job present");
                    if let Some(ev) =
                        self.reservations.iter_mut().rev().find(|e| e.job_id == job.job_id)
                    {
                        ev.realized_start = Some(self.now);
                    }
                    self.start_job(&job);
                }
            }

            while self
                .sequence
                .jobs
                .get(self.next_arrival)
                .map(|j| j.submit_time == t)
                .unwrap_or(false)
            {
                let job = self.sequence.jobs[self.next_arrival].clone();
                self.insert_pending(job);
                self.next_arrival += 1;
            }
        }
    }

    fn has_actionable_job(&self) -> bool {
        if !self.opts.mask_non_runnable {
            return !self.pending.is_empty();
        }
        self.pending
            .iter()
            .take(self.opts.max_obsv_size)
            .any(|j| self.cluster.fits(j.requested_processors))
    }
}

/// Anything that can pick the next job from a pending queue.
pub trait SchedulerPolicy {
    fn select(
        &mut self,
        queue: &[PendingJob],
        cluster: &ClusterState,
        now: u64,
    ) -> Result<usize, SimError>;

    fn name(&self) -> String;
}

/// Drive a sequence to completion under `scheduler` and report metrics.
/// With backfilling off a non-fitting selection simply blocks until enough
/// processors free up.
pub fn run_with_scheduler(
    sequence: JobSequence,
    scheduler: &mut dyn SchedulerPolicy,
    backfilling: bool,
) -> Result<ScheduleMetrics, SimError> {
    let opts = EnvOptions { backfilling, ..EnvOptions::default() };
    let mut env = SchedEnv::new(sequence, opts)?;
    loop {
        let queue = env.pending_view();
        let idx = scheduler.select(&queue, env.cluster(), env.now())?;
        let outcome = env.step_queue(idx)?;
        if outcome.done {
            return Ok(env.metrics().expect("finished episode has metrics"));
        }
    }
}
