// Each test binary pulls in the subset of oracles it needs.
#![allow(dead_code)]

//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls into the crate's simulator internals: the scheduler
//! semantics are re-implemented from scratch with different data layouts
//! and different algorithms (trial-and-recompute instead of budget
//! arithmetic, event sweeps instead of incremental accounting) so that
//! agreement between the two is meaningful.

use std::collections::BTreeMap;

use hpcsched::sim::{ClusterState, PendingJob, ScheduleMetrics};
use hpcsched::workload::{Job, JobSequence};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// A job holding processors in the oracle's world.
#[derive(Debug, Clone, Copy)]
pub struct ORunning {
    pub id: u64,
    pub procs: u32,
    pub actual_end: u64,
    pub requested_end: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ORecord {
    pub id: u64,
    pub user: Option<u32>,
    pub submit: u64,
    pub start: u64,
    pub end: u64,
    pub procs: u32,
}

/// Free processors at time `t` given a running set, counting a job as
/// occupying until its (clamped) requested end, exclusive.
fn free_at(cluster: u32, running: &[ORunning], now: u64, t: u64) -> u32 {
    let occupied: u32 = running
        .iter()
        .filter(|r| r.requested_end.max(now) > t)
        .map(|r| r.procs)
        .sum();
    cluster - occupied
}

/// Earliest time `procs` processors are projected free: sweep candidate
/// times (now plus every clamped requested end) and take the first that
/// works. Quadratic and proudly so.
pub fn earliest_fit(cluster: u32, running: &[ORunning], now: u64, procs: u32) -> u64 {
    let mut candidates: Vec<u64> = vec![now];
    candidates.extend(running.iter().map(|r| r.requested_end.max(now)));
    candidates.sort_unstable();
    candidates.dedup();
    for t in candidates {
        if free_at(cluster, running, now, t) >= procs {
            return t;
        }
    }
    unreachable!("the empty cluster fits any valid job");
}

/// Greedy FCFS backfill admission by trial: start the candidate with its
/// requested end in a scratch running set and keep it only if the reserved
/// job's recomputed earliest start does not move past its reservation.
/// Returns indices into `queue` in admission order.
pub fn oracle_backfill(
    cluster: u32,
    free_now: u32,
    running: &[ORunning],
    reserved_procs: u32,
    t_res: u64,
    queue: &[Job],
    now: u64,
) -> Vec<usize> {
    let mut shadow: Vec<ORunning> = running.to_vec();
    let mut free = free_now;
    let mut order: Vec<usize> = (0..queue.len()).collect();
    order.sort_by_key(|&i| (queue[i].submit_time, queue[i].job_id));
    let mut admitted = Vec::new();
    for qi in order {
        let job = &queue[qi];
        if job.requested_processors > free {
            continue;
        }
        let trial = ORunning {
            id: job.job_id,
            procs: job.requested_processors,
            actual_end: now + job.actual_runtime,
            requested_end: now + job.requested_time,
        };
        shadow.push(trial);
        let new_start = earliest_fit(cluster, &shadow, now, reserved_procs);
        if new_start <= t_res {
            free -= job.requested_processors;
            admitted.push(qi);
        } else {
            shadow.pop();
        }
    }
    admitted
}

/// Straight-line re-simulation: chronological event loop with plain
/// rescans, no incremental state. `select` picks a queue index from the
/// FCFS-ordered pending queue.
pub fn oracle_schedule(
    sequence: &JobSequence,
    mut select: impl FnMut(&[Job], u64) -> usize,
    backfilling: bool,
) -> Vec<ORecord> {
    let cluster = sequence.cluster_size;
    let mut arrivals: Vec<Job> = sequence.jobs.clone();
    arrivals.sort_by_key(|j| (j.submit_time, j.job_id));
    let mut next_arrival = 0usize;
    let mut queue: Vec<Job> = Vec::new();
    let mut running: Vec<ORunning> = Vec::new();
    let mut records: Vec<ORecord> = Vec::new();
    let mut now = arrivals[0].submit_time;

    // Pull in everything submitted at the opening instant.
    while next_arrival < arrivals.len() && arrivals[next_arrival].submit_time == now {
        queue.push(arrivals[next_arrival].clone());
        next_arrival += 1;
    }

    let free =
        |running: &[ORunning]| cluster - running.iter().map(|r| r.procs).sum::<u32>();
    let start = |job: &Job,
                 now: u64,
                 running: &mut Vec<ORunning>,
                 records: &mut Vec<ORecord>| {
        running.push(ORunning {
            id: job.job_id,
            procs: job.requested_processors,
            actual_end: now + job.actual_runtime,
            requested_end: now + job.requested_time,
        });
        records.push(ORecord {
            id: job.job_id,
            user: job.user_id,
            submit: job.submit_time,
            start: now,
            end: now + job.actual_runtime,
            procs: job.requested_processors,
        });
    };

    while records.len() < sequence.jobs.len() {
        if queue.is_empty() {
            // Advance to the next event.
            let tc = running.iter().map(|r| (r.actual_end, r.id)).min();
            let ta = arrivals.get(next_arrival).map(|j| j.submit_time);
            let t = match (tc, ta) {
                (Some((tc, _)), Some(ta)) => tc.min(ta),
                (Some((tc, _)), None) => tc,
                (None, Some(ta)) => ta,
                (None, None) => break,
            };
            now = t;
            let mut done: Vec<u64> = running
                .iter()
                .filter(|r| r.actual_end == t)
                .map(|r| r.id)
                .collect();
            done.sort_unstable();
            for id in done {
                running.retain(|r| r.id != id);
            }
            while next_arrival < arrivals.len() && arrivals[next_arrival].submit_time == t {
                queue.push(arrivals[next_arrival].clone());
                next_arrival += 1;
            }
            continue;
        }

        queue.sort_by_key(|j| (j.submit_time, j.job_id));
        let pick = select(&queue, now);
        let job = queue.remove(pick);

        if job.requested_processors <= free(&running) {
            start(&job, now, &mut running, &mut records);
            continue;
        }

        // Reservation plus one backfill pass, then block until it fits.
        let t_res = earliest_fit(cluster, &running, now, job.requested_processors);
        if backfilling {
            let admitted = oracle_backfill(
                cluster,
                free(&running),
                &running,
                job.requested_processors,
                t_res,
                &queue,
                now,
            );
            let mut admitted = admitted;
            admitted.sort_unstable();
            for &qi in admitted.iter().rev() {
                let candidate = queue.remove(qi);
                start(&candidate, now, &mut running, &mut records);
            }
        }
        loop {
            let tc = running.iter().map(|r| (r.actual_end, r.id)).min();
            let ta = arrivals.get(next_arrival).map(|j| j.submit_time);
            let t = match (tc, ta) {
                (Some((tc, _)), Some(ta)) => tc.min(ta),
                (Some((tc, _)), None) => tc,
                _ => unreachable!("a blocked job implies something is running"),
            };
            now = t;
            let mut done: Vec<u64> = running
                .iter()
                .filter(|r| r.actual_end == t)
                .map(|r| r.id)
                .collect();
            done.sort_unstable();
            for id in done {
                running.retain(|r| r.id != id);
            }
            let fits = job.requested_processors <= free(&running);
            if fits {
                start(&job, now, &mut running, &mut records);
            }
            while next_arrival < arrivals.len() && arrivals[next_arrival].submit_time == t {
                queue.push(arrivals[next_arrival].clone());
                next_arrival += 1;
            }
            if fits {
                break;
            }
        }
    }
    records.sort_by_key(|r| r.id);
    records
}

/// Metric recomputation from oracle records, job-id order, plain formulas.
pub fn oracle_metrics(records: &[ORecord], cluster: u32) -> ScheduleMetrics {
    let n = records.len() as f64;
    let mut sum_bsld = 0.0;
    let mut sum_slow = 0.0;
    let mut sum_wait = 0.0;
    let mut sum_run = 0.0;
    let mut per_user: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for r in records {
        let wait = (r.start - r.submit) as f64;
        let run = (r.end - r.start) as f64;
        let bsld = ((wait + run) / run.max(10.0)).max(1.0);
        sum_bsld += bsld;
        sum_slow += (wait + run) / run.max(1.0);
        sum_wait += wait;
        sum_run += run;
        if let Some(u) = r.user {
            let e = per_user.entry(u).or_insert((0.0, 0));
            e.0 += bsld;
            e.1 += 1;
        }
    }
    let first = records.iter().map(|r| r.submit).min().unwrap_or(0);
    let last = records.iter().map(|r| r.end).max().unwrap_or(0);
    let horizon = last.saturating_sub(first);
    let used: u128 = records.iter().map(|r| r.procs as u128 * (r.end - r.start) as u128).sum();
    let utilization =
        if horizon == 0 { 0.0 } else { used as f64 / (cluster as u128 * horizon as u128) as f64 };
    ScheduleMetrics {
        avg_bounded_slowdown: sum_bsld / n,
        avg_slowdown: sum_slow / n,
        avg_wait: sum_wait / n,
        avg_turnaround: sum_wait / n + sum_run / n,
        utilization,
        per_user_avg_bsld: per_user.into_iter().map(|(u, (s, c))| (u, s / c as f64)).collect(),
    }
}

/// Table II formulas re-stated directly, same guards as the spec text.
pub fn oracle_score(kind: &str, job: &PendingJob, _now: u64) -> f64 {
    let w = job.wait_so_far as f64;
    let r = job.job.requested_time.max(1) as f64;
    let n = job.job.requested_processors as f64;
    let s = job.job.submit_time as f64;
    match kind {
        "fcfs" => s,
        "sjf" => job.job.requested_time as f64,
        "wfp3" => -(w / r) * (w / r) * (w / r) * n,
        "unicep" => -w / ((job.job.requested_processors.max(2) as f64).log2() * r),
        "f1" => r.log10() * n + 870.0 * s.max(1.0).log10(),
        other => panic!("unknown heuristic {other}"),
    }
}

/// Argmin with the (submit, id) tie-break, computed without reusing the
/// crate's comparison code.
pub fn oracle_argmin(kind: &str, queue: &[PendingJob], now: u64) -> usize {
    let scored: Vec<(f64, u64, u64, usize)> = queue
        .iter()
        .enumerate()
        .map(|(i, p)| (oracle_score(kind, p, now), p.job.submit_time, p.job.job_id, i))
        .collect();
    scored
        .iter()
        .min_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        })
        .expect("nonempty queue")
        .3
}

/// Random job sets for small-scale exhaustive comparisons. Requested time
/// never understates the actual runtime, so reservation promises hold.
pub fn random_jobs(
    rng: &mut ChaCha8Rng,
    count: usize,
    cluster: u32,
    max_runtime: u64,
    overrequest: bool,
) -> Vec<Job> {
    let mut submit = 0u64;
    (0..count)
        .map(|i| {
            submit += rng.gen_range(0..=max_runtime / 2);
            let actual = rng.gen_range(1..=max_runtime);
            let requested = if overrequest {
                (actual as f64 * rng.gen_range(1.0..3.0)).ceil() as u64
            } else {
                actual
            };
            Job {
                job_id: i as u64 + 1,
                submit_time: submit,
                requested_processors: rng.gen_range(1..=cluster),
                requested_time: requested,
                actual_runtime: actual,
                user_id: Some(rng.gen_range(0..3)),
            }
        })
        .collect()
}

pub fn sequence_of(jobs: Vec<Job>, cluster: u32) -> JobSequence {
    let time_cap = jobs.iter().map(|j| j.requested_time).max().unwrap_or(1).max(1);
    let base = jobs.iter().map(|j| j.submit_time).min().unwrap_or(0);
    let mut jobs = jobs;
    for j in &mut jobs {
        j.submit_time -= base;
    }
    jobs.sort_by_key(|j| (j.submit_time, j.job_id));
    JobSequence { jobs, cluster_size: cluster, time_cap }
}

/// Convert crate pending views into plain jobs for the oracle.
pub fn jobs_of(queue: &[PendingJob]) -> Vec<Job> {
    queue.iter().map(|p| p.job.clone()).collect()
}

/// The crate's running set translated into oracle form.
pub fn orunning_of(cluster: &ClusterState) -> Vec<ORunning> {
    cluster
        .running
        .iter()
        .map(|r| ORunning {
            id: r.job_id,
            procs: r.processors,
            actual_end: r.actual_end,
            requested_end: r.requested_end,
        })
        .collect()
}

/// Deterministic RNG for test scenarios.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
