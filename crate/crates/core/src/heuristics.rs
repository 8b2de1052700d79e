//! Priority-function schedulers. Each heuristic maps a pending job to a
//! score; the job with the lowest score runs next. WFP3 and UNICEP favor
//! long-waiting, short, narrow jobs through negative scores, so a freshly
//! submitted job scores 0, the worst possible value for them.

use std::str::FromStr;

use crate::error::SimError;
use crate::sim::{ClusterState, PendingJob, SchedulerPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HeuristicKind {
    Fcfs,
    Sjf,
    Wfp3,
    Unicep,
    F1,
}

impl HeuristicKind {
    pub const ALL: [HeuristicKind; 5] = [
        HeuristicKind::Fcfs,
        HeuristicKind::Sjf,
        HeuristicKind::Wfp3,
        HeuristicKind::Unicep,
        HeuristicKind::F1,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeuristicKind::Fcfs => "fcfs",
            HeuristicKind::Sjf => "sjf",
            HeuristicKind::Wfp3 => "wfp3",
            HeuristicKind::Unicep => "unicep",
            HeuristicKind::F1 => "f1",
        }
    }
}

impl FromStr for HeuristicKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fcfs" => Ok(HeuristicKind::Fcfs),
            "sjf" => Ok(HeuristicKind::Sjf),
            "wfp3" => Ok(HeuristicKind::Wfp3),
            "unicep" => Ok(HeuristicKind::Unicep),
            "f1" => Ok(HeuristicKind::F1),
            other => Err(format!("unknown scheduler {other:?}")),
        }
    }
}

/// Priority score for one pending job; lower runs first.
///
/// Guards: the requested time is clamped to one second before divisions and
/// logarithms, the processor count to two inside UNICEP's log2, and the
/// submit time to one second inside F1's log10 (re-based sequences start at
/// submit time zero).
pub fn score(kind: HeuristicKind, job: &PendingJob, now: u64) -> f64 {
    debug_assert!(now >= job.job.submit_time);
    let wait = job.wait_so_far as f64;
    let req_time = job.job.requested_time.max(1) as f64;
    let procs = job.job.requested_processors as f64;
    match kind {
        HeuristicKind::Fcfs => job.job.submit_time as f64,
        HeuristicKind::Sjf => job.job.requested_time as f64,
        HeuristicKind::Wfp3 => -(wait / req_time).powi(3) * procs,
        HeuristicKind::Unicep => {
            let log_procs = (job.job.requested_processors.max(2) as f64).log2();
            -wait / (log_procs * req_time)
        }
        HeuristicKind::F1 => {
            let submit = job.job.submit_time.max(1) as f64;
            req_time.log10() * procs + 870.0 * submit.log10()
        }
    }
}

/// Index of the minimal-score job; ties break on earlier submit time, then
/// lower job id.
pub fn select(kind: HeuristicKind, queue: &[PendingJob], now: u64) -> Result<usize, SimError> {
    if queue.is_empty() {
        return Err(SimError::EmptyQueue);
    }
    let mut best = 0usize;
    let mut best_score = score(kind, &queue[0], now);
    for (i, p) in queue.iter().enumerate().skip(1) {
        let s = score(kind, p, now);
        let better = s < best_score
            || (s == best_score
                && (p.job.submit_time, p.job.job_id)
                    < (queue[best].job.submit_time, queue[best].job.job_id));
        if better {
            best = i;
            best_score = s;
        }
    }
    Ok(best)
}

/// A heuristic as a `SchedulerPolicy`.
#[derive(Debug, Clone, Copy)]
pub struct Heuristic {
    kind: HeuristicKind,
}

impl Heuristic {
    pub fn new(kind: HeuristicKind) -> Self {
        Self { kind }
    }

    pub fn kind(&self) -> HeuristicKind {
        self.kind
    }
}

impl SchedulerPolicy for Heuristic {
    fn select(
        &mut self,
        queue: &[PendingJob],
        _cluster: &ClusterState,
        now: u64,
    ) -> Result<usize, SimError> {
        select(self.kind, queue, now)
    }

    fn name(&self) -> String {
        self.kind.name().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::workload::Job;

    fn pending(id: u64, submit: u64, req_time: u64, procs: u32, now: u64) -> PendingJob {
        PendingJob::at(
            Job {
                job_id: id,
                submit_time: submit,
                requested_processors: procs,
                requested_time: req_time,
                actual_runtime: req_time,
                user_id: None,
            },
            now,
        )
    }

    #[test]
    fn wfp3_hand_value() {
        let p = pending(1, 0, 100, 4, 100);
        assert_eq!(score(HeuristicKind::Wfp3, &p, 100), -4.0);
    }

    #[test]
    fn f1_hand_value() {
        let p = pending(1, 1000, 100, 4, 1000);
        assert_eq!(score(HeuristicKind::F1, &p, 1000), 2.0 * 4.0 + 870.0 * 3.0);
    }

    #[test]
    fn sjf_is_requested_time() {
        let p = pending(1, 5, 777, 4, 10);
        assert_eq!(score(HeuristicKind::Sjf, &p, 10), 777.0);
    }

    #[test]
    fn fresh_job_scores_zero_for_wfp3_and_unicep() {
        let p = pending(1, 50, 100, 4, 50);
        assert_eq!(score(HeuristicKind::Wfp3, &p, 50), 0.0);
        assert_eq!(score(HeuristicKind::Unicep, &p, 50), 0.0);
    }

    #[test]
    fn guards_keep_scores_finite() {
        // Zero requested time, one processor, zero submit time: every
        // singularity at once.
        let p = pending(1, 0, 0, 1, 100);
        for kind in HeuristicKind::ALL {
            assert!(score(kind, &p, 100).is_finite(), "{kind:?} produced a non-finite score");
        }
    }

    #[test]
    fn select_single_job() {
        let q = vec![pending(1, 0, 10, 1, 5)];
        for kind in HeuristicKind::ALL {
            assert_eq!(select(kind, &q, 5).unwrap(), 0);
        }
    }

    #[test]
    fn select_empty_queue_errors() {
        assert!(matches!(select(HeuristicKind::Fcfs, &[], 0), Err(SimError::EmptyQueue)));
    }

    #[test]
    fn fcfs_picks_earliest_submit_in_shuffled_queue() {
        let q = vec![
            pending(4, 40, 10, 1, 100),
            pending(2, 10, 10, 1, 100),
            pending(3, 25, 10, 1, 100),
        ];
        assert_eq!(select(HeuristicKind::Fcfs, &q, 100).unwrap(), 1);
    }

    #[test]
    fn ties_break_on_submit_then_id() {
        // Identical SJF scores; earlier submit wins, then lower id.
        let q = vec![
            pending(9, 30, 50, 1, 100),
            pending(2, 10, 50, 1, 100),
            pending(1, 10, 50, 1, 100),
        ];
        assert_eq!(select(HeuristicKind::Sjf, &q, 100).unwrap(), 2);
    }

    #[test]
    fn selection_commutes_with_permutation() {
        // select(perm(queue)) lands on the same job as perm(select(queue)).
        let base = vec![
            pending(1, 0, 500, 8, 600),
            pending(2, 30, 20, 1, 600),
            pending(3, 60, 90, 2, 600),
            pending(4, 90, 90, 16, 600),
            pending(5, 120, 7, 4, 600),
        ];
        let perm = [3usize, 0, 4, 2, 1];
        let permuted: Vec<PendingJob> = perm.iter().map(|&i| base[i].clone()).collect();
        for kind in HeuristicKind::ALL {
            let orig = select(kind, &base, 600).unwrap();
            let perm_idx = select(kind, &permuted, 600).unwrap();
            assert_eq!(permuted[perm_idx].job.job_id, base[orig].job.job_id, "{kind:?}");
        }
    }

    #[test]
    fn argmin_invariance_under_monotone_transform() {
        // Scaling and shifting SJF/FCFS scores cannot change the argmin.
        let q = vec![
            pending(1, 12, 300, 2, 400),
            pending(2, 70, 80, 4, 400),
            pending(3, 200, 150, 1, 400),
        ];
        for kind in [HeuristicKind::Sjf, HeuristicKind::Fcfs] {
            let idx = select(kind, &q, 400).unwrap();
            let transformed: Vec<f64> =
                q.iter().map(|p| 3.0 * score(kind, p, 400) + 17.0).collect();
            let oracle = transformed
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(idx, oracle);
        }
    }
}
