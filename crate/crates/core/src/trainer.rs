//! Policy-gradient training: trajectory collection with optional filtering,
//! generalized advantage estimation, clipped-surrogate updates for the
//! kernel policy and squared-error updates for the value network.
//!
//! An epoch collects 100 trajectories of 256 consecutive jobs each, then
//! runs 80 update iterations on the policy network and 80 on the value
//! network over the whole batch at learning rate 1e-3. Rewards are deferred:
//! every step pays 0 and the final step pays the whole sequence's metric,
//! so with gamma = 1 each step's return equals the terminal reward.
//!
//! Trajectory filtering tames high-variance traces: sequences whose
//! SJF-scheduled metric falls outside (median, 2*mean) of a sampled metric
//! distribution are rejected during the first training phase.

use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::TrainError;
use crate::heuristics::{Heuristic, HeuristicKind};
use crate::neural::{
    active_prefix_len, policy_argmax, policy_forward, policy_sample, value_forward, Adam,
    BackpropScratch, MlpCache, MlpGrads, PolicyNet, ValueNet,
};
use crate::sim::{
    build_observation, run_with_scheduler, ClusterState, EnvOptions, ObsNorm, ObservationMatrix,
    PendingJob, SchedEnv, ScheduleMetrics, SchedulerPolicy, DEFAULT_MAX_OBSV_SIZE, JOB_FEATURES,
};
use crate::workload::{sample_sequence, JobTrace};
use crate::SimError;

/// What the scheduler optimizes. Each goal maps to one sequence reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    AvgBoundedSlowdown,
    AvgSlowdown,
    AvgWait,
    Utilization,
    FairMaxUserBsld,
}

impl Goal {
    pub fn name(self) -> &'static str {
        match self {
            Goal::AvgBoundedSlowdown => "bsld",
            Goal::AvgSlowdown => "slowdown",
            Goal::AvgWait => "wait",
            Goal::Utilization => "util",
            Goal::FairMaxUserBsld => "fairness",
        }
    }

    /// Per-user goals need every job to carry a user id.
    pub fn needs_user_info(self) -> bool {
        matches!(self, Goal::FairMaxUserBsld)
    }
}

impl FromStr for Goal {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bsld" => Ok(Goal::AvgBoundedSlowdown),
            "slowdown" => Ok(Goal::AvgSlowdown),
            "wait" => Ok(Goal::AvgWait),
            "util" => Ok(Goal::Utilization),
            "fairness" => Ok(Goal::FairMaxUserBsld),
            other => Err(format!("unknown goal {other:?} (expected bsld, slowdown, wait, util or fairness)")),
        }
    }
}

/// Reward for a completed sequence: negated for minimization goals, the
/// raw utilization for the maximization goal, and the negated worst
/// per-user average bounded slowdown for the fairness goal.
pub fn sequence_reward(metrics: &ScheduleMetrics, goal: Goal) -> Result<f64, TrainError> {
    match goal {
        Goal::AvgBoundedSlowdown => Ok(-metrics.avg_bounded_slowdown),
        Goal::AvgSlowdown => Ok(-metrics.avg_slowdown),
        Goal::AvgWait => Ok(-metrics.avg_wait),
        Goal::Utilization => Ok(metrics.utilization),
        Goal::FairMaxUserBsld => {
            let worst = metrics
                .per_user_avg_bsld
                .values()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if worst == f64::NEG_INFINITY {
                Err(TrainError::MissingUserInfo)
            } else {
                Ok(-worst)
            }
        }
    }
}

/// The metric band accepted during the first training phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterRange {
    pub low: f64,
    pub high: f64,
}

impl FilterRange {
    pub fn accepts(&self, metric: f64) -> bool {
        self.low < metric && metric < self.high
    }
}

/// (median, 2 * mean) of a metric sample.
pub fn filter_range_from_samples(samples: &[f64]) -> FilterRange {
    assert!(!samples.is_empty());
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite metric samples"));
    let n = sorted.len();
    let median =
        if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
    let mean = sorted.iter().sum::<f64>() / n as f64;
    FilterRange { low: median, high: 2.0 * mean }
}

/// Filter range plus the sample set it came from.
#[derive(Debug, Clone)]
pub struct FilterEstimate {
    pub range: FilterRange,
    pub samples: Vec<f64>,
}

/// Schedule `n_samples` random 256-job sequences with SJF (backfilling on),
/// collect the goal metric, and return (median, 2 * mean).
pub fn compute_filter_range(
    trace: &JobTrace,
    goal: Goal,
    n_samples: usize,
    seed: u64,
) -> Result<FilterEstimate, TrainError> {
    if n_samples < 30 {
        return Err(TrainError::InvalidConfig(format!(
            "filter range needs at least 30 samples, got {n_samples}"
        )));
    }
    let mut samples = Vec::with_capacity(n_samples);
    for i in 0..n_samples {
        let seq = sample_sequence(trace, FILTER_SEQUENCE_LEN.min(trace.jobs.len()), derive_seed(seed, 0xF1, i as u64, 0))?;
        let mut sjf = Heuristic::new(HeuristicKind::Sjf);
        let metrics = run_with_scheduler(seq, &mut sjf, true)?;
        let value = metrics.goal_value(goal).ok_or(TrainError::MissingUserInfo)?;
        samples.push(value);
    }
    Ok(FilterEstimate { range: filter_range_from_samples(&samples), samples })
}

const FILTER_SEQUENCE_LEN: usize = 256;

/// Attempts per trajectory slot before a sequence is accepted regardless of
/// the filter, so a tight range cannot stall collection.
pub const FILTER_REJECTION_CAP: usize = 50;

/// One agent decision.
#[derive(Debug, Clone)]
pub struct TrajStep {
    pub obs: ObservationMatrix,
    pub action: usize,
    pub logp_old: f64,
    pub value_old: f64,
    pub reward: f64,
}

/// One episode: the decision record of scheduling one job sequence.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub steps: Vec<TrajStep>,
    pub metrics: ScheduleMetrics,
    /// The goal metric in its natural units (e.g. the average bounded
    /// slowdown itself, not its negation).
    pub goal_metric: f64,
    /// Terminal reward, also the episode return.
    pub reward: f64,
}

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct PpoConfig {
    pub trajectories_per_epoch: usize,
    pub trajectory_len: usize,
    pub update_iterations: usize,
    pub learning_rate: f64,
    pub clip_ratio: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub kl_early_stop: f64,
    pub epochs: usize,
    pub seed: u64,
    pub goal: Goal,
    pub filter: Option<FilterRange>,
    pub filter_step1_epochs: usize,
    pub backfilling: bool,
    pub mask_non_runnable: bool,
    pub max_obsv_size: usize,
    pub workers: usize,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            trajectories_per_epoch: 100,
            trajectory_len: 256,
            update_iterations: 80,
            learning_rate: 1e-3,
            clip_ratio: 0.2,
            gamma: 1.0,
            gae_lambda: 0.97,
            kl_early_stop: 0.015,
            epochs: 100,
            seed: 0,
            goal: Goal::AvgBoundedSlowdown,
            filter: None,
            filter_step1_epochs: 0,
            backfilling: true,
            mask_non_runnable: false,
            max_obsv_size: DEFAULT_MAX_OBSV_SIZE,
            workers: 1,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let positive = [
            ("trajectories_per_epoch", self.trajectories_per_epoch as f64),
            ("trajectory_len", self.trajectory_len as f64),
            ("update_iterations", self.update_iterations as f64),
            ("learning_rate", self.learning_rate),
            ("gamma", self.gamma),
            ("gae_lambda", self.gae_lambda),
            ("max_obsv_size", self.max_obsv_size as f64),
        ];
        for (name, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(TrainError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.clip_ratio > 0.0 && self.clip_ratio < 1.0) {
            return Err(TrainError::InvalidConfig(format!(
                "clip_ratio must lie in (0, 1), got {}",
                self.clip_ratio
            )));
        }
        Ok(())
    }

    fn env_options(&self) -> EnvOptions {
        EnvOptions {
            goal: self.goal,
            backfilling: self.backfilling,
            max_obsv_size: self.max_obsv_size,
            mask_non_runnable: self.mask_non_runnable,
        }
    }
}

/// Counters surfaced from filtered collection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CollectStats {
    pub filter_rejections: usize,
    pub forced_accepts: usize,
}

/// Stable seed derivation so every trajectory slot owns an independent RNG
/// stream regardless of how collection is spread over workers.
pub fn derive_seed(base: u64, tag: u64, a: u64, b: u64) -> u64 {
    let mut h = base ^ 0x9E37_79B9_7F4A_7C15;
    for v in [tag, a, b] {
        h ^= v.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(h << 6).wrapping_add(h >> 2);
        h = h.wrapping_mul(0xBF58_476D_1CE4_E5B9);
        h ^= h >> 27;
    }
    h
}

/// Collect one epoch's batch. In the filtering phase a sequence is accepted
/// only if its SJF metric lies inside `filter`; after `FILTER_REJECTION_CAP`
/// rejections the slot accepts the next sequence anyway and counts it.
pub fn collect_trajectories(
    trace: &JobTrace,
    policy: &PolicyNet,
    value: &ValueNet,
    cfg: &PpoConfig,
    filter: Option<&FilterRange>,
    epoch: usize,
) -> Result<(Vec<Trajectory>, CollectStats), TrainError> {
    let n = cfg.trajectories_per_epoch;
    let results: Vec<Result<(Trajectory, CollectStats), TrainError>> = run_indexed_parallel(
        n,
        cfg.workers,
        |slot| collect_one(trace, policy, value, cfg, filter, epoch, slot),
    );
    let mut batch = Vec::with_capacity(n);
    let mut stats = CollectStats::default();
    for r in results {
        let (traj, s) = r?;
        stats.filter_rejections += s.filter_rejections;
        stats.forced_accepts += s.forced_accepts;
        batch.push(traj);
    }
    Ok((batch, stats))
}

fn collect_one(
    trace: &JobTrace,
    policy: &PolicyNet,
    value: &ValueNet,
    cfg: &PpoConfig,
    filter: Option<&FilterRange>,
    epoch: usize,
    slot: usize,
) -> Result<(Trajectory, CollectStats), TrainError> {
    let len = cfg.trajectory_len.min(trace.jobs.len());
    let mut stats = CollectStats::default();
    let mut attempt = 0u64;
    let sequence = loop {
        let seq = sample_sequence(trace, len, derive_seed(cfg.seed, epoch as u64, slot as u64, attempt))?;
        match filter {
            None => break seq,
            Some(range) => {
                let mut sjf = Heuristic::new(HeuristicKind::Sjf);
                let metric = run_with_scheduler(seq.clone(), &mut sjf, true)?
                    .goal_value(cfg.goal)
                    .ok_or(TrainError::MissingUserInfo)?;
                if range.accepts(metric) {
                    break seq;
                }
                stats.filter_rejections += 1;
                attempt += 1;
                if attempt as usize >= FILTER_REJECTION_CAP {
                    stats.forced_accepts += 1;
                    break sample_sequence(
                        trace,
                        len,
                        derive_seed(cfg.seed, epoch as u64, slot as u64, attempt),
                    )?;
                }
            }
        }
    };

    let mut rng =
        ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0xAC7, epoch as u64, slot as u64));
    let mut env = SchedEnv::new(sequence, cfg.env_options())?;
    let mut steps = Vec::with_capacity(len);
    let mut obs = env.current_observation();
    loop {
        let probs = policy_forward(policy, &obs)?;
        let action = policy_sample(&probs, &mut rng);
        let logp_old = probs[action].ln();
        let value_old = value_forward(value, &obs);
        let outcome = env.step(action)?;
        steps.push(TrajStep { obs, action, logp_old, value_old, reward: outcome.reward });
        if outcome.done {
            break;
        }
        obs = outcome.observation.expect("non-terminal step returns an observation");
    }
    let metrics = env.metrics().expect("finished episode has metrics");
    let goal_metric = metrics.goal_value(cfg.goal).ok_or(TrainError::MissingUserInfo)?;
    let reward = steps.last().map(|s| s.reward).unwrap_or(0.0);
    Ok((Trajectory { steps, metrics, goal_metric, reward }, stats))
}

/// Per-step advantages and returns-to-go for a batch.
#[derive(Debug, Clone)]
pub struct AdvantageBatch {
    pub advantages: Vec<Vec<f64>>,
    pub returns: Vec<Vec<f64>>,
}

/// GAE over the stored value estimates plus plain returns-to-go. With the
/// deferred reward and gamma = 1 every return equals the terminal reward.
pub fn compute_advantages(
    batch: &[Trajectory],
    gamma: f64,
    lambda: f64,
    normalize: bool,
) -> AdvantageBatch {
    let mut advantages = Vec::with_capacity(batch.len());
    let mut returns = Vec::with_capacity(batch.len());
    for traj in batch {
        let t_len = traj.steps.len();
        let mut adv = vec![0.0; t_len];
        let mut ret = vec![0.0; t_len];
        let mut next_adv = 0.0;
        let mut next_ret = 0.0;
        let mut next_value = 0.0; // terminal state has value 0
        for t in (0..t_len).rev() {
            let step = &traj.steps[t];
            let delta = step.reward + gamma * next_value - step.value_old;
            next_adv = delta + gamma * lambda * next_adv;
            next_ret = step.reward + gamma * next_ret;
            adv[t] = next_adv;
            ret[t] = next_ret;
            next_value = step.value_old;
        }
        advantages.push(adv);
        returns.push(ret);
    }
    if normalize {
        let all: Vec<f64> = advantages.iter().flatten().cloned().collect();
        let n = all.len().max(1) as f64;
        let mean = all.iter().sum::<f64>() / n;
        let var = all.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
        let std = var.sqrt().max(1e-8);
        for adv in &mut advantages {
            for a in adv {
                *a = (*a - mean) / std;
            }
        }
    }
    AdvantageBatch { advantages, returns }
}

struct StepRef<'a> {
    step: &'a TrajStep,
    advantage: f64,
    ret: f64,
}

fn flatten_batch<'a>(batch: &'a [Trajectory], adv: &AdvantageBatch) -> Vec<StepRef<'a>> {
    let mut out = Vec::new();
    for (ti, traj) in batch.iter().enumerate() {
        for (si, step) in traj.steps.iter().enumerate() {
            out.push(StepRef {
                step,
                advantage: adv.advantages[ti][si],
                ret: adv.returns[ti][si],
            });
        }
    }
    out
}

/// Update iterations use fixed chunk boundaries so gradient reduction order
/// (and therefore every float) is identical for any worker count.
const REDUCE_CHUNKS: usize = 64;

/// What one epoch's updates did. Losses are first-iteration values, i.e.
/// the batch under the policy that collected it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    /// Gradient steps actually applied to the policy before the KL bound
    /// cut the loop short (equals `update_iterations` when it never did).
    pub policy_iterations: usize,
    pub final_kl: f64,
}

/// Clipped-surrogate policy updates followed by squared-error value updates,
/// `update_iterations` each. Policy iterations stop early once the mean KL
/// estimate exceeds the configured bound.
pub fn ppo_update(
    policy: &mut PolicyNet,
    value: &mut ValueNet,
    batch: &[Trajectory],
    adv: &AdvantageBatch,
    cfg: &PpoConfig,
    adam_policy: &mut Adam,
    adam_value: &mut Adam,
) -> Result<UpdateStats, TrainError> {
    let steps = flatten_batch(batch, adv);
    let n = steps.len();
    if n == 0 {
        return Err(TrainError::InvalidConfig("empty batch".into()));
    }
    let inv_n = 1.0 / n as f64;

    let mut first_policy_loss = 0.0;
    let mut policy_iterations = 0;
    let mut final_kl = 0.0;
    for iter in 0..cfg.update_iterations {
        let snapshot: &PolicyNet = policy;
        let partials = run_chunked(&steps, REDUCE_CHUNKS, cfg.workers, |chunk| {
            policy_chunk_grad(snapshot, chunk, cfg.clip_ratio)
        });
        let mut grads = MlpGrads::zeros_like(&policy.kernel);
        let mut loss_sum = 0.0;
        let mut kl_sum = 0.0;
        for p in partials {
            loss_sum += p.loss_sum;
            kl_sum += p.kl_sum;
            grads.add(&p.grads);
        }
        let loss = loss_sum * inv_n;
        let kl = kl_sum * inv_n;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(TrainError::TrainingDiverged(format!(
                "non-finite policy loss at iteration {iter}"
            )));
        }
        if iter == 0 {
            first_policy_loss = loss;
        }
        final_kl = kl;
        if kl > cfg.kl_early_stop {
            break;
        }
        grads.scale(inv_n);
        adam_policy.step(&mut policy.kernel, &grads);
        policy_iterations += 1;
    }

    let mut first_value_loss = 0.0;
    for iter in 0..cfg.update_iterations {
        let snapshot: &ValueNet = value;
        let partials = run_chunked(&steps, REDUCE_CHUNKS, cfg.workers, |chunk| {
            value_chunk_grad(snapshot, chunk)
        });
        let mut grads = MlpGrads::zeros_like(&value.mlp);
        let mut loss_sum = 0.0;
        for p in partials {
            loss_sum += p.loss_sum;
            grads.add(&p.grads);
        }
        let loss = loss_sum * inv_n;
        if !loss.is_finite() || !grads.is_finite() {
            return Err(TrainError::TrainingDiverged(format!(
                "non-finite value loss at iteration {iter}"
            )));
        }
        if iter == 0 {
            first_value_loss = loss;
        }
        grads.scale(inv_n);
        adam_value.step(&mut value.mlp, &grads);
    }

    Ok(UpdateStats {
        policy_loss: first_policy_loss,
        value_loss: first_value_loss,
        policy_iterations,
        final_kl,
    })
}

struct ChunkGrad {
    loss_sum: f64,
    kl_sum: f64,
    grads: MlpGrads,
}

fn policy_chunk_grad(policy: &PolicyNet, chunk: &[StepRef<'_>], clip: f64) -> ChunkGrad {
    let mut grads = MlpGrads::zeros_like(&policy.kernel);
    let mut loss_sum = 0.0;
    let mut kl_sum = 0.0;
    let mut caches: Vec<MlpCache> = Vec::new();
    let mut scratch = BackpropScratch::default();
    let mut legal: Vec<usize> = Vec::new();
    let mut scores: Vec<f64> = Vec::new();
    for sr in chunk {
        let obs = &sr.step.obs;
        legal.clear();
        legal.extend(obs.legal_slots());
        if caches.len() < legal.len() {
            caches.resize_with(legal.len(), MlpCache::default);
        }
        scores.clear();
        for (pos, &slot) in legal.iter().enumerate() {
            let row = &obs.rows[slot];
            policy.kernel.forward_into_prefix(row, row.len(), &mut caches[pos]);
            scores.push(caches[pos].output()[0]);
        }
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = scores.iter().map(|s| (s - max).exp()).sum();
        let lse = max + sum_exp.ln();
        let action_pos = legal
            .iter()
            .position(|&i| i == sr.step.action)
            .expect("recorded action was legal");
        let logp_new = scores[action_pos] - lse;
        let ratio = (logp_new - sr.step.logp_old).exp();
        let surr1 = ratio * sr.advantage;
        let surr2 = ratio.clamp(1.0 - clip, 1.0 + clip) * sr.advantage;
        let objective = surr1.min(surr2);
        loss_sum += -objective;
        kl_sum += sr.step.logp_old - logp_new;

        // The clipped branch has zero derivative; only the raw ratio
        // propagates gradient.
        let d_obj_d_logp = if surr1 <= surr2 { sr.advantage * ratio } else { 0.0 };
        if d_obj_d_logp != 0.0 {
            let coeff = -d_obj_d_logp; // d(loss_sum)/d(logp_new)
            for (pos, &slot) in legal.iter().enumerate() {
                let prob = (scores[pos] - lse).exp();
                let indicator = if pos == action_pos { 1.0 } else { 0.0 };
                let d_score = coeff * (indicator - prob);
                let row = &obs.rows[slot];
                policy.kernel.backward_prefix_scratch(
                    row,
                    row.len(),
                    &caches[pos],
                    &[d_score],
                    &mut grads,
                    &mut scratch,
                );
            }
        }
    }
    ChunkGrad { loss_sum, kl_sum, grads }
}

fn value_chunk_grad(value: &ValueNet, chunk: &[StepRef<'_>]) -> ChunkGrad {
    let mut grads = MlpGrads::zeros_like(&value.mlp);
    let mut loss_sum = 0.0;
    let mut cache = MlpCache::default();
    let mut scratch = BackpropScratch::default();
    let mut flat = vec![0.0; value.mlp.input_dim()];
    let mut dirty = 0usize;
    for sr in chunk {
        let active = active_prefix_len(&sr.step.obs);
        flat[active..dirty.max(active)].fill(0.0);
        for (i, row) in sr.step.obs.rows.iter().enumerate().take(active / JOB_FEATURES) {
            flat[i * JOB_FEATURES..(i + 1) * JOB_FEATURES].copy_from_slice(row);
        }
        dirty = active;
        value.mlp.forward_into_prefix(&flat, active, &mut cache);
        let err = cache.output()[0] - sr.ret;
        loss_sum += err * err;
        value.mlp.backward_prefix_scratch(&flat, active, &cache, &[2.0 * err], &mut grads, &mut scratch);
    }
    ChunkGrad { loss_sum, kl_sum: 0.0, grads }
}

/// Map fixed-boundary chunks of `items` over up to `workers` threads and
/// return the results in chunk order.
fn run_chunked<T: Sync, R: Send>(
    items: &[T],
    n_chunks: usize,
    workers: usize,
    f: impl Fn(&[T]) -> R + Sync,
) -> Vec<R> {
    let n_chunks = n_chunks.min(items.len()).max(1);
    let chunk_size = items.len().div_ceil(n_chunks);
    let chunks: Vec<&[T]> = items.chunks(chunk_size).collect();
    run_indexed_parallel(chunks.len(), workers, |i| f(chunks[i]))
}

/// Evaluate `f(0..n)` across up to `workers` threads, returning results in
/// index order.
fn run_indexed_parallel<R: Send>(
    n: usize,
    workers: usize,
    f: impl Fn(usize) -> R + Sync,
) -> Vec<R> {
    let workers = workers.max(1).min(n.max(1));
    if workers <= 1 || n <= 1 {
        return (0..n).map(f).collect();
    }
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<R>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                out.lock().expect("result vector poisoned")[i] = Some(r);
            });
        }
    });
    out.into_inner()
        .expect("result vector poisoned")
        .into_iter()
        .map(|r| r.expect("every index produced a result"))
        .collect()
}

/// One learning-curve row per completed epoch. `mean_metric` is the goal
/// metric in natural units averaged over the epoch's episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub epoch: usize,
    pub mean_metric: f64,
    pub std_metric: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LearningCurve {
    pub rows: Vec<CurveRow>,
}

impl LearningCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_metric,std_metric,policy_loss,value_loss,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.epoch, r.mean_metric, r.std_metric, r.policy_loss, r.value_loss, r.seconds
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty curve file")?;
        if header.trim() != "epoch,mean_metric,std_metric,policy_loss,value_loss,seconds" {
            return Err(format!("unexpected curve header {header:?}"));
        }
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(format!("curve line {} has {} fields", i + 2, fields.len()));
            }
            let parse = |s: &str| s.trim().parse::<f64>().map_err(|e| format!("line {}: {e}", i + 2));
            rows.push(CurveRow {
                epoch: fields[0].trim().parse::<usize>().map_err(|e| format!("line {}: {e}", i + 2))?,
                mean_metric: parse(fields[1])?,
                std_metric: parse(fields[2])?,
                policy_loss: parse(fields[3])?,
                value_loss: parse(fields[4])?,
                seconds: parse(fields[5])?,
            });
        }
        Ok(Self { rows })
    }
}

/// Output of a training run: final nets, the best-by-goal checkpoint seen,
/// and the learning curve.
#[derive(Debug, Clone)]
pub struct TrainResult {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub best_policy: PolicyNet,
    pub best_value: ValueNet,
    pub best_epoch: usize,
    pub curve: LearningCurve,
    pub collect_stats: CollectStats,
}

/// Run the full training loop. Deterministic for a fixed seed and worker
/// count aside from the wall-clock column of the curve.
pub fn train(trace: &JobTrace, cfg: &PpoConfig) -> Result<TrainResult, TrainError> {
    train_with_progress(trace, cfg, |_| {})
}

/// Like [`train`], invoking `on_epoch` after every completed epoch.
pub fn train_with_progress(
    trace: &JobTrace,
    cfg: &PpoConfig,
    mut on_epoch: impl FnMut(&CurveRow),
) -> Result<TrainResult, TrainError> {
    cfg.validate()?;
    if cfg.goal.needs_user_info() && !trace.has_user_info() {
        return Err(TrainError::MissingUserInfo);
    }
    if trace.jobs.is_empty() {
        return Err(TrainError::InvalidConfig("empty trace".into()));
    }

    let mut policy = PolicyNet::init(derive_seed(cfg.seed, 0x90, 0, 0));
    let mut value = ValueNet::init(cfg.max_obsv_size, derive_seed(cfg.seed, 0x91, 0, 0));
    let mut adam_policy = Adam::new(policy.kernel.param_count(), cfg.learning_rate);
    let mut adam_value = Adam::new(value.mlp.param_count(), cfg.learning_rate);

    let mut best_policy = policy.clone();
    let mut best_value = value.clone();
    let mut best_reward = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut curve = LearningCurve::default();
    let mut collect_stats = CollectStats::default();
    let mut diverged_streak = 0usize;

    for epoch in 0..cfg.epochs {
        let t0 = Instant::now();
        let phase1 = epoch < cfg.filter_step1_epochs;
        let filter = if phase1 { cfg.filter.as_ref() } else { None };
        let (batch, stats) = collect_trajectories(trace, &policy, &value, cfg, filter, epoch)?;
        collect_stats.filter_rejections += stats.filter_rejections;
        collect_stats.forced_accepts += stats.forced_accepts;

        let n = batch.len() as f64;
        let mean_metric = batch.iter().map(|t| t.goal_metric).sum::<f64>() / n;
        let var = batch
            .iter()
            .map(|t| (t.goal_metric - mean_metric) * (t.goal_metric - mean_metric))
            .sum::<f64>()
            / n;
        let mean_reward = batch.iter().map(|t| t.reward).sum::<f64>() / n;

        let adv = compute_advantages(&batch, cfg.gamma, cfg.gae_lambda, true);
        let policy_snapshot = policy.clone();
        let value_snapshot = value.clone();
        let adam_p_snapshot = adam_policy.clone();
        let adam_v_snapshot = adam_value.clone();
        let (policy_loss, value_loss) = match ppo_update(
            &mut policy,
            &mut value,
            &batch,
            &adv,
            cfg,
            &mut adam_policy,
            &mut adam_value,
        ) {
            Ok(stats) => {
                diverged_streak = 0;
                (stats.policy_loss, stats.value_loss)
            }
            Err(TrainError::TrainingDiverged(msg)) => {
                policy = policy_snapshot;
                value = value_snapshot;
                adam_policy = adam_p_snapshot;
                adam_value = adam_v_snapshot;
                diverged_streak += 1;
                if diverged_streak >= 3 {
                    return Err(TrainError::TrainingDiverged(format!(
                        "3 consecutive diverged epochs, last: {msg}"
                    )));
                }
                (f64::NAN, f64::NAN)
            }
            Err(e) => return Err(e),
        };

        if mean_reward > best_reward {
            best_reward = mean_reward;
            best_policy = policy.clone();
            best_value = value.clone();
            best_epoch = epoch + 1;
        }
        let row = CurveRow {
            epoch: epoch + 1,
            mean_metric,
            std_metric: var.sqrt(),
            policy_loss,
            value_loss,
            seconds: t0.elapsed().as_secs_f64(),
        };
        on_epoch(&row);
        curve.rows.push(row);
    }

    Ok(TrainResult {
        policy,
        value,
        best_policy,
        best_value,
        best_epoch,
        curve,
        collect_stats,
    })
}

/// A trained policy acting greedily, usable wherever a heuristic is.
pub struct LearnedPolicy {
    pub net: PolicyNet,
    max_obsv: usize,
    norm: ObsNorm,
    label: String,
}

impl LearnedPolicy {
    pub fn new(net: PolicyNet, max_obsv: usize, time_cap: u64, cluster_size: u32, label: &str) -> Self {
        Self {
            net,
            max_obsv,
            norm: ObsNorm { time_cap, cluster_size },
            label: label.to_string(),
        }
    }
}

impl SchedulerPolicy for LearnedPolicy {
    fn select(
        &mut self,
        queue: &[PendingJob],
        cluster: &ClusterState,
        _now: u64,
    ) -> Result<usize, SimError> {
        if queue.is_empty() {
            return Err(SimError::EmptyQueue);
        }
        let obs = build_observation(queue, cluster, &self.norm, self.max_obsv, false);
        let probs = policy_forward(&self.net, &obs).map_err(|_| SimError::EmptyQueue)?;
        let slot = policy_argmax(&probs);
        obs.slot_to_queue_index[slot].ok_or(SimError::EmptyQueue)
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}
