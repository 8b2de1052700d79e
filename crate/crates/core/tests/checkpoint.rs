//! Checkpoint round-trips: a trained policy written to disk must make the
//! same greedy decisions after reloading.

mod common;

use common::rng;
use hpcsched::neural::{policy_argmax, policy_forward, PolicyNet};
use hpcsched::sim::{ObservationMatrix, DEFAULT_MAX_OBSV_SIZE, JOB_FEATURES};
use hpcsched::trainer::{train, PpoConfig};
use hpcsched::workload::{generate_synthetic, SyntheticConfig};
use rand::Rng;

fn random_observation(r: &mut rand_chacha::ChaCha8Rng, legal: usize) -> ObservationMatrix {
    let size = DEFAULT_MAX_OBSV_SIZE;
    let mut rows = vec![[0.0; JOB_FEATURES]; size];
    let mut mask = vec![false; size];
    let mut map = vec![None; size];
    for i in 0..legal {
        for f in 0..JOB_FEATURES {
            rows[i][f] = r.gen::<f64>();
        }
        mask[i] = true;
        map[i] = Some(i);
    }
    ObservationMatrix { rows, legal: mask, slot_to_queue_index: map }
}

#[test]
fn saved_policy_reproduces_argmax_decisions() {
    let trace = generate_synthetic(
        &SyntheticConfig {
            cluster_size: 64,
            job_count: 800,
            arrival_rate: 0.03,
            runtime_range: (30, 1_200),
            proc_range: (1, 32),
        },
        0xCC,
    )
    .unwrap();
    let cfg = PpoConfig {
        epochs: 2,
        trajectories_per_epoch: 8,
        trajectory_len: 48,
        update_iterations: 10,
        seed: 5,
        ..PpoConfig::default()
    };
    let result = train(&trace, &cfg).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.bin");
    result.best_policy.save(&path).unwrap();
    let loaded = PolicyNet::load(&path).unwrap();

    let mut r = rng(0xCC2);
    for case in 0..100 {
        let legal = r.gen_range(1..=DEFAULT_MAX_OBSV_SIZE);
        let obs = random_observation(&mut r, legal);
        let before = policy_argmax(&policy_forward(&result.best_policy, &obs).unwrap());
        let after = policy_argmax(&policy_forward(&loaded, &obs).unwrap());
        assert_eq!(before, after, "case {case}: decision changed across save/load");
    }
}
