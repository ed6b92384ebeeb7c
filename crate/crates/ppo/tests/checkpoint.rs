use ndarray::Array2;
use rand::Rng;
use reposer_core::rng::{stream, Purpose};
use reposer_ppo::{ActMode, Checkpoint, Learner, PpoConfig, PpoError, RolloutBatch};

fn trained() -> (Learner, RolloutBatch) {
    let cfg = PpoConfig { batch_size: 32, minibatch_size: 16, epochs: 2, actor_hidden: vec![8], critic_hidden: vec![8], ..PpoConfig::default() };
    let mut l = Learner::new(cfg, 3, 5, 2, 1).unwrap();
    let mut b = RolloutBatch::with_capacity(4, 8, 3, 5, 2);
    let mut rng = stream(1, Purpose::Init, 0, 0);
    b.actor_obs.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
    b.critic_obs.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
    let out = l.agent.act(b.actor_obs.view(), ActMode::Stochastic { seed: 1, counter: 0 }).unwrap();
    b.actions = out.raw;
    b.log_probs = out.log_probs;
    b.rewards.iter_mut().for_each(|r| *r = rng.gen_range(-10.0..10.0));
    l.update(&b, 1e-3).unwrap();
    (l, b)
}

#[test]
fn round_trip_preserves_actions_and_training_state() {
    let (learner, batch) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("policy.rpck");
    let ckpt = Checkpoint::new(learner.clone(), 1234, serde_json::json!({"note": "x"}));
    ckpt.save(&path, true).unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.global_step, 1234);
    assert_eq!(back.extra["note"], "x");
    assert_eq!(back.learner, learner);

    let obs = Array2::from_shape_fn((16, 3), |(i, j)| ((i * 3 + j) as f32 * 0.3).sin() * 3.0);
    let a = learner.agent.act(obs.view(), ActMode::Deterministic).unwrap();
    let b = back.learner.agent.act(obs.view(), ActMode::Deterministic).unwrap();
    assert_eq!(a.actions, b.actions);

    // Training continues identically from the restored state.
    let (mut x, mut y) = (learner, back.learner);
    x.update(&batch, 5e-4).unwrap();
    y.update(&batch, 5e-4).unwrap();
    assert_eq!(x, y);
}

#[test]
fn evaluation_checkpoint_omits_optimizer() {
    let (learner, _) = trained();
    let bytes = Checkpoint::new(learner.clone(), 0, serde_json::Value::Null).to_bytes(false).unwrap();
    let full = Checkpoint::new(learner.clone(), 0, serde_json::Value::Null).to_bytes(true).unwrap();
    assert!(bytes.len() < full.len());
    let back = Checkpoint::from_bytes(&bytes).unwrap();
    assert_eq!(back.learner.agent, learner.agent);
    assert_eq!(back.learner.actor_opt.step, 0);
}

#[test]
fn header_layout() {
    let (learner, _) = trained();
    let bytes = Checkpoint::new(learner, 0, serde_json::Value::Null).to_bytes(false).unwrap();
    assert_eq!(&bytes[0..4], b"RPCK");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let manifest: serde_json::Value = serde_json::from_slice(&bytes[12..12 + len]).unwrap();
    let tensors = manifest["tensors"].as_array().unwrap();
    let total: usize = tensors.iter().map(|t| t["shape"].as_array().unwrap().iter().map(|d| d.as_u64().unwrap() as usize).product::<usize>()).sum();
    assert_eq!(bytes.len() - 12 - len, 4 * total);
    assert_eq!(manifest["actor_sizes"], serde_json::json!([3, 8, 2]));
}

#[test]
fn corrupt_and_incompatible_files_are_rejected() {
    let (learner, _) = trained();
    let ckpt = Checkpoint::new(learner, 0, serde_json::Value::Null);
    let mut bytes = ckpt.to_bytes(false).unwrap();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 2]), Err(PpoError::Format(_))));
    bytes[4] = 9;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(PpoError::Incompatible(_))));
    bytes[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(PpoError::Format(_))));
    assert!(ckpt.check_compatible(3, 5, 2).is_ok());
    assert!(matches!(ckpt.check_compatible(75, 147, 9), Err(PpoError::Incompatible(_))));
}
