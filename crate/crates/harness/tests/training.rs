use std::fs;
use std::path::Path;

use reposer_harness::config::EngineConfig;
use reposer_harness::trainer::{engine_env, engine_spec, read_metrics, Trainer};
use reposer_harness::HarnessError;

fn smoke(total_iterations: u64) -> EngineConfig {
    let mut c = EngineConfig::smoke();
    c.run.total_steps = total_iterations * c.ppo.batch_size as u64;
    c.run.checkpoint_interval = 2;
    c
}

fn train(cfg: &EngineConfig, dir: &Path) {
    let mut t = Trainer::new(engine_env(cfg).unwrap(), engine_spec(cfg, Some(dir.to_path_buf()))).unwrap();
    t.run(None, |_, _| {}).unwrap();
}

#[test]
fn same_seed_gives_identical_metrics_files() {
    let cfg = smoke(3);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&cfg, a.path());
    train(&cfg, b.path());
    let ma = fs::read(a.path().join("metrics.jsonl")).unwrap();
    assert_eq!(ma, fs::read(b.path().join("metrics.jsonl")).unwrap());
    assert_eq!(fs::read(a.path().join("policy.rpck")).unwrap(), fs::read(b.path().join("policy.rpck")).unwrap());
    let m = read_metrics(&a.path().join("metrics.jsonl")).unwrap();
    assert_eq!(m.len(), 3);
    assert_eq!(m[2].global_step, 3 * cfg.ppo.batch_size as u64);
    assert!(m.iter().all(|r| r.reward_object_goal.is_some() && r.reward_fingertip_to_object.is_some()));
}

#[test]
fn killed_and_resumed_run_matches_uninterrupted_run() {
    let cfg = smoke(5);
    let (full, part) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    train(&cfg, full.path());

    let spec = engine_spec(&cfg, Some(part.path().to_path_buf()));
    {
        let mut t = Trainer::new(engine_env(&cfg).unwrap(), spec.clone()).unwrap();
        t.run(Some(2), |_, _| {}).unwrap();
        // Killed after iteration 3, before it was checkpointed.
        t.run_iteration().unwrap();
    }
    assert_eq!(read_metrics(&part.path().join("metrics.jsonl")).unwrap().len(), 3);
    let mut t = Trainer::resume(engine_env(&cfg).unwrap(), spec).unwrap();
    assert_eq!(t.iteration, 2);
    t.run(None, |_, _| {}).unwrap();

    for f in ["metrics.jsonl", "policy.rpck", "checkpoints/latest.rpck"] {
        assert_eq!(fs::read(full.path().join(f)).unwrap(), fs::read(part.path().join(f)).unwrap(), "{f} differs");
    }
    // The saved task state matches too; only the wall-clock counter may differ.
    let state = |d: &Path| {
        let mut v: serde_json::Value = serde_json::from_slice(&fs::read(d.join("checkpoints/latest.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_secs");
        v
    };
    assert_eq!(state(full.path()), state(part.path()));
}

#[test]
fn resume_rejects_different_settings() {
    let cfg = smoke(2);
    let dir = tempfile::tempdir().unwrap();
    train(&cfg, dir.path());
    let mut other = cfg.clone();
    other.ppo.epochs += 1;
    let r = Trainer::resume(engine_env(&other).unwrap(), engine_spec(&other, Some(dir.path().to_path_buf())));
    assert!(matches!(r, Err(HarnessError::Incompatible(_))));
    let mut obs = cfg.clone();
    obs.task.observation = reposer_core::env::PoseEncoding::PosQuat;
    let r = Trainer::resume(engine_env(&obs).unwrap(), engine_spec(&obs, Some(dir.path().to_path_buf())));
    assert!(matches!(r, Err(HarnessError::Incompatible(_))));
}

#[test]
fn approach_term_is_zero_after_curriculum_cutoff() {
    let mut cfg = smoke(4);
    cfg.task.curriculum_cutoff = 2 * cfg.ppo.batch_size as u64;
    let mut t = Trainer::new(engine_env(&cfg).unwrap(), engine_spec(&cfg, None)).unwrap();
    let mut seen = Vec::new();
    t.run(None, |m, _| seen.push(m.clone())).unwrap();
    let before = seen.iter().filter(|m| m.global_step <= cfg.task.curriculum_cutoff);
    assert!(before.clone().count() == 2 && before.clone().all(|m| m.reward_fingertip_to_object.unwrap() != 0.0));
    for m in seen.iter().filter(|m| m.global_step - cfg.ppo.batch_size as u64 >= cfg.task.curriculum_cutoff) {
        assert_eq!(m.reward_fingertip_to_object, Some(0.0));
    }
}
