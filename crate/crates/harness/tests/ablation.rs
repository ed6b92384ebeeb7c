use reposer_core::env::PoseEncoding;
use reposer_harness::ablation::{run_ablation, AblationSpec, ArmResult};
use reposer_harness::config::EngineConfig;

fn spec(total_steps: u64) -> AblationSpec {
    let mut s = AblationSpec::full_grid(&EngineConfig::smoke());
    s.total_steps = total_steps;
    s
}

#[test]
fn untrained_arms_are_at_chance() {
    let cfg = EngineConfig::smoke();
    let r = run_ablation(&cfg, &spec(0), None, |_| {}).unwrap();
    assert_eq!(r.arms.len(), 4);
    let names: Vec<&str> = r.arms.iter().map(|a| a.arm.as_str()).collect();
    assert_eq!(names, ["O-KP_R-KP", "O-KP_R-PQ", "O-PQ_R-KP", "O-PQ_R-PQ"]);
    for a in &r.arms {
        let e = a.eval.as_ref().unwrap();
        assert_eq!(e.trials, cfg.harness.eval_trials);
        assert!(e.success_rate <= 0.1, "{}: {}", a.arm, e.success_rate);
        assert!(a.curve.is_empty());
    }
    // Shared evaluation seed: every arm sees the same goals, so the observation
    // encoding alone does not change trial count or seed.
    assert!(r.arms.iter().all(|a| a.eval.as_ref().unwrap().seed == cfg.harness.eval_seed));
}

#[test]
fn repeated_arm_gives_identical_curves() {
    let cfg = EngineConfig::smoke();
    let mut s = spec(2 * cfg.ppo.batch_size as u64);
    s.observations = vec![PoseEncoding::Keypoints];
    s.rewards = vec![PoseEncoding::PosQuat];
    let strip = |arms: Vec<ArmResult>| -> Vec<ArmResult> {
        arms.into_iter()
            .map(|mut a| {
                a.curve.iter_mut().for_each(|p| p.wall_secs = 0.0);
                a
            })
            .collect()
    };
    let a = strip(run_ablation(&cfg, &s, None, |_| {}).unwrap().arms);
    let b = strip(run_ablation(&cfg, &s, None, |_| {}).unwrap().arms);
    assert_eq!(a.len(), 1);
    assert_eq!(a[0].curve.len(), 2);
    assert!(a[0].error.is_none());
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
}
