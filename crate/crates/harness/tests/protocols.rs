use reposer_core::env::Thresholds;
use reposer_harness::config::EngineConfig;
use reposer_harness::eval::{
    evaluate, robustness_sweep, success_breakdown, threshold_heatmap, wilson_interval, zero_shot_objects, EvalSpec, SweepParameter,
    TrialRecord,
};
use reposer_harness::HarnessError;
use reposer_core::physics::NUM_JOINTS;
use reposer_ppo::Agent;

fn setup(trials: usize) -> (Agent<f32>, EvalSpec) {
    let cfg = EngineConfig::smoke();
    let env = reposer_harness::trainer::engine_env(&cfg).unwrap();
    let agent = Agent::new(&cfg.ppo.shapes(env.actor_dim(), env.critic_dim(), NUM_JOINTS), 1.0, 4);
    let spec = EvalSpec {
        physics: cfg.physics.clone(),
        task: cfg.task.clone(),
        dr: cfg.dr.clone(),
        trials,
        seed: 17,
        confidence: 0.8,
        config_hash: cfg.hash(),
        checkpoint_hash: "test".into(),
    };
    (agent, spec)
}

#[test]
fn evaluation_is_reproducible_and_empty_is_allowed() {
    let (agent, spec) = setup(12);
    let a = evaluate(&agent, &spec, Default::default(), "a").unwrap();
    let b = evaluate(&agent, &spec, Default::default(), "a").unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.trials, 12);
    assert!(a.success_rate <= 0.1, "untrained policy should rarely succeed");
    let empty = evaluate(&agent, &EvalSpec { trials: 0, ..spec }, Default::default(), "e").unwrap();
    assert_eq!((empty.trials, empty.success_rate, empty.records.len()), (0, 0.0, 0));
}

#[test]
fn heatmap_is_monotone_and_matches_headline() {
    let (agent, spec) = setup(24);
    let r = evaluate(&agent, &spec, Default::default(), "h").unwrap();
    let pos = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];
    let rot = [10.0, 22.0, 45.0, 90.0, 180.0];
    let h = threshold_heatmap(&r, &pos, &rot).unwrap();
    for i in 0..pos.len() {
        for j in 0..rot.len() {
            if i + 1 < pos.len() {
                assert!(h.success[i][j] <= h.success[i + 1][j]);
            }
            if j + 1 < rot.len() {
                assert!(h.success[i][j] <= h.success[i][j + 1]);
            }
        }
    }
    assert_eq!(h.success[1][1], r.success_rate);
    assert_eq!(h, threshold_heatmap(&r, &pos, &rot).unwrap());
    assert!(h.success[pos.len() - 1][rot.len() - 1] > 0.0, "loosest cell should count some trials");
}

#[test]
fn combined_success_never_exceeds_breakdown() {
    let t = Thresholds { position: 0.02, orientation: 22f64.to_radians() };
    let mut rng = reposer_core::rng::stream(3, reposer_core::rng::Purpose::Eval, 0, 0);
    use rand::Rng;
    for _ in 0..200 {
        let n = rng.gen_range(0..40);
        let records: Vec<TrialRecord> = (0..n)
            .map(|i| {
                let (p, r) = (rng.gen_range(0.0..0.05), rng.gen_range(0.0..1.0));
                TrialRecord { trial: i, success: p < t.position && r < t.orientation, success_any: false, pos_err: p, rot_err: r, episode_return: 0.0, fault: rng.gen_bool(0.05) }
            })
            .collect();
        let (pr, rr) = success_breakdown(&records, &t);
        let combined = records.iter().filter(|r| r.passes(t.position, t.orientation)).count() as f64 / n.max(1) as f64;
        assert!(combined <= pr.min(rr) + 1e-15);
    }
}

#[test]
fn sweep_and_zero_shot_are_bit_reproducible() {
    let (agent, spec) = setup(8);
    let a = robustness_sweep(&agent, &spec, SweepParameter::Scale, &[0.5, 1.0, 1.5]).unwrap();
    let b = robustness_sweep(&agent, &spec, SweepParameter::Scale, &[0.5, 1.0, 1.5]).unwrap();
    assert_eq!(serde_json::to_vec(&a).unwrap(), serde_json::to_vec(&b).unwrap());
    assert_eq!(a.reports.len(), 3);
    assert_ne!(a.reports[0].records, a.reports[2].records);
    let m = robustness_sweep(&agent, &spec, SweepParameter::Mass, &[2.0]).unwrap();
    assert_eq!(m.reports.len(), 1);
    assert!(matches!(robustness_sweep(&agent, &spec, SweepParameter::Mass, &[]), Err(HarnessError::Config(_))));

    let objects: Vec<String> = ["cube:6.5", "sphere:3.75", "cuboid:2x8x2"].map(String::from).to_vec();
    let z1 = zero_shot_objects(&agent, &spec, &objects).unwrap();
    let z2 = zero_shot_objects(&agent, &spec, &objects).unwrap();
    assert_eq!(serde_json::to_vec(&z1).unwrap(), serde_json::to_vec(&z2).unwrap());
    assert_eq!(z1.len(), 3);
    assert!(matches!(zero_shot_objects(&agent, &spec, &["ycb:mustard".into()]), Err(HarnessError::UnsupportedObject(_))));
}

#[test]
fn nominal_cube_matches_plain_evaluation_without_randomization() {
    let (agent, mut spec) = setup(8);
    spec.dr = reposer_core::domrand::DrConfig::disabled();
    let plain = evaluate(&agent, &spec, Default::default(), "cube:6.5").unwrap();
    let z = zero_shot_objects(&agent, &spec, &["cube:6.5".into()]).unwrap();
    assert_eq!(z[0].report.records, plain.records);
    let s = robustness_sweep(&agent, &spec, SweepParameter::Scale, &[1.0]).unwrap();
    assert_eq!(s.reports[0].records, plain.records);
}

#[test]
fn incompatible_policy_is_rejected() {
    let (_, spec) = setup(4);
    let shapes = reposer_ppo::NetShapes { actor_obs: 10, critic_obs: 147, action: NUM_JOINTS, actor_hidden: vec![8], critic_hidden: vec![8] };
    let r = evaluate(&Agent::new(&shapes, 1.0, 0), &spec, Default::default(), "x");
    assert!(matches!(r, Err(HarnessError::Incompatible(_))));
}

#[test]
fn wilson_width_shrinks_as_inverse_sqrt_n() {
    let mut rng = reposer_core::rng::stream(11, reposer_core::rng::Purpose::Eval, 0, 0);
    use rand::Rng;
    fn width(n: usize, rng: &mut impl Rng) -> f64 {
        let k = (0..n).filter(|_| rng.gen_bool(0.3)).count();
        let (lo, hi) = wilson_interval(k, n, 0.8);
        hi - lo
    }
    let ns = [100usize, 400, 1600, 6400, 25600];
    let widths: Vec<f64> = ns.iter().map(|&n| width(n, &mut rng)).collect();
    for w in widths.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() < 0.3, "quadrupling N should halve the width, got ratio {ratio}");
    }
    for (n, w) in ns.iter().zip(&widths) {
        let scaled = w * (*n as f64).sqrt();
        assert!((scaled - 2.0 * 1.2816 * (0.3f64 * 0.7).sqrt()).abs() < 0.1, "n={n} scaled width {scaled}");
    }
}
