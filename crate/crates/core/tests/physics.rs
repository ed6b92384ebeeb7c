use reposer_core::domrand::ExternalForceConfig;
use reposer_core::physics::{
    apply_external_force, object_energy, step, step_env, EnvParams, EnvSim, ObjectShape, ObjectState, PhysicsConfig,
    SimState, NUM_JOINTS,
};
use reposer_core::rng::{stream, Purpose};
use reposer_core::spatial::{Pose, Quaternion, Vec3};

const G: f64 = 9.81;

/// Fingers lifted well above the arena.
fn raised() -> [f64; NUM_JOINTS] {
    let mut q = [0.0; NUM_JOINTS];
    for f in 0..3 {
        q[3 * f + 1] = 0.5;
    }
    q
}

fn cube_at(z: f64) -> ObjectState {
    ObjectState::at_rest(Pose::new(Vec3::new(0.0, 0.0, z), Quaternion::IDENTITY))
}

#[test]
fn resting_cube_stays_put() {
    let cfg = PhysicsConfig::default();
    let yaw = Quaternion::from_axis_angle(&Vec3::z(), 0.7);
    let start = Pose::new(Vec3::new(0.02, -0.01, 0.0325), yaw);
    let mut env = EnvSim::new(raised(), ObjectState::at_rest(start));
    for _ in 0..50 {
        step_env(&mut env, &[0.0; NUM_JOINTS], &EnvParams::default(), &cfg);
        assert!(!env.fault);
    }
    let drift = (env.object.pose.translation - start.translation).norm();
    assert!(drift < 1e-4, "drift {drift}");
}

#[test]
fn ballistic_drop_matches_closed_form() {
    let cfg = PhysicsConfig::default();
    let h = 0.0325;
    let z0 = 0.1 + h;
    let mut env = EnvSim::new(raised(), cube_at(z0));
    // Semi-implicit Euler is exact in velocity; its position leads the closed
    // form by a factor 1 + 1/(substeps * k) after k control steps.
    for k in 1.. {
        step_env(&mut env, &[0.0; NUM_JOINTS], &EnvParams::default(), &cfg);
        let t = k as f64 * cfg.dt;
        let expected_fall = 0.5 * G * t * t;
        if z0 - expected_fall - h <= 0.0 {
            break;
        }
        assert!((env.object.linear_velocity.z + G * t).abs() < 1e-9);
        if k >= 3 {
            let fallen = z0 - env.object.pose.translation.z;
            assert!((fallen - expected_fall).abs() <= 0.05 * expected_fall, "t={t}: fell {fallen}, expected {expected_fall}");
        }
    }
}

#[test]
fn single_joint_torque_response() {
    let cfg = PhysicsConfig::default();
    let hand = &cfg.hand;
    // Joint 0 of finger 0 (abduction) with fingers raised: no contacts.
    for joint in [0usize, 1, 2] {
        let mut env = EnvSim::new(raised(), cube_at(0.0325));
        let mut tau = [0.0; NUM_JOINTS];
        tau[joint] = 0.05;
        let (i, d) = (hand.inertia(joint), hand.damping(joint));
        for k in 1..=10 {
            step_env(&mut env, &tau, &EnvParams::default(), &cfg);
            let t = k as f64 * cfg.dt;
            let expected = tau[joint] / d * (1.0 - (-d * t / i).exp());
            let got = env.joint_vel[joint];
            assert!((got - expected).abs() <= 0.01 * expected, "joint {joint} step {k}: {got} vs {expected}");
        }
    }
}

#[test]
fn determinism_and_batch_independence() {
    let cfg = PhysicsConfig::default();
    let make = |i: usize| {
        let mut q = raised();
        q[1] = -0.9 + 0.05 * i as f64;
        EnvSim::new(q, cube_at(0.06 + 0.01 * i as f64))
    };
    let n = 6;
    let torques: Vec<[f64; NUM_JOINTS]> =
        (0..n).map(|i| std::array::from_fn(|j| 0.3 * ((i * 9 + j) as f64).sin())).collect();
    let params: Vec<EnvParams> =
        (0..n).map(|i| EnvParams { object_mass: 0.8 + 0.1 * i as f64, ..EnvParams::default() }).collect();
    let run = || {
        let mut state = SimState { envs: (0..n).map(make).collect(), step: 0 };
        let mut history = Vec::new();
        for _ in 0..40 {
            step(&mut state, &torques, &params, &cfg).unwrap();
            history.push(state.clone());
        }
        history
    };
    let a = run();
    assert_eq!(a, run());
    for i in 0..n {
        let mut alone = make(i);
        for (k, snap) in a.iter().enumerate() {
            step_env(&mut alone, &torques[i], &params[i], &cfg);
            assert_eq!(alone, snap.envs[i], "env {i} diverged at step {k}");
        }
    }
}

#[test]
fn drop_energy_never_grows_across_impacts() {
    let cfg = PhysicsConfig::default();
    let shape = cfg.object.shape.clone();
    let m = cfg.object.mass;
    let tilt = Quaternion::from_axis_angle(&Vec3::new(1.0, 0.5, 0.0), 0.6);
    let mut env = EnvSim::new(raised(), ObjectState::at_rest(Pose::new(Vec3::new(0.0, 0.0, 0.15), tilt)));
    env.object.angular_velocity = Vec3::new(0.0, 3.0, 1.0);
    let in_contact = |o: &ObjectState| {
        let r = o.pose.rotation.to_matrix();
        reposer_core::spatial::cube_local_keypoints(0.0325)
            .unwrap()
            .points
            .iter()
            .any(|c| (r * c + o.pose.translation).z < 0.0)
    };
    let mut free_energy = object_energy(&env.object, &shape, m, G);
    let mut was_contact = false;
    for _ in 0..200 {
        step_env(&mut env, &[0.0; NUM_JOINTS], &EnvParams::default(), &cfg);
        let contact = in_contact(&env.object);
        let e = object_energy(&env.object, &shape, m, G);
        if !contact {
            if was_contact {
                assert!(e <= free_energy * 1.01 + 1e-9, "impact added energy: {free_energy} -> {e}");
            }
            free_energy = e;
        }
        was_contact = contact;
    }
    assert!(object_energy(&env.object, &shape, m, G) < m * G * 0.15);
}

#[test]
fn external_force_impulse_bookkeeping() {
    let mut cfg = PhysicsConfig::default();
    cfg.gravity = [0.0, 0.0, 0.0];
    let mut env = EnvSim::new(raised(), cube_at(0.1));
    let force_cfg = ExternalForceConfig { enabled: true, probability: 1.0, scale: 1.0, decay: 1.0 };
    let mut rng = stream(4, Purpose::Force, 0, 0);
    apply_external_force(&mut env, &mut rng, &force_cfg, cfg.object.mass, G);
    let force = env.external_force;
    step_env(&mut env, &[0.0; NUM_JOINTS], &EnvParams::default(), &cfg);
    let momentum = env.object.linear_velocity * cfg.object.mass;
    assert!((momentum - force * cfg.dt).norm() <= 1e-9 * force.norm());
}

#[test]
fn sphere_rests_on_table() {
    let mut cfg = PhysicsConfig::default();
    cfg.object.shape = ObjectShape::Sphere { radius: 0.0375 };
    let mut env = EnvSim::new(raised(), cube_at(0.0375));
    for _ in 0..100 {
        step_env(&mut env, &[0.0; NUM_JOINTS], &EnvParams::default(), &cfg);
    }
    assert!((env.object.pose.translation.z - 0.0375).abs() < 1e-3);
    assert!(env.object.pose.translation.xy().norm() < 1e-9);
}

#[test]
fn fingertip_pushes_cube() {
    // Finger 0 sweeps sideways through a cube placed under its tip.
    let cfg = PhysicsConfig::default();
    let q = [0.0, -0.9, 0.4, 0.0, 0.5, 0.0, 0.0, 0.5, 0.0];
    let tip = reposer_core::physics::forward_kinematics(&cfg.hand, &q)[0].tip_position;
    let mut env = EnvSim::new(q, cube_at(0.0325));
    env.object.pose.translation = Vec3::new(tip.x, tip.y + 0.06, 0.0325);
    let start = env.object.pose.translation;
    let mut tau = [0.0; NUM_JOINTS];
    tau[0] = 0.3;
    for _ in 0..50 {
        step_env(&mut env, &tau, &EnvParams::default(), &cfg);
        assert!(!env.fault);
    }
    assert!((env.object.pose.translation - start).norm() > 0.005, "cube did not move");
}
