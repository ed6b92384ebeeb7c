use rand::Rng;
use reposer_core::rng::{stream, Purpose};
use reposer_ppo::gae;

/// Direct sum over future TD errors, stopping after the first terminal step.
fn brute_force(r: &[f64], v: &[f64], d: &[bool], boot: &[f64], n: usize, gamma: f64, tau: f64) -> Vec<f64> {
    let horizon = r.len() / n;
    let mut out = vec![0.0; r.len()];
    for e in 0..n {
        for t in 0..horizon {
            let mut total = 0.0;
            let mut weight = 1.0;
            for k in t..horizon {
                let i = k * n + e;
                let next = if d[i] { 0.0 } else if k + 1 == horizon { boot[e] } else { v[i + n] };
                total += weight * (r[i] + gamma * next - v[i]);
                if d[i] {
                    break;
                }
                weight *= gamma * tau;
            }
            out[t * n + e] = total;
        }
    }
    out
}

#[test]
fn matches_brute_force_on_random_trajectories() {
    let mut max_err: f64 = 0.0;
    for trial in 0..1000u64 {
        let mut rng = stream(11, Purpose::Init, trial, 0);
        let n = rng.gen_range(1..5);
        let horizon = rng.gen_range(1..40);
        let len = n * horizon;
        let r: Vec<f64> = (0..len).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v: Vec<f64> = (0..len).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p_done = rng.gen_range(0.0..0.3);
        let d: Vec<bool> = (0..len).map(|_| rng.gen_bool(p_done)).collect();
        let boot: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let gamma = rng.gen_range(0.9..1.0);
        let tau = rng.gen_range(0.8..1.0);
        let (adv, ret) = gae(&r, &v, &d, &boot, gamma, tau).unwrap();
        let oracle = brute_force(&r, &v, &d, &boot, n, gamma, tau);
        for i in 0..len {
            max_err = max_err.max((adv[i] - oracle[i]).abs());
            assert!((ret[i] - (adv[i] + v[i])).abs() < 1e-12);
        }
    }
    assert!(max_err < 1e-8, "max error {max_err}");
}

#[test]
fn unit_tau_without_dones_is_discounted_return_minus_value() {
    let mut rng = stream(12, Purpose::Init, 0, 0);
    let (n, horizon, gamma) = (3, 25, 0.97);
    let r: Vec<f64> = (0..n * horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let v: Vec<f64> = (0..n * horizon).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let boot = vec![0.3, -0.7, 1.1];
    let (adv, _) = gae(&r, &v, &vec![false; n * horizon], &boot, gamma, 1.0).unwrap();
    for e in 0..n {
        for t in 0..horizon {
            let mut g = 0.0;
            for k in t..horizon {
                g += gamma.powi((k - t) as i32) * r[k * n + e];
            }
            g += gamma.powi((horizon - t) as i32) * boot[e];
            assert!((adv[t * n + e] - (g - v[t * n + e])).abs() < 1e-10);
        }
    }
}
