//! Generalized advantage estimation over time-major rollouts.

use crate::error::{PpoError, Result};

/// Advantages and returns for a rollout laid out time-major: entry
/// `t * num_envs + e` is step `t` of environment `e`, with
/// `num_envs = bootstrap.len()`. `dones[i]` marks that the episode ended with
/// transition `i`, so nothing after it is credited back across the boundary.
/// `bootstrap[e]` is the value of the state following the last step.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: &[f64],
    gamma: f64,
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = bootstrap.len();
    let len = rewards.len();
    if n == 0 || values.len() != len || dones.len() != len || len % n != 0 {
        return Err(PpoError::InvalidArgument(format!(
            "gae shapes: {len} rewards, {} values, {} dones, {n} bootstrap values",
            values.len(),
            dones.len()
        )));
    }
    let horizon = len / n;
    let mut adv = vec![0.0; len];
    for e in 0..n {
        let mut running = 0.0;
        for t in (0..horizon).rev() {
            let i = t * n + e;
            let next_value = if t + 1 == horizon { bootstrap[e] } else { values[i + n] };
            let live = if dones[i] { 0.0 } else { 1.0 };
            let delta = rewards[i] + gamma * next_value * live - values[i];
            running = delta + gamma * tau * live * running;
            adv[i] = running;
        }
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, returns))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_terminal_transition() {
        let (a, r) = gae(&[1.0], &[0.5], &[true], &[7.0], 0.99, 0.95).unwrap();
        assert_eq!(a, vec![0.5]);
        assert_eq!(r, vec![1.0]);
    }

    #[test]
    fn zeros_give_zero() {
        let (a, _) = gae(&[0.0; 12], &[0.0; 12], &[false; 12], &[0.0; 3], 0.99, 0.95).unwrap();
        assert!(a.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        assert!(gae(&[0.0; 5], &[0.0; 5], &[false; 5], &[0.0; 2], 0.99, 0.95).is_err());
        assert!(gae(&[0.0; 4], &[0.0; 3], &[false; 4], &[0.0; 2], 0.99, 0.95).is_err());
    }
}
