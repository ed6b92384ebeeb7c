//! Diagonal Gaussian actor, scalar critic and the PPO losses.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use reposer_core::rng::{normal, stream, Purpose};

use crate::error::{PpoError, Result};
use crate::nn::{cast, Mlp, Scalar};
use crate::normalizer::RunningNorm;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Action mean from an MLP plus a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy<F> {
    pub mean: Mlp<F>,
    pub log_std: Array1<F>,
}

impl<F: Scalar> GaussianPolicy<F> {
    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn zeros_like(&self) -> Self {
        Self { mean: self.mean.zeros_like(), log_std: Array1::zeros(self.log_std.len()) }
    }

    pub fn tensors(&self) -> Vec<&[F]> {
        let mut t = self.mean.tensors();
        t.push(self.log_std.as_slice().expect("standard layout"));
        t
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [F]> {
        let mut t = self.mean.tensors_mut();
        t.push(self.log_std.as_slice_mut().expect("standard layout"));
        t
    }

    /// Keep the log-std inside its admissible range.
    pub fn clamp_log_std(&mut self) {
        let (lo, hi) = (cast::<F>(LOG_STD_MIN), cast::<F>(LOG_STD_MAX));
        self.log_std.mapv_inplace(|v| v.max(lo).min(hi));
    }

    /// Per-row log-density of `actions` under the policy at `obs`.
    pub fn log_prob(&self, obs: ArrayView2<F>, actions: ArrayView2<F>) -> Vec<F> {
        let mu = self.mean.forward(obs);
        log_prob_rows(mu.view(), actions, &self.log_std)
    }

    /// Entropy of the (state-independent) action distribution.
    pub fn entropy(&self) -> F {
        let c = cast::<F>(0.5 + HALF_LN_2PI);
        self.log_std.iter().fold(F::zero(), |acc, &l| acc + l + c)
    }
}

pub(crate) fn log_prob_rows<F: Scalar>(mu: ArrayView2<F>, actions: ArrayView2<F>, log_std: &Array1<F>) -> Vec<F> {
    let half = cast::<F>(0.5);
    let c = cast::<F>(HALF_LN_2PI);
    let inv_std: Vec<F> = log_std.iter().map(|l| (-*l).exp()).collect();
    mu.outer_iter()
        .zip(actions.outer_iter())
        .map(|(m, a)| {
            let mut lp = F::zero();
            for j in 0..m.len() {
                let z = (a[j] - m[j]) * inv_std[j];
                lp = lp - half * z * z - log_std[j] - c;
            }
            lp
        })
        .collect()
}

/// Result of evaluating the clipped surrogate on a minibatch.
pub struct PolicyLoss<F> {
    pub loss: F,
    pub grad: GaussianPolicy<F>,
    pub approx_kl: F,
    pub clip_fraction: F,
    pub entropy: F,
}

/// `-mean(min(r A, clip(r, 1-eps, 1+eps) A)) - entropy_coef * H` and its
/// gradient, with `r = exp(log_prob - old_log_prob)`.
pub fn policy_loss<F: Scalar>(
    policy: &GaussianPolicy<F>,
    obs: ArrayView2<F>,
    actions: ArrayView2<F>,
    old_log_prob: &[F],
    advantages: &[F],
    clip: F,
    entropy_coef: F,
) -> PolicyLoss<F> {
    let m = obs.nrows();
    let mf = cast::<F>(m as f64);
    let (mu, cache) = policy.mean.forward_cached(obs);
    let lp = log_prob_rows(mu.view(), actions, &policy.log_std);
    let (lo, hi) = (F::one() - clip, F::one() + clip);
    let inv_var: Vec<F> = policy.log_std.iter().map(|l| (-(*l + *l)).exp()).collect();

    let mut loss = F::zero();
    let mut kl = F::zero();
    let mut clipped = F::zero();
    let mut dmu = Array2::<F>::zeros(mu.raw_dim());
    let mut dlog_std = Array1::<F>::zeros(policy.log_std.len());
    for i in 0..m {
        let log_ratio = lp[i] - old_log_prob[i];
        let r = log_ratio.exp();
        let a = advantages[i];
        let unclipped = r * a;
        let clipped_obj = r.max(lo).min(hi) * a;
        if r < lo || r > hi {
            clipped = clipped + F::one();
        }
        kl = kl + (r - F::one()) - log_ratio;
        let obj = unclipped.min(clipped_obj);
        loss = loss - obj / mf;
        // The min picks the unclipped branch whenever it is not larger.
        if unclipped <= clipped_obj {
            let g = -unclipped / mf; // d loss / d log_prob
            for j in 0..mu.ncols() {
                let d = actions[(i, j)] - mu[(i, j)];
                dmu[(i, j)] = g * d * inv_var[j];
                dlog_std[j] = dlog_std[j] + g * (d * d * inv_var[j] - F::one());
            }
        }
    }
    let entropy = policy.entropy();
    loss = loss - entropy_coef * entropy;
    dlog_std.mapv_inplace(|v| v - entropy_coef);
    let grad = GaussianPolicy { mean: policy.mean.backward(&cache, dmu.view()), log_std: dlog_std };
    PolicyLoss { loss, grad, approx_kl: kl / mf, clip_fraction: clipped / mf, entropy }
}

/// `0.5 * mean((V - R)^2)` and its gradient.
pub fn value_loss<F: Scalar>(critic: &Mlp<F>, obs: ArrayView2<F>, returns: &[F]) -> (F, Mlp<F>) {
    let m = obs.nrows();
    let mf = cast::<F>(m as f64);
    let (v, cache) = critic.forward_cached(obs);
    let mut dv = Array2::<F>::zeros((m, 1));
    let mut loss = F::zero();
    for i in 0..m {
        let e = v[(i, 0)] - returns[i];
        loss = loss + cast::<F>(0.5) * e * e / mf;
        dv[(i, 0)] = e / mf;
    }
    (loss, critic.backward(&cache, dv.view()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ActMode {
    /// Mean action (evaluation and deployment).
    Deterministic,
    /// Sample; row `i` draws from the stream `(seed, Policy, i, counter)`.
    Stochastic { seed: u64, counter: u64 },
}

pub struct ActOutput<F> {
    /// Actions clamped to `[-1, 1]`, to be sent to the environment.
    pub actions: Array2<F>,
    /// Unclamped samples, the values the log-probabilities refer to.
    pub raw: Array2<F>,
    pub log_probs: Vec<F>,
}

/// Actor, critic and their input normalizers.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent<F> {
    pub actor: GaussianPolicy<F>,
    pub critic: Mlp<F>,
    pub actor_norm: RunningNorm,
    pub critic_norm: RunningNorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetShapes {
    pub actor_obs: usize,
    pub critic_obs: usize,
    pub action: usize,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
}

impl NetShapes {
    pub fn actor_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.actor_obs];
        s.extend(&self.actor_hidden);
        s.push(self.action);
        s
    }

    pub fn critic_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.critic_obs];
        s.extend(&self.critic_hidden);
        s.push(1);
        s
    }
}

impl<F: Scalar> Agent<F> {
    /// Orthogonal init with gain sqrt(2) on hidden layers, 0.01 on the policy
    /// output and 1 on the value output; log-std starts at `ln(init_std)`.
    pub fn new(shapes: &NetShapes, init_std: f64, seed: u64) -> Self {
        let actor = Mlp::new(&shapes.actor_sizes(), std::f64::consts::SQRT_2, 0.01, &mut stream(seed, Purpose::Init, 0, 0));
        let critic = Mlp::new(&shapes.critic_sizes(), std::f64::consts::SQRT_2, 1.0, &mut stream(seed, Purpose::Init, 1, 0));
        let mut policy = GaussianPolicy { mean: actor, log_std: Array1::from_elem(shapes.action, cast(init_std.ln())) };
        policy.clamp_log_std();
        Self {
            actor: policy,
            critic,
            actor_norm: RunningNorm::new(shapes.actor_obs),
            critic_norm: RunningNorm::new(shapes.critic_obs),
        }
    }

    pub fn shapes(&self) -> NetShapes {
        let a = self.actor.mean.sizes();
        let c = self.critic.sizes();
        NetShapes {
            actor_obs: a[0],
            critic_obs: c[0],
            action: *a.last().unwrap(),
            actor_hidden: a[1..a.len() - 1].to_vec(),
            critic_hidden: c[1..c.len() - 1].to_vec(),
        }
    }

    pub fn act(&self, obs: ArrayView2<F>, mode: ActMode) -> Result<ActOutput<F>> {
        if obs.ncols() != self.actor.mean.input_dim() {
            return Err(PpoError::InvalidArgument(format!(
                "actor observation has {} columns, network expects {}",
                obs.ncols(),
                self.actor.mean.input_dim()
            )));
        }
        let x = self.actor_norm.normalize(obs);
        let mu = self.actor.mean.forward(x.view());
        let raw = match mode {
            ActMode::Deterministic => mu.clone(),
            ActMode::Stochastic { seed, counter } => {
                let std: Vec<F> = self.actor.log_std.iter().map(|l| l.exp()).collect();
                let mut out = mu.clone();
                for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
                    let mut rng = stream(seed, Purpose::Policy, i as u64, counter);
                    for (j, v) in row.iter_mut().enumerate() {
                        *v = *v + std[j] * cast(normal(&mut rng));
                    }
                }
                out
            }
        };
        let log_probs = log_prob_rows(mu.view(), raw.view(), &self.actor.log_std);
        let actions = raw.mapv(|v| v.max(-F::one()).min(F::one()));
        Ok(ActOutput { actions, raw, log_probs })
    }

    pub fn value(&self, critic_obs: ArrayView2<F>) -> Result<Vec<F>> {
        if critic_obs.ncols() != self.critic.input_dim() {
            return Err(PpoError::InvalidArgument(format!(
                "critic observation has {} columns, network expects {}",
                critic_obs.ncols(),
                self.critic.input_dim()
            )));
        }
        let x = self.critic_norm.normalize(critic_obs);
        Ok(self.critic.forward(x.view()).column(0).to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> Agent<f64> {
        let shapes = NetShapes { actor_obs: 4, critic_obs: 6, action: 3, actor_hidden: vec![8, 8], critic_hidden: vec![8] };
        Agent::new(&shapes, 1.0, seed)
    }

    #[test]
    fn zero_weights_give_zero_mean() {
        let mut a = tiny(0);
        a.actor.mean = a.actor.mean.zeros_like();
        let out = a.act(Array2::from_elem((3, 4), 0.3).view(), ActMode::Deterministic).unwrap();
        assert!(out.actions.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn sampling_is_reproducible_and_clamped() {
        let a = tiny(1);
        let obs = Array2::from_shape_fn((5, 4), |(i, j)| (i + j) as f64 * 0.1);
        let x = a.act(obs.view(), ActMode::Stochastic { seed: 3, counter: 9 }).unwrap();
        let y = a.act(obs.view(), ActMode::Stochastic { seed: 3, counter: 9 }).unwrap();
        assert_eq!(x.raw, y.raw);
        assert_ne!(x.raw, a.act(obs.view(), ActMode::Stochastic { seed: 3, counter: 10 }).unwrap().raw);
        assert!(x.actions.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn log_prob_matches_density_formula() {
        let mut a = tiny(2);
        a.actor.log_std = Array1::from_vec(vec![-0.3, 0.2, 0.7]);
        let obs = Array2::from_shape_fn((4, 4), |(i, j)| ((i * 4 + j) as f64).cos());
        let out = a.act(obs.view(), ActMode::Stochastic { seed: 5, counter: 0 }).unwrap();
        let mu = a.actor.mean.forward(obs.view());
        for i in 0..4 {
            let mut density = 1.0;
            for j in 0..3 {
                let s = a.actor.log_std[j].exp();
                let z = (out.raw[(i, j)] - mu[(i, j)]) / s;
                density *= (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            }
            assert!((out.log_probs[i] - density.ln()).abs() < 1e-10);
        }
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let a = tiny(0);
        assert!(a.act(Array2::zeros((2, 5)).view(), ActMode::Deterministic).is_err());
        assert!(a.value(Array2::zeros((2, 4)).view()).is_err());
    }

    #[test]
    fn log_std_is_clamped() {
        let shapes = NetShapes { actor_obs: 2, critic_obs: 2, action: 2, actor_hidden: vec![4], critic_hidden: vec![4] };
        let a = Agent::<f64>::new(&shapes, 100.0, 0);
        assert!(a.actor.log_std.iter().all(|v| *v == LOG_STD_MAX));
    }
}
