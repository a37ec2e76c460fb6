use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::envs::ActionBounds;
use crate::error::{Error, Result};
use crate::funcapprox::{Activation, MlpSpec, ParamSet, Tape};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
/// Keeps `log(1 - tanh^2)` finite at saturation.
const SQUASH_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActionMode {
    Stochastic,
    Deterministic,
}

/// Tanh-squashed Gaussian policy over the augmented state.
#[derive(Debug, Clone)]
pub struct ActorPolicy {
    spec: MlpSpec,
    params: ParamSet,
    bounds: ActionBounds,
}

/// Per-sample quantities of one batched reparameterized draw.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub tape: Tape,
    /// `tanh(u)`, actions in `[-1, 1]`, row-major `batch x act_dim`.
    pub unit_actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub noise: Vec<f64>,
    pub stds: Vec<f64>,
    /// 1.0 where the raw log-std was inside the clamp range.
    pub log_std_live: Vec<f64>,
}

impl ActorPolicy {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        hidden: &[usize],
        bounds: ActionBounds,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(state_dim, hidden, 2 * bounds.dim(), Activation::Identity)?;
        let params = spec.init(rng);
        Ok(Self {
            spec,
            params,
            bounds,
        })
    }

    pub fn from_parts(spec: MlpSpec, params: ParamSet, bounds: ActionBounds) -> Result<Self> {
        if spec.output_dim() != 2 * bounds.dim() {
            return Err(Error::dim("actor output", 2 * bounds.dim(), spec.output_dim()));
        }
        if params.len() != spec.param_count() {
            return Err(Error::dim("actor params", spec.param_count(), params.len()));
        }
        Ok(Self {
            spec,
            params,
            bounds,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    pub fn state_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Draws actions for a batch of states with the given standard normal
    /// noise (`batch x act_dim`). Zero noise gives the squashed mean.
    pub fn sample_with_noise(&self, params: &[f64], states: &[f64], batch: usize, noise: Vec<f64>) -> Result<PolicySample> {
        let tape = self.spec.forward_batch(params, states, batch)?;
        let d = self.action_dim();
        let out = tape.output();
        let mut unit_actions = Vec::with_capacity(batch * d);
        let mut log_probs = Vec::with_capacity(batch);
        let mut stds = Vec::with_capacity(batch * d);
        let mut log_std_live = Vec::with_capacity(batch * d);
        let half_log_2pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
        for b in 0..batch {
            let row = &out[b * 2 * d..(b + 1) * 2 * d];
            let mut lp = 0.0;
            for i in 0..d {
                let raw = row[d + i];
                let log_std = raw.clamp(LOG_STD_MIN, LOG_STD_MAX);
                log_std_live.push(if raw == log_std { 1.0 } else { 0.0 });
                let std = log_std.exp();
                let eps = noise[b * d + i];
                let t = (row[i] + std * eps).tanh();
                lp += -0.5 * eps * eps - log_std - half_log_2pi - (1.0 - t * t + SQUASH_EPS).ln();
                unit_actions.push(t);
                stds.push(std);
            }
            log_probs.push(lp);
        }
        Ok(PolicySample {
            tape,
            unit_actions,
            log_probs,
            noise,
            stds,
            log_std_live,
        })
    }

    /// Action in `[-1, 1]^d` for one augmented state.
    pub fn act_unit<R: Rng + ?Sized>(&self, state: &[f64], mode: ActionMode, rng: &mut R) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::dim("actor state", self.state_dim(), state.len()));
        }
        let noise = match mode {
            ActionMode::Deterministic => vec![0.0; self.action_dim()],
            ActionMode::Stochastic => (0..self.action_dim()).map(|_| rng.sample(StandardNormal)).collect(),
        };
        Ok(self
            .sample_with_noise(self.params.as_slice(), state, 1, noise)?
            .unit_actions)
    }

    /// Action in environment units.
    pub fn select_action<R: Rng + ?Sized>(&self, state: &[f64], mode: ActionMode, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.bounds.from_unit(&self.act_unit(state, mode, rng)?))
    }

    /// Deterministic action without needing a random source.
    pub fn act_deterministic(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.state_dim() {
            return Err(Error::dim("actor state", self.state_dim(), state.len()));
        }
        let unit = self
            .sample_with_noise(self.params.as_slice(), state, 1, vec![0.0; self.action_dim()])?
            .unit_actions;
        Ok(self.bounds.from_unit(&unit))
    }
}

/// `dL/d(actor outputs)` for `L = mean_b [alpha * log pi_b - Q_b]` given
/// `dQ_b/da` (unit action space).
pub(crate) fn actor_output_grad(sample: &PolicySample, dq_da: &[f64], alpha: f64, batch: usize) -> Vec<f64> {
    let d = sample.unit_actions.len() / batch;
    let inv_b = 1.0 / batch as f64;
    let mut g = vec![0.0; batch * 2 * d];
    for b in 0..batch {
        for i in 0..d {
            let k = b * d + i;
            let t = sample.unit_actions[k];
            let one_m = 1.0 - t * t;
            let dlogp_du = 2.0 * t * one_m / (one_m + SQUASH_EPS);
            let du = inv_b * (alpha * dlogp_du - dq_da[k] * one_m);
            g[b * 2 * d + i] = du;
            g[b * 2 * d + d + i] =
                sample.log_std_live[k] * (du * sample.stds[k] * sample.noise[k] - inv_b * alpha);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn actor() -> ActorPolicy {
        let b = ActionBounds::symmetric(&[2.0, 0.5]);
        ActorPolicy::new(3, &[16, 16], b, &mut ChaCha8Rng::seed_from_u64(0)).unwrap()
    }

    #[test]
    fn zero_mean_deterministic_is_range_center() {
        let a = actor();
        let zero = ActorPolicy::from_parts(a.spec.clone(), a.spec.zeros(), a.bounds.clone()).unwrap();
        assert_eq!(zero.act_deterministic(&[0.3, 0.1, 0.9]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn samples_stay_in_bounds() {
        let mut a = actor();
        for p in a.params_mut().as_mut_slice() {
            *p *= 40.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..500 {
            let s = [rng.random_range(-3.0..3.0), 1.0, -2.0];
            let act = a.select_action(&s, ActionMode::Stochastic, &mut rng).unwrap();
            assert!(act[0].abs() <= 2.0 && act[1].abs() <= 0.5);
        }
    }

    #[test]
    fn seeded_sampling_reproduces() {
        let a = actor();
        let run = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..10)
                .map(|_| a.select_action(&[0.1, 0.2, 0.3], ActionMode::Stochastic, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(5), run(5));
        assert_ne!(run(5), run(6));
    }

    #[test]
    fn rejects_wrong_state_dim() {
        assert!(actor().act_deterministic(&[0.0; 4]).is_err());
    }
}
