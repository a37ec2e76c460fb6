//! Maximum-entropy off-policy actor-critic learner over augmented states.

mod actor;
mod replay;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use actor::{ActionMode, ActorPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use replay::{Batch, ReplayBuffer};

use crate::envs::ActionBounds;
use crate::error::Result;
use crate::funcapprox::{adaptive_update, AdamState, Activation, MlpSpec, ParamSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_alpha: f64,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub init_alpha: f64,
    /// Tune the temperature toward `target_entropy`; otherwise keep it fixed.
    pub auto_alpha: bool,
    /// Defaults to `-(action dimension)`.
    pub target_entropy: Option<f64>,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.005,
            batch_size: 256,
            lr_actor: 3e-4,
            lr_critic: 3e-4,
            lr_alpha: 3e-4,
            hidden: vec![256, 256],
            buffer_capacity: 1_000_000,
            init_alpha: 1.0,
            auto_alpha: true,
            target_entropy: None,
        }
    }
}

/// Two online action-value nets and their Polyak-averaged targets.
#[derive(Debug, Clone)]
pub struct CriticPair {
    spec: MlpSpec,
    pub online: [ParamSet; 2],
    pub target: [ParamSet; 2],
    pub tau: f64,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden: &[usize],
        tau: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let spec = MlpSpec::with_hidden(state_dim + action_dim, hidden, 1, Activation::Identity)?;
        let online = [spec.init(rng), spec.init(rng)];
        Ok(Self {
            target: online.clone(),
            online,
            spec,
            tau,
        })
    }

    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    /// `target <- tau * online + (1 - tau) * target`.
    pub fn soft_update(&mut self) {
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            t.soft_update_from(o, self.tau);
        }
    }
}

/// Entropy temperature `alpha = exp(log_alpha)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyTemperature {
    pub log_alpha: f64,
    pub target_entropy: f64,
}

impl EntropyTemperature {
    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }
}

/// Row-wise concatenation of states and actions.
pub fn concat_rows(states: &[f64], sd: usize, actions: &[f64], ad: usize, batch: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(batch * (sd + ad));
    for b in 0..batch {
        out.extend_from_slice(&states[b * sd..(b + 1) * sd]);
        out.extend_from_slice(&actions[b * ad..(b + 1) * ad]);
    }
    out
}

/// Mean squared Bellman residual of one critic and its parameter gradient.
pub fn critic_loss(
    spec: &MlpSpec,
    params: &[f64],
    state_actions: &[f64],
    targets: &[f64],
    batch: usize,
) -> Result<(f64, Vec<f64>)> {
    let tape = spec.forward_batch(params, state_actions, batch)?;
    let q = tape.output();
    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut g = Vec::with_capacity(batch);
    for (qv, y) in q.iter().zip(targets) {
        let e = qv - y;
        loss += e * e * inv_b;
        g.push(2.0 * e * inv_b);
    }
    Ok((loss, spec.backward(params, &tape, &g).param_grad))
}

/// Reparameterized actor objective `mean[alpha log pi(a|s) - min_i Q_i(s, a)]`
/// with `a = tanh(mu + sigma * noise)`, and its gradient in the actor
/// parameters. Returns `(loss, grad, log_probs)`.
pub fn actor_loss(
    actor: &ActorPolicy,
    actor_params: &[f64],
    critics: &CriticPair,
    states: &[f64],
    noise: Vec<f64>,
    alpha: f64,
    batch: usize,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let sd = actor.state_dim();
    let ad = actor.action_dim();
    let sample = actor.sample_with_noise(actor_params, states, batch, noise)?;
    let sa = concat_rows(states, sd, &sample.unit_actions, ad, batch);
    let t1 = critics.spec.forward_batch(critics.online[0].as_slice(), &sa, batch)?;
    let t2 = critics.spec.forward_batch(critics.online[1].as_slice(), &sa, batch)?;
    let (q1, q2) = (t1.output(), t2.output());

    let inv_b = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut g1 = vec![0.0; batch];
    let mut g2 = vec![0.0; batch];
    for b in 0..batch {
        let q = q1[b].min(q2[b]);
        loss += inv_b * (alpha * sample.log_probs[b] - q);
        // dQ/da flows from whichever critic attains the min
        if q1[b] <= q2[b] {
            g1[b] = 1.0;
        } else {
            g2[b] = 1.0;
        }
    }
    let d1 = critics.spec.backward(critics.online[0].as_slice(), &t1, &g1).input_grad;
    let d2 = critics.spec.backward(critics.online[1].as_slice(), &t2, &g2).input_grad;
    let mut dq_da = Vec::with_capacity(batch * ad);
    for b in 0..batch {
        let row = b * (sd + ad) + sd;
        for i in 0..ad {
            dq_da.push(d1[row + i] + d2[row + i]);
        }
    }
    let g_out = actor::actor_output_grad(&sample, &dq_da, alpha, batch);
    let grad = actor.spec().backward(actor_params, &sample.tape, &g_out).param_grad;
    Ok((loss, grad, sample.log_probs))
}

/// Soft Bellman targets, with the per-critic parts kept for inspection.
#[derive(Debug, Clone)]
pub struct TargetDetail {
    pub q1: Vec<f64>,
    pub q2: Vec<f64>,
    pub min_q: Vec<f64>,
    pub targets: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha_loss: f64,
    pub alpha: f64,
    pub mean_q: f64,
    /// Estimated policy entropy, `-mean log pi`.
    pub entropy: f64,
}

impl LossSummary {
    pub fn is_finite(&self) -> bool {
        [self.critic_loss, self.actor_loss, self.alpha_loss, self.alpha, self.mean_q]
            .iter()
            .all(|v| v.is_finite())
    }
}

/// The learner: actor, critics, temperature and their optimizers.
#[derive(Debug, Clone)]
pub struct Sac {
    cfg: SacConfig,
    actor: ActorPolicy,
    actor_opt: AdamState,
    critics: CriticPair,
    critic_opts: [AdamState; 2],
    temperature: EntropyTemperature,
    alpha_opt: AdamState,
    rng: ChaCha8Rng,
    updates: u64,
}

impl Sac {
    pub fn new(state_dim: usize, bounds: ActionBounds, cfg: SacConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let action_dim = bounds.dim();
        let actor = ActorPolicy::new(state_dim, &cfg.hidden, bounds, &mut rng)?;
        let critics = CriticPair::new(state_dim, action_dim, &cfg.hidden, cfg.tau, &mut rng)?;
        let n_critic = critics.spec.param_count();
        Ok(Self {
            actor_opt: AdamState::new(actor.params().len()),
            critic_opts: [AdamState::new(n_critic), AdamState::new(n_critic)],
            temperature: EntropyTemperature {
                log_alpha: cfg.init_alpha.max(1e-12).ln(),
                target_entropy: cfg.target_entropy.unwrap_or(-(action_dim as f64)),
            },
            alpha_opt: AdamState::new(1),
            actor,
            critics,
            cfg,
            rng,
            updates: 0,
        })
    }

    pub fn config(&self) -> &SacConfig {
        &self.cfg
    }

    pub fn actor(&self) -> &ActorPolicy {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut ActorPolicy {
        &mut self.actor
    }

    pub fn critics(&self) -> &CriticPair {
        &self.critics
    }

    pub fn critics_mut(&mut self) -> &mut CriticPair {
        &mut self.critics
    }

    pub fn temperature(&self) -> &EntropyTemperature {
        &self.temperature
    }

    pub fn set_log_alpha(&mut self, log_alpha: f64) {
        self.temperature.log_alpha = log_alpha;
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn rng_mut(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn standard_noise(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.rng.sample(StandardNormal)).collect()
    }

    /// `y = r + gamma (1 - done) (min_i Q'_i(s', a') - alpha log pi(a'|s'))`
    /// with `a'` drawn from the current actor using `noise`.
    pub fn critic_targets(&self, batch: &Batch, gamma: f64, noise: Vec<f64>) -> Result<TargetDetail> {
        let b = batch.size;
        let sd = self.actor.state_dim();
        let ad = self.actor.action_dim();
        let next = self
            .actor
            .sample_with_noise(self.actor.params().as_slice(), &batch.next_states, b, noise)?;
        let sa = concat_rows(&batch.next_states, sd, &next.unit_actions, ad, b);
        let spec = &self.critics.spec;
        let q1 = spec.forward_batch(self.critics.target[0].as_slice(), &sa, b)?.output().to_vec();
        let q2 = spec.forward_batch(self.critics.target[1].as_slice(), &sa, b)?.output().to_vec();
        let alpha = self.temperature.alpha();
        let min_q: Vec<f64> = q1.iter().zip(&q2).map(|(a, c)| a.min(*c)).collect();
        let targets = (0..b)
            .map(|i| {
                let soft_v = min_q[i] - alpha * next.log_probs[i];
                batch.rewards[i] + gamma * (1.0 - batch.dones[i]) * soft_v
            })
            .collect();
        Ok(TargetDetail {
            q1,
            q2,
            min_q,
            targets,
        })
    }

    /// One gradient step each on both critics, the actor and the temperature,
    /// then a soft target update.
    pub fn update(&mut self, batch: &Batch) -> Result<LossSummary> {
        let b = batch.size;
        assert!(b >= 1, "batch must be non-empty");
        let sd = self.actor.state_dim();
        let ad = self.actor.action_dim();

        let noise = self.standard_noise(b * ad);
        let detail = self.critic_targets(batch, self.cfg.gamma, noise)?;
        let sa = concat_rows(&batch.states, sd, &batch.actions, ad, b);
        let mut critic_loss_sum = 0.0;
        for i in 0..2 {
            let (loss, g) = critic_loss(
                &self.critics.spec,
                self.critics.online[i].as_slice(),
                &sa,
                &detail.targets,
                b,
            )?;
            critic_loss_sum += loss;
            adaptive_update(
                self.critics.online[i].as_mut_slice(),
                &g,
                &mut self.critic_opts[i],
                self.cfg.lr_critic,
            );
        }

        let noise = self.standard_noise(b * ad);
        let alpha = self.temperature.alpha();
        let (actor_loss_v, g, log_probs) = actor_loss(
            &self.actor,
            self.actor.params().as_slice(),
            &self.critics,
            &batch.states,
            noise,
            alpha,
            b,
        )?;
        adaptive_update(
            self.actor.params_mut().as_mut_slice(),
            &g,
            &mut self.actor_opt,
            self.cfg.lr_actor,
        );

        let mean_logp = log_probs.iter().sum::<f64>() / b as f64;
        let alpha_term = mean_logp + self.temperature.target_entropy;
        let alpha_loss = -self.temperature.log_alpha * alpha_term;
        if self.cfg.auto_alpha {
            let mut la = [self.temperature.log_alpha];
            adaptive_update(&mut la, &[-alpha_term], &mut self.alpha_opt, self.cfg.lr_alpha);
            self.temperature.log_alpha = la[0];
        }

        self.critics.soft_update();
        self.updates += 1;
        Ok(LossSummary {
            critic_loss: 0.5 * critic_loss_sum,
            actor_loss: actor_loss_v,
            alpha_loss,
            alpha: self.temperature.alpha(),
            mean_q: detail.min_q.iter().sum::<f64>() / b as f64,
            entropy: -mean_logp,
        })
    }

    /// Samples from `buffer` and updates, or `None` when the buffer holds
    /// fewer than one batch.
    pub fn update_from(&mut self, buffer: &ReplayBuffer) -> Result<Option<LossSummary>> {
        if buffer.len() < self.cfg.batch_size {
            return Ok(None);
        }
        let batch = buffer.sample(self.cfg.batch_size, &mut self.rng);
        self.update(&batch).map(Some)
    }
}
