//! The ACORD training loop: `k` randomization, state augmentation, the
//! shaped reward, dual buffer writes and interleaved learner/discriminator
//! updates.

mod eval;
mod reward;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use eval::{evaluate_policy, EvalEpisode, EvalOptions, EvalSummary, KBin, KSchedule, PolicySnapshot};
pub use reward::{acord_reward, resample_k, shaped_reward, RewardBranch, ShapedReward};

use crate::checkpoint::Checkpoint;
use crate::discriminator::{DiscriminatorSet, EpsilonConfig, DEFAULT_DELTA};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::kspace::{augment_state, BehaviorOversightVector, FeatureMap};
use crate::sac::{ActionMode, ReplayBuffer, Sac, SacConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AcordConfig {
    /// `k` resample interval `n` in steps; `None` means half the episode cap.
    pub resample_interval: Option<usize>,
    /// Penalty magnitude `c` for steps without task progress.
    pub c: f64,
    pub lambda_env: f64,
    pub lambda_progress: f64,
    pub lambda_div: f64,
    /// Learner update interval `z`.
    pub z: usize,
    /// Discriminator update interval `v`.
    pub v: usize,
    pub total_steps: u64,
    pub seed: u64,
    /// Uniform-random actions for this many initial steps.
    pub warmup_steps: u64,
    /// Floor on `|W - k|` inside the diversity log.
    pub delta: f64,
    pub epsilon: EpsilonConfig,
    pub disc_batch: usize,
    pub disc_capacity: usize,
    pub disc_hidden: Vec<usize>,
    pub disc_lr: f64,
    /// Steps fitting the discriminators to an increasing prior before
    /// training (0 leaves them at their zero-output start).
    pub disc_orient_steps: usize,
    /// Write a checkpoint every this many steps (0 disables periodic ones).
    pub checkpoint_every: u64,
    /// Record learner/discriminator losses every this many steps.
    pub log_every: u64,
}

impl Default for AcordConfig {
    fn default() -> Self {
        Self {
            resample_interval: None,
            c: 1.0,
            lambda_env: 1.0,
            lambda_progress: 1.0,
            lambda_div: 1.0,
            z: 1,
            v: 4,
            total_steps: 300_000,
            seed: 0,
            warmup_steps: 1000,
            delta: DEFAULT_DELTA,
            epsilon: EpsilonConfig::default(),
            disc_batch: 256,
            disc_capacity: 100_000,
            disc_hidden: vec![64, 64],
            disc_lr: 3e-3,
            disc_orient_steps: 200,
            checkpoint_every: 0,
            log_every: 1000,
        }
    }
}

impl AcordConfig {
    /// `n`, defaulting to `ceil(cap / 2)`.
    pub fn n_for(&self, episode_cap: usize) -> usize {
        self.resample_interval.unwrap_or(episode_cap.div_ceil(2)).max(1)
    }

    /// Field-level validation; `failure_reward` is the environment's `R_env`
    /// on the failure set.
    pub fn validate(&self, failure_reward: f64) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::config(format!("acord.{field}: {why}")));
        if self.resample_interval == Some(0) {
            return bad("resample_interval", "must be >= 1");
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return bad("c", "must be > 0");
        }
        for (name, v) in [
            ("lambda_env", self.lambda_env),
            ("lambda_progress", self.lambda_progress),
            ("lambda_div", self.lambda_div),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(name, "must be >= 0");
            }
        }
        if self.z == 0 {
            return bad("z", "must be >= 1");
        }
        if self.v == 0 {
            return bad("v", "must be >= 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad("delta", "must lie in (0, 1)");
        }
        if self.disc_batch == 0 || self.disc_capacity < self.disc_batch {
            return bad("disc_batch", "must be >= 1 and at most disc_capacity");
        }
        if self.disc_hidden.is_empty() || self.disc_hidden.contains(&0) {
            return bad("disc_hidden", "needs at least one non-empty layer");
        }
        if !(self.disc_lr > 0.0) {
            return bad("disc_lr", "must be > 0");
        }
        if !(self.lambda_env * failure_reward < 0.0) {
            return bad(
                "lambda_env",
                "lambda_env times the environment failure reward must be negative",
            );
        }
        Ok(())
    }
}

/// Learner, discriminators and the feature map they share.
#[derive(Debug, Clone)]
pub struct AcordAgent {
    pub learner: Sac,
    pub discs: DiscriminatorSet,
    pub map: FeatureMap,
}

impl AcordAgent {
    pub fn new(env: &dyn Environment, map: FeatureMap, sac: SacConfig, cfg: &AcordConfig) -> Result<Self> {
        map.validate_for(env.obs_dim())?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_d15c);
        let mut discs = DiscriminatorSet::new(
            map.clone(),
            &cfg.disc_hidden,
            cfg.epsilon,
            cfg.disc_lr,
            cfg.disc_batch,
            &mut rng,
        )?;
        discs.orient_increasing(cfg.disc_orient_steps, &mut rng);
        let learner = Sac::new(
            env.obs_dim() + map.m(),
            env.action_bounds().clone(),
            sac,
            cfg.seed.wrapping_add(1),
        )?;
        Ok(Self { learner, discs, map })
    }

    pub fn snapshot(&self) -> PolicySnapshot {
        PolicySnapshot {
            actor: self.learner.actor().clone(),
            map: self.map.clone(),
        }
    }

    pub fn to_checkpoint(&self, config_hash: u64, step: u64) -> Checkpoint {
        let mut c = Checkpoint::new(config_hash, step);
        let actor = self.learner.actor();
        c.push_net("actor", actor.spec(), actor.params());
        let critics = self.learner.critics();
        for i in 0..2 {
            c.push_net(format!("critic{i}"), critics.spec(), &critics.online[i]);
            c.push_net(format!("critic{i}_target"), critics.spec(), &critics.target[i]);
        }
        c.push_scalar("log_alpha", self.learner.temperature().log_alpha);
        for (j, d) in self.discs.discriminators().iter().enumerate() {
            c.push_net(format!("disc{j}"), d.spec(), d.params());
        }
        c
    }

    /// Restores all weights. Optimizer moments and buffers are not stored.
    pub fn load_checkpoint(&mut self, c: &Checkpoint) -> Result<()> {
        let spec = self.learner.actor().spec().clone();
        *self.learner.actor_mut().params_mut() = c.net("actor", &spec)?;
        let cspec = self.learner.critics().spec().clone();
        for i in 0..2 {
            let online = c.net(&format!("critic{i}"), &cspec)?;
            let target = c.net(&format!("critic{i}_target"), &cspec)?;
            let critics = self.learner.critics_mut();
            critics.online[i] = online;
            critics.target[i] = target;
        }
        self.learner.set_log_alpha(c.scalar("log_alpha")?);
        for (j, d) in self.discs.discriminators_mut().iter_mut().enumerate() {
            let spec = d.spec().clone();
            *d.params_mut() = c.net(&format!("disc{j}"), &spec)?;
        }
        Ok(())
    }
}

/// A `k` change inside an episode, at episode step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KChange {
    pub t: usize,
    pub k: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub index: usize,
    pub start_step: u64,
    pub steps: usize,
    pub env_return: f64,
    pub shaped_return: f64,
    pub failed: bool,
    pub completed: bool,
    /// Mean diversity reward over steps where that case fired (0 if none).
    pub mean_diversity: f64,
    pub k_schedule: Vec<KChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateLog {
    pub step: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub entropy: f64,
    pub disc_loss: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: u64,
    pub episodes: Vec<EpisodeLog>,
    pub updates: Vec<UpdateLog>,
    pub learner_updates: u64,
    pub disc_updates: u64,
    pub learner_buffer_writes: u64,
    pub disc_buffer_writes: u64,
    pub branch_counts: BranchCounts,
    pub checkpoints: Vec<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BranchCounts {
    pub failure: u64,
    pub no_progress: u64,
    pub diversity: u64,
}

impl TrainReport {
    /// One row per episode. `k_schedule` is `t:k1/k2/..` entries joined by `;`.
    pub fn episodes_csv(&self) -> String {
        let mut out = String::from(
            "episode,start_step,steps,env_return,shaped_return,failed,completed,mean_diversity,k_schedule\n",
        );
        for e in &self.episodes {
            let sched = e
                .k_schedule
                .iter()
                .map(|c| {
                    let k: Vec<String> = c.k.iter().map(|v| format!("{v:.6}")).collect();
                    format!("{}:{}", c.t, k.join("/"))
                })
                .collect::<Vec<_>>()
                .join(";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                e.index,
                e.start_step,
                e.steps,
                e.env_return,
                e.shaped_return,
                e.failed,
                e.completed,
                e.mean_diversity,
                sched
            );
        }
        out
    }

    pub fn updates_csv(&self) -> String {
        let m = self.updates.first().map_or(0, |u| u.disc_loss.len());
        let mut out = String::from("step,critic_loss,actor_loss,alpha,entropy");
        for j in 0..m {
            let _ = write!(out, ",disc{j}_loss");
        }
        out.push('\n');
        for u in &self.updates {
            let _ = write!(out, "{},{},{},{},{}", u.step, u.critic_loss, u.actor_loss, u.alpha, u.entropy);
            for l in &u.disc_loss {
                let _ = write!(out, ",{l}");
            }
            out.push('\n');
        }
        out
    }

    /// Failure rate over the last `n` episodes.
    pub fn recent_failure_rate(&self, n: usize) -> f64 {
        let tail = &self.episodes[self.episodes.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|e| e.failed).count() as f64 / tail.len() as f64
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where checkpoints go; `None` disables them.
    pub checkpoint_dir: Option<PathBuf>,
    pub config_hash: u64,
    /// Global step to start from when resuming.
    pub start_step: u64,
}

fn write_checkpoint(agent: &AcordAgent, opts: &TrainOptions, step: u64, name: &str) -> Result<Option<PathBuf>> {
    let Some(dir) = &opts.checkpoint_dir else {
        return Ok(None);
    };
    std::fs::create_dir_all(dir)?;
    let ckpt = agent.to_checkpoint(opts.config_hash, step);
    let path = dir.join(name);
    ckpt.save(&path)?;
    ckpt.save(&dir.join("latest.ckpt"))?;
    Ok(Some(path))
}

/// Checkpoint file name for global step `step`.
pub fn checkpoint_name(step: u64) -> String {
    format!("step-{step:09}.ckpt")
}

pub fn latest_checkpoint(dir: &Path) -> Option<PathBuf> {
    let p = dir.join("latest.ckpt");
    p.exists().then_some(p)
}

/// Runs the training loop from `opts.start_step` to `cfg.total_steps`.
pub fn train(
    env: &mut dyn Environment,
    agent: &mut AcordAgent,
    cfg: &AcordConfig,
    opts: &TrainOptions,
) -> Result<TrainReport> {
    cfg.validate(env.failure_reward())?;
    let map = agent.map.clone();
    map.validate_for(env.obs_dim())?;
    if agent.discs.m() != map.m() {
        return Err(Error::dim("discriminator count", map.m(), agent.discs.m()));
    }
    let m = map.m();
    let state_dim = env.obs_dim() + m;
    if agent.learner.actor().state_dim() != state_dim {
        return Err(Error::dim("learner input", state_dim, agent.learner.actor().state_dim()));
    }
    let act_dim = env.action_bounds().dim();
    let n = cfg.n_for(env.episode_cap());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ opts.start_step.rotate_left(17));
    let mut d_psi = ReplayBuffer::new(state_dim, act_dim, agent.learner.config().buffer_capacity);
    let mut d_w = ReplayBuffer::new(state_dim, act_dim, cfg.disc_capacity);
    let mut report = TrainReport::default();

    if opts.start_step == 0 {
        if let Some(p) = write_checkpoint(agent, opts, 0, &checkpoint_name(0))? {
            report.checkpoints.push(p);
        }
    }

    let mut obs = Vec::new();
    let mut ep_step = 0usize;
    let mut need_reset = true;
    let mut k = BehaviorOversightVector::uniform(m, 0.5)?;
    let mut ep: Option<EpisodeLog> = None;
    let mut div_sum = 0.0;
    let mut div_n = 0usize;
    let mut last_losses: Option<(crate::sac::LossSummary, Vec<f64>)> = None;

    for step in opts.start_step..cfg.total_steps {
        if need_reset {
            obs = env.reset(&mut rng);
            ep_step = 0;
            need_reset = false;
            ep = Some(EpisodeLog {
                index: report.episodes.len(),
                start_step: step,
                steps: 0,
                env_return: 0.0,
                shaped_return: 0.0,
                failed: false,
                completed: false,
                mean_diversity: 0.0,
                k_schedule: Vec::new(),
            });
            div_sum = 0.0;
            div_n = 0;
        }
        let log = ep.as_mut().expect("episode open");
        if let Some(fresh) = resample_k(n, ep_step, m, &mut rng) {
            k = fresh;
            log.k_schedule.push(KChange {
                t: ep_step,
                k: k.values().to_vec(),
            });
        }

        let s = augment_state(&obs, &k, &map)?;
        let unit = if step < cfg.warmup_steps {
            (0..act_dim).map(|_| rng.random_range(-1.0..1.0)).collect()
        } else {
            let actor = agent.learner.actor();
            actor.act_unit(s.as_slice(), ActionMode::Stochastic, &mut rng)?
        };
        let action = env.action_bounds().from_unit(&unit);
        let out = env.step(&action);
        let r = acord_reward(&s, &out, &agent.discs, cfg);
        match r.branch {
            RewardBranch::Failure => report.branch_counts.failure += 1,
            RewardBranch::NoProgress => report.branch_counts.no_progress += 1,
            RewardBranch::Diversity => {
                report.branch_counts.diversity += 1;
                div_sum += r.value / cfg.lambda_div.max(f64::MIN_POSITIVE);
                div_n += 1;
            }
        }
        let s_next = augment_state(&out.observation, &k, &map)?;
        // only the failure set is absorbing; success and the step cap bootstrap
        let done = out.failed;
        d_psi.push(s.as_slice(), &unit, r.value, s_next.as_slice(), done);
        d_w.push(s.as_slice(), &unit, r.value, s_next.as_slice(), done);
        report.learner_buffer_writes += 1;
        report.disc_buffer_writes += 1;

        log.steps += 1;
        log.env_return += out.env_reward;
        log.shaped_return += r.value;
        ep_step += 1;
        obs = out.observation;
        if out.terminated {
            log.failed = out.failed;
            log.completed = env.completed();
            log.mean_diversity = if div_n > 0 { div_sum / div_n as f64 } else { 0.0 };
            report.episodes.push(ep.take().expect("episode open"));
            need_reset = true;
        }

        let t = step + 1;
        if step >= cfg.warmup_steps && t % cfg.z as u64 == 0 {
            if let Some(l) = agent.learner.update_from(&d_psi)? {
                report.learner_updates += 1;
                if !l.is_finite() || !agent.learner.actor().params().is_finite() {
                    write_checkpoint(agent, opts, t, "diverged.ckpt")?;
                    return Err(Error::Diverged {
                        step: t,
                        reason: format!("non-finite learner loss {l:?}"),
                    });
                }
                let disc = last_losses.take().map(|(_, d)| d).unwrap_or_default();
                last_losses = Some((l, disc));
            }
        }
        if t % cfg.v as u64 == 0 {
            if let Some(losses) = agent.discs.update(&d_w, &mut rng) {
                report.disc_updates += 1;
                if losses.iter().any(|l| !l.total.is_finite()) {
                    write_checkpoint(agent, opts, t, "diverged.ckpt")?;
                    return Err(Error::Diverged {
                        step: t,
                        reason: "non-finite discriminator loss".into(),
                    });
                }
                let totals = losses.iter().map(|l| l.total).collect();
                let l = last_losses.take().map(|(l, _)| l).unwrap_or_default();
                last_losses = Some((l, totals));
            }
        }
        if cfg.log_every > 0 && t % cfg.log_every == 0 {
            if let Some((l, d)) = &last_losses {
                report.updates.push(UpdateLog {
                    step: t,
                    critic_loss: l.critic_loss,
                    actor_loss: l.actor_loss,
                    alpha: l.alpha,
                    entropy: l.entropy,
                    disc_loss: d.clone(),
                });
            }
        }
        if cfg.checkpoint_every > 0 && t % cfg.checkpoint_every == 0 {
            if let Some(p) = write_checkpoint(agent, opts, t, &checkpoint_name(t))? {
                report.checkpoints.push(p);
            }
        }
        report.steps = t;
    }
    if report.steps > 0 && cfg.checkpoint_every > 0 && report.steps % cfg.checkpoint_every != 0 {
        if let Some(p) = write_checkpoint(agent, opts, report.steps, &checkpoint_name(report.steps))? {
            report.checkpoints.push(p);
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{CruiseConfig, CruiseEnv};

    fn small() -> (CruiseEnv, AcordConfig, SacConfig) {
        let env = CruiseEnv::new(CruiseConfig {
            step_cap: 20,
            ..Default::default()
        });
        let cfg = AcordConfig {
            total_steps: 200,
            warmup_steps: 50,
            disc_batch: 16,
            disc_hidden: vec![8],
            log_every: 20,
            ..Default::default()
        };
        let sac = SacConfig {
            hidden: vec![8, 8],
            batch_size: 16,
            ..Default::default()
        };
        (env, cfg, sac)
    }

    #[test]
    fn zero_steps_writes_initial_checkpoint_only() {
        let (mut env, mut cfg, sac) = small();
        cfg.total_steps = 0;
        let map = env.default_feature_map();
        let mut agent = AcordAgent::new(&env, map, sac, &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let opts = TrainOptions {
            checkpoint_dir: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        let r = train(&mut env, &mut agent, &cfg, &opts).unwrap();
        assert!(r.episodes.is_empty());
        assert_eq!(r.checkpoints.len(), 1);
    }

    #[test]
    fn both_buffers_see_every_transition_and_runs_reproduce() {
        let (mut env, cfg, sac) = small();
        let map = env.default_feature_map();
        let run = |env: &mut CruiseEnv| {
            let mut agent = AcordAgent::new(env, map.clone(), sac.clone(), &cfg).unwrap();
            train(env, &mut agent, &cfg, &TrainOptions::default()).unwrap()
        };
        let a = run(&mut env);
        assert_eq!(a.learner_buffer_writes, 200);
        assert_eq!(a.disc_buffer_writes, 200);
        assert!(a.learner_updates > 0 && a.disc_updates > 0);
        let b = run(&mut env);
        assert_eq!(a, b);
        assert_eq!(a.episodes_csv().lines().count(), a.episodes.len() + 1);
    }

    #[test]
    fn k_resampled_at_reset_and_every_n() {
        let (mut env, mut cfg, sac) = small();
        cfg.resample_interval = Some(7);
        let map = env.default_feature_map();
        let mut agent = AcordAgent::new(&env, map, sac, &cfg).unwrap();
        let r = train(&mut env, &mut agent, &cfg, &TrainOptions::default()).unwrap();
        for e in &r.episodes {
            let ts: Vec<usize> = e.k_schedule.iter().map(|c| c.t).collect();
            let want: Vec<usize> = (0..e.steps).filter(|t| t % 7 == 0).collect();
            assert_eq!(ts, want);
        }
    }

    #[test]
    fn config_validation() {
        let cfg = AcordConfig::default();
        assert!(cfg.validate(-100.0).is_ok());
        assert!(cfg.validate(0.0).is_err());
        assert!(AcordConfig { c: 0.0, ..cfg.clone() }.validate(-1.0).is_err());
        assert!(AcordConfig { c: -1.0, ..cfg.clone() }.validate(-1.0).is_err());
        assert!(AcordConfig { z: 0, ..cfg.clone() }.validate(-1.0).is_err());
        assert!(AcordConfig { resample_interval: Some(0), ..cfg.clone() }.validate(-1.0).is_err());
        assert_eq!(cfg.n_for(2000), 1000);
        assert_eq!(cfg.n_for(201), 101);
    }

    #[test]
    fn checkpoint_round_trip_restores_policy() {
        let (env, cfg, sac) = small();
        let map = env.default_feature_map();
        let a = AcordAgent::new(&env, map.clone(), sac.clone(), &cfg).unwrap();
        let mut b = AcordAgent::new(&env, map, sac, &AcordConfig { seed: 9, ..cfg }).unwrap();
        b.load_checkpoint(&a.to_checkpoint(1, 0)).unwrap();
        let k = BehaviorOversightVector::new(vec![0.2, 0.9]).unwrap();
        let obs = [0.1, 0.0, 0.5, 0.1];
        let pa = a.snapshot().act(&obs, &k).unwrap();
        let pb = b.snapshot().act(&obs, &k).unwrap();
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-5);
        }
    }

    #[test]
    fn evaluation_contract_on_untrained_policy() {
        let (mut env, cfg, sac) = small();
        let map = env.default_feature_map();
        let agent = AcordAgent::new(&env, map, sac, &cfg).unwrap();
        let s = evaluate_policy(
            &mut env,
            &agent.snapshot(),
            &KSchedule::Fixed { k: vec![0.5, 0.5] },
            &EvalOptions {
                episodes: 3,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.episodes.len(), 3);
        assert!((0.0..=1.0).contains(&s.failure_rate));
        assert_eq!(s.bins.len(), 10);
    }
}
