use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::kspace::{augment_state, features_of, sample_k, BehaviorOversightVector, FeatureMap};
use crate::sac::ActorPolicy;

/// Frozen actor plus the feature map it was trained with.
#[derive(Debug, Clone)]
pub struct PolicySnapshot {
    pub actor: ActorPolicy,
    pub map: FeatureMap,
}

impl PolicySnapshot {
    pub fn new(actor: ActorPolicy, map: FeatureMap) -> Result<Self> {
        if actor.state_dim() <= map.m() {
            return Err(Error::config("actor input is too small for the feature map"));
        }
        Ok(Self { actor, map })
    }

    pub fn env_state_dim(&self) -> usize {
        self.actor.state_dim() - self.map.m()
    }

    /// Deterministic action in environment units.
    pub fn act(&self, obs: &[f64], k: &BehaviorOversightVector) -> Result<Vec<f64>> {
        let s = augment_state(obs, k, &self.map)?;
        self.actor.act_deterministic(s.as_slice())
    }
}

/// How `k` evolves during an evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KSchedule {
    Fixed { k: Vec<f64> },
    /// Cycles through `values`, advancing every `interval` steps.
    Stepwise { interval: usize, values: Vec<Vec<f64>> },
    /// Fresh uniform `k` at reset and every `interval` steps.
    Random { interval: usize },
}

impl KSchedule {
    pub fn validate(&self, m: usize) -> Result<()> {
        let check = |k: &Vec<f64>| -> Result<()> {
            if k.len() != m {
                return Err(Error::dim("k schedule entry", m, k.len()));
            }
            BehaviorOversightVector::new(k.clone()).map(|_| ())
        };
        match self {
            KSchedule::Fixed { k } => check(k),
            KSchedule::Stepwise { interval, values } => {
                if *interval == 0 || values.is_empty() {
                    return Err(Error::config("stepwise schedule needs interval >= 1 and values"));
                }
                values.iter().try_for_each(check)
            }
            KSchedule::Random { interval } => {
                if *interval == 0 {
                    return Err(Error::config("random schedule needs interval >= 1"));
                }
                Ok(())
            }
        }
    }

    /// `k` for episode step `t`, given the previous one.
    pub fn k_at<R: Rng + ?Sized>(
        &self,
        t: usize,
        previous: Option<&BehaviorOversightVector>,
        m: usize,
        rng: &mut R,
    ) -> BehaviorOversightVector {
        match self {
            KSchedule::Fixed { k } => BehaviorOversightVector::clamped(k).expect("validated"),
            KSchedule::Stepwise { interval, values } => {
                BehaviorOversightVector::clamped(&values[(t / interval) % values.len()]).expect("validated")
            }
            KSchedule::Random { interval } => match previous {
                Some(p) if t % interval != 0 => p.clone(),
                _ => sample_k(m, rng),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalEpisode {
    pub steps: usize,
    pub env_return: f64,
    pub failed: bool,
    pub completed: bool,
    /// Mean of each mapped feature over steps at or after the burn-in.
    pub mean_features: Vec<f64>,
}

/// Feature `j` statistics over steps whose active `k_j` fell in `[lo, hi)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KBin {
    pub j: usize,
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: Vec<EvalEpisode>,
    pub failure_rate: f64,
    pub completion_rate: f64,
    pub mean_return: f64,
    pub bins: Vec<KBin>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub episodes: usize,
    pub seed: u64,
    /// Steps at the start of each episode left out of feature statistics.
    pub burn_in: usize,
    pub bins: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            episodes: 10,
            seed: 0,
            burn_in: 0,
            bins: 5,
        }
    }
}

/// Deterministic-mode rollouts of `policy` under `schedule`.
pub fn evaluate_policy(
    env: &mut dyn Environment,
    policy: &PolicySnapshot,
    schedule: &KSchedule,
    opts: &EvalOptions,
) -> Result<EvalSummary> {
    let m = policy.map.m();
    schedule.validate(m)?;
    if env.obs_dim() != policy.env_state_dim() {
        return Err(Error::dim("policy input", policy.env_state_dim(), env.obs_dim()));
    }
    let nb = opts.bins.max(1);
    let mut acc = vec![vec![(0usize, 0.0f64, f64::INFINITY, f64::NEG_INFINITY); nb]; m];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut episodes = Vec::with_capacity(opts.episodes);
    for _ in 0..opts.episodes {
        let mut obs = env.reset(&mut rng);
        let mut k: Option<BehaviorOversightVector> = None;
        let mut ep = EvalEpisode {
            steps: 0,
            env_return: 0.0,
            failed: false,
            completed: false,
            mean_features: vec![0.0; m],
        };
        let mut counted = 0usize;
        for t in 0..env.episode_cap() {
            let kt = schedule.k_at(t, k.as_ref(), m, &mut rng);
            let action = policy.act(&obs, &kt)?;
            let out = env.step(&action);
            ep.steps += 1;
            ep.env_return += out.env_reward;
            if t >= opts.burn_in && !out.failed {
                let f = features_of(&out.observation, &policy.map)?;
                for j in 0..m {
                    ep.mean_features[j] += f[j];
                    let b = ((kt.get(j) * nb as f64) as usize).min(nb - 1);
                    let cell = &mut acc[j][b];
                    cell.0 += 1;
                    cell.1 += f[j];
                    cell.2 = cell.2.min(f[j]);
                    cell.3 = cell.3.max(f[j]);
                }
                counted += 1;
            }
            obs = out.observation;
            k = Some(kt);
            if out.terminated {
                ep.failed = out.failed;
                break;
            }
        }
        ep.completed = env.completed();
        if counted > 0 {
            ep.mean_features.iter_mut().for_each(|v| *v /= counted as f64);
        }
        episodes.push(ep);
    }
    let n = episodes.len().max(1) as f64;
    let bins = acc
        .iter()
        .enumerate()
        .flat_map(|(j, row)| {
            row.iter().enumerate().map(move |(b, &(count, sum, lo, hi))| KBin {
                j,
                lo: b as f64 / nb as f64,
                hi: (b + 1) as f64 / nb as f64,
                count,
                mean: if count > 0 { sum / count as f64 } else { f64::NAN },
                min: lo,
                max: hi,
            })
        })
        .collect();
    Ok(EvalSummary {
        failure_rate: episodes.iter().filter(|e| e.failed).count() as f64 / n,
        completion_rate: episodes.iter().filter(|e| e.completed).count() as f64 / n,
        mean_return: episodes.iter().map(|e| e.env_return).sum::<f64>() / n,
        episodes,
        bins,
    })
}
