use rand::Rng;
use serde::{Deserialize, Serialize};

use super::AcordConfig;
use crate::discriminator::DiscriminatorSet;
use crate::envs::StepResult;
use crate::kspace::{sample_k, AugmentedState, BehaviorOversightVector};

/// Which case of the shaped reward fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardBranch {
    Failure,
    NoProgress,
    Diversity,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapedReward {
    pub value: f64,
    pub branch: RewardBranch,
}

/// The three-case reward with the diversity term supplied lazily, so the
/// discriminators are only evaluated when that case fires.
pub fn shaped_reward(step: &StepResult, cfg: &AcordConfig, diversity: impl FnOnce() -> f64) -> ShapedReward {
    if step.failed {
        ShapedReward {
            value: cfg.lambda_env * step.env_reward,
            branch: RewardBranch::Failure,
        }
    } else if step.progress_h <= 0.0 {
        ShapedReward {
            value: -cfg.lambda_progress * cfg.c,
            branch: RewardBranch::NoProgress,
        }
    } else {
        ShapedReward {
            value: cfg.lambda_div * diversity(),
            branch: RewardBranch::Diversity,
        }
    }
}

/// Shaped reward for taking an action in `s` with outcome `step`. The
/// diversity case scores the features of the resulting state against the
/// `k` carried by `s`.
pub fn acord_reward(
    s: &AugmentedState,
    step: &StepResult,
    discs: &DiscriminatorSet,
    cfg: &AcordConfig,
) -> ShapedReward {
    shaped_reward(step, cfg, || discs.reward_for(&step.observation, s.k(), cfg.delta))
}

/// A fresh `k` when `step_counter` is a multiple of `n` (including 0, the
/// episode reset), otherwise `None`.
pub fn resample_k<R: Rng + ?Sized>(
    n: usize,
    step_counter: usize,
    m: usize,
    rng: &mut R,
) -> Option<BehaviorOversightVector> {
    (step_counter % n.max(1) == 0).then(|| sample_k(m, rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn step(failed: bool, h: f64, env_reward: f64) -> StepResult {
        StepResult {
            observation: vec![],
            env_reward,
            terminated: failed,
            failed,
            truncated: false,
            progress_h: h,
        }
    }

    #[test]
    fn worked_cases() {
        let cfg = AcordConfig::default();
        let r = shaped_reward(&step(true, 1.0, -100.0), &cfg, || unreachable!());
        assert_eq!((r.value, r.branch), (-100.0, RewardBranch::Failure));
        let r = shaped_reward(&step(false, -2.0, 0.0), &cfg, || unreachable!());
        assert_eq!((r.value, r.branch), (-1.0, RewardBranch::NoProgress));
        let r = shaped_reward(&step(false, 0.3, 0.0), &cfg, || 0.0);
        assert_eq!((r.value, r.branch), (0.0, RewardBranch::Diversity));
    }

    #[test]
    fn zero_progress_is_penalized() {
        let cfg = AcordConfig::default();
        let r = shaped_reward(&step(false, 0.0, 5.0), &cfg, || 9.0);
        assert_eq!(r.branch, RewardBranch::NoProgress);
    }

    #[test]
    fn resample_on_multiples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(resample_k(100, 0, 2, &mut rng).is_some());
        assert!(resample_k(100, 99, 2, &mut rng).is_none());
        assert!(resample_k(100, 100, 2, &mut rng).is_some());
        let cap = 200;
        let n = cap / 2;
        let count = (0..cap).filter(|t| resample_k(n, *t, 2, &mut rng).is_some()).count();
        assert_eq!(count, 2);
    }

    proptest! {
        #[test]
        fn signs_are_separated(failed: bool, h in -5.0f64..5.0, env_r in -500.0f64..-1e-6, div in 0.0f64..6.9) {
            let cfg = AcordConfig::default();
            let r = shaped_reward(&step(failed, h, env_r), &cfg, || div);
            match r.branch {
                RewardBranch::Diversity => prop_assert!(r.value >= 0.0 && !failed && h > 0.0),
                RewardBranch::Failure => prop_assert!(r.value < 0.0 && failed),
                RewardBranch::NoProgress => prop_assert!(r.value < 0.0 && !failed && h <= 0.0),
            }
        }
    }
}
