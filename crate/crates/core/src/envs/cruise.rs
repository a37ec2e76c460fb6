//! Kinematic cruise task: a body moving along `x` whose forward speed and
//! hull tilt are the two behavior features. Tilting past `tilt_max` is the
//! crash.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{ActionBounds, Environment, StepResult};
use crate::kspace::FeatureMap;

const OBS_X: usize = 0;
const OBS_Y: usize = 1;
const OBS_SPEED: usize = 2;
const OBS_TILT: usize = 3;
const OBS_DIM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CruiseConfig {
    pub dt: f64,
    pub v_max: f64,
    pub tilt_max: f64,
    pub accel_max: f64,
    pub tilt_rate_max: f64,
    pub step_cap: usize,
    pub crash_reward: f64,
}

impl Default for CruiseConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            v_max: 1.0,
            tilt_max: 0.5,
            accel_max: 1.0,
            tilt_rate_max: 1.0,
            step_cap: 200,
            crash_reward: -100.0,
        }
    }
}

impl CruiseConfig {
    /// Largest distance coverable in one episode, used to scale `x`.
    fn x_scale(&self) -> f64 {
        (self.step_cap as f64 * self.dt * self.v_max).max(1e-9)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CruiseState {
    pub x_position: f64,
    pub y_offset: f64,
    pub v_x: f64,
    pub tilt: f64,
}

impl CruiseState {
    pub fn observation(&self, cfg: &CruiseConfig) -> Vec<f64> {
        let mut o = vec![0.0; OBS_DIM];
        o[OBS_X] = self.x_position / cfg.x_scale();
        o[OBS_Y] = self.y_offset;
        o[OBS_SPEED] = self.v_x / cfg.v_max;
        o[OBS_TILT] = self.tilt / cfg.tilt_max;
        o
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CruiseStep {
    pub next: CruiseState,
    pub env_reward: f64,
    pub failed: bool,
    /// `h(s, a) = v_x` after the tick.
    pub progress_h: f64,
}

/// One tick with action `(accel, tilt_rate)`, both clipped to bounds.
pub fn cruise_step(state: &CruiseState, action: [f64; 2], cfg: &CruiseConfig) -> CruiseStep {
    let accel = action[0].clamp(-cfg.accel_max, cfg.accel_max);
    let tilt_rate = action[1].clamp(-cfg.tilt_rate_max, cfg.tilt_rate_max);
    let v_x = (state.v_x + accel * cfg.dt).clamp(-cfg.v_max, cfg.v_max);
    let tilt = state.tilt + tilt_rate * cfg.dt;
    let next = CruiseState {
        x_position: state.x_position + v_x * cfg.dt,
        y_offset: state.y_offset + v_x * tilt.sin() * cfg.dt,
        v_x,
        tilt,
    };
    let failed = tilt.abs() > cfg.tilt_max;
    CruiseStep {
        next,
        env_reward: if failed {
            cfg.crash_reward
        } else {
            v_x * cfg.dt
        },
        failed,
        progress_h: v_x,
    }
}

#[derive(Debug, Clone)]
pub struct CruiseEnv {
    cfg: CruiseConfig,
    bounds: ActionBounds,
    state: CruiseState,
    steps: usize,
}

impl CruiseEnv {
    pub fn new(cfg: CruiseConfig) -> Self {
        Self {
            bounds: ActionBounds::symmetric(&[cfg.accel_max, cfg.tilt_rate_max]),
            cfg,
            state: CruiseState::default(),
            steps: 0,
        }
    }

    pub fn config(&self) -> &CruiseConfig {
        &self.cfg
    }

    pub fn state(&self) -> &CruiseState {
        &self.state
    }

    /// Speeds compatible with task progress (`h > 0`): `(0, v_max]`.
    pub fn feasible_speed_range(&self) -> (f64, f64) {
        (0.0, self.cfg.v_max)
    }
}

impl Environment for CruiseEnv {
    fn name(&self) -> &str {
        "cruise"
    }

    fn obs_dim(&self) -> usize {
        OBS_DIM
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn episode_cap(&self) -> usize {
        self.cfg.step_cap
    }

    fn failure_reward(&self) -> f64 {
        self.cfg.crash_reward
    }

    fn default_feature_map(&self) -> FeatureMap {
        FeatureMap::from_pairs(&[(OBS_SPEED, "speed"), (OBS_TILT, "hull tilt")])
            .expect("static feature map")
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.state = CruiseState {
            x_position: 0.0,
            y_offset: 0.0,
            v_x: rng.random_range(0.0..0.2) * self.cfg.v_max,
            tilt: rng.random_range(-0.1..0.1) * self.cfg.tilt_max,
        };
        self.steps = 0;
        self.state.observation(&self.cfg)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let out = cruise_step(&self.state, [action[0], action[1]], &self.cfg);
        self.state = out.next;
        self.steps += 1;
        let truncated = !out.failed && self.steps >= self.cfg.step_cap;
        StepResult {
            observation: self.state.observation(&self.cfg),
            env_reward: out.env_reward,
            terminated: out.failed || truncated,
            failed: out.failed,
            truncated,
            progress_h: out.progress_h,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tilting_past_limit_crashes() {
        let cfg = CruiseConfig::default();
        let s = CruiseState {
            tilt: 0.49,
            ..Default::default()
        };
        let out = cruise_step(&s, [0.0, 1.0], &cfg);
        assert!(out.failed);
        assert_eq!(out.env_reward, -100.0);
    }

    #[test]
    fn zero_action_integrates_position() {
        let cfg = CruiseConfig::default();
        let s = CruiseState {
            x_position: 1.0,
            v_x: 0.5,
            ..Default::default()
        };
        let out = cruise_step(&s, [0.0, 0.0], &cfg);
        assert_eq!(out.next.x_position, 1.0 + 0.5 * cfg.dt);
        assert_eq!(out.progress_h, 0.5);
    }

    #[test]
    fn speed_is_clipped() {
        let cfg = CruiseConfig::default();
        let s = CruiseState {
            v_x: 0.99,
            ..Default::default()
        };
        assert_eq!(cruise_step(&s, [1.0, 0.0], &cfg).next.v_x, cfg.v_max);
    }

    #[test]
    fn env_truncates_at_cap() {
        let mut env = CruiseEnv::new(CruiseConfig {
            step_cap: 5,
            ..Default::default()
        });
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0);
        env.reset(&mut rng);
        let results: Vec<_> = (0..5).map(|_| env.step(&[0.0, 0.0])).collect();
        assert!(results[..4].iter().all(|r| !r.terminated));
        assert!(results[4].truncated && !results[4].failed);
    }

    proptest! {
        #[test]
        fn zero_action_conserves_speed_and_tilt(v in -1.0f64..1.0, t in -0.5f64..0.5) {
            let cfg = CruiseConfig::default();
            let s = CruiseState { v_x: v, tilt: t, ..Default::default() };
            let out = cruise_step(&s, [0.0, 0.0], &cfg);
            prop_assert_eq!(out.next.v_x, v);
            prop_assert_eq!(out.next.tilt, t);
        }

        #[test]
        fn failed_implies_terminated(a in -1.0f64..1.0, r in -1.0f64..1.0, seed in 0u64..50) {
            let mut env = CruiseEnv::new(CruiseConfig::default());
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
            env.reset(&mut rng);
            for _ in 0..20 {
                let out = env.step(&[a, r]);
                prop_assert!(!out.failed || out.terminated);
                if out.terminated { break; }
            }
        }
    }
}
