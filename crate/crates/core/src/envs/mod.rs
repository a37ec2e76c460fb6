//! Task environments: the waypoint-tracing painter and the kinematic cruise
//! task, plus brush-stroke rendering.

mod cruise;
mod painter;
mod shape;
mod stroke;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::kspace::FeatureMap;

pub use cruise::{cruise_step, CruiseConfig, CruiseEnv, CruiseState, CruiseStep};
pub use painter::{
    painter_progress, painter_reward, painter_step, stroke_half_width, PainterAction,
    PainterConfig, PainterEnv, PainterState, PainterStep, PITCH_MAX, W_MAX, Z_CONTACT, Z_MAX,
};
pub use shape::{Shape, BUILTIN_SHAPES};
pub use stroke::{render_stroke, stroke_widths, BrushPose};

/// Outcome of one environment tick.
#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub observation: Vec<f64>,
    pub env_reward: f64,
    /// Episode ended (success, failure, or step cap).
    pub terminated: bool,
    /// Entered the failure set; always implies `terminated`.
    pub failed: bool,
    /// Ended only because the step cap fired.
    pub truncated: bool,
    /// Task progress heuristic `h(s, a)` for this tick.
    pub progress_h: f64,
}

/// Per-axis action box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionBounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl ActionBounds {
    pub fn symmetric(limits: &[f64]) -> Self {
        Self {
            low: limits.iter().map(|l| -l).collect(),
            high: limits.to_vec(),
        }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn clip(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(a, (lo, hi))| if a.is_nan() { 0.0 } else { a.clamp(*lo, *hi) })
            .collect()
    }

    /// Maps `[-1, 1]^d` onto the box.
    pub fn from_unit(&self, unit: &[f64]) -> Vec<f64> {
        unit.iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(u, (lo, hi))| lo + (u + 1.0) * 0.5 * (hi - lo))
            .collect()
    }

    /// Maps the box onto `[-1, 1]^d`.
    pub fn to_unit(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.low.iter().zip(&self.high))
            .map(|(a, (lo, hi))| 2.0 * (a - lo) / (hi - lo) - 1.0)
            .collect()
    }
}

/// A single-episode state machine with a flat observation vector.
pub trait Environment {
    fn name(&self) -> &str;

    /// Environment state dimension `n` (before `k` augmentation).
    fn obs_dim(&self) -> usize;

    fn action_bounds(&self) -> &ActionBounds;

    fn episode_cap(&self) -> usize;

    /// Reward handed out on entering the failure set.
    fn failure_reward(&self) -> f64;

    /// The behavior feature axes this environment exposes.
    fn default_feature_map(&self) -> FeatureMap;

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64>;

    /// Advances one tick. Actions are clipped to [`Environment::action_bounds`].
    fn step(&mut self, action: &[f64]) -> StepResult;

    /// Whether the last episode reached its task goal (painter: every
    /// waypoint). Environments without a goal report `false`.
    fn completed(&self) -> bool {
        false
    }
}
