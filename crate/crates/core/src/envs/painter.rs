use std::f64::consts::PI;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::{ActionBounds, BrushPose, Environment, Shape, StepResult};
use crate::kspace::FeatureMap;

/// Highest brush-tip height above the canvas.
pub const Z_MAX: f64 = 0.1;
/// The bristles touch the canvas at tip heights at or below this.
pub const Z_CONTACT: f64 = 0.05;
/// Stroke half-width at full pressure (tip height 0).
pub const W_MAX: f64 = 0.02;
/// Brush pitch limit, radians.
pub const PITCH_MAX: f64 = PI / 3.0;

/// Observation layout.
pub(crate) mod obs {
    pub const EE_X: usize = 0;
    pub const EE_Y: usize = 1;
    pub const EE_Z: usize = 2;
    pub const EE_PITCH: usize = 3;
    pub const VEL: usize = 4;
    pub const BRUSH_X: usize = 7;
    pub const BRUSH_Y: usize = 8;
    pub const BRUSH_HEIGHT: usize = 9;
    pub const BRUSH_PITCH: usize = 10;
    pub const WAYPOINT: usize = 11;
    pub const DISPLACEMENT: usize = 13;
    pub const DIRECTION: usize = 15;
    pub const DIM: usize = 17;
}

/// Displacement to the waypoint is scaled up so typical inter-waypoint
/// distances land near unit magnitude.
const DISPLACEMENT_SCALE: f64 = 10.0;

/// Half-width of the painted band for a brush tip at height `z`.
pub fn stroke_half_width(z: f64) -> f64 {
    W_MAX * (1.0 - z.max(0.0) / Z_CONTACT).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PainterConfig {
    /// Max |vx|, |vy| in canvas units per step.
    pub xy_speed_max: f64,
    /// Max |vz| in canvas units per step.
    pub z_speed_max: f64,
    /// Max |pitch rate| in radians per step.
    pub pitch_rate_max: f64,
    /// End-effector to brush tip distance.
    pub brush_length: f64,
    pub waypoint_tolerance: f64,
    pub step_cap: usize,
    pub failure_penalty: f64,
    /// Radius of the random start offset around `p_0`.
    pub start_jitter: f64,
}

impl Default for PainterConfig {
    fn default() -> Self {
        Self {
            xy_speed_max: 0.01,
            z_speed_max: 0.005,
            pitch_rate_max: 0.05,
            brush_length: 0.03,
            waypoint_tolerance: 0.01,
            step_cap: 2000,
            failure_penalty: -100.0,
            start_jitter: 0.02,
        }
    }
}

impl PainterConfig {
    pub fn action_bounds(&self) -> ActionBounds {
        ActionBounds::symmetric(&[
            self.xy_speed_max,
            self.xy_speed_max,
            self.z_speed_max,
            self.pitch_rate_max,
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PainterState {
    pub ee_position: [f64; 3],
    pub ee_pitch: f64,
    pub ee_velocity: [f64; 3],
    pub brush_position: [f64; 2],
    /// Brush tip height above the canvas.
    pub brush_height: f64,
    pub brush_pitch: f64,
    pub next_waypoint_index: usize,
}

impl PainterState {
    /// Places the brush tip at `brush_xy`, height `height`, pitch `pitch`,
    /// at rest.
    pub fn with_brush_at(
        brush_xy: [f64; 2],
        height: f64,
        pitch: f64,
        next_waypoint_index: usize,
        cfg: &PainterConfig,
    ) -> Self {
        let pitch = pitch.clamp(-PITCH_MAX, PITCH_MAX);
        let height = height.clamp(0.0, Z_MAX);
        let l = cfg.brush_length;
        let ee = [
            brush_xy[0] - l * pitch.sin(),
            brush_xy[1],
            height + l * pitch.cos(),
        ];
        Self::from_ee(ee, pitch, [0.0; 3], next_waypoint_index, cfg)
    }

    fn from_ee(
        ee: [f64; 3],
        pitch: f64,
        velocity: [f64; 3],
        next_waypoint_index: usize,
        cfg: &PainterConfig,
    ) -> Self {
        let l = cfg.brush_length;
        Self {
            ee_position: ee,
            ee_pitch: pitch,
            ee_velocity: velocity,
            brush_position: [ee[0] + l * pitch.sin(), ee[1]],
            brush_height: ee[2] - l * pitch.cos(),
            brush_pitch: pitch,
            next_waypoint_index,
        }
    }

    pub fn brush_pose(&self) -> BrushPose {
        BrushPose {
            x: self.brush_position[0],
            y: self.brush_position[1],
            height: self.brush_height,
            pitch: self.brush_pitch,
        }
    }

    fn target<'a>(&self, shape: &'a Shape) -> &'a [f64; 2] {
        &shape.waypoints[self.next_waypoint_index.min(shape.last_index())]
    }

    /// Vector from the brush tip to the next waypoint.
    pub fn displacement(&self, shape: &Shape) -> [f64; 2] {
        let p = self.target(shape);
        [p[0] - self.brush_position[0], p[1] - self.brush_position[1]]
    }

    /// Flat observation, see the `obs` index constants.
    pub fn observation(&self, shape: &Shape, cfg: &PainterConfig) -> Vec<f64> {
        let mut o = vec![0.0; obs::DIM];
        o[obs::EE_X] = self.ee_position[0];
        o[obs::EE_Y] = self.ee_position[1];
        o[obs::EE_Z] = self.ee_position[2] / Z_MAX;
        o[obs::EE_PITCH] = self.ee_pitch / PITCH_MAX;
        o[obs::VEL] = self.ee_velocity[0] / cfg.xy_speed_max;
        o[obs::VEL + 1] = self.ee_velocity[1] / cfg.xy_speed_max;
        o[obs::VEL + 2] = self.ee_velocity[2] / cfg.z_speed_max;
        o[obs::BRUSH_X] = self.brush_position[0];
        o[obs::BRUSH_Y] = self.brush_position[1];
        o[obs::BRUSH_HEIGHT] = self.brush_height / Z_MAX;
        o[obs::BRUSH_PITCH] = self.brush_pitch / PITCH_MAX;
        let p = self.target(shape);
        o[obs::WAYPOINT] = p[0];
        o[obs::WAYPOINT + 1] = p[1];
        let d = self.displacement(shape);
        o[obs::DISPLACEMENT] = d[0] * DISPLACEMENT_SCALE;
        o[obs::DISPLACEMENT + 1] = d[1] * DISPLACEMENT_SCALE;
        let norm = d[0].hypot(d[1]);
        if norm > 1e-9 {
            o[obs::DIRECTION] = d[0] / norm;
            o[obs::DIRECTION + 1] = d[1] / norm;
        }
        o
    }
}

/// Velocity command: `(vx, vy)` in the canvas plane plus `(vz, v_pitch)` on
/// the style axes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PainterAction {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub v_pitch: f64,
}

impl PainterAction {
    pub fn planar(vx: f64, vy: f64) -> Self {
        Self {
            vx,
            vy,
            ..Self::default()
        }
    }

    /// Accepts `[vx, vy]` or `[vx, vy, vz, v_pitch]`.
    pub fn from_slice(a: &[f64]) -> Self {
        let at = |i: usize| a.get(i).copied().unwrap_or(0.0);
        Self {
            vx: at(0),
            vy: at(1),
            vz: at(2),
            v_pitch: at(3),
        }
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.vx, self.vy, self.vz, self.v_pitch]
    }

    pub fn clipped(self, cfg: &PainterConfig) -> Self {
        let b = cfg.action_bounds();
        Self::from_slice(&b.clip(&self.to_array()))
    }
}

/// `-||p_brush - p_i||`.
pub fn painter_reward(state: &PainterState, shape: &Shape) -> f64 {
    let d = state.displacement(shape);
    -d[0].hypot(d[1])
}

/// `h(s, a) = a . (p_i - p_brush)` over the planar action components.
pub fn painter_progress(state: &PainterState, action: &PainterAction, shape: &Shape) -> f64 {
    let d = state.displacement(shape);
    action.vx * d[0] + action.vy * d[1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct PainterStep {
    pub next: PainterState,
    pub env_reward: f64,
    pub terminated: bool,
    pub failed: bool,
    /// Every waypoint has been reached.
    pub completed: bool,
    pub progress_h: f64,
}

fn point_segment_distance(p: &[f64; 2], a: &[f64; 2], b: &[f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let u = if len2 > 0.0 {
        ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (ap[0] - u * ab[0]).hypot(ap[1] - u * ab[1])
}

/// Integrates one tick of the painter.
///
/// The waypoint counts as reached when the brush tip passes within
/// `waypoint_tolerance` of it at any point along this tick's motion.
pub fn painter_step(
    state: &PainterState,
    action: &PainterAction,
    shape: &Shape,
    cfg: &PainterConfig,
) -> PainterStep {
    let a = action.clipped(cfg);
    let progress_h = painter_progress(state, &a, shape);

    let pitch = (state.ee_pitch + a.v_pitch).clamp(-PITCH_MAX, PITCH_MAX);
    let l = cfg.brush_length;
    let mut ee = [
        state.ee_position[0] + a.vx,
        state.ee_position[1] + a.vy,
        state.ee_position[2] + a.vz,
    ];
    // the tip can neither go through the canvas nor above the workspace
    let tip_h = (ee[2] - l * pitch.cos()).clamp(0.0, Z_MAX);
    ee[2] = tip_h + l * pitch.cos();
    let velocity = [
        ee[0] - state.ee_position[0],
        ee[1] - state.ee_position[1],
        ee[2] - state.ee_position[2],
    ];
    let mut next = PainterState::from_ee(ee, pitch, velocity, state.next_waypoint_index, cfg);

    let outside = !(0.0..=1.0).contains(&ee[0]) || !(0.0..=1.0).contains(&ee[1]);
    if outside {
        return PainterStep {
            next,
            env_reward: cfg.failure_penalty,
            terminated: true,
            failed: true,
            completed: false,
            progress_h,
        };
    }

    let target = state.target(shape);
    let mut completed = false;
    if point_segment_distance(target, &state.brush_position, &next.brush_position)
        <= cfg.waypoint_tolerance
    {
        if state.next_waypoint_index >= shape.last_index() {
            completed = true;
        } else {
            next.next_waypoint_index += 1;
        }
    }
    PainterStep {
        env_reward: painter_reward(&next, shape),
        next,
        terminated: completed,
        failed: false,
        completed,
        progress_h,
    }
}

/// Painter MDP over one or more shapes. When several shapes are loaded, each
/// reset picks one uniformly at random.
#[derive(Debug, Clone)]
pub struct PainterEnv {
    cfg: PainterConfig,
    bounds: ActionBounds,
    shapes: Vec<Shape>,
    active: usize,
    fixed_shape: Option<usize>,
    state: PainterState,
    steps: usize,
    completed: bool,
    done: bool,
}

impl PainterEnv {
    pub fn new(cfg: PainterConfig, shapes: Vec<Shape>) -> Self {
        assert!(!shapes.is_empty(), "painter needs at least one shape");
        let state = PainterState::with_brush_at(shapes[0].waypoints[0], 0.0, 0.0, 0, &cfg);
        Self {
            bounds: cfg.action_bounds(),
            cfg,
            shapes,
            active: 0,
            fixed_shape: None,
            state,
            steps: 0,
            completed: false,
            done: false,
        }
    }

    /// Pins resets to one shape (`None` restores random choice).
    pub fn fix_shape(&mut self, index: Option<usize>) {
        assert!(index.is_none_or(|i| i < self.shapes.len()));
        self.fixed_shape = index;
    }

    pub fn config(&self) -> &PainterConfig {
        &self.cfg
    }

    pub fn state(&self) -> &PainterState {
        &self.state
    }

    pub fn shape(&self) -> &Shape {
        &self.shapes[self.active]
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn observation(&self) -> Vec<f64> {
        self.state.observation(self.shape(), &self.cfg)
    }

    /// Starts an episode near `p_0` with a random brush height and pitch.
    pub fn reset_episode(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.active = match self.fixed_shape {
            Some(i) => i,
            None => rng.random_range(0..self.shapes.len()),
        };
        let p0 = self.shapes[self.active].waypoints[0];
        let r = self.cfg.start_jitter * rng.random::<f64>().sqrt();
        let theta = rng.random_range(0.0..2.0 * PI);
        let height = rng.random_range(0.0..Z_MAX);
        let pitch = rng.random_range(-PITCH_MAX..PITCH_MAX);
        self.state = PainterState::with_brush_at(
            [p0[0] + r * theta.cos(), p0[1] + r * theta.sin()],
            height,
            pitch,
            0,
            &self.cfg,
        );
        self.steps = 0;
        self.completed = false;
        self.done = false;
        self.observation()
    }

    /// Full step with painter-specific detail.
    pub fn step_painter(&mut self, action: &PainterAction) -> (PainterStep, bool) {
        let mut out = painter_step(&self.state, action, self.shape(), &self.cfg);
        self.steps += 1;
        let truncated = !out.terminated && self.steps >= self.cfg.step_cap;
        out.terminated |= truncated;
        self.completed = out.completed;
        self.done = out.terminated;
        self.state = out.next.clone();
        (out, truncated)
    }
}

impl Environment for PainterEnv {
    fn name(&self) -> &str {
        "painter"
    }

    fn obs_dim(&self) -> usize {
        obs::DIM
    }

    fn action_bounds(&self) -> &ActionBounds {
        &self.bounds
    }

    fn episode_cap(&self) -> usize {
        self.cfg.step_cap
    }

    fn failure_reward(&self) -> f64 {
        self.cfg.failure_penalty
    }

    fn default_feature_map(&self) -> FeatureMap {
        FeatureMap::from_pairs(&[
            (obs::BRUSH_HEIGHT, "brush height"),
            (obs::BRUSH_PITCH, "brush pitch"),
        ])
        .expect("static feature map")
    }

    fn reset(&mut self, rng: &mut dyn RngCore) -> Vec<f64> {
        self.reset_episode(rng)
    }

    fn step(&mut self, action: &[f64]) -> StepResult {
        let (out, truncated) = self.step_painter(&PainterAction::from_slice(action));
        StepResult {
            observation: self.observation(),
            env_reward: out.env_reward,
            terminated: out.terminated,
            failed: out.failed,
            truncated,
            progress_h: out.progress_h,
        }
    }

    fn completed(&self) -> bool {
        self.completed
    }
}
