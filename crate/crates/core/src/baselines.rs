//! Comparison controllers for the painter: a library of six fixed styles and
//! a multi-goal shared-autonomy blend over the style axes.

use serde::{Deserialize, Serialize};

use crate::envs::{PainterAction, PainterConfig, PainterState, Shape, PITCH_MAX, Z_CONTACT, Z_MAX};
use crate::error::{Error, Result};

pub const STYLE_COUNT: usize = 6;

/// One fixed `(height, pitch)` brush setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Style {
    pub label: String,
    /// Brush tip height above the canvas.
    pub height: f64,
    /// Radians.
    pub pitch: f64,
    pub thumbnail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Style>", into = "Vec<Style>")]
pub struct StyleLibrary(Vec<Style>);

impl StyleLibrary {
    pub fn new(styles: Vec<Style>) -> Result<Self> {
        if styles.len() != STYLE_COUNT {
            return Err(Error::config(format!(
                "style library needs exactly {STYLE_COUNT} entries, got {}",
                styles.len()
            )));
        }
        for s in &styles {
            if !(0.0..=Z_MAX).contains(&s.height) || !(-PITCH_MAX..=PITCH_MAX).contains(&s.pitch) {
                return Err(Error::config(format!("style {:?} is outside the brush limits", s.label)));
            }
        }
        Ok(Self(styles))
    }

    pub fn styles(&self) -> &[Style] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Result<&Style> {
        self.0.get(index).ok_or_else(|| {
            Error::Request(format!("style index {index} out of range (library has {STYLE_COUNT})"))
        })
    }
}

impl Default for StyleLibrary {
    /// Heights {contact, mid} by pitches {-30, 0, +30} degrees.
    fn default() -> Self {
        let mut styles = Vec::with_capacity(STYLE_COUNT);
        for (hname, height) in [("contact", 0.0), ("mid", Z_CONTACT / 2.0)] {
            for deg in [-30.0f64, 0.0, 30.0] {
                let i = styles.len();
                styles.push(Style {
                    label: format!("{hname} {deg:+.0}°"),
                    height,
                    pitch: deg.to_radians(),
                    thumbnail: format!("style-{i}"),
                });
            }
        }
        Self(styles)
    }
}

impl TryFrom<Vec<Style>> for StyleLibrary {
    type Error = Error;
    fn try_from(v: Vec<Style>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<StyleLibrary> for Vec<Style> {
    fn from(l: StyleLibrary) -> Self {
        l.0
    }
}

/// Straight-line move of the brush tip toward the next waypoint at up to
/// full speed, correcting for the tip shift a pitch change of `v_pitch`
/// causes.
pub fn waypoint_planar(state: &PainterState, v_pitch: f64, shape: &Shape, cfg: &PainterConfig) -> (f64, f64) {
    let d = state.displacement(shape);
    let p0 = state.ee_pitch;
    let p1 = (p0 + v_pitch).clamp(-PITCH_MAX, PITCH_MAX);
    let shift = cfg.brush_length * (p1.sin() - p0.sin());
    let (vx, vy) = (d[0] - shift, d[1]);
    let norm = vx.hypot(vy);
    let scale = if norm > cfg.xy_speed_max { cfg.xy_speed_max / norm } else { 1.0 };
    (vx * scale, vy * scale)
}

/// `(vz, v_pitch)` regulating the tip to `(height, pitch)`; `vz` also
/// cancels the height change the pitch move causes.
pub fn style_axes(state: &PainterState, height: f64, pitch: f64, cfg: &PainterConfig) -> (f64, f64) {
    let vp = (pitch - state.ee_pitch).clamp(-cfg.pitch_rate_max, cfg.pitch_rate_max);
    let p1 = (state.ee_pitch + vp).clamp(-PITCH_MAX, PITCH_MAX);
    let tilt = cfg.brush_length * (p1.cos() - state.ee_pitch.cos());
    let vz = (height - state.brush_height + tilt).clamp(-cfg.z_speed_max, cfg.z_speed_max);
    (vz, vp)
}

/// Paints autonomously in one fixed style.
pub fn fixed_style_policy(style: &Style, state: &PainterState, shape: &Shape, cfg: &PainterConfig) -> PainterAction {
    let (vz, v_pitch) = style_axes(state, style.height, style.pitch, cfg);
    let (vx, vy) = waypoint_planar(state, v_pitch, shape, cfg);
    PainterAction { vx, vy, vz, v_pitch }
}

/// Normalized style-axis command `u in [-1, 1]^2` over `(vz, v_pitch)`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct UserCommand(pub [f64; 2]);

impl UserCommand {
    /// Clips to the unit box; non-finite components become 0.
    pub fn new(u: [f64; 2]) -> Self {
        Self(u.map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 }))
    }

    /// In environment units.
    pub fn to_rates(self, cfg: &PainterConfig) -> (f64, f64) {
        (self.0[0] * cfg.z_speed_max, self.0[1] * cfg.pitch_rate_max)
    }
}

impl From<[f64; 2]> for UserCommand {
    fn from(u: [f64; 2]) -> Self {
        Self::new(u)
    }
}

impl From<UserCommand> for [f64; 2] {
    fn from(u: UserCommand) -> Self {
        u.0
    }
}

/// Probabilities over the style goals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SABelief(Vec<f64>);

impl SABelief {
    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn new(p: Vec<f64>) -> Result<Self> {
        let sum: f64 = p.iter().sum();
        if p.is_empty() || p.iter().any(|v| !(*v >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::config("belief must be a probability vector"));
        }
        Ok(Self(p))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn argmax(&self) -> usize {
        (0..self.0.len()).fold(0, |b, i| if self.0[i] > self.0[b] { i } else { b })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaParams {
    /// Weight of the assistance command in the blend.
    pub alpha: f64,
    /// Boltzmann rationality of the user model.
    pub beta: f64,
    /// Proportional gain mapping normalized style error to command.
    pub kappa: f64,
}

impl Default for SaParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 5.0,
            kappa: 4.0,
        }
    }
}

impl SaParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config(format!("sa.alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("sa.beta must be >= 0"));
        }
        if !(self.kappa > 0.0 && self.kappa.is_finite()) {
            return Err(Error::config("sa.kappa must be > 0"));
        }
        Ok(())
    }
}

/// Command a user aiming for `(height, pitch)` would ideally give.
pub fn goal_command(state: &PainterState, height: f64, pitch: f64, kappa: f64) -> UserCommand {
    UserCommand::new([
        kappa * (height - state.brush_height) / Z_MAX,
        kappa * (pitch - state.brush_pitch) / PITCH_MAX,
    ])
}

/// Bayes update with likelihood `exp(-beta ||u - u*_g||^2)`.
pub fn sa_update_belief(
    belief: &SABelief,
    u: UserCommand,
    state: &PainterState,
    library: &StyleLibrary,
    params: &SaParams,
) -> SABelief {
    let d2: Vec<f64> = library
        .styles()
        .iter()
        .map(|g| {
            let ug = goal_command(state, g.height, g.pitch, params.kappa).0;
            (u.0[0] - ug[0]).powi(2) + (u.0[1] - ug[1]).powi(2)
        })
        .collect();
    // shift by the best goal so the largest factor is exactly 1
    let best = d2.iter().copied().fold(f64::INFINITY, f64::min);
    let post: Vec<f64> = belief
        .0
        .iter()
        .zip(&d2)
        .map(|(b, d)| b * (-params.beta * (d - best)).exp())
        .collect();
    let z: f64 = post.iter().sum();
    if !(z > 0.0 && z.is_finite()) {
        return belief.clone();
    }
    SABelief(post.iter().map(|p| p / z).collect())
}

/// Belief-weighted mean `(height, pitch)` of the goals.
pub fn expected_goal(belief: &SABelief, library: &StyleLibrary) -> (f64, f64) {
    library
        .styles()
        .iter()
        .zip(&belief.0)
        .fold((0.0, 0.0), |(h, p), (g, w)| (h + w * g.height, p + w * g.pitch))
}

/// `alpha * assist + (1 - alpha) * u`, clipped to the unit box.
pub fn sa_blend(u: UserCommand, assist: UserCommand, alpha: f64) -> UserCommand {
    UserCommand::new([
        alpha * assist.0[0] + (1.0 - alpha) * u.0[0],
        alpha * assist.0[1] + (1.0 - alpha) * u.0[1],
    ])
}

/// Shared-autonomy controller state for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct SaController {
    pub library: StyleLibrary,
    pub params: SaParams,
    pub belief: SABelief,
}

impl SaController {
    pub fn new(library: StyleLibrary, params: SaParams) -> Self {
        Self {
            belief: SABelief::uniform(library.styles().len()),
            library,
            params,
        }
    }

    /// Updates the belief with `u`, then returns the blended action. The
    /// planar part always follows the waypoint controller.
    pub fn step(&mut self, u: UserCommand, state: &PainterState, shape: &Shape, cfg: &PainterConfig) -> PainterAction {
        self.belief = sa_update_belief(&self.belief, u, state, &self.library, &self.params);
        let (h, p) = expected_goal(&self.belief, &self.library);
        let assist = goal_command(state, h, p, self.params.kappa);
        let blended = sa_blend(u, assist, self.params.alpha);
        let (vz, v_pitch) = blended.to_rates(cfg);
        let (vx, vy) = waypoint_planar(state, v_pitch, shape, cfg);
        PainterAction { vx, vy, vz, v_pitch }
    }
}
