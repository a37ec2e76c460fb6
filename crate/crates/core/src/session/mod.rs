//! Painting sessions: one stepping loop per episode driven by a control cell
//! (k sliders, style choice or joystick), with scripted schedules, records
//! and replay.

mod messages;
mod record;

use std::sync::{Arc, Mutex};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use messages::{ClientMessage, Condition, ServerMessage, StateFrame};
pub use record::{score_raster, ControlValue, SessionRecord, SessionStore, TickRecord, SCHEMA_VERSION};

use crate::acord_trainer::PolicySnapshot;
use crate::baselines::{fixed_style_policy, SaController, SaParams, StyleLibrary, UserCommand};
use crate::envs::{Environment, PainterAction, PainterConfig, PainterEnv, Shape};
use crate::error::{Error, Result};
use crate::kspace::BehaviorOversightVector;
use crate::metrics::{AlignmentGrid, StrokeRaster, DEFAULT_RES, DEFAULT_TOLERANCE};

/// Default live tick rate.
pub const TICK_HZ: u32 = 20;

/// Latest control value for one session. Writers swap whole values under
/// the lock, so the stepping loop always reads a complete one.
#[derive(Debug)]
pub struct ControlCell {
    condition: Condition,
    k_dim: usize,
    styles: usize,
    slot: Mutex<ControlValue>,
}

impl ControlCell {
    pub fn new(condition: Condition, initial: ControlValue, k_dim: usize, styles: usize) -> Self {
        Self {
            condition,
            k_dim,
            styles,
            slot: Mutex::new(initial),
        }
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn get(&self) -> ControlValue {
        self.slot.lock().expect("control cell poisoned").clone()
    }

    /// Validates `msg` against the session condition, clamps it and swaps it
    /// in. Returns the value now in effect.
    pub fn apply(&self, msg: &ClientMessage) -> Result<ControlValue> {
        let value = match (self.condition, msg) {
            (Condition::Acord, ClientMessage::SetK { k }) => {
                if k.len() != self.k_dim {
                    return Err(Error::Request(format!("set_k needs {} values, got {}", self.k_dim, k.len())));
                }
                ControlValue::K(BehaviorOversightVector::clamped(k)?.values().to_vec())
            }
            (Condition::Styles, ClientMessage::SelectStyle { index }) => {
                if *index >= self.styles {
                    return Err(Error::Request(format!(
                        "style index {index} out of range (library has {})",
                        self.styles
                    )));
                }
                ControlValue::Style(*index)
            }
            (Condition::Sa, ClientMessage::Joystick { u }) => ControlValue::U(UserCommand::new(*u).0),
            (cond, other) => {
                return Err(Error::Request(format!(
                    "{} message is not accepted in a {cond} session",
                    other.kind()
                )))
            }
        };
        *self.slot.lock().expect("control cell poisoned") = value.clone();
        Ok(value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub painter: PainterConfig,
    pub library: StyleLibrary,
    pub sa: SaParams,
    pub raster_res: usize,
    pub grid: AlignmentGrid,
    pub tol: f64,
    pub config_hash: u64,
    /// Starting `k` for ACORD sessions; all 0.5 when absent.
    pub initial_k: Option<Vec<f64>>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            painter: PainterConfig::default(),
            library: StyleLibrary::default(),
            sa: SaParams::default(),
            raster_res: DEFAULT_RES,
            grid: AlignmentGrid::default(),
            tol: DEFAULT_TOLERANCE,
            config_hash: 0,
            initial_k: None,
        }
    }
}

/// One running episode.
#[derive(Debug)]
pub struct Session {
    id: String,
    condition: Condition,
    seed: u64,
    cfg: SessionConfig,
    env: PainterEnv,
    control: Arc<ControlCell>,
    policy: Option<PolicySnapshot>,
    sa: Option<SaController>,
    ticks: Vec<TickRecord>,
    failed: bool,
}

impl Session {
    /// Resets the painter on `shape` with `seed`. ACORD sessions need a policy.
    pub fn start(
        id: impl Into<String>,
        condition: Condition,
        shape: Shape,
        seed: u64,
        cfg: SessionConfig,
        policy: Option<PolicySnapshot>,
    ) -> Result<Self> {
        cfg.sa.validate()?;
        let mut env = PainterEnv::new(cfg.painter.clone(), vec![shape]);
        let k_dim = policy.as_ref().map_or(0, |p| p.map.m());
        let initial = match condition {
            Condition::Acord => {
                let p = policy
                    .as_ref()
                    .ok_or_else(|| Error::Request("acord sessions need a trained policy".into()))?;
                if p.env_state_dim() != env.observation().len() {
                    return Err(Error::dim("policy input", p.env_state_dim(), env.observation().len()));
                }
                let k = match &cfg.initial_k {
                    Some(k) => BehaviorOversightVector::clamped(k)?,
                    None => BehaviorOversightVector::uniform(k_dim, 0.5)?,
                };
                if k.len() != k_dim {
                    return Err(Error::dim("initial k", k_dim, k.len()));
                }
                ControlValue::K(k.values().to_vec())
            }
            Condition::Styles => ControlValue::Style(0),
            Condition::Sa => ControlValue::U([0.0, 0.0]),
        };
        env.reset_episode(&mut ChaCha8Rng::seed_from_u64(seed));
        let styles = cfg.library.styles().len();
        let sa = (condition == Condition::Sa).then(|| SaController::new(cfg.library.clone(), cfg.sa));
        Ok(Self {
            id: id.into(),
            condition,
            seed,
            control: Arc::new(ControlCell::new(condition, initial, k_dim, styles)),
            env,
            policy: if condition == Condition::Acord { policy } else { None },
            sa,
            cfg,
            ticks: Vec::new(),
            failed: false,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn control(&self) -> Arc<ControlCell> {
        Arc::clone(&self.control)
    }

    pub fn ticks(&self) -> u64 {
        self.ticks.len() as u64
    }

    pub fn is_terminated(&self) -> bool {
        self.env.is_done()
    }

    pub fn env(&self) -> &PainterEnv {
        &self.env
    }

    fn frame_with(&self, control: &ControlValue) -> StateFrame {
        let st = self.env.state();
        let pose = st.brush_pose();
        let mut frame = StateFrame {
            t: self.ticks(),
            brush: [pose.x, pose.y, pose.height, pose.pitch],
            k: None,
            style: None,
            u: None,
            belief: self.sa.as_ref().map(|s| s.belief.probs().to_vec()),
            waypoint_index: st.next_waypoint_index,
            terminated: self.env.is_done(),
            failed: self.failed,
            completed: self.env.completed(),
        };
        match control {
            ControlValue::K(k) => frame.k = Some(k.clone()),
            ControlValue::Style(i) => frame.style = Some(*i),
            ControlValue::U(u) => frame.u = Some(*u),
        }
        frame
    }

    /// Current state as a frame, with the control value now in the cell.
    pub fn frame(&self) -> StateFrame {
        self.frame_with(&self.control.get())
    }

    /// Reads the control cell once and advances the environment one step.
    /// After termination this only reports the final frame.
    pub fn tick(&mut self) -> Result<StateFrame> {
        let control = self.control.get();
        if self.env.is_done() {
            return Ok(self.frame_with(&control));
        }
        let state = self.env.state().clone();
        let shape = self.env.shape().clone();
        let pcfg = self.env.config().clone();
        let action = match (&control, self.condition) {
            (ControlValue::K(k), Condition::Acord) => {
                let policy = self.policy.as_ref().expect("acord session has a policy");
                let k = BehaviorOversightVector::new(k.clone())?;
                PainterAction::from_slice(&policy.act(&self.env.observation(), &k)?)
            }
            (ControlValue::Style(i), Condition::Styles) => {
                fixed_style_policy(self.cfg.library.get(*i)?, &state, &shape, &pcfg)
            }
            (ControlValue::U(u), Condition::Sa) => {
                let sa = self.sa.as_mut().expect("sa session has a controller");
                sa.step(UserCommand::new(*u), &state, &shape, &pcfg)
            }
            _ => unreachable!("control cell enforces the condition"),
        };
        let (out, _) = self.env.step_painter(&action);
        self.failed |= out.failed;
        self.ticks.push(TickRecord {
            t: self.ticks.len() as u64,
            state,
            action: action.to_array(),
            control: control.clone(),
        });
        Ok(self.frame_with(&control))
    }

    /// Closes the episode: renders the stroke and attaches scores.
    pub fn finish(self) -> Result<(SessionRecord, StrokeRaster)> {
        let mut record = SessionRecord {
            schema_version: SCHEMA_VERSION,
            id: self.id,
            condition: self.condition,
            shape: self.env.shape().name.clone(),
            seed: self.seed,
            config_hash: format!("{:016x}", self.cfg.config_hash),
            ticks: self.ticks,
            final_state: self.env.state().clone(),
            terminated: self.env.is_done(),
            failed: self.failed,
            completed: self.env.completed(),
            raster_res: self.cfg.raster_res,
            raster_file: None,
            scores: None,
        };
        let raster = record.render();
        record.scores = Some(score_raster(&raster, self.env.shape(), &self.cfg.grid, self.cfg.tol)?);
        Ok((record, raster))
    }
}

/// A control message due before step `tick` (0-based).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub tick: u64,
    #[serde(flatten)]
    pub message: ClientMessage,
}

/// Scripted stand-in for a human at the console.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ControlSchedule(pub Vec<ScheduleEntry>);

impl ControlSchedule {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text)?;
        if s.0.windows(2).any(|w| w[1].tick < w[0].tick) {
            return Err(Error::format("control schedule", "ticks must be non-decreasing"));
        }
        Ok(s)
    }

    /// Every entry must be a control message valid for `condition`.
    pub fn check(&self, condition: Condition) -> Result<()> {
        for e in &self.0 {
            let ok = matches!(
                (condition, &e.message),
                (_, ClientMessage::Finish)
                    | (Condition::Acord, ClientMessage::SetK { .. })
                    | (Condition::Styles, ClientMessage::SelectStyle { .. })
                    | (Condition::Sa, ClientMessage::Joystick { .. })
            );
            if !ok {
                return Err(Error::Request(format!(
                    "schedule entry at tick {} ({}) does not fit a {condition} session",
                    e.tick,
                    e.message.kind()
                )));
            }
        }
        Ok(())
    }

    /// Constant `k` from tick 0.
    pub fn constant_k(k: Vec<f64>) -> Self {
        Self(vec![ScheduleEntry {
            tick: 0,
            message: ClientMessage::SetK { k },
        }])
    }

    /// The control stream of a record, one entry per change.
    pub fn from_record(record: &SessionRecord) -> Self {
        let mut out = Vec::new();
        let mut last: Option<&ControlValue> = None;
        for t in &record.ticks {
            if last != Some(&t.control) {
                let message = match &t.control {
                    ControlValue::K(k) => ClientMessage::SetK { k: k.clone() },
                    ControlValue::Style(i) => ClientMessage::SelectStyle { index: *i },
                    ControlValue::U(u) => ClientMessage::Joystick { u: *u },
                };
                out.push(ScheduleEntry { tick: t.t, message });
                last = Some(&t.control);
            }
        }
        Self(out)
    }
}

/// Drives `session` with `schedule` until it terminates, a `finish` entry
/// fires, or `max_ticks` steps have run.
pub fn run_scripted(
    mut session: Session,
    schedule: &ControlSchedule,
    max_ticks: u64,
) -> Result<(SessionRecord, StrokeRaster)> {
    schedule.check(session.condition())?;
    let control = session.control();
    let mut next = 0;
    'run: while session.ticks() < max_ticks && !session.is_terminated() {
        let t = session.ticks();
        while next < schedule.0.len() && schedule.0[next].tick <= t {
            match &schedule.0[next].message {
                ClientMessage::Finish => break 'run,
                msg => {
                    control.apply(msg)?;
                }
            }
            next += 1;
        }
        session.tick()?;
    }
    session.finish()
}

/// Re-runs a recorded session's control stream from the same seed.
pub fn replay(
    record: &SessionRecord,
    shape: Shape,
    cfg: SessionConfig,
    policy: Option<PolicySnapshot>,
) -> Result<(SessionRecord, StrokeRaster)> {
    record.validate()?;
    if shape.name != record.shape {
        return Err(Error::Request(format!(
            "record was painted on {:?}, not {:?}",
            record.shape, shape.name
        )));
    }
    let session = Session::start(record.id.clone(), record.condition, shape, record.seed, cfg, policy)?;
    run_scripted(session, &ControlSchedule::from_record(record), record.ticks.len() as u64)
}
