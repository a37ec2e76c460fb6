use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::Condition;
use crate::envs::{render_stroke, BrushPose, PainterState, Shape};
use crate::error::{Error, Result};
use crate::metrics::{consistency, AlignmentGrid, CoverageReport, StrokeRaster};

pub const SCHEMA_VERSION: u32 = 1;

/// Control value in effect for one tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlValue {
    K(Vec<f64>),
    Style(usize),
    U([f64; 2]),
}

impl ControlValue {
    pub fn condition(&self) -> Condition {
        match self {
            ControlValue::K(_) => Condition::Acord,
            ControlValue::Style(_) => Condition::Styles,
            ControlValue::U(_) => Condition::Sa,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickRecord {
    pub t: u64,
    /// State the action was taken in.
    pub state: PainterState,
    /// `[vx, vy, vz, v_pitch]` as commanded.
    pub action: [f64; 4],
    pub control: ControlValue,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub schema_version: u32,
    pub id: String,
    pub condition: Condition,
    pub shape: String,
    pub seed: u64,
    /// Hex config hash of the experiment configuration.
    pub config_hash: String,
    pub ticks: Vec<TickRecord>,
    /// State after the last tick.
    pub final_state: PainterState,
    pub terminated: bool,
    pub failed: bool,
    pub completed: bool,
    pub raster_res: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raster_file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<CoverageReport>,
}

impl SessionRecord {
    /// Checks the schema version, tick ordering and that every control entry
    /// belongs to the record's condition.
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::format(
                "session record",
                format!("unsupported schema version {}", self.schema_version),
            ));
        }
        if self.ticks.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::format("session record", "tick times must strictly increase"));
        }
        if let Some(t) = self.ticks.iter().find(|t| t.control.condition() != self.condition) {
            return Err(Error::format(
                "session record",
                format!("tick {} carries a {} control in a {} session", t.t, t.control.condition(), self.condition),
            ));
        }
        Ok(())
    }

    /// Brush poses from the first state through the final one.
    pub fn poses(&self) -> Vec<BrushPose> {
        let mut poses: Vec<BrushPose> = self.ticks.iter().map(|t| t.state.brush_pose()).collect();
        poses.push(self.final_state.brush_pose());
        poses
    }

    pub fn render(&self) -> StrokeRaster {
        render_stroke(&self.poses(), self.raster_res)
    }

    /// The `k` applied at each tick (ACORD sessions).
    pub fn k_history(&self) -> Vec<Vec<f64>> {
        self.ticks
            .iter()
            .filter_map(|t| match &t.control {
                ControlValue::K(k) => Some(k.clone()),
                _ => None,
            })
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        r.validate()?;
        Ok(r)
    }
}

/// Scores a painting against its template with the given grid and tolerance.
pub fn score_raster(raster: &StrokeRaster, shape: &Shape, grid: &AlignmentGrid, tol: f64) -> Result<CoverageReport> {
    consistency(raster, shape, grid, tol)
}

/// One JSON record plus one PGM raster per session, in a single directory.
#[derive(Debug, Clone)]
pub struct SessionStore {
    dir: PathBuf,
}

impl SessionStore {
    pub fn new(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    pub fn raster_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.pgm"))
    }

    /// Writes the raster and the record (raster file name filled in),
    /// retrying each write once.
    pub fn save(&self, record: &mut SessionRecord, raster: &StrokeRaster) -> Result<PathBuf> {
        check_id(&record.id)?;
        let raster_path = self.raster_path(&record.id);
        let mut pgm = Vec::new();
        raster.write_pgm(&mut pgm)?;
        write_retry(&raster_path, &pgm)?;
        record.raster_file = raster_path.file_name().map(|n| n.to_string_lossy().into_owned());
        let path = self.record_path(&record.id);
        write_retry(&path, record.to_json()?.as_bytes())?;
        Ok(path)
    }

    pub fn load(&self, id: &str) -> Result<SessionRecord> {
        check_id(id)?;
        SessionRecord::from_json(&fs::read_to_string(self.record_path(id))?)
    }

    pub fn load_raster(&self, record: &SessionRecord) -> Result<StrokeRaster> {
        let name = record
            .raster_file
            .as_deref()
            .ok_or_else(|| Error::format("session record", "no raster file"))?;
        StrokeRaster::read_pgm(fs::File::open(self.dir.join(name))?)
    }
}

/// Session ids become file names; keep them to a safe alphabet.
fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
        return Err(Error::Request(format!("invalid session id {id:?}")));
    }
    Ok(())
}

fn write_retry(path: &Path, bytes: &[u8]) -> Result<()> {
    match fs::write(path, bytes) {
        Ok(()) => Ok(()),
        Err(_) => Ok(fs::write(path, bytes)?),
    }
}
