//! Experiment configuration loaded from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acord_trainer::{AcordAgent, AcordConfig};
use crate::baselines::{SaParams, StyleLibrary};
use crate::envs::{CruiseConfig, CruiseEnv, Environment, PainterConfig, PainterEnv, Shape};
use crate::error::{Error, Result};
use crate::kspace::{FeatureEntry, FeatureMap};
use crate::metrics::{AlignmentGrid, DEFAULT_RES, DEFAULT_TOLERANCE};
use crate::sac::SacConfig;
use crate::session::SessionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    #[default]
    Cruise,
    Painter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub kind: EnvKind,
    pub cruise: CruiseConfig,
    pub painter: PainterConfig,
    /// Built-in shape names or paths to waypoint files.
    pub shapes: Vec<String>,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            kind: EnvKind::Cruise,
            cruise: CruiseConfig::default(),
            painter: PainterConfig::default(),
            shapes: vec!["heart".into(), "house".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub styles: StyleLibrary,
    pub sa: SaParams,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            styles: StyleLibrary::default(),
            sa: SaParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub raster_res: usize,
    pub tolerance: f64,
    pub grid: AlignmentGrid,
    pub burn_in: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            raster_res: DEFAULT_RES,
            tolerance: DEFAULT_TOLERANCE,
            grid: AlignmentGrid::default(),
            burn_in: 20,
        }
    }
}

/// Output locations. Not part of the config hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    pub sessions_dir: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("runs/default"),
            sessions_dir: PathBuf::from("sessions"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub env: EnvConfig,
    /// Overrides the environment's default feature map when present.
    pub features: Option<Vec<FeatureEntry>>,
    pub acord: AcordConfig,
    pub sac: SacConfig,
    pub baselines: BaselineConfig,
    pub metrics: MetricsConfig,
    pub paths: PathsConfig,
}

/// A constructed environment of either kind.
#[derive(Debug, Clone)]
pub enum BuiltEnv {
    Cruise(CruiseEnv),
    Painter(PainterEnv),
}

impl BuiltEnv {
    pub fn as_dyn(&self) -> &dyn Environment {
        match self {
            BuiltEnv::Cruise(e) => e,
            BuiltEnv::Painter(e) => e,
        }
    }

    pub fn as_dyn_mut(&mut self) -> &mut dyn Environment {
        match self {
            BuiltEnv::Cruise(e) => e,
            BuiltEnv::Painter(e) => e,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::format("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::format("config", e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, why: &str| Err(Error::config(format!("{field}: {why}")));
        let env = self.build_env()?;
        self.acord.validate(env.as_dyn().failure_reward())?;
        self.feature_map(env.as_dyn())?.validate_for(env.as_dyn().obs_dim())?;

        let s = &self.sac;
        if !(0.0..1.0).contains(&s.gamma) {
            return bad("sac.gamma", "must lie in [0, 1)");
        }
        if !(s.tau > 0.0 && s.tau <= 1.0) {
            return bad("sac.tau", "must lie in (0, 1]");
        }
        if s.batch_size == 0 || s.buffer_capacity < s.batch_size {
            return bad("sac.batch_size", "must be >= 1 and at most buffer_capacity");
        }
        for (name, v) in [("lr_actor", s.lr_actor), ("lr_critic", s.lr_critic), ("lr_alpha", s.lr_alpha)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("sac.{name}"), "must be > 0");
            }
        }
        if s.hidden.is_empty() || s.hidden.contains(&0) {
            return bad("sac.hidden", "needs at least one non-empty layer");
        }
        if !(s.init_alpha > 0.0) {
            return bad("sac.init_alpha", "must be > 0");
        }

        self.baselines.sa.validate()?;
        let m = &self.metrics;
        if m.raster_res < 8 {
            return bad("metrics.raster_res", "must be >= 8");
        }
        if !(m.tolerance > 0.0) {
            return bad("metrics.tolerance", "must be > 0");
        }
        m.grid.validate()
    }

    /// First eight bytes of the SHA-256 of the canonical JSON form, with
    /// output paths cleared.
    pub fn hash(&self) -> u64 {
        let mut c = self.clone();
        c.paths = PathsConfig::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    pub fn hash_hex(&self) -> String {
        format!("{:016x}", self.hash())
    }

    pub fn shapes(&self) -> Result<Vec<Shape>> {
        if self.env.shapes.is_empty() {
            return Err(Error::config("env.shapes: needs at least one shape"));
        }
        self.env.shapes.iter().map(|s| Shape::load(s)).collect()
    }

    pub fn build_env(&self) -> Result<BuiltEnv> {
        Ok(match self.env.kind {
            EnvKind::Cruise => BuiltEnv::Cruise(CruiseEnv::new(self.env.cruise.clone())),
            EnvKind::Painter => BuiltEnv::Painter(PainterEnv::new(self.env.painter.clone(), self.shapes()?)),
        })
    }

    pub fn feature_map(&self, env: &dyn Environment) -> Result<FeatureMap> {
        match &self.features {
            Some(entries) => FeatureMap::new(entries.clone()),
            None => Ok(env.default_feature_map()),
        }
    }

    pub fn build_agent(&self, env: &dyn Environment) -> Result<AcordAgent> {
        AcordAgent::new(env, self.feature_map(env)?, self.sac.clone(), &self.acord)
    }

    pub fn session_config(&self) -> SessionConfig {
        SessionConfig {
            painter: self.env.painter.clone(),
            library: self.baselines.styles.clone(),
            sa: self.baselines.sa,
            raster_res: self.metrics.raster_res,
            grid: self.metrics.grid.clone(),
            tol: self.metrics.tolerance,
            config_hash: self.hash(),
            initial_k: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn partial_toml_fills_defaults() {
        let c = ExperimentConfig::from_toml("[env]\nkind = \"painter\"\n[acord]\nc = 2.0\n").unwrap();
        assert_eq!(c.env.kind, EnvKind::Painter);
        assert_eq!(c.acord.c, 2.0);
        assert_eq!(c.sac, SacConfig::default());
        assert!(matches!(c.build_env().unwrap(), BuiltEnv::Painter(_)));
    }

    #[test]
    fn field_level_errors() {
        for (text, field) in [
            ("[acord]\nc = 0.0\n", "acord.c"),
            ("[acord]\nc = -1.0\n", "acord.c"),
            ("[sac]\ngamma = 1.0\n", "sac.gamma"),
            ("[baselines.sa]\nalpha = 1.5\n", "sa.alpha"),
            ("[metrics]\ntolerance = 0.0\n", "metrics.tolerance"),
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err().to_string();
            assert!(err.contains(field), "{text:?} -> {err}");
        }
        assert!(ExperimentConfig::from_toml("[acord]\nbogus = 1\n").is_err());
        let err = ExperimentConfig::from_toml(
            "[[features]]\nk_index = 0\nstate_index = 9\nname = \"x\"\n",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_) | Error::Dimension { .. }), "{err}");
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.acord.c = 2.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash_hex().len(), 16);
    }
}
