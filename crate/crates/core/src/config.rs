//! JSON scenario files.
//!
//! Every block has defaults, so `{}` is a valid scenario: the anomaly-free
//! default mission with the analytic policy. Relative paths resolve against
//! the directory of the scenario file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::calib::CalibConfig;
use crate::error::{Error, Result};
use crate::experiment::DataGenConfig;
use crate::field::{load_grid, AnomalyPatch, BaseField, DipoleParams, World};
use crate::nav::mission::{MissionSpec, PolicyKind};
use crate::nav::{SpeedSchedule, DEFAULT_MIN_SINE};
use crate::talstm::{ModelDims, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub dipole: DipoleParams,
    /// MAGGRID file replacing the dipole as base field.
    pub grid: Option<PathBuf>,
    pub anomalies: Vec<AnomalyPatch>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            dipole: DipoleParams::default(),
            grid: None,
            anomalies: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MissionConfig {
    /// `[lat, lon]`, degrees.
    pub origin: [f64; 2],
    pub destinations: Vec<[f64; 2]>,
    pub eps: f64,
    /// Per leg.
    pub max_steps: usize,
    pub dt_h: f64,
    pub window: usize,
    pub min_sine: f64,
}

impl Default for MissionConfig {
    fn default() -> Self {
        Self {
            origin: [22.6, 132.9],
            destinations: vec![[20.8, 136.0]],
            eps: 0.02,
            max_steps: 300,
            dt_h: 0.1,
            window: 20,
            min_sine: DEFAULT_MIN_SINE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    /// Model file; the `--model` flag takes precedence.
    pub model: Option<PathBuf>,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Analytic,
            model: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: 20 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteConfig {
    pub repetitions: usize,
    /// Half-width of the uniform origin jitter, degrees.
    pub origin_jitter_deg: f64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            repetitions: 10,
            origin_jitter_deg: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub seed: u64,
    pub world: WorldConfig,
    pub mission: MissionConfig,
    pub schedule: SpeedSchedule,
    pub policy: PolicyConfig,
    pub calibration: CalibConfig,
    pub model: ModelConfig,
    pub training: TrainConfig,
    pub data: DataGenConfig,
    pub suite: SuiteConfig,
    /// Directory that relative paths resolve against. Not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Independent sub-seeds derived from one base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Data,
    ModelInit,
    Training,
    Suite,
}

/// SplitMix64 finalizer over `base` and the stream index.
pub fn derive_seed(base: u64, stream: SeedStream) -> u64 {
    let mut z = base.wrapping_add((stream as u64 + 1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl ScenarioConfig {
    pub fn from_json(text: &str, base_dir: &Path) -> Result<Self> {
        let mut c: ScenarioConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.base_dir = base_dir.to_path_buf();
        Ok(c)
    }

    /// Read and validate a scenario file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        let c = Self::from_json(&text, dir).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        c.validate()?;
        Ok(c)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |e: Error| Error::Config(e.to_string());
        self.world.dipole.validate().map_err(cfg)?;
        for p in &self.world.anomalies {
            p.validate().map_err(cfg)?;
        }
        self.mission_spec().validate().map_err(cfg)?;
        self.calibration.validate().map_err(cfg)?;
        self.training.validate().map_err(cfg)?;
        self.data.validate().map_err(cfg)?;
        if self.model.hidden == 0 {
            return Err(Error::Config("model.hidden must be >= 1".into()));
        }
        if self.suite.repetitions == 0 {
            return Err(Error::Config("suite.repetitions must be >= 1".into()));
        }
        if !(self.suite.origin_jitter_deg >= 0.0 && self.suite.origin_jitter_deg.is_finite()) {
            return Err(Error::Config("suite.origin_jitter_deg must be >= 0".into()));
        }
        Ok(())
    }

    pub fn mission_spec(&self) -> MissionSpec {
        let m = &self.mission;
        MissionSpec {
            origin: m.origin,
            destinations: m.destinations.clone(),
            eps: m.eps,
            max_steps: m.max_steps,
            dt_h: m.dt_h,
            window: m.window,
            schedule: self.schedule,
            min_sine: m.min_sine,
        }
    }

    pub fn model_dims(&self) -> ModelDims {
        ModelDims::new(self.model.hidden, self.mission.window)
    }

    fn base(&self) -> Result<BaseField> {
        match &self.world.grid {
            Some(p) => Ok(BaseField::Grid(load_grid(&self.resolve(p))?)),
            None => Ok(BaseField::Dipole(self.world.dipole)),
        }
    }

    /// The mission world, anomalies included.
    pub fn build_world(&self) -> Result<World> {
        World {
            base: self.base()?,
            patches: Vec::new(),
        }
        .with_patches(self.world.anomalies.clone())
    }

    /// The world without anomaly patches, used for training data.
    pub fn clean_world(&self) -> Result<World> {
        Ok(World {
            base: self.base()?,
            patches: Vec::new(),
        })
    }

    pub fn seed_for(&self, stream: SeedStream) -> u64 {
        derive_seed(self.seed, stream)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default_scenario() {
        let c = ScenarioConfig::from_json("{}", Path::new(".")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.mission.origin, [22.6, 132.9]);
        assert_eq!(c.policy.kind, PolicyKind::Analytic);
        assert!(c.world.anomalies.is_empty());
    }

    #[test]
    fn unknown_fields_and_bad_values_rejected() {
        assert!(matches!(
            ScenarioConfig::from_json(r#"{"mision": {}}"#, Path::new(".")),
            Err(Error::Config(_))
        ));
        let c = ScenarioConfig::from_json(r#"{"mission": {"eps": -1}}"#, Path::new(".")).unwrap();
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ScenarioConfig::from_json(r#"{"training": {"epochs": 0}}"#, Path::new(".")).unwrap();
        let msg = c.validate().unwrap_err().to_string();
        assert!(msg.contains("no training performed"), "{msg}");
    }

    #[test]
    fn seed_streams_differ() {
        let s: Vec<u64> = [SeedStream::Data, SeedStream::ModelInit, SeedStream::Training, SeedStream::Suite]
            .iter()
            .map(|s| derive_seed(7, *s))
            .collect();
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                assert_ne!(s[i], s[j]);
            }
        }
        assert_eq!(derive_seed(7, SeedStream::Data), derive_seed(7, SeedStream::Data));
    }

    #[test]
    fn relative_grid_path_resolves_against_file() {
        let c = ScenarioConfig::from_json(r#"{"world": {"grid": "g.txt"}}"#, Path::new("/data/sc")).unwrap();
        assert_eq!(c.resolve(c.world.grid.as_ref().unwrap()), PathBuf::from("/data/sc/g.txt"));
    }
}
