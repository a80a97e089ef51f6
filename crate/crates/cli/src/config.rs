//! Experiment configuration.
//!
//! Values are resolved in this order, later sources winning: built-in
//! defaults, the TOML file given with `--config`, the `DPDNET_DATA_ROOT`
//! environment variable (only when the file sets no `data_root`), and
//! finally command-line flags. A top-level `seed` replaces the seeds of the
//! synth, prep and train sections.

use std::path::{Path, PathBuf};

use dpdnet::data::{PrepConfig, Split};
use dpdnet::eval::Selection;
use dpdnet::model::InputVariant;
use dpdnet::sim::{CameraConfig, ProceduralConfig, RenderOptions};
use dpdnet::train::TrainConfig;
use dpdnet::{Error, Result};
use serde::{Deserialize, Serialize};

pub const DATA_ROOT_ENV: &str = "DPDNET_DATA_ROOT";
pub const DEFAULT_DATA_ROOT: &str = "data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    /// Worker threads for data preparation; 0 leaves the choice to rayon.
    pub threads: usize,
    /// Parent of the per-aperture dataset directories.
    pub data_root: Option<PathBuf>,
    pub out: PathBuf,
    /// Directory of `<id>.png`, `<id>_depth.png` and `<id>.toml` scene
    /// sources. Without it, scenes are generated procedurally.
    pub scene_source: Option<PathBuf>,
    /// f-numbers to render; the first is the training aperture.
    pub apertures: Vec<f64>,
    pub camera: CameraConfig,
    pub synth: SynthConfig,
    pub prep: PrepConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub bench: BenchConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: None,
            threads: 0,
            data_root: None,
            out: PathBuf::from("runs/default"),
            scene_source: None,
            apertures: vec![4.0],
            camera: CameraConfig::default(),
            synth: SynthConfig::default(),
            prep: PrepConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Number of procedural scenes.
    pub count: usize,
    pub seed: u64,
    pub bit_depth: u8,
    /// Assign every scene to this split instead of leaving it to prep.
    pub split: Option<Split>,
    pub scene: ProceduralConfig,
    pub render: RenderOptions,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            count: 50,
            seed: 0,
            bit_depth: 16,
            split: None,
            scene: ProceduralConfig::default(),
            render: RenderOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub split: Split,
    pub selections: Vec<Selection>,
    /// Defaults to `<out>/train/best.ckpt`.
    pub checkpoint: Option<PathBuf>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            split: Split::Test,
            selections: Selection::ALL.to_vec(),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub height: usize,
    pub width: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            height: 1120,
            width: 1680,
            repetitions: 5,
        }
    }
}

/// Command-line values that replace configuration keys.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub variant: Option<InputVariant>,
    pub patch_size: Option<usize>,
    pub discard_fraction: Option<f64>,
    pub bit_depth: Option<u8>,
    pub apertures: Vec<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies environment and flag overrides, then validates.
    pub fn resolve(mut self, env_data_root: Option<PathBuf>, flags: &Overrides) -> Result<Self> {
        if self.data_root.is_none() {
            self.data_root = Some(env_data_root.unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT)));
        }
        if let Some(s) = flags.seed {
            self.seed = Some(s);
        }
        if let Some(s) = self.seed {
            self.synth.seed = s;
            self.prep.seed = s;
            self.train.seed = s;
        }
        if let Some(v) = flags.variant {
            self.train.model.input_variant = v;
        }
        if let Some(p) = flags.patch_size {
            self.prep.patch_size = p;
            self.train.model.patch_size = p;
        }
        if let Some(f) = flags.discard_fraction {
            self.prep.discard_fraction = f;
        }
        if let Some(b) = flags.bit_depth {
            self.prep.bit_depth = b;
            self.synth.bit_depth = b;
        }
        if !flags.apertures.is_empty() {
            self.apertures = flags.apertures.clone();
        }
        if let Some(out) = &flags.out {
            self.out = out.clone();
        }
        if let Some(t) = flags.threads {
            self.threads = t;
        }
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.prep.validate()?;
        self.train.validate()?;
        if self.prep.patch_size != self.train.model.patch_size {
            return Err(Error::Config(format!(
                "prep.patch_size {} differs from train.model.patch_size {}",
                self.prep.patch_size, self.train.model.patch_size
            )));
        }
        if self.apertures.is_empty() || self.apertures.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("apertures must be positive f-numbers, got {:?}", self.apertures)));
        }
        if !matches!(self.synth.bit_depth, 8 | 16) {
            return Err(Error::Config(format!("synth.bit_depth must be 8 or 16, got {}", self.synth.bit_depth)));
        }
        if self.eval.selections.is_empty() {
            return Err(Error::Config("eval.selections is empty".into()));
        }
        if self.bench.repetitions == 0 {
            return Err(Error::Config("bench.repetitions must be at least 1".into()));
        }
        Ok(())
    }

    pub fn data_root(&self) -> PathBuf {
        self.data_root.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_DATA_ROOT))
    }

    /// Dataset directory rendered at `f_number`, e.g. `<data_root>/f4`.
    pub fn dataset_dir(&self, f_number: f64) -> PathBuf {
        self.data_root().join(aperture_name(f_number))
    }

    pub fn training_aperture(&self) -> f64 {
        self.apertures[0]
    }

    pub fn default_checkpoint(&self) -> PathBuf {
        self.out.join("train").join("best.ckpt")
    }
}

pub fn aperture_name(f_number: f64) -> String {
    format!("f{f_number}")
}
