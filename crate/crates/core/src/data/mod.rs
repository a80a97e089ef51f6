//! Dataset manifests, scene-level splitting, patch extraction and
//! sharpness filtering.

mod cache;
mod manifest;
mod patches;
mod resample;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::DPFrame;

pub use cache::{read_patch_cache, write_patch_cache, CACHE_VERSION};
pub use manifest::{split, split_counts, DatasetManifest, SceneRecord, Split};
pub use patches::{extract_patches, filter_patches, patch_starts, patch_stride, sharpness_energy, PatchRecord};
pub use resample::downscale;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrepConfig {
    pub patch_size: usize,
    pub overlap: f64,
    pub discard_fraction: f64,
    /// Declared bit depth of the source PNGs; loading a file of another
    /// depth is an error.
    pub bit_depth: u8,
    pub seed: u64,
    /// Optional `[width, height]` every scene is area-downscaled to first;
    /// an empty array in TOML disables it.
    #[serde(with = "optional_size")]
    pub downscale: Option<[usize; 2]>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            patch_size: 512,
            overlap: 0.6,
            discard_fraction: 0.3,
            bit_depth: 16,
            seed: 0,
            downscale: Some([1680, 1120]),
        }
    }
}

mod optional_size {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[usize; 2]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(size) => size.serialize(s),
            None => <[usize; 0]>::serialize(&[], s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[usize; 2]>, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        match v[..] {
            [] => Ok(None),
            [w, h] => Ok(Some([w, h])),
            _ => Err(D::Error::invalid_length(v.len(), &"[] or [width, height]")),
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        patch_stride(self.patch_size, self.overlap)?;
        if self.patch_size == 0 {
            return Err(Error::Config("patch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.discard_fraction) {
            return Err(Error::Config(format!(
                "discard_fraction {} outside [0, 1)",
                self.discard_fraction
            )));
        }
        if !matches!(self.bit_depth, 8 | 16) {
            return Err(Error::Config(format!("bit_depth must be 8 or 16, got {}", self.bit_depth)));
        }
        Ok(())
    }
}

/// Patches for training and validation, plus the split manifest.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub manifest: DatasetManifest,
    pub train: Vec<PatchRecord>,
    pub val: Vec<PatchRecord>,
    /// Patch counts of train and val before filtering.
    pub extracted: [usize; 2],
}

/// Loads a scene, applying the configured downscale.
pub fn load_scene_frame(manifest: &DatasetManifest, scene: &SceneRecord, cfg: &PrepConfig) -> Result<DPFrame> {
    let mut frame = manifest.load_frame(scene, Some(cfg.bit_depth))?;
    if let Some([w, h]) = cfg.downscale {
        if (frame.sharp.width(), frame.sharp.height()) != (w, h) {
            frame.left = downscale(&frame.left, w, h)?;
            frame.right = downscale(&frame.right, w, h)?;
            frame.combined = downscale(&frame.combined, w, h)?;
            frame.sharp = downscale(&frame.sharp, w, h)?;
        }
    }
    Ok(frame)
}

fn split_patches(manifest: &DatasetManifest, which: Split, cfg: &PrepConfig) -> Result<(usize, Vec<PatchRecord>)> {
    let scenes: Vec<&SceneRecord> = manifest.in_split(which).collect();
    let per_scene: Vec<Vec<PatchRecord>> = scenes
        .par_iter()
        .map(|s| extract_patches(&load_scene_frame(manifest, s, cfg)?, cfg.patch_size, cfg.overlap))
        .collect::<Result<_>>()?;
    let all: Vec<PatchRecord> = per_scene.into_iter().flatten().collect();
    Ok((all.len(), filter_patches(all, cfg.discard_fraction)?))
}

/// Splits the manifest (unless every scene already carries a split),
/// extracts patches for the train and validation scenes and drops the
/// least sharp fraction of each.
pub fn prepare(manifest: &DatasetManifest, cfg: &PrepConfig) -> Result<PreparedData> {
    cfg.validate()?;
    let manifest = if manifest.scenes.iter().all(|s| s.split.is_some()) {
        manifest.clone()
    } else {
        split(manifest, cfg.seed)?
    };
    let (raw_train, train) = split_patches(&manifest, Split::Train, cfg)?;
    let (raw_val, val) = split_patches(&manifest, Split::Val, cfg)?;
    if train.is_empty() {
        return Err(Error::Data("no training patches".into()));
    }
    Ok(PreparedData {
        manifest,
        train,
        val,
        extracted: [raw_train, raw_val],
    })
}
