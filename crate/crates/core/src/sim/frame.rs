use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::CameraConfig;
use crate::error::{Error, Result};
use crate::imaging::{load_image, save_image, ImageTensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Indoor,
    Outdoor,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Indoor, Category::Outdoor];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Indoor => "indoor",
            Category::Outdoor => "outdoor",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indoor" => Ok(Category::Indoor),
            "outdoor" => Ok(Category::Outdoor),
            other => Err(Error::Data(format!("unknown scene category `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMeta {
    pub scene_id: String,
    pub category: Category,
    pub camera: CameraConfig,
}

/// One scene's left/right dual-pixel views, their combination and the
/// all-in-focus reference, all sRGB-encoded.
#[derive(Debug, Clone, PartialEq)]
pub struct DPFrame {
    pub left: ImageTensor,
    pub right: ImageTensor,
    pub combined: ImageTensor,
    pub sharp: ImageTensor,
    pub meta: FrameMeta,
}

/// File suffixes of the four views.
pub const VIEW_SUFFIXES: [&str; 4] = ["_L", "_R", "_B", "_S"];

impl DPFrame {
    pub fn views(&self) -> [&ImageTensor; 4] {
        [&self.left, &self.right, &self.combined, &self.sharp]
    }

    pub fn validate(&self) -> Result<()> {
        let dims = self.sharp.dims();
        if self.views().iter().any(|v| v.dims() != dims) {
            return Err(Error::Data(format!(
                "scene {}: views differ in size",
                self.meta.scene_id
            )));
        }
        Ok(())
    }

    pub fn view_paths(dir: &Path, id: &str) -> [PathBuf; 4] {
        VIEW_SUFFIXES.map(|s| dir.join(format!("{id}{s}.png")))
    }

    /// Writes `<id>_{L,R,B,S}.png` plus a `<id>.toml` metadata sidecar.
    pub fn save(&self, dir: &Path, bit_depth: u8) -> Result<[PathBuf; 4]> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let paths = Self::view_paths(dir, &self.meta.scene_id);
        for (view, path) in self.views().iter().zip(&paths) {
            save_image(path, view, bit_depth)?;
        }
        let meta = dir.join(format!("{}.toml", self.meta.scene_id));
        let text = toml::to_string(&self.meta).map_err(|e| Error::Data(e.to_string()))?;
        std::fs::write(&meta, text).map_err(|e| Error::io(&meta, e))?;
        Ok(paths)
    }

    pub fn load_views(paths: &[PathBuf; 4], meta: FrameMeta, bit_depth: Option<u8>) -> Result<Self> {
        let [l, r, b, s] = paths;
        let frame = Self {
            left: load_image(l, bit_depth)?.to_rgb()?,
            right: load_image(r, bit_depth)?.to_rgb()?,
            combined: load_image(b, bit_depth)?.to_rgb()?,
            sharp: load_image(s, bit_depth)?.to_rgb()?,
            meta,
        };
        frame.validate()?;
        Ok(frame)
    }
}

/// The combined image of the two views: their elementwise mean.
pub fn combine_views(left: &ImageTensor, right: &ImageTensor) -> Result<ImageTensor> {
    if left.dims() != right.dims() {
        return Err(Error::Data(format!(
            "cannot combine views of shape {:?} and {:?}",
            left.dims(),
            right.dims()
        )));
    }
    let (h, w, c) = left.dims();
    let data = left
        .data()
        .iter()
        .zip(right.data())
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    ImageTensor::new(h, w, c, data)
}
