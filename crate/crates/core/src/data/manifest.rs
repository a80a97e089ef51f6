use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{CameraConfig, Category, DPFrame, FrameMeta};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "val" | "validation" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Data(format!("unknown split `{other}`"))),
        }
    }
}

/// One scene of a dataset: paths to its four views, relative to the
/// manifest directory.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRecord {
    pub id: String,
    pub category: Category,
    /// `_L`, `_R`, `_B`, `_S` in that order.
    pub views: [PathBuf; 4],
    pub aperture: String,
    pub split: Option<Split>,
}

/// A dataset listing. Relative view paths resolve against `root`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetManifest {
    pub root: PathBuf,
    pub scenes: Vec<SceneRecord>,
}

impl DatasetManifest {
    /// Parses manifest text: one scene per line,
    /// `id, category, L, R, B, S, aperture[, split]`. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn parse(text: &str, root: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .comment(Some(b'#'))
            .from_reader(text.as_bytes());
        let mut scenes = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec?;
            if rec.iter().all(str::is_empty) {
                continue;
            }
            if !(7..=8).contains(&rec.len()) {
                return Err(Error::Data(format!(
                    "manifest record {}: expected 7 or 8 fields, found {}",
                    line + 1,
                    rec.len()
                )));
            }
            let split = match rec.get(7).filter(|s| !s.is_empty()) {
                Some(s) => Some(s.parse()?),
                None => None,
            };
            scenes.push(SceneRecord {
                id: rec[0].to_string(),
                category: rec[1].parse()?,
                views: [2, 3, 4, 5].map(|i| PathBuf::from(&rec[i])),
                aperture: rec[6].to_string(),
                split,
            });
        }
        let m = Self {
            root: root.to_path_buf(),
            scenes,
        };
        m.check_ids()?;
        Ok(m)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let root = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, root)
    }

    pub fn to_text(&self) -> Result<String> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        for s in &self.scenes {
            let mut row: Vec<String> = vec![s.id.clone(), s.category.to_string()];
            row.extend(s.views.iter().map(|p| p.to_string_lossy().into_owned()));
            row.push(s.aperture.clone());
            if let Some(split) = s.split {
                row.push(split.to_string());
            }
            w.write_record(&row)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_text()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    fn check_ids(&self) -> Result<()> {
        let mut ids: Vec<&str> = self.scenes.iter().map(|s| s.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Data(format!("duplicate scene id `{}`", w[0])));
        }
        Ok(())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Checks that every scene's four views exist and share dimensions.
    pub fn validate(&self) -> Result<()> {
        self.check_ids()?;
        for s in &self.scenes {
            let mut dims = None;
            for v in &s.views {
                let p = self.resolve(v);
                let d = image::image_dimensions(&p).map_err(|e| Error::Image {
                    path: p.clone(),
                    message: e.to_string(),
                })?;
                if *dims.get_or_insert(d) != d {
                    return Err(Error::Data(format!(
                        "scene {}: view {} is {}x{}, expected {}x{}",
                        s.id,
                        p.display(),
                        d.0,
                        d.1,
                        dims.unwrap().0,
                        dims.unwrap().1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &SceneRecord> {
        self.scenes.iter().filter(move |s| s.split == Some(split))
    }

    /// Loads one scene's views. `bit_depth` is the declared source depth.
    /// Camera metadata comes from an `<id>.toml` sidecar next to the left
    /// view when present.
    pub fn load_frame(&self, scene: &SceneRecord, bit_depth: Option<u8>) -> Result<DPFrame> {
        let paths = scene.views.clone().map(|p| self.resolve(&p));
        let sidecar = paths[0]
            .parent()
            .unwrap_or(Path::new("."))
            .join(format!("{}.toml", scene.id));
        let camera = if sidecar.exists() {
            let text = std::fs::read_to_string(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
            let meta: FrameMeta = toml::from_str(&text)
                .map_err(|e| Error::Data(format!("{}: {e}", sidecar.display())))?;
            meta.camera
        } else {
            CameraConfig::default()
        };
        DPFrame::load_views(
            &paths,
            FrameMeta {
                scene_id: scene.id.clone(),
                category: scene.category,
                camera,
            },
            bit_depth,
        )
    }
}

/// Per-category split sizes: `(train, val, test)` with train and val
/// rounded down and the remainder going to test.
pub fn split_counts(n: usize) -> (usize, usize, usize) {
    let train = n * 70 / 100;
    let val = n * 15 / 100;
    (train, val, n - train - val)
}

/// Assigns every scene to train/val/test, 70/15/15 within each category.
/// Scenes are ordered by id before the seeded shuffle, so the result does
/// not depend on manifest order.
pub fn split(manifest: &DatasetManifest, seed: u64) -> Result<DatasetManifest> {
    let mut out = manifest.clone();
    for (ci, cat) in Category::ALL.into_iter().enumerate() {
        let mut idx: Vec<usize> = (0..out.scenes.len())
            .filter(|&i| out.scenes[i].category == cat)
            .collect();
        if idx.is_empty() {
            continue;
        }
        if idx.len() < 3 {
            return Err(Error::Data(format!(
                "category {cat} has {} scenes; at least 3 are needed to split",
                idx.len()
            )));
        }
        idx.sort_by(|&a, &b| out.scenes[a].id.cmp(&out.scenes[b].id));
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(ci as u64 * 0x9E37_79B9));
        idx.shuffle(&mut rng);
        let (train, val, _) = split_counts(idx.len());
        for (k, &i) in idx.iter().enumerate() {
            out.scenes[i].split = Some(if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            });
        }
    }
    Ok(out)
}
