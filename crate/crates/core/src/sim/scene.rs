//! Simulator inputs: an all-in-focus linear RGB image with a per-pixel depth
//! map, plus a procedural scene generator for synthetic datasets.

use std::f32::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CameraConfig, Category};
use crate::error::{Error, Result};
use crate::imaging::{load_image_with_depth, ImageTensor};

/// Per-pixel scene distance in millimetres.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Data(format!(
                "depth buffer of {} values does not match {height}x{width}",
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn constant(height: usize, width: usize, depth_mm: f32) -> Self {
        Self {
            height,
            width,
            data: vec![depth_mm; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// All-in-focus image in linear RGB.
    pub image: ImageTensor,
    pub depth: DepthMap,
    pub camera: CameraConfig,
}

impl SceneSpec {
    pub fn new(image: ImageTensor, depth: DepthMap, camera: CameraConfig) -> Result<Self> {
        let s = Self {
            image,
            depth,
            camera,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if self.image.height() != self.depth.height() || self.image.width() != self.depth.width() {
            return Err(Error::Data(format!(
                "image {}x{} and depth {}x{} differ in size",
                self.image.height(),
                self.image.width(),
                self.depth.height(),
                self.depth.width()
            )));
        }
        if self.image.channels() != 3 {
            return Err(Error::Data("scene image must be RGB".into()));
        }
        if let Some(bad) = self.depth.data().iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::Data(format!("depth must be positive, found {bad}")));
        }
        Ok(())
    }
}

/// Sidecar describing a scene on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSidecar {
    /// Millimetres per unit of the 16-bit depth PNG.
    pub depth_scale_mm: f64,
    /// Transfer curve of the sharp image file: `srgb` or `linear`.
    #[serde(default = "default_encoding")]
    pub encoding: String,
    #[serde(default)]
    pub category: Option<Category>,
    pub camera: CameraConfig,
}

fn default_encoding() -> String {
    "srgb".into()
}

/// Reads a scene from a sharp 16-bit PNG, a 16-bit depth PNG and a TOML
/// sidecar.
pub fn load_scene(image_path: &Path, depth_path: &Path, sidecar_path: &Path) -> Result<(SceneSpec, Option<Category>)> {
    let text = std::fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: SceneSidecar = toml::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", sidecar_path.display())))?;
    let (image, _) = load_image_with_depth(image_path)?;
    let image = image.to_rgb()?;
    let image = match sidecar.encoding.as_str() {
        "srgb" => image.srgb_to_linear(),
        "linear" => image,
        other => return Err(Error::Config(format!("unknown encoding `{other}`"))),
    };
    let (depth_img, bits) = load_image_with_depth(depth_path)?;
    if bits != 16 || depth_img.channels() != 1 {
        return Err(Error::Image {
            path: depth_path.to_path_buf(),
            message: "depth map must be a 16-bit single-channel PNG".into(),
        });
    }
    let depth = DepthMap::from_fn(depth_img.height(), depth_img.width(), |y, x| {
        ((depth_img.get(y, x, 0) * 65535.0).round() as f64 * sidecar.depth_scale_mm) as f32
    });
    Ok((SceneSpec::new(image, depth, sidecar.camera)?, sidecar.category))
}

/// Encodes a depth map as 16-bit units of `scale_mm`.
pub fn depth_to_image(depth: &DepthMap, scale_mm: f64) -> Result<ImageTensor> {
    let mut data = Vec::with_capacity(depth.data().len());
    for &d in depth.data() {
        let units = (d as f64 / scale_mm).round();
        if !(1.0..=65535.0).contains(&units) {
            return Err(Error::Data(format!(
                "depth {d} mm not representable at {scale_mm} mm per unit"
            )));
        }
        data.push((units / 65535.0) as f32);
    }
    ImageTensor::new(depth.height(), depth.width(), 1, data)
}

/// Settings of the procedural scene generator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProceduralConfig {
    pub height: usize,
    pub width: usize,
    pub near_mm: f64,
    pub far_mm: f64,
    pub max_objects: usize,
}

impl Default for ProceduralConfig {
    fn default() -> Self {
        Self {
            height: 64,
            width: 96,
            near_mm: 600.0,
            far_mm: 3500.0,
            max_objects: 4,
        }
    }
}

struct Texture {
    base: [f32; 3],
    accent: [f32; 3],
    gratings: Vec<(f32, f32, f32, f32)>,
    cell: usize,
    checker: f32,
}

impl Texture {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let mut color = || [rng.random_range(0.08..0.92f32), rng.random_range(0.08..0.92), rng.random_range(0.08..0.92)];
        let base = color();
        let accent = color();
        let n = rng.random_range(3..7);
        let gratings = (0..n)
            .map(|_| {
                let angle = rng.random_range(0.0..PI);
                // log-uniform periods with amplitude rising with period, so
                // contrast falls off towards fine detail
                let period = rng.random_range(3.0f32.ln()..48.0f32.ln()).exp();
                let phase = rng.random_range(0.0..2.0 * PI);
                let amp = rng.random_range(0.3..0.6f32) * (period / 48.0).powf(0.6);
                (angle, period, phase, amp)
            })
            .collect();
        Self {
            base,
            accent,
            gratings,
            cell: rng.random_range(4..17),
            checker: rng.random_range(0.0..0.3),
        }
    }

    /// sRGB value at pixel `(y, x)`.
    fn sample(&self, y: usize, x: usize) -> [f32; 3] {
        let (fy, fx) = (y as f32, x as f32);
        let mut t = 0.0;
        for &(angle, period, phase, amp) in &self.gratings {
            let u = fx * angle.cos() + fy * angle.sin();
            t += amp * (2.0 * PI * u / period + phase).sin();
        }
        if ((y / self.cell) + (x / self.cell)) % 2 == 0 {
            t += self.checker;
        } else {
            t -= self.checker;
        }
        let mix = 0.5 + 0.5 * t.tanh();
        let mut out = [0.0; 3];
        for c in 0..3 {
            out[c] = (self.base[c] * (1.0 - mix) + self.accent[c] * mix).clamp(0.02, 0.98);
        }
        out
    }
}

enum Shape {
    Rect { y0: f32, x0: f32, y1: f32, x1: f32 },
    Disc { cy: f32, cx: f32, r: f32 },
}

impl Shape {
    fn contains(&self, y: f32, x: f32) -> bool {
        match *self {
            Shape::Rect { y0, x0, y1, x1 } => y >= y0 && y < y1 && x >= x0 && x < x1,
            Shape::Disc { cy, cx, r } => (y - cy).powi(2) + (x - cx).powi(2) < r * r,
        }
    }
}

/// Builds a textured scene. Outdoor scenes get a receding ground plane under
/// a distant backdrop; indoor scenes a fronto-parallel back wall. Both carry a
/// few textured objects, drawn far to near so occlusion agrees with depth.
/// The first object is the subject and sits near the focus distance; the
/// others are placed at random depths.
pub fn procedural_scene(
    seed: u64,
    category: Category,
    cfg: &ProceduralConfig,
    camera: CameraConfig,
) -> Result<SceneSpec> {
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (near, far) = (cfg.near_mm as f32, cfg.far_mm as f32);

    let back_tex = Texture::random(&mut rng);
    let mut image = ImageTensor::from_fn(h, w, 3, |y, x, c| back_tex.sample(y, x)[c]);
    let mut depth = match category {
        Category::Indoor => {
            let d = rng.random_range(near + 0.4 * (far - near)..far);
            DepthMap::constant(h, w, d)
        }
        Category::Outdoor => {
            let horizon = rng.random_range(0.25..0.5f32) * h as f32;
            let ground_tex = Texture::random(&mut rng);
            let sky = far;
            let mut d = DepthMap::constant(h, w, sky);
            for y in 0..h {
                let fy = y as f32;
                if fy >= horizon {
                    let t = (fy - horizon) / (h as f32 - horizon).max(1.0);
                    let dist = far + (near - far) * t;
                    for x in 0..w {
                        d.data[y * w + x] = dist;
                        let px = ground_tex.sample(y, x);
                        for c in 0..3 {
                            image.set(y, x, c, px[c]);
                        }
                    }
                }
            }
            d
        }
    };

    let n_obj = rng.random_range(1..=cfg.max_objects.max(1));
    let focus = camera.focus_distance_mm as f32;
    let mut objects: Vec<(f32, Shape, Texture)> = (0..n_obj)
        .map(|i| {
            let mut d = rng.random_range(near..far * 0.9);
            if i == 0 {
                // the subject: within 7% of the focus distance
                d = focus * (0.93 + 0.14 * (d - near) / (far * 0.9 - near));
            }
            let shape = if rng.random_bool(0.5) {
                let oh = rng.random_range(0.2..0.6) * h as f32;
                let ow = rng.random_range(0.15..0.5) * w as f32;
                let y0 = rng.random_range(-0.1..0.9) * h as f32;
                let x0 = rng.random_range(-0.1..0.9) * w as f32;
                Shape::Rect {
                    y0,
                    x0,
                    y1: y0 + oh,
                    x1: x0 + ow,
                }
            } else {
                Shape::Disc {
                    cy: rng.random_range(0.0..1.0) * h as f32,
                    cx: rng.random_range(0.0..1.0) * w as f32,
                    r: rng.random_range(0.12..0.35) * h as f32,
                }
            };
            (d, shape, Texture::random(&mut rng))
        })
        .collect();
    objects.sort_by(|a, b| b.0.total_cmp(&a.0));
    for (d, shape, tex) in &objects {
        for y in 0..h {
            for x in 0..w {
                if shape.contains(y as f32 + 0.5, x as f32 + 0.5) {
                    depth.data[y * w + x] = *d;
                    let px = tex.sample(y, x);
                    for c in 0..3 {
                        image.set(y, x, c, px[c]);
                    }
                }
            }
        }
    }
    let camera = CameraConfig {
        resolution: (w, h),
        ..camera
    };
    SceneSpec::new(image.srgb_to_linear(), depth, camera)
}
