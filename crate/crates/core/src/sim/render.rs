//! Layered dual-pixel rendering.
//!
//! The signed circle-of-confusion map is quantised into depth layers. Each
//! layer's pixels are splatted through the left and right half-disc kernels
//! of the layer radius, together with a coverage (alpha) channel, and layers
//! are composited far to near. The result is divided by the accumulated
//! alpha, which keeps uniform regions uniform up to the image border.

use serde::{Deserialize, Serialize};

use super::psf::{half_disc_psf, Kernel, Side};
use super::{combine_views, DPFrame, FrameMeta, SceneSpec};
use crate::error::Result;
use crate::imaging::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOptions {
    pub layers: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self { layers: 16 }
    }
}

/// Rendered views in linear light.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearViews {
    pub left: ImageTensor,
    pub right: ImageTensor,
    /// Signed CoC radius per pixel.
    pub coc: Vec<f64>,
}

struct Layer {
    radius: f64,
    pixels: Vec<usize>,
}

fn quantise_layers(coc: &[f64], count: usize) -> Vec<Layer> {
    let lo = coc.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = coc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let count = count.max(1);
    let span = hi - lo;
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); count];
    for (i, &r) in coc.iter().enumerate() {
        let b = if span <= 1e-12 {
            0
        } else {
            (((r - lo) / span * count as f64) as usize).min(count - 1)
        };
        bins[b].push(i);
    }
    // far (largest signed radius) first
    bins.into_iter()
        .filter(|b| !b.is_empty())
        .map(|pixels| {
            let radius = pixels.iter().map(|&i| coc[i]).sum::<f64>() / pixels.len() as f64;
            Layer { radius, pixels }
        })
        .rev()
        .collect()
}

/// Splats the layer's colour and coverage through `kernel`.
fn splat(
    image: &ImageTensor,
    pixels: &[usize],
    kernel: &Kernel,
    color: &mut [f64],
    alpha: &mut [f64],
) {
    let (h, w, c) = image.dims();
    color.fill(0.0);
    alpha.fill(0.0);
    let support = kernel.support();
    let src = image.data();
    for &p in pixels {
        let (y, x) = ((p / w) as isize, (p % w) as isize);
        for &(dy, dx, k) in &support {
            let (ty, tx) = (y + dy, x + dx);
            if ty < 0 || tx < 0 || ty >= h as isize || tx >= w as isize {
                continue;
            }
            let t = ty as usize * w + tx as usize;
            alpha[t] += k;
            for ch in 0..c {
                color[t * c + ch] += k * src[p * c + ch] as f64;
            }
        }
    }
}

/// Renders both sub-aperture views in linear light.
pub fn render_linear(scene: &SceneSpec, opts: &RenderOptions) -> Result<LinearViews> {
    scene.validate()?;
    let (h, w, c) = scene.image.dims();
    let coc: Vec<f64> = scene
        .depth
        .data()
        .iter()
        .map(|&d| scene.camera.coc_radius(d as f64))
        .collect::<Result<_>>()?;
    let layers = quantise_layers(&coc, opts.layers);

    let mut views = Vec::with_capacity(2);
    for side in [Side::Left, Side::Right] {
        let mut acc = vec![0.0f64; h * w * c];
        let mut acc_alpha = vec![0.0f64; h * w];
        let mut color = vec![0.0f64; h * w * c];
        let mut alpha = vec![0.0f64; h * w];
        for layer in &layers {
            let kernel = half_disc_psf(layer.radius, side);
            splat(&scene.image, &layer.pixels, &kernel, &mut color, &mut alpha);
            for p in 0..h * w {
                let keep = 1.0 - alpha[p].min(1.0);
                acc_alpha[p] = acc_alpha[p] * keep + alpha[p];
                for ch in 0..c {
                    acc[p * c + ch] = acc[p * c + ch] * keep + color[p * c + ch];
                }
            }
        }
        let data = acc
            .iter()
            .enumerate()
            .map(|(i, &v)| (v / acc_alpha[i / c].max(1e-12)) as f32)
            .collect();
        views.push(ImageTensor::new(h, w, c, data)?);
    }
    let right = views.pop().expect("two views");
    let left = views.pop().expect("two views");
    Ok(LinearViews { left, right, coc })
}

/// Renders a scene into an sRGB-encoded dual-pixel frame. The combined view
/// is the mean of the encoded left and right views; the sharp view is the
/// encoded input image.
pub fn render_dp(scene: &SceneSpec, opts: &RenderOptions, scene_id: &str, category: super::Category) -> Result<DPFrame> {
    let lin = render_linear(scene, opts)?;
    let left = lin.left.linear_to_srgb();
    let right = lin.right.linear_to_srgb();
    let combined = combine_views(&left, &right)?;
    Ok(DPFrame {
        left,
        right,
        combined,
        sharp: scene.image.linear_to_srgb(),
        meta: FrameMeta {
            scene_id: scene_id.to_string(),
            category,
            camera: scene.camera,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{CameraConfig, Category, DepthMap};

    fn textured(h: usize, w: usize) -> ImageTensor {
        ImageTensor::from_fn(h, w, 3, |y, x, c| {
            let v = 0.5 + 0.3 * ((x as f32 * 0.9 + c as f32).sin() * (y as f32 * 0.7).cos());
            v.clamp(0.0, 1.0)
        })
    }

    #[test]
    fn in_focus_plane_reproduces_sharp_image() {
        let cam = CameraConfig::default();
        let scene = SceneSpec::new(
            textured(20, 30).srgb_to_linear(),
            DepthMap::constant(20, 30, cam.focus_distance_mm as f32),
            cam,
        )
        .unwrap();
        let f = render_dp(&scene, &RenderOptions::default(), "s", Category::Indoor).unwrap();
        for v in [&f.left, &f.right, &f.combined] {
            for (a, b) in v.data().iter().zip(f.sharp.data()) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constant_image_stays_constant() {
        let cam = CameraConfig::default();
        let depth = DepthMap::from_fn(24, 24, |y, x| 600.0 + 120.0 * ((y + x) % 20) as f32);
        let scene = SceneSpec::new(ImageTensor::filled(24, 24, 3, 0.3), depth, cam).unwrap();
        let lin = render_linear(&scene, &RenderOptions::default()).unwrap();
        for v in [&lin.left, &lin.right] {
            for &p in v.data() {
                assert!((p - 0.3).abs() < 1e-5, "{p}");
            }
        }
    }

    #[test]
    fn combined_is_mean_of_views() {
        let cam = CameraConfig::default();
        let depth = DepthMap::from_fn(16, 16, |_, x| if x < 8 { 700.0 } else { 2500.0 });
        let scene = SceneSpec::new(textured(16, 16), depth, cam).unwrap();
        let f = render_dp(&scene, &RenderOptions::default(), "s", Category::Outdoor).unwrap();
        for ((l, r), b) in f.left.data().iter().zip(f.right.data()).zip(f.combined.data()) {
            assert!(((l + r) / 2.0 - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn layer_quantisation_respects_count() {
        let coc: Vec<f64> = (0..100).map(|i| i as f64 / 10.0 - 5.0).collect();
        let layers = quantise_layers(&coc, 16);
        assert_eq!(layers.len(), 16);
        assert!(layers.windows(2).all(|w| w[0].radius > w[1].radius));
        assert_eq!(layers.iter().map(|l| l.pixels.len()).sum::<usize>(), 100);
        assert_eq!(quantise_layers(&[2.0; 10], 16).len(), 1);
    }
}
