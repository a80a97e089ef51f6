//! Simulator physics checks shared by the integration tests and the
//! acceptance runner. Each returns a verdict with a one-line detail.

#![allow(dead_code)]

use dpdnet::imaging::ImageTensor;
use dpdnet::sim::{
    combine_views, estimate_disparity, half_disc_centroid, half_disc_psf, render_dp, render_linear, CameraConfig,
    Category, DepthMap, RenderOptions, SceneSpec, Side,
};

pub struct Verdict {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn verdict(name: &'static str, passed: bool, detail: String) -> Verdict {
    Verdict { name, passed, detail }
}

const H: usize = 40;
const W: usize = 128;
const MAX_SHIFT: usize = 12;

/// Texture periodic in 16 px along both axes, rich enough for correlation.
pub fn texture(h: usize, w: usize) -> ImageTensor {
    let tau = std::f32::consts::TAU;
    ImageTensor::from_fn(h, w, 3, |y, x, c| {
        let (u, v) = (x as f32 / 16.0, y as f32 / 16.0);
        let s = 0.18 * (tau * u).sin() + 0.12 * (tau * (3.0 * u + v)).cos() + 0.1 * (tau * (2.0 * v - 5.0 * u)).sin();
        0.5 + s + 0.02 * c as f32
    })
}

/// Depth of a fronto-parallel plane whose CoC radius is `r` pixels.
pub fn depth_for_radius(cam: &CameraConfig, r: f64) -> f64 {
    let f = cam.focal_length_mm;
    let df = cam.focus_distance_mm;
    let k = f * f / (2.0 * cam.f_number) / (df - f) / cam.pixel_pitch_mm;
    df / (1.0 - r / k)
}

fn plane(cam: CameraConfig, depth_mm: f64) -> SceneSpec {
    SceneSpec::new(texture(H, W), DepthMap::constant(H, W, depth_mm as f32), cam).unwrap()
}

pub fn plane_disparity(cam: CameraConfig, depth_mm: f64) -> f64 {
    let frame = render_dp(&plane(cam, depth_mm), &RenderOptions::default(), "plane", Category::Indoor).unwrap();
    estimate_disparity(&frame.left, &frame.right, MAX_SHIFT).unwrap()
}

pub fn focal_plane() -> Verdict {
    let cam = CameraConfig::default();
    let d = plane_disparity(cam, cam.focus_distance_mm);
    verdict("zero disparity at the focal plane", d.abs() < 0.25, format!("|d| = {:.4} px (< 0.25)", d.abs()))
}

pub fn combined_average() -> Verdict {
    let cam = CameraConfig::default();
    let depth = DepthMap::from_fn(H, W, |_, x| if x < W / 2 { 700.0 } else { 2600.0 });
    let scene = SceneSpec::new(texture(H, W), depth, cam).unwrap();
    let frame = render_dp(&scene, &RenderOptions::default(), "split", Category::Outdoor).unwrap();
    let mean = combine_views(&frame.left, &frame.right).unwrap();
    let err = frame
        .combined
        .data()
        .iter()
        .zip(frame.left.data().iter().zip(frame.right.data()))
        .map(|(&b, (&l, &r))| (b as f64 - (l as f64 + r as f64) / 2.0).abs())
        .fold(0.0, f64::max);
    let same = mean == frame.combined;
    verdict(
        "combined view is the average of L and R",
        err <= 1e-6 && same,
        format!("max |B - (L+R)/2| = {err:.2e} (<= 1e-6)"),
    )
}

pub fn psf_mirror_and_sum() -> Verdict {
    let mut worst_sum = 0.0f64;
    let mut mirrored = true;
    for r in [1.5, 3.0, 7.25, -3.0, 0.2] {
        let l = half_disc_psf(r, Side::Left);
        let rt = half_disc_psf(r, Side::Right);
        mirrored &= l.mirror() == rt;
        let direct: f64 = l.taps().iter().sum();
        worst_sum = worst_sum.max((direct - 1.0).abs());
    }
    verdict(
        "PSF mirror symmetry exact and unit sum",
        mirrored && worst_sum <= 1e-9,
        format!("mirror exact: {mirrored}; max |sum - 1| = {worst_sum:.2e} (<= 1e-9)"),
    )
}

/// Ten planes behind the focus with CoC radius 0, 0.7, ..., 6.3 px.
pub fn disparity_sweep() -> (Vec<f64>, Vec<f64>) {
    let cam = CameraConfig::default();
    let radii: Vec<f64> = (0..10).map(|i| 0.7 * i as f64).collect();
    let disp = radii
        .iter()
        .map(|&r| plane_disparity(cam, depth_for_radius(&cam, r)).abs())
        .collect();
    (radii, disp)
}

pub fn disparity_monotone() -> Verdict {
    let (_, disp) = disparity_sweep();
    let ok = disp.windows(2).all(|w| w[1] >= w[0]) && disp[9] > disp[0];
    let shown: Vec<String> = disp.iter().map(|d| format!("{d:.2}")).collect();
    verdict(
        "disparity non-decreasing in |CoC| over a 10-step sweep",
        ok,
        format!("|d| = [{}] px", shown.join(", ")),
    )
}

pub fn disparity_sign_flip() -> Verdict {
    let cam = CameraConfig::default();
    let behind = plane_disparity(cam, depth_for_radius(&cam, 4.0));
    let front = plane_disparity(cam, depth_for_radius(&cam, -4.0));
    verdict(
        "disparity sign flips across the focal plane",
        behind * front < 0.0 && behind.abs() > 1.0 && front.abs() > 1.0,
        format!("behind {behind:.3} px, in front {front:.3} px"),
    )
}

pub fn mean_abs_disparity(f_number: f64) -> f64 {
    let cam = CameraConfig::default().with_f_number(f_number);
    [650.0, 800.0, 1500.0, 2500.0, 4000.0]
        .iter()
        .map(|&d| plane_disparity(cam, d).abs())
        .sum::<f64>()
        / 5.0
}

pub fn aperture_ordering() -> Verdict {
    let [a, b, c] = [4.0, 10.0, 16.0].map(mean_abs_disparity);
    verdict(
        "aperture blur ordering f/4 > f/10 > f/16",
        a > b && b > c,
        format!("mean |d|: f/4 {a:.3}, f/10 {b:.3}, f/16 {c:.3} px"),
    )
}

fn edge_scene(cam: CameraConfig, depth_mm: f64) -> SceneSpec {
    let img = ImageTensor::from_fn(H, W, 3, |_, x, _| if x < W / 2 { 0.1 } else { 0.9 });
    SceneSpec::new(img, DepthMap::constant(H, W, depth_mm as f32), cam).unwrap()
}

/// Centroid of the derivative of a middle row, i.e. of the line-spread
/// function across the edge.
fn edge_centroid(img: &ImageTensor) -> f64 {
    let y = img.height() / 2;
    let (mut m0, mut m1) = (0.0, 0.0);
    for x in 1..img.width() {
        let d = (img.get(y, x, 0) - img.get(y, x - 1, 0)) as f64;
        m0 += d;
        m1 += d * (x as f64 - 0.5);
    }
    m1 / m0
}

pub fn edge_centroid_shift() -> Verdict {
    let cam = CameraConfig::default();
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for r in [2.0, 4.0, 6.0] {
        let lin = render_linear(&edge_scene(cam, depth_for_radius(&cam, r)), &RenderOptions::default()).unwrap();
        let shift = (edge_centroid(&lin.left) - edge_centroid(&lin.right)).abs();
        let expected = 2.0 * half_disc_centroid(r);
        worst = worst.max((shift - expected).abs());
        parts.push(format!("r={r}: {shift:.3} vs {expected:.3}"));
    }
    verdict(
        "edge centroid shift matches half-disc centroid separation",
        worst <= 0.25,
        format!("{}; max error {worst:.3} px (<= 0.25)", parts.join(", ")),
    )
}

/// 10-90% rise distance across the edge of a middle row.
fn edge_width(img: &ImageTensor) -> f64 {
    let y = img.height() / 2;
    let row: Vec<f64> = (0..img.width()).map(|x| img.get(y, x, 0) as f64).collect();
    let (lo, hi) = (row[4], row[row.len() - 5]);
    let crossing = |level: f64| -> f64 {
        let t = lo + level * (hi - lo);
        for x in 1..row.len() {
            if row[x] >= t && row[x - 1] < t {
                return x as f64 - 1.0 + (t - row[x - 1]) / (row[x] - row[x - 1]);
            }
        }
        f64::NAN
    };
    crossing(0.9) - crossing(0.1)
}

pub fn combined_blur_wider() -> Verdict {
    let cam = CameraConfig::default();
    let frame = render_dp(
        &edge_scene(cam, depth_for_radius(&cam, 5.0)),
        &RenderOptions::default(),
        "edge",
        Category::Indoor,
    )
    .unwrap();
    let (wl, wb) = (edge_width(&frame.left), edge_width(&frame.combined));
    verdict(
        "combined view blur extent >= single view",
        wb >= wl,
        format!("10-90% width: L {wl:.2} px, B {wb:.2} px"),
    )
}

pub fn energy_conservation() -> Verdict {
    let cam = CameraConfig::default();
    let mut worst = 0.0f64;
    for r in [1.5, 4.0, -5.0] {
        let scene = plane(cam, depth_for_radius(&cam, r));
        let lin = render_linear(&scene, &RenderOptions::default()).unwrap();
        // interior window of whole texture periods
        let crop = |img: &ImageTensor| img.crop(8, 16, 32, 96).mean();
        let sharp = crop(&scene.image);
        worst = worst.max((crop(&lin.left) - sharp).abs()).max((crop(&lin.right) - sharp).abs());
    }
    verdict(
        "view means equal the sharp mean in the interior",
        worst <= 1e-3,
        format!("max |mean difference| = {worst:.2e} (<= 1e-3)"),
    )
}

pub fn all() -> Vec<Verdict> {
    vec![
        focal_plane(),
        combined_average(),
        psf_mirror_and_sum(),
        disparity_monotone(),
        disparity_sign_flip(),
        aperture_ordering(),
        edge_centroid_shift(),
        combined_blur_wider(),
        energy_conservation(),
    ]
}
