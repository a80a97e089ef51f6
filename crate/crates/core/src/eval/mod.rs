//! Image-quality metrics, per-category reports, the aperture-robustness
//! protocol and an inference timing harness.

mod metrics;
mod report;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{load_scene_frame, DatasetManifest, PrepConfig, Split};
use crate::error::{Error, Result};
use crate::imaging::ImageTensor;
use crate::model::{adapt_input, forward, ModelParams, ViewSet};
use crate::sim::{render_dp, Category, DPFrame, RenderOptions, SceneSpec};
use crate::tensor::Tensor4;

pub use metrics::{mae, mse, psnr, ssim, ssim_taps, Metrics, PSNR_CAP_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use report::{records_csv, MetricsRecord, ReportRow, ReportTable};

/// Which image is scored against the all-in-focus reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    /// Network output.
    Deblurred,
    /// The combined view, untouched.
    BlurredInput,
    LeftOnly,
    RightOnly,
}

impl Selection {
    pub const ALL: [Selection; 4] = [
        Selection::Deblurred,
        Selection::BlurredInput,
        Selection::LeftOnly,
        Selection::RightOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Selection::Deblurred => "deblurred",
            Selection::BlurredInput => "blurred-input",
            Selection::LeftOnly => "left-only",
            Selection::RightOnly => "right-only",
        }
    }
}

impl fmt::Display for Selection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Selection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Selection::ALL
            .into_iter()
            .find(|v| v.as_str() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown input selection `{s}`")))
    }
}

/// Reflected index into `0..n` (edge sample not repeated).
fn reflect(i: usize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let m = i % period;
    if m < n {
        m
    } else {
        period - m
    }
}

/// Extends `t` by `pad_h` rows at the bottom and `pad_w` columns on the
/// right, mirroring the existing content.
pub fn pad_reflect(t: &Tensor4<f32>, pad_h: usize, pad_w: usize) -> Tensor4<f32> {
    let [n, h, w, c] = t.shape();
    Tensor4::from_fn([n, h + pad_h, w + pad_w, c], |[b, y, x, ch]| {
        t.at([b, reflect(y, h), reflect(x, w), ch])
    })
}

/// Runs the network on a whole frame: the input is reflect-padded up to the
/// next multiple of `2^depth` and the output cropped back.
pub fn deblur(params: &ModelParams<f32>, views: ViewSet<'_>) -> Result<ImageTensor> {
    let cfg = &params.config;
    let input: Tensor4<f32> = adapt_input(views, cfg.input_variant)?;
    let [_, h, w, _] = input.shape();
    let m = cfg.multiple();
    let (ph, pw) = ((m - h % m) % m, (m - w % m) % m);
    let padded = if ph == 0 && pw == 0 { input } else { pad_reflect(&input, ph, pw) };
    let out = forward(params, &padded)?;
    let image = ImageTensor::from_tensor(&out, 0);
    Ok(if ph == 0 && pw == 0 { image } else { image.crop(0, 0, h, w) })
}

fn score_frame(frame: &DPFrame, params: Option<&ModelParams<f32>>, selection: Selection) -> Result<MetricsRecord> {
    let gt = &frame.sharp;
    let (metrics, baseline) = match selection {
        Selection::Deblurred => {
            let params = params.ok_or_else(|| Error::Config("deblurred evaluation needs a model".into()))?;
            let out = deblur(params, ViewSet::from(frame))?;
            (Metrics::compute(&out, gt)?, Some(Metrics::compute(&frame.combined, gt)?))
        }
        Selection::BlurredInput => (Metrics::compute(&frame.combined, gt)?, None),
        Selection::LeftOnly => (Metrics::compute(&frame.left.to_rgb()?, gt)?, None),
        Selection::RightOnly => (Metrics::compute(&frame.right.to_rgb()?, gt)?, None),
    };
    Ok(MetricsRecord {
        scene_id: frame.meta.scene_id.clone(),
        category: frame.meta.category,
        metrics,
        baseline,
    })
}

/// Scores full frames; records come back sorted by scene id.
pub fn evaluate_frames(
    frames: &[DPFrame],
    params: Option<&ModelParams<f32>>,
    selection: Selection,
) -> Result<Vec<MetricsRecord>> {
    if frames.is_empty() {
        return Err(Error::Data("nothing to evaluate".into()));
    }
    let mut records = frames
        .iter()
        .map(|f| score_frame(f, params, selection))
        .collect::<Result<Vec<_>>>()?;
    records.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    Ok(records)
}

/// Scores every scene of one split, loading frames one at a time.
pub fn evaluate(
    manifest: &DatasetManifest,
    split: Split,
    prep: &PrepConfig,
    params: Option<&ModelParams<f32>>,
    selection: Selection,
) -> Result<Vec<MetricsRecord>> {
    let scenes: Vec<_> = manifest.in_split(split).collect();
    if scenes.is_empty() {
        return Err(Error::Data(format!("split `{split}` has no scenes")));
    }
    let mut records = Vec::with_capacity(scenes.len());
    for scene in scenes {
        let frame = load_scene_frame(manifest, scene, prep)?;
        records.push(score_frame(&frame, params, selection)?);
    }
    records.sort_by(|a, b| a.scene_id.cmp(&b.scene_id));
    Ok(records)
}

/// A test scene for re-rendering at other apertures.
#[derive(Debug, Clone)]
pub struct SceneCase {
    pub id: String,
    pub category: Category,
    pub scene: SceneSpec,
}

#[derive(Debug, Clone)]
pub struct ApertureReport {
    pub f_number: f64,
    /// Deblurred metrics with the combined view as baseline.
    pub records: Vec<MetricsRecord>,
}

impl ApertureReport {
    pub fn mean_output_mae(&self) -> f64 {
        self.records.iter().map(|r| r.metrics.mae).sum::<f64>() / self.records.len() as f64
    }

    pub fn mean_input_mae(&self) -> f64 {
        self.records.iter().filter_map(|r| r.baseline).map(|b| b.mae).sum::<f64>() / self.records.len() as f64
    }

    /// Fraction of scenes whose output MAE beats the combined view's.
    pub fn improved_fraction(&self) -> f64 {
        let better = self
            .records
            .iter()
            .filter(|r| r.baseline.is_some_and(|b| r.metrics.mae < b.mae))
            .count();
        better as f64 / self.records.len() as f64
    }
}

/// Renders every scene at each f-number and scores the model against the
/// blurred input there.
pub fn aperture_robustness(
    params: &ModelParams<f32>,
    scenes: &[SceneCase],
    f_numbers: &[f64],
    render: &RenderOptions,
) -> Result<Vec<ApertureReport>> {
    if scenes.is_empty() {
        return Err(Error::Data("no scenes for the aperture sweep".into()));
    }
    f_numbers
        .iter()
        .map(|&f_number| {
            let frames = scenes
                .iter()
                .map(|s| {
                    let mut spec = s.scene.clone();
                    spec.camera = spec.camera.with_f_number(f_number);
                    render_dp(&spec, render, &s.id, s.category)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ApertureReport {
                f_number,
                records: evaluate_frames(&frames, Some(params), Selection::Deblurred)?,
            })
        })
        .collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub height: usize,
    pub width: usize,
    /// Wall seconds of each timed run.
    pub runs: Vec<f64>,
    pub median: f64,
}

/// Times single-image inference on an `height x width` frame after one
/// untimed warm-up pass.
pub fn time_benchmark(params: &ModelParams<f32>, height: usize, width: usize, repetitions: usize) -> Result<BenchResult> {
    if repetitions == 0 {
        return Err(Error::Config("benchmark needs at least one repetition".into()));
    }
    let view = |phase: f32| ImageTensor::from_fn(height, width, 3, move |y, x, c| 0.5 + 0.4 * ((y + 2 * x + c) as f32 * 0.1 + phase).sin());
    let (left, right) = (view(0.0), view(0.7));
    let combined = crate::sim::combine_views(&left, &right)?;
    let views = ViewSet {
        left: Some(&left),
        right: Some(&right),
        combined: Some(&combined),
    };
    deblur(params, views)?;
    let mut runs = Vec::with_capacity(repetitions);
    for _ in 0..repetitions {
        let start = Instant::now();
        std::hint::black_box(deblur(params, views)?);
        runs.push(start.elapsed().as_secs_f64());
    }
    Ok(BenchResult {
        height,
        width,
        median: median(&runs).expect("at least one run"),
        runs,
    })
}
