use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use dpdnet::data::{
    prepare, read_patch_cache, write_patch_cache, DatasetManifest, SceneRecord, Split,
};
use dpdnet::eval::{deblur, evaluate, records_csv, time_benchmark, BenchResult, ReportRow, ReportTable, Selection};
use dpdnet::imaging::{load_image, save_image, ImageTensor};
use dpdnet::model::checkpoint::Checkpoint;
use dpdnet::model::{build, InputVariant, ModelParams, ViewSet};
use dpdnet::sim::{load_scene, procedural_scene, render_dp, Category, DPFrame, SceneSpec};
use dpdnet::train::{evaluate_mse, train, TrainingSet};
use dpdnet::{Error, Result};
use rayon::prelude::*;

use crate::config::{aperture_name, ExperimentConfig};

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const CONFIG_FILE: &str = "config.toml";

fn io(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    std::fs::write(path, text).map_err(|e| io(path, e))
}

/// Writes the resolved configuration into a command's output directory.
pub fn write_resolved(cfg: &ExperimentConfig, dir: &Path) -> Result<PathBuf> {
    let path = dir.join(CONFIG_FILE);
    write(&path, &cfg.to_toml()?)?;
    Ok(path)
}

struct SourceScene {
    id: String,
    category: Category,
    spec: SceneSpec,
}

fn source_scenes(cfg: &ExperimentConfig) -> Result<Vec<SourceScene>> {
    let Some(dir) = &cfg.scene_source else {
        return (0..cfg.synth.count)
            .into_par_iter()
            .map(|i| {
                let category = if i % 2 == 0 { Category::Indoor } else { Category::Outdoor };
                let seed = cfg.synth.seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
                Ok(SourceScene {
                    id: format!("scene-{i:04}"),
                    category,
                    spec: procedural_scene(seed, category, &cfg.synth.scene, cfg.camera)?,
                })
            })
            .collect();
    };
    let mut ids: Vec<String> = std::fs::read_dir(dir)
        .map_err(|e| io(dir, e))?
        .filter_map(|entry| {
            let path = entry.ok()?.path();
            (path.extension()? == "toml").then(|| path.file_stem()?.to_str().map(str::to_owned))?
        })
        .collect();
    ids.sort();
    if ids.is_empty() {
        return Err(Error::Data(format!("no scene sidecars (*.toml) in {}", dir.display())));
    }
    ids.into_par_iter()
        .map(|id| {
            let (spec, category) = load_scene(
                &dir.join(format!("{id}.png")),
                &dir.join(format!("{id}_depth.png")),
                &dir.join(format!("{id}.toml")),
            )?;
            let category = category.ok_or_else(|| Error::Data(format!("scene `{id}` has no category")))?;
            Ok(SourceScene { id, category, spec })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub dirs: Vec<PathBuf>,
    pub scenes: usize,
}

/// Renders every source scene at each configured aperture into
/// `<data_root>/f<N>/` with a manifest.
pub fn cmd_synth(cfg: &ExperimentConfig) -> Result<SynthSummary> {
    let scenes = source_scenes(cfg)?;
    let mut dirs = Vec::new();
    for &f_number in &cfg.apertures {
        let dir = cfg.dataset_dir(f_number);
        create_dir(&dir)?;
        let records = scenes
            .par_iter()
            .map(|s| {
                let mut spec = s.spec.clone();
                spec.camera = spec.camera.with_f_number(f_number);
                let frame = render_dp(&spec, &cfg.synth.render, &s.id, s.category)?;
                frame.save(&dir, cfg.synth.bit_depth)?;
                let views = DPFrame::view_paths(Path::new(""), &s.id);
                Ok(SceneRecord {
                    id: s.id.clone(),
                    category: s.category,
                    views,
                    aperture: aperture_name(f_number),
                    split: cfg.synth.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = DatasetManifest {
            root: dir.clone(),
            scenes: records,
        };
        manifest.save(&dir.join(MANIFEST_FILE))?;
        write_resolved(cfg, &dir)?;
        dirs.push(dir);
    }
    Ok(SynthSummary {
        dirs,
        scenes: scenes.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitCounts {
    pub scenes: usize,
    pub extracted: usize,
    pub kept: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrepSummary {
    pub train: SplitCounts,
    pub val: SplitCounts,
    pub test_scenes: usize,
}

impl PrepSummary {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,scenes,extracted,kept\n");
        for (name, c) in [("train", self.train), ("val", self.val)] {
            let _ = writeln!(s, "{name},{},{},{}", c.scenes, c.extracted, c.kept);
        }
        let _ = writeln!(s, "test,{},0,0", self.test_scenes);
        s
    }
}

pub fn prep_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("prep")
}

/// Splits the training-aperture dataset, extracts and filters patches and
/// writes the patch caches plus the split manifest.
pub fn cmd_prep(cfg: &ExperimentConfig) -> Result<PrepSummary> {
    let source = cfg.dataset_dir(cfg.training_aperture()).join(MANIFEST_FILE);
    let manifest = DatasetManifest::load(&source)?;
    let prepared = prepare(&manifest, &cfg.prep)?;
    let dir = prep_dir(cfg);
    write_patch_cache(&dir.join("train.bin"), cfg.prep.patch_size, &prepared.train)?;
    write_patch_cache(&dir.join("val.bin"), cfg.prep.patch_size, &prepared.val)?;

    let mut split_manifest = prepared.manifest.clone();
    for s in &mut split_manifest.scenes {
        let views = s.views.clone().map(|p| prepared.manifest.resolve(&p));
        s.views = views;
    }
    split_manifest.save(&dir.join(MANIFEST_FILE))?;

    let count = |which| split_manifest.in_split(which).count();
    let summary = PrepSummary {
        train: SplitCounts {
            scenes: count(Split::Train),
            extracted: prepared.extracted[0],
            kept: prepared.train.len(),
        },
        val: SplitCounts {
            scenes: count(Split::Val),
            extracted: prepared.extracted[1],
            kept: prepared.val.len(),
        },
        test_scenes: count(Split::Test),
    };
    write(&dir.join("summary.csv"), &summary.to_csv())?;
    write_resolved(cfg, &dir)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub epochs: u64,
    pub best_epoch: u64,
    pub best_val: f64,
    /// Inference-mode MSE of the final parameters on the training patches.
    pub final_train_mse: f64,
    pub best_checkpoint: PathBuf,
}

pub fn train_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("train")
}

fn load_set(path: &Path, cfg: &ExperimentConfig) -> Result<TrainingSet> {
    let (size, patches) = read_patch_cache(path)?;
    if size != cfg.train.model.patch_size && !patches.is_empty() {
        return Err(Error::Config(format!(
            "{} holds {size}-pixel patches but the model expects {}",
            path.display(),
            cfg.train.model.patch_size
        )));
    }
    TrainingSet::from_patches(&patches, &cfg.train.model)
}

/// Trains on the prepared caches. With `resume`, an existing
/// `last.ckpt` is continued.
pub fn cmd_train(cfg: &ExperimentConfig, resume: bool) -> Result<TrainSummary> {
    let prep = prep_dir(cfg);
    let train_set = load_set(&prep.join("train.bin"), cfg)?;
    let val_set = load_set(&prep.join("val.bin"), cfg)?;
    let dir = train_dir(cfg);
    let last = dir.join("last.ckpt");
    let ck = if resume && last.exists() {
        Some(Checkpoint::load_expecting(&last, &cfg.train.model)?)
    } else {
        None
    };
    write_resolved(cfg, &dir)?;
    let outcome = train(&cfg.train, &train_set, &val_set, &dir, ck)?;
    let final_train_mse = evaluate_mse(&outcome.last.params, &train_set, cfg.train.batch_size)?;
    Ok(TrainSummary {
        epochs: outcome.last.state.epoch,
        best_epoch: outcome.best_epoch,
        best_val: outcome.best_val,
        final_train_mse,
        best_checkpoint: outcome.best_path,
    })
}

fn load_model(cfg: &ExperimentConfig, path: Option<&Path>) -> Result<ModelParams<f32>> {
    let path = path.map(Path::to_path_buf).unwrap_or_else(|| cfg.default_checkpoint());
    if !path.exists() {
        return Err(Error::Data(format!("checkpoint {} not found; run `train` first", path.display())));
    }
    Ok(Checkpoint::load(&path)?.params)
}

pub fn eval_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("eval")
}

/// Scores the configured selections on the evaluation split of every
/// aperture's dataset. Split membership comes from the prep manifest.
pub fn cmd_eval(cfg: &ExperimentConfig) -> Result<ReportTable> {
    let needs_model = cfg.eval.selections.contains(&Selection::Deblurred);
    let params = if needs_model {
        Some(load_model(cfg, cfg.eval.checkpoint.as_deref())?)
    } else {
        None
    };
    let split_manifest = DatasetManifest::load(&prep_dir(cfg).join(MANIFEST_FILE))?;
    let splits: HashMap<&str, Option<Split>> = split_manifest.scenes.iter().map(|s| (s.id.as_str(), s.split)).collect();
    let dir = eval_dir(cfg);
    let mut table = ReportTable::default();
    let tagged = cfg.apertures.len() > 1;
    for &f_number in &cfg.apertures {
        let mut manifest = DatasetManifest::load(&cfg.dataset_dir(f_number).join(MANIFEST_FILE))?;
        for s in &mut manifest.scenes {
            s.split = splits.get(s.id.as_str()).copied().flatten();
        }
        for &selection in &cfg.eval.selections {
            let records = evaluate(&manifest, cfg.eval.split, &cfg.prep, params.as_ref(), selection)?;
            let name = if tagged {
                format!("{selection}@{}", aperture_name(f_number))
            } else {
                selection.to_string()
            };
            write(&dir.join(format!("records_{}_{selection}.csv", aperture_name(f_number))), &records_csv(&records)?)?;
            table.push(ReportRow::from_records(name, &records)?);
        }
    }
    table.write(&dir.join("report.csv"), &dir.join("report.txt"))?;
    write_resolved(cfg, &dir)?;
    Ok(table)
}

/// Deblurs one scene given as image paths: `L R` for the dual model, `B`
/// for single and `L R B` for triple. Returns the written PNG.
pub fn cmd_infer(cfg: &ExperimentConfig, images: &[PathBuf], output: Option<&Path>) -> Result<PathBuf> {
    let params = load_model(cfg, cfg.eval.checkpoint.as_deref())?;
    let variant = params.config.input_variant;
    let want = match variant {
        InputVariant::Single => 1,
        InputVariant::Dual => 2,
        InputVariant::Triple => 3,
    };
    if images.len() != want {
        return Err(Error::Config(format!(
            "the {variant} model takes {want} image(s), got {}",
            images.len()
        )));
    }
    let loaded = images.iter().map(|p| load_image(p, None)).collect::<Result<Vec<ImageTensor>>>()?;
    let views = match variant {
        InputVariant::Single => ViewSet {
            combined: Some(&loaded[0]),
            ..ViewSet::default()
        },
        _ => ViewSet {
            left: Some(&loaded[0]),
            right: Some(&loaded[1]),
            combined: loaded.get(2),
        },
    };
    let out = deblur(&params, views)?;
    let path = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let stem = images[0].file_stem().and_then(|s| s.to_str()).unwrap_or("image");
            cfg.out.join("infer").join(format!("{stem}_deblurred.png"))
        }
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
        write_resolved(cfg, dir)?;
    }
    save_image(&path, &out, cfg.prep.bit_depth)?;
    Ok(path)
}

/// A one-line description of the machine the benchmark ran on.
pub fn hardware_description() -> String {
    let cpu = std::fs::read_to_string("/proc/cpuinfo")
        .ok()
        .and_then(|s| {
            s.lines()
                .find(|l| l.starts_with("model name"))
                .and_then(|l| l.split(':').nth(1))
                .map(|m| m.trim().to_string())
        })
        .unwrap_or_else(|| "unknown cpu".into());
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    format!("{cpu}; {threads} hardware threads; {}-{}", std::env::consts::ARCH, std::env::consts::OS)
}

pub fn bench_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out.join("bench")
}

/// Times full-frame inference. Uses the trained checkpoint when present,
/// otherwise freshly initialised weights of the configured architecture.
pub fn cmd_bench(cfg: &ExperimentConfig) -> Result<(BenchResult, String)> {
    let ck = cfg.eval.checkpoint.clone().unwrap_or_else(|| cfg.default_checkpoint());
    let (params, source) = if ck.exists() {
        (Checkpoint::load(&ck)?.params, ck.display().to_string())
    } else {
        (build::<f32>(&cfg.train.model, cfg.train.seed)?, "untrained weights".to_string())
    };
    let result = time_benchmark(&params, cfg.bench.height, cfg.bench.width, cfg.bench.repetitions)?;
    let dir = bench_dir(cfg);
    let mut csv = String::from("run,seconds\n");
    for (i, s) in result.runs.iter().enumerate() {
        let _ = writeln!(csv, "{},{s:.6}", i + 1);
    }
    write(&dir.join("timing.csv"), &csv)?;
    let summary = format!(
        "median {:.4} s over {} run(s) at {}x{} ({}, {}); hardware: {}",
        result.median,
        result.runs.len(),
        result.width,
        result.height,
        params.config.input_variant,
        source,
        hardware_description()
    );
    write(&dir.join("summary.txt"), &format!("{summary}\n"))?;
    write_resolved(cfg, &dir)?;
    Ok((result, summary))
}
