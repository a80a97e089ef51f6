use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dpdnet::imaging::load_image;
use dpdnet::model::checkpoint::Checkpoint;
use dpdnet::model::InputVariant;
use dpdnet_cli::{EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC};

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Workspace {
    fn new(extra: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let text = format!(
            r#"data_root = "{data}"
out = "{out}"
threads = 1
seed = 5
{extra}
[synth]
count = 10

[prep]
patch_size = 32
discard_fraction = 0.0
downscale = []

[train]
max_epochs = 2
initial_lr = 5e-4
deterministic_log = true

[train.model]
patch_size = 32
base_filters = 4
depth = 2
dropout_rate = 0.0

[bench]
height = 32
width = 48
repetitions = 2
"#,
            data = root.join("data").display(),
            out = root.join("run").display(),
        );
        std::fs::write(root.join("exp.toml"), text).unwrap();
        Self { _dir: dir, root }
    }

    fn config(&self) -> PathBuf {
        self.root.join("exp.toml")
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dpdnet"))
            .arg("--config")
            .arg(self.config())
            .args(args)
            .env_remove("DPDNET_DATA_ROOT")
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }
}

fn count_ext(dir: &Path, ext: &str) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == ext))
        .count()
}

#[test]
fn synth_renders_every_aperture_reproducibly() {
    let ws = Workspace::new("apertures = [4.0, 10.0, 16.0]");
    let stdout = ws.ok(&["synth"]);
    assert_eq!(stdout.lines().count(), 3);
    for name in ["f4", "f10", "f16"] {
        let dir = ws.path("data").join(name);
        assert_eq!(count_ext(&dir, "png"), 40, "{name}");
        let manifest = std::fs::read_to_string(dir.join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), 10);
        assert!(manifest.lines().all(|l| l.contains(name)));
    }
    let first = std::fs::read(ws.path("data/f10/scene-0003_L.png")).unwrap();
    ws.ok(&["synth"]);
    assert_eq!(std::fs::read(ws.path("data/f10/scene-0003_L.png")).unwrap(), first);
}

#[test]
fn prep_counts_patches_per_split() {
    let ws = Workspace::new("");
    ws.ok(&["synth"]);
    let stdout = ws.ok(&["prep"]);
    // 96x64 scenes, 32-px windows at stride 12: 7 columns by 4 rows
    let summary = std::fs::read_to_string(ws.path("run/prep/summary.csv")).unwrap();
    assert_eq!(
        summary,
        "split,scenes,extracted,kept\ntrain,6,168,168\nval,0,0,0\ntest,4,0,0\n"
    );
    assert!(stdout.contains("168 kept"));

    let stdout = ws.ok(&["prep", "--discard-fraction", "0.3"]);
    assert!(stdout.contains("168 patches extracted, 118 kept"), "{stdout}");
    let manifest = std::fs::read_to_string(ws.path("run/prep/manifest.csv")).unwrap();
    assert_eq!(manifest.lines().count(), 10);
}

#[test]
fn train_resume_and_downstream_commands() {
    let ws = Workspace::new("");
    ws.ok(&["synth"]);
    ws.ok(&["prep"]);
    ws.ok(&["train"]);
    let log_path = ws.path("run/train/train_log.csv");
    let log = std::fs::read_to_string(&log_path).unwrap();
    assert_eq!(log.lines().count(), 3);

    let text = std::fs::read_to_string(ws.config()).unwrap().replace("max_epochs = 2", "max_epochs = 3");
    std::fs::write(ws.config(), text).unwrap();
    ws.ok(&["train", "--resume"]);
    let log = std::fs::read_to_string(&log_path).unwrap();
    let epochs: Vec<u64> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(epochs, vec![1, 2, 3]);
    let steps: Vec<u64> = log
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(steps.windows(2).all(|w| w[0] < w[1]));

    let stdout = ws.ok(&["eval"]);
    assert!(stdout.contains("deblurred"));
    let report = std::fs::read_to_string(ws.path("run/eval/report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines.iter().all(|l| l.split(',').count() == 10));
    let records = std::fs::read_to_string(ws.path("run/eval/records_f4_deblurred.csv")).unwrap();
    assert_eq!(records.lines().count(), 5);

    let left = ws.path("data/f4/scene-0000_L.png");
    let right = ws.path("data/f4/scene-0000_R.png");
    ws.ok(&["infer", left.to_str().unwrap(), right.to_str().unwrap()]);
    let out = load_image(&ws.path("run/infer/scene-0000_L_deblurred.png"), None).unwrap();
    assert_eq!(out.dims(), load_image(&left, None).unwrap().dims());

    let wrong = ws.run(&["infer", left.to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(EXIT_CONFIG));
}

#[test]
fn variant_flag_selects_the_network_input() {
    let ws = Workspace::new("");
    ws.ok(&["synth"]);
    ws.ok(&["prep"]);
    ws.ok(&["--variant", "single", "train"]);
    let ck = Checkpoint::load(&ws.path("run/train/best.ckpt")).unwrap();
    assert_eq!(ck.params.config.input_variant, InputVariant::Single);
    let blurred = ws.path("data/f4/scene-0001_B.png");
    ws.ok(&["infer", blurred.to_str().unwrap()]);
    assert!(ws.path("run/infer/scene-0001_B_deblurred.png").exists());
}

#[test]
fn bench_writes_timing_files() {
    let ws = Workspace::new("");
    let stdout = ws.ok(&["bench"]);
    assert!(stdout.contains("untrained weights"));
    let timing = std::fs::read_to_string(ws.path("run/bench/timing.csv")).unwrap();
    assert_eq!(timing.lines().count(), 3);
    assert!(ws.path("run/bench/summary.txt").exists());
    assert!(ws.path("run/bench/config.toml").exists());
}

#[test]
fn exit_codes_by_failure_kind() {
    let ws = Workspace::new("");
    let missing = Command::new(env!("CARGO_BIN_EXE_dpdnet"))
        .args(["--config", "/nonexistent/exp.toml", "synth"])
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(EXIT_CONFIG));
    assert_eq!(ws.run(&["--patch-size", "0", "prep"]).status.code(), Some(EXIT_CONFIG));

    // no dataset rendered yet
    let out = ws.run(&["prep"]);
    assert_eq!(out.status.code(), Some(EXIT_DATA));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    ws.ok(&["synth"]);
    ws.ok(&["prep"]);
    let text = std::fs::read_to_string(ws.config()).unwrap().replace("initial_lr = 5e-4", "initial_lr = 1e30");
    std::fs::write(ws.config(), text).unwrap();
    assert_eq!(ws.run(&["train"]).status.code(), Some(EXIT_NUMERIC));
}
