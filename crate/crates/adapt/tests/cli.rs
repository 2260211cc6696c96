use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_adapt"));
    c.env_remove("ADAPT_OUTPUT_DIR").env("RUST_LOG", "warn");
    c
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    if !out.status.success() {
        panic!(
            "{args:?} failed\nstdout: {}\nstderr: {}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        );
    }
    out
}

fn read_json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))).unwrap()
}

fn tiny_config() -> Value {
    let encoder = json!({
        "d_model": 8, "d_ff": 16, "n_layers": 1, "n_heads": 2,
        "dropout_rate": 0.0, "embed_hidden": [8], "eps_ln": 1e-5
    });
    json!({
        "seed": 5,
        "data": {"fractions": [0.6, 0.2, 0.2]},
        "generate": {"count": 20, "jitter": 0.1},
        "oracle": {"repeats": 3},
        "force_model": {"encoder": encoder},
        "energy_model": {"arch": "mlp_residual", "max_atoms": 30, "hidden": [16], "decoder": encoder},
        "train": {"epochs": 2, "batch_size": 4},
        "relax": {"max_steps": 40},
        "relax_count": 2,
        "ablation": {"epochs": 1, "fractions": [1.46, 100.0]},
        "compare": {"epochs": 1}
    })
}

#[test]
fn help_and_usage_errors() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["gen-data", "train-force", "train-energy", "evaluate", "relax", "ablate-radius", "compare-energy"] {
        assert!(text.contains(cmd), "help lacks {cmd}");
    }
    assert!(bin().args(["train-force", "--help"]).output().unwrap().status.success());
    let bad = bin().args(["train-force", "--no-such-flag"]).output().unwrap();
    assert_eq!(bad.status.code(), Some(2));
    let missing = bin().arg("evaluate").output().unwrap();
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn config_errors_exit_nonzero_and_name_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .current_dir(dir.path())
        .args(["gen-data", "--config", "absent.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    let out = bin()
        .current_dir(dir.path())
        .args(["train-force", "--set", "train.epochs=\"many\""])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("train.epochs"));

    let out = bin()
        .current_dir(dir.path())
        .args(["train-force", "--set", "force_model.encoder.n_heads=3"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("force_model"));

    // No dataset generated yet.
    let out = bin().current_dir(dir.path()).arg("train-force").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn full_pipeline_on_a_tiny_config() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    std::fs::write(root.join("tiny.json"), tiny_config().to_string()).unwrap();
    let base = ["--config", "tiny.json", "--out", "out"];
    let with = |extra: &[&str]| -> Vec<String> { extra.iter().chain(&base).map(|s| s.to_string()).collect() };
    let call = |extra: &[&str]| {
        let args = with(extra);
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        run(root, &refs)
    };

    call(&["gen-data"]);
    let out = root.join("out");
    let manifest = std::fs::read_to_string(out.join("data/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().count(), 20);
    let resolved = read_json(out.join("data/resolved-config.json"));
    assert_eq!(resolved["seed"], 5);
    assert_eq!(resolved["train"]["seed"], 5);
    assert_eq!(resolved["generate"]["count"], 20);

    call(&["train-force", "--epochs", "3"]);
    for f in ["model.ckpt", "log.ndjson", "train-report.json", "resolved-config.json"] {
        assert!(out.join("force").join(f).exists(), "force/{f}");
    }
    let log = std::fs::read_to_string(out.join("force/log.ndjson")).unwrap();
    assert_eq!(log.lines().count(), 3);
    for line in log.lines() {
        let rec: Value = serde_json::from_str(line).unwrap();
        for key in ["epoch", "train_loss", "val_loss", "seconds"] {
            assert!(rec.get(key).is_some(), "log record lacks {key}");
        }
    }
    assert_eq!(read_json(out.join("force/resolved-config.json"))["train"]["epochs"], 3);

    call(&["train-energy"]);
    assert!(out.join("energy/model.ckpt").exists());

    call(&["evaluate", "--model", "oracle"]);
    let report = read_json(out.join("eval/eval-report.json"));
    assert_eq!(report["force_mae"], 0.0);
    assert_eq!(report["total_l2"], 0.0);
    assert_eq!(report["energy_mae"], 0.0);

    call(&["evaluate", "--model", "zero"]);
    let report = read_json(out.join("eval/eval-report.json"));
    let (mae, baseline) = (report["force_mae"].as_f64().unwrap(), report["zero_force_baseline_mae"].as_f64().unwrap());
    assert!((mae - baseline).abs() <= 1e-12 * baseline);

    call(&["evaluate", "--model", "out/force/model.ckpt", "--energy-model", "out/energy/model.ckpt"]);
    let report = read_json(out.join("eval/eval-report.json"));
    assert!(report["force_mae"].as_f64().unwrap() > 0.0);
    assert!(report["energy_mae"].as_f64().is_some());
    assert!(out.join("eval/force-scatter.csv").exists());
    assert!(out.join("eval/energy-scatter.csv").exists());

    call(&["relax", "--model", "oracle"]);
    let report = read_json(out.join("relax/relax-report.json"));
    assert_eq!(report["structures"], 2);
    assert_eq!(report["rows"].as_array().unwrap().len(), 2);
    let trajectories: Vec<_> = std::fs::read_dir(out.join("relax/trajectories")).unwrap().collect();
    assert_eq!(trajectories.len(), 4);

    call(&["ablate-radius"]);
    let csv = std::fs::read_to_string(out.join("ablation/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().next().unwrap().contains("total_l2"));

    call(&["compare-energy"]);
    let csv = std::fs::read_to_string(out.join("compare/compare.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, ["Decoder", "MLP", "MLP+residual"]);
}

#[test]
fn output_directory_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.json"), tiny_config().to_string()).unwrap();
    let out = bin()
        .current_dir(dir.path())
        .env("ADAPT_OUTPUT_DIR", "from-env")
        .args(["gen-data", "--config", "tiny.json", "--count", "2"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("from-env/data/manifest.txt").exists());
}

#[test]
fn repro_script_produces_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("small");
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scripts/repro_small_adapt.sh");
    let status = Command::new("sh")
        .arg(script)
        .arg(&out)
        .args(["--set", "generate.count=20", "--set", "data.fractions=[0.6,0.2,0.2]"])
        .args(["--set", "train.epochs=1", "--set", "relax_count=2", "--set", "relax.max_steps=20"])
        .env("ADAPT_BIN", env!("CARGO_BIN_EXE_adapt"))
        .env_remove("ADAPT_OUTPUT_DIR")
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    let encoder = &read_json(out.join("force/resolved-config.json"))["force_model"]["encoder"];
    assert_eq!(encoder["d_model"], 256);
    assert_eq!(encoder["d_ff"], 512);
    assert_eq!(encoder["n_layers"], 8);
    assert_eq!(encoder["n_heads"], 8);
    assert_eq!(encoder["dropout_rate"], 0.05);
}
