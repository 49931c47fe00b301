use std::path::Path;
use std::process::{Command, Output};

use mlepm::data::{write_dataset, ProfileSet, SampleRecord, Standardization, StreamStats, DEFAULT_SPLIT};
use mlepm::ml::{Architecture, Checkpoint, CnnModel, LossKind, TrainingHistory};
use serde_json::Value;

fn mlepm(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mlepm"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn synth_small(dir: &Path, name: &str) {
    let out = mlepm(dir, &["synth", "--profiles", "8", "--points", "24", "--seed", "5", "--out", name]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
}

#[test]
fn synth_writes_header_and_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = mlepm(dir.path(), &["synth", "--profiles", "12", "--points", "64", "--seed", "7", "--out", "d.csv"]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("case,station,x,y,k_rans,k_dns"));
    assert_eq!(lines.count(), 12 * 64);
    let sidecar: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("d.uinf.json")).unwrap()).unwrap();
    assert_eq!(sidecar["synthetic"], 1.0);
}

#[test]
fn synth_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.csv", "b.csv"] {
        assert_eq!(code(&mlepm(dir.path(), &["synth", "--seed", "3", "--out", name])), 0);
    }
    let read = |n: &str| std::fs::read(dir.path().join(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
}

#[test]
fn synth_usage_and_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mlepm(dir.path(), &["synth", "--profiles", "1", "--out", "d.csv"])), 2);
    assert_eq!(code(&mlepm(dir.path(), &["synth", "--noise", "-1", "--out", "d.csv"])), 2);
    assert_eq!(code(&mlepm(dir.path(), &["synth", "--out", "missing/dir/d.csv"])), 3);
    assert_eq!(code(&mlepm(dir.path(), &["synth", "--bogus"])), 2);
    assert_eq!(code(&mlepm(dir.path(), &["--help"])), 0);
}

#[test]
fn train_writes_checkpoint_and_history() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "d.csv");
    let out = mlepm(dir.path(), &["train", "--data", "d.csv", "--out", "model.json", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("val_mae"));

    let checkpoint = Checkpoint::load(&dir.path().join("model.json")).unwrap();
    assert_eq!(checkpoint.param_count, 85);
    assert_eq!(checkpoint.seed, 2);
    assert_eq!(checkpoint.split_fractions, DEFAULT_SPLIT);
    let history: TrainingHistory =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("model.history.json")).unwrap()).unwrap();
    assert_eq!(history.loss, LossKind::Mae);
    assert!(history.epochs_run() <= history.best_epoch + 10 + 1);
    let min = history.val_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert_eq!(history.best_val_loss, min);
}

#[test]
fn train_overrides() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "d.csv");
    let out = mlepm(dir.path(), &["train", "--data", "d.csv", "--out", "p.json", "--patience", "1"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let history: TrainingHistory = serde_json::from_str(&std::fs::read_to_string(dir.path().join("p.history.json")).unwrap()).unwrap();
    assert!(history.stopped_early);
    assert_eq!(history.epochs_run(), history.best_epoch + 2);

    let out = mlepm(dir.path(), &["train", "--data", "d.csv", "--out", "m.json", "--loss", "mse", "--max-epochs", "5"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let history: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("m.history.json")).unwrap()).unwrap();
    assert_eq!(history["loss"], "mse");
    assert_eq!(Checkpoint::load(&dir.path().join("m.json")).unwrap().loss, LossKind::Mse);
}

#[test]
fn train_rejects_bad_flags_and_datasets() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "d.csv");
    for flags in [["--lr", "0"], ["--patience", "0"], ["--loss", "huber"], ["--batch-size", "1"]] {
        let mut args = vec!["train", "--data", "d.csv", "--out", "m.json"];
        args.extend(flags);
        assert_eq!(code(&mlepm(dir.path(), &args)), 2, "{flags:?}");
    }

    let text = "case,station,x,y,k_rans,k_dns\na,0,0,0.1,1,1\na,0,0,0.2,-0.1,1\na,0,0,0.3,1,1\n";
    std::fs::write(dir.path().join("neg.csv"), text).unwrap();
    let out = mlepm(dir.path(), &["train", "--data", "neg.csv", "--out", "m.json", "--u-inf", "1"]);
    assert_eq!(code(&out), 4);
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    std::fs::write(dir.path().join("nosidecar.csv"), text.replace("-0.1", "0.1")).unwrap();
    assert_eq!(code(&mlepm(dir.path(), &["train", "--data", "nosidecar.csv", "--out", "m.json"])), 4);
    assert_eq!(code(&mlepm(dir.path(), &["train", "--data", "absent.csv", "--out", "m.json"])), 3);
}

#[test]
fn evaluate_writes_report_for_test_stations() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "d.csv");
    assert_eq!(code(&mlepm(dir.path(), &["train", "--data", "d.csv", "--out", "m.json", "--seed", "4"])), 0);
    let out = mlepm(dir.path(), &["evaluate", "--data", "d.csv", "--model", "m.json", "--report", "rep"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));

    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep/summary.json")).unwrap()).unwrap();
    let stations = summary["stations"].as_array().unwrap();
    // 8 profiles: round(0.4) = 0 validation, round(1.6) = 2 test
    assert_eq!(stations.len(), 2);
    assert_eq!(summary["aggregate"]["points"], 48);
    for s in stations {
        let csv = std::fs::read_to_string(dir.path().join("rep").join(s["file"].as_str().unwrap())).unwrap();
        assert_eq!(csv.lines().next(), Some("y,k_plus_rans,k_plus_hat,k_plus_dns,band_lo,band_hi"));
        assert_eq!(csv.lines().count(), 25);
    }
}

#[test]
fn evaluate_checkpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    synth_small(dir.path(), "d.csv");
    let out = mlepm(dir.path(), &["evaluate", "--data", "d.csv", "--model", "none.json", "--report", "r"]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("none.json"));

    assert_eq!(code(&mlepm(dir.path(), &["train", "--data", "d.csv", "--out", "m.json", "--max-epochs", "2"])), 0);
    let text = std::fs::read_to_string(dir.path().join("m.json")).unwrap();
    std::fs::write(dir.path().join("old.json"), text.replace("\"format_version\": 1", "\"format_version\": 0")).unwrap();
    let out = mlepm(dir.path(), &["evaluate", "--data", "d.csv", "--model", "old.json", "--report", "r"]);
    assert_eq!(code(&out), 5);
    assert!(stderr(&out).contains("version"), "{}", stderr(&out));
    assert!(!dir.path().join("r").exists());
}

/// Every weight zero, so the network outputs 0 and de-standardization
/// returns the target mean: a perfect predictor for a constant target.
fn constant_checkpoint(value: f64, seed: u64) -> Checkpoint {
    let arch = Architecture::tke_correction();
    let running = CnnModel::new(arch.clone(), 0).unwrap().running_stats().to_vec();
    let model = CnnModel::from_parts(arch.clone(), vec![0.0; arch.param_count()], running).unwrap();
    let stats = Standardization {
        input: StreamStats { mean: 0.0, std: 1.0 },
        target: StreamStats { mean: value, std: 1.0 },
    };
    Checkpoint::new(&model, stats, seed, DEFAULT_SPLIT, LossKind::Mae)
}

#[test]
fn perfect_oracle_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let records = (0..10).flat_map(|station| {
        (1..=12).map(move |j| (0, SampleRecord {
            case_id: "flat".into(),
            station: station as f64,
            x: station as f64,
            y: 0.05 * j as f64,
            k_rans: 0.02 * (j * (station + 1)) as f64,
            k_dns: 0.5,
        }))
    });
    let ps = ProfileSet::from_records(records.collect(), [("flat".to_string(), 1.0)].into()).unwrap();
    write_dataset(&ps, &dir.path().join("flat.csv")).unwrap();
    constant_checkpoint(0.5, 9).save(&dir.path().join("oracle.json")).unwrap();

    let out = mlepm(dir.path(), &["evaluate", "--data", "flat.csv", "--model", "oracle.json", "--report", "r"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r/summary.json")).unwrap()).unwrap();
    let stations = summary["stations"].as_array().unwrap();
    assert_eq!(stations.len(), 2);
    for s in stations {
        assert_eq!(s["mae_corrected"], 0.0);
        assert_eq!(s["coverage"], 1.0);
        assert_eq!(s["improvement_factor"], Value::Null);
    }
    assert_eq!(summary["aggregate"]["coverage"], 1.0);
}

fn perturb(args: &[&str]) -> (i32, Value) {
    let dir = tempfile::tempdir().unwrap();
    let mut full = vec!["perturb"];
    full.extend(args);
    let out = mlepm(dir.path(), &full);
    let json = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (code(&out), json)
}

fn diag(t: &Value) -> [f64; 3] {
    ["xx", "yy", "zz"].map(|c| t[c].as_f64().unwrap())
}

#[test]
fn perturb_isotropic_to_one_component() {
    let (code, json) = perturb(&["--k", "1", "--b", "0,0,0,0,0,0", "--delta-b", "1", "--targets", "1c"]);
    assert_eq!(code, 0);
    let members = json["members"].as_array().unwrap();
    assert_eq!(members.len(), 1);
    assert_eq!(members[0]["target"], "1c");
    let d = diag(&members[0]["tensor"]);
    for (got, want) in d.iter().zip([2.0, 0.0, 0.0]) {
        assert!((got - want).abs() < 1e-12, "{d:?}");
    }
    assert_eq!(json["envelope"]["member_count"], 2);
}

#[test]
fn perturb_zero_magnitude_echoes_input() {
    let b = "0.1,-0.05,-0.05,0.02,0,0.01";
    let (code, json) = perturb(&["--k", "0.7", "--b", b, "--delta-b", "0"]);
    assert_eq!(code, 0);
    for m in json["members"].as_array().unwrap() {
        assert_eq!(m["tensor"], json["input"]);
    }
    assert_eq!(json["envelope"]["lower"], json["input"]);
    assert_eq!(json["envelope"]["upper"], json["input"]);
}

#[test]
fn perturb_validation_errors() {
    assert_eq!(perturb(&["--k", "1", "--b", "0,0,0,0,0,0", "--delta-b", "1.5"]).0, 2);
    assert_eq!(perturb(&["--k", "1", "--b", "1,-0.5,-0.5,0,0,0", "--delta-b", "0.5"]).0, 2);
    assert_eq!(perturb(&["--k", "1", "--b", "0,0,0", "--delta-b", "0.5"]).0, 2);
    assert_eq!(perturb(&["--k", "-1", "--b", "0,0,0,0,0,0", "--delta-b", "0.5"]).0, 2);
    assert_eq!(perturb(&["--k", "1", "--b", "0,0,0,0,0,0", "--delta-b", "0.5", "--targets", "4c"]).0, 2);
}
