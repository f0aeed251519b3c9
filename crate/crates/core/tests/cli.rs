use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tailprob::data::{SyntheticSpec, LATENCY_COLUMN};
use tailprob::eval::EvaluationReport;
use tailprob::model::ModelWeights;

fn tailprob(args: &[&str], paths: &[(&str, &Path)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tailprob"));
    cmd.args(args);
    for (flag, p) in paths {
        cmd.arg(flag).arg(p);
    }
    cmd.output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const FAST: &str = r#"{"train": {"rounds": [{"epochs": 12, "learning_rate": 0.01}, {"epochs": 4, "learning_rate": 0.001}], "ensemble_size": 3}}"#;

struct Fixture {
    _tmp: tempfile::TempDir,
    dir: PathBuf,
    data: PathBuf,
    cfg: PathBuf,
}

fn fixture(samples: &str) -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().to_path_buf();
    let data = dir.join("data.csv");
    ok(tailprob(
        &["generate", "--preset", "packet-length", "--samples", samples, "--seed", "4"],
        &[("--out", &data)],
    ));
    let cfg = dir.join("fast.json");
    fs::write(&cfg, FAST).unwrap();
    Fixture {
        _tmp: tmp,
        dir,
        data,
        cfg,
    }
}

#[test]
fn generate_writes_csv_and_truth_sidecar() {
    let f = fixture("300");
    let text = fs::read_to_string(&f.data).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(format!("{LATENCY_COLUMN},packet_length_bytes").as_str()));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 900);
    for len in ["172.0", "3440.0", "6880.0"] {
        assert_eq!(rows.iter().filter(|r| r.ends_with(&format!(",{len}"))).count(), 300);
    }
    let spec: SyntheticSpec =
        serde_json::from_str(&fs::read_to_string(f.dir.join("data.truth.json")).unwrap()).unwrap();
    assert_eq!(spec.seed, 4);
    assert_eq!(spec.total_samples(), 900);

    let again = f.dir.join("again.csv");
    ok(tailprob(
        &["generate", "--preset", "packet-length", "--samples", "300", "--seed", "4"],
        &[("--out", &again)],
    ));
    assert_eq!(fs::read(&again).unwrap(), fs::read(&f.data).unwrap());
}

#[test]
fn generate_from_spec_file() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SyntheticSpec::mcs_sweep(&[3.0, 5.0, 7.0], 50, 2).unwrap();
    let path = tmp.path().join("spec.json");
    fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();
    let out = tmp.path().join("sub/mcs.csv");
    ok(tailprob(&["generate"], &[("--spec", &path), ("--out", &out)]));
    assert_eq!(fs::read_to_string(&out).unwrap().lines().count(), 151);
    let bad = tmp.path().join("bad.json");
    fs::write(&bad, r#"{"condition_names": []}"#).unwrap();
    assert!(!tailprob(&["generate"], &[("--spec", &bad), ("--out", &out)]).status.success());
}

#[test]
fn train_evaluate_predict_pipeline() {
    let f = fixture("2000");
    let models = f.dir.join("models");
    ok(tailprob(
        &["train", "--seed", "7", "--train-fraction", "0.75"],
        &[("--data", &f.data), ("--config", &f.cfg), ("--out", &models)],
    ));
    for i in 0..3 {
        assert!(models.join(format!("model_{i:02}.json")).exists());
        let trace = fs::read_to_string(models.join(format!("trace_{i:02}.csv"))).unwrap();
        assert_eq!(trace.lines().next(), Some("epoch,round,lr,mean_nll"));
        assert_eq!(trace.lines().count(), 17);
    }
    let heldout = fs::read_to_string(models.join("heldout.csv")).unwrap();
    assert_eq!(heldout.lines().count(), 1501);

    // analytic truth: every level is available
    let analytic = f.dir.join("analytic");
    ok(tailprob(
        &["evaluate"],
        &[("--models", &models), ("--truth", &f.dir.join("data.truth.json")), ("--out", &analytic)],
    ));
    let r = EvaluationReport::load(analytic.join("report.json")).unwrap();
    assert_eq!(r.conditions.len(), 3);
    assert_eq!(r.seeds.len(), 3);
    for c in &r.conditions {
        assert!(c.band.is_ordered());
        assert!(c.metrics.iter().all(|m| m.is_available()));
        assert_eq!(c.models.len(), 3);
        assert!(analytic.join(&c.band_csv).exists());
    }

    // empirical truth with 500 samples per condition resolves only 1e-2
    let empirical = f.dir.join("empirical");
    ok(tailprob(
        &["evaluate"],
        &[("--models", &models), ("--data", &models.join("heldout.csv")), ("--out", &empirical)],
    ));
    let r = EvaluationReport::load(empirical.join("report.json")).unwrap();
    for c in &r.conditions {
        assert!(c.truth_samples > 0);
        for m in &c.metrics {
            assert_eq!(m.is_available(), m.level >= 1.0 / c.truth_samples as f64, "{m:?}");
        }
    }

    // predict round trip: the median's tail probability is one half
    let model = models.join("model_00.json");
    let q = ok(tailprob(
        &["predict", "--condition", "packet_length_bytes=3440", "--level", "0.5"],
        &[("--model", &model)],
    ));
    let p = ok(tailprob(
        &["predict", "--condition", "packet_length_bytes=3440", "--latency", q.trim()],
        &[("--model", &model)],
    ));
    assert!((p.trim().parse::<f64>().unwrap() - 0.5).abs() < 1e-9);

    // predict agrees with the evaluator's curve at its grid points
    let r = EvaluationReport::load(analytic.join("report.json")).unwrap();
    let c = &r.conditions[1];
    let curve = &c.models[0].curve;
    for j in [0, curve.grid.len() / 2, curve.grid.len() - 1] {
        let p = ok(tailprob(
            &[
                "predict",
                "--condition",
                &format!("packet_length_bytes={}", c.condition[0]),
                "--latency",
                &curve.grid[j].to_string(),
            ],
            &[("--model", &model)],
        ));
        assert_eq!(p.trim().parse::<f64>().unwrap(), curve.probs[j]);
    }
}

#[test]
fn predict_rejects_bad_conditions() {
    let f = fixture("200");
    let models = f.dir.join("m");
    ok(tailprob(
        &["train", "--ensemble", "1"],
        &[("--data", &f.data), ("--config", &f.cfg), ("--out", &models)],
    ));
    let model = models.join("model_00.json");
    let run = |args: &[&str]| tailprob(args, &[("--model", &model)]).status;
    assert!(!run(&["predict", "--condition", "mcs=3", "--level", "0.9"]).success());
    assert!(!run(&["predict", "--level", "0.9"]).success());
    assert!(!run(&["predict", "--condition", "packet_length_bytes=172", "--level", "1.5"]).success());
    let both = run(&[
        "predict",
        "--condition",
        "packet_length_bytes=172",
        "--level",
        "0.9",
        "--latency",
        "3",
    ]);
    assert!(!both.success());
}

#[test]
fn flags_override_config_file() {
    let f = fixture("200");
    let cfg = f.dir.join("seeded.json");
    fs::write(
        &cfg,
        r#"{"head": "gmm", "train": {"seed": 5, "ensemble_size": 2, "rounds": [{"epochs": 3, "learning_rate": 0.01}]}}"#,
    )
    .unwrap();
    let (a, b, c) = (f.dir.join("a"), f.dir.join("b"), f.dir.join("c"));
    ok(tailprob(&["train", "--seed", "11"], &[("--data", &f.data), ("--config", &cfg), ("--out", &a)]));
    // same effective settings, all given as flags over a schedule-only file
    let plain = f.dir.join("plain.json");
    fs::write(&plain, r#"{"train": {"rounds": [{"epochs": 3, "learning_rate": 0.01}]}}"#).unwrap();
    ok(tailprob(
        &["train", "--seed", "11", "--ensemble", "2", "--head", "gmm"],
        &[("--data", &f.data), ("--config", &plain), ("--out", &b)],
    ));
    ok(tailprob(&["train"], &[("--data", &f.data), ("--config", &cfg), ("--out", &c)]));
    let read = |d: &Path| fs::read(d.join("model_00.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
    let m = ModelWeights::load(a.join("model_01.json")).unwrap();
    assert_eq!(m.config().output_dim(), 45);
    assert!(!a.join("model_02.json").exists());
}

#[test]
fn default_ensemble_writes_ten_models() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("tiny.csv");
    let rows: String = (0..24).map(|i| format!("{}\n", 3.0 + (i as f64 * 0.7).sin())).collect();
    fs::write(&data, format!("latency_ms\n{rows}")).unwrap();
    let out = tmp.path().join("m");
    ok(tailprob(&["train", "--jobs", "2"], &[("--data", &data), ("--out", &out)]));
    for i in 0..10 {
        let m = ModelWeights::load(out.join(format!("model_{i:02}.json"))).unwrap();
        assert_eq!(m.config().output_dim(), 48);
        let trace = fs::read_to_string(out.join(format!("trace_{i:02}.csv"))).unwrap();
        assert_eq!(trace.lines().count(), 801);
    }
}

#[test]
fn errors_exit_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("missing.csv");
    let out = tmp.path().join("o");
    let r = tailprob(&["train"], &[("--data", &missing), ("--out", &out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("error"));

    let bad = tmp.path().join("bad.csv");
    fs::write(&bad, "latency_ms,x\n1.0,2\nnope,3\n").unwrap();
    let r = tailprob(&["train"], &[("--data", &bad), ("--out", &out)]);
    assert!(!r.status.success());
    assert!(String::from_utf8_lossy(&r.stderr).contains("row 2"));

    let f = fixture("100");
    let r = tailprob(
        &["train", "--train-fraction", "1.5"],
        &[("--data", &f.data), ("--config", &f.cfg), ("--out", &out)],
    );
    assert!(!r.status.success());
    let r = tailprob(
        &["evaluate"],
        &[("--models", &tmp.path().join("none.json")), ("--data", &f.data), ("--out", &out)],
    );
    assert!(!r.status.success());
}

#[test]
fn evaluate_rejects_schema_mismatch() {
    let f = fixture("200");
    let models = f.dir.join("m");
    ok(tailprob(
        &["train", "--ensemble", "1"],
        &[("--data", &f.data), ("--config", &f.cfg), ("--out", &models)],
    ));
    let other = f.dir.join("mcs.csv");
    ok(tailprob(&["generate", "--preset", "mcs", "--samples", "50"], &[("--out", &other)]));
    let out = f.dir.join("r");
    let r = tailprob(&["evaluate"], &[("--models", &models), ("--data", &other), ("--out", &out)]);
    assert!(!r.status.success());
    let r = tailprob(
        &["evaluate"],
        &[("--models", &models), ("--truth", &f.dir.join("mcs.truth.json")), ("--out", &out)],
    );
    assert!(!r.status.success());
}
