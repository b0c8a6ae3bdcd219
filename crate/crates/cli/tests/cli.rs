use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_momentmix"));
    c.env_remove("MOMENTMIX_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap_or_else(|e| panic!("not JSON ({e}): {text}"))
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

#[test]
fn maxrank_values() {
    let v = json(&ok(&["maxrank", "--d", "15", "--m", "5", "--format", "json"]));
    assert_eq!(v[0]["r_max"], 15);
    let v = json(&ok(&["maxrank", "--d", "40", "--m", "7", "--format", "json"]));
    assert_eq!(v[0]["r_max"], 969);
    assert_eq!(v[0]["p_star"], 3);
    assert_eq!(v[0]["k_star"], 19);
}

#[test]
fn bad_shape_exits_with_usage_code() {
    let out = run(&["maxrank", "--d", "3", "--m", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
    assert_eq!(run(&["maxrank", "--d", "10", "--m", "2"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn params_matches_rank() {
    let v = json(&ok(&["params", "--d", "10", "--m", "3", "--r", "4", "--format", "json"]));
    assert!(v[0]["k"].as_u64().unwrap() > v[0]["p"].as_u64().unwrap());
}

#[test]
fn generate_then_decompose() {
    let dir = tempfile::tempdir().unwrap();
    let (t, truth, dec) = (
        p(dir.path(), "t.json"),
        p(dir.path(), "truth.json"),
        p(dir.path(), "dec.json"),
    );
    ok(&[
        "gen-tensor",
        "--d",
        "8",
        "--m",
        "4",
        "--r",
        "3",
        "--out",
        &t,
        "--truth",
        &truth,
        "--seed",
        "3",
    ]);
    let report = json(&ok(&[
        "decompose",
        "--input",
        &t,
        "--r",
        "3",
        "--truth",
        &truth,
        "--out",
        &dec,
        "--format",
        "json",
    ]));
    assert!(report[0]["decomp_err"].as_f64().unwrap() <= 1e-8, "{report}");
    assert!(report[0]["vec_err_max"].as_f64().unwrap() <= 1e-6, "{report}");
    let d = json(&std::fs::read_to_string(&dec).unwrap());
    assert_eq!(d["components"].as_array().unwrap().len(), 3);
}

#[test]
fn approximate_reports_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (t, out) = (p(dir.path(), "t.json"), p(dir.path(), "a.json"));
    ok(&["gen-tensor", "--d", "9", "--m", "3", "--r", "3", "--out", &t]);
    let v = json(&ok(&[
        "approximate",
        "--input",
        &t,
        "--r",
        "3",
        "--epsilon",
        "0.01",
        "--out",
        &out,
        "--format",
        "json",
    ]));
    let abs = v[0]["abs_err"].as_f64().unwrap();
    assert!(abs.is_finite() && abs <= 0.01, "{v}");
}

#[test]
fn rank_above_bound_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let t = p(dir.path(), "t.json");
    ok(&["gen-tensor", "--d", "6", "--m", "3", "--r", "2", "--out", &t]);
    let out = run(&["decompose", "--input", &t, "--r", "9"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the largest computable rank"));
}

#[test]
fn missing_entry_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let t = p(dir.path(), "t.json");
    ok(&["gen-tensor", "--d", "6", "--m", "3", "--r", "2", "--out", &t]);
    let mut v = json(&std::fs::read_to_string(&t).unwrap());
    let entries = v["entries"].as_array_mut().unwrap();
    entries.retain(|e| e["key"] != serde_json::json!([0, 1, 2]));
    std::fs::write(&t, v.to_string()).unwrap();
    let out = run(&["decompose", "--input", &t, "--r", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let outs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let t = p(dir.path(), &format!("t{i}.json"));
            ok(&["gen-tensor", "--d", "10", "--m", "3", "--r", "4", "--seed", "11", "--out", &t]);
            let d = p(dir.path(), &format!("d{i}.json"));
            ok(&[
                "approximate",
                "--input",
                &t,
                "--r",
                "4",
                "--epsilon",
                "0.1",
                "--seed",
                "5",
                "--out",
                &d,
            ]);
            [std::fs::read(&t).unwrap(), std::fs::read(&d).unwrap()].concat()
        })
        .collect();
    assert_eq!(outs[0], outs[1]);
    let other = p(dir.path(), "t_other.json");
    ok(&[
        "gen-tensor",
        "--d",
        "10",
        "--m",
        "3",
        "--r",
        "4",
        "--seed",
        "12",
        "--out",
        &other,
    ]);
    assert_ne!(
        std::fs::read(&other).unwrap(),
        std::fs::read(p(dir.path(), "t0.json")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "model.json");
    let samples = p(dir.path(), "s.csv");
    ok(&["gen-gmm", "--d", "6", "--r", "2", "--out", &model]);
    ok(&["sample", "--model", &model, "--n", "5000", "--out", &samples]);
    let moments = |threads: &str| {
        let out = bin()
            .env("MOMENTMIX_THREADS", threads)
            .args(["moments", "--samples", &samples, "--r", "2", "--m", "3"])
            .output()
            .unwrap();
        assert!(out.status.success());
        out.stdout
    };
    assert_eq!(moments("1"), moments("3"));
    let bad = bin()
        .env("MOMENTMIX_THREADS", "zero")
        .args(["maxrank", "--d", "6", "--m", "3"])
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn gmm_generation_and_sampling() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "model.json");
    ok(&["gen-gmm", "--d", "5", "--r", "3", "--out", &model]);
    let mut v = json(&std::fs::read_to_string(&model).unwrap());
    let sum: f64 = v["weights"].as_array().unwrap().iter().map(|w| w.as_f64().unwrap()).sum();
    assert!((sum - 1.0).abs() <= 1e-12);

    // with zero variances every sample is exactly its component mean
    for row in v["variances"].as_array_mut().unwrap() {
        for x in row.as_array_mut().unwrap() {
            *x = serde_json::json!(0.0);
        }
    }
    std::fs::write(&model, v.to_string()).unwrap();
    let samples = p(dir.path(), "s.csv");
    ok(&["sample", "--model", &model, "--n", "50", "--out", &samples]);
    let rows: Vec<Vec<f64>> = std::fs::read_to_string(&samples)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    let labels: Vec<usize> = std::fs::read_to_string(p(dir.path(), "s.labels.csv"))
        .unwrap()
        .lines()
        .map(|l| l.parse().unwrap())
        .collect();
    assert_eq!((rows.len(), labels.len()), (50, 50));
    for (row, &l) in rows.iter().zip(&labels) {
        let mean: Vec<f64> = v["means"][l]
            .as_array()
            .unwrap()
            .iter()
            .map(|x| x.as_f64().unwrap())
            .collect();
        assert_eq!(row, &mean);
    }
    assert_eq!(run(&["sample", "--model", &model, "--n", "5"]).status.code(), Some(2));
}

#[test]
fn learn_from_exact_moments() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "model.json");
    let moments = p(dir.path(), "m.json");
    let learned = p(dir.path(), "learned.json");
    let samples = p(dir.path(), "s.csv");
    ok(&["gen-gmm", "--d", "10", "--r", "4", "--seed", "7", "--out", &model]);
    ok(&["moments", "--model", &model, "--r", "4", "--m", "4", "--out", &moments]);
    ok(&["learn", "--moments", &moments, "--r", "4", "--m", "4", "--out", &learned]);
    ok(&["sample", "--model", &model, "--n", "2000", "--out", &samples]);
    let v = json(&ok(&[
        "evaluate",
        "--model",
        &learned,
        "--samples",
        &samples,
        "--truth",
        &model,
        "--format",
        "json",
    ]));
    assert!(v[0]["parameter_error"].as_f64().unwrap() <= 1e-6, "{v}");
    assert!(v[0]["accuracy"].as_f64().unwrap() > 0.9, "{v}");
}

#[test]
fn learn_and_em_from_samples() {
    let dir = tempfile::tempdir().unwrap();
    let model = p(dir.path(), "model.json");
    let samples = p(dir.path(), "s.csv");
    ok(&["gen-gmm", "--d", "8", "--r", "2", "--seed", "4", "--out", &model]);
    ok(&["sample", "--model", &model, "--n", "20000", "--out", &samples]);
    for cmd in [
        vec!["learn", "--samples", &samples, "--m", "3"],
        vec!["em", "--samples", &samples],
    ] {
        let fit = p(dir.path(), "fit.json");
        let mut args = cmd.clone();
        args.extend(["--r", "2", "--out", &fit]);
        ok(&args);
        let v = json(&ok(&["evaluate", "--model", &fit, "--samples", &samples, "--format", "json"]));
        assert!(v[0]["accuracy"].as_f64().unwrap() > 0.8, "{cmd:?}: {v}");
    }
}

#[test]
fn experiment_with_no_trials_prints_headers() {
    let out = ok(&["experiment", "table2", "--d", "8", "--trials", "0"]);
    assert_eq!(out.lines().count(), 2, "{out}");
    assert!(out.starts_with("| d | m | r |"));
    let csv = ok(&[
        "experiment",
        "table4",
        "--d",
        "8",
        "--r",
        "2",
        "--trials",
        "0",
        "--format",
        "csv",
    ]);
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn small_table2_run() {
    let v = json(&ok(&[
        "experiment",
        "table2",
        "--d",
        "8",
        "--orders",
        "3,4",
        "--trials",
        "3",
        "--format",
        "json",
    ]));
    let rows = v.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert_eq!(row["failed"], 0);
        assert!(row["decomp_err_max"].as_f64().unwrap() <= 1e-8, "{row}");
    }
}
