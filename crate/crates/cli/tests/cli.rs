use std::fs;
use std::path::Path;
use std::process::Command;

use randesign::coverage::{self, ConditionChoice, Estimator};
use randesign::estimators::fixed_design_highprob;
use randesign_cli::bounds::{evaluate_all, scenario_values};
use randesign_cli::config::ExperimentConfig;
use randesign_cli::experiment::{run_experiment, RunOptions, SCHEMA, TRIAL_COLUMNS};
use randesign_cli::tails::{parse_runs, verify_tails};
use randesign_cli::GlobalOpts;
use serde_json::{json, Value};

const GAUSSIAN_MODEL: &str = r#"{
  "design": { "kind": "gaussian", "covariance": [[1,0,0],[0,1,0],[0,0,1]] },
  "beta": [1.0, -1.0, 0.5],
  "noise": { "kind": "gaussian", "sigma": 1.0 }
}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_randesign"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn config(model: &str, estimator: Value, n: &[usize], delta: &[f64], trials: u64, out: &Path) -> ExperimentConfig {
    let v = json!({
        "model": serde_json::from_str::<Value>(model).unwrap(),
        "estimator": estimator,
        "n-grid": n,
        "delta-grid": delta,
        "trials": trials,
        "master-seed": 3,
        "outputs": out,
    });
    ExperimentConfig::from_json(&v.to_string()).unwrap()
}

fn read_trials(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), TRIAL_COLUMNS);
    r.records().map(|r| r.unwrap()).collect()
}

#[test]
fn zero_noise_realizable_model_has_zero_loss() {
    let tmp = tempfile::tempdir().unwrap();
    let model = r#"{
      "design": { "kind": "gaussian", "covariance": [[1,0],[0,2]] },
      "beta": [1.0, 2.0],
      "noise": { "kind": "zero" }
    }"#;
    let cfg = config(model, json!({"kind": "ols"}), &[2000], &[0.05], 1, tmp.path());
    let m = cfg.model.load(tmp.path()).unwrap();
    let (summary, paths) = run_experiment(&cfg, &m, &GlobalOpts::default(), &RunOptions::default()).unwrap();
    assert_eq!(summary.cells[0].coverage.coverage, 1.0);
    let rows = read_trials(&paths.trials_csv);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][3].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn runs_are_byte_identical_across_repeats_and_thread_counts() {
    let tmp = tempfile::tempdir().unwrap();
    write(tmp.path(), "model.json", GAUSSIAN_MODEL);
    let cfg = json!({
        "model": "model.json",
        "estimator": {"kind": "ols"},
        "n-grid": [1500],
        "delta-grid": [0.05, 0.1],
        "trials": 40,
        "master-seed": 5
    });
    let cfg_path = write(tmp.path(), "cfg.json", &cfg.to_string());
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "4", "4"].iter().enumerate() {
        let out = tmp.path().join(format!("out{k}"));
        let st = bin()
            .args(["--threads", threads, "--out"])
            .arg(&out)
            .arg("run")
            .arg(&cfg_path)
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        outputs.push(fs::read(out.join("trials.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[1], outputs[2]);
}

#[test]
fn summary_coverage_matches_trials_csv_and_bounds_are_reproduced() {
    let tmp = tempfile::tempdir().unwrap();
    let model = r#"{
      "design": { "kind": "axis-spectrum", "eigenvalues": [1.0, 0.5, 0.25] },
      "beta": [1.0, -1.0, 2.0],
      "noise": { "kind": "gaussian", "sigma": 2.0 }
    }"#;
    let cfg = config(model, json!({"kind": "ridge", "lambda": 0.1}), &[50, 300, 1000], &[0.05, 0.1], 60, tmp.path());
    let m = cfg.model.load(tmp.path()).unwrap();
    let (summary, paths) = run_experiment(&cfg, &m, &GlobalOpts::default(), &RunOptions::default()).unwrap();
    let text = fs::read_to_string(&paths.summary_json).unwrap();
    let json: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(json["schema"], SCHEMA);
    // n = 50 is below the ridge sample-size threshold
    assert!(summary.skipped.iter().all(|s| s.n == 50));
    assert!(!summary.skipped.is_empty());

    let rows = read_trials(&paths.trials_csv);
    for cell in &summary.cells {
        let c = &cell.coverage;
        let mine: Vec<_> = rows
            .iter()
            .filter(|r| r[1].parse::<usize>().unwrap() == c.n && r[2].parse::<f64>().unwrap() == c.delta)
            .collect();
        assert_eq!(mine.len(), 60);
        let viol = mine.iter().filter(|r| &r[8] == "1").count();
        assert_eq!(c.coverage, 1.0 - viol as f64 / 60.0);
        let expect = coverage::bound_for(&m, Estimator::Ridge { lambda: 0.1 }, ConditionChoice::Auto, c.n, c.delta).unwrap();
        for r in &mine {
            assert_eq!(r[4].parse::<f64>().unwrap(), expect.total);
            assert_eq!(r[5].parse::<f64>().unwrap(), expect.matrix_error);
            let excess: f64 = r[3].parse().unwrap();
            assert_eq!(&r[8] == "1", excess > expect.total);
        }
    }
}

#[test]
fn all_inapplicable_is_a_config_error_listing_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(GAUSSIAN_MODEL, json!({"kind": "ols"}), &[10, 20], &[0.05], 5, tmp.path());
    let m = cfg.model.load(tmp.path()).unwrap();
    let err = run_experiment(&cfg, &m, &GlobalOpts::default(), &RunOptions::default()).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("n=10") && msg.contains("n=20") && msg.contains("threshold"), "{msg}");
}

#[test]
fn gaussian_coverage_and_mean_against_references() {
    let tmp = tempfile::tempdir().unwrap();
    let (n, delta) = (5000, 0.05);
    let cfg = config(GAUSSIAN_MODEL, json!({"kind": "ols"}), &[n], &[delta], 1000, tmp.path());
    let m = cfg.model.load(tmp.path()).unwrap();
    let (summary, _) = run_experiment(&cfg, &m, &GlobalOpts::default(), &RunOptions::default()).unwrap();
    let cell = &summary.cells[0];
    assert!(cell.coverage.coverage >= 0.95);
    let reference = 3.0 / n as f64;
    assert!((cell.fixed_design_reference - 6e-4).abs() < 1e-15);
    let x = randesign::DMatrix::<f64>::from_fn(n, 3, |i, j| if i % 3 == j { 3f64.sqrt() } else { 0.0 });
    let upper = cell.bound.matrix_error * fixed_design_highprob(&x, 1.0, delta).unwrap();
    let mean = cell.coverage.mean_excess;
    assert!(mean >= reference / 3.0 && mean <= upper, "{mean} vs [{}, {upper}]", reference / 3.0);
}

#[test]
fn dump_matrices_writes_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(GAUSSIAN_MODEL, json!({"kind": "ols"}), &[1200], &[0.05], 2, tmp.path());
    let m = cfg.model.load(tmp.path()).unwrap();
    run_experiment(&cfg, &m, &GlobalOpts::default(), &RunOptions { dump_matrices: true }).unwrap();
    let sigma = fs::read_to_string(tmp.path().join("matrices/sigma.csv")).unwrap();
    assert!(sigma.starts_with("# symmatrix d=3"));
    let back = randesign::SymMatrix::from_csv(&sigma).unwrap();
    assert_eq!(back, *m.sigma());
    assert!(tmp.path().join("matrices/sigma_hat_n1200_trial0.csv").exists());
}

#[test]
fn bounds_records_are_ordered_and_tolerate_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let mut scenarios = vec![
        json!({"theorem": "correct-model", "d": 4, "n": 100, "delta": (-1f64).exp(), "sigma-noise": 1.0, "matrix-error": 2.0}),
        json!({"theorem": "ridge", "spectrum": [1.0, 0.5], "beta": [1.0, 1.0], "lambda": 0.1, "n": 10, "delta": 0.05,
               "sigma-noise": 1.0, "rho-lambda": 1.0, "b-bias-lambda": 0.0, "fourth-moment": 4.0}),
        json!({"theorem": "no-such-theorem"}),
    ];
    for i in 0..97 {
        scenarios.push(json!({"theorem": "correct-model", "d": 2, "n": 1000 + i, "delta": 0.05, "sigma-noise": 1.0,
                              "condition": {"condition": "bounded-leverage", "rho": 1.0}}));
    }
    let records = evaluate_all(&scenarios, tmp.path());
    assert_eq!(records.len(), 100);
    assert!(records.iter().enumerate().all(|(i, r)| r["index"] == i));
    assert_eq!(records[0]["status"], "ok");
    assert!((records[0]["report"]["total"].as_f64().unwrap() - 0.20).abs() < 1e-12);
    assert_eq!(records[1]["status"], "inapplicable");
    assert!(records[1]["reason"].as_str().unwrap().starts_with("sample size"));
    assert_eq!(records[2]["status"], "error");
    assert_eq!(records[99]["report"]["n"], 1096);

    // same through the binary as JSON lines
    let params = write(tmp.path(), "params.json", &json!({ "scenarios": scenarios }).to_string());
    let out = bin().arg("bounds").arg(&params).output().unwrap();
    assert!(out.status.success());
    let lines: Vec<Value> = String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines, records);
    assert_eq!(scenario_values(&fs::read_to_string(&params).unwrap()).unwrap().len(), 100);
}

#[test]
fn verify_tails_examples() {
    let runs = parse_runs(
        r#"[
          {"lemma": "quadratic-form", "dim": 4, "sigma": 1.0, "delta-grid": [0.1], "trials": 10000},
          {"lemma": "quadratic-form", "dim": 4, "sigma": 0.0, "delta-grid": [0.1], "trials": 500},
          {"lemma": "matrix-chernoff", "delta-grid": [0.1, 0.01], "trials": 10000}
        ]"#,
    )
    .unwrap();
    let report = verify_tails(&runs, 1, None).unwrap();
    assert!(report.all_pass);
    assert!(report.rows[0].rate <= 0.1);
    assert_eq!(report.rows[1].rate, 0.0);
    assert!(report.rows[2].rate <= 0.1 && report.rows[3].rate <= 0.01 + 3.0 * report.rows[3].se);
}

#[test]
fn verify_tails_exit_status_reflects_failures() {
    let tmp = tempfile::tempdir().unwrap();
    let ok = write(tmp.path(), "ok.json", r#"{"lemma": "quadratic-form", "delta-grid": [0.1], "trials": 2000}"#);
    let st = bin().arg("verify-tails").arg(&ok).arg("--out").arg(tmp.path()).status().unwrap();
    assert!(st.success());
    let report: Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("tails.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], true);
    let bad = write(tmp.path(), "bad.json", r#"{"lemma": "nope"}"#);
    assert!(!bin().arg("verify-tails").arg(&bad).status().unwrap().success());
}

#[test]
fn sketch_solve_from_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let (rows, d) = (256usize, 3usize);
    let mut a_csv = String::new();
    let mut b_csv = String::new();
    for i in 0..rows {
        let x: Vec<f64> = (0..d).map(|j| ((i * (j + 3)) % 17) as f64 / 17.0 - 0.5).collect();
        let y = x[0] - 2.0 * x[1] + 0.5 * x[2] + if i % 2 == 0 { 0.1 } else { -0.1 };
        a_csv.push_str(&x.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        a_csv.push('\n');
        b_csv.push_str(&format!("{y}\n"));
    }
    let a = write(tmp.path(), "a.csv", &a_csv);
    let b = write(tmp.path(), "b.csv", &b_csv);
    let out = bin()
        .args(["--seed", "4", "sketch-solve", "--n", "200", "--rotation", "orthogonal", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["L_hat", "L_beta", "excess", "bound", "rho_certificate", "n_threshold"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(v["excess"].as_f64().unwrap() >= -1e-12);
    assert!(v["L_hat"].as_f64().unwrap() >= v["L_beta"].as_f64().unwrap() - 1e-12);

    // default rotation is hadamard, which needs a power-of-two row count
    let hadamard = bin()
        .args(["sketch-solve", "--n", "10", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&b)
        .output()
        .unwrap();
    assert!(hadamard.status.success());
    let short = write(tmp.path(), "short.csv", "1\n2\n");
    let err = bin()
        .args(["sketch-solve", "--n", "10", "--a"])
        .arg(&a)
        .arg("--b")
        .arg(&short)
        .output()
        .unwrap();
    assert!(!err.status.success());
}
