use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ppvrule(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ppvrule"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn simulate(dir: &Path, scenario: &str, n: usize, seed: u64) -> String {
    let path = dir.join(format!("{scenario}-{seed}.csv"));
    let p = path.to_str().unwrap().to_string();
    let o = ppvrule(&[
        "simulate",
        "--scenario",
        scenario,
        "--n",
        &n.to_string(),
        "--seed",
        &seed.to_string(),
        "--out",
        &p,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    p
}

fn fit(data: &str, out: &str, extra: &[&str]) -> Output {
    let mut args = vec![
        "fit",
        "--data",
        data,
        "--alpha",
        "0.04",
        "--prevalence",
        "0.01",
        "--out",
        out,
    ];
    args.extend_from_slice(extra);
    ppvrule(&args)
}

fn metrics(o: &Output) -> Vec<f64> {
    let text = stdout(o);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tpr,fpr,ppv"));
    lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn simulate_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = std::fs::read_to_string(simulate(dir.path(), "linear", 300, 7)).unwrap();
    let o = ppvrule(&["simulate", "--scenario", "linear", "--n", "300", "--seed", "7"]);
    assert_eq!(a, stdout(&o));
    assert!(a.starts_with("x1,x2,D\n"));
    assert_eq!(a.lines().count(), 301);
}

#[test]
fn fit_then_evaluate_reproduces_train_metrics() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "linear", 2500, 3);
    for (method, extra) in [
        ("standard", vec![]),
        ("doolr", vec!["--kappa-grid", "multiplier:21"]),
        ("plugin-logistic", vec![]),
        ("plugin-knn", vec!["--k", "40"]),
    ] {
        let rule = dir.path().join(format!("{method}.json"));
        let rule = rule.to_str().unwrap();
        let mut args = vec!["--method", method];
        args.extend(extra);
        let o = fit(&data, rule, &args);
        assert_eq!(
            o.status.code(),
            Some(0),
            "{method}: {}",
            String::from_utf8_lossy(&o.stderr)
        );

        let doc: Value = serde_json::from_str(&std::fs::read_to_string(rule).unwrap()).unwrap();
        assert_eq!(doc["schema_version"], 1);
        assert_eq!(doc["method"], method);
        assert_eq!(doc["feature_names"], serde_json::json!(["x1", "x2"]));

        let m = metrics(&ppvrule(&["evaluate", "--rule", rule, "--data", &data]));
        let train = &doc["train_metrics"];
        assert_eq!(m[0], train["tpr"].as_f64().unwrap(), "{method}");
        assert_eq!(m[1], train["fpr"].as_f64().unwrap(), "{method}");
        assert_eq!(m[2], train["ppv"].as_f64().unwrap(), "{method}");
    }
}

#[test]
fn doolr_document_records_tuning_values() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "linear", 1000, 5);
    let rule = dir.path().join("d.json");
    let rule = rule.to_str().unwrap();
    let o = fit(
        &data,
        rule,
        &["--method", "doolr", "--kappa-grid", "multiplier:11", "--h", "0.1"],
    );
    assert!(o.status.success());
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(rule).unwrap()).unwrap();
    assert_eq!(doc["kind"], "linear");
    assert_eq!(doc["h"], 0.1);
    let kappa = doc["kappa_hat"].as_f64().unwrap();
    assert!((0.0..1.0).contains(&kappa));
    assert!(doc["eta"].is_null());
}

#[test]
fn it_doolr_uses_the_external_column() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "external-1", 1500, 2);
    assert!(std::fs::read_to_string(&data)
        .unwrap()
        .starts_with("x1,x2,x3,D,external\n"));
    let rule = dir.path().join("it.json");
    let rule = rule.to_str().unwrap();

    let missing = fit(&data, rule, &["--method", "it-doolr"]);
    assert_eq!(missing.status.code(), Some(1));

    let o = fit(
        &data,
        rule,
        &[
            "--method",
            "it-doolr",
            "--external",
            "external",
            "--kappa-grid",
            "multiplier:11",
            "--eta-grid",
            "0,0.5",
        ],
    );
    assert!(o.status.code() == Some(0) || o.status.code() == Some(2));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(rule).unwrap()).unwrap();
    assert_eq!(doc["feature_names"], serde_json::json!(["x1", "x2", "x3"]));
    let eta = doc["eta"].as_f64().unwrap();
    assert!(eta == 0.0 || eta == 0.5);
}

#[test]
fn infeasible_fit_exits_two_and_still_writes() {
    let dir = TempDir::new().unwrap();
    let noise = dir.path().join("noise.csv");
    let rows: String = (0..400)
        .map(|i| format!("{},{}\n", (i * 37) % 11, u8::from(i % 10 == 0)))
        .collect();
    std::fs::write(&noise, format!("x1,D\n{rows}")).unwrap();
    let data = noise.to_str().unwrap().to_string();
    let rule = dir.path().join("hard.json");
    let rule = rule.to_str().unwrap();
    let o = ppvrule(&[
        "fit",
        "--data",
        &data,
        "--method",
        "standard",
        "--alpha",
        "0.5",
        "--prevalence",
        "0.01",
        "--out",
        rule,
    ]);
    assert_eq!(o.status.code(), Some(2));
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(rule).unwrap()).unwrap();
    assert_eq!(doc["feasible"], false);
}

#[test]
fn evaluate_rejects_missing_features() {
    let dir = TempDir::new().unwrap();
    let data = simulate(dir.path(), "linear", 500, 1);
    let rule = dir.path().join("s.json");
    let rule = rule.to_str().unwrap();
    assert!(fit(&data, rule, &["--method", "standard"]).status.success());
    let other = simulate(dir.path(), "external-1", 500, 1);
    let renamed = dir.path().join("renamed.csv");
    let text = std::fs::read_to_string(&data).unwrap().replacen("x1,x2,D", "a,b,D", 1);
    std::fs::write(&renamed, text).unwrap();
    let o = ppvrule(&["evaluate", "--rule", rule, "--data", renamed.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("column 'x1' not found"));
    // Extra columns are ignored.
    assert!(ppvrule(&["evaluate", "--rule", rule, "--data", &other])
        .status
        .success());
}

#[test]
fn malformed_input_exits_one() {
    let dir = TempDir::new().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "x1,D\n0.5,1\nfoo,0\n").unwrap();
    let out = dir.path().join("r.json");
    let o = fit(bad.to_str().unwrap(), out.to_str().unwrap(), &["--method", "standard"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not numeric"));

    std::fs::write(&bad, "x1,D\n0.5,2\n").unwrap();
    let o = fit(bad.to_str().unwrap(), out.to_str().unwrap(), &["--method", "standard"]);
    assert_eq!(o.status.code(), Some(1));

    let o = ppvrule(&["fit", "--data", "x.csv"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(ppvrule(&["--help"]).status.code(), Some(0));
}

#[test]
fn bench_formats_agree() {
    let common = [
        "bench",
        "--scenario",
        "linear",
        "--reps",
        "3",
        "--n-train",
        "800",
        "--n-test",
        "2000",
        "--methods",
        "standard,plugin-logistic",
        "--alphas",
        "0.03,0.04",
    ];
    let csv = ppvrule(&[&common[..], &["--format", "csv"]].concat());
    assert!(csv.status.success());
    let csv = stdout(&csv);
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("scenario,n,alpha,method,tpr_mean,tpr_sd,ppv_mean,ppv_sd,reps,failures")
    );
    assert_eq!(lines.count(), 4);

    let md = stdout(&ppvrule(&[&common[..], &["--format", "markdown"]].concat()));
    assert!(md.starts_with("| scenario | n | alpha | method | TPR | PPV | reps | failures |"));
    assert_eq!(md.lines().count(), 6);

    let again = stdout(&ppvrule(&[&common[..], &["--format", "csv"]].concat()));
    assert_eq!(csv, again);
}
