use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use inertia_core::netmodel::{load_case, DeviceGains};
use inertia_core::placement::Evaluator;
use inertia_core::response::simulate_system;
use serde_json::Value;

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn case(name: &str) -> PathBuf {
    root().join("cases").join(name)
}

fn config(name: &str) -> PathBuf {
    root().join("cases/configs").join(name)
}

fn inertia(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_inertia")).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(inertia(&["--help"]).status.code(), Some(0));
    assert_eq!(inertia(&["--version"]).status.code(), Some(0));
    assert_eq!(inertia(&["place", "--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(inertia(&[]).status.code(), Some(1));
    assert_eq!(inertia(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(inertia(&["place", "--case", "x.json"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let o = inertia(&[
        "fit-capability",
        "--synthetic",
        "10",
        "--p",
        "3",
        "--h",
        "1",
        "--capacity",
        "1",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_case_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let o = inertia(&["analyze", "--case", "/no/such/case.json", "--out-dir", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/case.json"), "{}", stderr(&o));
}

#[test]
fn malformed_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{\"buses\": 3").unwrap();
    let o = inertia(&["analyze", "--case", s(&bad), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.json"));

    fs::write(&bad, r#"{"weights": {"zeta": 1}, "colour": "blue"}"#).unwrap();
    let o = inertia(&[
        "place",
        "--case",
        s(&case("three_bus.json")),
        "--config",
        s(&bad),
        "--out-dir",
        s(&dir.path().join("p")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    let gains = dir.path().join("gains.json");
    fs::write(&gains, r#"{"devices": [{"inertia": 1, "damping": 0}]}"#).unwrap();
    let o = inertia(&[
        "analyze",
        "--case",
        s(&case("three_bus.json")),
        "--gains",
        s(&gains),
        "--out-dir",
        s(&dir.path().join("g")),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("1 gains for 2 devices"), "{}", stderr(&o));
}

#[test]
fn unstable_case_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = json(&case("three_bus.json"));
    for g in doc["generators"].as_array_mut().unwrap() {
        g["damping"] = serde_json::json!(0.0);
    }
    for l in doc["loads"].as_array_mut().unwrap() {
        l["damping"] = serde_json::json!(0.0);
    }
    let path = dir.path().join("undamped.json");
    fs::write(&path, doc.to_string()).unwrap();
    let o = inertia(&["analyze", "--case", s(&path), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn analyze_matches_integrated_peaks() {
    let dir = tempfile::tempdir().unwrap();
    let o = inertia(&["analyze", "--case", s(&case("three_bus.json")), "--out-dir", s(dir.path()), "--verify"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in [
        "report.csv",
        "report.txt",
        "metrics.json",
        "trajectories/trajectory_out1_dist3.csv",
        "trajectories/trajectory_out2_dist3.csv",
    ] {
        assert!(dir.path().join(f).is_file(), "{f} missing");
    }
    let metrics = json(&dir.path().join("metrics.json"));
    assert_eq!(metrics["verification"]["passed"], Value::Bool(true));

    // Golden peaks from a dense sweep of the integrated response.
    let c = load_case(&fs::read_to_string(case("three_bus.json")).unwrap()).unwrap();
    let sys = Evaluator::new(&c).unwrap().system(&DeviceGains::from_case(&c)).unwrap();
    let oracle = simulate_system(&sys, 200.0, 1e-12).unwrap();
    let peak = |n: usize| {
        let at = |t: f64| {
            let (y, dy, _) = oracle.sample(t);
            [y, dy][n].amax() / TAU
        };
        let coarse = (0..=200_000).map(|k| k as f64 * 1e-3).max_by(|a, b| at(*a).total_cmp(&at(*b))).unwrap();
        (-1000..=1000).map(|k| at((coarse + k as f64 * 1e-6).max(0.0))).fold(0.0, f64::max)
    };
    let (s_inf, r_inf) = (peak(0), peak(1));
    let report = &metrics["report"];
    assert!((report["s_inf_mhz"].as_f64().unwrap() - 1e3 * s_inf).abs() < 1e-5);
    assert!(
        (report["r_inf_mhz_s"].as_f64().unwrap() - 1e3 * r_inf).abs() < 1e-5,
        "{} vs {}",
        report["r_inf_mhz_s"],
        1e3 * r_inf
    );

    let csv = fs::read_to_string(dir.path().join("trajectories/trajectory_out1_dist3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("time_s,freq_dev_hz,rocof_hz_s"));
    assert_eq!(lines.count(), 1001);
    let report_csv = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(report_csv.starts_with("scenario,zeta_min_pct,r_inf_mhz_s,s_inf_mhz,"));
}

#[test]
fn analyze_reads_result_gains() {
    let dir = tempfile::tempdir().unwrap();
    let placed = dir.path().join("placed");
    let o = inertia(&[
        "place",
        "--case",
        s(&case("three_bus.json")),
        "--config",
        s(&config("zeta.json")),
        "--out-dir",
        s(&placed),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let result = placed.join("zeta.result.json");
    let out = dir.path().join("after");
    let o = inertia(&["analyze", "--case", s(&case("three_bus.json")), "--gains", s(&result), "--out-dir", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let placed_row = fs::read_to_string(placed.join("report.csv")).unwrap();
    let zeta_row = placed_row.lines().find(|l| l.starts_with("zeta,")).unwrap();
    let analyzed_row = fs::read_to_string(out.join("report.csv")).unwrap();
    let cells = |l: &str| l.split(',').skip(1).map(String::from).collect::<Vec<_>>();
    assert_eq!(cells(zeta_row), cells(analyzed_row.lines().nth(1).unwrap()));
}

#[test]
fn place_writes_documents_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = inertia(&[
            "place",
            "--case",
            s(&case("three_bus.json")),
            "--config",
            s(&config("zeta.json")),
            "--config",
            s(&config("mean.json")),
            "--out-dir",
            s(&out),
            "--verify",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    };
    let (a, b) = (run("a"), run("b"));
    for f in ["zeta.result.json", "mean.result.json", "zeta.allocation.csv", "zeta.history.csv", "report.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    for sub in ["initial", "zeta", "mean"] {
        assert!(a.join("trajectories").join(sub).join("trajectory_out2_dist3.csv").is_file());
    }
    let doc = json(&a.join("zeta.result.json"));
    assert_eq!(doc["mode"], "placement");
    assert_eq!(doc["verification"]["passed"], Value::Bool(true));
    let history = doc["result"]["history"].as_array().unwrap();
    let accepted: Vec<f64> = history.iter().map(|h| h["accepted_objective"].as_f64().unwrap()).collect();
    assert!(accepted.windows(2).all(|w| w[1] <= w[0]));
    let report = fs::read_to_string(a.join("report.csv")).unwrap();
    let labels: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(labels, ["initial", "zeta", "mean"]);
}

#[test]
fn duplicate_config_names_get_suffixes() {
    let dir = tempfile::tempdir().unwrap();
    let z = config("zeta.json");
    let o = inertia(&[
        "place",
        "--case",
        s(&case("three_bus.json")),
        "--config",
        s(&z),
        "--config",
        s(&z),
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(dir.path().join("zeta.result.json").is_file());
    assert!(dir.path().join("zeta-2.result.json").is_file());
}

#[test]
fn min_capacity_mode_reports_capacity() {
    let dir = tempfile::tempdir().unwrap();
    let o = inertia(&[
        "place",
        "--case",
        s(&case("three_bus.json")),
        "--config",
        s(&config("min_capacity.json")),
        "--min-capacity",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("total capacity") && stdout.contains("bounds met"), "{stdout}");
    let doc = json(&dir.path().join("min_capacity.result.json"));
    assert_eq!(doc["mode"], "min-capacity");
    let total = doc["result"]["total_capacity"].as_f64().unwrap();
    assert!(total > 0.0 && total < 0.2);
    assert_eq!(doc["result"]["bounds_met"], Value::Bool(true));
}

fn fit(dir: &Path, extra: &[&str]) -> Value {
    let mut args = vec![
        "fit-capability",
        "--synthetic",
        "300",
        "--seed",
        "7",
        "--h",
        "4",
        "--capacity",
        "0.5",
        "--out-dir",
        s(dir),
    ];
    args.extend_from_slice(extra);
    let o = inertia(&args);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    json(&dir.join("capability.json"))
}

#[test]
fn fit_capability_dualises_the_ball() {
    let dir = tempfile::tempdir().unwrap();
    let two = fit(&dir.path().join("two"), &["--p", "2", "--resolution", "2000"]);
    assert_eq!(two["constraint"]["q"], 2);
    let c = two["ball"]["c"].as_f64().unwrap();
    assert!((two["constraint"]["bound"].as_f64().unwrap() - 0.5 / c).abs() < 1e-12);
    assert_eq!(two["verification"]["passed"], Value::Bool(true));
    assert_eq!(two["placement_capability"]["c"], two["ball"]["c"]);
    assert!(dir.path().join("two/measurements.csv").is_file());

    // p = 1 dualises to a box with damping limit h times the inertia limit.
    let one = fit(&dir.path().join("one"), &["--p", "1", "--resolution", "2000"]);
    assert_eq!(one["constraint"]["q"], "inf");
    let (m, k) = (one["max_inertia"].as_f64().unwrap(), one["max_damping"].as_f64().unwrap());
    assert!((k - 4.0 * m).abs() < 1e-12);

    // Half coverage keeps the median radius, which is smaller.
    let half = fit(&dir.path().join("half"), &["--p", "2", "--coverage", "0.5", "--resolution", "2000"]);
    assert!(half["ball"]["c"].as_f64().unwrap() < c);
}

#[test]
fn fit_capability_reads_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    fs::write(&path, "time_s,freq_dev_hz,rocof_hz_s\n0,0.1,0.0\n0.1,0.0,0.3\n0.2,-0.05,-0.1\n").unwrap();
    let out = dir.path().join("o");
    let o = inertia(&[
        "fit-capability",
        "--measurements",
        s(&path),
        "--p",
        "inf",
        "--h",
        "1",
        "--capacity",
        "1",
        "--out-dir",
        s(&out),
        "--resolution",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = json(&out.join("capability.json"));
    assert!((doc["ball"]["c"].as_f64().unwrap() - 0.3).abs() < 1e-12);

    fs::write(&path, "time_s,freq_dev_hz\n0,0.1\n0.1,abc\n").unwrap();
    let o = inertia(&[
        "fit-capability",
        "--measurements",
        s(&path),
        "--p",
        "2",
        "--h",
        "1",
        "--capacity",
        "1",
        "--out-dir",
        s(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn verify_runs_all_checks() {
    let dir = tempfile::tempdir().unwrap();
    let o = inertia(&[
        "verify",
        "--case",
        s(&case("three_bus.json")),
        "--systems",
        "3",
        "--seed",
        "2",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("PASS")).count(), 3 + 3 + 4);
    assert!(!stdout.contains("FAIL"));
    let checks = json(&dir.path().join("verify.json"));
    assert_eq!(checks.as_array().unwrap().len(), 10);
}
