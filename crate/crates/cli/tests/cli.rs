use std::path::Path;
use std::process::{Command, Output};

fn wbary(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wbary"))
        .args(args)
        .env("WBARY_THREADS", "2")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn gaussian_distance_of_shifted_measures() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"mean": [0, 0], "cov": [[1, 0], [0, 4]]}"#);
    let b = write(dir.path(), "b.json", r#"{"mean": [3, 4], "cov": [[1, 0], [0, 4]]}"#);
    let o = wbary(&["w2", "--backend", "gaussian", &a, &b]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(stdout(&o).trim().parse::<f64>().unwrap(), 5.0);
    let j = wbary(&["w2", "--backend", "gaussian", "--json", &a, &b]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&j)).unwrap();
    assert_eq!(v["distance"], 5.0);
}

#[test]
fn csv_floats_carry_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", r#"{"mean": [0], "cov": [[1]]}"#);
    let b = write(dir.path(), "b.json", r#"{"mean": [1], "cov": [[1]]}"#);
    let o = wbary(&["w2", "--backend", "gaussian", "--csv", &a, &b]);
    assert_eq!(stdout(&o), "distance\n1.0000000000000000e0\n");
}

#[test]
fn gen_then_barycenter_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("frames");
    let o = wbary(&[
        "gen",
        "circles",
        "--n",
        "3",
        "--resolution",
        "16",
        "--seed",
        "4",
        "--out",
        frames.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let files: Vec<String> = (0..3)
        .map(|i| frames.join(format!("frame_{i:04}.json")).to_str().unwrap().to_string())
        .collect();
    let mut args = vec!["barycenter", "--backend", "entropic"];
    args.extend(files.iter().map(String::as_str));
    let o = wbary(&args);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["h"], 16);
    let total: f64 = v["weights"]
        .as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn confset_output_is_reproducible_and_written_to_out() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "exp.toml",
        "runs = 5\nsample_sizes = [6]\n[bootstrap]\nreplicates = 100\n",
    );
    let out = dir.path().join("res");
    let args = [
        "confset",
        "--config",
        &cfg,
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    let (a, b) = (wbary(&args), wbary(&args));
    assert!(a.status.success(), "{a:?}");
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("n,alpha,covered_rate,rejected_rate,runs,seed\n"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("confset.json")).unwrap()).unwrap();
    assert_eq!(json["sampling"], "iid");
    assert_eq!(std::fs::read(out.join("confset.csv")).unwrap(), a.stdout);
}

#[test]
fn cpdetect_flags_a_large_commuting_jump() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "cp.toml",
        "[data]\nsource = \"scatter\"\nalternative_shift = 25.0\n[bootstrap]\nreplicates = 100\n",
    );
    let o = wbary(&[
        "cpdetect", "--config", &cfg, "--json", "--h", "5", "--length", "60", "--t-star", "30",
    ]);
    assert!(o.status.success(), "{o:?}");
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let first = v["first_alarm"].as_u64().unwrap();
    assert!((25..=35).contains(&first), "first alarm {first}");
}

#[test]
fn config_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", "runz = 3\n");
    assert_eq!(wbary(&["confset", "--config", &bad]).status.code(), Some(2));
    assert_eq!(
        wbary(&["w2", "missing-a.json", "missing-b.json"]).status.code(),
        Some(2)
    );
    assert_eq!(wbary(&["gen", "hexagon"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_wbary"))
        .args(["gen", "circles", "--resolution", "8"])
        .env("WBARY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failures_exit_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(
        dir.path(),
        "a.json",
        r#"{"h": 1, "w": 4, "weights": [0.7, 0.1, 0.1, 0.1]}"#,
    );
    let b = write(
        dir.path(),
        "b.json",
        r#"{"h": 1, "w": 4, "weights": [0.1, 0.1, 0.1, 0.7]}"#,
    );
    let o = wbary(&[
        "w2",
        "--backend",
        "entropic",
        "--max-iters",
        "1",
        "--tol",
        "1e-14",
        &a,
        &b,
    ]);
    assert_eq!(o.status.code(), Some(3), "{o:?}");
}
