use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use minimax_infer::montecarlo::{generate, DgpSpec};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minimax-infer"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn keys_in_order(text: &str, keys: &[&str]) -> bool {
    // Top-level keys sit at two-space indentation in pretty-printed output.
    let positions: Vec<Option<usize>> = keys.iter().map(|k| text.find(&format!("\n  \"{k}\":"))).collect();
    positions.iter().all(|p| p.is_some()) && positions.windows(2).all(|w| w[0] < w[1])
}

fn top_level_keys(v: &serde_json::Value) -> Vec<String> {
    let mut keys: Vec<String> = v.as_object().unwrap().keys().cloned().collect();
    keys.sort();
    keys
}

const FAST: &str = "draws = 59\nrestarts = 4\n";

#[test]
fn noiseless_fixture_does_not_reject() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("y,x,z1,z2\n");
    for i in 0..40 {
        let x = (i as f64 * 0.37).sin();
        let z1 = (i as f64 * 0.11).cos();
        csv.push_str(&format!("{},{x},{z1},{}\n", 2.0 * x, i % 3));
    }
    let data = write(&dir, "data.csv", &csv);
    let cfg = write(&dir, "run.cfg", FAST);
    let out = run(&[
        "test", "--model", "linear-iv", "--data", s(&data), "--alpha", "0.1", "--seed", "3", "--config", s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    assert!(keys_in_order(
        &text,
        &["statistic", "theta_hat", "critical_value", "p_value", "reject", "draws", "tuning", "seed"]
    ));
    let v = json(&out);
    assert_eq!(
        top_level_keys(&v),
        ["critical_value", "draws", "p_value", "reject", "seed", "statistic", "theta_hat", "tuning"]
    );
    assert_eq!(v["reject"], false);
    assert!(v["statistic"].as_f64().unwrap() < 1e-6);
    assert_eq!(v["draws"].as_array().unwrap().len(), 59);
}

#[test]
fn malformed_csv_exits_2_and_names_line() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "bad.csv", "x,y\n1,2\n3,oops\n");
    let out = run(&["test", "--model", "interval-mean", "--data", s(&data), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 3"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn crossed_interval_rejects() {
    let dir = TempDir::new().unwrap();
    let fixture = generate(&DgpSpec::interval_mean(0.0, 5.0 / 10f64.sqrt(), 100, 12)).unwrap();
    let data = write(&dir, "crossed.csv", &fixture.to_csv_string());
    let cfg = write(&dir, "run.cfg", FAST);
    let out = run(&[
        "test", "--model", "interval-mean", "--data", s(&data), "--alpha", "0.05", "--seed", "9", "--config", s(&cfg),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["reject"], true);
}

#[test]
fn spec_file_model_runs_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let spec = write(
        &dir,
        "model.spec",
        "kind = linear\nslope = 1; 1\noffset = 0, 0\nfamily = unit_ball\nlower = -2\nupper = 2\n",
    );
    let mut csv = String::from("a,b\n");
    for i in 0..30 {
        let e = ((i * 37) % 11) as f64 / 5.0 - 1.0;
        csv.push_str(&format!("{e},{}\n", -0.5 * e));
    }
    let data = write(&dir, "data.csv", &csv);
    let cfg = write(&dir, "run.cfg", FAST);
    let args = [
        "test", "--model", s(&spec), "--data", s(&data), "--variant", "plugin_Ktilde", "--seed", "4", "--config",
        s(&cfg),
    ];
    let first = run(&args);
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, run(&args).stdout);
}

#[test]
fn missing_seed_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "x,y\n0,1\n-1,2\n0.5,0.7\n");
    let out = run(&["test", "--model", "interval-mean", "--data", s(&data)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "x,y\n0,1\n-1,2\n0.5,0.7\n");
    let cfg = write(&dir, "run.cfg", "draws = 39\nlamda_exp = 0.1\n");
    let out = run(&["test", "--model", "interval-mean", "--data", s(&data), "--seed", "1", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lamda_exp"), "{err}");
}

#[test]
fn invalid_tuning_is_rejected_before_running() {
    let dir = TempDir::new().unwrap();
    let data = write(&dir, "data.csv", "x,y\n0,1\n-1,2\n0.5,0.7\n");
    let cfg = write(&dir, "run.cfg", "mu_exp = 0.9\n");
    let out = run(&["test", "--model", "interval-mean", "--data", s(&data), "--seed", "1", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("μ_n"));
}

#[test]
fn cone_distance_on_orthant() {
    let dir = TempDir::new().unwrap();
    let cone = write(&dir, "cone.csv", "g1,g2\n1,0\n0,1\n");
    let point = write(&dir, "point.csv", "1,-2\n");
    let out = run(&["cone-dist", "--cone", s(&cone), "--point", s(&point)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(top_level_keys(&v), ["dual", "gap", "primal"]);
    assert!((v["primal"].as_f64().unwrap() - 2.0).abs() < 1e-12);
    assert!((v["dual"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert!(v["gap"].as_f64().unwrap() <= 1e-6);

    let member = write(&dir, "member.csv", "0.5,3\n");
    let v = json(&run(&["cone-dist", "--cone", s(&cone), "--point", s(&member)]));
    assert_eq!(v["primal"].as_f64().unwrap(), 0.0);
    assert_eq!(v["dual"].as_f64().unwrap(), 0.0);
}

#[test]
fn cone_distance_rejects_bad_files() {
    let dir = TempDir::new().unwrap();
    let cone = write(&dir, "cone.csv", "1,0\n0,1\n");
    let point = write(&dir, "point.csv", "1,-2,3\n");
    assert_eq!(run(&["cone-dist", "--cone", s(&cone), "--point", s(&point)]).status.code(), Some(2));
    let missing = dir.path().join("nope.csv");
    assert_eq!(run(&["cone-dist", "--cone", s(&missing), "--point", s(&point)]).status.code(), Some(2));
}

fn without_runtime(out: &Output) -> serde_json::Value {
    let mut v = json(out);
    v.as_object_mut().unwrap().remove("runtime_seconds");
    v
}

#[test]
fn simulate_is_reproducible_and_schema_is_fixed() {
    let args = [
        "simulate", "--dgp", "interval-mean", "--n", "80", "--reps", "4", "--experiment", "size-power", "--seed", "5",
    ];
    let a = run(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    let text = String::from_utf8_lossy(&a.stdout).to_string();
    let fields = [
        "dgp", "n", "reps", "alpha", "rejection_rate", "ks_distance", "excluded", "seed", "runtime_seconds",
    ];
    assert!(keys_in_order(&text, &fields));
    let mut sorted: Vec<String> = fields.iter().map(|s| s.to_string()).collect();
    sorted.sort();
    assert_eq!(top_level_keys(&json(&a)), sorted);
    assert_eq!(without_runtime(&a), without_runtime(&run(&args)));
    let mut capped = args.to_vec();
    capped.extend(["--workers", "1"]);
    assert_eq!(without_runtime(&a), without_runtime(&run(&capped)));
}

#[test]
fn simulate_null_distribution_reports_ks() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("result.json");
    let out = run(&[
        "simulate", "--dgp", "linear-gmm", "--n", "200", "--reps", "20", "--experiment", "null-dist", "--seed", "8",
        "--out", s(&out_path),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out_path).unwrap()).unwrap();
    let ks = v["ks_distance"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&ks));
}

#[test]
fn simulate_rejects_zero_reps() {
    let out = run(&[
        "simulate", "--dgp", "linear-gmm", "--n", "100", "--reps", "0", "--experiment", "null-dist", "--seed", "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
