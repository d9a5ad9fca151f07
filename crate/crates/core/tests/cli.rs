use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], out_env: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_benign-lab"));
    cmd.args(args).env_remove("BENIGN_LAB_OUT");
    if let Some(dir) = out_env {
        cmd.env("BENIGN_LAB_OUT", dir);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn bad_config_exits_2() {
    let o = bin(&["estimate", "--n", "100", "--spectrum", "spike(2, 0.001, 50)", "--dry-run"], None);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "n = 10\nspectrum = \"isotropic(40)\"\nsigma = 1\ntrials = 2\nbogus = 1\n").unwrap();
    let o = bin(&["estimate", "--config", path.to_str().unwrap()], None);
    assert_eq!(code(&o), 2);

    let o = bin(&["sweep", "--axis", "n", "--values", "20,10,30", "--spectrum", "isotropic(100)", "--dry-run"], None);
    assert_eq!(code(&o), 2);

    let o = bin(&["verify", "--only", "42"], None);
    assert_eq!(code(&o), 2);
}

#[test]
fn divergence_exits_3() {
    let o = bin(&["flow", "--n", "5", "--p", "12", "--m", "4", "--step-scale", "1e12"], None);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn verify_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tol.toml");
    let strict = include_str!("../tolerances.toml").replace("residual_rel = 1e-8", "residual_rel = 0.0");
    std::fs::write(&path, strict).unwrap();
    let o = bin(&["verify", "--only", "1", "--tolerances", path.to_str().unwrap()], None);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stdout).starts_with("[FAIL]   1"));

    let o = bin(&["verify", "--only", "4,9"], None);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        &["sweep", "--axis", "p", "--values", "200,400", "--n", "20", "--spectrum", "spike(1, 0.01, 200)", "--dry-run"],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.contains("p = 400"));
    assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        &[
            "sweep", "--axis", "sigma", "--values", "0.25,0.5", "--n", "20", "--spectrum", "spike(1, 0.01, 200)",
            "--trials", "3", "--plot", "risk_exact,noise_term",
        ],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.starts_with("sigma,n,p,k,trials,risk_exact,risk_exact_se"));
    let svg = std::fs::read_to_string(dir.path().join("sweep.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);

    let o = bin(&["estimate", "--n", "20", "--spectrum", "isotropic(60)", "--trials", "4"], Some(dir.path()));
    assert_eq!(code(&o), 0);
    let trials = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 5);
}

#[test]
fn estimate_json_is_seeded() {
    let run = || {
        let o = bin(
            &["estimate", "--n", "20", "--spectrum", "spike(2, 0.01, 300)", "--trials", "5", "--seed", "9", "--json"],
            None,
        );
        assert_eq!(code(&o), 0);
        serde_json::from_slice::<serde_json::Value>(&o.stdout).unwrap()
    };
    let a = run();
    assert_eq!(a, run());
    assert_eq!(a["risk_exact"]["count"], 5);
}

#[test]
fn sweep_failure_keeps_partial_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin(
        &["sweep", "--axis", "b", "--values", "1,1000", "--n", "20", "--spectrum", "spike(2, 0.01, 300)", "--trials", "2"],
        Some(dir.path()),
    );
    assert_eq!(code(&o), 2);
    let partial = std::fs::read_to_string(dir.path().join("sweep.partial.csv")).unwrap();
    assert_eq!(partial.lines().count(), 2);
}
