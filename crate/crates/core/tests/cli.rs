//! End-to-end runs of the binary: exit status contract, report files and
//! reproducibility of the deterministic mode.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anisostokes")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

const SMALL: &str = "[mesh]\nradius = 1.5\nh = 0.4\n\n[solver]\nsamples = 2\n";

#[test]
fn passing_run_exits_zero_with_json_and_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let out = dir.path().join("report.json");
    let o = run(&["converge", "--config", &cfg, "--refine", "2", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["experiment"], "converge");
    assert!(v["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    let csv = std::fs::read_to_string(dir.path().join("report_manufactured.csv")).unwrap();
    assert!(csv.starts_with("level,h,error_l2,rate_l2,error_h1,rate_h1"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "strict.toml", &format!("{SMALL}rtol = 1e-300\n"));
    let out = dir.path().join("r.json");
    let o = run(&["bvp", "--kind", "transmission", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let failed: Vec<_> = v["checks"].as_array().unwrap().iter().filter(|c| c["pass"] == false).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|c| c["measured"].as_f64().unwrap() > 0.0));
}

#[test]
fn config_errors_exit_two_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[mesh]\nradius = 2.0\nrefine = 3\n");
    let o = run(&["infsup", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("refine") && err.contains("line 3"), "{err}");
    let cfg = write_config(dir.path(), "bad2.toml", "[solver]\ntheta = 0\n");
    let o = run(&["ns", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("solver.theta"));
    let o = run(&["converge", "--refine", "1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn deterministic_reruns_are_identical_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.toml", SMALL);
    let body = |name: &str| {
        let out = dir.path().join(name);
        let o = run(&["identities", "--config", &cfg, "--deterministic", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        v["environment"]["timestamp"] = serde_json::Value::Null;
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(body("a.json"), body("b.json"));
}

#[test]
fn shipped_configs_are_valid() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "toml") {
            anisostokes::config::ExperimentConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
