use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn modkam(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_modkam")).current_dir(dir).args(args).output().expect("spawn modkam")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join(name), body).unwrap();
    name.to_string()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

#[test]
fn dini_exit_codes_follow_convergence() {
    let dir = TempDir::new().unwrap();
    let conv = write(dir.path(), "c.json", r#"{"modulus":{"kind":"log_hoelder","params":{"lambda":2.0}},"k":6,"tau":2.0}"#);
    let div = write(dir.path(), "d.json", r#"{"modulus":{"kind":"log_hoelder","params":{"lambda":1.0}},"k":6,"tau":2.0}"#);
    let o = modkam(dir.path(), &["dini", "--input", &conv]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["integral"]["converges"], serde_json::json!(true));
    assert_eq!(code(&modkam(dir.path(), &["dini", "--input", &div])), 1);
}

#[test]
fn toml_and_json_inputs_agree() {
    let dir = TempDir::new().unwrap();
    let j = write(dir.path(), "k.json", r#"{"modulus":{"kind":"hoelder","params":{"alpha":0.5}},"k":7,"tau":2.2}"#);
    let t = write(
        dir.path(),
        "k.toml",
        "k = 7\ntau = 2.2\n[modulus]\nkind = \"hoelder\"\n[modulus.params]\nalpha = 0.5\n",
    );
    let a = modkam(dir.path(), &["kstar", "--input", &j]);
    let b = modkam(dir.path(), &["kstar", "--input", &t]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "b.json", r#"{"omega":[1.0,1.618],"tau":1.0,"bogus":3}"#);
    assert_eq!(code(&modkam(dir.path(), &["dio", "--input", &bad])), 2);
    assert_eq!(code(&modkam(dir.path(), &["dio"])), 2);
    assert_eq!(code(&modkam(dir.path(), &["no-such-command"])), 2);
    assert_eq!(code(&modkam(dir.path(), &["dio", "--input", "missing.json"])), 2);
    let bad_mod = write(dir.path(), "m.json", r#"{"modulus":{"kind":"hoelder","params":{"alpha":1.5}}}"#);
    assert_eq!(code(&modkam(dir.path(), &["modcheck", "--input", &bad_mod])), 2);
}

#[test]
fn resonant_frequency_reports_witness() {
    let dir = TempDir::new().unwrap();
    let f = write(dir.path(), "r.json", r#"{"omega":[1.0,0.5],"tau":1.0,"k_max":50}"#);
    let o = modkam(dir.path(), &["dio", "--input", &f]);
    assert_eq!(code(&o), 1);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let w: Vec<i64> = serde_json::from_value(v["witness"].clone()).unwrap();
    assert_eq!(w[0] as f64 + 0.5 * w[1] as f64, 0.0);
}

#[test]
fn kam_run_is_deterministic_across_thread_counts() {
    let dir = TempDir::new().unwrap();
    let a = modkam(dir.path(), &["kam-run", "--format", "csv", "--output", "one.csv", "--threads", "1"]);
    let b = modkam(dir.path(), &["kam-run", "--format", "csv", "--output", "four.csv", "--threads", "4"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&b), 0);
    let one = fs::read_to_string(dir.path().join("one.csv")).unwrap();
    assert_eq!(one, fs::read_to_string(dir.path().join("four.csv")).unwrap());
    // header plus one row per step ν = 0..=8
    assert_eq!(one.lines().count(), 10);
}

#[test]
fn jackson_bench_is_seed_deterministic() {
    let dir = TempDir::new().unwrap();
    let f = write(
        dir.path(),
        "j.json",
        r#"{"task":"error","k":2,"alpha_hat":0.5,"cutoff":256,"r_list":[0.125,0.0625,0.03125],"random_phases":true}"#,
    );
    let a = modkam(dir.path(), &["jackson-bench", "--input", &f, "--seed", "7"]);
    let b = modkam(dir.path(), &["jackson-bench", "--input", &f, "--seed", "7"]);
    assert_eq!(code(&a), 0, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
}
