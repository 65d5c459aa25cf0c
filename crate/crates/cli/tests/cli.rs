use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn kato() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kato"))
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("kato-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_scenario(name: &str, body: &str) -> PathBuf {
    let p = tmp(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

#[test]
fn list_models_names_every_model() {
    let o = kato().arg("list-models").output().unwrap();
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    for id in ["pure_birth", "birth_death", "amplitude_damping", "cascade", "ssqds"] {
        assert!(text.contains(id), "{id} missing from {text}");
    }
}

#[test]
fn shipped_scenarios_validate() {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenarios_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .collect();
    files.sort();
    assert!(files.len() >= 10);
    let o = kato().arg("validate").args(&files).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_errors_exit_4_with_field() {
    let p = write_scenario("neg.toml", "model = \"pure_birth\"\nrate = \"-k\"\nladder = [10, 20]\n");
    let o = kato().arg("run").arg(&p).output().unwrap();
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("`rate`"));

    let p = write_scenario("unknown.toml", "model = \"pure_birth\"\nrate = \"k\"\nladder = [10, 20]\nbogus = 1\n");
    let o = kato().arg("validate").arg(&p).output().unwrap();
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("bogus"));

    let o = kato().args(["run", "/nonexistent/x.toml"]).output().unwrap();
    assert_eq!(code(&o), 4);
    let o = kato().arg("frobnicate").output().unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn exit_codes_follow_the_verdict() {
    let body = "model = \"pure_birth\"\nrate = \"(k+1)^2\"\nladder = [500, 1000]\n";
    let ok = write_scenario("dis.toml", &format!("{body}expected = \"dishonest\"\n"));
    assert_eq!(code(&kato().arg("run").arg(&ok).arg("--stable-output").output().unwrap()), 0);
    let bad = write_scenario("dis_as_hon.toml", &format!("{body}expected = \"honest\"\n"));
    assert_eq!(code(&kato().arg("run").arg(&bad).output().unwrap()), 3);
    // a short ladder cannot resolve the linear model's slow decay
    let short = write_scenario("short.toml", "model = \"pure_birth\"\nrate = \"k+1\"\nladder = [20, 40]\nexpected = \"honest\"\n");
    assert_eq!(code(&kato().arg("run").arg(&short).output().unwrap()), 2);
    let undeclared = write_scenario("plain.toml", "model = \"pure_birth\"\nrate = \"k+1\"\nladder = [20, 40]\n");
    assert_eq!(code(&kato().arg("run").arg(&undeclared).output().unwrap()), 0);
}

#[test]
fn overrides_and_empty_outputs() {
    let p = write_scenario("echo.toml", "model = \"pure_birth\"\nrate = \"k+1\"\nladder = [20, 40]\noutputs = []\n");
    let o = kato().arg("run").arg(&p).args(["--stable-output", "--lambda", "0.5,2"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["cells"].as_array().unwrap().len(), 0);
    assert_eq!(v["scenario"]["lambda"], serde_json::json!([0.5, 2.0]));
    assert!(v.get("timing").is_none());

    let o = kato().arg("run").arg(&p).args(["--ladder", "40,20"]).output().unwrap();
    assert_eq!(code(&o), 4);
}

#[test]
fn reports_are_deterministic_across_thread_counts() {
    let p = scenarios_dir().join("cascade_quadratic.toml");
    let a = kato().arg("run").arg(&p).args(["--stable-output", "--threads", "1"]).output().unwrap();
    let b = kato().arg("run").arg(&p).args(["--stable-output", "--threads", "3"]).output().unwrap();
    let c = kato().arg("run").arg(&p).arg("--stable-output").env("KATO_THREADS", "2").output().unwrap();
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(a.stdout, c.stdout);
    let timed = kato().arg("run").arg(&p).output().unwrap();
    let v: serde_json::Value = serde_json::from_slice(&timed.stdout).unwrap();
    assert!(v["timing"]["total_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn csv_and_plotdata_write_one_file_per_series() {
    let p = write_scenario("csv.toml", "model = \"pure_birth\"\nrate = \"(k+1)^2\"\nladder = [50, 100]\n");
    let dir = tmp("csv_out");
    let o = kato().arg("run").arg(&p).args(["--format", "csv", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.join("lambda1_N100_norm_decay.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,value"));
    assert_eq!(lines.count(), 100);
    assert!(dir.join("lambda1_N50_dual_power_coord_0.csv").exists());
    assert!(dir.join("report.json").exists());

    let dir = tmp("plot_out");
    let o = kato().arg("run").arg(&p).args(["--format", "plotdata", "--out"]).arg(&dir).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(std::fs::read_to_string(dir.join("lambda1_N50_cesaro.dat")).unwrap().starts_with("# n value\n1 "));

    let o = kato().arg("run").arg(&p).args(["--format", "csv"]).output().unwrap();
    assert_eq!(code(&o), 4);
}
