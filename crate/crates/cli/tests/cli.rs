use std::path::Path;
use std::process::{Command, Output};

const SHORT: &str = r#"{
  "b_ac": 7.3e-4,
  "durations": {"stage2": 0.5, "stage6": 0.5},
  "theta": {"n_samples": 41},
  "sweep": {"tau_e": {"values": [1e-5, 1e-3]}, "tau_n": {"values": [1e-2]}}
}"#;

fn kanesim(args: &[&str], config: Option<&Path>, env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kanesim"));
    cmd.args(args).env_remove("KANESIM_PARALLELISM");
    if let Some(p) = config {
        cmd.arg("--config").arg(p);
    }
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn calibrate_reports_drive_amplitude() {
    let o = kanesim(&["calibrate"], None, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let b = doc["b_ac_t"].as_f64().unwrap();
    assert!(b > 0.0 && b < 1e-2, "{b}");
    assert!(doc["peak_transfer"].as_f64().unwrap() > 0.99);
    assert_eq!(doc["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "bad.json", r#"{"tau_x": 1.0}"#);
    let o = kanesim(&["calibrate"], Some(&bad), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tau_x"));

    let o = kanesim(&["simulate", "--input", "2"], None, &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = kanesim(&["schedule-dump", "--samples", "1"], None, &[]);
    assert_eq!(o.status.code(), Some(2));

    let o = kanesim(&["calibrate"], None, &[("KANESIM_PARALLELISM", "many")]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_files_exit_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = kanesim(&["calibrate"], Some(&dir.path().join("absent.json")), &[]);
    assert_eq!(o.status.code(), Some(4));

    let cfg = write_config(dir.path(), "c.json", SHORT);
    let out = dir.path().join("no_such_dir").join("s.csv");
    let o = kanesim(&["schedule-dump", "--out", out.to_str().unwrap()], Some(&cfg), &[]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn schedule_dump_covers_every_stage() {
    let o = kanesim(&["schedule-dump", "--samples", "101"], None, &[]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "t_us,stage,a1,a2,j,b_ac_t,omega_rad_per_us");
    assert_eq!(rows.len(), 102);
    let stages: std::collections::BTreeSet<&str> = rows[1..].iter().map(|r| r.split(',').nth(1).unwrap()).collect();
    assert_eq!(stages.into_iter().collect::<Vec<_>>(), ["2", "3", "4", "5", "6"]);
    let last: f64 = rows[101].split(',').next().unwrap().parse().unwrap();
    assert!((last - 25.8789).abs() < 1e-3, "{last}");
}

#[test]
fn theta_lists_all_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT);
    let o = kanesim(&["theta"], Some(&cfg), &[]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    for name in ["linear", "sech", "linsin"] {
        let n = text.lines().filter(|l| l.starts_with(&format!("{name},"))).count();
        assert_eq!(n, 41, "{name}");
    }
}

#[test]
fn simulate_writes_results_and_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT);
    let traj = dir.path().join("traj.csv");
    let out = dir.path().join("sim.json");
    let o = kanesim(
        &["simulate", "--input", "01", "--dump-trajectory", traj.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some(&cfg),
        &[],
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    let results = doc["results"].as_array().unwrap();
    assert_eq!(results.len(), 1);
    assert_eq!(results[0]["input"], "01");
    let e = results[0]["error"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&e));
    let rows = std::fs::read_to_string(&traj).unwrap();
    assert!(rows.starts_with("t_us,trace,purity"));
    assert!(rows.lines().count() > 10);
}

#[test]
fn sweep_output_does_not_depend_on_parallelism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", SHORT);
    let a = kanesim(&["sweep", "--parallelism", "1"], Some(&cfg), &[]);
    let b = kanesim(&["sweep"], Some(&cfg), &[("KANESIM_PARALLELISM", "2")]);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(b.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("tau_e_s,tau_n_s,input,error"));
    assert_eq!(text.lines().filter(|l| l.ends_with(",max") || l.contains(",max,")).count(), 2);
}

#[test]
fn integration_failure_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let text = SHORT.replacen(
        "{",
        r#"{"integrator": {"method": "runge_kutta", "rel_tol": 1e-14, "abs_tol": 1e-16, "initial_step": 0.05, "min_step": 0.05, "max_step": 0.05},"#,
        1,
    );
    let cfg = write_config(dir.path(), "c.json", &text);
    let o = kanesim(&["simulate", "--input", "00"], Some(&cfg), &[]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = kanesim(&["sweep"], Some(&cfg), &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("NaN"));
}
