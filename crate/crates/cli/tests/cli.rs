use std::path::Path;
use std::process::{Command, Output};

use poisson_capacity::export::{import_records, Format};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poisson-capacity"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_below_threshold_is_binary() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("a3.csv");
    let out = run(&["solve", "--amplitude", "3", "--dark-current", "0", "--output", path_str(&file)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("capacity"));
    assert!(stdout.contains("duality gap"));
    assert!(stdout.contains("2 points"));

    let records = import_records(&file, Format::Csv).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].n_points, 2);
    assert_eq!(records[0].points, vec![0.0, 3.0]);
    assert!(records[0].converged);
    assert_eq!(std::fs::read_to_string(&file).unwrap().lines().count(), 2);
}

#[test]
fn solve_at_zero_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("zero.json");
    let out = run(&["solve", "--amplitude", "0", "--output", path_str(&file), "--format", "json"]);
    assert_eq!(code(&out), 0);
    let records = import_records(&file, Format::Json).unwrap();
    assert_eq!(records[0].capacity_nats, 0.0);
    assert_eq!(records[0].points, vec![0.0]);
    assert_eq!(records[0].probs, vec![1.0]);
}

#[test]
fn bits_flag_changes_the_report() {
    let nats = String::from_utf8(run(&["solve", "--amplitude", "1"]).stdout).unwrap();
    let bits = String::from_utf8(run(&["solve", "--amplitude", "1", "--bits"]).stdout).unwrap();
    assert!(nats.contains(" nats"));
    assert!(bits.contains(" bits"));
}

#[test]
fn invalid_arguments_exit_with_one() {
    for args in [
        vec!["solve", "--amplitude", "3", "--epsilon", "-1"],
        vec!["solve", "--amplitude", "-3"],
        vec!["solve", "--amplitude", "3", "--dark-current", "-0.5"],
        vec!["solve", "--amplitude", "nan"],
        vec!["solve"],
        vec!["solve", "--amplitude", "3", "--format", "xml"],
        vec!["sweep", "--sweep", "amplitude", "--fixed", "0", "--grid", "1:4:3,log"],
        vec!["sweep", "--sweep", "amplitude", "--fixed", "0", "--grid", "0:4:3,log", "--output", "x.csv"],
        vec!["frobnicate"],
    ] {
        let out = run(&args);
        assert_eq!(code(&out), 1, "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn help_exits_cleanly() {
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["solve", "--help"])), 0);
}

#[test]
fn non_convergence_exits_with_two_and_still_writes() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("cut.csv");
    let out = run(&[
        "solve",
        "--amplitude",
        "16",
        "--max-outer-iterations",
        "1",
        "--output",
        path_str(&file),
    ]);
    assert_eq!(code(&out), 2);
    let records = import_records(&file, Format::Csv).unwrap();
    assert!(!records[0].converged);
    assert_eq!(records[0].outer_iterations, 1);
}

fn strip_timing(manifest: &Path) -> serde_json::Value {
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(manifest).unwrap()).unwrap();
    assert!(value["timing"]["started_unix"].is_number());
    value.as_object_mut().unwrap().remove("timing");
    value
}

#[test]
fn sweeps_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run_once = |name: &str| {
        let file = dir.path().join(name);
        let out = run(&[
            "sweep",
            "--sweep",
            "amplitude",
            "--fixed",
            "0",
            "--grid",
            "1:6:5,log",
            "--output",
            path_str(&file),
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        file
    };
    let a = run_once("a.csv");
    let b = run_once("b.csv");
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let ma = strip_timing(&dir.path().join("a.manifest.json"));
    let mut mb = strip_timing(&dir.path().join("b.manifest.json"));
    mb["output"] = ma["output"].clone();
    assert_eq!(ma, mb);
    assert_eq!(ma["grid"].as_array().unwrap().len(), 5);

    let records = import_records(&a, Format::Csv).unwrap();
    let amplitudes: Vec<f64> = records.iter().map(|r| r.amplitude).collect();
    assert_eq!(amplitudes.first(), Some(&1.0));
    assert_eq!(amplitudes.last(), Some(&6.0));
    assert!(amplitudes.windows(2).all(|w| w[0] < w[1]));
    assert!(records.windows(2).all(|w| w[0].capacity_nats <= w[1].capacity_nats + 1e-6));
}

#[test]
fn dark_current_sweep_in_json_with_plot_script() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("lam.json");
    let out = run(&[
        "sweep",
        "--sweep",
        "dark-current",
        "--fixed",
        "4",
        "--grid",
        "0:10:3,lin",
        "--output",
        path_str(&file),
        "--format",
        "json",
        "--plot-script",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let records = import_records(&file, Format::Json).unwrap();
    let lambdas: Vec<f64> = records.iter().map(|r| r.dark_current).collect();
    assert_eq!(lambdas, vec![0.0, 5.0, 10.0]);
    assert!(records.iter().all(|r| r.amplitude == 4.0 && r.converged));
    assert!(records.windows(2).all(|w| w[1].capacity_nats <= w[0].capacity_nats + 1e-6));
    let script = std::fs::read_to_string(dir.path().join("lam.plot.py")).unwrap();
    assert!(script.contains("lam.json"));
    assert!(script.contains("dark_current"));
    assert!(dir.path().join("lam.manifest.json").exists());
}

#[test]
fn single_value_grid_matches_solve() {
    let dir = tempfile::tempdir().unwrap();
    let swept = dir.path().join("one.csv");
    let solved = dir.path().join("solo.csv");
    let out = run(&[
        "sweep", "--sweep", "amplitude", "--fixed", "1", "--grid", "5:5:1", "--output", path_str(&swept),
    ]);
    assert_eq!(code(&out), 0);
    let out = run(&["solve", "--amplitude", "5", "--dark-current", "1", "--output", path_str(&solved)]);
    assert_eq!(code(&out), 0);
    assert_eq!(std::fs::read(&swept).unwrap(), std::fs::read(&solved).unwrap());
}
