//! Binary-level tests: subcommand wiring, exit codes and deterministic
//! outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_hyphinf")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("hyphinf_cli_tests").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_string_plant(dir: &Path) -> PathBuf {
    // sigma = 6, v = 1 string plant.
    let json = r#"{
        "n": 2, "k": 1, "p": 1, "l": 1, "m": 1,
        "lambda0": {"kind": "constant", "value": 1.0},
        "E": [[1.0], [0.0]],
        "K": [[-6.0, 0.0], [0.0, -1.0]],
        "L": [[0.0, 6.0], [-1.0, 0.0]],
        "Ky": [[0.0, 6.0]],
        "Ly": [[-6.0, 0.0]],
        "Kz": [[-1.0, 0.0]],
        "Lz": [[0.0, -1.0]]
    }"#;
    let path = dir.join("plant.json");
    fs::write(&path, json).unwrap();
    path
}

fn write_sigma_q(dir: &Path) -> PathBuf {
    let b = 5.0f64.sqrt() / 10.0;
    let c = 9.0 * 5.0f64.sqrt() / 50.0;
    let json = format!(r#"{{"A": [[-0.5]], "B": [[{b}]], "C": [[{c}]], "D": [[0.0]]}}"#);
    let path = dir.join("sigma_q.json");
    fs::write(&path, json).unwrap();
    path
}

#[test]
fn check_passes_on_the_string_plant() {
    let dir = tmp_dir("check_ok");
    let plant = write_string_plant(&dir);
    let status = Command::new(bin())
        .args(["check", "--plant"])
        .arg(&plant)
        .args(["--gamma", "0.2", "--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let check: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("check.json")).unwrap()).unwrap();
    assert_eq!(check["well_posed"], true);
    assert_eq!(check["stabilizable"], true);
    assert_eq!(check["rank12"], true);
    assert_eq!(check["all_pass"], true);
}

#[test]
fn check_fails_on_singular_k() {
    let dir = tmp_dir("check_singular");
    let json = r#"{
        "n": 2, "k": 1, "p": 1, "l": 1, "m": 1,
        "lambda0": {"kind": "constant", "value": 1.0},
        "E": [[1.0], [0.0]],
        "K": [[0.0, 0.0], [0.0, 0.0]],
        "L": [[0.0, 6.0], [-1.0, 0.0]],
        "Ky": [[0.0, 6.0]],
        "Ly": [[-6.0, 0.0]],
        "Kz": [[-1.0, 0.0]],
        "Lz": [[0.0, -1.0]]
    }"#;
    let plant = dir.join("plant.json");
    fs::write(&plant, json).unwrap();
    let status = Command::new(bin())
        .args(["check", "--plant"])
        .arg(&plant)
        .args(["--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let check: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("check.json")).unwrap()).unwrap();
    assert_eq!(check["well_posed"], false);
}

#[test]
fn missing_matrix_key_exits_2() {
    let dir = tmp_dir("check_malformed");
    let plant = dir.join("plant.json");
    fs::write(&plant, r#"{"n": 2, "k": 1, "p": 1, "l": 1, "m": 1}"#).unwrap();
    let status = Command::new(bin())
        .args(["check", "--plant"])
        .arg(&plant)
        .args(["--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_plant_file_exits_2() {
    let dir = tmp_dir("check_missing");
    let status = Command::new(bin())
        .args(["check", "--plant"])
        .arg(dir.join("nope.json"))
        .args(["--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn synthesize_writes_controller_and_report() {
    let dir = tmp_dir("synthesize_ok");
    let plant = write_string_plant(&dir);
    let sigma_q = write_sigma_q(&dir);
    let status = Command::new(bin())
        .args(["synthesize", "--plant"])
        .arg(&plant)
        .args(["--gamma", "0.2", "--sigma-q"])
        .arg(&sigma_q)
        .args(["--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("synthesis_report.json")).unwrap())
            .unwrap();
    assert_eq!(report["condition_a"]["holds"], true);
    assert_eq!(report["condition_c"], true);
    assert!(report["rho_xy"].as_f64().unwrap() <= 1e-14);
    assert!(report["hinf_norm"].as_f64().unwrap() < 0.2);
    let controller: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("controller.json")).unwrap()).unwrap();
    let d_c = controller["D_c"][0][0].as_f64().unwrap();
    assert!((d_c - 1.0 / 6.0).abs() < 1e-10);
}

#[test]
fn synthesize_below_gamma_threshold_exits_1() {
    let dir = tmp_dir("synthesize_low_gamma");
    let plant = write_string_plant(&dir);
    let output = Command::new(bin())
        .args(["synthesize", "--plant"])
        .arg(&plant)
        .args(["--gamma", "0.1", "--out"])
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let report = fs::read_to_string(dir.join("synthesis_report.json")).unwrap();
    assert!(
        report.contains("condition_a"),
        "failed condition named: {report}"
    );
}

#[test]
fn synthesize_rejects_oversized_sigma_q_with_exit_1() {
    let dir = tmp_dir("synthesize_bad_q");
    let plant = write_string_plant(&dir);
    // The tabulated parameter: norm 4.5 >= 0.2.
    let b = 5.0f64.sqrt() / 2.0;
    let c = 9.0 * 5.0f64.sqrt() / 10.0;
    let sigma_q = dir.join("sigma_q.json");
    fs::write(
        &sigma_q,
        format!(r#"{{"A": [[-0.5]], "B": [[{b}]], "C": [[{c}]], "D": [[0.0]]}}"#),
    )
    .unwrap();
    let status = Command::new(bin())
        .args(["synthesize", "--plant"])
        .arg(&plant)
        .args(["--gamma", "0.2", "--sigma-q"])
        .arg(&sigma_q)
        .args(["--out"])
        .arg(&dir)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let report = fs::read_to_string(dir.join("synthesis_report.json")).unwrap();
    assert!(report.contains("sigma_q norm bound"), "{report}");
}

#[test]
fn freqresp_reuses_controller_file() {
    let dir = tmp_dir("freqresp_reuse");
    let plant = write_string_plant(&dir);
    let sigma_q = write_sigma_q(&dir);
    let run = |args: &[&str]| {
        let status = Command::new(bin()).args(args).status().unwrap();
        assert_eq!(status.code(), Some(0));
    };
    run(&[
        "synthesize",
        "--plant",
        plant.to_str().unwrap(),
        "--gamma",
        "0.2",
        "--sigma-q",
        sigma_q.to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
    ]);
    run(&[
        "freqresp",
        "--plant",
        plant.to_str().unwrap(),
        "--gamma",
        "0.2",
        "--controller",
        dir.join("controller.json").to_str().unwrap(),
        "--out",
        dir.to_str().unwrap(),
        "--grid",
        "512",
    ]);
    let csv = fs::read_to_string(dir.join("freqresp.csv")).unwrap();
    assert!(csv.starts_with("theta,omega,norm_G\n"));
    // 512 grid rows + header + supremum row.
    let lines = csv.lines().count();
    assert!((513..=514).contains(&lines), "{lines} lines");
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("freqresp_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["below_gamma"], true);
}

#[test]
fn simulate_writes_traces_with_decay() {
    let dir = tmp_dir("simulate_ok");
    let plant = write_string_plant(&dir);
    let sigma_q = write_sigma_q(&dir);
    let status = Command::new(bin())
        .args(["simulate", "--plant"])
        .arg(&plant)
        .args(["--gamma", "0.2", "--sigma-q"])
        .arg(&sigma_q)
        .args(["--out"])
        .arg(&dir)
        .args(["--steps", "120", "--cells", "64"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let csv = fs::read_to_string(dir.join("sim_trace.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "j,t_start,state_l2_norm,z_l2_1");
    assert_eq!(rows.len(), 121);
    let norm_at = |row: &str| -> f64 { row.split(',').nth(2).unwrap().parse().unwrap() };
    let early = norm_at(rows[30]);
    let late = norm_at(rows[110]);
    assert!(
        late < early * 0.1,
        "geometric decay not visible: {early} -> {late}"
    );
    assert!(dir.join("reconstruction.csv").exists());
}

#[test]
fn string_example_completes_with_flags() {
    let dir = tmp_dir("string_example");
    let output = Command::new(bin())
        .args(["string-example", "--out"])
        .arg(&dir)
        .args(["--grid", "1024", "--cells", "64", "--steps", "80"])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(0), "{output:?}");
    let md = fs::read_to_string(dir.join("string_report.md")).unwrap();
    assert!(md.contains("FLAG"));
    assert!(md.contains("admissibility"));
    assert!(!md.contains("MISMATCH |"));
    for artifact in [
        "plant.json",
        "check.json",
        "controller.json",
        "synthesis_report.json",
        "freqresp.csv",
        "sim_trace.csv",
        "reconstruction.csv",
    ] {
        assert!(dir.join(artifact).exists(), "{artifact} missing");
    }
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir_a = tmp_dir("determinism_a");
    let dir_b = tmp_dir("determinism_b");
    for dir in [&dir_a, &dir_b] {
        let plant = write_string_plant(dir);
        let sigma_q = write_sigma_q(dir);
        for sub in ["synthesize", "freqresp", "simulate"] {
            let status = Command::new(bin())
                .arg(sub)
                .args(["--plant"])
                .arg(&plant)
                .args(["--gamma", "0.2", "--sigma-q"])
                .arg(&sigma_q)
                .args(["--out"])
                .arg(dir)
                .args(["--grid", "512", "--steps", "60", "--cells", "32"])
                .status()
                .unwrap();
            assert_eq!(status.code(), Some(0));
        }
    }
    for name in [
        "controller.json",
        "synthesis_report.json",
        "freqresp.csv",
        "freqresp_summary.json",
        "sim_trace.csv",
        "reconstruction.csv",
    ] {
        let a = fs::read(dir_a.join(name)).unwrap();
        let b = fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn thread_cap_env_var_does_not_change_results() {
    let dir_a = tmp_dir("threads_1");
    let dir_b = tmp_dir("threads_4");
    for (dir, threads) in [(&dir_a, "1"), (&dir_b, "4")] {
        let plant = write_string_plant(dir);
        let sigma_q = write_sigma_q(dir);
        let status = Command::new(bin())
            .args(["freqresp", "--plant"])
            .arg(&plant)
            .args(["--gamma", "0.2", "--sigma-q"])
            .arg(&sigma_q)
            .args(["--out"])
            .arg(dir)
            .args(["--grid", "2048"])
            .env("HYPHINF_THREADS", threads)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
    }
    let a = fs::read(dir_a.join("freqresp.csv")).unwrap();
    let b = fs::read(dir_b.join("freqresp.csv")).unwrap();
    assert_eq!(a, b, "sweep results depend on the thread count");
}
