//! End-to-end checks of the `qesgd` binary: CSV schema stability, byte-level
//! determinism, exit codes, and the fit/compare subcommands.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn qesgd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qesgd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("qesgd_cli_{tag}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

const SMALL_QESGD: &str = "\
[problem]
kind = ridge
n = 60
d = 5
lambda = 0.02
condition_target = 6
noise = 0.1
seed = 3

[method]
name = qesgd
eta0 = 0.5

[run]
T = 12
seeds = 1,2,3
";

#[test]
fn run_produces_stable_csv_schema() {
    let dir = temp_dir("schema");
    let cfg = write_config(&dir, "exp.ini", SMALL_QESGD);
    let out = qesgd(&["run", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.join("qesgd-seed1.csv")).unwrap();
    let mut lines = csv.lines();
    // Golden header: fixed column set and order.
    assert_eq!(
        lines.next().unwrap(),
        "epoch,inner,eta,K,bits,delta,suboptimality,grad_norm,uplink_bytes,downlink_bytes"
    );
    // Per-epoch rows: t = 0..=12.
    assert_eq!(lines.count(), 13);
    assert!(csv.ends_with('\n'));
    assert!(!csv.contains('\r'));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn identical_runs_are_byte_identical() {
    let dir = temp_dir("determinism");
    let cfg = write_config(&dir, "exp.ini", SMALL_QESGD);
    let out_a = dir.join("a");
    let out_b = dir.join("b");
    assert!(qesgd(&["run", cfg.to_str().unwrap(), "--out-dir", out_a.to_str().unwrap()]).status.success());
    assert!(qesgd(&["run", cfg.to_str().unwrap(), "--out-dir", out_b.to_str().unwrap()]).status.success());
    for name in ["qesgd-seed1.csv", "qesgd-seed2.csv", "qesgd-seed3.csv", "qesgd-summary.csv"] {
        let a = std::fs::read(out_a.join(name)).unwrap();
        let b = std::fs::read(out_b.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn zero_epochs_emits_single_initial_row() {
    let dir = temp_dir("zero_epochs");
    let cfg = write_config(
        &dir,
        "exp.ini",
        &SMALL_QESGD.replace("T = 12", "T = 0").replace("seeds = 1,2,3", "seeds = 1"),
    );
    let out = qesgd(&["run", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("qesgd-seed1.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let fields: Vec<&str> = rows[0].split(',').collect();
    assert_eq!(fields[0], "0");
    // Initial suboptimality is F(w_0) - f_star > 0.
    assert!(fields[6].parse::<f64>().unwrap() > 0.0);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn validation_errors_exit_1() {
    let dir = temp_dir("validation");
    let cfg = write_config(
        &dir,
        "bad.ini",
        &SMALL_QESGD.replace("eta0 = 0.5", "eta0 = 0.5\nbits = 40"),
    );
    let out = qesgd(&["run", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("bits_max = 16"), "{stderr}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn missing_config_exits_2() {
    let out = qesgd(&["run", "/nonexistent/config.ini"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bad_usage_exits_1() {
    let out = qesgd(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fit_subcommand_recovers_power_law() {
    // Synthesize a trajectory with an exact 1/t suboptimality decay and fit
    // it through the binary.
    let dir = temp_dir("fit");
    let mut csv = String::from(
        "epoch,inner,eta,K,bits,delta,suboptimality,grad_norm,uplink_bytes,downlink_bytes\n",
    );
    for t in 0..=60u64 {
        let y = if t == 0 { 1.0 } else { 1.0 / t as f64 };
        csv.push_str(&format!("{t},0,0.5,10,8,0.1,{y},0.1,0,0\n"));
    }
    let path = dir.join("traj.csv");
    std::fs::write(&path, csv).unwrap();
    let out = qesgd(&["fit", path.to_str().unwrap(), "--window", "10", "60"]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope = -1.000000"), "{stdout}");
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn fit_rejects_small_window() {
    let dir = temp_dir("fit_small");
    let mut csv = String::from(
        "epoch,inner,eta,K,bits,delta,suboptimality,grad_norm,uplink_bytes,downlink_bytes\n",
    );
    for t in 0..=10u64 {
        csv.push_str(&format!("{t},0,0.5,10,8,0.1,0.5,0.1,0,0\n"));
    }
    let path = dir.join("traj.csv");
    std::fs::write(&path, csv).unwrap();
    let out = qesgd(&["fit", path.to_str().unwrap(), "--window", "9", "10"]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn compare_reports_downlink_factor() {
    // Run epoch-sgd and qesgd on the same problem, then compare the two
    // summaries: the byte model should show the dense/quantized downlink
    // factor near 32/b for the fixed 8-bit run.
    let dir = temp_dir("compare");
    // A larger dimension keeps the 19-byte codec header from dominating,
    // so the dense/quantized factor sits near (16 + 4d)/(19 + d) ~ 3.5.
    let base = "\
[problem]
kind = ridge
n = 200
d = 100
lambda = 0.02
condition_target = 6
noise = 0.1
seed = 3

[run]
T = 10
seeds = 1,2,3
";
    let cfg_dense = write_config(
        &dir,
        "dense.ini",
        &format!("{base}\n[method]\nname = epoch-sgd\neta0 = 0.5\n"),
    );
    let cfg_quant = write_config(
        &dir,
        "quant.ini",
        &format!("{base}\n[method]\nname = qesgd\neta0 = 0.5\nbits_rule = fixed\nbits = 8\n"),
    );
    let dense_dir = dir.join("dense");
    let quant_dir = dir.join("quant");
    assert!(qesgd(&["run", cfg_dense.to_str().unwrap(), "--out-dir", dense_dir.to_str().unwrap()]).status.success());
    assert!(qesgd(&["run", cfg_quant.to_str().unwrap(), "--out-dir", quant_dir.to_str().unwrap()]).status.success());

    let compare_csv = dir.join("compare.csv");
    let out = qesgd(&[
        "compare",
        dense_dir.join("epoch-sgd-summary.csv").to_str().unwrap(),
        quant_dir.join("qesgd-summary.csv").to_str().unwrap(),
        "--csv",
        compare_csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("| epoch-sgd |"));
    assert!(stdout.contains("| qesgd |"));

    let table = std::fs::read_to_string(&compare_csv).unwrap();
    let qesgd_line = table.lines().last().unwrap();
    let factor: f64 = qesgd_line.split(',').next_back().unwrap().parse().unwrap();
    // Dense downlink over qesgd downlink: near 32/8 = 4, shy of it because
    // of the codec header and the per-epoch anchor broadcasts.
    assert!(
        factor > 2.5 && factor < 4.0,
        "downlink factor {factor} implausible for b = 8"
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn compare_rejects_mismatched_problems() {
    let dir = temp_dir("compare_mismatch");
    let cfg_a = write_config(&dir, "a.ini", SMALL_QESGD);
    let cfg_b = write_config(&dir, "b.ini", &SMALL_QESGD.replace("n = 60", "n = 70"));
    let dir_a = dir.join("a");
    let dir_b = dir.join("b");
    assert!(qesgd(&["run", cfg_a.to_str().unwrap(), "--out-dir", dir_a.to_str().unwrap()]).status.success());
    assert!(qesgd(&["run", cfg_b.to_str().unwrap(), "--out-dir", dir_b.to_str().unwrap()]).status.success());
    let out = qesgd(&[
        "compare",
        dir_a.join("qesgd-summary.csv").to_str().unwrap(),
        dir_b.join("qesgd-summary.csv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn seed_override_and_out_dir_flags() {
    let dir = temp_dir("flags");
    let cfg = write_config(&dir, "exp.ini", SMALL_QESGD);
    let out_dir = dir.join("override");
    let out = qesgd(&[
        "run",
        cfg.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--seed-override",
        "42",
    ]);
    assert!(out.status.success());
    assert!(out_dir.join("qesgd-seed42.csv").exists());
    assert!(!out_dir.join("qesgd-seed1.csv").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn per_step_rows_include_inner_iterates() {
    let dir = temp_dir("per_step");
    let cfg = write_config(
        &dir,
        "exp.ini",
        &SMALL_QESGD
            .replace("T = 12", "T = 2")
            .replace("seeds = 1,2,3", "seeds = 1"),
    );
    let text = std::fs::read_to_string(&cfg).unwrap() + "\n[output]\nper_step = true\n";
    std::fs::write(&cfg, text).unwrap();
    let out = qesgd(&["run", cfg.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()]);
    assert!(out.status.success());
    let csv = std::fs::read_to_string(dir.join("qesgd-seed1.csv")).unwrap();
    let inner_rows = csv
        .lines()
        .skip(1)
        .filter(|l| l.split(',').nth(1).unwrap() != "0")
        .count();
    assert!(inner_rows > 0, "expected per-step rows:\n{csv}");
    std::fs::remove_dir_all(&dir).ok();
}
