//! End-to-end checks of the `hesp` binary: run with flags, run from a config
//! file, rerun determinism, and both export modes.

use std::path::PathBuf;
use std::process::Command;

fn hesp() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hesp"))
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("hesp_cli_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn run_with_flags_writes_traces_and_summary() {
    let dir = tmp_dir("flags");
    let output = hesp()
        .args([
            "run",
            "--benchmark",
            "maxsat10",
            "--driver",
            "hesp-bo",
            "--budget",
            "18",
            "--n0",
            "6",
            "--repeats",
            "2",
            "--seed",
            "5",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("seed 5"), "{stdout}");
    assert!(stdout.contains("summary ->"), "{stdout}");
    assert!(dir.join("maxsat10_hesp-bo_seed5.jsonl").exists());
    assert!(dir.join("maxsat10_hesp-bo_seed6.jsonl").exists());
    assert!(dir.join("maxsat10_hesp-bo_summary.csv").exists());
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn config_file_mirrors_flags_and_flags_win() {
    let dir = tmp_dir("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# demo config\nbenchmark = maxsat10\ndriver = hesp-bo\nbudget = 14\n\
             n0 = 6\nrepeats = 1\nseed = 9\nout = {}\n",
            dir.display()
        ),
    )
    .unwrap();
    // --budget on the command line overrides the file's 14.
    let output = hesp()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--budget", "16"])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let trace = std::fs::read_to_string(dir.join("maxsat10_hesp-bo_seed9.jsonl")).unwrap();
    assert_eq!(trace.lines().count(), 1 + 16, "header plus one record per eval");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn rerun_is_byte_identical() {
    let dir_a = tmp_dir("rerun_a");
    let dir_b = tmp_dir("rerun_b");
    for dir in [&dir_a, &dir_b] {
        let output = hesp()
            .args([
                "run",
                "--benchmark",
                "maxsat10",
                "--driver",
                "hesp-casmo",
                "--budget",
                "16",
                "--n0",
                "6",
                "--repeats",
                "1",
                "--seed",
                "2",
                "--out",
            ])
            .arg(dir)
            .output()
            .unwrap();
        assert!(output.status.success(), "{output:?}");
    }
    let a = std::fs::read(dir_a.join("maxsat10_hesp-casmo_seed2.jsonl")).unwrap();
    let b = std::fs::read(dir_b.join("maxsat10_hesp-casmo_seed2.jsonl")).unwrap();
    assert_eq!(a, b);
    std::fs::remove_dir_all(&dir_a).unwrap();
    std::fs::remove_dir_all(&dir_b).unwrap();
}

#[test]
fn export_convergence_and_trajectory() {
    let dir = tmp_dir("export");
    let output = hesp()
        .args([
            "run",
            "--benchmark",
            "ackley2c",
            "--driver",
            "hesp-bo",
            "--budget",
            "20",
            "--n0",
            "5",
            "--repeats",
            "2",
            "--seed",
            "0",
            "--out",
        ])
        .arg(&dir)
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let t0 = dir.join("ackley2c_hesp-bo_seed0.jsonl");
    let t1 = dir.join("ackley2c_hesp-bo_seed1.jsonl");

    let conv = hesp()
        .args(["export", "--mode", "convergence"])
        .args([&t0, &t1])
        .output()
        .unwrap();
    assert!(conv.status.success());
    let csv = String::from_utf8_lossy(&conv.stdout);
    assert!(csv.starts_with("# schema_version"), "{csv}");
    assert!(csv.contains("ackley2c/hesp-bo"), "{csv}");

    let traj_out = dir.join("traj.csv");
    let traj = hesp()
        .args(["export", "--mode", "trajectory", "--out"])
        .arg(&traj_out)
        .arg(&t0)
        .output()
        .unwrap();
    assert!(traj.status.success(), "{traj:?}");
    let csv = std::fs::read_to_string(&traj_out).unwrap();
    assert!(csv.lines().count() > 2, "{csv}");
    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn invalid_inputs_exit_nonzero() {
    let bad_bench = hesp()
        .args([
            "run",
            "--benchmark",
            "not-a-benchmark",
            "--driver",
            "bo",
            "--budget",
            "10",
        ])
        .output()
        .unwrap();
    assert!(!bad_bench.status.success());
    assert!(String::from_utf8_lossy(&bad_bench.stderr).contains("error"));

    let bad_mode = hesp()
        .args(["export", "--mode", "nonsense", "x.jsonl"])
        .output()
        .unwrap();
    assert!(!bad_mode.status.success());
}
