use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn isar_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_isar-sim"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

const SMALL: &str = r#"{
    "scenario": "Combined",
    "n": 12,
    "snapshot_counts": [40, 60],
    "snr_db_list": [5, "noiseless"],
    "trials": 2,
    "phantom": {"debris_count": 3},
    "procedure": {"initial_snapshots": 40, "m_step": 20}
}"#;

/// CSV text with the runtime column dropped.
fn without_runtime(csv: &str) -> String {
    csv.lines()
        .map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn pgm_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "pgm"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn run_scenario_is_reproducible_across_concurrency() {
    let d = tempfile::tempdir().unwrap();
    let sequential = write_config(d.path(), "seq.json", SMALL);
    let concurrent = write_config(
        d.path(),
        "par.json",
        &SMALL.replace("\"trials\": 2,", "\"trials\": 2, \"concurrent\": true,"),
    );
    let a = d.path().join("a");
    let b = d.path().join("b");
    let out = isar_sim(&[
        "run-scenario",
        "--config",
        &sequential,
        "--output-dir",
        a.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = isar_sim(&[
        "run-scenario",
        "--config",
        &concurrent,
        "--output-dir",
        b.to_str().unwrap(),
        "--seed",
        "11",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let csv_a = fs::read_to_string(a.join("metrics.csv")).unwrap();
    let csv_b = fs::read_to_string(b.join("metrics.csv")).unwrap();
    assert!(csv_a.starts_with(
        "solver,snapshots,snr_db,trials,mse_mean,mse_std,rel_l2_mean,runtime_mean_s\n"
    ));
    assert_eq!(csv_a.lines().count(), 1 + 4 * 2 * 2);
    assert_eq!(without_runtime(&csv_a), without_runtime(&csv_b));

    let pgm_a = pgm_files(&a);
    assert_eq!(pgm_a.len(), 4 * 2 * 2 + 1);
    assert!(pgm_a.iter().any(|(n, _)| n == "combined_TV_M60_snr5.pgm"));
    assert_eq!(pgm_a, pgm_files(&b));

    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("metrics_manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["master_seed"], 11);
    assert_eq!(manifest["config_digest"].as_str().unwrap().len(), 64);
    assert!(manifest["tool_version"].is_string());
    assert_eq!(manifest["files"].as_array().unwrap().len(), 1 + pgm_a.len());
}

#[test]
fn trials_override_changes_counts() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", SMALL);
    let out_dir = d.path().join("o");
    let out = isar_sim(&[
        "sweep-snr",
        "--config",
        &cfg,
        "--output-dir",
        out_dir.to_str().unwrap(),
        "--trials",
        "1",
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(out_dir.join("snr_sweep.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[1], "40");
        assert_eq!(fields[3], "1");
    }
}

#[test]
fn config_errors_exit_with_two() {
    let d = tempfile::tempdir().unwrap();
    let too_many = write_config(
        d.path(),
        "m.json",
        r#"{"scenario": "DebrisOnly", "n": 10, "snapshot_counts": [100]}"#,
    );
    let out = isar_sim(&["run-scenario", "--config", &too_many]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("snapshot_counts[0]"));

    let unknown = write_config(
        d.path(),
        "u.json",
        r#"{"scenario": "DebrisOnly", "n": 10, "colour": 1}"#,
    );
    assert_eq!(
        isar_sim(&["benchmark", "--config", &unknown]).status.code(),
        Some(2)
    );

    let missing = d.path().join("missing.json");
    assert_eq!(
        isar_sim(&["physics-check", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );

    let ok = write_config(d.path(), "ok.json", SMALL);
    assert_eq!(
        isar_sim(&["run-scenario", "--config", &ok, "--trials", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(isar_sim(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn failing_cells_exit_with_one() {
    let d = tempfile::tempdir().unwrap();
    // Apertures this sparse come out empty on every retry, so each trial fails.
    let cfg = write_config(
        d.path(),
        "f.json",
        r#"{"scenario": "DebrisOnly", "n": 2, "snapshot_counts": [3], "trials": 1,
            "bernoulli_p": 1e-9, "phantom": {"debris_count": 1},
            "procedure": {"initial_snapshots": 1}}"#,
    );
    let out_dir = d.path().join("o");
    let out = isar_sim(&[
        "run-scenario",
        "--config",
        &cfg,
        "--output-dir",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(String::from_utf8_lossy(&out.stderr).contains("failed"));
    // The report is still written, with only its header.
    let csv = fs::read_to_string(out_dir.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn auxiliary_commands_succeed() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.json", SMALL);
    let out_dir = d.path().join("o");
    let dir = out_dir.to_str().unwrap();

    let out = isar_sim(&["physics-check", "--config", &cfg, "--output-dir", dir]);
    assert!(out.status.success());
    assert_eq!(
        String::from_utf8_lossy(&out.stdout).matches("PASS").count(),
        10
    );

    let out = isar_sim(&["validate-matrix", "--config", &cfg, "--output-dir", dir]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    assert!(out_dir.join("phi_M60.csv").exists());

    let out = isar_sim(&["imaging-procedure", "--config", &cfg, "--output-dir", dir]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("quality met") || stdout.contains("budget exhausted"),
        "{stdout}"
    );
    assert!(out_dir.join("procedure.json").exists());

    let out = isar_sim(&[
        "benchmark",
        "--config",
        &cfg,
        "--output-dir",
        dir,
        "--trials",
        "1",
    ]);
    assert!(out.status.success());
    assert!(out_dir.join("runtime.csv").exists());
}
