use std::path::Path;
use std::process::{Command, Output};

use heliogen::format::read_dataset;
use heliogen_core::codec::Split;

fn heliogen(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_heliogen"))
        .args(args)
        .current_dir(cwd)
        .env_remove("HELIOGEN_CONFIG")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(heliogen(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(
        heliogen(&["infer", "--bc-id", "3", "--out", "x.pdgd"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        heliogen(&["generate-dataset", "--bcs", "0", "--out", "x.pdgd"], dir.path()).status.code(),
        Some(2)
    );
    assert_eq!(
        heliogen(&["generate-dataset", "--bcs", "343", "--out", "x.pdgd"], dir.path()).status.code(),
        Some(2)
    );
    // --guide needs --lambda.
    assert_eq!(
        heliogen(
            &["infer", "--model", "m", "--bc-id", "1", "--guide", "g.csv", "--out", "o"],
            dir.path()
        )
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn missing_and_corrupt_files_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = heliogen(
        &["train", "--dataset", "missing.pdgd", "--out", "m.pdgm"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.pdgd"));

    std::fs::write(dir.path().join("junk.pdgm"), b"PDGMjunk").unwrap();
    let out = heliogen(
        &["infer", "--model", "junk.pdgm", "--bc-id", "1", "--out", "o.pdgd"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.toml"), "[sa]\nstepz = 3\n").unwrap();
    let out = heliogen(&["--config", "c.toml", "sky", "dump"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sky_dump_lists_every_sample() {
    let dir = tempfile::tempdir().unwrap();
    let out = heliogen(&["sky", "dump", "--out", "sky.csv"], dir.path());
    assert!(out.status.success());
    let text = std::fs::read_to_string(dir.path().join("sky.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("day,hour,altitude_deg,azimuth_deg"));
    assert_eq!(lines.len() - 1, 1487);
}

#[test]
fn small_pipeline_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = heliogen(
        &[
            "generate-dataset", "--bcs", "5", "--steps", "30", "--seed", "4",
            "--out", "ds.pdgd", "--trace-dir", "traces",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let ds = read_dataset(&d.join("ds.pdgd")).unwrap();
    assert_eq!(ds.records.len(), 50);
    assert_eq!(ds.bc_ids().len(), 5);
    assert_eq!(ds.split_bc_ids(Split::Test).len(), 1);
    assert_eq!(std::fs::read_dir(d.join("traces")).unwrap().count(), 5);

    let out = heliogen(
        &[
            "train", "--dataset", "ds.pdgd", "--epochs", "6", "--out", "m.pdgm",
            "--log", "loss.csv", "--checkpoint-every", "3",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.join("m.pdgm.epoch-3").exists());
    assert!(d.join("m.pdgm.epoch-6").exists());
    let loss = std::fs::read_to_string(d.join("loss.csv")).unwrap();
    assert_eq!(loss.lines().count(), 7);

    std::fs::write(d.join("guide.csv"), "5,5,5,5,5\n5,5,5,5,5\n5,5,5,5,5\n5,5,5,5,5\n5,5,5,5,5\n")
        .unwrap();
    let out = heliogen(
        &[
            "infer", "--model", "m.pdgm", "--bc-id", "17", "--restarts", "3",
            "--guide", "guide.csv", "--lambda", "0.5", "--out", "inf.pdgd",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let inf = read_dataset(&d.join("inf.pdgd")).unwrap();
    assert_eq!(inf.records.len(), 3);
    assert!(inf.records.iter().all(|r| r.bc_id == 17));

    std::fs::write(d.join("tall.csv"), "11,5,5,5,5\n5,5,5,5,5\n5,5,5,5,5\n5,5,5,5,5\n5,5,5,5,5\n")
        .unwrap();
    let out = heliogen(
        &[
            "infer", "--model", "m.pdgm", "--bc-id", "17", "--guide", "tall.csv",
            "--lambda", "0.5", "--out", "bad.pdgd",
        ],
        d,
    );
    assert_eq!(out.status.code(), Some(2));

    let out = heliogen(
        &[
            "evaluate", "--model", "m.pdgm", "--dataset", "ds.pdgd", "--out-dir", "ev",
            "--recon-samples", "2", "--random-samples", "3", "--restarts", "3",
        ],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["scatter.csv", "fronts.csv", "hypervolumes.csv", "summary.csv", "boundary_losses.csv"] {
        assert!(d.join("ev").join(f).exists(), "{f}");
    }
    assert!(!d.join("ev/timings.csv").exists());
}
