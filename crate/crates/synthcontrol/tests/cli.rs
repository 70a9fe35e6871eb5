//! End-to-end tests for the command-line binary.
//!
//! The golden-file test runs the binary against the committed fixture panel
//! in `tests/data/` and compares every artifact byte-for-byte against the
//! files in `tests/golden/`. Regenerate both with:
//!
//! ```text
//! cargo test -p synthcontrol --test cli -- --ignored regenerate_goldens
//! ```

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const ARTIFACTS: [&str; 9] = [
    "weights.csv",
    "path.csv",
    "gaps.csv",
    "placebo_gaps.csv",
    "ratios.csv",
    "summary.txt",
    "path.svg",
    "gaps_placebo.svg",
    "ratios.svg",
];

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn data_csv() -> PathBuf {
    manifest_dir().join("tests/data/basic.csv")
}

fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

fn scratch_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name)
}

fn run_bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_synthcontrol"))
        .args(args)
        .output()
        .expect("binary should spawn")
}

/// The flag set the goldens were produced with.
fn golden_args(out_dir: &Path) -> Vec<String> {
    [
        "--data",
        data_csv().to_str().unwrap(),
        "--treated",
        "treated",
        "--t0",
        "2012",
        "--mspe-cutoff",
        "10",
        "--v-mode",
        "uniform",
        "--placebo-t0",
        "2006",
        "--leave-one-out",
        "--seed",
        "2026",
        "--out-dir",
        out_dir.to_str().unwrap(),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn run_golden_pipeline(out_dir: &Path) -> Output {
    let args = golden_args(out_dir);
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    run_bin(&args)
}

#[test]
fn missing_data_file_exits_1_and_names_the_path() {
    let out = run_bin(&[
        "--data",
        "/no/such/file.csv",
        "--treated",
        "t",
        "--t0",
        "4",
        "--out-dir",
        scratch_dir("missing-data").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("/no/such/file.csv"),
        "stderr should name the missing path, got: {stderr}"
    );
}

#[test]
fn validation_failures_exit_1_and_name_the_rule() {
    let out = run_bin(&[
        "--data",
        data_csv().to_str().unwrap(),
        "--treated",
        "nobody",
        "--t0",
        "2012",
        "--out-dir",
        scratch_dir("bad-treated").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("nobody"), "stderr: {stderr}");
}

#[test]
fn usage_errors_exit_2() {
    let out = run_bin(&[
        "--data",
        data_csv().to_str().unwrap(),
        "--treated",
        "treated",
        "--t0",
        "2012",
        "--donors",
        "donor01",
        "--exclude",
        "donor02",
        "--out-dir",
        scratch_dir("conflict").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_lists_every_flag_and_exits_0() {
    let out = run_bin(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--data",
        "--treated",
        "--t0",
        "--donors",
        "--exclude",
        "--mspe-cutoff",
        "--v-mode",
        "--placebo-t0",
        "--leave-one-out",
        "--out-dir",
        "--seed",
    ] {
        assert!(stdout.contains(flag), "--help should mention {flag}");
    }
}

#[test]
fn end_to_end_artifacts_match_committed_goldens() {
    let out_dir = scratch_dir("golden-check");
    let out = run_golden_pipeline(&out_dir);
    assert!(
        out.status.success(),
        "run failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in ARTIFACTS {
        let got = std::fs::read(out_dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        let want = std::fs::read(golden_dir().join(name))
            .unwrap_or_else(|e| panic!("golden {name}: {e} (regenerate with the ignored test)"));
        assert!(
            got == want,
            "{name} differs from the committed golden (len {} vs {})",
            got.len(),
            want.len()
        );
    }
    // No leftover temp files from the atomic-write path.
    let leftovers: Vec<_> = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with(".tmp-"))
        .collect();
    assert!(leftovers.is_empty(), "leftover temp files: {leftovers:?}");
}

#[test]
fn reruns_are_byte_identical() {
    let dir_a = scratch_dir("rerun-a");
    let dir_b = scratch_dir("rerun-b");
    assert!(run_golden_pipeline(&dir_a).status.success());
    assert!(run_golden_pipeline(&dir_b).status.success());
    for name in ARTIFACTS {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert!(a == b, "{name} differs between identical reruns");
    }
}

/// Rebuilds `tests/data/basic.csv` and every file in `tests/golden/` from
/// the current pipeline. Run deliberately; review the diff before
/// committing.
#[test]
#[ignore]
fn regenerate_goldens() {
    use synthcontrol::fixtures::gen_factor_panel;

    let panel = gen_factor_panel(11, 5, 16, 2, 0.05, &[1.5, 1.5, 1.5, 1.5])
        .expect("fixture parameters are valid");
    assert_eq!(panel.t0, 2012, "golden flags assume t0 = 2012");
    assert_eq!(panel.treated, "treated");

    std::fs::create_dir_all(manifest_dir().join("tests/data")).unwrap();
    std::fs::write(data_csv(), panel.dataset.to_long_csv()).unwrap();

    let out_dir = scratch_dir("golden-regen");
    let out = run_golden_pipeline(&out_dir);
    assert!(
        out.status.success(),
        "pipeline failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    std::fs::create_dir_all(golden_dir()).unwrap();
    for name in ARTIFACTS {
        std::fs::copy(out_dir.join(name), golden_dir().join(name)).unwrap();
    }
}
