//! Black-box tests of the `priormap` binary. Help texts are compared with
//! files in tests/snapshots; run with `UPDATE_SNAPSHOTS=1` to rewrite them.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_priormap"));
    cmd.env_remove("PRIORMAP_OUT_DIR");
    cmd
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/data/golden")
        .join(name)
}

fn run(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn help_snapshots() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/snapshots");
    let update = std::env::var_os("UPDATE_SNAPSHOTS").is_some();
    let cases: [(&str, &[&str]); 8] = [
        ("help", &["--help"]),
        ("help_ingest", &["ingest", "--help"]),
        ("help_perturb", &["perturb", "--help"]),
        ("help_retrieve", &["retrieve", "--help"]),
        ("help_rasterize", &["rasterize", "--help"]),
        ("help_sim", &["sim", "--help"]),
        ("help_eval", &["eval", "--help"]),
        ("help_bench", &["bench", "--help"]),
    ];
    for (name, args) in cases {
        let text = stdout(&run(bin().args(args)));
        let path = dir.join(format!("{name}.txt"));
        if update {
            std::fs::write(&path, &text).unwrap();
        }
        let want =
            std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(text, want, "help text of {args:?} changed");
    }
}

#[test]
fn eval_identity_is_perfect() {
    let out_dir = tempfile::tempdir().unwrap();
    let scene = data("scene_5_town.txt");
    let out = run(bin()
        .arg("--out")
        .arg(out_dir.path())
        .arg("eval")
        .arg("--pred")
        .arg(&scene)
        .arg("--gt")
        .arg(&scene));
    assert!(stdout(&out).contains("mAP 1.000"), "{}", stdout(&out));
    let json = std::fs::read_to_string(out_dir.path().join("ap_report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(v["map"], 1.0);
}

#[test]
fn perturb_is_reproducible() {
    let runs: Vec<tempfile::TempDir> = (0..2)
        .map(|_| {
            let dir = tempfile::tempdir().unwrap();
            run(bin()
                .args(["--seed", "7", "--out"])
                .arg(dir.path())
                .arg("perturb")
                .arg("--map")
                .arg(data("scene_2_intersection.txt")));
            dir
        })
        .collect();
    for file in ["perturbed.txt", "perturbed.uppm", "before_after.png"] {
        let a = std::fs::read(runs[0].path().join(file)).unwrap();
        let b = std::fs::read(runs[1].path().join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file} differs between runs");
    }
    let original = std::fs::read_to_string(data("scene_2_intersection.txt")).unwrap();
    let perturbed = std::fs::read_to_string(runs[0].path().join("perturbed.txt")).unwrap();
    assert_ne!(original, perturbed);
}

#[test]
fn sim_with_half_coverage_mixes_modes() {
    let dir = tempfile::tempdir().unwrap();
    run(bin().args(["--seed", "3", "--out"]).arg(dir.path()).args([
        "sim",
        "--frames",
        "150",
        "--coverage",
        "0.5",
    ]));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("run_report.json")).unwrap())
            .unwrap();
    let modes: Vec<String> = report["frames"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["mode"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(modes.len(), 150);
    assert_eq!(modes[0], "non_prior");
    assert!(modes.iter().any(|m| m == "temporal_prior"), "{modes:?}");
    assert!(
        modes.iter().any(|m| m == "temporal_map_fusion"),
        "{modes:?}"
    );
    assert!(dir.path().join("latency.json").exists());
}

#[test]
fn usage_error_exits_two() {
    let out = bin()
        .args(["retrieve", "--map", "x.uppm", "--pose", "1,2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("--pose"), "{err}");

    let out = bin().args(["eval", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
}

#[test]
fn runtime_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.txt");
    let out = bin()
        .arg("--out")
        .arg(dir.path())
        .arg("eval")
        .arg("--pred")
        .arg(&missing)
        .arg("--gt")
        .arg(&missing)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.starts_with("error:") && err.contains("nope.txt"),
        "{err}"
    );
}

#[test]
fn out_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let mut cmd = bin();
    cmd.env("PRIORMAP_OUT_DIR", dir.path())
        .arg("rasterize")
        .arg(data("scene_1_lanes.txt"));
    run(&mut cmd);
    assert!(dir.path().join("heatmap.uphm").exists());
    let golden = std::fs::read(data("scene_1_lanes.uphm")).unwrap();
    assert_eq!(
        std::fs::read(dir.path().join("heatmap.uphm")).unwrap(),
        golden
    );
}
