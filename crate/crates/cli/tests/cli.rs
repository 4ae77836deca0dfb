use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_safe-nav"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name)
}

fn exec(cmd: &mut Command) -> (i32, String) {
    let Output { status, stdout, stderr } = cmd.output().expect("binary runs");
    let text = String::from_utf8_lossy(&stdout).into_owned() + &String::from_utf8_lossy(&stderr);
    (status.code().expect("exit code"), text)
}

fn write_variant(dir: &Path, name: &str, edit: impl FnOnce(&mut Value)) -> PathBuf {
    let mut doc: Value = serde_json::from_str(&std::fs::read_to_string(fixture("office2d.json")).unwrap()).unwrap();
    edit(&mut doc);
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    path
}

#[test]
fn validate_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = exec(bin().arg("validate").arg(fixture("office2d.json")));
    assert_eq!(code, 0);

    let broken = write_variant(dir.path(), "broken.json", |d| {
        d["ellipsoids"][2]["shape"] = serde_json::json!([[1.0, 0.0], [0.0, -1.0]]);
    });
    let (code, out) = exec(bin().arg("validate").arg(&broken));
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("ellipsoids[2]"), "{out}");

    let (code, _) = exec(bin().arg("validate").arg(dir.path().join("missing.json")));
    assert_eq!(code, 2);

    let garbage = dir.path().join("garbage.json");
    std::fs::write(&garbage, "{ \"name\": ").unwrap();
    let (code, out) = exec(bin().arg("validate").arg(&garbage));
    assert_eq!(code, 2);
    assert!(out.contains("line"), "{out}");
}

#[test]
fn run_timeout_still_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, text) = exec(
        bin()
            .args(["run", "--t-max", "0.05", "--seed", "9", "--out"])
            .arg(&out)
            .arg(fixture("office2d.json")),
    );
    assert_eq!(code, 1, "{text}");
    for f in ["trajectory.csv", "summary.json", "plot.svg"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["outcome"], "timeout");
    assert_eq!(summary["seed"], 9);
    assert_eq!(summary["total_steps"], 50);
}

#[test]
fn run_rejects_bad_step() {
    let dir = tempfile::tempdir().unwrap();
    for dt in ["0", "-1"] {
        let (code, _) = exec(
            bin()
                .args(["run", "--dt", dt, "--out"])
                .arg(dir.path())
                .arg(fixture("office2d.json")),
        );
        assert_eq!(code, 2);
    }
}

#[test]
fn audit_exit_codes() {
    let (code, _) = exec(bin().args(["audit", "--samples", "0"]).arg(fixture("walls3d.json")));
    assert_eq!(code, 2);

    let (code, out) = exec(bin().args(["audit", "--samples", "300"]).arg(fixture("walls3d.json")));
    assert_eq!(code, 0, "{out}");

    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("audit.json");
    let (code, out) = exec(
        bin()
            .args(["audit", "--samples", "300", "--gamma", "50", "--report"])
            .arg(&report)
            .arg(fixture("walls3d.json")),
    );
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("Manifold p = "), "{out}");
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert_eq!(doc["segments"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_rejects_nonpositive_gain() {
    let (code, _) = exec(
        bin()
            .args(["sweep", "--k1", "0,1", "--k2", "1"])
            .arg(fixture("walls3d.json")),
    );
    assert_eq!(code, 2);
}

#[test]
fn sweep_cells_match_single_runs() {
    let dir = tempfile::tempdir().unwrap();
    let sweep = dir.path().join("sweep");
    let (code, out) = exec(
        bin()
            .env("SAFE_NAV_THREADS", "2")
            .args(["sweep", "--k1", "0.5,2", "--k2", "1", "--t-max", "2", "--out"])
            .arg(&sweep)
            .arg(fixture("walls3d.json")),
    );
    assert_eq!(code, 1, "{out}");
    assert!(out.contains("2 of 2 runs failed"), "{out}");
    assert!(sweep.join("overlay.svg").exists());

    for k1 in ["0.5", "2"] {
        let single = dir.path().join(format!("run{k1}"));
        let (code, _) = exec(
            bin()
                .args(["run", "--k1", k1, "--k2", "1", "--t-max", "2", "--out"])
                .arg(&single)
                .arg(fixture("walls3d.json")),
        );
        assert_eq!(code, 1);
        let a = std::fs::read(single.join("trajectory.csv")).unwrap();
        let b = std::fs::read(sweep.join(format!("k1_{k1}_k2_1")).join("trajectory.csv")).unwrap();
        assert!(a == b, "sweep cell k1 = {k1} differs from a lone run");
    }
}

#[test]
fn plot_rerenders_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    exec(
        bin()
            .args(["run", "--t-max", "0.2", "--out"])
            .arg(&out)
            .arg(fixture("walls3d.json")),
    );
    let svg = dir.path().join("xz.svg");
    let (code, text) = exec(
        bin()
            .args(["plot", "--axes", "0,2", "--scenario"])
            .arg(fixture("walls3d.json"))
            .arg("--csv")
            .arg(out.join("trajectory.csv"))
            .arg("--out")
            .arg(&svg),
    );
    assert_eq!(code, 0, "{text}");
    assert!(std::fs::read_to_string(&svg).unwrap().contains("</svg>"));

    let (code, _) = exec(
        bin()
            .args(["plot", "--axes", "0,0", "--scenario"])
            .arg(fixture("walls3d.json"))
            .arg("--csv")
            .arg(out.join("trajectory.csv")),
    );
    assert_eq!(code, 2);
}
