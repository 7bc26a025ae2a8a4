use std::fs;
use std::path::Path;
use std::process::Command;

use wrist_fic::cli::{ExperimentConfig, LISTING_COLUMNS, TRAJECTORY_COLUMNS};

const BIN: &str = env!("CARGO_BIN_EXE_wrist-fic");

const SMALL: &str = r#"
[[conditions]]
name = "short"
stiffness = 10000.0
targets = [0]

[[conditions]]
name = "soft"
gravity = false
stiffness = [[0.0, 10000.0], [0.6, 1000.0]]
phi = -0.3
targets = [2]
"#;

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("exp.toml");
    fs::write(&p, text).unwrap();
    p
}

fn run(config: &Path, out: &Path, extra: &[&str]) -> std::process::Output {
    Command::new(BIN)
        .arg("run")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .unwrap()
}

#[test]
fn config_lists_explicit_conditions() {
    let cfg = ExperimentConfig::from_toml_str(SMALL, "inline").unwrap();
    let conds = cfg.conditions().unwrap();
    let names: Vec<_> = conds.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["short", "soft"]);
    assert!(!conds[1].schedule.gravity);
    assert_eq!(conds[1].schedule.targets, [2]);
}

#[test]
fn shipped_config_parses() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/quick.toml");
    let cfg = ExperimentConfig::load(&path).unwrap();
    let names: Vec<_> = cfg.conditions().unwrap().into_iter().map(|c| c.name).collect();
    assert_eq!(names, ["twisted", "g_k10_phi0", "g_k1_phi0"]);
}

#[test]
fn run_writes_outputs_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run(&cfg, out, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["short", "soft"] {
        for file in ["trajectory.csv", "listing.csv", "metrics.json"] {
            let x = fs::read(a.join(name).join(file)).unwrap();
            let y = fs::read(b.join(name).join(file)).unwrap();
            assert!(x == y, "{name}/{file} differs between runs");
        }
        let traj = fs::read_to_string(a.join(name).join("trajectory.csv")).unwrap();
        let mut lines = traj.lines();
        let header: Vec<_> = lines.next().unwrap().split(',').collect();
        assert_eq!(header, TRAJECTORY_COLUMNS);
        let row: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert_eq!(row.len(), TRAJECTORY_COLUMNS.len());
        assert_eq!(row[0], 0.0);

        let listing = fs::read_to_string(a.join(name).join("listing.csv")).unwrap();
        let header: Vec<_> = listing.lines().next().unwrap().split(',').collect();
        assert_eq!(header, LISTING_COLUMNS);

        let json: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(a.join(name).join("metrics.json")).unwrap())
                .unwrap();
        assert_eq!(json["condition"], name);
        assert!(json["rmse_z"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn condition_filter_runs_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &["--condition", "soft"]);
    assert!(o.status.success());
    assert!(out.join("soft/metrics.json").exists());
    assert!(!out.join("short").exists());

    let o = run(&cfg, &out, &["--condition", "missing"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing"));
}

#[test]
fn bad_configs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cases = [
        ("[body]\nmass = -1.0\n", "body.mass"),
        ("[sim]\nsubsteps = 3\n", "substeps"),
        ("[[conditions]]\nname = \"x\"\nstiffness = 0.0\n", "conditions.x"),
        ("seed = \"many\"\n", "seed"),
    ];
    for (text, needle) in cases {
        let cfg = write_config(dir.path(), text);
        let o = run(&cfg, &out, &[]);
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(!o.status.success(), "accepted: {text}");
        assert!(err.contains(needle), "{text}: {err}");
    }
    let o = run(&dir.path().join("absent.toml"), &out, &[]);
    assert!(!o.status.success());
}

#[test]
fn check_flag_passes() {
    let o = Command::new(BIN).args(["--check", "--seed", "7"]).output().unwrap();
    assert!(o.status.success());
    let text = String::from_utf8_lossy(&o.stdout);
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS")).count(), 5, "{text}");
}
