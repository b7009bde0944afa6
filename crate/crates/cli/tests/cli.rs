//! CLI contract: exit codes, determinism of persisted runs, manifest
//! integrity, estimate-from-raw, and the graph dump.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gffperc"))
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("gffperc-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn tiny_config(dir: &std::path::Path) -> PathBuf {
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        "kind = \"critical\"\nseed = 9\nreplicas = 60\n\n[window]\ndim = 3\ninterior_radius = 4\nmargin = 2\n\n[critical]\nstats_radius = 4\nprobe_radii = [2, 4]\nzr_threshold = 2\ncapacity_subsample = 6\n",
    )
    .unwrap();
    path
}

#[test]
fn usage_error_is_exit_2() {
    let out = bin().arg("--definitely-not-a-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_criterion_fails_with_1() {
    let out = bin().args(["reproduce", "no-such-criterion"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn unknown_config_key_fails() {
    let dir = tmp_dir("badcfg");
    let path = dir.join("bad.toml");
    std::fs::write(
        &path,
        "kind = \"critical\"\nseed = 1\nreplicas = 5\nmystery = 1\n\n[window]\ndim = 3\ninterior_radius = 4\nmargin = 2\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mystery"), "stderr: {stderr}");
}

#[test]
fn run_is_deterministic_and_manifest_complete() {
    let dir = tmp_dir("determinism");
    let cfg = tiny_config(&dir);
    for (out_name, workers) in [("a", "1"), ("b", "2")] {
        let st = bin()
            .args(["run", "--config"])
            .arg(&cfg)
            .args(["--workers", workers, "--out"])
            .arg(dir.join(out_name))
            .status()
            .unwrap();
        assert!(st.success());
    }
    let a = std::fs::read(dir.join("a/raw.csv")).unwrap();
    let b = std::fs::read(dir.join("b/raw.csv")).unwrap();
    assert_eq!(a, b, "raw CSV must not depend on worker count");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("a/manifest.json")).unwrap())
            .unwrap();
    for key in ["config_hash", "config_toml", "seed", "rows", "wall_seconds", "rng"] {
        assert!(manifest.get(key).is_some(), "manifest missing {key}");
    }
    // Every row carries (config hash, master seed, replica index).
    let csv = String::from_utf8(a).unwrap();
    let hash = manifest["config_hash"].as_str().unwrap();
    let mut replica_seen = 0u64;
    for line in csv.lines().skip(3) {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[0], hash);
        assert_eq!(cols[1], "9");
        assert_eq!(cols[2], replica_seen.to_string());
        replica_seen += 1;
    }
    assert_eq!(replica_seen, 60);
    // Re-fit from raw alone.
    let out = bin().args(["estimate", "--run"]).arg(dir.join("a")).output().unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&out.stdout)).unwrap();
    assert!(summary.get("replicas").is_some());
    // Seed override changes the rows.
    let st = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .args(["--seed", "10", "--out"])
        .arg(dir.join("c"))
        .status()
        .unwrap();
    assert!(st.success());
    let c = std::fs::read_to_string(dir.join("c/raw.csv")).unwrap();
    assert_ne!(csv.lines().nth(3), c.lines().nth(3));
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn replicas_zero_yields_manifest_only() {
    let dir = tmp_dir("zero");
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        "kind = \"onearm\"\nseed = 3\nreplicas = 0\n\n[window]\ndim = 3\ninterior_radius = 4\nmargin = 2\n\n[onearm]\nradii = [2]\n",
    )
    .unwrap();
    let st = bin()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("out"))
        .status()
        .unwrap();
    assert!(st.success());
    let csv = std::fs::read_to_string(dir.join("out/raw.csv")).unwrap();
    // Header lines only, no data rows.
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.join("out/manifest.json").exists());
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn validate_passes_and_dump_graph_is_json() {
    let st = bin().args(["validate", "--seed", "77"]).status().unwrap();
    assert!(st.success(), "validate suites must pass under a perturbed seed");
    let dir = tmp_dir("dump");
    let cfg = tiny_config(&dir);
    let out_file = dir.join("graph.json");
    let st = bin()
        .args(["dump-graph", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(&out_file)
        .status()
        .unwrap();
    assert!(st.success());
    let dump: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    assert_eq!(dump["n_vertices"].as_u64().unwrap(), 17 * 17 * 17);
    assert_eq!(dump["edges"].as_array().unwrap().len() as u64, 3 * 17 * 17 * 16);
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn theta_experiment_ratio_stability() {
    // Order-parameter scan at desk-test scale: the window half-width 48
    // keeps xi(a) = |a|^{-2} below a quarter of the radius for every level.
    let dir = tmp_dir("theta");
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        "kind = \"theta\"\nseed = 5\nreplicas = 700\n\n[window]\ndim = 3\ninterior_radius = 12\nmargin = 4\n\n[theta]\nlevels = [-0.3, -0.4, -0.5]\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("out/summary.json")).unwrap(),
    )
    .unwrap();
    let levels = summary["levels"].as_array().unwrap();
    let mut ratios = Vec::new();
    for lv in levels {
        assert!(lv["reliable"].as_bool().unwrap(), "xi must fit the window: {lv}");
        let theta = lv["theta"].as_f64().unwrap();
        let a = lv["a"].as_f64().unwrap();
        assert!(theta > 0.0 && theta < 1.0);
        ratios.push(theta / a.abs());
    }
    // theta(a)/|a| bounded: the ratio stays within a factor ~2 band here.
    let rmax = ratios.iter().cloned().fold(f64::MIN, f64::max);
    let rmin = ratios.iter().cloned().fold(f64::MAX, f64::min);
    assert!(rmax / rmin < 2.0, "theta/|a| ratios {ratios:?}");
    let _ = std::fs::remove_dir_all(&dir);
}

#[test]
fn gasket_window_experiment_runs() {
    // Critical run on the level-1 gasket x Z^2 product (486 vertices,
    // dense backend): exercises the general-graph sampling path and the
    // graph-spec side of the config.
    let dir = tmp_dir("gasket");
    let path = dir.join("cfg.toml");
    std::fs::write(
        &path,
        "kind = \"critical\"\nseed = 6\nreplicas = 150\n\n[window]\ndim = 3\ninterior_radius = 2\nmargin = 2\ngasket_level = 1\n\n[critical]\nstats_radius = 3\nprobe_radii = [2]\nzr_threshold = 2\ncapacity_subsample = 5\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&path)
        .args(["--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = std::fs::read_to_string(dir.join("out/raw.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3 + 150);
    // Radius scans refuse gasket windows.
    let bad = dir.join("bad.toml");
    std::fs::write(
        &bad,
        "kind = \"onearm\"\nseed = 6\nreplicas = 10\n\n[window]\ndim = 3\ninterior_radius = 2\nmargin = 2\ngasket_level = 1\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(&bad)
        .args(["--out"])
        .arg(dir.join("out2"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let _ = std::fs::remove_dir_all(&dir);
}
