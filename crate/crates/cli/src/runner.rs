//! Replica-parallel experiment engine: workers own replicas end to end,
//! results are reduced in replica order, so output bytes do not depend on
//! the worker count. Raw observables are append-only CSV; the manifest
//! records the config hash, versions and wall-clock.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::config::ExperimentConfig;

pub const CSV_SCHEMA: &str = "v1";

/// Runs all replicas with per-worker state, preserving replica order.
pub fn parallel_rows<S, T, I, F>(
    replicas: u64,
    workers: usize,
    init: I,
    work: F,
) -> anyhow::Result<Vec<T>>
where
    S: Send,
    T: Send,
    I: Fn() -> S + Sync + Send,
    F: Fn(&mut S, u64) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()?;
    let chunk = (replicas as usize / (workers * 8).max(1)).max(1);
    let rows = pool.install(|| {
        (0..replicas as usize)
            .into_par_iter()
            .with_min_len(chunk)
            .map_init(&init, |state, replica| work(state, replica as u64))
            .collect::<Vec<T>>()
    });
    Ok(rows)
}

pub struct RunArtifacts {
    pub dir: PathBuf,
    pub rows: u64,
    pub wall_s: f64,
}

/// Writes raw.csv (+ header), manifest.json, and the kind-specific extras.
pub fn persist_run(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    header: &str,
    rows: &[String],
    extras: serde_json::Value,
    wall_s: f64,
    workers: usize,
) -> anyhow::Result<RunArtifacts> {
    std::fs::create_dir_all(out_dir)?;
    let hash = cfg.hash();
    let csv_path = out_dir.join("raw.csv");
    {
        let file = std::fs::File::create(&csv_path)?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "# gffperc csv schema {CSV_SCHEMA}")?;
        writeln!(w, "# kind={} config={hash} seed={}", cfg.kind.as_str(), cfg.seed)?;
        writeln!(w, "{header}")?;
        for row in rows {
            writeln!(w, "{row}")?;
        }
        w.flush()?;
    }
    let manifest = serde_json::json!({
        "schema": CSV_SCHEMA,
        "kind": cfg.kind.as_str(),
        "config_hash": hash,
        "config_toml": cfg.to_toml(),
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "rows": rows.len(),
        "workers": workers,
        "wall_seconds": wall_s,
        "crate_version": env!("CARGO_PKG_VERSION"),
        "rng": "philox4x32-10/v1",
        "extras": extras,
    });
    std::fs::write(out_dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(RunArtifacts { dir: out_dir.to_path_buf(), rows: rows.len() as u64, wall_s })
}

/// Loads the manifest of a cached run, if present and hash-compatible.
pub fn load_manifest(dir: &Path, expect_hash: &str) -> Option<serde_json::Value> {
    let text = std::fs::read_to_string(dir.join("manifest.json")).ok()?;
    let v: serde_json::Value = serde_json::from_str(&text).ok()?;
    if v.get("config_hash")?.as_str()? == expect_hash && dir.join("raw.csv").exists() {
        Some(v)
    } else {
        None
    }
}

/// Parses data rows (comment lines and the header row are skipped).
pub fn read_csv_rows(dir: &Path) -> anyhow::Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(dir.join("raw.csv"))?;
    let mut rows = Vec::new();
    let mut header_seen = false;
    for line in text.lines() {
        if line.starts_with('#') || line.is_empty() {
            continue;
        }
        if !header_seen {
            header_seen = true;
            continue;
        }
        rows.push(line.split(',').map(|s| s.to_string()).collect());
    }
    Ok(rows)
}

/// Wall-clock helper for experiment implementations.
pub struct Stopwatch(Instant);

impl Stopwatch {
    pub fn start() -> Stopwatch {
        Stopwatch(Instant::now())
    }

    pub fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}
