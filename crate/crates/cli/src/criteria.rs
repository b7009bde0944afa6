//! The acceptance-criterion registry: every criterion id maps to a
//! canonical configuration and an evaluator with its tolerances pinned
//! in code. `reproduce` runs (or reuses) the canonical raw data and
//! prints target, measured value, tolerance and verdict.

use std::path::{Path, PathBuf};

use anyhow::Context;

use gffperc::graph::{BuildBudget, Window};
use gffperc::potential::{green_column, Precision};

use crate::config::{ExperimentConfig, Kind};
use crate::experiments;
use crate::runner;
use crate::validate;

pub const CRITERIA: &[&str] = &[
    "sampler-exactness",
    "captail-z3",
    "delta-z3",
    "df-z3",
    "offcrit-z3",
    "vacancy-z3",
    "isom-z3",
    "validate",
    "onearm-z3",
];

pub struct Verdict {
    pub id: String,
    pub pass: bool,
    pub lines: Vec<String>,
    pub wall_s: f64,
}

impl Verdict {
    pub fn print(&self) {
        for line in &self.lines {
            println!("  {line}");
        }
        println!(
            "[{}] {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.wall_s
        );
    }
}

/// Scale factor for replica counts, meant for smoke tests; the acceptance
/// verdicts are defined at scale 1.
pub fn accept_scale() -> f64 {
    std::env::var("GFFPERC_ACCEPT_SCALE")
        .ok()
        .and_then(|s| s.parse::<f64>().ok())
        .filter(|&s| s > 0.0 && s <= 1.0)
        .unwrap_or(1.0)
}

fn scaled(n: u64, scale: f64) -> u64 {
    ((n as f64 * scale) as u64).max(200)
}

/// Default cache root: <workspace>/target/gffperc-runs, overridable.
pub fn default_run_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("GFFPERC_RUN_DIR") {
        return PathBuf::from(dir);
    }
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../target/gffperc-runs")
}

fn base_config(kind: Kind, seed: u64, replicas: u64, dim: usize, r: u32, m: u32) -> ExperimentConfig {
    let toml = format!(
        "kind = \"{}\"\nseed = {seed}\nreplicas = {replicas}\n\n[window]\ndim = {dim}\ninterior_radius = {r}\nmargin = {m}\n",
        kind.as_str()
    );
    ExperimentConfig::from_toml(&toml).expect("canonical config")
}

/// Canonical configuration per criterion (None for config-free criteria).
pub fn canonical_config(id: &str, scale: f64) -> Option<ExperimentConfig> {
    match id {
        // captail and delta share one critical run.
        "captail-z3" | "delta-z3" => {
            let cfg = base_config(Kind::Critical, 20260801, scaled(300_000, scale), 3, 16, 4);
            Some(cfg)
        }
        "df-z3" => {
            let mut cfg = base_config(Kind::Largest, 20260802, scaled(20_000, scale), 3, 48, 2);
            cfg.largest.radii = vec![8, 12, 16, 24, 32, 48];
            Some(cfg)
        }
        "offcrit-z3" => {
            let mut cfg =
                base_config(Kind::Offcritical, 20260803, scaled(500_000, scale), 3, 12, 4);
            cfg.offcritical.levels = vec![0.5, 0.8];
            cfg.offcritical.region_radius = 12;
            Some(cfg)
        }
        "vacancy-z3" => {
            let mut cfg = base_config(Kind::Vacancy, 20260804, scaled(10_000, scale), 3, 8, 4);
            cfg.vacancy.levels_u = vec![0.25, 1.0];
            cfg.vacancy.domain_radius = 8;
            cfg.vacancy.subset_radii = vec![0, 1, 2, 4, 6];
            Some(cfg)
        }
        "isom-z3" => {
            let mut cfg = base_config(Kind::Isom, 20260805, scaled(10_000, scale), 3, 16, 4);
            cfg.isom.u = 0.125;
            cfg.isom.region_radius = 16;
            Some(cfg)
        }
        "onearm-z3" => {
            let mut cfg = base_config(Kind::Onearm, 20260806, scaled(10_000, scale), 3, 32, 2);
            cfg.onearm.radii = vec![8, 16, 32];
            Some(cfg)
        }
        _ => None,
    }
}

/// Runs (or reuses) the canonical data and evaluates one criterion.
pub fn run_criterion(id: &str, root: &Path, workers: Option<usize>) -> anyhow::Result<Verdict> {
    let sw = runner::Stopwatch::start();
    let scale = accept_scale();
    let mut lines = Vec::new();
    if scale < 1.0 {
        lines.push(format!(
            "NOTE: GFFPERC_ACCEPT_SCALE={scale} - reduced scale, not the acceptance verdict"
        ));
    }
    let pass = match id {
        "sampler-exactness" => sampler_exactness(&mut lines)?,
        "captail-z3" | "delta-z3" | "df-z3" | "offcrit-z3" | "vacancy-z3" | "isom-z3"
        | "onearm-z3" => {
            let mut cfg = canonical_config(id, scale).unwrap();
            if let Some(w) = workers {
                cfg.workers = w;
            }
            let dir = ensure_run(&cfg, root)?;
            let summary = experiments::estimate(&dir)?;
            match id {
                "captail-z3" => eval_captail(&summary, &mut lines)?,
                "delta-z3" => eval_delta(&summary, &mut lines)?,
                "df-z3" => eval_df(&summary, &mut lines)?,
                "offcrit-z3" => eval_offcrit(&summary, &mut lines)?,
                "vacancy-z3" => eval_vacancy(&summary, &mut lines)?,
                "isom-z3" => eval_isom(&summary, &mut lines)?,
                "onearm-z3" => eval_onearm(&summary, &mut lines)?,
                _ => unreachable!(),
            }
        }
        "validate" => {
            let mut all = true;
            for report in validate::run_all(20260808) {
                lines.push(format!(
                    "suite {}: {} ({})",
                    report.name,
                    if report.pass { "pass" } else { "FAIL" },
                    report.detail
                ));
                all &= report.pass;
            }
            all
        }
        other => anyhow::bail!("unknown criterion id '{other}'; known: {CRITERIA:?}"),
    };
    Ok(Verdict { id: id.to_string(), pass, lines, wall_s: sw.seconds() })
}

/// Runs the experiment unless a hash-matching cached run exists.
pub fn ensure_run(cfg: &ExperimentConfig, root: &Path) -> anyhow::Result<PathBuf> {
    let dir = root.join(format!("{}-{}", cfg.kind.as_str(), cfg.hash()));
    if runner::load_manifest(&dir, &cfg.hash()).is_some() {
        return Ok(dir);
    }
    experiments::run(cfg, &dir)?;
    Ok(dir)
}

// -----------------------------------------------------------------
// Evaluators; tolerances pinned here.
// -----------------------------------------------------------------

/// Criterion 1: on a 125-vertex window the empirical covariance of
/// 200k samples matches the solver Green function entrywise within
/// 5 standard errors.
fn sampler_exactness(lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let scale = accept_scale();
    let reps = scaled(200_000, scale);
    let w = Window::lattice_box(3, 1, 2, BuildBudget::default())?;
    let n = w.graph.n_vertices();
    anyhow::ensure!(n == 125, "window must have 125 vertices");
    let prec = Precision::build(&w)?;
    let mut sc = prec.make_scratch();
    // Exact covariance.
    let mut g = vec![0.0; n * n];
    for y in 0..n {
        let col = green_column(&w, &prec, &mut sc, y as u32)?;
        for x in 0..n {
            g[x * n + y] = col[x];
        }
    }
    // Empirical covariance.
    let mut acc = vec![0.0; n * n];
    let mut field = vec![0.0; n];
    for rep in 0..reps {
        let mut stream =
            gffperc::rng::StreamId::new(20260810, rep, gffperc::rng::Purpose::Field).stream();
        gffperc::gff::sample_into(&w, &prec, &mut sc, &mut stream, &mut field)?;
        for i in 0..n {
            let fi = field[i];
            let row = &mut acc[i * n..(i + 1) * n];
            for (j, f) in field.iter().enumerate().take(i + 1) {
                row[j] += fi * f;
            }
        }
    }
    let mut worst_sigma = 0.0f64;
    let mut checked = 0u64;
    for i in 0..n {
        for j in 0..=i {
            let est = acc[i * n + j] / reps as f64;
            let gij = g[i * n + j];
            let se = ((g[i * n + i] * g[j * n + j] + gij * gij) / reps as f64).sqrt();
            worst_sigma = worst_sigma.max((est - gij).abs() / se);
            checked += 1;
        }
    }
    lines.push(format!(
        "covariance: {checked} entries over {reps} samples, worst deviation {worst_sigma:.2} sigma (tolerance 5)"
    ));
    Ok(worst_sigma < 5.0)
}

/// Criterion 2: capacity-tail slope -0.50 +- 0.05 over t in [10,100] and
/// rescaled plateau within [0.7, 1.4].
fn eval_captail(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let slope = summary["capacity_slope"]["estimate"]
        .as_f64()
        .context("capacity slope")?;
    let nsamp = summary["capacity_samples"].as_u64().unwrap_or(0);
    let plat_min = summary["capacity_plateau"]["min"].as_f64().context("plateau")?;
    let plat_max = summary["capacity_plateau"]["max"].as_f64().context("plateau")?;
    let slope_ok = (slope + 0.50).abs() <= 0.05;
    let plat_ok = plat_min >= 0.7 && plat_max <= 1.4;
    lines.push(format!(
        "capacity tail slope over [10,100]: {slope:.4} (target -0.50 +- 0.05) [{nsamp} capacity samples]"
    ));
    lines.push(format!(
        "rescaled plateau over [10,100]: [{plat_min:.3}, {plat_max:.3}] (band [0.7, 1.4])"
    ));
    Ok(slope_ok && plat_ok)
}

/// Criterion 3: volume-tail slope -0.20 +- 0.05 over n in [20, 2000].
fn eval_delta(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let slope = summary["volume_slope"]["estimate"].as_f64().context("volume slope")?;
    let se = summary["volume_slope"]["std_error"].as_f64().unwrap_or(f64::NAN);
    lines.push(format!(
        "volume tail slope over [20,2000]: {slope:.4} +- {se:.4} (target -0.20 +- 0.05)"
    ));
    Ok((slope + 0.20).abs() <= 0.05)
}

/// Criterion 4: finite-size slope 2.5 +- 0.15, and the exceedance
/// constant C_r = max_t t P(M > t r^{5/2}) stable in r (ratio <= 2.5).
fn eval_df(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let slope = summary["fss"]["estimate"].as_f64().context("fss slope")?;
    let se = summary["fss"]["std_error"].as_f64().unwrap_or(f64::NAN);
    let slope_ok = (slope - 2.5).abs() <= 0.15;
    lines.push(format!(
        "E[M_r] growth exponent: {slope:.4} +- {se:.4} (target 2.5 +- 0.15)"
    ));
    let exceed = summary["exceedance"].as_array().context("exceedance")?;
    let cs: Vec<f64> = exceed.iter().map(|e| e["c"].as_f64().unwrap()).collect();
    let cmax = cs.iter().cloned().fold(f64::MIN, f64::max);
    let cmin = cs.iter().cloned().fold(f64::MAX, f64::min);
    let stable = cmin > 0.0 && cmax / cmin <= 2.5;
    lines.push(format!(
        "exceedance constant per radius: {:?} (max/min = {:.2}, tolerance 2.5)",
        cs.iter().map(|c| (c * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
        if cmin > 0.0 { cmax / cmin } else { f64::INFINITY }
    ));
    Ok(slope_ok && stable)
}

/// Criterion 5: -log P(n <= |K^a| < inf) linear in n^{1/3} with
/// R^2 >= 0.95 for a in {0.5, 0.8}, with the rate increasing in a.
fn eval_offcrit(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let levels = summary["levels"].as_array().context("levels")?;
    let mut rates = Vec::new();
    let mut all_ok = true;
    for lv in levels {
        let a = lv["a"].as_f64().unwrap();
        let rate = lv["rate"].as_f64().context("rate")?;
        let r2 = lv["r_squared"].as_f64().context("r2")?;
        lines.push(format!(
            "a = {a}: rate {rate:.4} per n^(1/3), R^2 = {r2:.4} (threshold 0.95)"
        ));
        all_ok &= r2 >= 0.95 && rate > 0.0;
        rates.push((a, rate));
    }
    rates.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
    let increasing = rates.windows(2).all(|w| w[1].1 > w[0].1);
    lines.push(format!(
        "rate increases with a^2: {}",
        if increasing { "yes" } else { "NO" }
    ));
    Ok(all_ok && increasing)
}

/// Criterion 6: |empirical vacancy - exp(-u cap(A))| <= 4 standard errors
/// for every subset and intensity.
fn eval_vacancy(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let cells = summary["cells"].as_array().context("cells")?;
    let mut pass = true;
    let mut worst = 0.0f64;
    for cell in cells {
        if cell.get("sigma_distance").is_none() {
            // Domain-level trajectory count bookkeeping line.
            continue;
        }
        let sig = cell["sigma_distance"].as_f64().unwrap();
        worst = worst.max(sig);
        if sig > 4.0 {
            pass = false;
            lines.push(format!(
                "u={} subset {} cap {:.3}: {:.4} vs {:.4} ({sig:.2} sigma) FAIL",
                cell["u"], cell["subset"], cell["capacity"].as_f64().unwrap(),
                cell["p_hat"].as_f64().unwrap(), cell["p_exact"].as_f64().unwrap()
            ));
        }
    }
    lines.push(format!(
        "vacancy law: worst deviation {worst:.2} sigma over all (A,u) cells (tolerance 4)"
    ));
    Ok(pass)
}

/// Criterion 7: CCDF of the largest C_u component lies below the CCDF of
/// the shifted-level largest cluster pointwise within 3 sigma (paired).
fn eval_isom(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let worst = summary["worst_sigma"].as_f64().context("worst sigma")?;
    let n = summary["n"].as_u64().unwrap_or(0);
    lines.push(format!(
        "domination: worst (CCDF_Cu - CCDF_shifted)/se = {worst:.2} over {n} paired replicas (tolerance 3)"
    ));
    Ok(worst <= 3.0)
}

/// Criterion 9: the trend of q-hat(r) over r in {8,16,32} is statistically
/// flat (95% CI of the slope contains zero).
fn eval_onearm(summary: &serde_json::Value, lines: &mut Vec<String>) -> anyhow::Result<bool> {
    let slope = summary["trend_slope"].as_f64().context("trend")?;
    let se = summary["trend_se"].as_f64().context("se")?;
    let qs: Vec<f64> = summary["q"]
        .as_array()
        .context("q")?
        .iter()
        .map(|e| e["q_hat"].as_f64().unwrap())
        .collect();
    lines.push(format!("q-hat per radius: {qs:?}"));
    lines.push(format!(
        "trend slope vs log r: {slope:.4} +- {se:.4} (CI must contain 0)"
    ));
    Ok(slope.abs() <= 1.96 * se)
}
