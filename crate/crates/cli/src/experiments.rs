//! The concrete experiment kinds. Each one builds its window resources
//! once, runs replicas in parallel, and persists raw observables plus a
//! manifest; `estimate` re-derives the summary from the raw CSV alone.

use std::path::Path;

use anyhow::Context;

use gffperc::estimators::{self, TailCurve};
use gffperc::gff::{self, RegionSampler};
use gffperc::graph::{ball, BuildBudget, Vertex, Window};
use gffperc::interlacements::{self, StopRule};
use gffperc::percolation::{self, EdgeOpening, LabelScratch, PercScratch};
use gffperc::potential::{self, Precision, RegionTable, Scratch};
use gffperc::rng::{Purpose, StreamId};

use crate::config::{ExperimentConfig, Kind};
use crate::runner::{self, Stopwatch};

/// Certified capacity floors are recorded only when they clear the top of
/// the capacity estimation window (t = 100) with margin; the tail curve
/// is then exact on every threshold up to 100.
pub const CAP_FLOOR_MIN: f64 = 110.0;

pub fn build_window(cfg: &ExperimentConfig) -> anyhow::Result<Window> {
    let budget = BuildBudget { max_vertices: cfg.window.max_vertices };
    let w = match cfg.window.gasket_level {
        Some(level) => gffperc::graph::build_gasket_product_raw(
            level,
            cfg.window.interior_radius,
            cfg.window.margin,
            budget,
        )?,
        None => Window::lattice_box(
            cfg.window.dim,
            cfg.window.interior_radius,
            cfg.window.margin,
            budget,
        )?,
    };
    Ok(w)
}

/// Runs the experiment and persists everything under `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> anyhow::Result<runner::RunArtifacts> {
    cfg.validate()?;
    let workers = cfg.effective_workers();
    match cfg.kind {
        Kind::Critical => run_critical(cfg, out_dir, workers),
        Kind::Offcritical => run_offcritical(cfg, out_dir, workers),
        Kind::Largest => run_largest(cfg, out_dir, workers),
        Kind::Onearm => run_onearm(cfg, out_dir, workers),
        Kind::Vacancy => run_vacancy(cfg, out_dir, workers),
        Kind::Isom => run_isom(cfg, out_dir, workers),
        Kind::Theta => run_theta(cfg, out_dir, workers),
    }
}

/// Re-derives summary.json (and plot CSVs) from the persisted raw data.
pub fn estimate(dir: &Path) -> anyhow::Result<serde_json::Value> {
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json"))?)?;
    let kind = manifest["kind"].as_str().context("manifest kind")?;
    let summary = match kind {
        "critical" => summarize_critical(dir, &manifest)?,
        "offcritical" => summarize_offcritical(dir, &manifest)?,
        "largest" => summarize_largest(dir, &manifest)?,
        "onearm" => summarize_onearm(dir, &manifest)?,
        "vacancy" => summarize_vacancy(dir, &manifest)?,
        "isom" => summarize_isom(dir, &manifest)?,
        "theta" => summarize_theta(dir, &manifest)?,
        other => anyhow::bail!("unknown kind {other}"),
    };
    std::fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}

// ---------------------------------------------------------------------
// critical
// ---------------------------------------------------------------------

struct CriticalState {
    scratch: Scratch,
    field: Vec<f64>,
    slots: Vec<f64>,
    perc: PercScratch,
    label: LabelScratch,
}

fn run_critical(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let window = build_window(cfg)?;
    let prec = Precision::build(&window)?;
    let ccfg = cfg.critical.clone();
    anyhow::ensure!(
        ccfg.stats_radius <= window.half_width(),
        "stats radius outside the window"
    );
    let cut = percolation::region_cut(&window, window.center, ccfg.stats_radius);
    let g0 = {
        let mut sc = prec.make_scratch();
        potential::green_column(&window, &prec, &mut sc, window.center)?
            [window.center as usize]
    };
    // Force the Green quadrature table once (shared across workers).
    if ccfg.capacity_subsample > 0 {
        let mut sc = prec.make_scratch();
        let _ = prec.green_entry(&window, &mut sc, window.center, window.center)?;
    }
    let seed = cfg.seed;
    let level = ccfg.level;
    let n = window.graph.n_vertices();
    let rows = runner::parallel_rows(
        cfg.replicas,
        workers,
        || CriticalState {
            scratch: prec.make_scratch(),
            field: vec![0.0; n],
            slots: vec![0.0; cut.vertices.len()],
            perc: PercScratch::new(n),
            label: LabelScratch::new(cut.vertices.len()),
        },
        |st, replica| {
            let mut stream = StreamId::new(seed, replica, Purpose::Field).stream();
            gff::sample_into(&window, &prec, &mut st.scratch, &mut stream, &mut st.field)
                .expect("sample");
            let opening = EdgeOpening::new(seed, replica, level);
            let origin =
                percolation::cluster_of_origin(&window, &st.field, &opening, &mut st.perc);
            // Arm flags from the full cluster: max distance reached.
            let max_dist = origin
                .members
                .iter()
                .map(|&v| window.distance_to_center(v))
                .max()
                .unwrap_or(0);
            let arms: Vec<bool> =
                ccfg.probe_radii.iter().map(|&r| origin.volume > 0 && max_dist >= r).collect();
            for (i, &v) in cut.vertices.iter().enumerate() {
                st.slots[i] = st.field[v as usize];
            }
            let labeling =
                percolation::label_clusters(&cut, &st.slots, &opening, &mut st.label);
            let m_ball = percolation::largest_in_ball(&labeling);
            let zr = percolation::rich_vertex_count(&labeling, ccfg.zr_threshold);
            // Capacity tiers: exact through the equilibrium solve up to
            // DENSE_SET_LIMIT; beyond it a certified floor |K|/v_K is
            // recorded when it clears the estimation window (<= 100) with
            // margin, else the exact PCG solve runs.
            let cap = if ccfg.capacity_subsample > 0
                && replica % ccfg.capacity_subsample == 0
            {
                if origin.volume == 0 {
                    Some((0.0, false))
                } else if origin.volume as usize <= potential::DENSE_SET_LIMIT {
                    let eq = potential::equilibrium_measure(
                        &window,
                        &prec,
                        &mut st.scratch,
                        &origin.members,
                    )
                    .expect("capacity");
                    Some((eq.capacity, false))
                } else {
                    let floor = potential::capacity_floor(
                        &window,
                        &prec,
                        &mut st.scratch,
                        &origin.members,
                    )
                    .expect("capacity floor");
                    if floor >= CAP_FLOOR_MIN {
                        Some((floor, true))
                    } else {
                        let eq = potential::equilibrium_measure(
                            &window,
                            &prec,
                            &mut st.scratch,
                            &origin.members,
                        )
                        .expect("capacity");
                        Some((eq.capacity, false))
                    }
                }
            } else {
                None
            };
            let arm_str: Vec<String> =
                arms.iter().map(|&a| (a as u8).to_string()).collect();
            format!(
                "{replica},{level},{},{},{m_ball},{},{zr},{},{}",
                origin.volume,
                origin.censored as u8,
                arm_str.join(","),
                cap.map(|(c, _)| format!("{c:.6}")).unwrap_or_default(),
                cap.map(|(_, f)| (f as u8).to_string()).unwrap_or_default()
            )
        },
    )?;
    let hash = cfg.hash();
    let rows: Vec<String> = rows
        .into_iter()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let arm_cols: Vec<String> =
        ccfg.probe_radii.iter().map(|r| format!("arm{r}")).collect();
    let header = format!(
        "config,seed,replica,a,vol,censored,m_ball,{},zr,cap,cap_floor",
        arm_cols.join(",")
    );
    let extras = serde_json::json!({
        "g0": g0,
        "window_id": window.id,
        "stats_radius": ccfg.stats_radius,
        "probe_radii": ccfg.probe_radii,
        "zr_threshold": ccfg.zr_threshold,
        "capacity_subsample": ccfg.capacity_subsample,
    });
    runner::persist_run(cfg, out_dir, &header, &rows, extras, sw.seconds(), workers)
}

fn summarize_critical(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let extras = &manifest["extras"];
    // Fit windows: spec defaults, overridable from the persisted config.
    let cfg = ExperimentConfig::from_toml(
        manifest["config_toml"].as_str().context("config echo")?,
    )?;
    let vol_window = cfg.fits.volume_window.map(|w| (w[0], w[1])).unwrap_or((20.0, 2000.0));
    let cap_window = cfg.fits.capacity_window.map(|w| (w[0], w[1])).unwrap_or((10.0, 100.0));
    let g0 = extras["g0"].as_f64().context("g0")?;
    let probe_radii: Vec<u64> = extras["probe_radii"]
        .as_array()
        .context("probe radii")?
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let n_arms = probe_radii.len();
    // Columns: config,seed,replica,a,vol,censored,m_ball,arm...,zr,cap,cap_floor
    let mut vols = Vec::new();
    let mut caps = Vec::new();
    let mut cap_total = 0u64;
    let mut floor_count = 0u64;
    let mut min_floor = f64::MAX;
    let mut censored_count = 0u64;
    let mut arm_hits = vec![0u64; n_arms];
    let mut m_ball = Vec::new();
    let mut zr_positive = 0u64;
    for r in &rows {
        let vol: f64 = r[4].parse()?;
        let censored = r[5] == "1";
        vols.push(vol);
        if censored {
            censored_count += 1;
        }
        m_ball.push(r[6].parse::<f64>()?);
        for (i, col) in r[7..7 + n_arms].iter().enumerate() {
            if col == "1" {
                arm_hits[i] += 1;
            }
        }
        let zr: u64 = r[7 + n_arms].parse()?;
        if zr > 0 {
            zr_positive += 1;
        }
        let cap_field = &r[8 + n_arms];
        if !cap_field.is_empty() {
            let cap: f64 = cap_field.parse()?;
            caps.push(cap);
            cap_total += 1;
            if r[9 + n_arms] == "1" {
                floor_count += 1;
                min_floor = min_floor.min(cap);
            }
        }
    }
    // Floors must clear the estimation window, or the tail would be biased.
    anyhow::ensure!(
        floor_count == 0 || min_floor > cap_window.1,
        "capacity floor below the estimation window: {min_floor}"
    );
    let n = rows.len() as u64;
    // Volume tail: censored clusters still count with their observed size
    // (truncation only underestimates).
    let vol_curve = TailCurve::from_samples(&vols, censored_count, 512);
    let delta_fit = estimators::fit_power_law(&vol_curve, vol_window, 1001).ok();
    // Capacity tail over the subsampled replicas.
    let cap_curve = TailCurve::from_samples(&caps, 0, 512);
    let cap_fit = estimators::fit_power_law(&cap_curve, cap_window, 1002).ok();
    let plateau = estimators::capacity_tail_constant(&cap_curve, g0, cap_window, 16).ok();
    // Plot-ready CCDF curves.
    write_curve_csv(dir, "vol_ccdf.csv", &vol_curve)?;
    write_curve_csv(dir, "cap_ccdf.csv", &cap_curve)?;
    let arm_freq: Vec<f64> = arm_hits.iter().map(|&k| k as f64 / n as f64).collect();
    Ok(serde_json::json!({
        "replicas": n,
        "censored_fraction": censored_count as f64 / n as f64,
        "g0": g0,
        "volume_slope": delta_fit.map(fit_json),
        "capacity_slope": cap_fit.map(fit_json),
        "capacity_samples": cap_total,
        "capacity_floor_count": floor_count,
        "capacity_plateau": plateau.map(|p| {
            let (mn, mx) = p.min_max();
            serde_json::json!({"min": mn, "max": mx,
                               "window": [cap_window.0, cap_window.1]})
        }),
        "arm_frequency": arm_freq,
        "probe_radii": probe_radii,
        "zr_positive_fraction": zr_positive as f64 / n as f64,
    }))
}

fn fit_json(f: estimators::FitResult) -> serde_json::Value {
    serde_json::json!({
        "estimate": f.estimate,
        "std_error": f.std_error,
        "window": [f.window.0, f.window.1],
        "r_squared": f.r_squared,
        "n_boot": f.n_boot,
    })
}

fn write_curve_csv(dir: &Path, name: &str, curve: &TailCurve) -> anyhow::Result<()> {
    use std::io::Write;
    let mut w = std::io::BufWriter::new(std::fs::File::create(dir.join(name))?);
    writeln!(w, "x,y,lo,hi")?;
    for i in 0..curve.thresholds.len() {
        writeln!(
            w,
            "{},{},{},{}",
            curve.thresholds[i], curve.ccdf[i], curve.band_lo[i], curve.band_hi[i]
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------------
// offcritical
// ---------------------------------------------------------------------

fn run_offcritical(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let window = build_window(cfg)?;
    let prec = Precision::build(&window)?;
    let ocfg = cfg.offcritical.clone();
    let cut = percolation::region_cut(&window, window.center, ocfg.region_radius);
    let table = {
        let mut sc = prec.make_scratch();
        RegionTable::build(&window, &prec, &mut sc, &cut.vertices, true)?
    };
    let m = table.len();
    let seed = cfg.seed;
    let levels = ocfg.levels.clone();
    let center_slot = cut.slot_of[window.center as usize] as usize;
    let rows = runner::parallel_rows(
        cfg.replicas,
        workers,
        || (vec![0.0; m], vec![0.0; m], LabelScratch::new(m)),
        |(z, slots, label), replica| {
            let sampler = RegionSampler::new(&table);
            let mut stream = StreamId::new(seed, replica, Purpose::Field).stream();
            sampler.sample_into(&mut stream, z, slots);
            let mut out = Vec::with_capacity(levels.len());
            for &a in &levels {
                let opening = EdgeOpening::new(seed, replica, a);
                let lab = percolation::label_clusters(&cut, slots, &opening, label);
                let cid = lab.comp_of[center_slot];
                let (vol, censored) = if cid == percolation::NO_COMPONENT {
                    (0, false)
                } else {
                    let c = &lab.components[cid as usize];
                    (c.volume, c.censored)
                };
                out.push(format!("{replica},{a},{vol},{}", censored as u8));
            }
            out
        },
    )?;
    let hash = cfg.hash();
    let rows: Vec<String> = rows
        .into_iter()
        .flatten()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let extras = serde_json::json!({
        "window_id": window.id,
        "region_radius": ocfg.region_radius,
        "levels": levels,
    });
    runner::persist_run(
        cfg,
        out_dir,
        "config,seed,replica,a,vol,censored",
        &rows,
        extras,
        sw.seconds(),
        workers,
    )
}

fn summarize_offcritical(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let levels: Vec<f64> = manifest["extras"]["levels"]
        .as_array()
        .context("levels")?
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut out = Vec::new();
    for &a in &levels {
        let mut vols = Vec::new();
        let mut censored = 0u64;
        for r in &rows {
            if (r[3].parse::<f64>()? - a).abs() > 1e-12 {
                continue;
            }
            if r[5] == "1" {
                censored += 1;
                continue; // truncated tails use uncensored clusters only
            }
            vols.push(r[4].parse::<f64>()?);
        }
        let curve = TailCurve::from_samples(&vols, censored, 512);
        // Feasible range: n >= 5 up to the largest n with 200 survivors.
        let hi = {
            let k = vols.iter().filter(|&&v| v >= 5.0).count();
            if k < 300 {
                50.0
            } else {
                let mut sorted = vols.clone();
                sorted.sort_unstable_by(f64::total_cmp);
                sorted[sorted.len().saturating_sub(200)].max(8.0)
            }
        };
        let fit = estimators::fit_stretched_exponential(&curve, 1.0 / 3.0, (5.0, hi), 200).ok();
        out.push(serde_json::json!({
            "a": a,
            "uncensored": vols.len(),
            "censored": censored,
            "rate": fit.map(|f| f.estimate),
            "r_squared": fit.map(|f| f.r_squared),
            "window": fit.map(|f| vec![f.window.0, f.window.1]),
        }));
    }
    Ok(serde_json::json!({"levels": out}))
}

// ---------------------------------------------------------------------
// largest (M_r scan)
// ---------------------------------------------------------------------

fn run_largest(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let lcfg = cfg.largest.clone();
    let seed = cfg.seed;
    let mut all_rows = Vec::new();
    let budget = BuildBudget { max_vertices: cfg.window.max_vertices };
    for &r in &lcfg.radii {
        let window = Window::lattice_box(cfg.window.dim, r, cfg.window.margin, budget)?;
        let prec = Precision::build(&window)?;
        let cut = percolation::region_cut(&window, window.center, r);
        let n = window.graph.n_vertices();
        let level = lcfg.level;
        let rows = runner::parallel_rows(
            cfg.replicas,
            workers,
            || {
                (
                    prec.make_scratch(),
                    vec![0.0; n],
                    vec![0.0; cut.vertices.len()],
                    LabelScratch::new(cut.vertices.len()),
                )
            },
            |(scratch, field, slots, label), replica| {
                // Independent streams per radius through the sub tag.
                let mut stream =
                    StreamId::with_sub(seed, replica, Purpose::Field, r as u64).stream();
                gff::sample_into(&window, &prec, scratch, &mut stream, field).expect("sample");
                let opening = EdgeOpening::new(seed, replica ^ (r as u64) << 40, level);
                for (i, &v) in cut.vertices.iter().enumerate() {
                    slots[i] = field[v as usize];
                }
                let lab = percolation::label_clusters(&cut, slots, &opening, label);
                format!("{replica},{r},{}", percolation::largest_in_ball(&lab))
            },
        )?;
        all_rows.extend(rows);
    }
    let hash = cfg.hash();
    let rows: Vec<String> = all_rows
        .into_iter()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let extras = serde_json::json!({
        "radii": lcfg.radii,
        "level": lcfg.level,
        "margin": cfg.window.margin,
    });
    runner::persist_run(
        cfg,
        out_dir,
        "config,seed,replica,r,m",
        &rows,
        extras,
        sw.seconds(),
        workers,
    )
}

fn summarize_largest(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let radii: Vec<f64> = manifest["extras"]["radii"]
        .as_array()
        .context("radii")?
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut per_radius: Vec<(f64, Vec<f64>)> = radii.iter().map(|&r| (r, Vec::new())).collect();
    for row in &rows {
        let r: f64 = row[3].parse()?;
        let m: f64 = row[4].parse()?;
        if let Some(slot) = per_radius.iter_mut().find(|(rr, _)| (*rr - r).abs() < 1e-9) {
            slot.1.push(m);
        }
    }
    let fss = estimators::finite_size_scaling(&per_radius, 2001).ok();
    // Exceedance stability: C_r = max over t of t * P(M > t r^{5/2}).
    let mut exceed = Vec::new();
    for (r, ms) in &per_radius {
        let scale = r.powf(2.5);
        let n = ms.len() as f64;
        let mut c_r = 0.0f64;
        let mut probs = Vec::new();
        for &t in &[2.0f64, 4.0, 8.0] {
            let p = ms.iter().filter(|&&m| m > t * scale).count() as f64 / n;
            probs.push(p);
            c_r = c_r.max(t * p);
        }
        exceed.push(serde_json::json!({"r": r, "c": c_r, "p": probs}));
    }
    Ok(serde_json::json!({
        "fss": fss.map(fit_json),
        "means": per_radius
            .iter()
            .map(|(r, v)| serde_json::json!({
                "r": r,
                "mean": v.iter().sum::<f64>() / v.len().max(1) as f64,
                "n": v.len()
            }))
            .collect::<Vec<_>>(),
        "exceedance": exceed,
    }))
}

// ---------------------------------------------------------------------
// onearm
// ---------------------------------------------------------------------

fn run_onearm(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let acfg = cfg.onearm.clone();
    let seed = cfg.seed;
    let budget = BuildBudget { max_vertices: cfg.window.max_vertices };
    let mut all_rows = Vec::new();
    for &r in &acfg.radii {
        let window = Window::lattice_box(cfg.window.dim, r, cfg.window.margin, budget)?;
        let prec = Precision::build(&window)?;
        let n = window.graph.n_vertices();
        let level = acfg.level;
        let rows = runner::parallel_rows(
            cfg.replicas,
            workers,
            || (prec.make_scratch(), vec![0.0; n], PercScratch::new(n)),
            |(scratch, field, perc), replica| {
                let mut stream =
                    StreamId::with_sub(seed, replica, Purpose::Field, 1000 + r as u64).stream();
                gff::sample_into(&window, &prec, scratch, &mut stream, field).expect("sample");
                let opening = EdgeOpening::new(seed, replica ^ (r as u64) << 40, level);
                let origin = percolation::cluster_of_origin(&window, field, &opening, perc);
                let arm = origin.volume > 0
                    && origin
                        .members
                        .iter()
                        .any(|&v| window.distance_to_center(v) >= r);
                format!("{replica},{r},{}", arm as u8)
            },
        )?;
        all_rows.extend(rows);
    }
    let hash = cfg.hash();
    let rows: Vec<String> = all_rows
        .into_iter()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let extras = serde_json::json!({"radii": acfg.radii, "level": acfg.level});
    runner::persist_run(
        cfg,
        out_dir,
        "config,seed,replica,r,arm",
        &rows,
        extras,
        sw.seconds(),
        workers,
    )
}

fn summarize_onearm(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let radii: Vec<f64> = manifest["extras"]["radii"]
        .as_array()
        .context("radii")?
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let mut counts: Vec<(f64, u64, u64)> = radii.iter().map(|&r| (r, 0, 0)).collect();
    for row in &rows {
        let r: f64 = row[3].parse()?;
        let arm = row[4] == "1";
        if let Some(slot) = counts.iter_mut().find(|(rr, _, _)| (*rr - r).abs() < 1e-9) {
            slot.2 += 1;
            if arm {
                slot.1 += 1;
            }
        }
    }
    // nu = dim - 2 on the unit-weight lattice.
    let entries = estimators::q_estimate(&counts, 1.0);
    let (slope, se) = estimators::q_trend_slope(&entries);
    Ok(serde_json::json!({
        "q": entries
            .iter()
            .map(|e| serde_json::json!({
                "r": e.radius, "hits": e.hits, "n": e.n,
                "q_hat": e.q_hat, "lo": e.lo, "hi": e.hi
            }))
            .collect::<Vec<_>>(),
        "trend_slope": slope,
        "trend_se": se,
    }))
}

// ---------------------------------------------------------------------
// vacancy
// ---------------------------------------------------------------------

fn run_vacancy(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let vcfg = cfg.vacancy.clone();
    let window = build_window(cfg)?;
    let prec = Precision::build(&window)?;
    let mut sc = prec.make_scratch();
    let domain = ball(&window, window.center, vcfg.domain_radius);
    let eq = potential::equilibrium_measure(&window, &prec, &mut sc, &domain)?;
    let subsets: Vec<Vec<Vertex>> = vcfg
        .subset_radii
        .iter()
        .map(|&r| ball(&window, window.center, r))
        .collect();
    let subset_caps: Vec<f64> = subsets
        .iter()
        .map(|s| potential::equilibrium_measure(&window, &prec, &mut sc, s).map(|e| e.capacity))
        .collect::<Result<_, _>>()?;
    let seed = cfg.seed;
    let levels_u = vcfg.levels_u.clone();
    let rows = runner::parallel_rows(cfg.replicas, workers, || (), |_, replica| {
        let mut out = Vec::with_capacity(levels_u.len());
        for (ui, &u) in levels_u.iter().enumerate() {
            let real = interlacements::sample_interlacement(
                &window,
                &eq,
                u,
                StopRule::Absorption,
                seed,
                replica,
                ui as u64,
            );
            let vac: Vec<String> = subsets
                .iter()
                .map(|s| ((real.is_vacant(s)) as u8).to_string())
                .collect();
            out.push(format!(
                "{replica},{u},{},{}",
                real.trajectories.len(),
                vac.join(",")
            ));
        }
        out
    })?;
    let hash = cfg.hash();
    let rows: Vec<String> = rows
        .into_iter()
        .flatten()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let vac_cols: Vec<String> =
        vcfg.subset_radii.iter().map(|r| format!("vacant{r}")).collect();
    let header = format!("config,seed,replica,u,trajectories,{}", vac_cols.join(","));
    let extras = serde_json::json!({
        "domain_radius": vcfg.domain_radius,
        "domain_capacity": eq.capacity,
        "subset_radii": vcfg.subset_radii,
        "subset_capacities": subset_caps,
        "levels_u": levels_u,
    });
    runner::persist_run(cfg, out_dir, &header, &rows, extras, sw.seconds(), workers)
}

fn summarize_vacancy(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let extras = &manifest["extras"];
    let caps: Vec<f64> = extras["subset_capacities"]
        .as_array()
        .context("caps")?
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let levels_u: Vec<f64> = extras["levels_u"]
        .as_array()
        .context("u")?
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let dom_cap = extras["domain_capacity"].as_f64().context("cap")?;
    let mut cells = Vec::new();
    for (ui, &u) in levels_u.iter().enumerate() {
        let mut traj_total = 0u64;
        let mut n = 0u64;
        let mut vacant = vec![0u64; caps.len()];
        for row in &rows {
            if (row[3].parse::<f64>()? - u).abs() > 1e-12 {
                continue;
            }
            n += 1;
            traj_total += row[4].parse::<u64>()?;
            for (i, col) in row[5..5 + caps.len()].iter().enumerate() {
                if col == "1" {
                    vacant[i] += 1;
                }
            }
        }
        for (i, &cap) in caps.iter().enumerate() {
            let p_hat = vacant[i] as f64 / n.max(1) as f64;
            let p_exact = (-u * cap).exp();
            let se = (p_exact * (1.0 - p_exact) / n.max(1) as f64).sqrt();
            cells.push(serde_json::json!({
                "u": u, "subset": i, "capacity": cap,
                "p_hat": p_hat, "p_exact": p_exact, "std_error": se,
                "sigma_distance": if se > 0.0 { (p_hat - p_exact).abs() / se } else { 0.0 },
            }));
        }
        let mean_traj = traj_total as f64 / n.max(1) as f64;
        cells.push(serde_json::json!({
            "u": u, "subset": "domain", "capacity": dom_cap,
            "mean_trajectories": mean_traj, "expected": u * dom_cap,
            "n": n, "index": ui,
        }));
    }
    Ok(serde_json::json!({"cells": cells}))
}

// ---------------------------------------------------------------------
// isom (sign-cluster union domination)
// ---------------------------------------------------------------------

fn run_isom(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let icfg = cfg.isom.clone();
    let window = build_window(cfg)?;
    let prec = Precision::build(&window)?;
    let cut = percolation::region_cut(&window, window.center, icfg.region_radius);
    let (table, eq) = {
        let mut sc = prec.make_scratch();
        let table = RegionTable::build(&window, &prec, &mut sc, &cut.vertices, true)?;
        let eq = potential::equilibrium_measure(&window, &prec, &mut sc, &cut.vertices)?;
        (table, eq)
    };
    let m = table.len();
    let seed = cfg.seed;
    let u = icfg.u;
    let shift = (2.0 * u).sqrt();
    let rows = runner::parallel_rows(
        cfg.replicas,
        workers,
        || (vec![0.0; m], vec![0.0; m], LabelScratch::new(m)),
        |(z, slots, label), replica| {
            let sampler = RegionSampler::new(&table);
            let mut stream = StreamId::new(seed, replica, Purpose::Field).stream();
            sampler.sample_into(&mut stream, z, slots);
            let opening = EdgeOpening::new(seed, replica, 0.0);
            let real = interlacements::sample_interlacement(
                &window,
                &eq,
                u,
                StopRule::Absorption,
                seed,
                replica,
                0,
            );
            let cu = interlacements::build_c_u(&cut, slots, &opening, label, &real);
            let largest_cu = cu.largest_component_volume();
            // Paired observable: the largest cluster at level -sqrt(2u)
            // from the same field and uniforms.
            let lab_m =
                percolation::label_clusters(&cut, slots, &opening.at_level(-shift), label);
            let m_neg = percolation::largest_in_ball(&lab_m);
            format!("{replica},{largest_cu},{m_neg}")
        },
    )?;
    let hash = cfg.hash();
    let rows: Vec<String> = rows
        .into_iter()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let extras = serde_json::json!({
        "u": u,
        "shift": shift,
        "region_radius": icfg.region_radius,
    });
    runner::persist_run(
        cfg,
        out_dir,
        "config,seed,replica,largest_cu,m_shifted",
        &rows,
        extras,
        sw.seconds(),
        workers,
    )
}

fn summarize_isom(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let u = manifest["extras"]["u"].as_f64().context("u")?;
    let pairs: Vec<(f64, f64)> = rows
        .iter()
        .map(|r| Ok((r[3].parse::<f64>()?, r[4].parse::<f64>()?)))
        .collect::<anyhow::Result<_>>()?;
    let n = pairs.len() as f64;
    // Pointwise domination of the CCDFs with the paired standard error.
    let max_val = pairs.iter().map(|p| p.1.max(p.0)).fold(0.0f64, f64::max);
    let mut grid = Vec::new();
    let mut v = 1.0f64;
    while v <= max_val {
        grid.push(v);
        v = (v * 1.3).ceil().max(v + 1.0);
    }
    let mut worst_sigma = f64::MIN;
    let mut curve = Vec::new();
    for &t in &grid {
        let p_cu = pairs.iter().filter(|p| p.0 >= t).count() as f64 / n;
        let p_m = pairs.iter().filter(|p| p.1 >= t).count() as f64 / n;
        if p_cu < 20.0 / n && p_m < 20.0 / n {
            break;
        }
        // Paired difference indicator variance.
        let diff_mean = p_cu - p_m;
        let var: f64 = pairs
            .iter()
            .map(|p| {
                let d = (p.0 >= t) as i32 - (p.1 >= t) as i32;
                (d as f64 - diff_mean).powi(2)
            })
            .sum::<f64>()
            / (n * (n - 1.0));
        let se = var.sqrt().max(1.0 / n);
        let sigma = diff_mean / se;
        worst_sigma = worst_sigma.max(sigma);
        curve.push(serde_json::json!({
            "t": t, "ccdf_cu": p_cu, "ccdf_shifted": p_m, "sigma": sigma
        }));
    }
    Ok(serde_json::json!({
        "u": u,
        "n": pairs.len(),
        "worst_sigma": worst_sigma,
        "curve": curve,
    }))
}

// ---------------------------------------------------------------------
// theta
// ---------------------------------------------------------------------

fn run_theta(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    workers: usize,
) -> anyhow::Result<runner::RunArtifacts> {
    let sw = Stopwatch::start();
    let tcfg = cfg.theta.clone();
    let window = build_window(cfg)?;
    let prec = Precision::build(&window)?;
    let n = window.graph.n_vertices();
    let seed = cfg.seed;
    let levels = tcfg.levels.clone();
    let rows = runner::parallel_rows(
        cfg.replicas,
        workers,
        || (prec.make_scratch(), vec![0.0; n], PercScratch::new(n)),
        |(scratch, field, perc), replica| {
            let mut stream = StreamId::new(seed, replica, Purpose::Field).stream();
            gff::sample_into(&window, &prec, scratch, &mut stream, field).expect("sample");
            let mut out = Vec::with_capacity(levels.len());
            for &a in &levels {
                let opening = EdgeOpening::new(seed, replica, a);
                let origin = percolation::cluster_of_origin(&window, field, &opening, perc);
                out.push(format!(
                    "{replica},{a},{},{}",
                    origin.volume,
                    origin.censored as u8
                ));
            }
            out
        },
    )?;
    let hash = cfg.hash();
    let rows: Vec<String> = rows
        .into_iter()
        .flatten()
        .map(|r| format!("{hash},{seed},{r}"))
        .collect();
    let extras = serde_json::json!({
        "levels": levels,
        "window_radius": window.half_width(),
    });
    runner::persist_run(
        cfg,
        out_dir,
        "config,seed,replica,a,vol,censored",
        &rows,
        extras,
        sw.seconds(),
        workers,
    )
}

fn summarize_theta(
    dir: &Path,
    manifest: &serde_json::Value,
) -> anyhow::Result<serde_json::Value> {
    let rows = runner::read_csv_rows(dir)?;
    let levels: Vec<f64> = manifest["extras"]["levels"]
        .as_array()
        .context("levels")?
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    let window_radius = manifest["extras"]["window_radius"].as_f64().context("radius")?;
    let mut out = Vec::new();
    for &a in &levels {
        let mut censored = 0u64;
        let mut n = 0u64;
        for row in &rows {
            if (row[3].parse::<f64>()? - a).abs() > 1e-12 {
                continue;
            }
            n += 1;
            if row[5] == "1" {
                censored += 1;
            }
        }
        let t = estimators::theta_estimate(censored, n, a, 1.0, window_radius);
        out.push(serde_json::json!({
            "a": a,
            "theta": t.theta_hat,
            "std_error": t.std_error,
            "xi": t.xi,
            "reliable": t.reliable,
            "ratio_theta_over_a": t.theta_hat / a.abs(),
        }));
    }
    Ok(serde_json::json!({"levels": out}))
}
