//! Statistical estimators over replica observables: tail curves (CCDF
//! with Wilson bands), weighted log-log power-law fits with bootstrap
//! confidence intervals, the capacity-tail constant curve, finite-size
//! scaling slopes, stretched-exponential rates, the one-arm function q(r)
//! and the order parameter theta(a).
//!
//! Every estimator is a pure function of persisted raw samples plus a
//! seed, so fits are reproducible from the CSV alone.

use thiserror::Error;

use crate::rng::{Purpose, StreamId};

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error("fit window [{lo}, {hi}] holds {found} decimated points; need >= {need}")]
    TooFewPoints { lo: f64, hi: f64, found: usize, need: usize },
    #[error("need at least {need} samples, got {found}")]
    TooFewSamples { need: usize, found: usize },
    #[error("radius grid too small: {0}")]
    GridTooSmall(String),
}

/// 95% Wilson score interval for k successes out of n.
pub fn wilson(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959963984540054f64;
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = p + z2 / (2.0 * nf);
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt();
    (((center - half) / denom).max(0.0), ((center + half) / denom).min(1.0))
}

/// Empirical complementary CDF with Wilson bands, retaining the sorted
/// sample values for bootstrap resampling.
#[derive(Debug, Clone)]
pub struct TailCurve {
    /// All samples, sorted ascending.
    pub samples: Vec<f64>,
    /// Number of censored observations excluded upstream (bookkeeping).
    pub censored: u64,
    /// Evaluation grid (ascending).
    pub thresholds: Vec<f64>,
    /// P(X >= t) at each threshold.
    pub ccdf: Vec<f64>,
    pub band_lo: Vec<f64>,
    pub band_hi: Vec<f64>,
}

impl TailCurve {
    /// Uses a log-spaced threshold grid over the positive sample range
    /// (up to `max_points` points).
    pub fn from_samples(values: &[f64], censored: u64, max_points: usize) -> TailCurve {
        let mut samples = values.to_vec();
        samples.sort_unstable_by(f64::total_cmp);
        let positive_min = samples.iter().copied().find(|&v| v > 0.0).unwrap_or(1.0);
        let max = samples.last().copied().unwrap_or(1.0).max(positive_min);
        let mut thresholds = Vec::new();
        if max > positive_min {
            let lo = positive_min.ln();
            let hi = max.ln();
            let k = max_points.max(2);
            for i in 0..k {
                thresholds.push((lo + (hi - lo) * i as f64 / (k - 1) as f64).exp());
            }
            thresholds.dedup();
        } else {
            thresholds.push(positive_min);
        }
        let n = samples.len() as u64;
        let mut ccdf = Vec::with_capacity(thresholds.len());
        let mut band_lo = Vec::with_capacity(thresholds.len());
        let mut band_hi = Vec::with_capacity(thresholds.len());
        for &t in &thresholds {
            let k = count_at_least(&samples, t);
            ccdf.push(k as f64 / n.max(1) as f64);
            let (lo, hi) = wilson(k, n);
            band_lo.push(lo);
            band_hi.push(hi);
        }
        TailCurve { samples, censored, thresholds, ccdf, band_lo, band_hi }
    }

    pub fn n(&self) -> u64 {
        self.samples.len() as u64
    }

    /// P(X >= t) from the retained samples (exact, not the grid).
    pub fn at(&self, t: f64) -> f64 {
        count_at_least(&self.samples, t) as f64 / self.samples.len().max(1) as f64
    }
}

fn count_at_least(sorted: &[f64], t: f64) -> u64 {
    (sorted.len() - sorted.partition_point(|&v| v < t)) as u64
}

#[derive(Debug, Clone, Copy)]
pub struct FitResult {
    pub estimate: f64,
    pub std_error: f64,
    pub window: (f64, f64),
    pub r_squared: f64,
    pub n_boot: u32,
}

/// Default fit window: lower cut at the 60th percentile of positive
/// samples, upper cut where fewer than 50 samples survive.
pub fn default_fit_window(curve: &TailCurve) -> (f64, f64) {
    let pos: Vec<f64> = curve.samples.iter().copied().filter(|&v| v > 0.0).collect();
    if pos.is_empty() {
        return (1.0, 1.0);
    }
    let lo = pos[((pos.len() as f64 * 0.6) as usize).min(pos.len() - 1)];
    let hi = if pos.len() >= 50 { pos[pos.len() - 50] } else { *pos.last().unwrap() };
    (lo, hi.max(lo * 1.0001))
}

fn weighted_ls(points: &[(f64, f64, f64)]) -> (f64, f64, f64) {
    // Returns (slope, intercept, r_squared) for weighted least squares.
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let sx: f64 = points.iter().map(|p| p.2 * p.0).sum();
    let sy: f64 = points.iter().map(|p| p.2 * p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.2 * p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.2 * p.0 * p.1).sum();
    let det = sw * sxx - sx * sx;
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sy - slope * sx) / sw;
    // Unweighted R^2 against the weighted fit.
    let mean_y: f64 = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let ss_res: f64 = points
        .iter()
        .map(|p| (p.1 - slope * p.0 - intercept).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (slope, intercept, r2)
}

/// Log-spaced grid of `count` thresholds inside [lo, hi].
fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

fn slope_on_grid(sorted: &[f64], grid: &[f64]) -> Option<(f64, f64)> {
    let n = sorted.len() as f64;
    let mut pts = Vec::with_capacity(grid.len());
    for &t in grid {
        let k = count_at_least(sorted, t) as f64;
        if k >= 3.0 && k < n {
            let p = k / n;
            // Var(ln p-hat) ~ (1-p)/(n p).
            let w = n * p / (1.0 - p);
            pts.push((t.ln(), p.ln(), w));
        }
    }
    if pts.len() < 2 {
        return None;
    }
    let (slope, _, r2) = weighted_ls(&pts);
    Some((slope, r2))
}

/// Weighted log-log fit of the CCDF over [window.0, window.1] with a
/// bootstrap confidence interval (resampling the raw samples).
pub fn fit_power_law(
    curve: &TailCurve,
    window: (f64, f64),
    boot_seed: u64,
) -> Result<FitResult, EstimatorError> {
    const GRID: usize = 24;
    const NEED: usize = 8;
    const BOOT: u32 = 200;
    if !(window.0 > 0.0 && window.1 > window.0) {
        return Err(EstimatorError::TooFewPoints { lo: window.0, hi: window.1, found: 0, need: NEED });
    }
    let grid = log_grid(window.0, window.1, GRID);
    let n = curve.samples.len() as f64;
    // Check how many usable decimated points the window holds.
    let usable = grid
        .iter()
        .filter(|&&t| {
            let k = count_at_least(&curve.samples, t) as f64;
            k >= 3.0 && k < n
        })
        .count();
    if usable < NEED {
        return Err(EstimatorError::TooFewPoints {
            lo: window.0,
            hi: window.1,
            found: usable,
            need: NEED,
        });
    }
    let (slope, r2) = slope_on_grid(&curve.samples, &grid).unwrap();
    // Bootstrap over the raw samples.
    let mut stream = StreamId::new(boot_seed, 0, Purpose::Bootstrap).stream();
    let mut boots = Vec::with_capacity(BOOT as usize);
    let mut resample = vec![0.0; curve.samples.len()];
    for _ in 0..BOOT {
        for r in resample.iter_mut() {
            *r = curve.samples[stream.below(curve.samples.len() as u64) as usize];
        }
        resample.sort_unstable_by(f64::total_cmp);
        if let Some((s, _)) = slope_on_grid(&resample, &grid) {
            boots.push(s);
        }
    }
    let std_error = std_dev(&boots);
    Ok(FitResult { estimate: slope, std_error, window, r_squared: r2, n_boot: BOOT })
}

fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// The capacity-tail constant curve t -> CCDF(t) * pi * sqrt(g0 t); the
/// tail law predicts a plateau at 1.
#[derive(Debug, Clone)]
pub struct PlateauCurve {
    pub thresholds: Vec<f64>,
    pub value: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

pub fn capacity_tail_constant(
    curve: &TailCurve,
    g0: f64,
    window: (f64, f64),
    points: usize,
) -> Result<PlateauCurve, EstimatorError> {
    if curve.samples.len() < 10_000 {
        return Err(EstimatorError::TooFewSamples { need: 10_000, found: curve.samples.len() });
    }
    let grid = log_grid(window.0, window.1, points.max(2));
    let n = curve.n();
    let mut value = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for &t in &grid {
        let k = count_at_least(&curve.samples, t);
        let scale = std::f64::consts::PI * (g0 * t).sqrt();
        let (wl, wh) = wilson(k, n);
        value.push(k as f64 / n as f64 * scale);
        lo.push(wl * scale);
        hi.push(wh * scale);
    }
    Ok(PlateauCurve { thresholds: grid, value, lo, hi })
}

impl PlateauCurve {
    pub fn min_max(&self) -> (f64, f64) {
        let mn = self.value.iter().copied().fold(f64::MAX, f64::min);
        let mx = self.value.iter().copied().fold(f64::MIN, f64::max);
        (mn, mx)
    }
}

/// Slope of log E[M_r] against log r with a bootstrap CI over replicas.
/// Requires >= 4 radii spanning a factor >= 4.
pub fn finite_size_scaling(
    per_radius: &[(f64, Vec<f64>)],
    boot_seed: u64,
) -> Result<FitResult, EstimatorError> {
    if per_radius.len() < 4 {
        return Err(EstimatorError::GridTooSmall(format!(
            "{} radii, need at least 4",
            per_radius.len()
        )));
    }
    let rmin = per_radius.iter().map(|p| p.0).fold(f64::MAX, f64::min);
    let rmax = per_radius.iter().map(|p| p.0).fold(f64::MIN, f64::max);
    if rmax / rmin < 4.0 {
        return Err(EstimatorError::GridTooSmall(format!(
            "radius span {:.2} below factor 4",
            rmax / rmin
        )));
    }
    let slope_of = |means: &[f64]| -> f64 {
        let pts: Vec<(f64, f64, f64)> = per_radius
            .iter()
            .zip(means)
            .map(|((r, _), &m)| (r.ln(), m.ln(), 1.0))
            .collect();
        weighted_ls(&pts).0
    };
    let means: Vec<f64> = per_radius
        .iter()
        .map(|(_, v)| v.iter().sum::<f64>() / v.len() as f64)
        .collect();
    let estimate = slope_of(&means);
    let pts: Vec<(f64, f64, f64)> = per_radius
        .iter()
        .zip(&means)
        .map(|((r, _), &m)| (r.ln(), m.ln(), 1.0))
        .collect();
    let (_, _, r2) = weighted_ls(&pts);
    const BOOT: u32 = 200;
    let mut stream = StreamId::new(boot_seed, 1, Purpose::Bootstrap).stream();
    let mut boots = Vec::with_capacity(BOOT as usize);
    for _ in 0..BOOT {
        let bm: Vec<f64> = per_radius
            .iter()
            .map(|(_, v)| {
                let mut s = 0.0;
                for _ in 0..v.len() {
                    s += v[stream.below(v.len() as u64) as usize];
                }
                s / v.len() as f64
            })
            .collect();
        boots.push(slope_of(&bm));
    }
    Ok(FitResult {
        estimate,
        std_error: std_dev(&boots),
        window: (rmin, rmax),
        r_squared: r2,
        n_boot: BOOT,
    })
}

/// Linear fit of -log CCDF against n^exponent over a threshold range:
/// the truncated-volume law with a pinned stretching exponent.
/// Returns the rate (slope) and the fit's R^2.
pub fn fit_stretched_exponential(
    curve: &TailCurve,
    exponent: f64,
    window: (f64, f64),
    min_count: u64,
) -> Result<FitResult, EstimatorError> {
    let n = curve.n();
    let grid = log_grid(window.0.max(1.0), window.1, 24);
    let mut pts = Vec::new();
    for &t in &grid {
        let k = count_at_least(&curve.samples, t);
        if k >= min_count && k < n {
            let p = k as f64 / n as f64;
            let w = k as f64; // heavier weight where more data survives
            pts.push((t.powf(exponent), -(p.ln()), w));
        }
    }
    if pts.len() < 5 {
        return Err(EstimatorError::TooFewPoints {
            lo: window.0,
            hi: window.1,
            found: pts.len(),
            need: 5,
        });
    }
    let (slope, _, r2) = weighted_ls(&pts);
    Ok(FitResult {
        estimate: slope,
        std_error: f64::NAN,
        window,
        r_squared: r2,
        n_boot: 0,
    })
}

/// One-arm table entry: q-hat(r) = r^{nu/2} * frequency, with Wilson band.
#[derive(Debug, Clone, Copy)]
pub struct QEntry {
    pub radius: f64,
    pub hits: u64,
    pub n: u64,
    pub q_hat: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn q_estimate(counts: &[(f64, u64, u64)], nu: f64) -> Vec<QEntry> {
    counts
        .iter()
        .map(|&(r, hits, n)| {
            let scale = r.powf(nu / 2.0);
            let (lo, hi) = wilson(hits, n);
            QEntry {
                radius: r,
                hits,
                n,
                q_hat: scale * hits as f64 / n.max(1) as f64,
                lo: scale * lo,
                hi: scale * hi,
            }
        })
        .collect()
}

/// Weighted trend of q-hat against log r; the slope CI uses binomial
/// standard errors propagated through the rescaling.
pub fn q_trend_slope(entries: &[QEntry]) -> (f64, f64) {
    let pts: Vec<(f64, f64, f64)> = entries
        .iter()
        .map(|e| {
            let p = e.hits as f64 / e.n as f64;
            let se = (p * (1.0 - p) / e.n as f64).sqrt() * e.radius.powf(
                (e.q_hat / p.max(1e-300)).ln() / (e.radius.ln().max(1e-300)),
            );
            // Propagated SE of q_hat is scale * binomial SE.
            let scale = e.q_hat / p.max(1e-300);
            let se = if p > 0.0 { scale * (p * (1.0 - p) / e.n as f64).sqrt() } else { se };
            (e.radius.ln(), e.q_hat, 1.0 / (se * se))
        })
        .collect();
    let (slope, _, _) = weighted_ls(&pts);
    // Slope variance for weighted LS: 1 / sum w (x - xbar_w)^2.
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xbar: f64 = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let denom: f64 = pts.iter().map(|p| p.2 * (p.0 - xbar).powi(2)).sum();
    (slope, (1.0 / denom).sqrt())
}

#[derive(Debug, Clone, Copy)]
pub struct ThetaResult {
    pub theta_hat: f64,
    pub std_error: f64,
    /// Correlation scale xi(a) = |a|^{-2/nu}.
    pub xi: f64,
    /// false when xi >= window_radius / 4: the estimate is untrustworthy.
    pub reliable: bool,
}

/// Density of the infinite cluster at level a < 0, estimated by the
/// censored frequency of the origin cluster.
pub fn theta_estimate(
    censored_hits: u64,
    n: u64,
    level: f64,
    nu: f64,
    window_radius: f64,
) -> ThetaResult {
    assert!(level < 0.0, "theta is estimated in the supercritical phase");
    let xi = level.abs().powf(-2.0 / nu);
    let p = censored_hits as f64 / n.max(1) as f64;
    ThetaResult {
        theta_hat: p,
        std_error: (p * (1.0 - p) / n.max(1) as f64).sqrt(),
        xi,
        reliable: xi < window_radius / 4.0,
    }
}

/// Critical exponents implied by the volume-growth exponent alpha and the
/// Green-decay exponent nu: the volume-tail exponent delta = (2a - v)/v
/// and the largest-cluster growth d_f = a - v/2. For the gasket x Z^2
/// product (alpha = log2 15, nu = log2 3) this evaluates delta to
/// 3.929947... and d_f to 3.114425...; both are derived from (alpha, nu)
/// rather than hard-coded.
pub fn growth_exponents(alpha: f64, nu: f64) -> (f64, f64) {
    ((2.0 * alpha - nu) / nu, alpha - nu / 2.0)
}

/// Raw moments E[X^k] for k = 1..=max_k.
pub fn moments(samples: &[f64], max_k: u32) -> Vec<f64> {
    let n = samples.len().max(1) as f64;
    (1..=max_k)
        .map(|k| samples.iter().map(|&x| x.powi(k as i32)).sum::<f64>() / n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_stream(seed: u64) -> Stream {
        StreamId::new(seed, 0, Purpose::Test).stream()
    }

    #[test]
    fn exact_power_law_slope() {
        // P(X >= t) = t^{-0.2} for X = U^{-5}.
        let mut s = uniform_stream(1);
        let samples: Vec<f64> = (0..200_000).map(|_| s.unit_f64_open().powf(-5.0)).collect();
        let curve = TailCurve::from_samples(&samples, 0, 512);
        let fit = fit_power_law(&curve, (2.0, 2e4), 7).unwrap();
        assert!((fit.estimate - (-0.2)).abs() < 0.005, "slope {}", fit.estimate);
        assert!(fit.std_error < 0.01);
        assert!(fit.r_squared > 0.995);
    }

    #[test]
    fn planted_exponent_recovery_across_range() {
        for &gamma in &[-3.0f64, -1.5, -0.7, -0.1] {
            let mut s = uniform_stream(17);
            let samples: Vec<f64> = (0..300_000)
                .map(|_| s.unit_f64_open().powf(1.0 / gamma))
                .collect();
            let curve = TailCurve::from_samples(&samples, 0, 512);
            // Window where counts stay healthy for all gamma.
            let hi = match gamma as i64 {
                -3 => 12.0,
                _ => 10.0f64.powf((2.5 / gamma.abs()).min(4.0)),
            };
            let fit = fit_power_law(&curve, (1.5, hi), 3).unwrap();
            assert!(
                (fit.estimate - gamma).abs() < 0.01 + 3.0 * fit.std_error,
                "gamma {gamma}: {} +- {}",
                fit.estimate,
                fit.std_error
            );
        }
    }

    #[test]
    fn window_too_small_is_refused() {
        let mut s = uniform_stream(2);
        let samples: Vec<f64> = (0..1000).map(|_| s.unit_f64_open().powf(-5.0)).collect();
        let curve = TailCurve::from_samples(&samples, 0, 128);
        // Below the sample range every grid point sees the full mass, so
        // no usable decimated points exist.
        assert!(matches!(
            fit_power_law(&curve, (0.2, 0.8), 5),
            Err(EstimatorError::TooFewPoints { .. })
        ));
        // Far beyond the sample range the counts die out as well.
        assert!(matches!(
            fit_power_law(&curve, (1e17, 1e19), 5),
            Err(EstimatorError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn plateau_of_exact_capacity_law() {
        // P(C >= t) = 1/(pi sqrt(g0 t)): the rescaled curve sits at 1.
        let g0 = 0.25;
        let mut s = uniform_stream(3);
        let samples: Vec<f64> = (0..200_000)
            .map(|_| {
                let u = s.unit_f64_open();
                1.0 / (g0 * (std::f64::consts::PI * u).powi(2))
            })
            .collect();
        let curve = TailCurve::from_samples(&samples, 0, 512);
        let plat = capacity_tail_constant(&curve, g0, (10.0, 100.0), 16).unwrap();
        let (mn, mx) = plat.min_max();
        assert!(mn > 0.97 && mx < 1.03, "plateau [{mn}, {mx}]");
        // And the log-log slope is -1/2.
        let fit = fit_power_law(&curve, (5.0, 500.0), 11).unwrap();
        assert!((fit.estimate + 0.5).abs() < 0.01, "slope {}", fit.estimate);
    }

    #[test]
    fn fss_recovers_planted_growth() {
        let mut s = uniform_stream(4);
        let per_radius: Vec<(f64, Vec<f64>)> = [8.0f64, 12.0, 16.0, 24.0, 32.0, 48.0]
            .iter()
            .map(|&r| {
                let samples: Vec<f64> = (0..4000)
                    .map(|_| r.powf(2.5) * (0.5 + s.unit_f64()))
                    .collect();
                (r, samples)
            })
            .collect();
        let fit = finite_size_scaling(&per_radius, 5).unwrap();
        assert!((fit.estimate - 2.5).abs() < 0.01, "slope {}", fit.estimate);
        assert!(fit.std_error < 0.01);
        // Grid preconditions.
        assert!(matches!(
            finite_size_scaling(&per_radius[..3], 5),
            Err(EstimatorError::GridTooSmall(_))
        ));
        let narrow: Vec<(f64, Vec<f64>)> =
            per_radius.iter().take(4).map(|(r, v)| (*r, v.clone())).collect();
        assert!(matches!(
            finite_size_scaling(&narrow, 5),
            Err(EstimatorError::GridTooSmall(_))
        ));
    }

    #[test]
    fn stretched_exponential_rate() {
        // P(X >= n) = exp(-2 n^{1/3}).
        let mut s = uniform_stream(6);
        let samples: Vec<f64> = (0..400_000)
            .map(|_| (s.exponential() / 2.0).powi(3))
            .collect();
        let curve = TailCurve::from_samples(&samples, 0, 512);
        let fit = fit_stretched_exponential(&curve, 1.0 / 3.0, (1.0, 500.0), 50).unwrap();
        assert!((fit.estimate - 2.0).abs() < 0.05, "rate {}", fit.estimate);
        assert!(fit.r_squared >= 0.999, "r2 {}", fit.r_squared);
    }

    #[test]
    fn q_table_and_trend() {
        // Frequency = r^{-nu/2} exactly gives q == 1 and zero trend.
        let nu = 1.0;
        let counts: Vec<(f64, u64, u64)> = [8.0f64, 16.0, 32.0]
            .iter()
            .map(|&r| {
                let n = 1_000_000u64;
                let k = (n as f64 * r.powf(-0.5)).round() as u64;
                (r, k, n)
            })
            .collect();
        let entries = q_estimate(&counts, nu);
        for e in &entries {
            assert!((e.q_hat - 1.0).abs() < 2e-3, "q {}", e.q_hat);
            assert!(e.lo <= e.q_hat && e.q_hat <= e.hi);
        }
        let (slope, se) = q_trend_slope(&entries);
        assert!(slope.abs() < 2.0 * se + 5e-3, "slope {slope} se {se}");
    }

    #[test]
    fn theta_flags_unreliable_windows() {
        let t = theta_estimate(3000, 10_000, -0.5, 1.0, 64.0);
        assert!((t.theta_hat - 0.3).abs() < 1e-12);
        assert!((t.xi - 4.0).abs() < 1e-12);
        assert!(t.reliable);
        let t2 = theta_estimate(10, 100, -0.1, 1.0, 64.0);
        assert!((t2.xi - 100.0).abs() < 1e-9);
        assert!(!t2.reliable);
    }

    #[test]
    fn merge_order_independent() {
        // Estimators act on sample multisets: merging batches in any order
        // gives identical curves.
        let mut s = uniform_stream(8);
        let a: Vec<f64> = (0..5000).map(|_| s.unit_f64_open().powf(-2.0)).collect();
        let b: Vec<f64> = (0..5000).map(|_| s.unit_f64_open().powf(-2.0)).collect();
        let mut ab = a.clone();
        ab.extend_from_slice(&b);
        let mut ba = b.clone();
        ba.extend_from_slice(&a);
        let ca = TailCurve::from_samples(&ab, 0, 256);
        let cb = TailCurve::from_samples(&ba, 0, 256);
        assert_eq!(ca.samples, cb.samples);
        assert_eq!(ca.ccdf, cb.ccdf);
    }

    #[test]
    fn growth_exponents_on_lattice_and_gasket_product() {
        // Z^d (unit weights): alpha = d, nu = d - 2.
        for d in [3.0f64, 4.0, 5.0] {
            let (delta, df) = growth_exponents(d, d - 2.0);
            assert!((delta - (d + 2.0) / (d - 2.0)).abs() < 1e-12);
            assert!((df - (d + 2.0) / 2.0).abs() < 1e-12);
        }
        // Gasket x Z^2 product: alpha = log2(15), nu = log2(3).
        let alpha = 15.0f64.log2();
        let nu = 3.0f64.log2();
        let (delta, df) = growth_exponents(alpha, nu);
        assert!((delta - 3.929947).abs() < 1e-6, "delta {delta}");
        // d_f follows from alpha - nu/2 directly (= 3.114425...).
        assert!((df - 3.114425).abs() < 1e-6, "d_f {df}");
    }

    #[test]
    fn moments_table() {
        let xs = [1.0, 2.0, 3.0];
        let m = moments(&xs, 3);
        assert!((m[0] - 2.0).abs() < 1e-12);
        assert!((m[1] - 14.0 / 3.0).abs() < 1e-12);
        assert!((m[2] - 12.0).abs() < 1e-12);
    }
}
