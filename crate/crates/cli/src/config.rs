//! Experiment configuration: one human-editable TOML document. Unknown
//! keys are hard errors, and the canonical serialization is hashed into
//! every output file so any row can be traced to its exact configuration.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    pub seed: u64,
    pub replicas: u64,
    /// 0 = automatic (number of cores, capped at 8).
    #[serde(default)]
    pub workers: usize,
    pub window: WindowCfg,
    #[serde(default)]
    pub critical: CriticalCfg,
    #[serde(default)]
    pub offcritical: OffcriticalCfg,
    #[serde(default)]
    pub largest: LargestCfg,
    #[serde(default)]
    pub onearm: OneArmCfg,
    #[serde(default)]
    pub vacancy: VacancyCfg,
    #[serde(default)]
    pub isom: IsomCfg,
    #[serde(default)]
    pub theta: ThetaCfg,
    /// Estimator fit-window overrides; defaults are recorded in summaries.
    #[serde(default)]
    pub fits: FitsCfg,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct FitsCfg {
    /// Volume-tail log-log fit window [lo, hi].
    pub volume_window: Option<[f64; 2]>,
    /// Capacity-tail fit and plateau window [lo, hi].
    pub capacity_window: Option<[f64; 2]>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    /// Critical-level run: origin cluster volume/censoring, restricted
    /// ball statistics, subsampled cluster capacities.
    Critical,
    /// Positive levels, region-restricted origin clusters.
    Offcritical,
    /// Largest-cluster-in-ball scan over a radius grid.
    Largest,
    /// One-arm indicator per radius.
    Onearm,
    /// Interlacement vacancy-law check.
    Vacancy,
    /// Sign-cluster union vs shifted-level domination, paired replicas.
    Isom,
    /// Supercritical censored frequency (order parameter).
    Theta,
}

impl Kind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Kind::Critical => "critical",
            Kind::Offcritical => "offcritical",
            Kind::Largest => "largest",
            Kind::Onearm => "onearm",
            Kind::Vacancy => "vacancy",
            Kind::Isom => "isom",
            Kind::Theta => "theta",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WindowCfg {
    pub dim: usize,
    pub interior_radius: u32,
    pub margin: u32,
    /// Vertex budget guard.
    #[serde(default = "default_budget")]
    pub max_vertices: u64,
    /// When set, the window is the gasket-skeleton x Z^2 product at this
    /// level (interior_radius then plays the Z^2 half-width role and dim
    /// is ignored). Exact sampling needs the window under 4096 vertices.
    #[serde(default)]
    pub gasket_level: Option<u32>,
}

fn default_budget() -> u64 {
    64_000_000
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct CriticalCfg {
    pub level: f64,
    /// Ball radius for M_r, one-arm probes and Z_r.
    pub stats_radius: u32,
    pub probe_radii: Vec<u32>,
    /// Z_r volume threshold.
    pub zr_threshold: u64,
    /// Capacity computed on replicas with index % subsample == 0
    /// (0 disables capacities).
    pub capacity_subsample: u64,
}

impl Default for CriticalCfg {
    fn default() -> Self {
        CriticalCfg {
            level: 0.0,
            stats_radius: 16,
            probe_radii: vec![4, 8, 16],
            zr_threshold: 4,
            capacity_subsample: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OffcriticalCfg {
    pub levels: Vec<f64>,
    /// Statistics region radius (region-marginal sampler).
    pub region_radius: u32,
}

impl Default for OffcriticalCfg {
    fn default() -> Self {
        OffcriticalCfg { levels: vec![0.5, 0.8], region_radius: 12 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct LargestCfg {
    pub radii: Vec<u32>,
    pub level: f64,
}

impl Default for LargestCfg {
    fn default() -> Self {
        LargestCfg { radii: vec![8, 12, 16, 24, 32, 48], level: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct OneArmCfg {
    pub radii: Vec<u32>,
    pub level: f64,
}

impl Default for OneArmCfg {
    fn default() -> Self {
        OneArmCfg { radii: vec![8, 16, 32], level: 0.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct VacancyCfg {
    pub levels_u: Vec<f64>,
    pub domain_radius: u32,
    pub subset_radii: Vec<u32>,
}

impl Default for VacancyCfg {
    fn default() -> Self {
        VacancyCfg {
            levels_u: vec![0.25, 1.0],
            domain_radius: 8,
            subset_radii: vec![0, 1, 2, 4, 6],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct IsomCfg {
    pub u: f64,
    pub region_radius: u32,
}

impl Default for IsomCfg {
    fn default() -> Self {
        IsomCfg { u: 0.125, region_radius: 16 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct ThetaCfg {
    pub levels: Vec<f64>,
}

impl Default for ThetaCfg {
    fn default() -> Self {
        ThetaCfg { levels: vec![-0.2, -0.3, -0.4] }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> anyhow::Result<ExperimentConfig> {
        let cfg: ExperimentConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        anyhow::ensure!(self.window.margin >= 2, "margin factor must be >= 2");
        anyhow::ensure!(self.window.interior_radius >= 1, "interior radius must be >= 1");
        anyhow::ensure!(
            (1..=7).contains(&self.window.dim),
            "dimension {} unsupported",
            self.window.dim
        );
        match self.kind {
            Kind::Offcritical => anyhow::ensure!(
                self.offcritical.levels.iter().all(|&a| a != 0.0),
                "off-critical levels must be nonzero"
            ),
            Kind::Theta => anyhow::ensure!(
                self.theta.levels.iter().all(|&a| a < 0.0),
                "theta levels must be negative"
            ),
            Kind::Largest | Kind::Onearm => anyhow::ensure!(
                self.window.gasket_level.is_none(),
                "radius scans build one lattice window per radius; gasket windows are not supported here"
            ),
            _ => {}
        }
        Ok(())
    }

    /// FNV-1a over the canonical TOML text; embedded in every output row.
    /// The worker count is an execution detail and never changes results,
    /// so it is excluded from the hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.workers = 0;
        let text = canonical.to_toml();
        let mut h: u64 = 0xcbf29ce484222325;
        for b in text.as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }

    pub fn effective_workers(&self) -> usize {
        if self.workers > 0 {
            self.workers
        } else {
            std::thread::available_parallelism()
                .map(|c| c.get())
                .unwrap_or(1)
                .min(8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal(kind: &str) -> String {
        format!(
            "kind = \"{kind}\"\nseed = 1\nreplicas = 10\n\n[window]\ndim = 3\ninterior_radius = 4\nmargin = 2\n"
        )
    }

    #[test]
    fn roundtrip_and_hash_stability() {
        let cfg = ExperimentConfig::from_toml(&minimal("critical")).unwrap();
        let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.hash(), again.hash());
        let other = ExperimentConfig::from_toml(&minimal("onearm")).unwrap();
        assert_ne!(cfg.hash(), other.hash());
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = minimal("critical") + "\ntypo_key = 3\n";
        assert!(ExperimentConfig::from_toml(&text).is_err());
        let text = minimal("critical").replace("[window]", "[window]\nwrong = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }

    #[test]
    fn invalid_margin_rejected() {
        let text = minimal("critical").replace("margin = 2", "margin = 1");
        assert!(ExperimentConfig::from_toml(&text).is_err());
    }
}
