//! Experiment configuration: the TOML schema every subcommand consumes.

use lindlab_core::diagnostics::ObservablePlan;
use lindlab_core::glauber::RatePerturbation;
use lindlab_core::io::{LatticeConfig, ModelConfig, PerturbationConfig};
use lindlab_core::presets::Preset;
use serde::{Deserialize, Serialize};

/// A time grid: either an explicit list or a uniform linspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TimesSpec {
    List(Vec<f64>),
    Linspace { start: f64, stop: f64, points: usize },
}

impl TimesSpec {
    pub fn build(&self) -> Vec<f64> {
        match self {
            TimesSpec::List(v) => v.clone(),
            TimesSpec::Linspace {
                start,
                stop,
                points,
            } => {
                let n = (*points).max(2);
                (0..n)
                    .map(|i| start + (stop - start) * i as f64 / (n - 1) as f64)
                    .collect()
            }
        }
    }
}

fn default_times() -> TimesSpec {
    TimesSpec::Linspace {
        start: 0.0,
        stop: 3.0,
        points: 25,
    }
}

/// Observable section; placement happens per lattice size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ObservableConfig {
    #[default]
    SigmaZOrigin,
    SigmaXOrigin,
    SigmaZPair,
}

impl ObservableConfig {
    pub fn plan(&self) -> ObservablePlan {
        match self {
            ObservableConfig::SigmaZOrigin => ObservablePlan::SigmaZOrigin,
            ObservableConfig::SigmaXOrigin => ObservablePlan::SigmaXOrigin,
            ObservableConfig::SigmaZPair => ObservablePlan::SigmaZPair,
        }
    }
}

/// Sweep grids shared by the diagnostic pipelines. Sizes/strengths apply
/// to the sweep commands; distances to the propagation probes; slopes to
/// the envelope schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    #[serde(default)]
    pub sizes: Vec<usize>,
    #[serde(default)]
    pub strengths: Vec<f64>,
    #[serde(default = "default_times")]
    pub times: TimesSpec,
    #[serde(default)]
    pub distances: Vec<usize>,
    #[serde(default)]
    pub slopes: Vec<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            sizes: Vec::new(),
            strengths: Vec::new(),
            times: default_times(),
            distances: Vec::new(),
            slopes: Vec::new(),
        }
    }
}

/// Monte-Carlo section for the classical engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmcConfig {
    pub size: usize,
    pub chains: usize,
}

/// Classical rate perturbation section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RatePerturbationConfig {
    UniformScale { eps: f64 },
    FlipUpBias { eps: f64 },
}

impl RatePerturbationConfig {
    pub fn build(&self) -> RatePerturbation {
        match *self {
            RatePerturbationConfig::UniformScale { eps } => RatePerturbation::UniformScale { eps },
            RatePerturbationConfig::FlipUpBias { eps } => RatePerturbation::FlipUpBias { eps },
        }
    }

    pub fn strength(&self) -> f64 {
        match *self {
            RatePerturbationConfig::UniformScale { eps }
            | RatePerturbationConfig::FlipUpBias { eps } => eps,
        }
    }
}

/// Verdict tolerances for the stability sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerdictConfig {
    pub flatness_tol: f64,
    pub linearity_tol: f64,
}

impl Default for VerdictConfig {
    fn default() -> Self {
        VerdictConfig {
            flatness_tol: 0.2,
            linearity_tol: 0.05,
        }
    }
}

/// Krylov integrator section (informational; the defaults match the
/// library's and are recorded in the summary for reproducibility).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub krylov_dim: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            krylov_dim: 30,
        }
    }
}

/// The complete experiment definition. One file drives any subcommand;
/// each pipeline reads the sections it needs and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub lattice: LatticeConfig,
    pub model: Preset,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<PerturbationConfig>,
    #[serde(default)]
    pub observable: ObservableConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rate_perturbation: Option<RatePerturbationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmc: Option<KmcConfig>,
    #[serde(default)]
    pub verdict: VerdictConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn from_preset(name: &str) -> Option<ExperimentConfig> {
        let model = Preset::from_name(name)?;
        Some(ExperimentConfig {
            lattice: LatticeConfig {
                dimension: 1,
                size: 5,
            },
            model,
            perturbation: None,
            observable: ObservableConfig::default(),
            grid: GridConfig::default(),
            rate_perturbation: None,
            kmc: None,
            verdict: VerdictConfig::default(),
            integrator: IntegratorConfig::default(),
            seed: 0,
        })
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            lattice: self.lattice,
            model: self.model,
            perturbation: self.perturbation,
        }
    }

    /// Canonical serialized form; hashing and the stored config copy both
    /// use these exact bytes so reruns are byte-identical.
    pub fn canonical_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Sizes grid with a fallback to the single configured lattice size.
    pub fn sizes(&self) -> Vec<usize> {
        if self.grid.sizes.is_empty() {
            vec![self.lattice.size]
        } else {
            self.grid.sizes.clone()
        }
    }

    /// Distance grid with a fallback of 0..L/2.
    pub fn distances(&self) -> Vec<usize> {
        if self.grid.distances.is_empty() {
            (0..=self.lattice.size / 2).collect()
        } else {
            self.grid.distances.clone()
        }
    }

    /// Schedule slopes with a conservative default spread.
    pub fn slopes(&self) -> Vec<f64> {
        if self.grid.slopes.is_empty() {
            vec![0.25, 0.5, 1.0]
        } else {
            self.grid.slopes.clone()
        }
    }

    /// Static sanity checks; returns human-readable diagnostics instead
    /// of failing, so `validate` can report all problems at once.
    pub fn diagnostics(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.lattice.dimension == 0 {
            out.push("lattice dimension must be >= 1".into());
        }
        if self.lattice.size < 2 {
            out.push("lattice size must be >= 2".into());
        }
        let sites = self
            .lattice
            .size
            .checked_pow(self.lattice.dimension as u32);
        match sites {
            Some(n) if n <= 12 => {}
            _ => out.push(format!(
                "lattice has {} sites; dense superoperators cap at 12 (4^12 entries per axis)",
                sites.map_or("overflow".into(), |n| n.to_string())
            )),
        }
        for &e in &self.grid.strengths {
            if e < 0.0 {
                out.push(format!("epsilon must be >= 0 (got {e})"));
            }
        }
        for &l in &self.grid.sizes {
            if l < 2 {
                out.push(format!("sweep size must be >= 2 (got {l})"));
            }
        }
        let times = self.grid.times.build();
        if times.is_empty() {
            out.push("time grid is empty".into());
        }
        if times.windows(2).any(|w| w[1] < w[0]) {
            out.push("time grid must be non-decreasing".into());
        }
        if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
            out.push("times must be finite and >= 0".into());
        }
        for &a in &self.grid.slopes {
            if !(a > 0.0) {
                out.push(format!("schedule slope must be > 0 (got {a})"));
            }
        }
        if let Preset::GlauberIsing { beta, .. } = self.model {
            if !(beta >= 0.0) {
                out.push(format!("inverse temperature must be >= 0 (got {beta})"));
            }
            if self.lattice.dimension != 1 {
                out.push("glauber-ising quantum embedding requires a 1D lattice".into());
            }
        }
        if let Some(p) = self.rate_perturbation {
            if p.strength() < 0.0 {
                out.push("rate perturbation strength must be >= 0".into());
            }
        }
        if let Some(k) = self.kmc {
            if k.chains == 0 {
                out.push("kmc chains must be >= 1".into());
            }
            if k.size < 2 {
                out.push("kmc size must be >= 2".into());
            }
        }
        if !(self.verdict.flatness_tol > 0.0) || !(self.verdict.linearity_tol > 0.0) {
            out.push("verdict tolerances must be > 0".into());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_roundtrips_through_toml() {
        let cfg = ExperimentConfig::from_preset("depolarizing").unwrap();
        let text = cfg.canonical_toml();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text, back.canonical_toml());
    }

    #[test]
    fn times_spec_forms() {
        let list: TimesSpec = toml::from_str::<GridConfig>("times = [0.0, 1.0, 2.0]")
            .unwrap()
            .times;
        assert_eq!(list.build(), vec![0.0, 1.0, 2.0]);
        let lin: TimesSpec =
            toml::from_str::<GridConfig>("times = { start = 0.0, stop = 1.0, points = 3 }")
                .unwrap()
                .times;
        assert_eq!(lin.build(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn diagnostics_flag_bad_grids() {
        let mut cfg = ExperimentConfig::from_preset("depolarizing").unwrap();
        cfg.grid.strengths = vec![-0.1];
        cfg.lattice.size = 13;
        let diag = cfg.diagnostics();
        assert!(diag.iter().any(|d| d.contains("epsilon must be >= 0")));
        assert!(diag.iter().any(|d| d.contains("cap")));
        let ok = ExperimentConfig::from_preset("dephasing").unwrap();
        assert!(ok.diagnostics().is_empty());
    }
}
