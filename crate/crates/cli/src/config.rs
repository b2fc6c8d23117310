//! Experiment configuration files (TOML). The grammar is documented in `CONFIG.md`.

use serde::{Deserialize, Serialize};

use rarepp::dynamics::{BetaSchedule, PerturbationSign, RandomLySystem, DEFAULT_BURN_IN};
use rarepp::observables::ObservableSpec;
use rarepp::pointprocess::MarkType;
use rarepp::theory::ZetaKind;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid(msg.into()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub tau: f64,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_h")]
    pub h: u64,
    pub ensemble: EnsembleSize,
    pub q: QChoice,
    pub mark_type: MarkType,
    #[serde(default = "default_k_n")]
    pub k_n: BlockRule,
    #[serde(default = "default_t_star")]
    pub t_star: BlockRule,
    pub system: SystemConfig,
    pub observable: ObservableSpec,
    pub theory: TheoryConfig,
    #[serde(default)]
    pub laplace: LaplaceConfig,
    /// Laplace arguments of the ULC sums; defaults to `laplace.y`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ulc_y: Option<Vec<f64>>,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, rename = "assert", skip_serializing_if = "Option::is_none")]
    pub assertions: Option<AssertConfig>,
}

fn default_h() -> u64 {
    1
}

fn default_k_n() -> BlockRule {
    BlockRule::Named(RuleName::FloorLogSquared)
}

fn default_t_star() -> BlockRule {
    BlockRule::Named(RuleName::FloorOfLogSquared)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EnsembleSize {
    All(usize),
    /// One size per entry of `n_grid`.
    PerN(Vec<usize>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QKeyword {
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QChoice {
    Fixed(usize),
    Keyword(QKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleName {
    /// `floor(log n)^2`.
    FloorLogSquared,
    /// `floor((log n)^2)`.
    FloorOfLogSquared,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BlockRule {
    Fixed(usize),
    Named(RuleName),
}

impl BlockRule {
    pub fn at(self, n: u64) -> usize {
        let l = (n as f64).ln();
        match self {
            BlockRule::Fixed(v) => v,
            BlockRule::Named(RuleName::FloorLogSquared) => (l.floor() as usize).pow(2),
            BlockRule::Named(RuleName::FloorOfLogSquared) => (l * l).floor() as usize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SystemConfig {
    /// `beta_i = beta + sign i^(-xi)`.
    Sequential {
        beta: f64,
        xi: f64,
        #[serde(default = "default_sign")]
        sign: PerturbationSign,
    },
    /// `beta_i = beta` for every `i`.
    Constant { beta: f64 },
    Random {
        alphabet: Vec<f64>,
        weights: Vec<f64>,
        #[serde(default = "default_burn_in")]
        burn_in: usize,
    },
}

fn default_sign() -> PerturbationSign {
    PerturbationSign::Plus
}

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheoryConfig {
    pub target: ZetaKind,
    /// Which reading of the boundary extremal index feeds the limit model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_variant: Option<BoundaryVariant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryVariant {
    Verbatim,
    Normalized,
}

impl BoundaryVariant {
    pub fn name(self) -> &'static str {
        match self {
            BoundaryVariant::Verbatim => "verbatim",
            BoundaryVariant::Normalized => "normalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LaplaceConfig {
    pub y: Vec<f64>,
    /// Number of equal disjoint intervals splitting the observation window.
    pub intervals: usize,
}

impl Default for LaplaceConfig {
    fn default() -> Self {
        LaplaceConfig {
            y: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            intervals: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Orbits whose marked measures are written as text files.
    #[serde(default)]
    pub measures: usize,
}

/// Checks applied by `run --assert`, all on the bundle.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssertConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_square_p_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repp_k1_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interarrival_ks_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub laplace_min_within_3sigma: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dprime_decreasing: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dprime_final_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dprime_lower_q_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary_excludes_variant: Option<bool>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let c: ExperimentConfig = toml::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialise")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_grid.is_empty() {
            return invalid("n_grid must not be empty");
        }
        if self.n_grid.windows(2).any(|w| w[1] <= w[0]) || self.n_grid[0] == 0 {
            return invalid("n_grid must be strictly increasing and positive");
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return invalid("tau must be positive");
        }
        if self.q == QChoice::Keyword(QKeyword::Estimate) && self.n_grid.len() < 2 {
            return invalid("q = \"estimate\" needs at least two values of n");
        }
        if self.h == 0 {
            return invalid("h must be at least 1");
        }
        match &self.ensemble {
            EnsembleSize::All(e) if *e == 0 => return invalid("ensemble must be at least 1"),
            EnsembleSize::PerN(v) if v.len() != self.n_grid.len() => {
                return invalid("ensemble list must have one entry per n")
            }
            EnsembleSize::PerN(v) if v.contains(&0) => return invalid("ensemble must be at least 1"),
            _ => {}
        }
        ObservableSpec::new(self.observable.g, self.observable.zeta).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        for n in &self.n_grid {
            if self.k_n.at(*n) == 0 {
                return invalid(format!("k_n is zero at n = {n}"));
            }
        }
        if self.laplace.intervals == 0 || self.laplace.y.iter().any(|y| !(*y >= 0.0)) {
            return invalid("laplace needs at least one interval and non-negative y");
        }
        match (&self.system, self.theory.target) {
            (SystemConfig::Random { alphabet, weights, .. }, target) => {
                RandomLySystem::new(alphabet.clone(), weights.clone())
                    .map_err(|e| ConfigError::Invalid(e.to_string()))?;
                if target != ZetaKind::Aperiodic {
                    return invalid("random systems are only modelled at aperiodic targets");
                }
            }
            (SystemConfig::Sequential { beta, xi, sign }, _) => {
                BetaSchedule::new(*beta, *xi, *sign, 1).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            }
            (SystemConfig::Constant { beta }, _) => {
                if !(*beta > 1.0) {
                    return invalid("beta must exceed 1");
                }
            }
        }
        if matches!(self.theory.target, ZetaKind::Boundary { .. }) && self.theory.boundary_variant.is_none() {
            return invalid("boundary targets need theory.boundary_variant");
        }
        Ok(())
    }

    pub fn ensemble_at(&self, k: usize) -> usize {
        match &self.ensemble {
            EnsembleSize::All(e) => *e,
            EnsembleSize::PerN(v) => v[k],
        }
    }

    /// The unperturbed `beta` the limit theory refers to.
    pub fn reference_beta(&self) -> Option<f64> {
        match self.system {
            SystemConfig::Sequential { beta, .. } | SystemConfig::Constant { beta } => Some(beta),
            SystemConfig::Random { .. } => None,
        }
    }
}
