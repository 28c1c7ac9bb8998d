use std::path::PathBuf;

use argmin_unique::mixture::UnrestrictedParams;
use argmin_unique::penalized::PenaltySpec;
use argmin_unique::threshold::GpSpec;
use argmin_unique::weakid::PiDomain;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Weakid,
    Mixture,
    Penalized,
    Threshold,
    GenericCheck,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Weakid => "weakid",
            Command::Mixture => "mixture",
            Command::Penalized => "penalized",
            Command::Threshold => "threshold",
            Command::GenericCheck => "generic-check",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub eps_value: Option<f64>,
    pub delta_cluster: Option<f64>,
    pub generic_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Search {
    pub n_starts: usize,
    pub local_tol: f64,
    pub max_iters: usize,
}

impl Default for Search {
    fn default() -> Self {
        Self { n_starts: 40, local_tol: 1e-10, max_iters: 5000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeakIdConfig {
    /// `1`, `2` or `linear`.
    pub example: String,
    /// A single realization; without it `draws` realizations are simulated.
    pub z: Option<Vec<f64>>,
    pub b: Option<Vec<f64>>,
    /// Row-major `H`.
    pub h: Option<Vec<Vec<f64>>>,
    pub pi0: f64,
    pub pi_domain: PiDomain,
    pub profile_points: usize,
}

impl Default for WeakIdConfig {
    fn default() -> Self {
        Self {
            example: "1".into(),
            z: None,
            b: None,
            h: None,
            pi0: 0.0,
            pi_domain: PiDomain::Interval { lo: -6.0, hi: 6.0 },
            profile_points: 1201,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixtureConfig {
    /// Single-column CSV; without it datasets are simulated from `truth`.
    pub data: Option<PathBuf>,
    pub components: usize,
    pub n: usize,
    pub truth: UnrestrictedParams,
    pub allow_large_j: bool,
}

impl Default for MixtureConfig {
    fn default() -> Self {
        Self {
            data: None,
            components: 2,
            n: 50,
            truth: UnrestrictedParams { weights: vec![0.5, 0.5], means: vec![-2.0, 2.0] },
            allow_large_j: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenalizedConfig {
    /// CSV with header `y,x1,...,xd`; without it data are simulated.
    pub data: Option<PathBuf>,
    pub penalty: PenaltySpec,
    pub n: usize,
    pub beta0: Vec<f64>,
}

impl Default for PenalizedConfig {
    fn default() -> Self {
        Self {
            data: None,
            penalty: PenaltySpec::Scad { lambda: 1.0, a: 3.7 },
            n: 20,
            beta0: vec![1.5, -1.0, 0.0, 0.0, 0.5],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdConfig {
    pub spec: GpSpec,
    pub paths: usize,
    pub eps_schedule: Vec<f64>,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { spec: GpSpec::default(), paths: 500, eps_schedule: vec![1e-2, 1e-3, 1e-4, 1e-5] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenericConfig {
    /// `quadratic` or `example1`.
    pub model: String,
    pub resolution: usize,
    pub t_range: (f64, f64),
    pub z_range: (f64, f64),
    /// Explicit scalar `t` points replacing the uniform `t` grid.
    pub t_points: Option<Vec<f64>>,
    /// Explicit `z` points replacing the uniform `z` grid.
    pub z_points: Option<Vec<Vec<f64>>>,
}

impl Default for GenericConfig {
    fn default() -> Self {
        Self {
            model: "quadratic".into(),
            resolution: 11,
            t_range: (-1.0, 1.0),
            z_range: (-1.0, 1.0),
            t_points: None,
            z_points: None,
        }
    }
}

/// Everything needed to rerun an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo replications; `0` means the command's default.
    #[serde(default)]
    pub draws: usize,
    #[serde(default)]
    pub out: Option<String>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub search: Search,
    #[serde(default)]
    pub weakid: WeakIdConfig,
    #[serde(default)]
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub penalized: PenalizedConfig,
    #[serde(default)]
    pub threshold: ThresholdConfig,
    #[serde(default)]
    pub generic: GenericConfig,
}

impl ExperimentConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            seed: 0,
            draws: 0,
            out: None,
            tolerances: Tolerances::default(),
            search: Search::default(),
            weakid: WeakIdConfig::default(),
            mixture: MixtureConfig::default(),
            penalized: PenalizedConfig::default(),
            threshold: ThresholdConfig::default(),
            generic: GenericConfig::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn out_prefix(&self) -> String {
        self.out.clone().unwrap_or_else(|| self.command.name().to_string())
    }
}
