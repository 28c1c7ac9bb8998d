use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ArgminReport, MultistartConfig, Verdict};
use crate::error::Result;
use crate::stats::{child_seed, stream_rng};

/// A random objective together with the law of its randomness `z`.
pub trait RandomModel: Sync {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    fn locate_minimizers(&self, z: &[f64], cfg: &MultistartConfig) -> Result<ArgminReport>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawOutcome {
    pub index: usize,
    pub z: Vec<f64>,
    pub report: ArgminReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiplicityEstimate {
    pub draws: usize,
    pub multiple: usize,
    pub inconclusive: usize,
    pub fraction: f64,
    pub standard_error: f64,
    /// Indices of draws judged `Multiple`.
    pub flagged: Vec<usize>,
}

impl MultiplicityEstimate {
    pub fn from_outcomes(outcomes: &[DrawOutcome]) -> Self {
        let draws = outcomes.len();
        let flagged: Vec<usize> =
            outcomes.iter().filter(|o| matches!(o.report.verdict, Verdict::Multiple(_))).map(|o| o.index).collect();
        let inconclusive = outcomes.iter().filter(|o| o.report.verdict == Verdict::Inconclusive).count();
        let p = flagged.len() as f64 / draws.max(1) as f64;
        Self {
            draws,
            multiple: flagged.len(),
            inconclusive,
            fraction: p,
            standard_error: (p * (1.0 - p) / draws.max(1) as f64).sqrt(),
            flagged,
        }
    }
}

/// Runs the detector on `n_draws` independent draws of `z`.
///
/// Draw `i` uses RNG stream `(seed, i)` for `z` and multistart seed
/// `child_seed(seed, i)`, so results do not depend on execution order.
pub fn multiplicity_draws(
    model: &dyn RandomModel,
    n_draws: usize,
    seed: u64,
    cfg: &MultistartConfig,
) -> Result<Vec<DrawOutcome>> {
    (0..n_draws)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let z = model.sample(&mut rng);
            let draw_cfg = MultistartConfig { seed: child_seed(seed, i as u64), ..cfg.clone() };
            let report = model.locate_minimizers(&z, &draw_cfg)?;
            Ok(DrawOutcome { index: i, z, report })
        })
        .collect()
}

/// Fraction of draws with a `Multiple` verdict and its binomial standard error.
pub fn multiplicity_probability(
    model: &dyn RandomModel,
    n_draws: usize,
    seed: u64,
    cfg: &MultistartConfig,
) -> Result<MultiplicityEstimate> {
    if n_draws == 0 {
        return Err(crate::error::Error::InvalidParams("n_draws must be >= 1".into()));
    }
    Ok(MultiplicityEstimate::from_outcomes(&multiplicity_draws(model, n_draws, seed, cfg)?))
}
