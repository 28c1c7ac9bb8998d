//! Global minimization over a [`Domain`]: seeded multistart, clustering of
//! near-optimal points into distinct minimizers, restricted value functions,
//! and Monte Carlo estimates of the probability of multiple minimizers.

mod cluster;
mod montecarlo;
mod simplex;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::domain::{Domain, Region};
use crate::objective::Objective;
use crate::stats::child_seed;

pub use cluster::{cluster_minimizers, sublevel_components, sublevel_runs, Cluster};
pub use montecarlo::{multiplicity_draws, multiplicity_probability, DrawOutcome, MultiplicityEstimate, RandomModel};
pub use simplex::{local_descent, DescentSettings, LocalMin};

/// Finite-precision multiplicity verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Unique,
    Multiple(usize),
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Unique => write!(f, "Unique"),
            Verdict::Multiple(k) => write!(f, "Multiple({k})"),
            Verdict::Inconclusive => write!(f, "Inconclusive"),
        }
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "Unique" => Ok(Verdict::Unique),
            "Inconclusive" => Ok(Verdict::Inconclusive),
            _ => s
                .strip_prefix("Multiple(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|k| k.parse().ok())
                .map(Verdict::Multiple)
                .ok_or_else(|| format!("unknown verdict {s:?}")),
        }
    }
}

impl Serialize for Verdict {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Verdict {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminReport {
    pub global_value: f64,
    pub clusters: Vec<Cluster>,
    pub eps_value: f64,
    pub delta_cluster: f64,
    pub verdict: Verdict,
    pub n_starts: usize,
    pub n_converged: usize,
}

impl ArgminReport {
    pub fn representatives(&self) -> Vec<&[f64]> {
        self.clusters.iter().map(|c| c.representative.as_slice()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MultistartConfig {
    /// Starts per domain piece.
    pub n_starts: usize,
    pub seed: u64,
    pub local_tol: f64,
    pub max_iters: usize,
    /// Value band; `None` means `1e-6 (1 + |global value|)`.
    pub eps_value: Option<f64>,
    /// Clustering radius; `None` means `1e-3 x domain diameter`.
    pub delta_cluster: Option<f64>,
}

impl Default for MultistartConfig {
    fn default() -> Self {
        Self { n_starts: 200, seed: 0, local_tol: 1e-10, max_iters: 5000, eps_value: None, delta_cluster: None }
    }
}

impl MultistartConfig {
    pub fn with_starts(mut self, n: usize) -> Self {
        self.n_starts = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn descent(&self) -> DescentSettings {
        DescentSettings { local_tol: self.local_tol, max_iters: self.max_iters }
    }

    pub fn eps_for(&self, global_value: f64) -> f64 {
        self.eps_value.unwrap_or(1e-6 * (1.0 + global_value.abs()))
    }

    pub fn delta_for(&self, diameter: f64) -> f64 {
        self.delta_cluster.unwrap_or(1e-3 * diameter)
    }
}

/// Turns a pool of local minima into a clustered report.
///
/// The verdict is `Inconclusive` when fewer than half of the searches
/// converged or none produced a finite value.
pub fn build_report(minima: &[LocalMin], diameter: f64, cfg: &MultistartConfig) -> ArgminReport {
    let n_starts = minima.len();
    let n_converged = minima.iter().filter(|m| m.converged).count();
    let global_value = minima.iter().map(|m| m.value).filter(|v| v.is_finite()).fold(f64::INFINITY, f64::min);
    let eps_value = cfg.eps_for(if global_value.is_finite() { global_value } else { 0.0 });
    let delta_cluster = cfg.delta_for(diameter);
    let points: Vec<(Vec<f64>, f64)> =
        minima.iter().filter(|m| m.value.is_finite()).map(|m| (m.t.clone(), m.value)).collect();
    let clusters = cluster_minimizers(&points, eps_value, delta_cluster);
    let verdict = if clusters.is_empty() || 2 * n_converged < n_starts {
        Verdict::Inconclusive
    } else if clusters.len() == 1 {
        Verdict::Unique
    } else {
        Verdict::Multiple(clusters.len())
    };
    ArgminReport { global_value, clusters, eps_value, delta_cluster, verdict, n_starts, n_converged }
}

/// Local minima reached from `cfg.n_starts` low-discrepancy starts in `piece`.
pub fn piece_minima(obj: &dyn Objective, piece: &Region, z: &[f64], seed: u64, cfg: &MultistartConfig) -> Vec<LocalMin> {
    let settings = cfg.descent();
    piece
        .sample_points(cfg.n_starts.max(1), seed)
        .par_iter()
        .map(|x0| local_descent(obj, piece, z, x0, settings))
        .collect()
}

/// Seeded multistart search for all global minimizers of `Q(., z)`.
///
/// Deterministic for a fixed `cfg.seed` whatever the number of worker threads.
pub fn multistart_minimize(obj: &dyn Objective, domain: &Domain, z: &[f64], cfg: &MultistartConfig) -> ArgminReport {
    let minima: Vec<LocalMin> = domain
        .pieces()
        .iter()
        .enumerate()
        .flat_map(|(i, piece)| piece_minima(obj, piece, z, child_seed(cfg.seed, i as u64), cfg))
        .collect();
    build_report(&minima, domain.diameter(), cfg)
}

/// `V(K, z) = inf_{t in K} Q(t, z)`, by dense grid plus local polish of the
/// best grid nodes.
pub fn value_function(obj: &dyn Objective, region: &Region, z: &[f64]) -> f64 {
    let d = region.dim() as f64;
    let resolution = ((20_000f64).powf(1.0 / d).floor() as usize).clamp(2, 1001);
    let mut scored: Vec<(Vec<f64>, f64)> = region
        .grid(resolution)
        .into_par_iter()
        .map(|t| {
            let v = obj.eval(&t, z);
            (t, if v.is_finite() { v } else { f64::INFINITY })
        })
        .collect();
    scored.sort_by(|a, b| a.1.total_cmp(&b.1));
    let settings = DescentSettings { local_tol: 1e-13, max_iters: 5000 };
    let grid_best = scored.first().map(|p| p.1).unwrap_or(f64::INFINITY);
    scored
        .iter()
        .take(5)
        .map(|(t, _)| local_descent(obj, region, z, t, settings).value)
        .fold(grid_best, f64::min)
}

/// `min` of [`value_function`] over the pieces of `domain`.
pub fn domain_value_function(obj: &dyn Objective, domain: &Domain, z: &[f64]) -> f64 {
    domain.pieces().iter().map(|p| value_function(obj, p, z)).fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{FnObjective, Quadratic};

    #[test]
    fn verdict_text_round_trip() {
        for v in [Verdict::Unique, Verdict::Multiple(3), Verdict::Inconclusive] {
            assert_eq!(v.to_string().parse::<Verdict>().unwrap(), v);
        }
        assert!("Many".parse::<Verdict>().is_err());
        assert_eq!(serde_json::to_string(&Verdict::Multiple(2)).unwrap(), "\"Multiple(2)\"");
    }

    #[test]
    fn quadratic_value_function() {
        let k = Region::interval(0.0, 1.0).unwrap();
        assert!((value_function(&Quadratic, &k, &[2.0]) - 1.0).abs() < 1e-12);
        assert!(value_function(&Quadratic, &k, &[0.5]).abs() < 1e-12);
    }

    #[test]
    fn value_function_is_monotone_in_the_set() {
        let f = FnObjective::new(|t, z| (t[0] * z[0]).cos() + 0.1 * t[0]);
        let k1 = Region::interval(0.0, 2.0).unwrap();
        let dom = Domain::new(vec![k1.clone(), Region::interval(2.5, 6.0).unwrap()]).unwrap();
        let z = [1.7];
        let v1 = value_function(&f, &k1, &z);
        let v12 = domain_value_function(&f, &dom, &z);
        assert!(v1 >= v12);
        for t in k1.grid(57) {
            assert!(v1 <= f.eval(&t, &z) + 1e-15);
        }
    }

    #[test]
    fn quadratic_multistart_is_unique() {
        let dom = Domain::single(Region::symmetric(1, 10.0).unwrap());
        let rep = multistart_minimize(&Quadratic, &dom, &[1.0], &MultistartConfig::default().with_starts(20));
        assert_eq!(rep.verdict, Verdict::Unique);
        assert!((rep.clusters[0].representative[0] - 1.0).abs() < 1e-6);
        assert_eq!(rep.n_starts, 20);
    }

    #[test]
    fn double_well_is_multiple() {
        let f = FnObjective::new(|t, _| (t[0] * t[0] - 1.0).powi(2));
        let dom = Domain::single(Region::symmetric(1, 3.0).unwrap());
        let rep = multistart_minimize(&f, &dom, &[], &MultistartConfig::default().with_starts(30));
        assert_eq!(rep.verdict, Verdict::Multiple(2));
        let reps = rep.representatives();
        assert!((reps[0][0] + 1.0).abs() < 1e-5 && (reps[1][0] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn failed_searches_are_inconclusive() {
        let f = FnObjective::new(|_, _| f64::NAN);
        let dom = Domain::single(Region::symmetric(1, 3.0).unwrap());
        let rep = multistart_minimize(&f, &dom, &[], &MultistartConfig::default().with_starts(5));
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert!(rep.clusters.is_empty());
    }

    #[test]
    fn shift_and_scale_invariance() {
        let base = |t: &[f64]| (t[0] * t[0] - 1.0).powi(2) + 0.3 * t[0];
        let dom = Domain::single(Region::symmetric(1, 3.0).unwrap());
        let cfg = MultistartConfig { eps_value: Some(1e-6), ..MultistartConfig::default().with_starts(30) };
        let a = multistart_minimize(&FnObjective::new(move |t, _| base(t)), &dom, &[], &cfg);
        let b = multistart_minimize(&FnObjective::new(move |t, _| base(t) + 17.0), &dom, &[], &cfg);
        let cfg_c = MultistartConfig { eps_value: Some(1e-5), ..cfg.clone() };
        let c = multistart_minimize(&FnObjective::new(move |t, _| 10.0 * base(t)), &dom, &[], &cfg_c);
        for r in [&b, &c] {
            assert_eq!(r.verdict, a.verdict);
            assert_eq!(r.clusters.len(), a.clusters.len());
            assert!((r.clusters[0].representative[0] - a.clusters[0].representative[0]).abs() < 1e-5);
        }
    }
}
