//! Penalized least squares `Q(beta) = 0.5 ||Y - X beta||^2 + sum_k rho(|beta_k|)`
//! with L0, bridge, SCAD and MCP penalties.

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Region};
use crate::error::{Error, Result};
use crate::globalopt::{build_report, piece_minima, ArgminReport, LocalMin, MultistartConfig, RandomModel};
use crate::linalg::{inverse_condition, least_squares};
use crate::objective::Objective;
use crate::stats::{child_seed, stream_rng};

/// Largest dimension for which the `2^d` support partition is built.
pub const MAX_ENUMERATION_DIM: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum PenaltySpec {
    L0 { lambda: f64 },
    Bridge { lambda: f64, q: f64 },
    Scad { lambda: f64, a: f64 },
    Mcp { lambda: f64, gamma: f64 },
}

impl PenaltySpec {
    /// `lambda = 0` is accepted and gives ordinary least squares.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.into()));
        if !(self.lambda() >= 0.0) || !self.lambda().is_finite() {
            return bad("lambda must be >= 0");
        }
        match *self {
            PenaltySpec::Bridge { q, .. } if !(q > 0.0 && q < 1.0) => bad("bridge q must lie in (0, 1)"),
            PenaltySpec::Scad { a, .. } if !(a > 2.0) => bad("SCAD a must exceed 2"),
            PenaltySpec::Mcp { gamma, .. } if !(gamma > 1.0) => bad("MCP gamma must exceed 1"),
            _ => Ok(()),
        }
    }

    pub fn lambda(&self) -> f64 {
        match *self {
            PenaltySpec::L0 { lambda }
            | PenaltySpec::Bridge { lambda, .. }
            | PenaltySpec::Scad { lambda, .. }
            | PenaltySpec::Mcp { lambda, .. } => lambda,
        }
    }

    /// Penalties that jump or have infinite slope at zero need the support partition.
    pub fn is_piecewise(&self) -> bool {
        matches!(self, PenaltySpec::L0 { .. } | PenaltySpec::Bridge { .. })
    }

    /// `rho(|t|)`.
    pub fn rho(&self, t: f64) -> f64 {
        let t = t.abs();
        match *self {
            PenaltySpec::L0 { lambda } => {
                if t != 0.0 {
                    lambda
                } else {
                    0.0
                }
            }
            PenaltySpec::Bridge { lambda, q } => lambda * t.powf(q),
            PenaltySpec::Scad { lambda, a } => {
                if t <= lambda {
                    lambda * t
                } else if t <= a * lambda {
                    (2.0 * a * lambda * t - t * t - lambda * lambda) / (2.0 * (a - 1.0))
                } else {
                    (a + 1.0) * lambda * lambda / 2.0
                }
            }
            PenaltySpec::Mcp { lambda, gamma } => {
                if t <= gamma * lambda {
                    lambda * t - t * t / (2.0 * gamma)
                } else {
                    gamma * lambda * lambda / 2.0
                }
            }
        }
    }

    /// Right derivative of `rho` at `t > 0` (SCAD and MCP only; used in tests).
    pub fn rho_prime(&self, t: f64) -> Option<f64> {
        match *self {
            PenaltySpec::Scad { lambda, a } => Some(if t <= lambda {
                lambda
            } else {
                (a * lambda - t).max(0.0) / (a - 1.0)
            }),
            PenaltySpec::Mcp { lambda, gamma } => Some((lambda - t / gamma).max(0.0)),
            _ => None,
        }
    }
}

pub fn penalty_value(spec: &PenaltySpec, beta: &[f64]) -> f64 {
    beta.iter().map(|b| spec.rho(*b)).sum()
}

/// Response and full-column-rank design.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionData {
    y: DVector<f64>,
    x: DMatrix<f64>,
}

impl RegressionData {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch { expected: x.nrows(), got: y.len() });
        }
        if x.ncols() == 0 || x.nrows() < x.ncols() {
            return Err(Error::InvalidParams("need n >= d >= 1".into()));
        }
        if y.iter().chain(x.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("data must be finite".into()));
        }
        if inverse_condition(&x) <= 1e-10 {
            return Err(Error::SingularDesign);
        }
        Ok(Self { y: DVector::from_vec(y), x })
    }

    /// Builds the design from rows.
    pub fn from_rows(y: Vec<f64>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidParams("ragged design rows".into()));
        }
        let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
        Self::new(y, x)
    }

    /// Gaussian design with iid N(0, 1) entries and `Y ~ N(X beta0, I)`.
    pub fn simulate(n: usize, beta0: &[f64], seed: u64) -> Result<Self> {
        let mut rng = stream_rng(seed, 0);
        let x = DMatrix::<f64>::from_fn(n, beta0.len(), |_, _| StandardNormal.sample(&mut rng));
        let y = draw_response(&x, beta0, &mut rng);
        Self::new(y, x)
    }

    pub fn y(&self) -> &[f64] {
        self.y.as_slice()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_response(&self, y: Vec<f64>) -> Result<Self> {
        if y.len() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: y.len() });
        }
        Ok(Self { y: DVector::from_vec(y), x: self.x.clone() })
    }

    pub fn ols(&self) -> Result<Vec<f64>> {
        Ok(least_squares(&self.x, &self.y)?.as_slice().to_vec())
    }

    fn rss_half(&self, y: &[f64], beta: &[f64]) -> f64 {
        let b = DVector::from_column_slice(beta);
        let fit = &self.x * b;
        0.5 * y.iter().zip(fit.iter()).map(|(a, f)| (a - f).powi(2)).sum::<f64>()
    }

    /// Half-width of a box that contains every `beta` with `Q(beta) <= Q(0)`.
    pub fn search_radius(&self) -> f64 {
        let sv = self.x.clone().svd(false, false).singular_values;
        let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
        1.05 * 2.0 * self.y.norm() / smin + 1e-6
    }
}

fn draw_response(x: &DMatrix<f64>, beta0: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mean = x * DVector::from_column_slice(beta0);
    mean.iter()
        .map(|m| {
            let e: f64 = StandardNormal.sample(rng);
            m + e
        })
        .collect()
}

pub fn penalized_objective(spec: &PenaltySpec, data: &RegressionData, beta: &[f64]) -> f64 {
    data.rss_half(data.y(), beta) + penalty_value(spec, beta)
}

/// `Q(beta, Y)` with `t = beta`, `z = Y` and the design held fixed.
#[derive(Debug, Clone)]
pub struct PenalizedObjective {
    pub spec: PenaltySpec,
    pub data: RegressionData,
    /// Replaces an L0 penalty by the constant `lambda |support|` inside a piece.
    pub l0_support: Option<usize>,
}

impl PenalizedObjective {
    pub fn new(spec: PenaltySpec, data: RegressionData) -> Self {
        Self { spec, data, l0_support: None }
    }
}

impl Objective for PenalizedObjective {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64 {
        let pen = match (self.spec, self.l0_support) {
            (PenaltySpec::L0 { lambda }, Some(k)) => lambda * k as f64,
            _ => penalty_value(&self.spec, t),
        };
        self.data.rss_half(z, t) + pen
    }

    fn grad_z(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let fit = self.data.x() * DVector::from_column_slice(t);
        Some(z.iter().zip(fit.iter()).map(|(y, f)| y - f).collect())
    }
}

/// Support-indicator pieces for the L0 and bridge penalties: in piece `S`
/// the coordinates outside `S` are fixed at zero. SCAD and MCP are
/// continuous and use one piece. Pieces are truncated to `[-r, r]^d`.
pub fn partition_domain(spec: &PenaltySpec, d: usize, radius: f64) -> Result<Domain> {
    if d == 0 {
        return Err(Error::InvalidParams("d must be >= 1".into()));
    }
    let cube = Region::symmetric(d, radius)?;
    if !spec.is_piecewise() {
        return Ok(Domain::single(cube));
    }
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::ExplicitBound { d, max: MAX_ENUMERATION_DIM });
    }
    let pieces = (0..1usize << d)
        .map(|mask| {
            let mut r = cube.clone();
            for k in (0..d).filter(|k| mask & (1 << k) == 0) {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                r = r.with_equality(e, 0.0)?;
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Domain::new(pieces)
}

fn support_columns(mask: usize, d: usize) -> Vec<usize> {
    (0..d).filter(|k| mask & (1 << k) != 0).collect()
}

/// Exact L0 minimization: least squares on every support.
pub fn l0_enumerate(lambda: f64, data: &RegressionData) -> Result<Vec<LocalMin>> {
    let d = data.d();
    if d > MAX_ENUMERATION_DIM {
        return Err(Error::ExplicitBound { d, max: MAX_ENUMERATION_DIM });
    }
    (0..1usize << d)
        .into_par_iter()
        .map(|mask| {
            let cols = support_columns(mask, d);
            let xs = data.x().select_columns(cols.iter());
            let bs = least_squares(&xs, &DVector::from_column_slice(data.y()))?;
            let mut beta = vec![0.0; d];
            for (c, b) in cols.iter().zip(bs.iter()) {
                beta[*c] = *b;
            }
            let value = data.rss_half(data.y(), &beta) + lambda * cols.len() as f64;
            Ok(LocalMin { t: beta, value, converged: true })
        })
        .collect()
}

/// Global minimizers of the penalized objective. L0 is solved exactly by
/// support enumeration; the other penalties use multistart over
/// [`partition_domain`].
pub fn global_minimize(spec: &PenaltySpec, data: &RegressionData, cfg: &MultistartConfig) -> Result<ArgminReport> {
    spec.validate()?;
    match spec {
        PenaltySpec::L0 { lambda } => {
            let radius = data.search_radius();
            let minima = l0_enumerate(*lambda, data)?;
            Ok(build_report(&minima, 2.0 * radius * (data.d() as f64).sqrt(), cfg))
        }
        _ => global_minimize_multistart(spec, data, cfg),
    }
}

/// Multistart over the support partition for every penalty kind,
/// including L0 (used to cross-check the enumeration).
pub fn global_minimize_multistart(spec: &PenaltySpec, data: &RegressionData, cfg: &MultistartConfig) -> Result<ArgminReport> {
    spec.validate()?;
    let domain = partition_domain(spec, data.d(), data.search_radius())?;
    let minima: Vec<LocalMin> = domain
        .pieces()
        .iter()
        .enumerate()
        .flat_map(|(i, piece)| {
            let support = matches!(spec, PenaltySpec::L0 { .. }).then(|| support_columns(i, data.d()).len());
            let obj = PenalizedObjective { spec: *spec, data: data.clone(), l0_support: support };
            let seed = child_seed(cfg.seed, i as u64);
            piece_minima(&obj, piece, data.y(), seed, cfg)
        })
        .map(|mut m| {
            // report true objective values (L0 pieces use a constant penalty)
            m.value = penalized_objective(spec, data, &m.t);
            m
        })
        .collect();
    Ok(build_report(&minima, domain.diameter(), cfg))
}

/// Result document for one fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedFit {
    pub beta: Vec<f64>,
    pub support: Vec<usize>,
    pub value: f64,
    pub verdict: crate::globalopt::Verdict,
}

/// Coefficients below this fraction of `1 + max |beta_k|` are reported as exact zeros.
pub const SUPPORT_TOL: f64 = 1e-8;

impl PenalizedFit {
    pub fn from_report(report: &ArgminReport) -> Option<Self> {
        let best = report.clusters.iter().min_by(|a, b| a.value.total_cmp(&b.value))?;
        let scale = 1.0 + best.representative.iter().fold(0.0_f64, |m, b| m.max(b.abs()));
        let beta: Vec<f64> =
            best.representative.iter().map(|&b| if b.abs() <= SUPPORT_TOL * scale { 0.0 } else { b }).collect();
        Some(Self {
            support: beta.iter().enumerate().filter(|(_, b)| **b != 0.0).map(|(k, _)| k).collect(),
            beta,
            value: best.value,
            verdict: report.verdict,
        })
    }
}

/// Fixed design, `Y ~ N(X beta0, I)` redrawn per trial.
#[derive(Debug, Clone)]
pub struct PenalizedModel {
    pub spec: PenaltySpec,
    pub design: RegressionData,
    pub beta0: Vec<f64>,
}

impl RandomModel for PenalizedModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        draw_response(self.design.x(), &self.beta0, rng)
    }

    fn locate_minimizers(&self, z: &[f64], cfg: &MultistartConfig) -> Result<ArgminReport> {
        global_minimize(&self.spec, &self.design.with_response(z.to_vec())?, cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::globalopt::Verdict;
    use proptest::prelude::*;

    fn specs(lambda: f64) -> [PenaltySpec; 4] {
        [
            PenaltySpec::L0 { lambda },
            PenaltySpec::Bridge { lambda, q: 0.5 },
            PenaltySpec::Scad { lambda, a: 3.7 },
            PenaltySpec::Mcp { lambda, gamma: 3.0 },
        ]
    }

    fn toy() -> RegressionData {
        RegressionData::new(vec![1.0, 3.0], DMatrix::from_row_slice(2, 1, &[1.0, 1.0])).unwrap()
    }

    #[test]
    fn penalty_examples() {
        for s in specs(1.0) {
            assert_eq!(penalty_value(&s, &[0.0, 0.0]), 0.0);
        }
        assert_eq!(penalty_value(&PenaltySpec::L0 { lambda: 1.0 }, &[0.0, 3.0, -2.0]), 2.0);
        let scad = PenaltySpec::Scad { lambda: 1.0, a: 3.7 };
        assert!((scad.rho(3.7) - 2.35).abs() < 1e-12);
        assert!((scad.rho(10.0) - 2.35).abs() < 1e-12);
    }

    #[test]
    fn scad_and_mcp_integrate_their_derivatives() {
        for s in [PenaltySpec::Scad { lambda: 0.8, a: 3.7 }, PenaltySpec::Mcp { lambda: 1.3, gamma: 2.5 }] {
            for &t in &[0.3, 1.0, 2.0, 3.5, 6.0] {
                let n = 20_000;
                let h = t / n as f64;
                let integral: f64 =
                    (0..n).map(|i| 0.5 * h * (s.rho_prime(i as f64 * h).unwrap() + s.rho_prime((i + 1) as f64 * h).unwrap())).sum();
                assert!((integral - s.rho(t)).abs() < 1e-6, "{s:?} at {t}");
            }
        }
    }

    #[test]
    fn invalid_specs() {
        assert!(PenaltySpec::Bridge { lambda: 1.0, q: 1.0 }.validate().is_err());
        assert!(PenaltySpec::Scad { lambda: 1.0, a: 2.0 }.validate().is_err());
        assert!(PenaltySpec::Mcp { lambda: 1.0, gamma: 1.0 }.validate().is_err());
        assert!(PenaltySpec::L0 { lambda: -1.0 }.validate().is_err());
        assert!(PenaltySpec::L0 { lambda: 0.0 }.validate().is_ok());
    }

    #[test]
    fn rank_deficient_design_rejected() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        assert!(matches!(RegressionData::new(vec![1.0, 2.0, 3.0], x), Err(Error::SingularDesign)));
    }

    #[test]
    fn objective_examples() {
        let data = toy();
        let l0 = PenaltySpec::L0 { lambda: 10.0 };
        assert_eq!(penalized_objective(&l0, &data, &[0.0]), 5.0);
        assert_eq!(penalized_objective(&l0, &data, &[2.0]), 11.0);
        let rep = global_minimize(&l0, &data, &MultistartConfig::default()).unwrap();
        assert_eq!(rep.verdict, Verdict::Unique);
        assert_eq!(rep.clusters[0].representative, vec![0.0]);
        assert_eq!(rep.global_value, 5.0);
    }

    #[test]
    fn partition_sizes() {
        assert_eq!(partition_domain(&PenaltySpec::L0 { lambda: 1.0 }, 1, 10.0).unwrap().pieces().len(), 2);
        assert_eq!(partition_domain(&PenaltySpec::L0 { lambda: 1.0 }, 3, 10.0).unwrap().pieces().len(), 8);
        assert_eq!(partition_domain(&PenaltySpec::Scad { lambda: 1.0, a: 3.7 }, 2, 10.0).unwrap().pieces().len(), 1);
        assert!(matches!(
            partition_domain(&PenaltySpec::L0 { lambda: 1.0 }, 21, 10.0),
            Err(Error::ExplicitBound { d: 21, max: 20 })
        ));
    }

    #[test]
    fn zero_lambda_gives_ols() {
        let data = RegressionData::simulate(20, &[1.0, -0.5, 0.0], 3).unwrap();
        let ols = data.ols().unwrap();
        // normal equations oracle
        let x = data.x();
        let xty = x.transpose() * DVector::from_column_slice(data.y());
        let b = (x.transpose() * x).lu().solve(&xty).unwrap();
        for (a, c) in ols.iter().zip(b.iter()) {
            assert!((a - c).abs() < 1e-10);
        }
        let cfg = MultistartConfig::default().with_starts(3);
        for s in specs(0.0) {
            let rep = global_minimize(&s, &data, &cfg).unwrap();
            assert_eq!(rep.verdict, Verdict::Unique, "{s:?}");
            for (a, c) in rep.clusters[0].representative.iter().zip(&ols) {
                assert!((a - c).abs() < 1e-6, "{s:?}: {a} vs {c}");
            }
        }
    }

    #[test]
    fn l0_multistart_matches_enumeration() {
        let data = RegressionData::simulate(20, &[1.5, 0.0, -1.0], 9).unwrap();
        let spec = PenaltySpec::L0 { lambda: 2.0 };
        let exact = global_minimize(&spec, &data, &MultistartConfig::default()).unwrap();
        let ms = global_minimize_multistart(&spec, &data, &MultistartConfig::default().with_starts(2)).unwrap();
        assert!((exact.global_value - ms.global_value).abs() < 1e-8);
    }

    proptest! {
        #[test]
        fn penalties_are_even_and_monotone(a in 0.0f64..8.0, b in 0.0f64..8.0, lambda in 0.01f64..3.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            for s in specs(lambda) {
                prop_assert_eq!(s.rho(lo), s.rho(-lo));
                prop_assert!(s.rho(lo) <= s.rho(hi) + 1e-12);
                prop_assert!(s.rho(lo) >= 0.0);
            }
        }
    }
}
