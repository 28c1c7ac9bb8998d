//! Threshold-regression limit functional on `[-M, M]`:
//! `Q(t) = int_0^t Phi(W(y)) dy - gamma t` for a Gaussian process `W` with
//! drift `m` and an everywhere-positive covariance kernel.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::globalopt::{sublevel_components, sublevel_runs};
use crate::linalg::cholesky_with_jitter;
use crate::stats::{norm_cdf, norm_pdf, stream_rng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Kernel {
    /// `(1 + r + r^2 / 3) exp(-r)` with `r = sqrt(5) |t - s| / length`.
    Matern52 { length: f64 },
    /// `exp(-|t - s| / length)`.
    Exponential { length: f64 },
    /// `exp(-(t - s)^2 / (2 length^2))`.
    SquaredExp { length: f64 },
}

impl Kernel {
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        let d = (t - s).abs();
        match *self {
            Kernel::Matern52 { length } => {
                let r = 5f64.sqrt() * d / length;
                (1.0 + r + r * r / 3.0) * (-r).exp()
            }
            Kernel::Exponential { length } => (-d / length).exp(),
            Kernel::SquaredExp { length } => (-0.5 * (d / length).powi(2)).exp(),
        }
    }

    fn length(&self) -> f64 {
        match *self {
            Kernel::Matern52 { length } | Kernel::Exponential { length } | Kernel::SquaredExp { length } => length,
        }
    }
}

impl Default for Kernel {
    fn default() -> Self {
        Kernel::Matern52 { length: 1.0 }
    }
}

/// `m(t) = intercept + slope t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Drift {
    pub intercept: f64,
    pub slope: f64,
}

impl Default for Drift {
    fn default() -> Self {
        Self { intercept: 0.0, slope: 1.0 }
    }
}

impl Drift {
    pub fn eval(&self, t: f64) -> f64 {
        self.intercept + self.slope * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpSpec {
    /// Half-width `M` of the domain `[-M, M]`.
    pub half_width: f64,
    /// Odd number of grid points, so that `t = 0` is a node.
    pub grid_size: usize,
    pub drift: Drift,
    pub kernel: Kernel,
    pub gamma: f64,
    pub jitter: f64,
}

impl Default for GpSpec {
    fn default() -> Self {
        Self { half_width: 5.0, grid_size: 1001, drift: Drift::default(), kernel: Kernel::default(), gamma: 0.5, jitter: 1e-10 }
    }
}

impl GpSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if !(self.half_width > 0.0) || !self.half_width.is_finite() {
            return bad("half_width must be positive".into());
        }
        if self.grid_size < 3 || self.grid_size % 2 == 0 {
            return bad(format!("grid_size must be odd and >= 3, got {}", self.grid_size));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)".into());
        }
        if !(self.kernel.length() > 0.0) {
            return bad("kernel length must be positive".into());
        }
        if !(self.jitter >= 0.0) {
            return bad("jitter must be >= 0".into());
        }
        Ok(())
    }

    /// `t_k = M (2k - (G - 1)) / (G - 1)`; the middle node is exactly 0.
    pub fn grid(&self) -> Vec<f64> {
        let g = self.grid_size as f64 - 1.0;
        (0..self.grid_size).map(|k| self.half_width * (2.0 * k as f64 - g) / g).collect()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.half_width / (self.grid_size as f64 - 1.0)
    }

    pub fn zero_index(&self) -> usize {
        (self.grid_size - 1) / 2
    }
}

/// One realization of `W` on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpPath {
    pub t_grid: Vec<f64>,
    pub w: Vec<f64>,
}

/// Kernel factorization shared by all paths of one spec.
#[derive(Debug, Clone)]
pub struct GpSampler {
    spec: GpSpec,
    grid: Vec<f64>,
    mean: Vec<f64>,
    chol: DMatrix<f64>,
    /// `Sigma(t, M) / Sigma(M, M)` on the grid.
    shift: Vec<f64>,
}

impl GpSampler {
    pub fn new(spec: &GpSpec) -> Result<Self> {
        spec.validate()?;
        let grid = spec.grid();
        let n = grid.len();
        let k = DMatrix::from_fn(n, n, |i, j| spec.kernel.eval(grid[i], grid[j]));
        let min = k.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min > 0.0) {
            return Err(Error::Precondition(format!("kernel must be positive on the grid, min = {min}")));
        }
        let chol = cholesky_with_jitter(&k, spec.jitter)?;
        let last = n - 1;
        let shift = (0..n).map(|i| k[(i, last)] / k[(last, last)]).collect();
        let mean = grid.iter().map(|&t| spec.drift.eval(t)).collect();
        Ok(Self { spec: spec.clone(), grid, mean, chol, shift })
    }

    pub fn spec(&self) -> &GpSpec {
        &self.spec
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// `Sigma(t, M) / Sigma(M, M)` at every grid node.
    pub fn shift_direction(&self) -> &[f64] {
        &self.shift
    }

    /// Path `index` of the stream keyed by `seed`.
    pub fn simulate(&self, seed: u64, index: u64) -> GpPath {
        let mut rng = stream_rng(seed, index);
        let e = DVector::from_iterator(self.grid.len(), (0..self.grid.len()).map(|_| StandardNormal.sample(&mut rng)));
        let w = &self.chol * e;
        GpPath { t_grid: self.grid.clone(), w: w.iter().zip(&self.mean).map(|(a, m)| a + m).collect() }
    }

    /// `Z = W(M) - m(M)` and `B(t) = W(t) - m(t) - Sigma(t, M) / Sigma(M, M) Z`.
    pub fn decompose(&self, path: &GpPath) -> (f64, Vec<f64>) {
        let last = self.grid.len() - 1;
        let z = path.w[last] - self.mean[last];
        let b = (0..self.grid.len()).map(|i| path.w[i] - self.mean[i] - self.shift[i] * z).collect();
        (z, b)
    }
}

/// Convenience wrapper: factorizes the kernel and draws path 0 of `seed`.
pub fn simulate_path(spec: &GpSpec, seed: u64) -> Result<GpPath> {
    Ok(GpSampler::new(spec)?.simulate(seed, 0))
}

/// `Q(t_k)` for every grid node, by signed trapezoid quadrature from `t = 0`.
pub fn q_profile(spec: &GpSpec, path: &GpPath) -> Vec<f64> {
    let n = path.w.len();
    let c = (n - 1) / 2;
    let h = 2.0 * spec.half_width / (n as f64 - 1.0);
    let phi: Vec<f64> = path.w.iter().map(|&w| norm_cdf(w)).collect();
    let mut q = vec![0.0; n];
    for k in (c + 1)..n {
        q[k] = q[k - 1] + 0.5 * h * (phi[k - 1] + phi[k]) - spec.gamma * h;
    }
    for k in (0..c).rev() {
        q[k] = q[k + 1] - 0.5 * h * (phi[k] + phi[k + 1]) + spec.gamma * h;
    }
    q
}

/// `Q(t_k)` for one node.
pub fn limit_objective_path(spec: &GpSpec, path: &GpPath, k: usize) -> Result<f64> {
    if k >= path.w.len() {
        return Err(Error::InvalidParams(format!("grid index {k} out of range")));
    }
    Ok(q_profile(spec, path)[k])
}

/// A path's minimizer is judged unique at `eps` when the sublevel set
/// `{Q <= min Q + eps}` is one run of grid nodes and `Q` is not constant.
pub fn is_single_component(q: &[f64], eps: f64) -> bool {
    let (lo, hi) = value_range(q);
    hi > lo && sublevel_components(q, eps) == 1
}

fn value_range(q: &[f64]) -> (f64, f64) {
    q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdTrialReport {
    pub n_paths: usize,
    pub grid_size: usize,
    /// `eps = factor x (max Q - min Q)` per path.
    pub eps_factors: Vec<f64>,
    pub single_component_fraction: Vec<f64>,
    /// Paths with more than one component, per factor.
    pub flagged: Vec<Vec<usize>>,
    pub argmin_t: Vec<f64>,
}

impl ThresholdTrialReport {
    pub fn is_monotone(&self) -> bool {
        self.single_component_fraction.windows(2).all(|w| w[1] >= w[0])
    }
}

fn check_schedule(eps_factors: &[f64]) -> Result<()> {
    if eps_factors.is_empty() || eps_factors.iter().any(|e| !(*e > 0.0)) || eps_factors.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParams("eps schedule must be positive and strictly decreasing".into()));
    }
    Ok(())
}

/// Evaluates the sublevel diagnostic on precomputed profiles.
pub fn trial_from_profiles(profiles: &[Vec<f64>], grid: &[f64], eps_factors: &[f64]) -> Result<ThresholdTrialReport> {
    check_schedule(eps_factors)?;
    let mut fractions = Vec::new();
    let mut flagged = Vec::new();
    for &f in eps_factors {
        let bad: Vec<usize> = profiles
            .iter()
            .enumerate()
            .filter(|(_, q)| {
                let (lo, hi) = value_range(q);
                !is_single_component(q, f * (hi - lo))
            })
            .map(|(i, _)| i)
            .collect();
        fractions.push(1.0 - bad.len() as f64 / profiles.len().max(1) as f64);
        flagged.push(bad);
    }
    let argmin_t = profiles
        .iter()
        .map(|q| {
            let k = (0..q.len()).min_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap_or(0);
            grid.get(k).copied().unwrap_or(f64::NAN)
        })
        .collect();
    Ok(ThresholdTrialReport {
        n_paths: profiles.len(),
        grid_size: grid.len(),
        eps_factors: eps_factors.to_vec(),
        single_component_fraction: fractions,
        flagged,
        argmin_t,
    })
}

/// Simulates `n_paths` paths (path `i` on stream `(seed, i)`) and reports the
/// single-component fraction for each `eps` factor.
pub fn argmin_uniqueness_trial(spec: &GpSpec, n_paths: usize, eps_factors: &[f64], seed: u64) -> Result<ThresholdTrialReport> {
    check_schedule(eps_factors)?;
    let sampler = GpSampler::new(spec)?;
    let profiles: Vec<Vec<f64>> =
        (0..n_paths as u64).into_par_iter().map(|i| q_profile(spec, &sampler.simulate(seed, i))).collect();
    trial_from_profiles(&profiles, sampler.grid(), eps_factors)
}

/// Empirical covariance of `Z` and `B(t)` at one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub t: f64,
    pub covariance: f64,
    pub standard_error: f64,
    pub pass: bool,
}

/// Nodes `-M + k 2M / 11`, `k = 0..10` (ten interior points and `-M`; at
/// `t = M` the remainder `B` vanishes identically).
pub fn covariance_nodes(spec: &GpSpec) -> Vec<usize> {
    let g = spec.grid_size - 1;
    (0..11).map(|k| (k * g + 5) / 11).collect()
}

/// Checks `|cov(Z, B(t))| < 4 SE` over `n_paths` paths at `nodes`.
pub fn decomposition_covariance(spec: &GpSpec, n_paths: usize, seed: u64, nodes: &[usize]) -> Result<Vec<CovarianceCheck>> {
    if n_paths < 2 {
        return Err(Error::InvalidParams("need at least two paths".into()));
    }
    let sampler = GpSampler::new(spec)?;
    let draws: Vec<(f64, Vec<f64>)> = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let (z, b) = sampler.decompose(&sampler.simulate(seed, i));
            (z, nodes.iter().map(|&k| b[k]).collect())
        })
        .collect();
    let n = n_paths as f64;
    let zbar = draws.iter().map(|d| d.0).sum::<f64>() / n;
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(j, &k)| {
            let bbar = draws.iter().map(|d| d.1[j]).sum::<f64>() / n;
            let prods: Vec<f64> = draws.iter().map(|d| (d.0 - zbar) * (d.1[j] - bbar)).collect();
            let cov = prods.iter().sum::<f64>() / n;
            let var = prods.iter().map(|p| (p - cov).powi(2)).sum::<f64>() / (n - 1.0);
            let se = (var / n).sqrt();
            CovarianceCheck { t: sampler.grid()[k], covariance: cov, standard_error: se, pass: cov.abs() < 4.0 * se }
        })
        .collect())
}

/// `Phi(a) - Phi(b)` without cancellation in the upper tail.
fn cdf_diff(a: f64, b: f64) -> f64 {
    if a > 0.0 && b > 0.0 {
        norm_cdf(-b) - norm_cdf(-a)
    } else {
        norm_cdf(a) - norm_cdf(b)
    }
}

/// Central finite difference in `eps` of `Q(t_hi) - Q(t_lo)` along the path
/// shift `W + eps Sigma(., M) / Sigma(M, M)`. `eps` is scaled so the largest
/// shift on `[t_lo, t_hi]` is `step`.
pub fn z_shift_derivative(sampler: &GpSampler, path: &GpPath, lo: usize, hi: usize, step: f64) -> f64 {
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let k = sampler.shift_direction();
    let kmax = k[lo..=hi].iter().copied().fold(0.0, f64::max);
    if lo == hi || kmax <= 0.0 {
        return 0.0;
    }
    let eps = step / kmax;
    let h = sampler.spec().step();
    let term = |i: usize| cdf_diff(path.w[i] + eps * k[i], path.w[i] - eps * k[i]);
    let sum: f64 = (lo..hi).map(|i| 0.5 * h * (term(i) + term(i + 1))).sum();
    sum / (2.0 * eps)
}

/// Trapezoid value of `int_{t_lo}^{t_hi} phi(W(y)) Sigma(y, M) / Sigma(M, M) dy`.
pub fn z_shift_integral(sampler: &GpSampler, path: &GpPath, lo: usize, hi: usize) -> f64 {
    let (lo, hi) = (lo.min(hi), lo.max(hi));
    let k = sampler.shift_direction();
    let h = sampler.spec().step();
    let f = |i: usize| norm_pdf(path.w[i]) * k[i];
    (lo..hi).map(|i| 0.5 * h * (f(i) + f(i + 1))).sum()
}

/// The global grid minimizer and the best competing candidate: the lowest
/// other local-minimum run at `eps`, else the lower endpoint not equal to the
/// argmin. Returned as `(lower index, higher index)`.
pub fn competing_pair(q: &[f64]) -> (usize, usize) {
    let n = q.len();
    let best = (0..n).min_by(|&a, &b| q[a].total_cmp(&q[b])).unwrap_or(0);
    let mut cands: Vec<usize> = (1..n.saturating_sub(1)).filter(|&i| q[i] <= q[i - 1] && q[i] <= q[i + 1]).collect();
    cands.extend([0, n - 1]);
    let other = cands
        .into_iter()
        .filter(|&i| i.abs_diff(best) > 1)
        .min_by(|&a, &b| q[a].total_cmp(&q[b]))
        .unwrap_or(if best == 0 { n - 1 } else { 0 });
    (best.min(other), best.max(other))
}

/// Run starts and minimizer indices of the `eps`-sublevel set, exposed for reports.
pub fn sublevel_minimizers(q: &[f64], eps: f64) -> Vec<usize> {
    sublevel_runs(q, eps).into_iter().map(|(_, m)| m).collect()
}
