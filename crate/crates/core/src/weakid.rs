//! Limit of the profiled objective under weak identification:
//!
//! `Q(pi, z) = 2 z' H^{1/2}' g(pi) - (H^{1/2} z + g(pi))' P(pi) (H^{1/2} z + g(pi)) + kappa(pi)`
//!
//! with `g(pi) = H^{1/2} [0; h_beta(beta0, pi) b - h_beta(beta0, pi0) b]`,
//! `S(pi) = H^{1/2} [I; h_beta(beta0, pi)]` and `P = S (S'S)^{-1} S'`.
//! `pi` is scalar.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Domain, Region};
use crate::error::{Error, Result};
use crate::globalopt::{multistart_minimize, ArgminReport, MultistartConfig, RandomModel};
use crate::linalg::{numerical_rank_scaled, sym_sqrt};
use crate::objective::Objective;
use crate::stats::stream_rng;

pub type HFn = Arc<dyn Fn(&[f64], f64) -> Vec<f64> + Send + Sync>;
/// Returns the `d_h x d_beta` Jacobian of `h` in `beta`.
pub type HBetaFn = Arc<dyn Fn(&[f64], f64) -> DMatrix<f64> + Send + Sync>;
pub type KappaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Largest `|pi|` reachable on the real-line chart.
pub const REAL_LINE_BOUND: f64 = 1e6;

/// Parameter space for `pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PiDomain {
    Interval { lo: f64, hi: f64 },
    /// All of `R` (up to `|pi| <= 1e6`), searched in the chart `pi = tan(theta)`.
    RealLine,
}

impl PiDomain {
    /// Chart coordinate to `pi`.
    pub fn to_pi(&self, t: f64) -> f64 {
        match self {
            PiDomain::Interval { .. } => t,
            PiDomain::RealLine => t.tan(),
        }
    }

    pub fn to_chart(&self, pi: f64) -> f64 {
        match self {
            PiDomain::Interval { .. } => pi,
            PiDomain::RealLine => pi.atan(),
        }
    }

    /// Interval of chart coordinates.
    pub fn chart_bounds(&self) -> (f64, f64) {
        match *self {
            PiDomain::Interval { lo, hi } => (lo, hi),
            PiDomain::RealLine => (-REAL_LINE_BOUND.atan(), REAL_LINE_BOUND.atan()),
        }
    }

    pub fn region(&self) -> Result<Region> {
        let (lo, hi) = self.chart_bounds();
        Region::interval(lo, hi)
    }

    /// `n` points evenly spaced in the chart, mapped to `pi`.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.chart_bounds();
        (0..n)
            .map(|i| self.to_pi(if n == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 }))
            .collect()
    }
}

/// `g`, `S` and `P` at one `pi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitComponents {
    pub g: DVector<f64>,
    pub s: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

#[derive(Clone)]
pub struct WeakIdModel {
    d_beta: usize,
    d_h: usize,
    h: HFn,
    h_beta: Option<HBetaFn>,
    beta0: Vec<f64>,
    pi0: f64,
    b: Vec<f64>,
    h_mat: DMatrix<f64>,
    h_sqrt: DMatrix<f64>,
    kappa: Option<KappaFn>,
    pi_domain: PiDomain,
}

impl fmt::Debug for WeakIdModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("WeakIdModel")
            .field("d_beta", &self.d_beta)
            .field("d_h", &self.d_h)
            .field("beta0", &self.beta0)
            .field("pi0", &self.pi0)
            .field("b", &self.b)
            .field("pi_domain", &self.pi_domain)
            .finish_non_exhaustive()
    }
}

impl WeakIdModel {
    /// Model with `beta0 = 0`, `pi0 = 0`, `b = 0`, `H = I`, `kappa = 0`,
    /// `pi` in `[-6, 6]` and a finite-difference `h_beta`.
    pub fn new(d_beta: usize, d_h: usize, h: HFn) -> Result<Self> {
        if d_beta == 0 || d_h == 0 {
            return Err(Error::InvalidParams("d_beta and d_h must be positive".into()));
        }
        let d_z = d_beta + d_h;
        Ok(Self {
            d_beta,
            d_h,
            h,
            h_beta: None,
            beta0: vec![0.0; d_beta],
            pi0: 0.0,
            b: vec![0.0; d_beta],
            h_mat: DMatrix::identity(d_z, d_z),
            h_sqrt: DMatrix::identity(d_z, d_z),
            kappa: None,
            pi_domain: PiDomain::Interval { lo: -6.0, hi: 6.0 },
        })
    }

    pub fn with_h_beta(mut self, h_beta: HBetaFn) -> Self {
        self.h_beta = Some(h_beta);
        self
    }

    pub fn with_beta0(mut self, beta0: Vec<f64>) -> Result<Self> {
        self.check_len(beta0.len(), self.d_beta)?;
        self.beta0 = beta0;
        Ok(self)
    }

    pub fn with_pi0(mut self, pi0: f64) -> Self {
        self.pi0 = pi0;
        self
    }

    pub fn with_b(mut self, b: Vec<f64>) -> Result<Self> {
        self.check_len(b.len(), self.d_beta)?;
        self.b = b;
        Ok(self)
    }

    /// Sets `H`; it must be symmetric positive definite.
    pub fn with_h(mut self, h: DMatrix<f64>) -> Result<Self> {
        let d_z = self.d_z();
        if h.nrows() != d_z || h.ncols() != d_z {
            return Err(Error::DimensionMismatch { expected: d_z, got: h.nrows() });
        }
        if (&h - h.transpose()).abs().max() > 1e-12 * (1.0 + h.abs().max()) {
            return Err(Error::InvalidParams("H must be symmetric".into()));
        }
        if h.clone().symmetric_eigen().eigenvalues.iter().any(|l| !(*l > 0.0)) {
            return Err(Error::InvalidParams("H must be positive definite".into()));
        }
        self.h_sqrt = sym_sqrt(&h);
        self.h_mat = h;
        Ok(self)
    }

    pub fn with_kappa(mut self, kappa: KappaFn) -> Self {
        self.kappa = Some(kappa);
        self
    }

    pub fn with_pi_domain(mut self, pi_domain: PiDomain) -> Result<Self> {
        if let PiDomain::Interval { lo, hi } = pi_domain {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidRegion(format!("bad pi interval [{lo}, {hi}]")));
            }
        }
        self.pi_domain = pi_domain;
        Ok(self)
    }

    fn check_len(&self, got: usize, expected: usize) -> Result<()> {
        if got == expected {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, got })
        }
    }

    pub fn d_beta(&self) -> usize {
        self.d_beta
    }

    pub fn d_h(&self) -> usize {
        self.d_h
    }

    pub fn d_z(&self) -> usize {
        self.d_beta + self.d_h
    }

    pub fn beta0(&self) -> &[f64] {
        &self.beta0
    }

    pub fn pi_domain(&self) -> PiDomain {
        self.pi_domain
    }

    pub fn h_matrix(&self) -> &DMatrix<f64> {
        &self.h_mat
    }

    pub fn h(&self, beta: &[f64], pi: f64) -> Vec<f64> {
        (self.h)(beta, pi)
    }

    pub fn has_analytic_h_beta(&self) -> bool {
        self.h_beta.is_some()
    }

    /// Analytic Jacobian if supplied, else central differences.
    pub fn h_beta(&self, beta: &[f64], pi: f64) -> DMatrix<f64> {
        match &self.h_beta {
            Some(f) => f(beta, pi),
            None => self.fd_h_beta(beta, pi),
        }
    }

    pub fn fd_h_beta(&self, beta: &[f64], pi: f64) -> DMatrix<f64> {
        let mut jac = DMatrix::zeros(self.d_h, self.d_beta);
        for k in 0..self.d_beta {
            let step = 1e-6 * (1.0 + beta[k].abs());
            let mut up = beta.to_vec();
            let mut dn = beta.to_vec();
            up[k] += step;
            dn[k] -= step;
            let (fu, fd) = (self.h(&up, pi), self.h(&dn, pi));
            for r in 0..self.d_h {
                jac[(r, k)] = (fu[r] - fd[r]) / (2.0 * step);
            }
        }
        jac
    }

    pub fn kappa(&self, pi: f64) -> f64 {
        self.kappa.as_ref().map_or(0.0, |k| k(pi))
    }

    /// `g(pi)`, `S(pi)` and `P(pi)`.
    pub fn components(&self, pi: f64) -> Result<LimitComponents> {
        let (db, dh) = (self.d_beta, self.d_h);
        let hb = self.h_beta(&self.beta0, pi);
        let b = DVector::from_column_slice(&self.b);
        let mut stacked = DMatrix::zeros(db + dh, db);
        stacked.view_mut((0, 0), (db, db)).fill_with_identity();
        stacked.view_mut((db, 0), (dh, db)).copy_from(&hb);
        let s = &self.h_sqrt * stacked;
        let shift = &hb * &b - self.h_beta(&self.beta0, self.pi0) * &b;
        let mut inner = DVector::zeros(db + dh);
        inner.rows_mut(db, dh).copy_from(&shift);
        let g = &self.h_sqrt * inner;
        let sts = s.transpose() * &s;
        let inv = sts.try_inverse().ok_or(Error::SingularDesign)?;
        let p = &s * inv * s.transpose();
        Ok(LimitComponents { g, s, p })
    }

    /// `Q(pi, z)`.
    pub fn limit_objective(&self, pi: f64, z: &[f64]) -> Result<f64> {
        self.check_len(z.len(), self.d_z())?;
        let c = self.components(pi)?;
        let z = DVector::from_column_slice(z);
        let hz = &self.h_sqrt * &z;
        let w = &hz + &c.g;
        Ok(2.0 * hz.dot(&c.g) - w.dot(&(&c.p * &w)) + self.kappa(pi))
    }

    /// `dQ/dz = 2 H^{1/2}' g - 2 H^{1/2}' P (H^{1/2} z + g)`.
    pub fn grad_z_at(&self, pi: f64, z: &[f64]) -> Result<Vec<f64>> {
        self.check_len(z.len(), self.d_z())?;
        let c = self.components(pi)?;
        let z = DVector::from_column_slice(z);
        let w = &self.h_sqrt * &z + &c.g;
        let ht = self.h_sqrt.transpose();
        Ok((2.0 * (&ht * &c.g) - 2.0 * (&ht * (&c.p * w))).as_slice().to_vec())
    }

    /// `(pi, Q(pi, z))` on `grid`.
    pub fn profile(&self, z: &[f64], grid: &[f64]) -> Result<Vec<(f64, f64)>> {
        grid.iter().map(|&pi| Ok((pi, self.limit_objective(pi, z)?))).collect()
    }

    pub fn domain(&self) -> Result<Domain> {
        Ok(Domain::single(self.pi_domain.region()?))
    }

    /// Global minimizers of `Q(., z)` with representatives reported in `pi`.
    pub fn locate(&self, z: &[f64], cfg: &MultistartConfig) -> Result<ArgminReport> {
        self.check_len(z.len(), self.d_z())?;
        let mut report = multistart_minimize(self, &self.domain()?, z, cfg);
        for c in &mut report.clusters {
            c.representative = c.representative.iter().map(|&t| self.pi_domain.to_pi(t)).collect();
        }
        Ok(report)
    }

    /// Draws `z ~ N(0, I)`.
    pub fn sample_z(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..self.d_z()).map(|_| StandardNormal.sample(rng)).collect()
    }
}

/// `t` is the chart coordinate of `pi`.
impl Objective for WeakIdModel {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64 {
        self.limit_objective(self.pi_domain.to_pi(t[0]), z).unwrap_or(f64::NAN)
    }

    fn grad_z(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        self.grad_z_at(self.pi_domain.to_pi(t[0]), z).ok()
    }
}

impl RandomModel for WeakIdModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.sample_z(rng)
    }

    fn locate_minimizers(&self, z: &[f64], cfg: &MultistartConfig) -> Result<ArgminReport> {
        self.locate(z, cfg)
    }
}

/// Outcome of a rank or injectivity condition check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    pub pass: bool,
    pub checked: usize,
    pub failures: usize,
    /// First failing case, as `(pi1, pi2)` for (c) or a beta sample for (d).
    pub witness: Option<Vec<f64>>,
}

/// Rank condition: `h_beta(beta0, pi1) - h_beta(beta0, pi2)` has rank `d_h`
/// for every pair of distinct grid points (SVD rank, threshold `1e-8` times
/// the larger of `sigma_max` and the size of the two Jacobians, so exact
/// cancellation up to rounding counts as rank 0).
pub fn condition_c_check(model: &WeakIdModel, pi_grid: &[f64]) -> ConditionReport {
    let jac: Vec<DMatrix<f64>> = pi_grid.iter().map(|&p| model.h_beta(model.beta0(), p)).collect();
    let mut checked = 0;
    let mut failures = 0;
    let mut witness = None;
    for i in 0..pi_grid.len() {
        for j in (i + 1)..pi_grid.len() {
            if pi_grid[i] == pi_grid[j] {
                continue;
            }
            checked += 1;
            let scale = jac[i].norm().max(jac[j].norm());
            if numerical_rank_scaled(&(&jac[i] - &jac[j]), 1e-8, scale) != model.d_h() {
                failures += 1;
                witness.get_or_insert_with(|| vec![pi_grid[i], pi_grid[j]]);
            }
        }
    }
    ConditionReport { condition: "c".into(), pass: failures == 0, checked, failures, witness }
}

/// Largest flagged fraction of beta samples for which condition (d) still passes.
pub const CONDITION_D_MAX_FLAGGED: f64 = 0.01;

/// Injectivity condition: for each beta, `pi -> h(beta, pi) - h(beta0, pi)`
/// is flagged as non-injective when two grid points more than three steps
/// apart agree in every component up to the local grid variation.
pub fn condition_d_check(model: &WeakIdModel, beta_samples: &[Vec<f64>], pi_grid: &[f64]) -> ConditionReport {
    let base: Vec<Vec<f64>> = pi_grid.iter().map(|&p| model.h(model.beta0(), p)).collect();
    let flagged: Vec<&Vec<f64>> = beta_samples
        .iter()
        .filter(|beta| {
            let v: Vec<Vec<f64>> = pi_grid
                .iter()
                .zip(&base)
                .map(|(&p, b0)| model.h(beta, p).iter().zip(b0).map(|(a, c)| a - c).collect())
                .collect();
            !is_injective_on_grid(&v)
        })
        .collect();
    let fraction = flagged.len() as f64 / beta_samples.len().max(1) as f64;
    ConditionReport {
        condition: "d".into(),
        pass: !beta_samples.is_empty() && fraction <= CONDITION_D_MAX_FLAGGED,
        checked: beta_samples.len(),
        failures: flagged.len(),
        witness: flagged.first().map(|b| b.to_vec()),
    }
}

fn is_injective_on_grid(v: &[Vec<f64>]) -> bool {
    let n = v.len();
    let dims = v.first().map_or(0, Vec::len);
    let spread: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            (0..dims)
                .map(|c| {
                    let l = if i > 0 { (v[i][c] - v[i - 1][c]).abs() } else { 0.0 };
                    let r = if i + 1 < n { (v[i + 1][c] - v[i][c]).abs() } else { 0.0 };
                    l.max(r)
                })
                .collect()
        })
        .collect();
    for i in 0..n {
        for j in (i + 4)..n {
            if (0..dims).all(|c| (v[i][c] - v[j][c]).abs() <= spread[i][c] + spread[j][c]) {
                return false;
            }
        }
    }
    true
}

/// `n` points uniform in the ball of `radius` around `center`, excluding
/// the inner ball of radius `1e-3 radius`.
pub fn sample_beta_ball(center: &[f64], radius: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = stream_rng(seed, 0xba11);
    let d = center.len();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = dir.iter().map(|x: &f64| x * x).sum::<f64>().sqrt();
        let r = radius * rng.random::<f64>().powf(1.0 / d as f64);
        if norm == 0.0 || r < 1e-3 * radius {
            continue;
        }
        out.push(center.iter().zip(&dir).map(|(c, x)| c + r * x / norm).collect());
    }
    out
}

/// Solutions in `pi` of `h_beta(beta0, pi) (z1 - b) = z2 - h_beta(beta0, pi0) b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderRoots {
    pub count: usize,
    pub solutions: Vec<f64>,
}

fn root_residual(model: &WeakIdModel, z: &[f64], pi: f64) -> f64 {
    let db = model.d_beta();
    let z1b = DVector::from_iterator(db, z[..db].iter().zip(&model.b).map(|(a, b)| a - b));
    let rhs = DVector::from_column_slice(&z[db..]) - model.h_beta(model.beta0(), model.pi0) * DVector::from_column_slice(&model.b);
    (model.h_beta(model.beta0(), pi) * z1b - rhs).norm()
}

/// Counts separated roots of the equation above by scanning `resolution`
/// chart-grid points for local minima of the residual norm and polishing
/// each by golden-section search.
pub fn count_first_order_roots(model: &WeakIdModel, z: &[f64], resolution: usize) -> Result<FirstOrderRoots> {
    if z.len() != model.d_z() {
        return Err(Error::DimensionMismatch { expected: model.d_z(), got: z.len() });
    }
    let dom = model.pi_domain();
    let (lo, hi) = dom.chart_bounds();
    let n = resolution.max(3);
    let ts: Vec<f64> = (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect();
    let r: Vec<f64> = ts.iter().map(|&t| root_residual(model, z, dom.to_pi(t))).collect();
    let scale = 1.0 + z.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut roots: Vec<f64> = Vec::new();
    for i in 0..n {
        let left = if i > 0 { r[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < n { r[i + 1] } else { f64::INFINITY };
        if !(r[i] <= left && r[i] < right) {
            continue;
        }
        let (a, b) = (ts[i.saturating_sub(1)], ts[(i + 1).min(n - 1)]);
        let t = golden_section(|t| root_residual(model, z, dom.to_pi(t)), a, b, 1e-14);
        if root_residual(model, z, dom.to_pi(t)) <= 1e-7 * scale {
            let pi = dom.to_pi(t);
            if roots.iter().all(|p| (p - pi).abs() > 1e-6 * (1.0 + pi.abs())) {
                roots.push(pi);
            }
        }
    }
    roots.sort_by(f64::total_cmp);
    Ok(FirstOrderRoots { count: roots.len(), solutions: roots })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= tol * (1.0 + a.abs() + b.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// `h(beta1, beta2, pi) = beta1 pi + beta2 pi^2` with `beta0 = (0, 0)`.
pub fn make_example1() -> WeakIdModel {
    let h: HFn = Arc::new(|b: &[f64], p: f64| vec![b[0] * p + b[1] * p * p]);
    let hb: HBetaFn = Arc::new(|_: &[f64], p: f64| DMatrix::from_row_slice(1, 2, &[p, p * p]));
    WeakIdModel::new(2, 1, h).expect("valid dimensions").with_h_beta(hb)
}

/// `h(beta, pi) = [beta (pi + pi^2); beta^2 pi]` with `beta0 = 0`.
pub fn make_example2() -> WeakIdModel {
    let h: HFn = Arc::new(|b: &[f64], p: f64| vec![b[0] * (p + p * p), b[0] * b[0] * p]);
    let hb: HBetaFn = Arc::new(|b: &[f64], p: f64| DMatrix::from_row_slice(2, 1, &[p + p * p, 2.0 * b[0] * p]));
    WeakIdModel::new(1, 2, h).expect("valid dimensions").with_h_beta(hb)
}

/// `h(beta, pi) = beta pi` with scalar `beta` and `beta0 = 0`.
pub fn make_linear() -> WeakIdModel {
    let h: HFn = Arc::new(|b: &[f64], p: f64| vec![b[0] * p]);
    let hb: HBetaFn = Arc::new(|_: &[f64], p: f64| DMatrix::from_row_slice(1, 1, &[p]));
    WeakIdModel::new(1, 1, h).expect("valid dimensions").with_h_beta(hb)
}

/// Built-in models by name: `example1`, `example2`, `linear`.
pub fn builtin(name: &str) -> Option<WeakIdModel> {
    match name {
        "example1" | "1" => Some(make_example1()),
        "example2" | "2" => Some(make_example2()),
        "linear" => Some(make_linear()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::globalopt::{value_function, Verdict};
    use crate::linalg::numerical_rank;
    use proptest::prelude::*;

    fn ex1_closed(pi: f64, z: &[f64]) -> f64 {
        let r = pi * z[0] + pi * pi * z[1] - z[2];
        -z.iter().map(|x| x * x).sum::<f64>() + r * r / (1.0 + pi * pi + pi.powi(4))
    }

    fn ex2_closed(pi: f64, z: &[f64]) -> f64 {
        let u = pi + pi * pi;
        -(z[0] + u * z[1]).powi(2) / (1.0 + u * u)
    }

    #[test]
    fn example_jacobians() {
        let e1 = make_example1();
        assert_eq!(e1.h(&[1.0, 0.0], 2.5), vec![2.5]);
        assert_eq!(e1.h_beta(&[0.0, 0.0], 3.0), DMatrix::from_row_slice(1, 2, &[3.0, 9.0]));
        let e2 = make_example2();
        assert_eq!(e2.h_beta(&[0.0], 2.0), DMatrix::from_row_slice(2, 1, &[6.0, 0.0]));
        for m in [e1, e2, make_linear()] {
            for &p in &[-2.0, 0.3, 1.7] {
                let beta: Vec<f64> = (0..m.d_beta()).map(|k| 0.2 + 0.1 * k as f64).collect();
                let d = (m.h_beta(&beta, p) - m.fd_h_beta(&beta, p)).abs().max();
                assert!(d < 1e-5);
            }
        }
    }

    #[test]
    fn zero_b_gives_zero_g() {
        let m = make_example1();
        for &p in &[-3.0, 0.0, 2.0] {
            assert_eq!(m.components(p).unwrap().g.norm(), 0.0);
        }
    }

    #[test]
    fn example1_projection_at_one() {
        let c = make_example1().components(1.0).unwrap();
        assert_eq!(c.s, DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]));
        let n = DVector::from_vec(vec![-1.0, -1.0, 1.0]) / 3f64.sqrt();
        assert!((&c.p * &n).norm() < 1e-12);
        assert!((&c.p * &c.s - &c.s).abs().max() < 1e-12);
    }

    #[test]
    fn projection_invariants_on_grid() {
        for m in [make_example1(), make_example2()] {
            for i in 0..101 {
                let pi = -6.0 + 12.0 * i as f64 / 100.0;
                let c = m.components(pi).unwrap();
                assert!((&c.p * &c.p - &c.p).abs().max() <= 1e-10);
                assert!((&c.p - c.p.transpose()).abs().max() <= 1e-10);
                assert_eq!(numerical_rank(&c.p, 1e-8), m.d_beta());
            }
        }
    }

    #[test]
    fn example1_value_at_root() {
        let z = [-1.03, 1.29, 2.77];
        let oracle = -z.iter().map(|x| x * x).sum::<f64>();
        let disc = (z[0] * z[0] + 4.0 * z[1] * z[2]).sqrt();
        let root = (-z[0] + disc) / (2.0 * z[1]);
        assert!((root - 1.918).abs() < 1e-3);
        let q = make_example1().limit_objective(root, &z).unwrap();
        assert!((q - oracle).abs() < 1e-4);
    }

    #[test]
    fn example1_value_function_on_compact_set() {
        let z = [-1.03, 1.29, 2.77];
        let oracle = -z.iter().map(|x| x * x).sum::<f64>();
        let k = Region::interval(-5.0, 5.0).unwrap();
        assert!((value_function(&make_example1(), &k, &z) - oracle).abs() < 1e-6);
    }

    #[test]
    fn example2_ignores_z3() {
        use crate::objective::{fd_grad_z, FdConfig};
        let m = make_example2();
        for &p in &[-1.5, 0.2, 2.0] {
            let g = fd_grad_z(&m, &[p], &[0.3, -0.7, 1.1], &FdConfig::default()).unwrap();
            assert!(g[2].abs() < 1e-8);
            assert!(m.grad_z_at(p, &[0.3, -0.7, 1.1]).unwrap()[2].abs() < 1e-12);
        }
    }

    #[test]
    fn figure_minimizers() {
        let cfg = MultistartConfig::default().with_starts(40);
        let cases: [(WeakIdModel, [f64; 3], [f64; 2]); 4] = [
            (make_example1(), [-1.03, 1.29, 2.77], [-1.11955, 1.91800]),
            (make_example1(), [-1.82, -0.52, 0.16], [-3.40976, -0.09024]),
            (make_example2(), [-0.23, -0.28, 1.31], [-1.71136, 0.71136]),
            (make_example2(), [-0.76, -0.25, -1.65], [-1.26088, 0.26088]),
        ];
        for (m, z, roots) in cases {
            let rep = m.locate(&z, &cfg).unwrap();
            assert_eq!(rep.verdict, Verdict::Multiple(2), "{z:?}");
            for (c, r) in rep.clusters.iter().zip(roots) {
                assert!((c.representative[0] - r).abs() < 1e-3, "{z:?}: {:?}", c.representative);
            }
        }
    }

    #[test]
    fn condition_checks() {
        let grid: Vec<f64> = (0..41).map(|i| -6.0 + 0.3 * i as f64).collect();
        let e1 = make_example1();
        let e2 = make_example2();
        let lin = make_linear();
        assert!(condition_c_check(&e1, &grid).pass);
        assert!(!condition_c_check(&e2, &grid).pass);
        assert!(condition_c_check(&lin, &grid).pass);
        let b2 = sample_beta_ball(&[0.0, 0.0], 0.5, 50, 1);
        let b1 = sample_beta_ball(&[0.0], 0.5, 50, 1);
        assert!(!condition_d_check(&e1, &b2, &grid).pass);
        assert!(condition_d_check(&e2, &b1, &grid).pass);
        assert!(condition_d_check(&lin, &b1, &grid).pass);
    }

    #[test]
    fn example2_rank_zero_on_level_pairs() {
        let m = make_example2();
        // pi + pi^2 takes the same value at pi and -1 - pi
        let (a, b) = (m.h_beta(&[0.0], 0.7), m.h_beta(&[0.0], -1.7));
        assert_eq!(numerical_rank_scaled(&(&a - &b), 1e-8, a.norm()), 0);
        let rep = condition_c_check(&m, &[0.7, -1.7]);
        assert_eq!((rep.pass, rep.failures), (false, 1));
    }

    #[test]
    fn first_order_root_counts() {
        let lin = make_linear();
        let s = count_first_order_roots(&lin, &[2.0, 3.0], 2001).unwrap();
        assert_eq!(s.count, 1);
        assert!((s.solutions[0] - 1.5).abs() < 1e-8);
        let e1 = make_example1();
        let s = count_first_order_roots(&e1, &[-1.03, 1.29, 2.77], 2001).unwrap();
        assert_eq!(s.count, 2);
        // negative discriminant: -1 + 4 * 1 * (-1) < 0
        assert_eq!(count_first_order_roots(&e1, &[1.0, 1.0, -1.0], 2001).unwrap().count, 0);
    }

    #[test]
    fn real_line_chart_round_trip() {
        let d = PiDomain::RealLine;
        for &p in &[-1e5, -2.0, 0.0, 3.5] {
            assert!((d.to_pi(d.to_chart(p)) - p).abs() <= 1e-9 * (1.0 + p.abs()));
        }
    }

    proptest! {
        #[test]
        fn closed_forms_agree(pi in -6.0f64..6.0, a in -3.0f64..3.0, b in -3.0f64..3.0, c in -3.0f64..3.0) {
            let z = [a, b, c];
            let q1 = make_example1().limit_objective(pi, &z).unwrap();
            prop_assert!((q1 - ex1_closed(pi, &z)).abs() <= 1e-8 * (1.0 + q1.abs()));
            let q2 = make_example2().limit_objective(pi, &z).unwrap();
            prop_assert!((q2 - ex2_closed(pi, &z)).abs() <= 1e-8 * (1.0 + q2.abs()));
            prop_assert!(q1 >= -z.iter().map(|x| x * x).sum::<f64>() - 1e-10);
        }

        #[test]
        fn general_h_components_stay_projections(pi in -3.0f64..3.0, b0 in -1.0f64..1.0, b1 in -1.0f64..1.0) {
            let h = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.1, 0.3, 1.5, -0.2, 0.1, -0.2, 1.0]);
            let m = make_example1().with_h(h).unwrap().with_b(vec![b0, b1]).unwrap().with_pi0(0.5);
            let c = m.components(pi).unwrap();
            prop_assert!((&c.p * &c.p - &c.p).abs().max() <= 1e-10);
            prop_assert!((&c.p * &c.s - &c.s).abs().max() <= 1e-10);
        }
    }
}
