//! Random objectives `Q(t, z)` and the derivative operators shared by every
//! application module.

use serde::{Deserialize, Serialize};

use crate::domain::Region;
use crate::error::{Error, Result};

/// A random objective `t -> Q(t, z)`.
///
/// Analytic gradients are optional; when absent the derivative operators
/// fall back to finite differences.
pub trait Objective: Sync {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64;

    fn grad_t(&self, _t: &[f64], _z: &[f64]) -> Option<Vec<f64>> {
        None
    }

    fn grad_z(&self, _t: &[f64], _z: &[f64]) -> Option<Vec<f64>> {
        None
    }

    /// Directions along which one-sided t-derivatives are taken at `t`.
    fn admissible_directions(&self, piece: &Region, t: &[f64]) -> Vec<Vec<f64>> {
        piece.admissible_directions(t)
    }
}

impl<O: Objective + ?Sized> Objective for &O {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64 {
        (**self).eval(t, z)
    }
    fn grad_t(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        (**self).grad_t(t, z)
    }
    fn grad_z(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        (**self).grad_z(t, z)
    }
    fn admissible_directions(&self, piece: &Region, t: &[f64]) -> Vec<Vec<f64>> {
        (**self).admissible_directions(piece, t)
    }
}

type EvalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync;

/// Objective assembled from closures.
pub struct FnObjective {
    eval: Box<EvalFn>,
    grad_t: Option<Box<GradFn>>,
    grad_z: Option<Box<GradFn>>,
}

impl FnObjective {
    pub fn new(eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Box::new(eval), grad_t: None, grad_z: None }
    }

    pub fn with_grad_t(mut self, g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad_t = Some(Box::new(g));
        self
    }

    pub fn with_grad_z(mut self, g: impl Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad_z = Some(Box::new(g));
        self
    }
}

impl Objective for FnObjective {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64 {
        (self.eval)(t, z)
    }
    fn grad_t(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        self.grad_t.as_ref().map(|g| g(t, z))
    }
    fn grad_z(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        self.grad_z.as_ref().map(|g| g(t, z))
    }
}

/// `Q(t, z) = sum_k (t_k - z_k)^2`, the convex reference model.
pub struct Quadratic;

impl Objective for Quadratic {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64 {
        t.iter().zip(z).map(|(a, b)| (a - b).powi(2)).sum()
    }
    fn grad_t(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        Some(t.iter().zip(z).map(|(a, b)| 2.0 * (a - b)).collect())
    }
    fn grad_z(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        Some(t.iter().zip(z).map(|(a, b)| 2.0 * (b - a)).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FdScheme {
    #[default]
    Central,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdConfig {
    pub step: f64,
    pub scheme: FdScheme,
}

impl Default for FdConfig {
    fn default() -> Self {
        Self { step: 1e-5, scheme: FdScheme::Central }
    }
}

impl FdConfig {
    pub fn with_step(step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParams("finite-difference step must be > 0".into()));
        }
        Ok(Self { step, scheme: FdScheme::Central })
    }
}

/// Evaluates `Q(t, z)`; a non-finite value is a [`Error::DegenerateObjective`].
pub fn eval_objective(obj: &dyn Objective, t: &[f64], z: &[f64]) -> Result<f64> {
    let v = obj.eval(t, z);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DegenerateObjective(v))
    }
}

/// One-sided derivative `d/dh Q(t + h delta, z)` at `h = 0`.
///
/// Uses the analytic t-gradient when available, otherwise the second-order
/// forward difference `(-3 Q0 + 4 Q1 - Q2) / 2h`.
pub fn directional_derivative_t(
    obj: &dyn Objective,
    piece: &Region,
    t: &[f64],
    z: &[f64],
    delta: &[f64],
    fd: &FdConfig,
) -> Result<f64> {
    let admissible = obj.admissible_directions(piece, t);
    if !admissible.iter().any(|w| w.iter().zip(delta).all(|(a, b)| (a - b).abs() < 1e-9)) {
        return Err(Error::InvalidDirection);
    }
    one_sided(obj, t, z, delta, fd)
}

/// Same as [`directional_derivative_t`] without the admissibility check.
pub(crate) fn one_sided(obj: &dyn Objective, t: &[f64], z: &[f64], delta: &[f64], fd: &FdConfig) -> Result<f64> {
    if let Some(g) = obj.grad_t(t, z) {
        let v: f64 = g.iter().zip(delta).map(|(a, b)| a * b).sum();
        return if v.is_finite() { Ok(v) } else { Err(Error::DegenerateObjective(v)) };
    }
    let h = fd.step;
    let shifted = |m: f64| -> Vec<f64> { t.iter().zip(delta).map(|(a, d)| a + m * h * d).collect() };
    let q0 = eval_objective(obj, t, z)?;
    let q1 = eval_objective(obj, &shifted(1.0), z)?;
    let q2 = eval_objective(obj, &shifted(2.0), z)?;
    Ok((-3.0 * q0 + 4.0 * q1 - q2) / (2.0 * h))
}

/// Gradient of `Q(t, .)` at `z`: analytic when provided, else central differences.
pub fn grad_z(obj: &dyn Objective, t: &[f64], z: &[f64], fd: &FdConfig) -> Result<Vec<f64>> {
    if let Some(g) = obj.grad_z(t, z) {
        return Ok(g);
    }
    fd_grad_z(obj, t, z, fd)
}

/// Central-difference z-gradient, ignoring any analytic gradient.
pub fn fd_grad_z(obj: &dyn Objective, t: &[f64], z: &[f64], fd: &FdConfig) -> Result<Vec<f64>> {
    let mut zp = z.to_vec();
    (0..z.len())
        .map(|k| {
            let h = fd.step * (1.0 + z[k].abs());
            zp[k] = z[k] + h;
            let up = eval_objective(obj, t, &zp)?;
            zp[k] = z[k] - h;
            let down = eval_objective(obj, t, &zp)?;
            zp[k] = z[k];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

/// Central-difference t-gradient, ignoring any analytic gradient.
pub fn fd_grad_t(obj: &dyn Objective, t: &[f64], z: &[f64], fd: &FdConfig) -> Result<Vec<f64>> {
    let mut tp = t.to_vec();
    (0..t.len())
        .map(|k| {
            let h = fd.step * (1.0 + t[k].abs());
            tp[k] = t[k] + h;
            let up = eval_objective(obj, &tp, z)?;
            tp[k] = t[k] - h;
            let down = eval_objective(obj, &tp, z)?;
            tp[k] = t[k];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quad_1d() -> (Quadratic, Region) {
        (Quadratic, Region::symmetric(1, 10.0).unwrap())
    }

    #[test]
    fn quadratic_values() {
        let (q, _) = quad_1d();
        assert_eq!(eval_objective(&q, &[1.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn non_finite_is_degenerate() {
        let f = FnObjective::new(|_, _| f64::NAN);
        assert!(matches!(eval_objective(&f, &[0.0], &[0.0]), Err(Error::DegenerateObjective(_))));
    }

    #[test]
    fn directional_derivatives_of_quadratic() {
        let (q, r) = quad_1d();
        let fd = FdConfig::default();
        let d = directional_derivative_t(&q, &r, &[0.0], &[1.0], &[1.0], &fd).unwrap();
        assert!((d + 2.0).abs() < 1e-12);
        for delta in [[1.0], [-1.0]] {
            let d = directional_derivative_t(&q, &r, &[1.0], &[1.0], &delta, &fd).unwrap();
            assert!(d.abs() < 1e-12);
        }
        // same through finite differences
        let f = FnObjective::new(|t, z| (t[0] - z[0]).powi(2));
        let d = directional_derivative_t(&f, &r, &[0.0], &[1.0], &[1.0], &fd).unwrap();
        assert!((d + 2.0).abs() < 1e-8);
    }

    #[test]
    fn inadmissible_direction_rejected() {
        let (q, _) = quad_1d();
        let r = Region::interval(0.0, 1.0).unwrap();
        let fd = FdConfig::default();
        assert_eq!(
            directional_derivative_t(&q, &r, &[0.0], &[1.0], &[-1.0], &fd),
            Err(Error::InvalidDirection)
        );
        assert_eq!(
            directional_derivative_t(&q, &r, &[0.5], &[1.0], &[0.6], &fd),
            Err(Error::InvalidDirection)
        );
    }

    #[test]
    fn z_gradient_of_quadratic() {
        let f = FnObjective::new(|t, z| (t[0] - z[0]).powi(2));
        let g = grad_z(&f, &[0.0], &[1.0], &FdConfig::default()).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert_eq!(grad_z(&Quadratic, &[0.0], &[1.0], &FdConfig::default()).unwrap(), vec![2.0]);
    }

    #[test]
    fn fd_step_validated() {
        assert!(FdConfig::with_step(0.0).is_err());
        assert!(FdConfig::with_step(1e-6).is_ok());
    }

    #[test]
    fn eval_is_bit_deterministic() {
        let f = FnObjective::new(|t, z| (t[0] * z[0]).sin() + t[0].exp());
        let a = f.eval(&[0.3], &[1.7]);
        let b = f.eval(&[0.3], &[1.7]);
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
