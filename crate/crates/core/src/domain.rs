//! Optimization domains: finite unions of boxes carrying optional linear
//! equality constraints and strict-order constraints.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::stream_rng;

/// Margin used to realise strict inequalities in floating point.
pub const STRICT_MARGIN: f64 = 1e-8;

/// Default half-width when an unbounded coordinate is truncated.
pub const DEFAULT_HALF_WIDTH: f64 = 10.0;

const PRIMES: [u32; 32] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
    97, 101, 103, 107, 109, 113, 127, 131,
];

/// One chart of the domain: a box `lower <= t <= upper` intersected with
/// `a . t = c` for every equality constraint and `t_i + margin <= t_j`
/// for every order constraint `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lower: Vec<f64>,
    upper: Vec<f64>,
    eq_constraints: Vec<(Vec<f64>, f64)>,
    order_constraints: Vec<(usize, usize)>,
    order_margin: f64,
    // orthonormalised equality rows with matching right-hand sides
    #[serde(skip)]
    eq_basis: Vec<(Vec<f64>, f64)>,
}

impl Region {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() {
            return Err(Error::InvalidRegion("dimension must be positive".into()));
        }
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if let Some(k) = (0..lower.len()).find(|&k| !(lower[k] < upper[k])) {
            return Err(Error::InvalidRegion(format!(
                "lower[{k}] = {} must be < upper[{k}] = {}",
                lower[k], upper[k]
            )));
        }
        Ok(Self {
            lower,
            upper,
            eq_constraints: Vec::new(),
            order_constraints: Vec::new(),
            order_margin: STRICT_MARGIN,
            eq_basis: Vec::new(),
        })
    }

    /// `[-half_width, half_width]^dim`.
    pub fn symmetric(dim: usize, half_width: f64) -> Result<Self> {
        Self::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    /// Adds the constraint `coeffs . t = constant`.
    pub fn with_equality(mut self, coeffs: Vec<f64>, constant: f64) -> Result<Self> {
        if coeffs.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: coeffs.len() });
        }
        if coeffs.iter().all(|c| *c == 0.0) {
            return Err(Error::InvalidRegion("equality coefficients must be nonzero".into()));
        }
        self.eq_constraints.push((coeffs, constant));
        self.rebuild_basis();
        Ok(self)
    }

    /// Adds the strict constraint `t_i < t_j`.
    pub fn with_order(mut self, i: usize, j: usize) -> Result<Self> {
        if i == j || i >= self.dim() || j >= self.dim() {
            return Err(Error::InvalidRegion(format!("bad order constraint ({i}, {j})")));
        }
        self.order_constraints.push((i, j));
        Ok(self)
    }

    pub fn with_order_margin(mut self, margin: f64) -> Result<Self> {
        if !(margin >= 0.0) {
            return Err(Error::InvalidRegion("order margin must be >= 0".into()));
        }
        self.order_margin = margin;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn eq_constraints(&self) -> &[(Vec<f64>, f64)] {
        &self.eq_constraints
    }

    pub fn order_constraints(&self) -> &[(usize, usize)] {
        &self.order_constraints
    }

    /// Euclidean diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    fn rebuild_basis(&mut self) {
        let mut basis: Vec<(Vec<f64>, f64)> = Vec::new();
        for (a, c) in self.eq_constraints.clone() {
            let mut v = a;
            let mut rhs = c;
            for (q, qc) in &basis {
                let alpha = dot(&v, q);
                axpy(-alpha, q, &mut v);
                rhs -= alpha * qc;
            }
            let n = norm(&v);
            if n > 1e-12 {
                v.iter_mut().for_each(|x| *x /= n);
                basis.push((v, rhs / n));
            }
        }
        self.eq_basis = basis;
    }

    fn eq_basis(&self) -> Vec<(Vec<f64>, f64)> {
        // deserialized regions have an empty cache
        if self.eq_basis.is_empty() && !self.eq_constraints.is_empty() {
            let mut r = self.clone();
            r.rebuild_basis();
            return r.eq_basis;
        }
        self.eq_basis.clone()
    }

    /// Orthonormal basis of directions that keep every equality constraint.
    pub fn free_basis(&self) -> Vec<Vec<f64>> {
        let rows = self.eq_basis();
        let d = self.dim();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for k in 0..d {
            let mut v = vec![0.0; d];
            v[k] = 1.0;
            for (q, _) in rows.iter() {
                let alpha = dot(&v, q);
                axpy(-alpha, q, &mut v);
            }
            for q in &out {
                let alpha = dot(&v, q);
                axpy(-alpha, q, &mut v);
            }
            let n = norm(&v);
            if n > 1e-10 {
                v.iter_mut().for_each(|x| *x /= n);
                out.push(v);
            }
        }
        out
    }

    fn project_affine(&self, rows: &[(Vec<f64>, f64)], t: &mut [f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (q, c) in rows {
            let r = dot(q, t) - c;
            worst = worst.max(r.abs());
            axpy(-r, q, t);
        }
        worst
    }

    fn clamp(&self, t: &mut [f64]) {
        for k in 0..t.len() {
            t[k] = t[k].clamp(self.lower[k], self.upper[k]);
        }
    }

    fn fix_order(&self, t: &mut [f64]) {
        for &(i, j) in &self.order_constraints {
            if t[j] - t[i] < self.order_margin {
                let mid = 0.5 * (t[i] + t[j]);
                t[i] = mid - self.order_margin;
                t[j] = mid + self.order_margin;
            }
        }
    }

    /// Maps `t` to a nearby feasible point by alternating projections.
    pub fn project(&self, t: &[f64]) -> Vec<f64> {
        let rows = self.eq_basis();
        let mut x = t.to_vec();
        for _ in 0..200 {
            self.project_affine(&rows, &mut x);
            self.fix_order(&mut x);
            self.clamp(&mut x);
            let residual = rows.iter().map(|(q, c)| (dot(q, &x) - c).abs()).fold(0.0, f64::max);
            if residual <= 1e-12 && self.order_ok(&x, 0.0) {
                break;
            }
        }
        x
    }

    fn order_ok(&self, t: &[f64], slack: f64) -> bool {
        self.order_constraints
            .iter()
            .all(|&(i, j)| t[j] - t[i] >= self.order_margin * (1.0 - 1e-6) - slack)
    }

    /// Feasibility test with absolute tolerance `tol`.
    pub fn contains(&self, t: &[f64], tol: f64) -> bool {
        t.len() == self.dim()
            && (0..t.len()).all(|k| t[k] >= self.lower[k] - tol && t[k] <= self.upper[k] + tol)
            && self
                .eq_constraints
                .iter()
                .all(|(a, c)| (dot(a, t) - c).abs() <= tol * (1.0 + c.abs()))
            && self.order_ok(t, tol)
    }

    /// Unit directions approximating the admissible cone `A(t)`.
    ///
    /// Coordinate directions are projected onto the equality null space.
    /// On a face of the box (or of an order constraint) only directions that
    /// point into the region are kept.
    pub fn admissible_directions(&self, t: &[f64]) -> Vec<Vec<f64>> {
        let rows = self.eq_basis();
        let d = self.dim();
        let mut out: Vec<Vec<f64>> = Vec::new();
        for k in 0..d {
            for sign in [1.0, -1.0] {
                let mut v = vec![0.0; d];
                v[k] = sign;
                for (q, _) in &rows {
                    let alpha = dot(&v, q);
                    axpy(-alpha, q, &mut v);
                }
                let n = norm(&v);
                if n <= 1e-10 {
                    continue;
                }
                v.iter_mut().for_each(|x| *x /= n);
                if !self.points_inward(t, &v) {
                    continue;
                }
                if out.iter().any(|w| w.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-12)) {
                    continue;
                }
                out.push(v);
            }
        }
        out
    }

    fn points_inward(&self, t: &[f64], v: &[f64]) -> bool {
        for k in 0..t.len() {
            let at_low = t[k] <= self.lower[k] + 1e-9 * (1.0 + self.lower[k].abs());
            let at_up = t[k] >= self.upper[k] - 1e-9 * (1.0 + self.upper[k].abs());
            if (at_low && v[k] < -1e-12) || (at_up && v[k] > 1e-12) {
                return false;
            }
        }
        for &(i, j) in &self.order_constraints {
            let tight = t[j] - t[i] <= self.order_margin + 1e-9 * (1.0 + t[i].abs());
            if tight && v[j] - v[i] < -1e-12 {
                return false;
            }
        }
        true
    }

    /// True when `delta` is (numerically) one of the admissible directions at `t`.
    pub fn is_admissible(&self, t: &[f64], delta: &[f64]) -> bool {
        self.admissible_directions(t)
            .iter()
            .any(|w| w.iter().zip(delta).all(|(a, b)| (a - b).abs() < 1e-9))
    }

    /// `n` stratified low-discrepancy points (randomly shifted Halton),
    /// projected onto the region. Deterministic in `seed`.
    pub fn sample_points(&self, n: usize, seed: u64) -> Vec<Vec<f64>> {
        let d = self.dim();
        let mut rng = stream_rng(seed, 0x5eed);
        let shift: Vec<f64> = (0..d).map(|_| rng.random::<f64>()).collect();
        (0..n)
            .map(|i| {
                let raw: Vec<f64> = (0..d)
                    .map(|k| {
                        let u = (radical_inverse(i as u64 + 1, PRIMES[k % PRIMES.len()]) + shift[k]).fract();
                        self.lower[k] + u * (self.upper[k] - self.lower[k])
                    })
                    .collect();
                self.project(&raw)
            })
            .collect()
    }

    /// Regular grid with `resolution` nodes per axis (endpoints included),
    /// projected onto the region with duplicates removed.
    pub fn grid(&self, resolution: usize) -> Vec<Vec<f64>> {
        let d = self.dim();
        let r = resolution.max(2);
        let total = r.pow(d as u32);
        let mut out: Vec<Vec<f64>> = Vec::with_capacity(total);
        for idx in 0..total {
            let mut rem = idx;
            let raw: Vec<f64> = (0..d)
                .map(|k| {
                    let i = rem % r;
                    rem /= r;
                    self.lower[k] + (self.upper[k] - self.lower[k]) * i as f64 / (r - 1) as f64
                })
                .collect();
            let p = self.project(&raw);
            if !out.iter().any(|q| q.iter().zip(&p).all(|(a, b)| (a - b).abs() < 1e-12)) {
                out.push(p);
            }
        }
        out
    }
}

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut x = 0.0;
    while i > 0 {
        x += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    x
}

/// Finite union of regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pieces: Vec<Region>,
}

impl Domain {
    /// The pieces must share a dimension. Disjointness is the caller's
    /// responsibility.
    pub fn new(pieces: Vec<Region>) -> Result<Self> {
        let first = pieces
            .first()
            .ok_or_else(|| Error::InvalidRegion("domain needs at least one piece".into()))?;
        let d = first.dim();
        if let Some(p) = pieces.iter().find(|p| p.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: p.dim() });
        }
        Ok(Self { pieces })
    }

    pub fn single(region: Region) -> Self {
        Self { pieces: vec![region] }
    }

    pub fn pieces(&self) -> &[Region] {
        &self.pieces
    }

    pub fn dim(&self) -> usize {
        self.pieces[0].dim()
    }

    /// Index of the first piece containing `t`.
    pub fn locate(&self, t: &[f64]) -> Option<usize> {
        self.pieces.iter().position(|p| p.contains(t, 1e-9))
    }

    /// Diameter of the bounding box of all pieces.
    pub fn diameter(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .map(|k| {
                let lo = self.pieces.iter().map(|p| p.lower[k]).fold(f64::INFINITY, f64::min);
                let hi = self.pieces.iter().map(|p| p.upper[k]).fold(f64::NEG_INFINITY, f64::max);
                (hi - lo).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Region> for Domain {
    fn from(r: Region) -> Self {
        Domain::single(r)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

pub(crate) fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_boxes() {
        assert!(Region::new(vec![0.0], vec![0.0]).is_err());
        assert!(Region::new(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(Region::new(vec![], vec![]).is_err());
        let r = Region::symmetric(2, 1.0).unwrap();
        assert!(r.clone().with_equality(vec![0.0, 0.0], 1.0).is_err());
        assert!(r.clone().with_order(0, 0).is_err());
        assert!(r.with_order(0, 2).is_err());
        assert!(Domain::new(vec![]).is_err());
    }

    #[test]
    fn interior_point_has_all_signed_coordinates() {
        let r = Region::symmetric(3, 1.0).unwrap();
        let dirs = r.admissible_directions(&[0.1, 0.2, -0.3]);
        assert_eq!(dirs.len(), 6);
    }

    #[test]
    fn boundary_keeps_only_inward() {
        let r = Region::interval(0.0, 1.0).unwrap();
        assert_eq!(r.admissible_directions(&[0.0]), vec![vec![1.0]]);
        assert_eq!(r.admissible_directions(&[1.0]), vec![vec![-1.0]]);
        let corner = Region::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let dirs = corner.admissible_directions(&[0.0, 1.0]);
        assert_eq!(dirs, vec![vec![1.0, 0.0], vec![0.0, -1.0]]);
    }

    #[test]
    fn equality_maps_directions_onto_surface() {
        // simplex-like plane t0 + t1 = 1
        let r = Region::new(vec![0.0, 0.0], vec![1.0, 1.0])
            .unwrap()
            .with_equality(vec![1.0, 1.0], 1.0)
            .unwrap();
        let dirs = r.admissible_directions(&[0.4, 0.6]);
        assert_eq!(dirs.len(), 2);
        for d in &dirs {
            assert!((d[0] + d[1]).abs() < 1e-12);
            assert!((norm(d) - 1.0).abs() < 1e-12);
        }
        assert_eq!(r.free_basis().len(), 1);
        let p = r.project(&[0.9, 0.9]);
        assert!((p[0] + p[1] - 1.0).abs() < 1e-12);
        assert!(r.contains(&p, 1e-9));
    }

    #[test]
    fn fixed_coordinate_is_excluded() {
        let r = Region::symmetric(3, 10.0).unwrap().with_equality(vec![0.0, 1.0, 0.0], 0.0).unwrap();
        let dirs = r.admissible_directions(&[1.0, 0.0, 2.0]);
        assert_eq!(dirs.len(), 4);
        assert!(dirs.iter().all(|d| d[1] == 0.0));
        assert_eq!(r.project(&[1.0, 3.0, 2.0]), vec![1.0, 0.0, 2.0]);
    }

    #[test]
    fn order_constraint_projection() {
        let r = Region::symmetric(2, 5.0).unwrap().with_order(0, 1).unwrap();
        let p = r.project(&[1.0, 0.5]);
        assert!(p[1] - p[0] >= STRICT_MARGIN * 0.99);
        assert!(r.contains(&p, 1e-12));
        assert!(!r.contains(&[1.0, 0.5], 1e-12));
        // tight order constraint blocks the closing direction
        let t = [0.0, STRICT_MARGIN];
        let dirs = r.admissible_directions(&t);
        assert!(!dirs.contains(&vec![0.0, -1.0]));
        assert!(!dirs.contains(&vec![1.0, 0.0]));
    }

    #[test]
    fn samples_are_deterministic_and_inside() {
        let r = Region::new(vec![-1.0, 2.0], vec![1.0, 3.0]).unwrap();
        let a = r.sample_points(50, 9);
        let b = r.sample_points(50, 9);
        assert_eq!(a, b);
        assert!(a.iter().all(|p| r.contains(p, 0.0)));
        assert_ne!(a, r.sample_points(50, 10));
    }

    #[test]
    fn grid_has_expected_size() {
        let r = Region::symmetric(2, 1.0).unwrap();
        assert_eq!(r.grid(11).len(), 121);
        let d = Domain::new(vec![Region::interval(0.0, 1.0).unwrap(), Region::interval(2.0, 4.0).unwrap()]).unwrap();
        assert_eq!(d.locate(&[3.0]), Some(1));
        assert_eq!(d.locate(&[1.5]), None);
        assert!((d.diameter() - 4.0).abs() < 1e-12);
    }
}
