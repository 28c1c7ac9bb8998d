//! Bounded local descent: Nelder-Mead in the free coordinates of a region,
//! followed by a finite-difference gradient polish.
//!
//! Points are mapped onto the region by projection; the squared projection
//! distance is added to the objective so the simplex cannot wander off.

use crate::domain::{norm, Region};
use crate::objective::Objective;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalMin {
    pub t: Vec<f64>,
    pub value: f64,
    /// Terminated on the value-improvement test rather than the iteration cap.
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct DescentSettings {
    pub local_tol: f64,
    pub max_iters: usize,
}

struct Reduced<'a> {
    obj: &'a dyn Objective,
    piece: &'a Region,
    z: &'a [f64],
    origin: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

impl Reduced<'_> {
    fn lift(&self, y: &[f64]) -> Vec<f64> {
        let mut x = self.origin.clone();
        for (yi, b) in y.iter().zip(&self.basis) {
            x.iter_mut().zip(b).for_each(|(xk, bk)| *xk += yi * bk);
        }
        x
    }

    fn point(&self, y: &[f64]) -> (Vec<f64>, f64) {
        let x = self.lift(y);
        let p = self.piece.project(&x);
        let off: f64 = x.iter().zip(&p).map(|(a, b)| (a - b).powi(2)).sum();
        let v = self.obj.eval(&p, self.z);
        let v = if v.is_finite() { v + off } else { f64::INFINITY };
        (p, v)
    }

    fn value(&self, y: &[f64]) -> f64 {
        self.point(y).1
    }
}

/// Descends from `x0` inside `piece`.
pub fn local_descent(obj: &dyn Objective, piece: &Region, z: &[f64], x0: &[f64], s: DescentSettings) -> LocalMin {
    let origin = piece.project(x0);
    let basis = piece.free_basis();
    if basis.is_empty() {
        let v = obj.eval(&origin, z);
        return LocalMin { t: origin, value: if v.is_finite() { v } else { f64::INFINITY }, converged: v.is_finite() };
    }
    let steps: Vec<f64> = basis
        .iter()
        .map(|b| {
            let extent: f64 = b
                .iter()
                .zip(piece.lower().iter().zip(piece.upper()))
                .map(|(bk, (l, u))| bk.abs() * (u - l))
                .sum();
            (0.05 * extent).max(1e-3)
        })
        .collect();
    let red = Reduced { obj, piece, z, origin, basis };
    let m = red.basis.len();
    let mut y = vec![0.0; m];
    let mut fy = red.value(&y);
    let mut budget = s.max_iters;
    let mut converged = false;
    // restart from the incumbent until a fresh simplex stops improving it
    for round in 0..4 {
        let scale = if round == 0 { 1.0 } else { 0.1 };
        let step: Vec<f64> = steps.iter().map(|v| v * scale).collect();
        let (ny, nf, used, ok) = nelder_mead(&red, &y, fy, &step, s.local_tol, budget);
        budget = budget.saturating_sub(used);
        let improvement = fy - nf;
        if nf <= fy {
            y = ny;
            fy = nf;
        }
        converged = ok;
        if !ok || budget == 0 || !(improvement > s.local_tol * (1.0 + fy.abs())) {
            break;
        }
    }
    if fy.is_finite() {
        let (py, pf) = polish(&red, &y, fy, s.local_tol);
        if pf < fy {
            y = py;
        }
    }
    let (t, _) = red.point(&y);
    let value = obj.eval(&t, z);
    let value = if value.is_finite() { value } else { f64::INFINITY };
    LocalMin { t, value, converged: converged && value.is_finite() }
}

fn nelder_mead(red: &Reduced, y0: &[f64], f0: f64, step: &[f64], tol: f64, max_iters: usize) -> (Vec<f64>, f64, usize, bool) {
    let m = y0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(m + 1);
    simplex.push((y0.to_vec(), f0));
    for i in 0..m {
        let mut v = y0.to_vec();
        v[i] += step[i];
        let f = red.value(&v);
        simplex.push((v, f));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iters = 0;
    let mut ok = false;
    while iters < max_iters {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[m].1;
        let size = simplex[1..]
            .iter()
            .map(|(v, _)| v.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        let xscale = 1.0 + norm(&simplex[0].0);
        if best.is_finite() && worst - best <= tol * (1.0 + best.abs()) && size <= 1e-7 * xscale {
            ok = true;
            break;
        }
        if size <= 1e-14 * xscale {
            // collapsed without meeting the value test
            ok = best.is_finite() && worst - best <= tol.sqrt() * (1.0 + best.abs());
            break;
        }
        iters += 1;
        let mut centroid = vec![0.0; m];
        for (v, _) in &simplex[..m] {
            centroid.iter_mut().zip(v).for_each(|(c, x)| *c += x / m as f64);
        }
        let along = |coef: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[m].0).map(|(c, w)| c + coef * (c - w)).collect()
        };
        let xr = along(alpha);
        let fr = red.value(&xr);
        if fr < simplex[0].1 {
            let xe = along(gamma);
            let fe = red.value(&xe);
            simplex[m] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[m - 1].1 {
            simplex[m] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[m].1 {
                let xc = along(rho);
                let fc = red.value(&xc);
                (xc, fc)
            } else {
                let xc = along(-rho);
                let fc = red.value(&xc);
                (xc, fc)
            };
            if fc < simplex[m].1.min(fr) {
                simplex[m] = (xc, fc);
            } else {
                let b = simplex[0].0.clone();
                for (v, f) in simplex.iter_mut().skip(1) {
                    v.iter_mut().zip(&b).for_each(|(x, bx)| *x = bx + sigma * (*x - bx));
                    *f = red.value(v);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (y, f) = simplex.swap_remove(0);
    (y, f, iters, ok)
}

fn polish(red: &Reduced, y0: &[f64], f0: f64, tol: f64) -> (Vec<f64>, f64) {
    let mut y = y0.to_vec();
    let mut f = f0;
    for _ in 0..100 {
        let g: Vec<f64> = (0..y.len())
            .map(|i| {
                let h = 1e-6 * (1.0 + y[i].abs());
                let mut up = y.clone();
                up[i] += h;
                let mut dn = y.clone();
                dn[i] -= h;
                (red.value(&up) - red.value(&dn)) / (2.0 * h)
            })
            .collect();
        let gn = norm(&g);
        if !gn.is_finite() || gn == 0.0 {
            break;
        }
        let mut step = 1.0 / gn.max(1.0);
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - step * b).collect();
            let fc = red.value(&cand);
            if fc <= f - 1e-4 * step * gn * gn {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        match accepted {
            Some((cand, fc)) => {
                let improvement = f - fc;
                y = cand;
                f = fc;
                if improvement <= tol * (1.0 + f.abs()) {
                    break;
                }
            }
            None => break,
        }
    }
    (y, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{FnObjective, Quadratic};

    const S: DescentSettings = DescentSettings { local_tol: 1e-12, max_iters: 5000 };

    #[test]
    fn finds_interior_minimum() {
        let r = Region::symmetric(2, 10.0).unwrap();
        let m = local_descent(&Quadratic, &r, &[1.0, -2.0], &[5.0, 5.0], S);
        assert!(m.converged);
        assert!((m.t[0] - 1.0).abs() < 1e-6 && (m.t[1] + 2.0).abs() < 1e-6);
        assert!(m.value < 1e-12);
    }

    #[test]
    fn stops_at_box_face() {
        let r = Region::interval(0.0, 1.0).unwrap();
        let m = local_descent(&Quadratic, &r, &[2.0], &[0.3], S);
        assert!((m.t[0] - 1.0).abs() < 1e-9);
        assert!((m.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn respects_equality_constraint() {
        // minimise (t0-2)^2 + (t1-2)^2 on t0 + t1 = 1  ->  (0.5, 0.5)
        let r = Region::symmetric(2, 5.0).unwrap().with_equality(vec![1.0, 1.0], 1.0).unwrap();
        let m = local_descent(&Quadratic, &r, &[2.0, 2.0], &[-3.0, 4.0], S);
        assert!((m.t[0] - 0.5).abs() < 1e-6 && (m.t[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn rosenbrock() {
        let f = FnObjective::new(|t, _| (1.0 - t[0]).powi(2) + 100.0 * (t[1] - t[0] * t[0]).powi(2));
        let r = Region::symmetric(2, 5.0).unwrap();
        let m = local_descent(&f, &r, &[], &[-1.5, 2.0], S);
        assert!(m.converged);
        assert!((m.t[0] - 1.0).abs() < 1e-4 && (m.t[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn all_fixed_coordinates() {
        let r = Region::interval(-1.0, 1.0).unwrap().with_equality(vec![1.0], 0.25).unwrap();
        let m = local_descent(&Quadratic, &r, &[0.0], &[0.9], S);
        assert_eq!(m.t, vec![0.25]);
    }

    #[test]
    fn non_finite_objective_does_not_converge() {
        let f = FnObjective::new(|_, _| f64::NAN);
        let r = Region::symmetric(1, 1.0).unwrap();
        let m = local_descent(&f, &r, &[], &[0.0], S);
        assert!(!m.converged);
    }
}
