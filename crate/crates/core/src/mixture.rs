//! Finite normal mixtures with unit variances:
//! `f(z; tau, mu) = sum_j tau_j phi(z - mu_j)` and its negative log-likelihood.
//!
//! The parameter vector used by the optimizer is `t = (tau_1..tau_J, mu_1..mu_J)`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Region, STRICT_MARGIN};
use crate::error::{Error, Result};
use crate::globalopt::{build_report, ArgminReport, LocalMin, MultistartConfig};
use crate::objective::Objective;
use crate::stats::{child_seed, log_sum_exp, norm_ln_pdf, norm_pdf, stream_rng};

/// Weights and means of a mixture.
pub trait MixtureLike {
    fn weights(&self) -> &[f64];
    fn means(&self) -> &[f64];

    fn components(&self) -> usize {
        self.weights().len()
    }
}

/// Parameters on the ordered chart: positive weights summing to one and
/// strictly increasing means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    weights: Vec<f64>,
    means: Vec<f64>,
}

impl MixtureParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>) -> Result<Self> {
        check_weights(&weights, &means)?;
        if weights.iter().any(|w| *w < STRICT_MARGIN) {
            return Err(Error::InvalidParams(format!("weights must be >= {STRICT_MARGIN}")));
        }
        if means.windows(2).any(|w| w[0] + STRICT_MARGIN > w[1]) {
            return Err(Error::InvalidParams("means must be strictly increasing".into()));
        }
        Ok(Self { weights, means })
    }

    /// Reads `t = (tau, mu)`.
    pub fn from_vector(t: &[f64]) -> Result<Self> {
        if t.len() % 2 != 0 || t.is_empty() {
            return Err(Error::InvalidParams("parameter vector must have even length".into()));
        }
        let j = t.len() / 2;
        Self::new(t[..j].to_vec(), t[j..].to_vec())
    }

    pub fn to_vector(&self) -> Vec<f64> {
        self.weights.iter().chain(&self.means).copied().collect()
    }
}

impl MixtureLike for MixtureParams {
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn means(&self) -> &[f64] {
        &self.means
    }
}

/// Parameters without the ordering restriction; ties allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnrestrictedParams {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
}

impl UnrestrictedParams {
    pub fn new(weights: Vec<f64>, means: Vec<f64>) -> Result<Self> {
        check_weights(&weights, &means)?;
        Ok(Self { weights, means })
    }
}

impl MixtureLike for UnrestrictedParams {
    fn weights(&self) -> &[f64] {
        &self.weights
    }
    fn means(&self) -> &[f64] {
        &self.means
    }
}

impl From<MixtureParams> for UnrestrictedParams {
    fn from(p: MixtureParams) -> Self {
        Self { weights: p.weights, means: p.means }
    }
}

fn check_weights(weights: &[f64], means: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::InvalidParams("at least one component required".into()));
    }
    if weights.len() != means.len() {
        return Err(Error::DimensionMismatch { expected: weights.len(), got: means.len() });
    }
    if weights.iter().any(|w| !(*w > 0.0)) || means.iter().any(|m| !m.is_finite()) {
        return Err(Error::InvalidParams("weights must be positive and means finite".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidParams(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Observations with pairwise distinct values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSample {
    z: Vec<f64>,
}

impl MixtureSample {
    pub fn new(z: Vec<f64>) -> Result<Self> {
        if z.is_empty() || z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParams("sample must be nonempty and finite".into()));
        }
        let mut sorted = z.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParams("sample values must be pairwise distinct".into()));
        }
        Ok(Self { z })
    }

    pub fn values(&self) -> &[f64] {
        &self.z
    }

    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// `n` draws from the mixture `p`.
    pub fn simulate(p: &impl MixtureLike, n: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let z = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut k = p.components() - 1;
                for (j, w) in p.weights().iter().enumerate() {
                    acc += w;
                    if u < acc {
                        k = j;
                        break;
                    }
                }
                let e: f64 = StandardNormal.sample(rng);
                p.means()[k] + e
            })
            .collect();
        Self::new(z)
    }
}

pub fn mixture_density(p: &impl MixtureLike, z: f64) -> f64 {
    p.weights().iter().zip(p.means()).map(|(w, m)| w * norm_pdf(z - m)).sum()
}

/// `log f(z)` by log-sum-exp; finite even where the density underflows.
pub fn mixture_log_density(p: &impl MixtureLike, z: f64) -> f64 {
    let terms: Vec<f64> = p.weights().iter().zip(p.means()).map(|(w, m)| w.ln() + norm_ln_pdf(z - m)).collect();
    log_sum_exp(&terms)
}

/// `Q = -sum_i log f(z_i)`.
pub fn mixture_nll(p: &impl MixtureLike, z: &[f64]) -> f64 {
    -z.iter().map(|&x| mixture_log_density(p, x)).sum::<f64>()
}

/// Posterior component probabilities at `z`.
fn responsibilities(p: &impl MixtureLike, z: f64) -> Vec<f64> {
    let terms: Vec<f64> = p.weights().iter().zip(p.means()).map(|(w, m)| w.ln() + norm_ln_pdf(z - m)).collect();
    let lse = log_sum_exp(&terms);
    terms.iter().map(|t| (t - lse).exp()).collect()
}

/// `d/dz [-log f(z)] = sum_k tau_k (z - mu_k) phi(z - mu_k) / f(z)`.
pub fn score(p: &impl MixtureLike, z: f64) -> f64 {
    responsibilities(p, z).iter().zip(p.means()).map(|(r, m)| r * (z - m)).sum()
}

/// `d/dz_i [Q(p1, z) - Q(p2, z)]` in closed form (`i` is 0-based).
pub fn score_gap(p1: &impl MixtureLike, p2: &impl MixtureLike, sample: &[f64], i: usize) -> Result<f64> {
    let zi = *sample.get(i).ok_or(Error::Precondition(format!("index {i} out of range")))?;
    Ok(score(p1, zi) - score(p2, zi))
}

/// `sum_j sum_k sigma_j tau_k phi(z - nu_j) phi(z - mu_k) (mu_k - nu_j)` with
/// `p1 = (tau, mu)` and `p2 = (sigma, nu)`.
///
/// This equals `-f(z; p1) f(z; p2) score_gap`, the denominator-cleared
/// score gap; it vanishes exactly when the two scores agree at `z`.
pub fn identity_b2(p1: &impl MixtureLike, p2: &impl MixtureLike, z: f64) -> f64 {
    let mut acc = 0.0;
    for (sj, nj) in p2.weights().iter().zip(p2.means()) {
        for (tk, mk) in p1.weights().iter().zip(p1.means()) {
            acc += sj * tk * norm_pdf(z - nj) * norm_pdf(z - mk) * (mk - nj);
        }
    }
    acc
}

/// The mixture negative log-likelihood as an [`Objective`] over
/// `t = (tau, mu)` with the sample as `z`.
#[derive(Debug, Clone, Copy)]
pub struct MixtureObjective {
    pub components: usize,
}

impl MixtureObjective {
    fn split<'a>(&self, t: &'a [f64]) -> UnrestrictedView<'a> {
        UnrestrictedView { weights: &t[..self.components], means: &t[self.components..] }
    }
}

struct UnrestrictedView<'a> {
    weights: &'a [f64],
    means: &'a [f64],
}

impl MixtureLike for UnrestrictedView<'_> {
    fn weights(&self) -> &[f64] {
        self.weights
    }
    fn means(&self) -> &[f64] {
        self.means
    }
}

impl Objective for MixtureObjective {
    fn eval(&self, t: &[f64], z: &[f64]) -> f64 {
        let p = self.split(t);
        if p.weights.iter().any(|w| !(*w > 0.0)) {
            return f64::NAN;
        }
        mixture_nll(&p, z)
    }

    fn grad_t(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let p = self.split(t);
        let j = self.components;
        let mut g = vec![0.0; 2 * j];
        for &x in z {
            let f = mixture_density(&p, x);
            for k in 0..j {
                let ph = norm_pdf(x - p.means[k]);
                g[k] -= ph / f;
                g[j + k] -= p.weights[k] * (x - p.means[k]) * ph / f;
            }
        }
        Some(g)
    }

    fn grad_z(&self, t: &[f64], z: &[f64]) -> Option<Vec<f64>> {
        let p = self.split(t);
        Some(z.iter().map(|&x| score(&p, x)).collect())
    }
}

/// Ordered chart for `J` components with means inside `[lo, hi]`.
pub fn ordered_region(components: usize, lo: f64, hi: f64) -> Result<Region> {
    let j = components;
    let mut lower = vec![STRICT_MARGIN; j];
    let mut upper = vec![1.0; j];
    lower.extend(std::iter::repeat_n(lo, j));
    upper.extend(std::iter::repeat_n(hi, j));
    let mut r = Region::new(lower, upper)?;
    if j > 1 {
        let mut ones = vec![1.0; j];
        ones.extend(std::iter::repeat_n(0.0, j));
        r = r.with_equality(ones, 1.0)?;
    }
    for k in 0..j.saturating_sub(1) {
        r = r.with_order(j + k, j + k + 1)?;
    }
    Ok(r)
}

fn sample_bounds(z: &[f64]) -> (f64, f64) {
    let lo = z.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Moves an unordered EM solution onto the ordered chart.
fn to_ordered_vector(weights: &[f64], means: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..weights.len()).collect();
    idx.sort_by(|&a, &b| means[a].total_cmp(&means[b]));
    let mut w: Vec<f64> = idx.iter().map(|&i| weights[i].max(STRICT_MARGIN)).collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    let mut m: Vec<f64> = idx.iter().map(|&i| means[i]).collect();
    for k in 1..m.len() {
        if m[k] < m[k - 1] + STRICT_MARGIN {
            m[k] = m[k - 1] + STRICT_MARGIN;
        }
    }
    w.into_iter().chain(m).collect()
}

/// Runs EM from `(weights, means)` until the relative improvement of the
/// negative log-likelihood falls below `tol` or `max_iters` is reached.
pub fn em_run(z: &[f64], weights: &[f64], means: &[f64], tol: f64, max_iters: usize) -> LocalMin {
    let j = weights.len();
    let mut w = weights.to_vec();
    let mut m = means.to_vec();
    let mut nll = mixture_nll(&UnrestrictedView { weights: &w, means: &m }, z);
    let mut converged = false;
    for _ in 0..max_iters {
        let mut rsum = vec![0.0; j];
        let mut zsum = vec![0.0; j];
        for &x in z {
            let r = responsibilities(&UnrestrictedView { weights: &w, means: &m }, x);
            for k in 0..j {
                rsum[k] += r[k];
                zsum[k] += r[k] * x;
            }
        }
        for k in 0..j {
            if rsum[k] > 1e-300 {
                m[k] = zsum[k] / rsum[k];
            }
            w[k] = (rsum[k] / z.len() as f64).max(STRICT_MARGIN);
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= total);
        let next = mixture_nll(&UnrestrictedView { weights: &w, means: &m }, z);
        let improvement = nll - next;
        nll = next;
        if improvement.abs() <= tol * (1.0 + nll.abs()) {
            converged = true;
            break;
        }
    }
    let t = to_ordered_vector(&w, &m);
    let value = MixtureObjective { components: j }.eval(&t, z);
    LocalMin { t, value, converged: converged && value.is_finite() }
}

fn em_start(z: &[f64], j: usize, rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
    let mut pool: Vec<f64> = z.to_vec();
    let mut means = Vec::with_capacity(j);
    for _ in 0..j {
        let i = rng.random_range(0..pool.len());
        means.push(pool.swap_remove(i));
    }
    let raw: Vec<f64> = (0..j).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = raw.iter().sum();
    (raw.iter().map(|x| x / total).collect(), means)
}

/// Diameter of the ordered chart used for the clustering radius.
pub fn chart_diameter(components: usize, z: &[f64]) -> f64 {
    let (lo, hi) = sample_bounds(z);
    (components as f64 * (1.0 + (hi - lo).powi(2))).sqrt()
}

/// Multistart-EM maximum likelihood over the ordered chart.
///
/// Requires `J <= sqrt(n)`; see [`fit_mle_unchecked`] to bypass.
pub fn fit_mle(sample: &MixtureSample, components: usize, cfg: &MultistartConfig) -> Result<ArgminReport> {
    if components == 0 || components * components > sample.len() {
        return Err(Error::Precondition(format!(
            "J = {components} violates J <= sqrt(n) with n = {}",
            sample.len()
        )));
    }
    fit_mle_unchecked(sample, components, cfg)
}

/// [`fit_mle`] without the `J <= sqrt(n)` precondition.
pub fn fit_mle_unchecked(sample: &MixtureSample, components: usize, cfg: &MultistartConfig) -> Result<ArgminReport> {
    let z = sample.values();
    if components == 0 || components > z.len() {
        return Err(Error::InvalidParams("need 1 <= J <= n".into()));
    }
    let minima: Vec<LocalMin> = if components == 1 {
        let mean = z.iter().sum::<f64>() / z.len() as f64;
        let t = vec![1.0, mean];
        vec![LocalMin { value: MixtureObjective { components: 1 }.eval(&t, z), t, converged: true }]
    } else {
        let tol = cfg.local_tol.min(1e-12);
        let iters = cfg.max_iters.max(10_000);
        (0..cfg.n_starts.max(1))
            .into_par_iter()
            .map(|i| {
                let mut rng = stream_rng(cfg.seed, i as u64);
                let (w, m) = em_start(z, components, &mut rng);
                em_run(z, &w, &m, tol, iters)
            })
            .collect()
    };
    Ok(build_report(&minima, chart_diameter(components, z), cfg))
}

/// Re-runs EM from every cluster representative with a much tighter budget and
/// returns the polished `(t, value)` pairs in cluster order.
pub fn repolish(sample: &MixtureSample, report: &ArgminReport) -> Vec<(Vec<f64>, f64)> {
    report
        .clusters
        .iter()
        .map(|c| {
            let j = c.representative.len() / 2;
            let m = em_run(sample.values(), &c.representative[..j], &c.representative[j..], 0.0, 200_000);
            (m.t, m.value)
        })
        .collect()
}

/// Finite description of the unrestricted argmin set generated by one
/// global minimizer: every way of permuting components and re-splitting the
/// weight of components that share a mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgminSet {
    pub components: usize,
    /// Distinct means of the minimizer, ascending.
    pub distinct_means: Vec<f64>,
    /// Total weight carried by each distinct mean.
    pub total_weights: Vec<f64>,
}

const TIE_TOL: f64 = 1e-12;

/// Expands one global minimizer into the set of all global minimizers over
/// the unrestricted parameter space.
pub fn argmin_set_expand(best: &UnrestrictedParams) -> ArgminSet {
    let mut distinct_means: Vec<f64> = Vec::new();
    let mut total_weights: Vec<f64> = Vec::new();
    let mut idx: Vec<usize> = (0..best.components()).collect();
    idx.sort_by(|&a, &b| best.means[a].total_cmp(&best.means[b]));
    for i in idx {
        let (w, m) = (best.weights[i], best.means[i]);
        match distinct_means.last() {
            Some(last) if (m - last).abs() <= TIE_TOL => *total_weights.last_mut().unwrap() += w,
            _ => {
                distinct_means.push(m);
                total_weights.push(w);
            }
        }
    }
    ArgminSet { components: best.components(), distinct_means, total_weights }
}

impl ArgminSet {
    /// True when all means of the minimizer are distinct (the set is finite).
    pub fn is_finite(&self) -> bool {
        self.distinct_means.len() == self.components
    }

    /// Membership: for every distinct mean, the candidate's weight on that
    /// mean equals the minimizer's.
    pub fn contains(&self, cand: &UnrestrictedParams) -> bool {
        if cand.components() != self.components {
            return false;
        }
        self.distinct_means.iter().zip(&self.total_weights).all(|(mu, w)| {
            let mass: f64 = cand
                .weights
                .iter()
                .zip(&cand.means)
                .filter(|(_, m)| (*m - mu).abs() <= TIE_TOL)
                .map(|(s, _)| s)
                .sum();
            (mass - w).abs() <= 1e-12
        })
    }

    /// Members with the weight of tied components split on a grid of
    /// `resolution` steps; for a finite set this is exactly the `J!`
    /// permutations (deduplicated).
    pub fn members(&self, resolution: usize) -> Vec<UnrestrictedParams> {
        let j = self.components;
        let k = self.distinct_means.len();
        let mut out: Vec<UnrestrictedParams> = Vec::new();
        // assignment of each slot to a distinct mean, every mean used at least once
        let mut assign = vec![0usize; j];
        loop {
            if (0..k).all(|d| assign.contains(&d)) {
                for weights in self.split_weights(&assign, resolution.max(1)) {
                    let means = assign.iter().map(|&d| self.distinct_means[d]).collect();
                    let cand = UnrestrictedParams { weights, means };
                    if !out.contains(&cand) {
                        out.push(cand);
                    }
                }
            }
            // next assignment in base-k counting
            let mut pos = 0;
            while pos < j {
                assign[pos] += 1;
                if assign[pos] < k {
                    break;
                }
                assign[pos] = 0;
                pos += 1;
            }
            if pos == j {
                break;
            }
        }
        let key = |p: &UnrestrictedParams| p.means.iter().chain(&p.weights).copied().collect::<Vec<f64>>();
        out.sort_by(|a, b| {
            key(a).iter().zip(&key(b)).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        });
        out
    }

    fn split_weights(&self, assign: &[usize], resolution: usize) -> Vec<Vec<f64>> {
        let groups: Vec<Vec<usize>> = (0..self.distinct_means.len())
            .map(|d| (0..assign.len()).filter(|&s| assign[s] == d).collect())
            .collect();
        let mut results = vec![vec![0.0; assign.len()]];
        for (d, slots) in groups.iter().enumerate() {
            let total = self.total_weights[d];
            let shares = compositions(resolution, slots.len());
            let mut next = Vec::new();
            for base in &results {
                for share in &shares {
                    let mut w = base.clone();
                    for (slot, s) in slots.iter().zip(share) {
                        w[*slot] = total * *s as f64 / resolution as f64;
                    }
                    next.push(w);
                }
            }
            results = next;
        }
        results
    }
}

/// Compositions of `n` into `parts` positive integers (the single part `n`
/// when `parts == 1`).
fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    if n < parts {
        return Vec::new();
    }
    let mut out = Vec::new();
    for first in 1..=(n - parts + 1) {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Mixture experiment: datasets of size `n` drawn from `truth`, fitted with
/// `components` components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureModel {
    pub truth: UnrestrictedParams,
    pub n: usize,
    pub components: usize,
}

impl crate::globalopt::RandomModel for MixtureModel {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        MixtureSample::simulate(&self.truth, self.n, rng).map(|s| s.z).unwrap_or_default()
    }

    fn locate_minimizers(&self, z: &[f64], cfg: &MultistartConfig) -> Result<ArgminReport> {
        fit_mle(&MixtureSample::new(z.to_vec())?, self.components, cfg)
    }
}

/// Seeded dataset `index` for a mixture experiment.
pub fn simulate_dataset(truth: &UnrestrictedParams, n: usize, seed: u64, index: u64) -> Result<MixtureSample> {
    MixtureSample::simulate(truth, n, &mut stream_rng(child_seed(seed, 0xda7a), index))
}
