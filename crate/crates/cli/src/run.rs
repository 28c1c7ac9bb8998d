use std::path::Path;

use argmin_unique::domain::{Domain, Region};
use argmin_unique::genericity::{scan_points, ScanReport};
use argmin_unique::globalopt::{multiplicity_draws, ArgminReport, MultiplicityEstimate, MultistartConfig, Verdict};
use argmin_unique::mixture::{self, argmin_set_expand, MixtureSample, UnrestrictedParams};
use argmin_unique::objective::{Objective, Quadratic};
use argmin_unique::penalized::{global_minimize, PenalizedFit, PenalizedModel, RegressionData};
use argmin_unique::report::to_canonical_string;
use argmin_unique::stats::child_seed;
use argmin_unique::threshold::{argmin_uniqueness_trial, q_profile, GpSampler};
use argmin_unique::weakid::{builtin, count_first_order_roots, PiDomain, WeakIdModel};
use argmin_unique::Error as CoreError;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{Command, ExperimentConfig, GenericConfig, WeakIdConfig};
use crate::io::{csv_text, read_regression_csv, read_sample_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const KAPPA_DISCLAIMER: &str =
    "kappa(pi) is set to 0; the deterministic term of the limit objective is not identified, so profiles and \
     multiplicity claims hold for kappa = 0 only";

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    Config(String),
    Numeric(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => EXIT_CONFIG,
            RunError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(m) => write!(f, "config error: {m}"),
            RunError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<CoreError> for RunError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::InvalidRegion(_)
            | CoreError::InvalidParams(_)
            | CoreError::DimensionMismatch { .. }
            | CoreError::Precondition(_)
            | CoreError::ExplicitBound { .. } => RunError::Config(e.to_string()),
            _ => RunError::Numeric(e.to_string()),
        }
    }
}

/// Rendered outputs of one run, written only after every computation succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub report: String,
    pub profile: Option<String>,
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let text = to_canonical_string(cfg).expect("config serializes");
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn multistart(cfg: &ExperimentConfig, seed: u64) -> MultistartConfig {
    MultistartConfig {
        n_starts: cfg.search.n_starts,
        seed,
        local_tol: cfg.search.local_tol,
        max_iters: cfg.search.max_iters,
        eps_value: cfg.tolerances.eps_value,
        delta_cluster: cfg.tolerances.delta_cluster,
    }
}

fn draws_or(cfg: &ExperimentConfig, default: usize) -> usize {
    if cfg.draws == 0 {
        default
    } else {
        cfg.draws
    }
}

fn envelope(cfg: &ExperimentConfig, result: Value, notes: Vec<&str>) -> Result<String, RunError> {
    let doc = json!({
        "command": cfg.command.name(),
        "version": argmin_unique::VERSION,
        "seed": cfg.seed,
        "config_hash": config_hash(cfg),
        "config": serde_json::to_value(cfg).map_err(|e| RunError::Numeric(e.to_string()))?,
        "notes": notes,
        "result": result,
    });
    to_canonical_string(&doc).map_err(|e| RunError::Numeric(e.to_string()))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("result serializes")
}

/// Runs the experiment described by `cfg` without touching the file system
/// (input data files are read).
pub fn run(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    match cfg.command {
        Command::Weakid => run_weakid(cfg),
        Command::Mixture => run_mixture(cfg),
        Command::Penalized => run_penalized(cfg),
        Command::Threshold => run_threshold(cfg),
        Command::GenericCheck => run_generic(cfg),
    }
}

/// Writes `<prefix>.report.json` and, when present, `<prefix>.profile.csv`.
pub fn write_outputs(prefix: &str, out: &Outputs) -> std::io::Result<()> {
    if let Some(parent) = Path::new(prefix).parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(format!("{prefix}.report.json"), &out.report)?;
    if let Some(p) = &out.profile {
        std::fs::write(format!("{prefix}.profile.csv"), p)?;
    }
    Ok(())
}

pub fn weakid_model(c: &WeakIdConfig) -> Result<WeakIdModel, RunError> {
    let mut m = builtin(&c.example).ok_or_else(|| RunError::Config(format!("unknown weakid example {:?}", c.example)))?;
    m = m.with_pi0(c.pi0).with_pi_domain(c.pi_domain)?;
    if let Some(b) = &c.b {
        m = m.with_b(b.clone())?;
    }
    if let Some(rows) = &c.h {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(RunError::Config("H must be square".into()));
        }
        m = m.with_h(DMatrix::from_fn(n, n, |i, j| rows[i][j]))?;
    }
    Ok(m)
}

/// `(pi, Q)` rows on `n` points evenly spaced in the chart of `pi`.
pub fn weakid_profile_rows(m: &WeakIdModel, z: &[f64], n: usize) -> Result<Vec<Vec<f64>>, RunError> {
    let grid = m.pi_domain().grid(n);
    let rows: Vec<Vec<f64>> = m.profile(z, &grid)?.into_iter().map(|(p, q)| vec![p, q]).collect();
    if rows.iter().any(|r| !r[1].is_finite()) {
        return Err(RunError::Numeric("non-finite profile value".into()));
    }
    Ok(rows)
}

#[derive(Serialize)]
struct Minimizer {
    point: Vec<f64>,
    value: f64,
    basin_hit_count: usize,
}

fn argmin_json(rep: &ArgminReport) -> Value {
    let minimizers: Vec<Minimizer> = rep
        .clusters
        .iter()
        .map(|c| Minimizer { point: c.representative.clone(), value: c.value, basin_hit_count: c.basin_hit_count })
        .collect();
    json!({
        "verdict": rep.verdict,
        "global_value": rep.global_value,
        "minimizers": minimizers,
        "eps_value": rep.eps_value,
        "delta_cluster": rep.delta_cluster,
        "n_starts": rep.n_starts,
        "n_converged": rep.n_converged,
    })
}

fn run_weakid(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    let c = &cfg.weakid;
    let m = weakid_model(c)?;
    if c.profile_points < 2 {
        return Err(RunError::Config("profile_points must be >= 2".into()));
    }
    let notes = vec![KAPPA_DISCLAIMER];
    match &c.z {
        Some(z) => {
            if z.len() != m.d_z() {
                return Err(RunError::Config(format!("z must have {} entries", m.d_z())));
            }
            let rep = m.locate(z, &multistart(cfg, cfg.seed))?;
            let roots = count_first_order_roots(&m, z, 4001)?;
            let mut result = argmin_json(&rep);
            result["z"] = to_value(z);
            result["first_order_roots"] = to_value(&roots);
            let profile = csv_text(&["pi", "Q"], &weakid_profile_rows(&m, z, c.profile_points)?);
            Ok(Outputs { report: envelope(cfg, result, notes)?, profile: Some(profile) })
        }
        None => {
            let n = draws_or(cfg, 200);
            let outcomes = multiplicity_draws(&m, n, cfg.seed, &multistart(cfg, cfg.seed))?;
            let est = MultiplicityEstimate::from_outcomes(&outcomes);
            let roots: Vec<usize> =
                outcomes.iter().map(|o| count_first_order_roots(&m, &o.z, 4001).map(|s| s.count)).collect::<Result<_, _>>()?;
            let agree = outcomes
                .iter()
                .zip(&roots)
                .filter(|(o, k)| (o.report.verdict == Verdict::Multiple(2)) == (**k == 2))
                .count();
            let result = json!({
                "estimate": est,
                "two_root_fraction": roots.iter().filter(|k| **k == 2).count() as f64 / n as f64,
                "verdict_root_agreement": agree as f64 / n as f64,
            });
            Ok(Outputs { report: envelope(cfg, result, notes)?, profile: None })
        }
    }
}

#[derive(Serialize)]
struct MixtureFitJson {
    index: usize,
    verdict: Verdict,
    nll: f64,
    weights: Vec<f64>,
    means: Vec<f64>,
    clusters: usize,
}

fn mixture_fit(cfg: &ExperimentConfig, sample: &MixtureSample, seed: u64, index: usize) -> Result<MixtureFitJson, RunError> {
    let c = &cfg.mixture;
    let ms = multistart(cfg, seed);
    let rep = if c.allow_large_j {
        if c.components * c.components > sample.len() {
            eprintln!(
                "warning: J = {} exceeds sqrt(n) for n = {}; the uniqueness guarantee does not cover this case",
                c.components,
                sample.len()
            );
        }
        mixture::fit_mle_unchecked(sample, c.components, &ms)?
    } else {
        mixture::fit_mle(sample, c.components, &ms)?
    };
    let best = rep.clusters.first().ok_or_else(|| RunError::Numeric("no EM run produced a finite likelihood".into()))?;
    let best = rep.clusters.iter().fold(best, |a, b| if b.value < a.value { b } else { a });
    let j = c.components;
    Ok(MixtureFitJson {
        index,
        verdict: rep.verdict,
        nll: best.value,
        weights: best.representative[..j].to_vec(),
        means: best.representative[j..].to_vec(),
        clusters: rep.clusters.len(),
    })
}

fn run_mixture(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    let c = &cfg.mixture;
    let truth = UnrestrictedParams::new(c.truth.weights.clone(), c.truth.means.clone())?;
    let fits: Vec<MixtureFitJson> = match &c.data {
        Some(path) => {
            let z = read_sample_csv(path).map_err(RunError::Config)?;
            vec![mixture_fit(cfg, &MixtureSample::new(z)?, cfg.seed, 0)?]
        }
        None => (0..draws_or(cfg, 1))
            .into_par_iter()
            .map(|i| {
                let s = mixture::simulate_dataset(&truth, c.n, cfg.seed, i as u64)?;
                mixture_fit(cfg, &s, child_seed(cfg.seed, i as u64), i)
            })
            .collect::<Result<_, RunError>>()?,
    };
    let unique = fits.iter().filter(|f| f.verdict == Verdict::Unique).count();
    let argmin_set = fits.first().map(|f| {
        let p = UnrestrictedParams { weights: f.weights.clone(), means: f.means.clone() };
        argmin_set_expand(&p)
    });
    let result = json!({
        "datasets": fits.len(),
        "unique": unique,
        "fits": fits,
        "argmin_set_first": argmin_set,
    });
    Ok(Outputs { report: envelope(cfg, result, vec![])?, profile: None })
}

fn run_penalized(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    let c = &cfg.penalized;
    c.penalty.validate()?;
    let ms = multistart(cfg, cfg.seed);
    let result = match &c.data {
        Some(path) => {
            let (y, rows) = read_regression_csv(path).map_err(RunError::Config)?;
            let data = RegressionData::from_rows(y, &rows)?;
            let rep = global_minimize(&c.penalty, &data, &ms)?;
            let fit = PenalizedFit::from_report(&rep).ok_or_else(|| RunError::Numeric("no finite minimum".into()))?;
            json!({ "fit": fit, "search": argmin_json(&rep) })
        }
        None => {
            if c.beta0.is_empty() {
                return Err(RunError::Config("beta0 must be nonempty".into()));
            }
            let design = RegressionData::simulate(c.n, &c.beta0, cfg.seed)?;
            let model = PenalizedModel { spec: c.penalty, design, beta0: c.beta0.clone() };
            let outcomes = multiplicity_draws(&model, draws_or(cfg, 1), child_seed(cfg.seed, 1), &ms)?;
            let fits: Vec<Option<PenalizedFit>> = outcomes.iter().map(|o| PenalizedFit::from_report(&o.report)).collect();
            json!({
                "estimate": MultiplicityEstimate::from_outcomes(&outcomes),
                "unique": outcomes.iter().filter(|o| o.report.verdict == Verdict::Unique).count(),
                "fits": fits,
            })
        }
    };
    Ok(Outputs { report: envelope(cfg, result, vec![])?, profile: None })
}

fn run_threshold(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    let c = &cfg.threshold;
    let paths = if cfg.draws > 0 { cfg.draws } else { c.paths };
    if paths == 0 {
        return Err(RunError::Config("paths must be >= 1".into()));
    }
    let report = argmin_uniqueness_trial(&c.spec, paths, &c.eps_schedule, cfg.seed)?;
    let sampler = GpSampler::new(&c.spec)?;
    let path = sampler.simulate(cfg.seed, 0);
    let q = q_profile(&c.spec, &path);
    let rows: Vec<Vec<f64>> = (0..q.len()).map(|k| vec![path.t_grid[k], path.w[k], q[k]]).collect();
    let result = json!({
        "trial": report,
        "monotone": report.is_monotone(),
    });
    Ok(Outputs { report: envelope(cfg, result, vec![])?, profile: Some(csv_text(&["t", "W", "Q"], &rows)) })
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Scans the configured model for degenerate triples.
pub fn generic_scan(g: &GenericConfig, tol: Option<f64>) -> Result<ScanReport, RunError> {
    if g.resolution < 2 {
        return Err(RunError::Config("resolution must be >= 2".into()));
    }
    let (obj, t_dom, z_dim): (Box<dyn Objective>, Region, usize) = match g.model.as_str() {
        "quadratic" => (Box::new(Quadratic), Region::interval(g.t_range.0, g.t_range.1)?, 1),
        "example1" => {
            let m = builtin("1").expect("built-in example").with_pi_domain(PiDomain::Interval { lo: g.t_range.0, hi: g.t_range.1 })?;
            (Box::new(m), Region::interval(g.t_range.0, g.t_range.1)?, 3)
        }
        other => return Err(RunError::Config(format!("unknown generic-check model {other:?}"))),
    };
    let t_points: Vec<Vec<f64>> = match &g.t_points {
        Some(ts) => ts.iter().map(|t| vec![*t]).collect(),
        None => linspace(g.t_range.0, g.t_range.1, g.resolution).into_iter().map(|t| vec![t]).collect(),
    };
    let z_points: Vec<Vec<f64>> = match &g.z_points {
        Some(zs) => {
            if zs.iter().any(|z| z.len() != z_dim) {
                return Err(RunError::Config(format!("z points must have {z_dim} entries")));
            }
            zs.clone()
        }
        None => Region::symmetric(z_dim, 1.0)
            .and_then(|_| Region::new(vec![g.z_range.0; z_dim], vec![g.z_range.1; z_dim]))?
            .grid(g.resolution),
    };
    let spec = format!(
        "model {}: {} t-points, {} z-points{}",
        g.model,
        t_points.len(),
        z_points.len(),
        if g.t_points.is_some() || g.z_points.is_some() { " (explicit)" } else { "" }
    );
    Ok(scan_points(obj.as_ref(), &Domain::single(t_dom), &t_points, &z_points, tol, spec)?)
}

fn run_generic(cfg: &ExperimentConfig) -> Result<Outputs, RunError> {
    let scan = generic_scan(&cfg.generic, cfg.tolerances.generic_tol)?;
    Ok(Outputs { report: envelope(cfg, scan.to_json(), vec![])?, profile: None })
}

/// The figure panels: `(file stem, example, z)`.
pub const FIGURE_PANELS: [(&str, &str, [f64; 3]); 4] = [
    ("example1_left", "1", [-1.03, 1.29, 2.77]),
    ("example1_right", "1", [-1.82, -0.52, 0.16]),
    ("example2_left", "2", [-0.23, -0.28, 1.31]),
    ("example2_right", "2", [-0.76, -0.25, -1.65]),
];

/// Profiles for the four figure panels (`b = 0`, `H = I`, `kappa = 0`) on
/// 1201 points over `[-6, 6]`, as `(file name, csv)` plus a manifest.
pub fn reproduce_figures() -> Result<(Vec<(String, String)>, String), RunError> {
    let mut files = Vec::new();
    let mut panels = Vec::new();
    for (stem, example, z) in FIGURE_PANELS {
        let m = builtin(example).expect("built-in example");
        let rows = weakid_profile_rows(&m, &z, 1201)?;
        files.push((format!("{stem}.csv"), csv_text(&["pi", "Q"], &rows)));
        panels.push(json!({"file": format!("{stem}.csv"), "example": example, "z": z, "b": vec![0.0; m.d_beta()], "H": "identity"}));
    }
    let manifest = to_canonical_string(&json!({
        "version": argmin_unique::VERSION,
        "grid": {"lo": -6.0, "hi": 6.0, "points": 1201},
        "panels": panels,
        "notes": [KAPPA_DISCLAIMER],
    }))
    .map_err(|e| RunError::Numeric(e.to_string()))?;
    Ok((files, manifest))
}
