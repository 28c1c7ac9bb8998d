use std::path::PathBuf;
use std::process::ExitCode;

use argmin_unique::penalized::PenaltySpec;
use argmin_unique::weakid::PiDomain;
use argmin_unique_cli::config::{Command, ExperimentConfig};
use argmin_unique_cli::run::{reproduce_figures, run, write_outputs, RunError, EXIT_CONFIG, EXIT_NUMERIC};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "argmin-unique", version, about = "Diagnostics for uniqueness of the global minimizer of random objectives")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone, Default)]
struct Shared {
    /// JSON experiment config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    draws: Option<usize>,
    /// Output prefix; writes `<out>.report.json` (and `<out>.profile.csv`).
    #[arg(long)]
    out: Option<String>,
    /// Absolute tie tolerance for objective values.
    #[arg(long)]
    eps: Option<f64>,
    /// Spatial clustering radius.
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    starts: Option<usize>,
}

#[derive(Subcommand)]
enum Sub {
    /// Limit objective of a weakly identified model.
    Weakid {
        #[command(flatten)]
        shared: Shared,
        /// `1`, `2` or `linear`.
        #[arg(long)]
        example: Option<String>,
        /// Comma-separated realization of z.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        z: Option<Vec<f64>>,
        /// Let pi range over the whole real line.
        #[arg(long)]
        real_line: bool,
    },
    /// Maximum likelihood for a unit-variance normal mixture.
    Mixture {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        components: Option<usize>,
        /// Fit even when J exceeds sqrt(n).
        #[arg(long)]
        allow_large_j: bool,
    },
    /// Penalized least squares.
    Penalized {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        data: Option<PathBuf>,
        /// `l0`, `bridge`, `scad` or `mcp`.
        #[arg(long)]
        penalty: Option<String>,
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Gaussian-process threshold limit.
    Threshold {
        #[command(flatten)]
        shared: Shared,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        grid_size: Option<usize>,
    },
    /// Scan a model for degenerate (t, s, z) triples.
    GenericCheck {
        #[command(flatten)]
        shared: Shared,
        /// `quadratic` or `example1`.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Write the profile CSVs of the two weakly identified examples.
    ReproduceFigures {
        /// Output directory.
        #[arg(long, default_value = "figures")]
        out: PathBuf,
    },
}

fn base_config(command: Command, shared: &Shared) -> Result<ExperimentConfig, RunError> {
    let mut cfg = match &shared.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| RunError::Config(format!("cannot read {}: {e}", path.display())))?;
            let cfg = ExperimentConfig::from_json(&text).map_err(RunError::Config)?;
            if cfg.command != command {
                return Err(RunError::Config(format!(
                    "config is for `{}`, not `{}`",
                    cfg.command.name(),
                    command.name()
                )));
            }
            cfg
        }
        None => ExperimentConfig::new(command),
    };
    if let Some(s) = shared.seed {
        cfg.seed = s;
    }
    if let Some(d) = shared.draws {
        cfg.draws = d;
    }
    if let Some(o) = &shared.out {
        cfg.out = Some(o.clone());
    }
    if let Some(e) = shared.eps {
        cfg.tolerances.eps_value = Some(e);
    }
    if let Some(d) = shared.delta {
        cfg.tolerances.delta_cluster = Some(d);
    }
    if let Some(n) = shared.starts {
        cfg.search.n_starts = n;
    }
    Ok(cfg)
}

fn penalty_from_flags(kind: Option<&str>, lambda: Option<f64>, current: PenaltySpec) -> Result<PenaltySpec, RunError> {
    let spec = match kind {
        None => current,
        Some("l0") => PenaltySpec::L0 { lambda: current.lambda() },
        Some("bridge") => PenaltySpec::Bridge { lambda: current.lambda(), q: 0.5 },
        Some("scad") => PenaltySpec::Scad { lambda: current.lambda(), a: 3.7 },
        Some("mcp") => PenaltySpec::Mcp { lambda: current.lambda(), gamma: 3.0 },
        Some(other) => return Err(RunError::Config(format!("unknown penalty {other:?}"))),
    };
    Ok(match (spec, lambda) {
        (s, None) => s,
        (PenaltySpec::L0 { .. }, Some(l)) => PenaltySpec::L0 { lambda: l },
        (PenaltySpec::Bridge { q, .. }, Some(l)) => PenaltySpec::Bridge { lambda: l, q },
        (PenaltySpec::Scad { a, .. }, Some(l)) => PenaltySpec::Scad { lambda: l, a },
        (PenaltySpec::Mcp { gamma, .. }, Some(l)) => PenaltySpec::Mcp { lambda: l, gamma },
    })
}

fn build(sub: &Sub) -> Result<ExperimentConfig, RunError> {
    Ok(match sub {
        Sub::Weakid { shared, example, z, real_line } => {
            let mut cfg = base_config(Command::Weakid, shared)?;
            if let Some(e) = example {
                cfg.weakid.example = e.clone();
            }
            if let Some(z) = z {
                cfg.weakid.z = Some(z.clone());
            }
            if *real_line {
                cfg.weakid.pi_domain = PiDomain::RealLine;
            }
            cfg
        }
        Sub::Mixture { shared, data, components, allow_large_j } => {
            let mut cfg = base_config(Command::Mixture, shared)?;
            if let Some(d) = data {
                cfg.mixture.data = Some(d.clone());
            }
            if let Some(j) = components {
                cfg.mixture.components = *j;
            }
            cfg.mixture.allow_large_j |= *allow_large_j;
            cfg
        }
        Sub::Penalized { shared, data, penalty, lambda } => {
            let mut cfg = base_config(Command::Penalized, shared)?;
            if let Some(d) = data {
                cfg.penalized.data = Some(d.clone());
            }
            cfg.penalized.penalty = penalty_from_flags(penalty.as_deref(), *lambda, cfg.penalized.penalty)?;
            cfg
        }
        Sub::Threshold { shared, paths, grid_size } => {
            let mut cfg = base_config(Command::Threshold, shared)?;
            if let Some(p) = paths {
                cfg.threshold.paths = *p;
            }
            if let Some(g) = grid_size {
                cfg.threshold.spec.grid_size = *g;
            }
            cfg
        }
        Sub::GenericCheck { shared, model, resolution } => {
            let mut cfg = base_config(Command::GenericCheck, shared)?;
            if let Some(m) = model {
                cfg.generic.model = m.clone();
            }
            if let Some(r) = resolution {
                cfg.generic.resolution = *r;
            }
            cfg
        }
        Sub::ReproduceFigures { .. } => unreachable!("handled separately"),
    })
}

fn init_threads() {
    if let Some(n) = std::env::var("ARGMIN_UNIQUE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
}

fn fail(e: RunError) -> ExitCode {
    eprintln!("argmin-unique: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn io_fail(e: std::io::Error) -> ExitCode {
    eprintln!("argmin-unique: cannot write output: {e}");
    ExitCode::from(EXIT_NUMERIC as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    init_threads();

    if let Sub::ReproduceFigures { out } = &cli.command {
        let (files, manifest) = match reproduce_figures() {
            Ok(v) => v,
            Err(e) => return fail(e),
        };
        if let Err(e) = std::fs::create_dir_all(out) {
            return io_fail(e);
        }
        for (name, text) in files.iter().chain(std::iter::once(&("manifest.json".to_string(), manifest))) {
            if let Err(e) = std::fs::write(out.join(name), text) {
                return io_fail(e);
            }
        }
        println!("{}", out.display());
        return ExitCode::SUCCESS;
    }

    let cfg = match build(&cli.command) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let outputs = match run(&cfg) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let prefix = cfg.out_prefix();
    if let Err(e) = write_outputs(&prefix, &outputs) {
        return io_fail(e);
    }
    println!("{prefix}.report.json");
    ExitCode::SUCCESS
}
