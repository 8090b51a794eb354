//! Command-line front end: strict experiment configs, cached spectra and
//! deterministic JSON/CSV/gnuplot/PGM artifacts.

pub mod cache;
pub mod commands;
pub mod config;
pub mod domains;
pub mod manifest;
pub mod output;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};
use commands::{Ctx, Part};
use config::ExperimentConfig;
use manifest::{exit_code, RunManifest, VERSION};
use neumann_core::perturbation::Family;
use neumann_core::report::Verdict;
use std::path::PathBuf;

/// Exit code for usage, configuration and I/O errors.
pub const EXIT_USAGE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "neumann", version, about = "Neumann Laplacian spectra and boundary-perturbation experiments")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in domain name (square, interval, disc, cusp, cusp3, sawtooth, rectangle) or a domain TOML file.
    #[arg(long, global = true)]
    pub domain: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Seed for randomized solver starts and ascent restarts
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of eigenpairs.
    #[arg(long, global = true)]
    pub m: Option<usize>,
    /// Cell size.
    #[arg(long, global = true)]
    pub h: Option<f64>,
    /// Eigensolver tolerance.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Lowest Neumann eigenpairs.
    Spectrum,
    /// Whitney decomposition and its invariants.
    Whitney {
        #[arg(long)]
        k_max: Option<i32>,
    },
    /// Boundary Minkowski dimension from collar measures.
    Dimension,
    /// Heat trace, ultracontractivity and the sup-norm/growth/kernel bounds.
    Heatkernel {
        /// Kernel exponent M.
        #[arg(long)]
        exponent: Option<f64>,
    },
    /// Sobolev quotient refinement studies.
    Sobolev {
        /// Comma-separated exponents.
        #[arg(long, value_delimiter = ',')]
        q: Option<Vec<f64>>,
    },
    /// Eigenvalue stability sweep under a boundary perturbation family.
    Perturb {
        /// graph_shrink, graph_offset, collar_removal or deformation.
        #[arg(long)]
        family: Option<String>,
        /// Comma-separated perturbation sizes.
        #[arg(long, value_delimiter = ',')]
        eps: Option<Vec<f64>>,
        /// Highest eigenvalue index compared
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Full verification battery with a summary table.
    VerifyAll,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Whitney { .. } => "whitney",
            Command::Dimension => "dimension",
            Command::Heatkernel { .. } => "heatkernel",
            Command::Sobolev { .. } => "sobolev",
            Command::Perturb { .. } => "perturb",
            Command::VerifyAll => "verify-all",
        }
    }
}

fn parse_family(s: &str) -> Result<Family> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| anyhow!("unknown family '{s}'; expected graph_shrink, graph_offset, collar_removal or deformation"))
}

/// Folds command-line flags into the config; flags that do not apply to
/// the command are rejected.
pub fn effective_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &cli.domain {
        cfg.domain = Some(toml::Value::String(d.clone()));
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = cli.seed {
        cfg.seed = Some(s);
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = Some(j);
    }
    let name = cli.command.name();
    let reject = |flag: &str| Err(anyhow!("--{flag} does not apply to '{name}'"));
    match &cli.command {
        Command::Spectrum => {
            cfg.spectrum.m = cli.m.or(cfg.spectrum.m);
            cfg.spectrum.h = cli.h.or(cfg.spectrum.h);
            cfg.spectrum.tol = cli.tol.or(cfg.spectrum.tol);
        }
        Command::Heatkernel { exponent } => {
            cfg.heat.m = cli.m.or(cfg.heat.m);
            cfg.heat.h = cli.h.or(cfg.heat.h);
            cfg.heat.exponent = exponent.or(cfg.heat.exponent);
            if cli.tol.is_some() {
                return reject("tol");
            }
        }
        Command::Perturb { family, eps, n_max } => {
            if let Some(f) = family {
                cfg.perturb.family = Some(parse_family(f)?);
            }
            if let Some(e) = eps {
                cfg.perturb.eps = Some(e.clone());
            }
            cfg.perturb.n_max = n_max.or(cfg.perturb.n_max);
            cfg.perturb.h = cli.h.or(cfg.perturb.h);
            cfg.perturb.tol = cli.tol.or(cfg.perturb.tol);
            if cli.m.is_some() {
                return reject("m");
            }
        }
        Command::VerifyAll => {
            cfg.verify.h = cli.h.or(cfg.verify.h);
            cfg.heat.m = cli.m.or(cfg.heat.m);
            if cli.tol.is_some() {
                return reject("tol");
            }
        }
        Command::Whitney { k_max } => {
            cfg.whitney.k_max = k_max.or(cfg.whitney.k_max);
            for (flag, set) in [("m", cli.m.is_some()), ("h", cli.h.is_some()), ("tol", cli.tol.is_some())] {
                if set {
                    return reject(flag);
                }
            }
        }
        Command::Sobolev { q } => {
            if let Some(q) = q {
                cfg.sobolev.q = Some(q.clone());
            }
            for (flag, set) in [("m", cli.m.is_some()), ("h", cli.h.is_some()), ("tol", cli.tol.is_some())] {
                if set {
                    return reject(flag);
                }
            }
        }
        Command::Dimension => {
            for (flag, set) in [("m", cli.m.is_some()), ("h", cli.h.is_some()), ("tol", cli.tol.is_some())] {
                if set {
                    return reject(flag);
                }
            }
        }
    }
    Ok(cfg)
}

/// Hash of the effective config; the worker count does not affect results
/// and is left out.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let mut c = cfg.clone();
    c.jobs = None;
    c.out = None;
    output::sha256_hex(c.canonical().as_bytes())
}

pub const DEFAULT_SEED: u64 = 0x5eed;

/// Runs one command and returns its exit code.
pub fn run(cli: &Cli) -> Result<i32> {
    let cfg = effective_config(cli)?;
    let domain = match &cfg.domain {
        Some(v) => domains::from_value(v)?,
        None => return Err(anyhow!("no domain given; pass --domain or set `domain` in the config")),
    };
    let jobs = cfg.jobs.unwrap_or(1);
    if jobs == 0 {
        return Err(anyhow!("--jobs must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("cannot start worker pool")?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("neumann-out"));
    let mut ctx = Ctx {
        seed: cfg.seed.unwrap_or(DEFAULT_SEED),
        config_hash: config_hash(&cfg),
        cache: cache::SpectrumCache::from_env()?,
        out: output::Emitter::new(&out_dir)?,
        steps: Vec::new(),
        cache_hits: 0,
        domain,
        cfg,
    };
    let command = cli.command.name();
    let verdict = pool.install(|| -> Result<Verdict> {
        let single = |ctx: &mut Ctx, part: Part| ctx.emit(command, command, part);
        Ok(match &cli.command {
            Command::Spectrum => {
                let p = commands::spectrum_part(&mut ctx)?;
                single(&mut ctx, p)?
            }
            Command::Whitney { .. } => {
                let p = commands::whitney_part(&mut ctx)?;
                single(&mut ctx, p)?
            }
            Command::Dimension => {
                let p = commands::dimension_part(&mut ctx)?;
                single(&mut ctx, p)?
            }
            Command::Heatkernel { .. } => {
                let p = commands::heat_part(&mut ctx)?.part;
                single(&mut ctx, p)?
            }
            Command::Sobolev { .. } => {
                let p = commands::sobolev_part(&mut ctx)?;
                single(&mut ctx, p)?
            }
            Command::Perturb { .. } => {
                let p = commands::perturb_part(&mut ctx)?;
                single(&mut ctx, p)?
            }
            Command::VerifyAll => commands::verify_all(&mut ctx)?,
        })
    })?;
    let code = exit_code(verdict);
    let main_report = if command == "verify-all" {
        "summary.json".to_string()
    } else {
        format!("{command}.json")
    };
    let checks = commands::checks_of(&ctx.out.dir().join(&main_report))?;
    print!("{}", commands::render_checks(&checks));
    println!("{command}: {verdict} (exit {code}); artifacts in {}", ctx.out.dir().display());
    let manifest = RunManifest {
        command: command.to_string(),
        version: VERSION.to_string(),
        config_hash: ctx.config_hash.clone(),
        seed: ctx.seed,
        jobs,
        cache_hits: ctx.cache_hits,
        steps: ctx.steps.clone(),
        artifacts: ctx.out.inventory(),
        verdict,
        exit_code: code,
    };
    ctx.out.json("manifest.json", &manifest)?;
    Ok(code)
}

/// Maps a pipeline error to an exit code: violations found while building
/// a perturbed region are `1`, numerical shortfalls are `2`, everything
/// else (usage, config, I/O) is `3`.
pub fn error_exit_code(err: &anyhow::Error) -> i32 {
    use neumann_core::Error as E;
    match err.downcast_ref::<E>() {
        Some(E::Perturbation { .. } | E::Disconnected(_)) => 1,
        Some(
            E::NonConvergence { .. }
            | E::FitQuality(_)
            | E::InsufficientData(_)
            | E::NotPositiveDefinite { .. }
            | E::TableLimit { .. }
            | E::Construction(_),
        ) => 2,
        _ => EXIT_USAGE,
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            error_exit_code(&e)
        }
    }
}
