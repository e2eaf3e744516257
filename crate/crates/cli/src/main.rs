//! `skewdyn`: runs skew-product experiments from a TOML config and writes
//! reproducible CSV/JSON artifacts plus a manifest.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde_json::json;
use sha2::{Digest, Sha256};
use skewdyn::semiuniform::NegativeControl;
use skewdyn::Error;

use crate::commands::Outcome;
use crate::config::{parse_seeds, ExperimentConfig};

const EXIT_CONTRACT: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_RESOURCE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "skewdyn", version, about = "Simulate and verify skew-product dynamical systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment config (TOML).
    #[arg(long, global = true, env = "SKEWDYN_CONFIG")]
    config: Option<PathBuf>,

    /// Output directory; overrides `out` in the config.
    #[arg(long, global = true, env = "SKEWDYN_OUT")]
    out: Option<PathBuf>,

    /// Seed list such as `0..100` or `1,2,5`; overrides `seeds` in the config.
    #[arg(long, global = true, env = "SKEWDYN_SEEDS")]
    seeds: Option<String>,

    /// Worker threads for the rayon pool.
    #[arg(long, global = true, env = "SKEWDYN_THREADS")]
    threads: Option<usize>,

    /// `corrupted_c` or `corrupted_c_hat` (semiuniform only).
    #[arg(long, global = true, env = "SKEWDYN_NEGATIVE_CONTROL")]
    negative_control: Option<String>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Ensemble estimate of the fibre Lyapunov exponent.
    Lyapunov,
    /// Pullback approximation of the random attractor, with the affine oracle when available.
    Pullback,
    /// Cluster counts per fibre.
    Cardinality,
    /// Continuity modulus of the attractor in the circle coordinate under grid refinement.
    Continuity,
    /// Covering-number monotonicity along the adjusted radii.
    Covering,
    /// Full semiuniform verification report.
    Semiuniform,
    /// Omega-limit and equidistribution diagnostics of the circle driving.
    Minimality,
    /// List the builtin models.
    Catalog,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Lyapunov => "lyapunov",
            Command::Pullback => "pullback",
            Command::Cardinality => "cardinality",
            Command::Continuity => "continuity",
            Command::Covering => "covering",
            Command::Semiuniform => "semiuniform",
            Command::Minimality => "minimality",
            Command::Catalog => "catalog",
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::OutOfWindow { .. } | Error::Io(_) | Error::NumericalDomain { .. } => EXIT_RESOURCE,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: &Cli) -> skewdyn::Result<u8> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    }
    if let Command::Catalog = cli.command {
        print!("{}", commands::catalog_text());
        if let Some(dir) = &cli.out {
            let body = serde_json::to_string_pretty(&commands::catalog_json()).expect("json") + "\n";
            let files = vec![("catalog.json".to_string(), body)];
            let manifest = json!({
                "tool": "skewdyn",
                "version": env!("CARGO_PKG_VERSION"),
                "subcommand": "catalog",
                "files": file_digests(&files),
                "timestamp_unix": timestamp(),
            });
            write_all(dir, &files, &manifest)?;
        }
        return Ok(0);
    }

    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path).map_err(|e| match e {
        Error::Io(m) => Error::Config(m),
        e => e,
    })?;
    if let Some(s) = &cli.seeds {
        cfg.seeds = parse_seeds(s)?;
    }
    if let Some(o) = &cli.out {
        cfg.out = Some(o.clone());
    }
    if let Some(n) = &cli.negative_control {
        cfg.negative_control = Some(NegativeControl::parse(n)?);
    }
    if cfg.negative_control.is_some() && !matches!(cli.command, Command::Semiuniform) {
        return Err(Error::Config("negative controls apply to the semiuniform subcommand only".into()));
    }
    let sys = cfg.validate()?;
    let out_dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("skewdyn-out"));

    let outcome: Outcome = match cli.command {
        Command::Lyapunov => commands::lyapunov(&sys, &cfg),
        Command::Pullback => commands::pullback_cmd(&sys, &cfg),
        Command::Cardinality => commands::cardinality(&sys, &cfg),
        Command::Continuity => commands::continuity(&sys, &cfg),
        Command::Covering => commands::covering(&sys, &cfg),
        Command::Semiuniform => commands::semiuniform(&sys, &cfg),
        Command::Minimality => commands::minimality(&sys, &cfg),
        Command::Catalog => unreachable!(),
    }?;

    let mut files = outcome.files;
    files.push(("summary.json".to_string(), serde_json::to_string_pretty(&outcome.summary).expect("json") + "\n"));
    let manifest = json!({
        "tool": "skewdyn",
        "version": env!("CARGO_PKG_VERSION"),
        "subcommand": cli.command.name(),
        "model": sys.name,
        "params": cfg.resolved_params()?,
        "base": sys.base,
        "driving": sys.driving.label(),
        "norm": sys.norm.as_str(),
        "seeds": cfg.seeds,
        "window_radius": outcome.window_radius,
        "negative_control": cfg.negative_control,
        "config_path": path,
        "config_sha256": cfg.digest(),
        "config": cfg,
        "parallel": skewdyn::par::is_parallel(),
        "threads": rayon::current_num_threads(),
        "contracts_passed": outcome.failures.is_empty(),
        "contract_failures": outcome.failures,
        "files": file_digests(&files),
        "timestamp_unix": timestamp(),
    });
    write_all(&out_dir, &files, &manifest)?;

    println!("{} on {} ({} seeds): artifacts in {}", cli.command.name(), sys.name, cfg.seeds.len(), out_dir.display());
    println!("{}", serde_json::to_string(&outcome.summary).expect("json"));
    if outcome.failures.is_empty() {
        println!("all contracts passed");
        Ok(0)
    } else {
        for f in &outcome.failures {
            eprintln!("contract violation: {f}");
        }
        Ok(EXIT_CONTRACT)
    }
}

fn file_digests(files: &[(String, String)]) -> serde_json::Value {
    files.iter().map(|(n, body)| json!({ "name": n, "sha256": hex::encode(Sha256::digest(body.as_bytes())) })).collect()
}

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn write_all(dir: &Path, files: &[(String, String)], manifest: &serde_json::Value) -> skewdyn::Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, body) in files {
        std::fs::write(dir.join(name), body)?;
    }
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(manifest).expect("json") + "\n")?;
    Ok(())
}
