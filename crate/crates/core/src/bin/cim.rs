//! Command-line driver.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 configuration error,
//! 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use cim_core::harness::{self, ExperimentSpec, Preset, RunOptions};
use cim_core::oracles::{brute_force_ground_state, circulant_ground_state, metropolis_anneal, BRUTE_FORCE_MAX_N};
use cim_core::{AnnealSchedule, CimError, GraphFamily, GraphInstance, GraphParams};

#[derive(Parser)]
#[command(name = "cim", version, about = "Spatial coherent Ising machine simulator")]
struct Cli {
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Family {
    Ml,
    K,
    Er,
    Ba,
}

impl From<Family> for GraphFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Ml => GraphFamily::MobiusLadder,
            Family::K => GraphFamily::Complete,
            Family::Er => GraphFamily::ErdosRenyi,
            Family::Ba => GraphFamily::BarabasiAlbert,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a graph instance and write it as JSON.
    GenerateGraph {
        #[arg(long, value_enum)]
        family: Family,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Edge weight (alpha, gamma or beta depending on the family).
        #[arg(long, allow_hyphen_values = true)]
        weight: Option<f64>,
        /// Edge probability (ER) or target density (BA).
        #[arg(long)]
        p: Option<f64>,
        /// Edges per new node (BA).
        #[arg(long)]
        m: Option<usize>,
    },
    /// Run an experiment described by a TOML file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Replace the configured seeds (repeatable).
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
    },
    /// Sweep the pump over multiples of threshold.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated threshold multiples; defaults to `[sweep] grid`.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        seed: Vec<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metropolis annealing reference for a graph file.
    Anneal {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        sweeps: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Exact ground state (brute force, or eigenvector readout for circulant graphs).
    Exact {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Recompute the aggregate of an output directory from per-seed summaries.
    Report {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn load_spec(config: &Path, seeds: Vec<u64>, preset: Option<String>) -> anyhow::Result<ExperimentSpec> {
    let mut spec = ExperimentSpec::load(config).with_context(|| format!("loading {}", config.display()))?;
    if !seeds.is_empty() {
        spec.seeds = seeds;
    }
    if let Some(p) = preset {
        spec.preset = Some(p.parse::<Preset>()?);
    }
    spec.validate()?;
    Ok(spec)
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    let threads = cli.threads;
    match cli.command {
        Command::GenerateGraph {
            family,
            n,
            seed,
            out,
            weight,
            p,
            m,
        } => {
            let mut params = GraphParams::reference(family.into());
            match &mut params {
                GraphParams::MobiusLadder { alpha } => *alpha = weight.unwrap_or(*alpha),
                GraphParams::Complete { gamma } => *gamma = weight.unwrap_or(*gamma),
                GraphParams::ErdosRenyi { beta, p: dens } => {
                    *beta = weight.unwrap_or(*beta);
                    *dens = p.unwrap_or(*dens);
                }
                GraphParams::BarabasiAlbert { beta, m: mm, p: dens } => {
                    *beta = weight.unwrap_or(*beta);
                    *dens = p.unwrap_or(*dens);
                    *mm = m.or(*mm);
                }
                GraphParams::Custom => {}
            }
            let g = cim_core::graphs::make_graph(params, n, seed)?;
            g.save(&out)?;
            eprintln!(
                "{} n={} edges={} density={:.4} -> {}",
                g.family().short_name(),
                g.n(),
                g.edges().len(),
                g.density(),
                out.display()
            );
        }
        Command::Run {
            config,
            seed,
            out,
            preset,
        } => {
            let spec = load_spec(&config, seed, preset)?;
            let bundle = harness::run_experiment(&spec, &RunOptions { threads, out_dir: out })?;
            print_json(&bundle)?;
        }
        Command::Sweep { config, grid, seed, out } => {
            let spec = load_spec(&config, seed, None)?;
            let grid = if grid.is_empty() {
                spec.sweep
                    .as_ref()
                    .map(|s| s.grid.clone())
                    .ok_or_else(|| CimError::Config("no --grid and no [sweep] grid in config".into()))?
            } else {
                grid
            };
            let table = harness::pump_sweep(&spec, &grid, &RunOptions { threads, out_dir: out })?;
            print!("{}", table.to_csv());
        }
        Command::Anneal {
            graph,
            sweeps,
            restarts,
            seed,
        } => {
            let g = GraphInstance::load(&graph)?;
            let mut sched = AnnealSchedule::default_for(&g);
            sched.sweeps = sweeps.unwrap_or(sched.sweeps);
            sched.restarts = restarts.unwrap_or(sched.restarts);
            sched.validate()?;
            let best = metropolis_anneal(&g, &sched, seed)?;
            print_json(&serde_json::json!({
                "method": "metropolis_best",
                "schedule": sched,
                "seed": seed,
                "energy": best.energy,
                "spins": best.spins.spins(),
            }))?;
        }
        Command::Exact { graph } => {
            let g = GraphInstance::load(&graph)?;
            if g.n() <= BRUTE_FORCE_MAX_N {
                let (s, e) = brute_force_ground_state(&g)?;
                print_json(&serde_json::json!({ "method": "brute_force", "energy": e, "spins": s.spins() }))?;
            } else {
                let gs = circulant_ground_state(&g)?;
                print_json(&serde_json::json!({
                    "method": "circulant_eigenvector",
                    "energy": gs.energy,
                    "spins": gs.spins.spins(),
                    "spectral_bound": gs.spectral_bound,
                    "bound_attained": gs.bound_attained,
                }))?;
            }
        }
        Command::Report { dir } => {
            let check = harness::recheck_report(&dir)?;
            print_json(&check)?;
            if !check.consistent {
                anyhow::bail!("aggregate in report.json does not match per-seed summaries");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<CimError>() {
        Some(e) if e.is_numerical() => 3,
        Some(CimError::Io(_)) => 1,
        Some(_) => 2,
        None => 1,
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
