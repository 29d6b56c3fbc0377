//! Command-line front end: JSON run configs, scenario dispatch,
//! deterministic ensemble runs, artifact emission.
//!
//! Subcommands: `validate`, `particle`, `measure`, `epr`, `ergodic`,
//! `simulate`, `rates`. Every run is reproducible from `(config, seed)`;
//! worker count (flag `--threads` or env `BEABLE_THREADS`) never changes the
//! output bytes.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::analysis::occupancy_stats;
use crate::dynamics::{sample_ensemble, EnsembleOptions, InitialCondition, ScheduledSystem};
use crate::error::{Error, Result};
use crate::io;
use crate::microstates::Boundary;
use crate::scenarios::{
    make_epr, make_ergodic, make_measurement, make_particle1d, validate_scenario, Packet,
    ScenarioSpec,
};

/// Current run-config schema version.
pub const SCHEMA_VERSION: u32 = 1;

/// JSON run configuration. Command-line flags override individual fields.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub scenario: Option<String>,
    #[serde(default)]
    pub params: Option<serde_json::Value>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trajectories: Option<usize>,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub occupancy: Option<PathBuf>,
    #[serde(default)]
    pub format: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("bad config {}: {e}", path.display())))?;
        if let Some(v) = cfg.schema_version {
            if v != SCHEMA_VERSION {
                return Err(Error::Config(format!(
                    "unsupported schemaVersion {v}; this build speaks {SCHEMA_VERSION}"
                )));
            }
        }
        Ok(cfg)
    }

    fn params_as<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T> {
        match &self.params {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone())
                .map_err(|e| Error::Config(format!("bad scenario params: {e}"))),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "beable",
    about = "Stochastic quantum microstate dynamics",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
struct CommonRunArgs {
    /// JSON run config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed for all randomness.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trajectories to sample.
    #[arg(long)]
    trajectories: Option<usize>,
    /// Base thinning step.
    #[arg(long)]
    dt: Option<f64>,
    /// Final time (extends or trims the schedule's last segment).
    #[arg(long)]
    t_final: Option<f64>,
    /// Trajectory events file.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Occupancy summary file.
    #[arg(long)]
    occupancy: Option<PathBuf>,
    /// Output format: csv or json.
    #[arg(long)]
    format: Option<String>,
    /// Worker threads (default: BEABLE_THREADS or machine parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the invariant suite on a configured scenario.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// 1D particle with position cells.
    Particle {
        #[command(flatten)]
        run: CommonRunArgs,
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long)]
        mass: Option<f64>,
        #[arg(long)]
        center: Option<f64>,
        #[arg(long)]
        width: Option<f64>,
        #[arg(long)]
        momentum: Option<f64>,
    },
    /// Pointer measurement of a microscopic superposition.
    Measure {
        #[command(flatten)]
        run: CommonRunArgs,
        /// Outcome weights |lambda_a|^2, comma separated (normalized).
        #[arg(long)]
        weights: Option<String>,
    },
    /// EPR pair with two measuring devices.
    Epr {
        #[command(flatten)]
        run: CommonRunArgs,
        /// Half-angle between the two measurement axes (radians).
        #[arg(long)]
        theta: Option<f64>,
        #[arg(long)]
        pulse: Option<f64>,
    },
    /// Randomized equilibration model.
    Ergodic {
        #[command(flatten)]
        run: CommonRunArgs,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        delta_e: Option<f64>,
        /// Cell ranks, comma separated (must sum to dim).
        #[arg(long)]
        ranks: Option<String>,
    },
    /// Generic run: Hamiltonian, state and family loaded from files.
    Simulate {
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Print the transition-rate matrix of a configured scenario at a time.
    Rates {
        #[command(flatten)]
        run: CommonRunArgs,
        /// Evaluation time (default: schedule start).
        #[arg(long)]
        at: Option<f64>,
        /// Which named family to use (default: the scenario's primary).
        #[arg(long)]
        family: Option<String>,
        #[arg(long)]
        theta: Option<f64>,
    },
}

/// Entry point used by the `beable` binary: parses `argv`, runs, and maps
/// errors onto exit codes (2 config, 3 numerical, 1 otherwise).
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // Clap prints help/usage text; unknown flags exit 2.
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn threads_from(run: &CommonRunArgs) -> usize {
    run.threads
        .or_else(|| {
            std::env::var("BEABLE_THREADS")
                .ok()
                .and_then(|s| s.parse().ok())
        })
        .unwrap_or_else(|| {
            std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1)
        })
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ParticleParams {
    grid: Option<usize>,
    cells: Option<usize>,
    domain: Option<(f64, f64)>,
    mass: Option<f64>,
    center: Option<f64>,
    width: Option<f64>,
    momentum: Option<f64>,
    boundary: Option<Boundary>,
    potential: Option<Vec<f64>>,
    hbar: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct MeasureParams {
    /// Outcome weights |lambda_a|^2; normalized if they do not sum to 1.
    weights: Option<Vec<f64>>,
    pointer_grid: Option<usize>,
    pointer_separation: Option<f64>,
    packet_width: Option<f64>,
    pulse: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct EprParams {
    theta: Option<f64>,
    pulse: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct ErgodicParams {
    dim: Option<usize>,
    delta_e: Option<f64>,
    ranks: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
struct SimulateParams {
    hamiltonian: Option<PathBuf>,
    state: Option<PathBuf>,
    family: Option<PathBuf>,
    hbar: Option<f64>,
}

fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<T>()
                .map_err(|_| Error::Config(format!("cannot parse {what} entry {s:?}")))
        })
        .collect()
}

fn load_config(run: &CommonRunArgs) -> Result<RunConfig> {
    match &run.config {
        Some(path) => RunConfig::load(path),
        None => Ok(RunConfig::default()),
    }
}

fn build_particle(
    cfg: &RunConfig,
    grid: Option<usize>,
    cells: Option<usize>,
    mass: Option<f64>,
    center: Option<f64>,
    width: Option<f64>,
    momentum: Option<f64>,
) -> Result<ScenarioSpec> {
    let p: ParticleParams = cfg.params_as()?;
    let grid = grid.or(p.grid).unwrap_or(512);
    let cells = cells.or(p.cells).unwrap_or(16);
    let domain = p.domain.unwrap_or((0.0, 16.0));
    let mass = mass.or(p.mass).unwrap_or(1.0);
    let center = center.or(p.center).unwrap_or(0.5 * (domain.0 + domain.1));
    let width = width.or(p.width).unwrap_or(2.0);
    let momentum = momentum.or(p.momentum).unwrap_or(1.0);
    let boundary = p.boundary.unwrap_or(Boundary::Periodic);
    make_particle1d(
        grid,
        cells,
        domain,
        mass,
        Packet {
            center,
            width,
            momentum,
        },
        p.potential.as_deref(),
        boundary,
        p.hbar.unwrap_or(1.0),
    )
}

fn build_measure(cfg: &RunConfig, weights_flag: Option<&str>) -> Result<ScenarioSpec> {
    let p: MeasureParams = cfg.params_as()?;
    let weights: Vec<f64> = match weights_flag {
        Some(text) => parse_list(text, "weight")?,
        None => p.weights.clone().unwrap_or_else(|| vec![0.5, 0.5]),
    };
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::Config("outcome weights must be positive".into()));
    }
    let lambdas: Vec<C64> = weights
        .iter()
        .map(|w| C64::new((w / total).sqrt(), 0.0))
        .collect();
    make_measurement(
        &lambdas,
        p.pointer_grid.unwrap_or(360),
        p.pointer_separation.unwrap_or(1.0),
        p.packet_width.unwrap_or(1.0 / 60.0),
        p.pulse.unwrap_or(1.0),
    )
}

fn build_epr(cfg: &RunConfig, theta: Option<f64>, pulse: Option<f64>) -> Result<ScenarioSpec> {
    let p: EprParams = cfg.params_as()?;
    make_epr(
        theta.or(p.theta).unwrap_or(std::f64::consts::FRAC_PI_4),
        pulse.or(p.pulse).unwrap_or(1.0),
    )
}

fn build_ergodic(
    cfg: &RunConfig,
    dim: Option<usize>,
    delta_e: Option<f64>,
    ranks_flag: Option<&str>,
    seed: u64,
) -> Result<ScenarioSpec> {
    let p: ErgodicParams = cfg.params_as()?;
    let dim = dim.or(p.dim).unwrap_or(40);
    let delta_e = delta_e.or(p.delta_e).unwrap_or(1.0);
    let ranks: Vec<usize> = match ranks_flag {
        Some(text) => parse_list(text, "rank")?,
        None => p.ranks.clone().unwrap_or_else(|| vec![1; dim]),
    };
    make_ergodic(dim, delta_e, &ranks, seed)
}

fn build_simulate(cfg: &RunConfig) -> Result<ScenarioSpec> {
    let p: SimulateParams = cfg.params_as()?;
    let h_path = p
        .hamiltonian
        .ok_or_else(|| Error::Config("simulate: params.hamiltonian file required".into()))?;
    let s_path = p
        .state
        .ok_or_else(|| Error::Config("simulate: params.state file required".into()))?;
    let f_path = p
        .family
        .ok_or_else(|| Error::Config("simulate: params.family file required".into()))?;
    let h = io::operator_from_json(&std::fs::read_to_string(&h_path)?)?;
    let psi = io::state_from_json(&std::fs::read_to_string(&s_path)?)?;
    let family = io::family_from_json(&std::fs::read_to_string(&f_path)?)?;
    if h.dim() != psi.dim() || family.dim() != psi.dim() {
        return Err(Error::Config(format!(
            "simulate: dims disagree (H {}, state {}, family {})",
            h.dim(),
            psi.dim(),
            family.dim()
        )));
    }
    let hbar = p.hbar.unwrap_or(1.0);
    let mut families = BTreeMap::new();
    families.insert("cells".to_string(), family);
    Ok(ScenarioSpec {
        name: "simulate".into(),
        system: ScheduledSystem::constant(h, psi, hbar, 0.0, 1.0),
        families,
        primary_family: "cells".into(),
        run_defaults: crate::scenarios::RunDefaults {
            dt: 1e-2,
            t1: 1.0,
            trajectories: 1000,
            initial: InitialCondition::DrawFromWeights,
        },
        annotations: BTreeMap::new(),
    })
}

struct RunOutcome {
    frequencies: Vec<f64>,
    trajectories: usize,
    repairs: usize,
    steps: usize,
}

fn run_ensemble(spec: &ScenarioSpec, cfg: &RunConfig, run: &CommonRunArgs) -> Result<RunOutcome> {
    let seed = run.seed.or(cfg.seed).unwrap_or(0);
    let trajectories = run
        .trajectories
        .or(cfg.trajectories)
        .unwrap_or(spec.run_defaults.trajectories);
    let dt = run.dt.or(cfg.dt).unwrap_or(spec.run_defaults.dt);
    let spec = match run.t_final.or(cfg.t_final) {
        Some(t1) => spec.clone().with_final_time(t1)?,
        None => spec.clone(),
    };
    let flow = spec.flow()?;
    let family = spec.primary();
    let opts = EnsembleOptions {
        t0: flow.t_start(),
        t1: spec.run_defaults.t1.min(flow.t_end()),
        dt,
        master_seed: seed,
        trajectories,
        initial: spec.run_defaults.initial,
        eps_occ: crate::microstates::EPS_OCC,
        threads: threads_from(run),
    };
    let ensemble = sample_ensemble(&flow, family, &opts)?;

    let n_cells = family.cell_count();
    let mut counts = vec![0usize; n_cells];
    for traj in &ensemble {
        counts[traj.final_index()] += 1;
    }
    let frequencies: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / trajectories as f64)
        .collect();

    let format = run
        .format
        .clone()
        .or_else(|| cfg.format.clone())
        .unwrap_or_else(|| "csv".into());
    if !matches!(format.as_str(), "csv" | "json") {
        return Err(Error::Config(format!(
            "unknown format {format:?}; expected csv or json"
        )));
    }
    if let Some(path) = run.output.clone().or_else(|| cfg.output.clone()) {
        let payload = match format.as_str() {
            "csv" => io::trajectories_to_csv(&ensemble),
            _ => io::trajectories_to_json(&ensemble),
        };
        io::atomic_write(&path, &payload)?;
    }
    if let Some(path) = run.occupancy.clone().or_else(|| cfg.occupancy.clone()) {
        let samples = 20usize;
        let times: Vec<f64> = (0..=samples)
            .map(|k| opts.t0 + (opts.t1 - opts.t0) * k as f64 / samples as f64)
            .collect();
        let stats = occupancy_stats(&ensemble, &flow, family, &times)?;
        let payload = match format.as_str() {
            "csv" => io::occupancy_to_csv(&stats),
            _ => io::occupancy_to_json(&stats),
        };
        io::atomic_write(&path, &payload)?;
    }

    Ok(RunOutcome {
        frequencies,
        trajectories,
        repairs: ensemble.iter().map(|t| t.repair_events).sum(),
        steps: ensemble.iter().map(|t| t.steps).sum(),
    })
}

fn print_outcome(spec: &ScenarioSpec, outcome: &RunOutcome) {
    println!("scenario: {}", spec.name);
    println!("trajectories: {}", outcome.trajectories);
    println!(
        "repairs: {} over {} trajectory-steps",
        outcome.repairs, outcome.steps
    );
    println!(
        "final occupancy frequencies ({} family):",
        spec.primary_family
    );
    let family = spec.primary();
    for (i, f) in outcome.frequencies.iter().enumerate() {
        if *f > 0.0 {
            println!("  cell {i} [{}]: {f:.4}", family.label(i));
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            let scenario = cfg
                .scenario
                .clone()
                .ok_or_else(|| Error::Config("validate: config must name a scenario".into()))?;
            let spec = build_by_name(&scenario, &cfg)?;
            let checks = validate_scenario(&spec)?;
            let mut all_pass = true;
            println!("invariant report for scenario {:?}:", spec.name);
            for c in &checks {
                let status = if c.passed() { "pass" } else { "FAIL" };
                println!(
                    "  [{status}] {} (defect {:.3e}, tolerance {:.1e})",
                    c.name, c.defect, c.tolerance
                );
                all_pass &= c.passed();
            }
            if !all_pass {
                return Err(Error::Numerical("invariant suite failed".into()));
            }
            Ok(())
        }
        Command::Particle {
            run,
            grid,
            cells,
            mass,
            center,
            width,
            momentum,
        } => {
            let cfg = load_config(&run)?;
            let spec = build_particle(&cfg, grid, cells, mass, center, width, momentum)?;
            let outcome = run_ensemble(&spec, &cfg, &run)?;
            print_outcome(&spec, &outcome);
            Ok(())
        }
        Command::Measure { run, weights } => {
            let cfg = load_config(&run)?;
            let spec = build_measure(&cfg, weights.as_deref())?;
            let outcome = run_ensemble(&spec, &cfg, &run)?;
            print_outcome(&spec, &outcome);
            for (key, value) in &spec.annotations {
                if let Some(a) = key.strip_prefix("outcome_cell_") {
                    let cell = *value as usize;
                    println!(
                        "outcome {a}: frequency {:.4} (Born weight {:.4})",
                        outcome.frequencies[cell],
                        spec.annotation(&format!("outcome_weight_{a}"))
                            .unwrap_or(0.0)
                    );
                }
            }
            Ok(())
        }
        Command::Epr { run, theta, pulse } => {
            let cfg = load_config(&run)?;
            let spec = build_epr(&cfg, theta, pulse)?;
            let outcome = run_ensemble(&spec, &cfg, &run)?;
            print_outcome(&spec, &outcome);
            let idx = |a: usize, b: usize| a * 3 + b;
            println!("joint outcome frequencies:");
            for (a, la) in [(1usize, "+"), (2usize, "-")] {
                for (b, lb) in [(1usize, "+"), (2usize, "-")] {
                    println!("  A{la} B{lb}: {:.4}", outcome.frequencies[idx(a, b)]);
                }
            }
            Ok(())
        }
        Command::Ergodic {
            run,
            dim,
            delta_e,
            ranks,
        } => {
            let cfg = load_config(&run)?;
            let seed = run.seed.or(cfg.seed).unwrap_or(0);
            let spec = build_ergodic(&cfg, dim, delta_e, ranks.as_deref(), seed)?;
            let outcome = run_ensemble(&spec, &cfg, &run)?;
            print_outcome(&spec, &outcome);
            Ok(())
        }
        Command::Simulate { run } => {
            let cfg = load_config(&run)?;
            let spec = build_simulate(&cfg)?;
            let outcome = run_ensemble(&spec, &cfg, &run)?;
            print_outcome(&spec, &outcome);
            Ok(())
        }
        Command::Rates {
            run,
            at,
            family,
            theta,
        } => {
            let cfg = load_config(&run)?;
            let scenario = cfg.scenario.clone().unwrap_or_else(|| "epr".to_string());
            let spec = match (scenario.as_str(), theta) {
                ("epr", Some(th)) => build_epr(&cfg, Some(th), None)?,
                _ => build_by_name(&scenario, &cfg)?,
            };
            let flow = spec.flow()?;
            let fam = match &family {
                Some(name) => spec.family(name)?,
                None => spec.primary(),
            };
            let t = at.unwrap_or(flow.t_start());
            let rates = flow.rates_at(fam, t, crate::microstates::EPS_OCC)?;
            println!("transition rates at t = {t} (target row, source column):");
            for i in 0..rates.n() {
                let row: Vec<String> = (0..rates.n())
                    .map(|j| format!("{:10.6}", rates.rate(i, j)))
                    .collect();
                println!("  {}", row.join(" "));
            }
            Ok(())
        }
    }
}

fn build_by_name(name: &str, cfg: &RunConfig) -> Result<ScenarioSpec> {
    match name {
        "particle" => build_particle(cfg, None, None, None, None, None, None),
        "measure" => build_measure(cfg, None),
        "epr" => build_epr(cfg, None, None),
        "ergodic" => build_ergodic(cfg, None, None, None, cfg.seed.unwrap_or(0)),
        "simulate" => build_simulate(cfg),
        other => Err(Error::Config(format!("unknown scenario {other:?}"))),
    }
}
