//! Experiment configuration, presets and report emission.
//!
//! An experiment is a single TOML file (unknown keys are rejected) naming a
//! graph, the coupling, the run configuration and a list of noise seeds.
//! Every emitted file carries a hash of the effective configuration; the
//! hash ignores the output directory and depends on the graph through its
//! content, not its path, so re-running the emitted `config.toml` anywhere
//! reproduces identical outputs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::coupling::{budget_for, threshold_from_radius, BudgetReport, CouplingOperator, OperatorSpec, Passivity, PixelBudget};
use crate::error::{CimError, Result};
use crate::graphs::{assemble_q, make_graph, CouplingAssembly, GraphFamily, GraphInstance, GraphParams};
use crate::machine::output::{quadratures_csv, trajectory_csv, write_snapshots, RunSummary};
use crate::machine::{round_trip, run_with_operator, FieldState, PumpSpec, RecordFields, RunConfig, Trajectory};
use crate::nlm::NormalizedUnits;
use crate::oracles::{circulant_ground_state, metropolis_anneal, AnnealSchedule, ENERGY_TOL};

pub const SCHEMA_VERSION: u32 = 1;
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Quadrature samples kept by the `fig2-quadratures` preset.
pub const FIG2_WINDOW: u64 = 300;
/// Round trips per growth/decay probe in threshold bracketing.
pub const BRACKET_TRIPS: u64 = 500;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Fig2Quadratures,
    Fig3Energy,
    PumpSweep,
    ThresholdCheck,
}

impl std::str::FromStr for Preset {
    type Err = CimError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fig2-quadratures" => Ok(Preset::Fig2Quadratures),
            "fig3-energy" => Ok(Preset::Fig3Energy),
            "pump-sweep" => Ok(Preset::PumpSweep),
            "threshold-check" => Ok(Preset::ThresholdCheck),
            other => Err(CimError::Config(format!("unknown preset {other:?}"))),
        }
    }
}

/// Either a graph file or generation parameters.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<GraphParams>,
}

impl GraphSpec {
    pub fn generate(params: GraphParams, n: usize, seed: u64) -> Self {
        Self {
            file: None,
            n: Some(n),
            seed: Some(seed),
            params: Some(params),
        }
    }

    pub fn build(&self, base_dir: &Path) -> Result<GraphInstance> {
        match (&self.file, self.n, self.params) {
            (Some(file), None, None) => GraphInstance::load(&base_dir.join(file)),
            (None, Some(n), Some(params)) => make_graph(params, n, self.seed.unwrap_or(0)),
            _ => Err(CimError::Config(
                "graph needs either `file` or both `n` and `params`".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Explicit operator; replaces `a·1 + b·J` for the dynamics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub operator: Option<OperatorSpec>,
}

fn default_a() -> f64 {
    CouplingAssembly::default().a
}
fn default_b() -> f64 {
    CouplingAssembly::default().b
}

impl Default for CouplingSpec {
    fn default() -> Self {
        Self {
            a: default_a(),
            b: default_b(),
            operator: None,
        }
    }
}

impl CouplingSpec {
    pub fn assembly(&self) -> CouplingAssembly {
        CouplingAssembly { a: self.a, b: self.b }
    }

    pub fn build(&self, g: &GraphInstance) -> Result<CouplingOperator> {
        match &self.operator {
            Some(spec) => spec.build(),
            None => assemble_q(g, self.assembly()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Annealing schedule for non-circulant graphs; defaults are derived
    /// from `J` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<AnnealSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Pump values as multiples of threshold.
    pub grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwareSpec {
    pub cavity_length_m: f64,
    pub refractive_index: f64,
}

impl Default for HardwareSpec {
    fn default() -> Self {
        Self {
            cavity_length_m: 1.0,
            refractive_index: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub schema_version: u32,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    pub seeds: Vec<u64>,
    pub graph: GraphSpec,
    #[serde(default)]
    pub coupling: CouplingSpec,
    pub run: RunConfig,
    #[serde(default)]
    pub oracle: OracleSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub hardware: HardwareSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<PixelBudget>,
    #[serde(default)]
    pub output: OutputSpec,
    /// Directory relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentSpec {
    pub fn new(name: &str, graph: GraphSpec, run: RunConfig, seeds: Vec<u64>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            name: name.to_owned(),
            preset: None,
            seeds,
            graph,
            coupling: CouplingSpec::default(),
            run,
            oracle: OracleSpec::default(),
            sweep: None,
            hardware: HardwareSpec::default(),
            budget: None,
            output: OutputSpec::default(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self> {
        let mut spec: ExperimentSpec = toml::from_str(text)?;
        spec.base_dir = base_dir.to_path_buf();
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_toml(&text, &base)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CimError::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.seeds.is_empty() && self.preset != Some(Preset::ThresholdCheck) {
            return bad("seeds must not be empty".into());
        }
        if let Some(file) = &self.graph.file {
            if !self.base_dir.join(file).is_file() {
                return bad(format!("graph file {} does not exist", file.display()));
            }
        }
        if self.coupling.operator.is_none() {
            self.coupling.assembly().validate()?;
        }
        self.run.validate()?;
        if let Some(s) = &self.oracle.schedule {
            s.validate()?;
        }
        if self.preset == Some(Preset::PumpSweep) {
            match &self.sweep {
                Some(s) if !s.grid.is_empty() && s.grid.iter().all(|m| *m >= 0.0 && m.is_finite()) => {}
                _ => return bad("pump-sweep preset needs a non-empty [sweep] grid of multiples >= 0".into()),
            }
        }
        if !(self.hardware.cavity_length_m > 0.0 && self.hardware.refractive_index > 0.0) {
            return bad("hardware cavity length and refractive index must be positive".into());
        }
        Ok(())
    }

    /// Effective run configuration for one noise seed.
    pub fn run_config(&self, seed: u64) -> RunConfig {
        let mut cfg = self.run;
        cfg.seed = seed;
        if self.preset == Some(Preset::Fig2Quadratures) {
            cfg.record_fields = RecordFields::Full;
            cfg.snapshot_window = Some(cfg.snapshot_window.unwrap_or(FIG2_WINDOW).min(FIG2_WINDOW));
        }
        cfg
    }

    /// SHA-256 over the effective configuration, output directory excluded,
    /// graph included by content.
    pub fn config_hash(&self, graph: &GraphInstance) -> Result<String> {
        let mut canonical = self.clone();
        canonical.output = OutputSpec::default();
        canonical.graph.file = None;
        let mut hasher = Sha256::new();
        hasher.update(toml::to_string(&canonical)?.as_bytes());
        hasher.update(b"\n--graph--\n");
        hasher.update(serde_json::to_string(&graph.to_file())?.as_bytes());
        Ok(hex::encode(hasher.finalize()))
    }

    /// The spec as it should be written next to its outputs: paths absolute.
    pub fn emitted(&self) -> Self {
        let mut out = self.clone();
        if let Some(file) = &self.graph.file {
            let path = self.base_dir.join(file);
            out.graph.file = Some(fs::canonicalize(&path).unwrap_or(path));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMethod {
    /// Sign readout of the top eigenvector of a circulant `J`.
    CirculantEigenvector,
    /// Best of Metropolis annealing restarts.
    MetropolisBest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReference {
    pub method: OracleMethod,
    pub energy: f64,
    pub spins: Vec<i8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<AnnealSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

/// Eigenvector readout for the Möbius ladder, annealing for everything else.
pub fn reference_energy(g: &GraphInstance, oracle: &OracleSpec) -> Result<OracleReference> {
    if g.family() == GraphFamily::MobiusLadder {
        let gs = circulant_ground_state(g)?;
        return Ok(OracleReference {
            method: OracleMethod::CirculantEigenvector,
            energy: gs.energy,
            spins: gs.spins.spins().to_vec(),
            schedule: None,
            seed: None,
        });
    }
    let schedule = oracle.schedule.unwrap_or_else(|| AnnealSchedule::default_for(g));
    let seed = oracle.seed.unwrap_or(g.seed);
    let best = metropolis_anneal(g, &schedule, seed)?;
    Ok(OracleReference {
        method: OracleMethod::MetropolisBest,
        energy: best.energy,
        spins: best.spins.spins().to_vec(),
        schedule: Some(schedule),
        seed: Some(seed),
    })
}

/// Round-trip time `2nD/c` and the total for a run. An estimate, never simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareTime {
    pub cavity_length_m: f64,
    pub refractive_index: f64,
    pub round_trip_s: f64,
    pub n_round_trips: u64,
    pub total_s: f64,
    pub estimate: bool,
}

pub fn hardware_time(hw: HardwareSpec, n_round_trips: u64) -> HardwareTime {
    let round_trip_s = 2.0 * hw.refractive_index * hw.cavity_length_m / SPEED_OF_LIGHT;
    HardwareTime {
        cavity_length_m: hw.cavity_length_m,
        refractive_index: hw.refractive_index,
        round_trip_s,
        n_round_trips,
        total_s: round_trip_s * n_round_trips as f64,
        estimate: true,
    }
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub summary: RunSummary,
    pub trajectory: Trajectory,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_seeds: usize,
    pub n_success: usize,
    pub success_fraction: f64,
    pub oscillating_fraction: f64,
    /// Median of the per-seed `steady_from`, over oscillating seeds.
    pub median_steady_from: Option<f64>,
}

impl Aggregate {
    /// Recount from per-seed summaries against a reference energy.
    pub fn from_summaries(summaries: &[RunSummary], reference: Option<f64>) -> Self {
        let n = summaries.len();
        let n_success = match reference {
            Some(e) => summaries.iter().filter(|s| s.oscillating && is_success(s.final_energy, e)).count(),
            None => 0,
        };
        let mut steady: Vec<f64> = summaries
            .iter()
            .filter(|s| s.oscillating)
            .map(|s| s.steady_from as f64)
            .collect();
        steady.sort_by(f64::total_cmp);
        let frac = |k: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
        Self {
            n_seeds: n,
            n_success,
            success_fraction: frac(n_success),
            oscillating_fraction: frac(steady.len()),
            median_steady_from: median(&steady),
        }
    }
}

fn median(sorted: &[f64]) -> Option<f64> {
    match sorted.len() {
        0 => None,
        n if n % 2 == 1 => Some(sorted[n / 2]),
        n => Some(0.5 * (sorted[n / 2 - 1] + sorted[n / 2])),
    }
}

/// Final energy at (or, impossible for exact references, below) the reference.
pub fn is_success(final_energy: f64, reference: f64) -> bool {
    final_energy <= reference + ENERGY_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCheck {
    pub rho: f64,
    pub r_out: f64,
    pub kappa_tilde: f64,
    pub formula: f64,
    pub bracketed: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub multiple: f64,
    pub pump: f64,
    pub n_seeds: usize,
    pub oscillating_fraction: f64,
    /// Undefined when no seed oscillates.
    pub success_fraction: Option<f64>,
    pub median_steady_from: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub config_hash: String,
    pub threshold: f64,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "NA".to_owned(), |x| x.to_string());
        let mut out = format!(
            "# config_hash: {}\nmultiple,pump,n_seeds,oscillating_fraction,success_fraction,median_steady_from\n",
            self.config_hash
        );
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.multiple,
                r.pump,
                r.n_seeds,
                r.oscillating_fraction,
                opt(r.success_fraction),
                opt(r.median_steady_from)
            ));
        }
        out
    }
}

/// Everything an experiment produced. Serializes without the trajectories.
#[derive(Debug, Clone, Serialize)]
pub struct ReportBundle {
    pub name: String,
    pub config_hash: String,
    pub family: GraphFamily,
    pub n_sites: usize,
    pub rho: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleReference>,
    pub seeds: Vec<RunSummary>,
    pub aggregate: Aggregate,
    pub hardware: HardwareTime,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<BudgetReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_check: Option<ThresholdCheck>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepTable>,
    #[serde(skip)]
    pub outcomes: Vec<SeedOutcome>,
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global pool. Never affects results.
    pub threads: Option<usize>,
    /// Overrides `[output] dir`. Nothing is written when both are empty.
    pub out_dir: Option<PathBuf>,
}

impl RunOptions {
    fn out_dir(&self, spec: &ExperimentSpec) -> Option<PathBuf> {
        self.out_dir
            .clone()
            .or_else(|| (!spec.output.dir.as_os_str().is_empty()).then(|| spec.base_dir.join(&spec.output.dir)))
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t.max(1))
                .build()
                .map_err(|e| CimError::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Whether `B̃₀` makes a single mode of loop gain `r_out·rho` grow over
/// `trips` round trips, starting from a small real amplitude.
fn single_site_grows(rho: f64, r_out: f64, units: NormalizedUnits, steps: usize, pump: f64, trips: u64) -> Result<bool> {
    let op = CouplingOperator::dense_real(1, &[rho], Passivity::AllowActive)?;
    let mut cfg = RunConfig::new(PumpSpec::Amplitude(pump));
    cfg.units = units;
    cfg.r_out = r_out;
    cfg.steps_per_pass = steps;
    let start = 1e-6;
    let mut state = FieldState::new(vec![num_complex::Complex64::new(start, 0.0)]);
    for _ in 0..trips {
        state = round_trip(&state, &op, &cfg)?;
    }
    Ok(state.amplitudes[0].norm() > start)
}

/// Oscillation threshold located by simulation: bisection on the pump
/// between a decaying and a growing single-site run.
pub fn bracket_threshold(rho: f64, r_out: f64, units: NormalizedUnits, steps: usize) -> Result<f64> {
    let grows = |pump| single_site_grows(rho, r_out, units, steps, pump, BRACKET_TRIPS);
    if grows(0.0)? {
        return Err(CimError::NoThreshold { loop_gain: r_out * rho });
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    let mut doublings = 0;
    while !grows(hi)? {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(CimError::NoThreshold { loop_gain: r_out * rho });
        }
    }
    for _ in 0..60 {
        if hi - lo <= 1e-7 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if grows(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn threshold_check(rho: f64, run: &RunConfig) -> Result<ThresholdCheck> {
    let formula = threshold_from_radius(rho, run.r_out, run.units.kappa_tilde)?;
    let bracketed = bracket_threshold(rho, run.r_out, run.units, run.steps_per_pass)?;
    Ok(ThresholdCheck {
        rho,
        r_out: run.r_out,
        kappa_tilde: run.units.kappa_tilde,
        formula,
        bracketed,
        relative_error: if formula > 0.0 { (bracketed - formula).abs() / formula } else { bracketed.abs() },
    })
}

struct Prepared {
    graph: GraphInstance,
    op: CouplingOperator,
    hash: String,
    threshold: f64,
}

fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let graph = spec.graph.build(&spec.base_dir)?;
    let op = spec.coupling.build(&graph)?;
    if op.n_sites() != graph.n() {
        return Err(CimError::Dimension {
            expected: graph.n(),
            got: op.n_sites(),
        });
    }
    let hash = spec.config_hash(&graph)?;
    let threshold = threshold_from_radius(op.spectral_radius(), spec.run.r_out, spec.run.units.kappa_tilde)?;
    Ok(Prepared {
        graph,
        op,
        hash,
        threshold,
    })
}

fn run_seeds(spec: &ExperimentSpec, p: &Prepared, run: RunConfig, reference: Option<f64>) -> Vec<(u64, Result<SeedOutcome>)> {
    spec.seeds
        .par_iter()
        .map(|&seed| {
            let mut cfg = spec.run_config(seed);
            cfg.pump = run.pump;
            let outcome = run_with_operator(&p.graph, &p.op, &cfg)
                .map(|trajectory| {
                    let summary = RunSummary::new(&trajectory, seed, &p.hash);
                    let success = trajectory.oscillating && reference.is_some_and(|e| is_success(summary.final_energy, e));
                    SeedOutcome {
                        summary,
                        trajectory,
                        success,
                    }
                })
                .map_err(|e| e.at_stage(seed, "run"));
            (seed, outcome)
        })
        .collect()
}

fn write_seed(dir: &Path, spec: &ExperimentSpec, o: &SeedOutcome, hash: &str) -> Result<()> {
    let seed = o.summary.seed;
    let cfg = spec.run_config(seed);
    fs::write(dir.join(format!("summary_seed{seed}.json")), serde_json::to_string_pretty(&o.summary)?)?;
    if cfg.record_fields != RecordFields::None {
        fs::write(dir.join(format!("trajectory_seed{seed}.csv")), trajectory_csv(&o.trajectory, hash))?;
    }
    if cfg.record_fields == RecordFields::Full {
        write_snapshots(
            &o.trajectory,
            &dir.join(format!("snapshots_seed{seed}.bin")),
            &dir.join(format!("snapshots_seed{seed}.index.json")),
            hash,
        )?;
    }
    if spec.preset == Some(Preset::Fig2Quadratures) {
        fs::write(dir.join(format!("quadratures_seed{seed}.csv")), quadratures_csv(&o.trajectory, hash))?;
    }
    Ok(())
}

/// Run every seed of an experiment, write its outputs and aggregate.
pub fn run_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ReportBundle> {
    in_pool(opts.threads, || run_experiment_inner(spec, opts))?
}

fn run_experiment_inner(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ReportBundle> {
    let p = prepare(spec)?;
    let out_dir = opts.out_dir(spec);
    if let Some(dir) = &out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("config.toml"), spec.emitted().to_toml()?)?;
    }
    let rho = p.op.spectral_radius();
    let mut bundle = ReportBundle {
        name: spec.name.clone(),
        config_hash: p.hash.clone(),
        family: p.graph.family(),
        n_sites: p.graph.n(),
        rho,
        threshold: p.threshold,
        oracle: None,
        seeds: Vec::new(),
        aggregate: Aggregate::from_summaries(&[], None),
        hardware: hardware_time(spec.hardware, spec.run.n_round_trips),
        budget: spec.budget.map(|b| budget_for(p.op.scheme(), p.op.n_sites(), b)),
        threshold_check: None,
        sweep: None,
        outcomes: Vec::new(),
    };

    match spec.preset {
        Some(Preset::ThresholdCheck) => {
            bundle.threshold_check = Some(threshold_check(rho, &spec.run)?);
        }
        Some(Preset::PumpSweep) => {
            let grid = spec.sweep.as_ref().map(|s| s.grid.clone()).unwrap_or_default();
            let oracle = reference_energy(&p.graph, &spec.oracle)?;
            let table = sweep_prepared(spec, &p, &grid, oracle.energy)?;
            if let Some(dir) = &out_dir {
                fs::write(dir.join("sweep.csv"), table.to_csv())?;
            }
            bundle.oracle = Some(oracle);
            bundle.sweep = Some(table);
        }
        Some(Preset::Fig2Quadratures) | Some(Preset::Fig3Energy) | None => {
            let oracle = reference_energy(&p.graph, &spec.oracle)?;
            let results = run_seeds(spec, &p, spec.run, Some(oracle.energy));
            let mut first_error = None;
            for (_, r) in results {
                match r {
                    Ok(o) => {
                        if let Some(dir) = &out_dir {
                            write_seed(dir, spec, &o, &p.hash)?;
                        }
                        bundle.outcomes.push(o);
                    }
                    Err(e) => {
                        first_error.get_or_insert(e);
                    }
                }
            }
            bundle.seeds = bundle.outcomes.iter().map(|o| o.summary.clone()).collect();
            bundle.aggregate = Aggregate::from_summaries(&bundle.seeds, Some(oracle.energy));
            bundle.oracle = Some(oracle);
            if let Some(e) = first_error {
                if let Some(dir) = &out_dir {
                    fs::write(dir.join("report.json"), serde_json::to_string_pretty(&bundle)?)?;
                }
                return Err(e);
            }
        }
    }
    if let Some(dir) = &out_dir {
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&bundle)?)?;
    }
    Ok(bundle)
}

fn sweep_prepared(spec: &ExperimentSpec, p: &Prepared, grid: &[f64], reference: f64) -> Result<SweepTable> {
    let mut rows = Vec::with_capacity(grid.len());
    for &multiple in grid {
        let mut run = spec.run;
        run.pump = PumpSpec::ThresholdMultiple(multiple);
        let mut summaries = Vec::new();
        for (_, r) in run_seeds(spec, p, run, Some(reference)) {
            summaries.push(r?.summary);
        }
        let agg = Aggregate::from_summaries(&summaries, Some(reference));
        let any = agg.oscillating_fraction > 0.0;
        let oscillating = summaries.iter().filter(|s| s.oscillating).count();
        rows.push(SweepRow {
            multiple,
            pump: multiple * p.threshold,
            n_seeds: summaries.len(),
            oscillating_fraction: agg.oscillating_fraction,
            success_fraction: any.then(|| agg.n_success as f64 / oscillating as f64),
            median_steady_from: agg.median_steady_from,
        });
    }
    Ok(SweepTable {
        config_hash: p.hash.clone(),
        threshold: p.threshold,
        rows,
    })
}

/// Success fraction and steady-state time per pump multiple.
pub fn pump_sweep(spec: &ExperimentSpec, grid: &[f64], opts: &RunOptions) -> Result<SweepTable> {
    in_pool(opts.threads, || {
        let p = prepare(spec)?;
        let oracle = reference_energy(&p.graph, &spec.oracle)?;
        let table = sweep_prepared(spec, &p, grid, oracle.energy)?;
        if let Some(dir) = opts.out_dir(spec) {
            fs::create_dir_all(&dir)?;
            fs::write(dir.join("config.toml"), spec.emitted().to_toml()?)?;
            fs::write(dir.join("sweep.csv"), table.to_csv())?;
        }
        Ok(table)
    })?
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportCheck {
    pub reported: Aggregate,
    pub recomputed: Aggregate,
    pub consistent: bool,
}

/// Re-derive the aggregate of an output directory from its per-seed summaries.
pub fn recheck_report(dir: &Path) -> Result<ReportCheck> {
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.join("report.json"))?)?;
    let reported: Aggregate = serde_json::from_value(report["aggregate"].clone())?;
    let reference = report["oracle"]["energy"].as_f64();
    let mut summaries = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|s| s.to_str()).unwrap_or_default();
        if name.starts_with("summary_seed") && name.ends_with(".json") {
            summaries.push(serde_json::from_str::<RunSummary>(&fs::read_to_string(&path)?)?);
        }
    }
    summaries.sort_by_key(|s| s.seed);
    let recomputed = Aggregate::from_summaries(&summaries, reference);
    Ok(ReportCheck {
        consistent: recomputed == reported,
        reported,
        recomputed,
    })
}
