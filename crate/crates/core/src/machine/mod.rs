//! The cavity round-trip map
//!
//! ```text
//!     A_{j,τ+1} = R_out Σ_l Q_jl NLM[A_{l,τ}]
//! ```
//!
//! with a fresh uniform pump `B(z=0) = B̃₀` injected at every pixel on every
//! pass. Spins are read from the real quadrature, `σ_i = sgn(Re A_i)`.
//!
//! Per-site integration runs in parallel; the coupling step is a barrier.
//! All randomness is drawn in site order before any parallel section, so
//! a run is bit-identical for every thread count.

pub mod output;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{threshold_pump, CouplingOperator};
use crate::error::{CimError, Result};
use crate::graphs::{assemble_q, CouplingAssembly, GraphInstance};
use crate::nlm::{rk4_cartesian, NormalizedUnits, DEFAULT_STEPS};
use crate::oracles::{ising_energy, SpinConfiguration};
use crate::rng::{stream_rng, Stream};

/// Sites are integrated in parallel above this count.
const PAR_SITES_MIN: usize = 64;

pub const DEFAULT_NOISE_AMP: f64 = 1e-3;
pub const DEFAULT_ROUND_TRIPS: u64 = 2000;

/// Amplitude outcoupling factor for `T_out = √0.1`.
pub fn default_r_out() -> f64 {
    0.9f64.sqrt()
}

/// OPO amplitudes at round trip `τ`, in units of A₀.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub amplitudes: Vec<Complex64>,
    pub round_trip: u64,
}

impl FieldState {
    pub fn new(amplitudes: Vec<Complex64>) -> Self {
        Self {
            amplitudes,
            round_trip: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn spins(&self) -> SpinConfiguration {
        SpinConfiguration::from_field(&self.amplitudes)
    }

    pub fn max_abs(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm()).fold(0.0, f64::max)
    }
}

/// Pump amplitude at the crystal entrance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PumpSpec {
    /// `B̃₀` in units of A₀.
    Amplitude(f64),
    /// `B̃₀` as a multiple of the oscillation threshold.
    ThresholdMultiple(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFields {
    /// Summary JSON only.
    None,
    /// Summary plus the per-round-trip CSV.
    #[default]
    Stats,
    /// Additionally keep every field snapshot (up to `snapshot_window`).
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub units: NormalizedUnits,
    pub pump: PumpSpec,
    #[serde(default = "default_r_out")]
    pub r_out: f64,
    #[serde(default = "default_noise_amp")]
    pub noise_amp: f64,
    #[serde(default = "default_round_trips")]
    pub n_round_trips: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub record_fields: RecordFields,
    #[serde(default = "default_steps")]
    pub steps_per_pass: usize,
    /// Amplitude of white noise added after every round trip. Zero (the
    /// default) injects noise only at `τ = 0`.
    #[serde(default)]
    pub trip_noise: f64,
    /// Last round trip kept as a snapshot in [`RecordFields::Full`] mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snapshot_window: Option<u64>,
}

fn default_noise_amp() -> f64 {
    DEFAULT_NOISE_AMP
}
fn default_round_trips() -> u64 {
    DEFAULT_ROUND_TRIPS
}
fn default_steps() -> usize {
    DEFAULT_STEPS
}

impl RunConfig {
    pub fn new(pump: PumpSpec) -> Self {
        Self {
            units: NormalizedUnits::default(),
            pump,
            r_out: default_r_out(),
            noise_amp: DEFAULT_NOISE_AMP,
            n_round_trips: DEFAULT_ROUND_TRIPS,
            seed: 0,
            record_fields: RecordFields::default(),
            steps_per_pass: DEFAULT_STEPS,
            trip_noise: 0.0,
            snapshot_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.units.validate()?;
        let bad = |msg: String| Err(CimError::Config(msg));
        if !(self.r_out > 0.0 && self.r_out <= 1.0) {
            return bad(format!("r_out must lie in (0, 1], got {}", self.r_out));
        }
        if !(self.noise_amp > 0.0 && self.noise_amp.is_finite()) {
            return bad(format!("noise_amp must be positive, got {}", self.noise_amp));
        }
        if !(self.trip_noise >= 0.0 && self.trip_noise.is_finite()) {
            return bad(format!("trip_noise must be non-negative, got {}", self.trip_noise));
        }
        if self.steps_per_pass == 0 {
            return bad("steps_per_pass must be at least 1".into());
        }
        match self.pump {
            PumpSpec::Amplitude(b) | PumpSpec::ThresholdMultiple(b) if !(b >= 0.0 && b.is_finite()) => {
                bad(format!("pump must be a non-negative finite number, got {b}"))
            }
            _ => Ok(()),
        }
    }

    /// Absolute pump `B̃₀` for this operator, with the threshold it was derived from.
    pub fn resolve_pump(&self, op: &CouplingOperator) -> Result<(f64, f64)> {
        let threshold = threshold_pump(op, self.r_out, &self.units)?;
        let pump = match self.pump {
            PumpSpec::Amplitude(b) => b,
            PumpSpec::ThresholdMultiple(m) => m * threshold,
        };
        Ok((pump, threshold))
    }
}

/// White noise at `τ = 0`: circular complex Gaussian with per-quadrature
/// standard deviation `noise_amp/√2`, drawn in site order (real then
/// imaginary part).
pub fn init_noise(n: usize, noise_amp: f64, seed: u64) -> FieldState {
    let mut rng = stream_rng(seed, Stream::InitialNoise);
    FieldState::new(draw_noise(&mut rng, n, noise_amp))
}

fn draw_noise(rng: &mut impl Rng, n: usize, amp: f64) -> Vec<Complex64> {
    let sigma = amp / std::f64::consts::SQRT_2;
    (0..n)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(sigma * re, sigma * im)
        })
        .collect()
}

fn nlm_all(field: &[Complex64], pump: f64, kappa: f64, steps: usize, tau: u64) -> Result<Vec<Complex64>> {
    let b0 = Complex64::new(pump, 0.0);
    let pass = |a: &Complex64| rk4_cartesian(*a, b0, kappa, steps).map(|(a, _)| a);
    let out: Vec<std::result::Result<Complex64, usize>> = if field.len() >= PAR_SITES_MIN {
        field.par_iter().map(pass).collect()
    } else {
        field.iter().map(pass).collect()
    };
    out.into_iter()
        .enumerate()
        .map(|(site, r)| {
            r.map_err(|step| CimError::SiteDiverged {
                site,
                round_trip: tau,
                step,
            })
        })
        .collect()
}

fn step(state: &FieldState, op: &CouplingOperator, pump: f64, cfg: &RunConfig) -> Result<FieldState> {
    if state.n() != op.n_sites() {
        return Err(CimError::Dimension {
            expected: op.n_sites(),
            got: state.n(),
        });
    }
    let passed = nlm_all(
        &state.amplitudes,
        pump,
        cfg.units.kappa_tilde,
        cfg.steps_per_pass,
        state.round_trip,
    )?;
    let mut coupled = op.apply(&passed)?;
    coupled.iter_mut().for_each(|a| *a *= cfg.r_out);
    Ok(FieldState {
        amplitudes: coupled,
        round_trip: state.round_trip + 1,
    })
}

/// One round trip: medium pass at every site, coupling, outcoupling loss.
pub fn round_trip(state: &FieldState, op: &CouplingOperator, cfg: &RunConfig) -> Result<FieldState> {
    let (pump, _) = cfg.resolve_pump(op)?;
    step(state, op, pump, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRecord {
    pub tau: u64,
    pub ising_energy: f64,
    pub mean_abs_re: f64,
    pub mean_abs_im: f64,
    pub max_abs: f64,
    pub spin_hash: u64,
    pub spins_changed: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// One record per round trip, `τ = 0..=n_round_trips`.
    pub records: Vec<TripRecord>,
    /// `(τ, field)` pairs, only in [`RecordFields::Full`] mode.
    pub snapshots: Vec<(u64, Vec<Complex64>)>,
    pub final_field: Vec<Complex64>,
    pub final_spins: SpinConfiguration,
    /// Spin configuration unchanged over the last 10% of the budget.
    pub converged: bool,
    /// Amplitudes grew overall; false below threshold.
    pub oscillating: bool,
    /// First `τ` after which the spins never change again.
    pub steady_from: u64,
    pub pump: f64,
    pub threshold: f64,
    pub rho: f64,
}

impl Trajectory {
    pub fn final_energy(&self) -> f64 {
        self.records.last().map(|r| r.ising_energy).unwrap_or(f64::NAN)
    }
}

fn record(tau: u64, g: &GraphInstance, field: &[Complex64], prev: Option<&SpinConfiguration>) -> Result<(TripRecord, SpinConfiguration)> {
    let spins = SpinConfiguration::from_field(field);
    let n = field.len().max(1) as f64;
    let rec = TripRecord {
        tau,
        ising_energy: ising_energy(g, &spins)?,
        mean_abs_re: field.iter().map(|a| a.re.abs()).sum::<f64>() / n,
        mean_abs_im: field.iter().map(|a| a.im.abs()).sum::<f64>() / n,
        max_abs: field.iter().map(|a| a.norm()).fold(0.0, f64::max),
        spin_hash: spins.fingerprint(),
        spins_changed: prev.map_or(0, |p| p.distance(&spins)),
    };
    Ok((rec, spins))
}

/// Assemble `Q` for the graph and run the machine.
pub fn run(graph: &GraphInstance, asm: CouplingAssembly, cfg: &RunConfig) -> Result<Trajectory> {
    let op = assemble_q(graph, asm)?;
    run_with_operator(graph, &op, cfg)
}

/// Run `n_round_trips` round trips from seeded noise, scoring the spins
/// against `graph` after every trip.
pub fn run_with_operator(graph: &GraphInstance, op: &CouplingOperator, cfg: &RunConfig) -> Result<Trajectory> {
    cfg.validate()?;
    if graph.n() != op.n_sites() {
        return Err(CimError::Dimension {
            expected: op.n_sites(),
            got: graph.n(),
        });
    }
    let (pump, threshold) = cfg.resolve_pump(op)?;
    let full = cfg.record_fields == RecordFields::Full;
    let window = cfg.snapshot_window.unwrap_or(cfg.n_round_trips);
    let mut trip_rng = (cfg.trip_noise > 0.0).then(|| stream_rng(cfg.seed, Stream::TripNoise));

    let mut state = init_noise(op.n_sites(), cfg.noise_amp, cfg.seed);
    let capacity = cfg.n_round_trips as usize + 1;
    let mut records = Vec::with_capacity(capacity);
    let mut snapshots = Vec::new();
    let (rec, mut spins) = record(0, graph, &state.amplitudes, None)?;
    records.push(rec);
    if full {
        snapshots.push((0, state.amplitudes.clone()));
    }
    let initial_max = state.max_abs();

    for _ in 0..cfg.n_round_trips {
        state = step(&state, op, pump, cfg)?;
        if let Some(rng) = trip_rng.as_mut() {
            let noise = draw_noise(rng, state.n(), cfg.trip_noise);
            state.amplitudes.iter_mut().zip(noise).for_each(|(a, z)| *a += z);
        }
        let (rec, next) = record(state.round_trip, graph, &state.amplitudes, Some(&spins))?;
        records.push(rec);
        spins = next;
        if full && state.round_trip <= window {
            snapshots.push((state.round_trip, state.amplitudes.clone()));
        }
    }

    let tail = ((cfg.n_round_trips as f64) * 0.1).ceil() as usize;
    let last_hash = records.last().map(|r| r.spin_hash);
    let converged = records
        .iter()
        .rev()
        .take(tail + 1)
        .all(|r| Some(r.spin_hash) == last_hash);
    let steady_from = records
        .iter()
        .rposition(|r| r.spins_changed > 0)
        .map_or(0, |i| records[i].tau);

    Ok(Trajectory {
        converged,
        oscillating: state.max_abs() > initial_max,
        steady_from,
        pump,
        threshold,
        rho: op.spectral_radius(),
        final_spins: spins,
        final_field: state.amplitudes,
        records,
        snapshots,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::Passivity;
    use crate::graphs::{make_graph, GraphFamily, GraphParams};
    use crate::oracles::{brute_force_ground_state, circulant_ground_state};

    fn cfg(pump: PumpSpec) -> RunConfig {
        RunConfig::new(pump)
    }

    #[test]
    fn init_noise_rms_and_determinism() {
        let a = init_noise(100_000, 1e-3, 4);
        let rms = (a.amplitudes.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e5).sqrt();
        assert!((rms - 1e-3).abs() / 1e-3 < 0.02);
        assert_eq!(a, init_noise(100_000, 1e-3, 4));
        assert_ne!(a, init_noise(100_000, 1e-3, 5));
    }

    #[test]
    fn zero_noise_rejected() {
        let mut c = cfg(PumpSpec::Amplitude(1.0));
        c.noise_amp = 0.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn loss_only_round_trip() {
        let op = CouplingOperator::identity(16);
        let c = cfg(PumpSpec::Amplitude(0.0));
        let s0 = init_noise(16, 1e-3, 1);
        let s1 = round_trip(&s0, &op, &c).unwrap();
        for (a, b) in s0.amplitudes.iter().zip(&s1.amplitudes) {
            assert!((b.norm() / a.norm() - c.r_out).abs() / c.r_out < 1e-6);
        }
        assert_eq!(s1.round_trip, 1);
    }

    #[test]
    fn real_subspace_is_invariant() {
        let g = make_graph(GraphParams::reference(GraphFamily::MobiusLadder), 16, 0).unwrap();
        let op = assemble_q(&g, CouplingAssembly::default()).unwrap();
        let c = cfg(PumpSpec::ThresholdMultiple(1.2));
        let mut s = FieldState::new(init_noise(16, 1e-3, 2).amplitudes.iter().map(|a| Complex64::new(a.re, 0.0)).collect());
        for _ in 0..50 {
            s = round_trip(&s, &op, &c).unwrap();
            assert!(s.amplitudes.iter().all(|a| a.im == 0.0));
        }
    }

    #[test]
    fn single_site_threshold_bracketing() {
        let op = CouplingOperator::dense_real(1, &[0.98], Passivity::Enforce).unwrap();
        let g = GraphInstance::empty(1).unwrap();
        for (mult, grows) in [(0.99, false), (1.01, true)] {
            let mut c = cfg(PumpSpec::ThresholdMultiple(mult));
            c.n_round_trips = 500;
            let t = run_with_operator(&g, &op, &c).unwrap();
            assert_eq!(t.records.last().unwrap().max_abs > t.records[0].max_abs, grows, "{mult}");
        }
    }

    #[test]
    fn no_pump_no_oscillation() {
        let g = make_graph(GraphParams::reference(GraphFamily::MobiusLadder), 16, 0).unwrap();
        let mut c = cfg(PumpSpec::Amplitude(0.0));
        c.n_round_trips = 100;
        let t = run(&g, CouplingAssembly::default(), &c).unwrap();
        assert!(t.records.last().unwrap().max_abs < t.records[0].max_abs);
        assert!(!t.oscillating);
        assert_eq!(t.records.len(), 101);
    }

    #[test]
    fn toy_ladder_reaches_brute_force_optimum() {
        let g = make_graph(GraphParams::reference(GraphFamily::MobiusLadder), 8, 0).unwrap();
        let (_, exact) = brute_force_ground_state(&g).unwrap();
        assert!((circulant_ground_state(&g).unwrap().energy - exact).abs() < 1e-12);
        for seed in 0..5 {
            let mut c = cfg(PumpSpec::ThresholdMultiple(1.2));
            c.seed = seed;
            let t = run(&g, CouplingAssembly::default(), &c).unwrap();
            assert!((t.final_energy() - exact).abs() < 1e-9, "seed {seed}: {}", t.final_energy());
            assert!(t.converged);
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let g = GraphInstance::empty(4).unwrap();
        let op = CouplingOperator::identity(5);
        let c = cfg(PumpSpec::Amplitude(0.0));
        assert!(matches!(run_with_operator(&g, &op, &c), Err(CimError::Dimension { .. })));
    }

    #[test]
    fn divergence_reports_site_and_round_trip() {
        let g = GraphInstance::empty(2).unwrap();
        let op = CouplingOperator::identity(2);
        let mut c = cfg(PumpSpec::Amplitude(1e200));
        c.units.kappa_tilde = 1e200;
        c.n_round_trips = 3;
        match run_with_operator(&g, &op, &c) {
            Err(CimError::SiteDiverged { site: 0, round_trip: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn trip_noise_changes_run_but_stays_deterministic() {
        let g = make_graph(GraphParams::reference(GraphFamily::MobiusLadder), 16, 0).unwrap();
        let mut c = cfg(PumpSpec::ThresholdMultiple(1.2));
        c.n_round_trips = 200;
        let quiet = run(&g, CouplingAssembly::default(), &c).unwrap();
        c.trip_noise = 1e-4;
        let a = run(&g, CouplingAssembly::default(), &c).unwrap();
        let b = run(&g, CouplingAssembly::default(), &c).unwrap();
        assert_eq!(a.final_field, b.final_field);
        assert_ne!(a.final_field, quiet.final_field);
    }
}
