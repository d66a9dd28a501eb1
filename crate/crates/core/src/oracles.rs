//! Reference solvers for the Ising energy `E = −½ Σ_ij J_ij σ_i σ_j`.
//!
//! * exhaustive enumeration for small instances,
//! * the circulant eigenvector readout used as the exact Möbius-ladder
//!   reference,
//! * single-spin-flip Metropolis annealing for the random families.

use std::cmp::Ordering;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};
use crate::graphs::GraphInstance;
use crate::rng::{stream_rng, Stream};

pub const BRUTE_FORCE_MAX_N: usize = 24;

/// Slack for comparing energies that went through different summation orders.
pub const ENERGY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpinConfiguration {
    spins: Vec<i8>,
}

impl SpinConfiguration {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if spins.iter().any(|&s| s != 1 && s != -1) {
            return Err(CimError::Config("spins must be +1 or -1".into()));
        }
        Ok(Self { spins })
    }

    pub fn all_up(n: usize) -> Self {
        Self { spins: vec![1; n] }
    }

    /// `σ_i = sgn(Re A_i)` with `sgn(0) = +1`.
    pub fn from_field(field: &[Complex64]) -> Self {
        Self {
            spins: field.iter().map(|a| if a.re >= 0.0 { 1 } else { -1 }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn spins(&self) -> &[i8] {
        &self.spins
    }

    pub fn flipped(&self) -> Self {
        Self {
            spins: self.spins.iter().map(|s| -s).collect(),
        }
    }

    /// Number of sites whose spin differs from `other`.
    pub fn distance(&self, other: &Self) -> usize {
        self.spins.iter().zip(&other.spins).filter(|(a, b)| a != b).count()
    }

    /// FNV-1a over the spin bytes. Stable across platforms and releases.
    pub fn fingerprint(&self) -> u64 {
        self.spins.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &s| {
            (h ^ u64::from(s as u8)).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// `E = −Σ_{edges} J_ij σ_i σ_j`, identical to the symmetric double sum.
pub fn ising_energy(g: &GraphInstance, s: &SpinConfiguration) -> Result<f64> {
    if s.len() != g.n() {
        return Err(CimError::Dimension {
            expected: g.n(),
            got: s.len(),
        });
    }
    Ok(energy_of(g, s.spins()))
}

fn energy_of(g: &GraphInstance, s: &[i8]) -> f64 {
    -g.edges()
        .iter()
        .map(|e| e.w * f64::from(s[e.i] * s[e.j]))
        .sum::<f64>()
}

fn local_fields(g: &GraphInstance, s: &[i8]) -> Vec<f64> {
    (0..g.n())
        .map(|i| g.neighbors(i).iter().map(|&(k, w)| w * f64::from(s[k])).sum())
        .collect()
}

#[inline]
fn flip(g: &GraphInstance, s: &mut [i8], h: &mut [f64], i: usize) {
    s[i] = -s[i];
    let si = f64::from(s[i]);
    for &(k, w) in g.neighbors(i) {
        h[k] += 2.0 * w * si;
    }
}

/// Exhaustive minimum over `2^(N−1)` configurations (the last spin is held
/// at +1; the energy is invariant under a global flip). Gray-code order with
/// incremental energy updates.
pub fn brute_force_ground_state(g: &GraphInstance) -> Result<(SpinConfiguration, f64)> {
    let n = g.n();
    if n > BRUTE_FORCE_MAX_N {
        return Err(CimError::TooLarge {
            n,
            limit: BRUTE_FORCE_MAX_N,
        });
    }
    let mut s = vec![1i8; n];
    let mut h = local_fields(g, &s);
    let mut e = energy_of(g, &s);
    let mut best = (s.clone(), e);
    let free = n.saturating_sub(1);
    for k in 1u64..(1u64 << free) {
        let i = k.trailing_zeros() as usize;
        e += 2.0 * f64::from(s[i]) * h[i];
        flip(g, &mut s, &mut h, i);
        if e < best.1 - ENERGY_TOL {
            best = (s.clone(), e);
        }
    }
    let config = SpinConfiguration { spins: best.0 };
    let energy = ising_energy(g, &config)?;
    Ok((config, energy))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CirculantGroundState {
    pub spins: SpinConfiguration,
    pub energy: f64,
    /// Largest eigenvalue of `J` and the Fourier index realizing it.
    pub lambda_max: f64,
    pub k: usize,
    /// Sub-lattice offset (in sites) of the cosine eigenvector that was read out.
    pub offset: f64,
    /// `−(N/2)·λ_max`, a lower bound on every Ising energy.
    pub spectral_bound: f64,
    pub bound_attained: bool,
}

/// Sign readout of a maximal eigenvector of a circulant `J`.
///
/// The eigenvalues are `λ_k = Σ_j c_j cos(2πjk/N)` for the (symmetric) first
/// row `c`. Among maximizers the smallest `k` is taken, and the real
/// eigenvector `cos(2πk(i + offset)/N)` is read out with offset 0, moving to
/// half (then quarter, ...) site offsets while any component is zero.
pub fn circulant_ground_state(g: &GraphInstance) -> Result<CirculantGroundState> {
    let c = g.circulant_row().ok_or(CimError::NotCirculant)?;
    let n = g.n();
    let nf = n as f64;
    let lambda = |k: usize| -> f64 {
        c.iter()
            .enumerate()
            .map(|(j, &w)| w * (2.0 * PI * ((j * k) % n) as f64 / nf).cos())
            .sum()
    };
    let eigs: Vec<f64> = (0..n).map(lambda).collect();
    let lambda_max = eigs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let k = eigs.iter().position(|&l| l >= lambda_max - 1e-12).unwrap_or(0);

    let mut offset = 0.0;
    let vector = loop {
        let v: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * k as f64 * (i as f64 + offset) / nf).cos())
            .collect();
        if v.iter().all(|x| x.abs() > 1e-9) || offset > 0.0 && offset < 1e-6 {
            break v;
        }
        offset = if offset == 0.0 { 0.5 } else { offset / 2.0 };
    };
    let spins = SpinConfiguration {
        spins: vector.iter().map(|&x| if x >= 0.0 { 1 } else { -1 }).collect(),
    };
    let energy = ising_energy(g, &spins)?;
    let spectral_bound = -0.5 * nf * lambda_max;
    Ok(CirculantGroundState {
        spins,
        energy,
        lambda_max,
        k,
        offset,
        spectral_bound,
        bound_attained: (energy - spectral_bound).abs() <= ENERGY_TOL,
    })
}

/// Geometric cooling from `t_start` to `t_end` over `sweeps` sweeps,
/// repeated over independent `restarts`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnealSchedule {
    pub sweeps: usize,
    pub t_start: f64,
    pub t_end: f64,
    pub restarts: usize,
}

impl AnnealSchedule {
    pub const DEFAULT_SWEEPS: usize = 2000;
    pub const DEFAULT_RESTARTS: usize = 20;

    /// `t_start = 2·max_i Σ_j |J_ij|`, `t_end = 10⁻³·t_start`.
    pub fn default_for(g: &GraphInstance) -> Self {
        let row_max = (0..g.n())
            .map(|i| g.neighbors(i).iter().map(|&(_, w)| w.abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let t_start = if row_max > 0.0 { 2.0 * row_max } else { 1.0 };
        Self {
            sweeps: Self::DEFAULT_SWEEPS,
            t_start,
            t_end: 1e-3 * t_start,
            restarts: Self::DEFAULT_RESTARTS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 || self.restarts == 0 {
            return Err(CimError::Config("anneal schedule needs sweeps >= 1 and restarts >= 1".into()));
        }
        if !(self.t_start > self.t_end && self.t_end > 0.0 && self.t_start.is_finite()) {
            return Err(CimError::Config(format!(
                "anneal temperatures must satisfy t_start > t_end > 0, got {} and {}",
                self.t_start, self.t_end
            )));
        }
        Ok(())
    }

    /// Per-sweep temperature ratio.
    pub fn cooling(&self) -> f64 {
        if self.sweeps < 2 {
            1.0
        } else {
            (self.t_end / self.t_start).powf(1.0 / (self.sweeps - 1) as f64)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnnealResult {
    pub spins: SpinConfiguration,
    pub energy: f64,
    /// Restart chain that produced the result.
    pub chain: usize,
}

/// One chain. `observe` sees the configuration and tracked energy after
/// every sweep.
pub(crate) fn anneal_chain(
    g: &GraphInstance,
    sched: &AnnealSchedule,
    seed: u64,
    chain: u32,
    mut observe: impl FnMut(&[i8], f64),
) -> Result<(SpinConfiguration, f64)> {
    let n = g.n();
    let mut rng = stream_rng(seed, Stream::AnnealChain(chain));
    let mut s: Vec<i8> = (0..n).map(|_| if rng.random_bool(0.5) { 1 } else { -1 }).collect();
    let mut h = local_fields(g, &s);
    let mut e = energy_of(g, &s);
    let mut best = (s.clone(), e);
    let cooling = sched.cooling();
    let mut t = sched.t_start;
    for _ in 0..sched.sweeps {
        for i in 0..n {
            let de = 2.0 * f64::from(s[i]) * h[i];
            if de <= 0.0 || rng.random::<f64>() < (-de / t).exp() {
                flip(g, &mut s, &mut h, i);
                e += de;
                if e < best.1 - ENERGY_TOL {
                    best = (s.clone(), e);
                }
            }
        }
        observe(&s, e);
        t *= cooling;
    }
    let drift = (e - energy_of(g, &s)).abs();
    if drift >= ENERGY_TOL {
        return Err(CimError::Config(format!(
            "annealing energy bookkeeping drifted by {drift:e}"
        )));
    }
    let config = SpinConfiguration { spins: best.0 };
    let energy = ising_energy(g, &config)?;
    Ok((config, energy))
}

/// Best configuration over all restarts. Chains run in parallel on
/// independent streams; ties go to the lexicographically smallest
/// configuration, so the result does not depend on scheduling.
pub fn metropolis_anneal(g: &GraphInstance, sched: &AnnealSchedule, seed: u64) -> Result<AnnealResult> {
    sched.validate()?;
    let chains: Vec<(SpinConfiguration, f64)> = (0..sched.restarts)
        .into_par_iter()
        .map(|r| anneal_chain(g, sched, seed, r as u32, |_, _| {}))
        .collect::<Result<_>>()?;
    let (chain, (spins, energy)) = chains
        .into_iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            if (a.1 - b.1).abs() <= ENERGY_TOL {
                a.0.cmp(&b.0)
            } else {
                a.1.partial_cmp(&b.1).unwrap_or(Ordering::Equal)
            }
        })
        .expect("at least one restart");
    Ok(AnnealResult { spins, energy, chain })
}
