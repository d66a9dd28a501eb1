//! Intracavity coupling realized by the SLM.
//!
//! Two schemes are supported:
//!
//! * **Circulant**: the SLM sits in the Fourier plane between two lenses and
//!   multiplies the transformed field by a transmission `Q̃_k`. The net effect
//!   on the pixel amplitudes is a circular convolution with the kernel
//!   `Q_m = IFT(Q̃)_m`, i.e. the matrix `Q_ij = Q_{(i - j) mod N}` whose first
//!   column (and diagonal) starts at `Q_0`. One OPO per pixel, so
//!   `N ≤ M_x·M_y`.
//! * **Dense**: vector-matrix multiplication in real space with an arbitrary
//!   `N×N` matrix. Each OPO occupies a column of `M_y` pixels, so `N ≤ M_x`.
//!
//! Operators are immutable once built and `apply` is a pure function of its
//! input, so one operator can be shared across worker threads.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};
use crate::nlm::NormalizedUnits;

/// Tolerance of the strict passivity test `ρ(Q) < 1`.
pub const PASSIVITY_TOL: f64 = 1e-12;
pub const POWER_ITERATION_TOL: f64 = 1e-8;
pub const POWER_ITERATION_MAX: usize = 100_000;

/// Dense rows are split across threads above this size.
const PAR_ROWS_MIN: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Passivity {
    /// Reject operators with `ρ(Q) ≥ 1`.
    #[default]
    Enforce,
    /// Accept active operators. Research use only.
    AllowActive,
}

#[derive(Clone)]
struct Circulant {
    kernel: Vec<Complex64>,
    spectrum: Vec<Complex64>,
    real_kernel: bool,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

#[derive(Clone)]
struct Dense {
    entries: Vec<Complex64>,
    real_entries: Option<Vec<f64>>,
}

#[derive(Clone)]
enum Kind {
    Circulant(Circulant),
    Dense(Dense),
}

/// A coupling matrix `Q` in one of the two SLM schemes.
#[derive(Clone)]
pub struct CouplingOperator {
    n: usize,
    kind: Kind,
    rho: f64,
    passivity: Passivity,
}

impl fmt::Debug for CouplingOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CouplingOperator")
            .field("scheme", &self.scheme())
            .field("n", &self.n)
            .field("rho", &self.rho)
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Circulant,
    Dense,
}

fn plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    let mut planner = FftPlanner::new();
    (planner.plan_fft_forward(n), planner.plan_fft_inverse(n))
}

fn transform(plan: &Arc<dyn Fft<f64>>, buf: &mut [Complex64]) {
    let mut scratch = vec![Complex64::new(0.0, 0.0); plan.get_inplace_scratch_len()];
    plan.process_with_scratch(buf, &mut scratch);
}

impl CouplingOperator {
    /// Circulant operator from its kernel (first column of `Q`).
    pub fn circulant(kernel: Vec<Complex64>, passivity: Passivity) -> Result<Self> {
        let n = kernel.len();
        if n == 0 {
            return Err(CimError::Config("empty circulant kernel".into()));
        }
        if kernel.iter().any(|z| !z.is_finite()) {
            return Err(CimError::Config("non-finite circulant kernel entry".into()));
        }
        let (forward, inverse) = plans(n);
        let mut spectrum = kernel.clone();
        transform(&forward, &mut spectrum);
        let rho = spectrum.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let real_kernel = kernel.iter().all(|z| z.im == 0.0);
        Self::finish(
            n,
            Kind::Circulant(Circulant {
                kernel,
                spectrum,
                real_kernel,
                forward,
                inverse,
            }),
            rho,
            passivity,
        )
    }

    /// Circulant operator from the Fourier-plane transmission `Q̃_k`.
    pub fn from_transmission(transmission: &[Complex64], passivity: Passivity) -> Result<Self> {
        let n = transmission.len();
        if n == 0 {
            return Err(CimError::Config("empty transmission".into()));
        }
        let (_, inverse) = plans(n);
        let mut kernel = transmission.to_vec();
        transform(&inverse, &mut kernel);
        let scale = 1.0 / n as f64;
        kernel.iter_mut().for_each(|z| *z *= scale);
        Self::circulant(kernel, passivity)
    }

    /// Dense operator from a row-major `n×n` matrix.
    pub fn dense(n: usize, entries: Vec<Complex64>, passivity: Passivity) -> Result<Self> {
        if n == 0 {
            return Err(CimError::Config("empty dense operator".into()));
        }
        if entries.len() != n * n {
            return Err(CimError::Dimension {
                expected: n * n,
                got: entries.len(),
            });
        }
        if entries.iter().any(|z| !z.is_finite()) {
            return Err(CimError::Config("non-finite matrix entry".into()));
        }
        let real_entries = entries
            .iter()
            .all(|z| z.im == 0.0)
            .then(|| entries.iter().map(|z| z.re).collect::<Vec<_>>());
        let rho = match &real_entries {
            Some(re) if is_symmetric(n, re) => symmetric_radius(n, re),
            _ => power_radius(n, &entries)?,
        };
        Self::finish(n, Kind::Dense(Dense { entries, real_entries }), rho, passivity)
    }

    /// Dense operator from a real row-major matrix.
    pub fn dense_real(n: usize, entries: &[f64], passivity: Passivity) -> Result<Self> {
        Self::dense(n, entries.iter().map(|&x| Complex64::new(x, 0.0)).collect(), passivity)
    }

    /// `Q = 1`, as a circulant with a unit impulse kernel. Not passive.
    pub fn identity(n: usize) -> Self {
        let mut kernel = vec![Complex64::new(0.0, 0.0); n];
        kernel[0] = Complex64::new(1.0, 0.0);
        Self::circulant(kernel, Passivity::AllowActive).expect("identity kernel is valid")
    }

    fn finish(n: usize, kind: Kind, rho: f64, passivity: Passivity) -> Result<Self> {
        if passivity == Passivity::Enforce && rho >= 1.0 - PASSIVITY_TOL {
            return Err(CimError::NotPassive { rho });
        }
        Ok(Self {
            n,
            kind,
            rho,
            passivity,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    pub fn scheme(&self) -> Scheme {
        match self.kind {
            Kind::Circulant(_) => Scheme::Circulant,
            Kind::Dense(_) => Scheme::Dense,
        }
    }

    pub fn passivity(&self) -> Passivity {
        self.passivity
    }

    pub fn is_passive(&self) -> bool {
        self.rho < 1.0 - PASSIVITY_TOL
    }

    /// ρ(Q). Exact (max |Q̃_k|) for circulant operators; symmetric
    /// eigendecomposition or power iteration for dense ones.
    pub fn spectral_radius(&self) -> f64 {
        self.rho
    }

    pub fn kernel(&self) -> Option<&[Complex64]> {
        match &self.kind {
            Kind::Circulant(c) => Some(&c.kernel),
            Kind::Dense(_) => None,
        }
    }

    /// Fourier-plane transmission `Q̃_k` of a circulant operator.
    pub fn transmission(&self) -> Option<&[Complex64]> {
        match &self.kind {
            Kind::Circulant(c) => Some(&c.spectrum),
            Kind::Dense(_) => None,
        }
    }

    /// Row-major `Q`.
    pub fn to_dense(&self) -> Vec<Complex64> {
        let n = self.n;
        match &self.kind {
            Kind::Dense(d) => d.entries.clone(),
            Kind::Circulant(c) => {
                let mut m = Vec::with_capacity(n * n);
                for i in 0..n {
                    for j in 0..n {
                        m.push(c.kernel[(i + n - j) % n]);
                    }
                }
                m
            }
        }
    }

    /// `Q·field`.
    pub fn apply(&self, field: &[Complex64]) -> Result<Vec<Complex64>> {
        if field.len() != self.n {
            return Err(CimError::Dimension {
                expected: self.n,
                got: field.len(),
            });
        }
        Ok(match &self.kind {
            Kind::Circulant(c) => c.apply(field),
            Kind::Dense(d) => d.apply(self.n, field),
        })
    }
}

impl Circulant {
    fn convolve(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        transform(&self.forward, &mut buf);
        for (x, q) in buf.iter_mut().zip(&self.spectrum) {
            *x *= q;
        }
        transform(&self.inverse, &mut buf);
        let scale = 1.0 / buf.len() as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
        buf
    }

    fn apply(&self, field: &[Complex64]) -> Vec<Complex64> {
        if !self.real_kernel {
            return self.convolve(field.to_vec());
        }
        // A real kernel maps real vectors to real vectors. Convolving the two
        // quadratures separately keeps that exact instead of leaving FFT
        // round-off in the imaginary part.
        let re = self.convolve(field.iter().map(|z| Complex64::new(z.re, 0.0)).collect());
        let im = self.convolve(field.iter().map(|z| Complex64::new(z.im, 0.0)).collect());
        re.into_iter()
            .zip(im)
            .map(|(r, i)| Complex64::new(r.re, i.re))
            .collect()
    }
}

impl Dense {
    fn apply(&self, n: usize, field: &[Complex64]) -> Vec<Complex64> {
        let row = |i: usize| -> Complex64 {
            match &self.real_entries {
                Some(q) => {
                    let q = &q[i * n..(i + 1) * n];
                    let (mut re, mut im) = (0.0, 0.0);
                    for (w, a) in q.iter().zip(field) {
                        re += w * a.re;
                        im += w * a.im;
                    }
                    Complex64::new(re, im)
                }
                None => self.entries[i * n..(i + 1) * n]
                    .iter()
                    .zip(field)
                    .fold(Complex64::new(0.0, 0.0), |acc, (q, a)| acc + q * a),
            }
        };
        if n >= PAR_ROWS_MIN {
            (0..n).into_par_iter().map(row).collect()
        } else {
            (0..n).map(row).collect()
        }
    }
}

fn is_symmetric(n: usize, m: &[f64]) -> bool {
    (0..n).all(|i| (0..i).all(|j| m[i * n + j] == m[j * n + i]))
}

fn symmetric_radius(n: usize, m: &[f64]) -> f64 {
    let eig = SymmetricEigen::new(DMatrix::from_row_slice(n, n, m));
    eig.eigenvalues.iter().map(|l| l.abs()).fold(0.0, f64::max)
}

/// Largest eigenvalue modulus via power iteration on `Q` itself.
fn power_radius(n: usize, m: &[Complex64]) -> Result<f64> {
    let mut x: Vec<Complex64> = (0..n)
        .map(|k| Complex64::new(1.0 + 0.5 * ((k + 1) as f64).sin(), 0.25 * ((k + 2) as f64).cos()))
        .collect();
    normalize(&mut x);
    let mut prev = f64::NAN;
    let mut settled = 0;
    for _ in 0..POWER_ITERATION_MAX {
        let mut y: Vec<Complex64> = (0..n)
            .map(|i| {
                m[i * n..(i + 1) * n]
                    .iter()
                    .zip(&x)
                    .fold(Complex64::new(0.0, 0.0), |acc, (q, a)| acc + q * a)
            })
            .collect();
        let r = normalize(&mut y);
        if r == 0.0 {
            return Ok(0.0);
        }
        if (r - prev).abs() <= POWER_ITERATION_TOL * r {
            settled += 1;
            if settled >= 3 {
                return Ok(r);
            }
        } else {
            settled = 0;
        }
        prev = r;
        x = y;
    }
    Err(CimError::NoConvergence {
        iterations: POWER_ITERATION_MAX,
    })
}

fn normalize(v: &mut [Complex64]) -> f64 {
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|z| *z /= norm);
    }
    norm
}

/// `B̃₀,th = −ln(R_out ρ) / κ̃` in units of A₀.
pub fn threshold_from_radius(rho: f64, r_out: f64, kappa_tilde: f64) -> Result<f64> {
    if !(r_out > 0.0 && r_out <= 1.0) {
        return Err(CimError::Config(format!("r_out must lie in (0, 1], got {r_out}")));
    }
    if kappa_tilde.is_nan() || kappa_tilde <= 0.0 {
        return Err(CimError::Config(format!("kappa_tilde must be positive, got {kappa_tilde}")));
    }
    let loop_gain = r_out * rho;
    if loop_gain.is_nan() || loop_gain <= 0.0 || loop_gain > 1.0 + PASSIVITY_TOL {
        return Err(CimError::NoThreshold { loop_gain });
    }
    Ok((-loop_gain.min(1.0).ln() / kappa_tilde).max(0.0))
}

/// Pump amplitude at which round-trip gain balances the SLM and outcoupling loss.
pub fn threshold_pump(op: &CouplingOperator, r_out: f64, units: &NormalizedUnits) -> Result<f64> {
    threshold_from_radius(op.spectral_radius(), r_out, units.kappa_tilde)
}

/// SLM size in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelBudget {
    pub m_x: usize,
    pub m_y: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub scheme: Scheme,
    pub n_sites: usize,
    pub capacity: usize,
    pub fits: bool,
    /// Pixels spent per OPO.
    pub redundancy: usize,
}

pub fn validate_budget(op: &CouplingOperator, budget: PixelBudget) -> BudgetReport {
    budget_for(op.scheme(), op.n_sites(), budget)
}

pub fn budget_for(scheme: Scheme, n_sites: usize, budget: PixelBudget) -> BudgetReport {
    let (capacity, redundancy) = match scheme {
        Scheme::Circulant => (budget.m_x.saturating_mul(budget.m_y), 1),
        Scheme::Dense => (budget.m_x, budget.m_y),
    };
    BudgetReport {
        scheme,
        n_sites,
        capacity,
        fits: n_sites <= capacity,
        redundancy,
    }
}

/// Serialized form of an operator. Complex numbers are `[re, im]` pairs;
/// the dense matrix is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OperatorSpec {
    Circulant {
        kernel: Vec<[f64; 2]>,
        #[serde(default)]
        allow_active: bool,
    },
    Dense {
        n: usize,
        entries: Vec<[f64; 2]>,
        #[serde(default)]
        allow_active: bool,
    },
}

fn pairs(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

fn complexes(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|&[re, im]| Complex64::new(re, im)).collect()
}

fn policy(allow_active: bool) -> Passivity {
    if allow_active {
        Passivity::AllowActive
    } else {
        Passivity::Enforce
    }
}

impl OperatorSpec {
    pub fn build(&self) -> Result<CouplingOperator> {
        match self {
            OperatorSpec::Circulant { kernel, allow_active } => {
                CouplingOperator::circulant(complexes(kernel), policy(*allow_active))
            }
            OperatorSpec::Dense { n, entries, allow_active } => {
                CouplingOperator::dense(*n, complexes(entries), policy(*allow_active))
            }
        }
    }
}

impl From<&CouplingOperator> for OperatorSpec {
    fn from(op: &CouplingOperator) -> Self {
        let allow_active = op.passivity == Passivity::AllowActive;
        match &op.kind {
            Kind::Circulant(c) => OperatorSpec::Circulant {
                kernel: pairs(&c.kernel),
                allow_active,
            },
            Kind::Dense(d) => OperatorSpec::Dense {
                n: op.n,
                entries: pairs(&d.entries),
                allow_active,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    /// Direct O(N²) circular convolution, `out_j = Σ_i Q_{(j - i) mod N} x_i`.
    fn direct(kernel: &[Complex64], x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|j| (0..n).map(|i| kernel[(j + n - i) % n] * x[i]).sum())
            .collect()
    }

    fn max_rel_err(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn identity_kernel_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_vec(&mut rng, 37);
        let op = CouplingOperator::identity(37);
        let y = op.apply(&x).unwrap();
        assert!(x.iter().zip(&y).all(|(a, b)| (a - b).norm() < 1e-12));
        assert!((op.spectral_radius() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fft_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [4, 17, 64, 112] {
            for _ in 0..4 {
                let kernel = random_vec(&mut rng, n);
                let x = random_vec(&mut rng, n);
                let op = CouplingOperator::circulant(kernel.clone(), Passivity::AllowActive).unwrap();
                assert!(max_rel_err(&op.apply(&x).unwrap(), &direct(&kernel, &x)) < 1e-10);
            }
        }
    }

    #[test]
    fn materialized_circulant_pins_index_convention() {
        // Q_ij = kernel[(i - j) mod N]: kernel[0] on the diagonal, kernel[1]
        // on the first subdiagonal.
        let kernel: Vec<Complex64> = (0..5).map(|k| c(k as f64, 0.5 * k as f64)).collect();
        let op = CouplingOperator::circulant(kernel.clone(), Passivity::AllowActive).unwrap();
        let m = op.to_dense();
        assert_eq!(m[0], kernel[0]);
        assert_eq!(m[5], kernel[1]);
        assert_eq!(m[1], kernel[4]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_vec(&mut rng, 5);
        let dense = CouplingOperator::dense(5, m, Passivity::AllowActive).unwrap();
        assert!(max_rel_err(&op.apply(&x).unwrap(), &dense.apply(&x).unwrap()) < 1e-12);
    }

    #[test]
    fn transmission_spectral_radius() {
        let op = CouplingOperator::from_transmission(&[c(0.5, 0.0), c(-0.3, 0.0), c(0.1, 0.0)], Passivity::Enforce)
            .unwrap();
        assert!((op.spectral_radius() - 0.5).abs() < 1e-12);
        let t = op.transmission().unwrap();
        assert!((t[1] - c(-0.3, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn passivity_enforced() {
        let err = CouplingOperator::dense_real(2, &[1.0, 0.5, 0.5, 1.0], Passivity::Enforce);
        assert!(matches!(err, Err(CimError::NotPassive { .. })));
        let op = CouplingOperator::dense_real(2, &[1.0, 0.5, 0.5, 1.0], Passivity::AllowActive).unwrap();
        assert!((op.spectral_radius() - 1.5).abs() < 1e-12);
        assert!(!op.is_passive());
    }

    #[test]
    fn circulant_and_dense_radius_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in [3, 8, 31, 64, 128] {
            // Real symmetric kernel: dense side takes the eigendecomposition path.
            let mut kernel = vec![c(0.0, 0.0); n];
            for k in 0..=n / 2 {
                let v = rng.random_range(-0.1..0.1);
                kernel[k] = c(v, 0.0);
                kernel[(n - k) % n] = c(v, 0.0);
            }
            let op = CouplingOperator::circulant(kernel, Passivity::AllowActive).unwrap();
            let dense = CouplingOperator::dense(n, op.to_dense(), Passivity::AllowActive).unwrap();
            assert!((op.spectral_radius() - dense.spectral_radius()).abs() < 1e-8);
        }
    }

    #[test]
    fn power_iteration_on_complex_circulant() {
        // Transmission with a unique largest modulus, so power iteration converges.
        let n = 24;
        let t: Vec<Complex64> = (0..n)
            .map(|k| Complex64::from_polar(0.3 + 0.5 * (k as f64 / n as f64), 0.7 * k as f64))
            .collect();
        let op = CouplingOperator::from_transmission(&t, Passivity::AllowActive).unwrap();
        let dense = CouplingOperator::dense(n, op.to_dense(), Passivity::AllowActive).unwrap();
        let exact = op.spectral_radius();
        assert!((dense.spectral_radius() - exact).abs() / exact < 1e-6);
    }

    #[test]
    fn power_iteration_reports_non_convergence() {
        // Non-normal involution: Q² = 1, so the norm estimate alternates forever.
        let op = CouplingOperator::dense_real(2, &[1.0, 10.0, 0.0, -1.0], Passivity::AllowActive);
        assert!(matches!(op, Err(CimError::NoConvergence { .. })));
    }

    #[test]
    fn threshold_examples() {
        let units = NormalizedUnits::default();
        assert_eq!(threshold_from_radius(1.0, 1.0, 0.01).unwrap(), 0.0);
        let t = threshold_from_radius(0.5, 1.0, 0.01).unwrap();
        assert!((t - 2f64.ln() / 0.01).abs() < 1e-9);
        // -ln(0.98 * sqrt(0.9)) / 0.01
        let t = threshold_from_radius(0.98, 0.9f64.sqrt(), units.kappa_tilde).unwrap();
        assert!((t - 7.284).abs() / 7.284 < 1e-3);
        assert!(matches!(threshold_from_radius(1.2, 1.0, 0.01), Err(CimError::NoThreshold { .. })));
        assert!(threshold_from_radius(0.9, 1.5, 0.01).is_err());
    }

    #[test]
    fn threshold_decreasing_in_rho_and_r_out() {
        let grid: Vec<f64> = (1..40).map(|k| k as f64 / 40.0).collect();
        for w in grid.windows(2) {
            for &x in &grid {
                assert!(threshold_from_radius(w[1], x, 0.01).unwrap() < threshold_from_radius(w[0], x, 0.01).unwrap());
                assert!(threshold_from_radius(x, w[1], 0.01).unwrap() < threshold_from_radius(x, w[0], 0.01).unwrap());
            }
        }
    }

    #[test]
    fn pixel_budget() {
        let big = PixelBudget { m_x: 1000, m_y: 1000 };
        let r = budget_for(Scheme::Circulant, 1_000_000, big);
        assert!(r.fits);
        assert_eq!(r.capacity, 1_000_000);
        let r = budget_for(Scheme::Dense, 1001, big);
        assert!(!r.fits);
        let op = CouplingOperator::dense_real(112, &vec![0.0; 112 * 112], Passivity::Enforce).unwrap();
        let r = validate_budget(&op, big);
        assert!(r.fits);
        assert_eq!(r.redundancy, 1000);
    }

    #[test]
    fn dimension_mismatch() {
        let op = CouplingOperator::identity(4);
        assert!(matches!(op.apply(&[c(1.0, 0.0); 3]), Err(CimError::Dimension { expected: 4, got: 3 })));
    }

    #[test]
    fn operator_spec_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let kernel: Vec<Complex64> = random_vec(&mut rng, 9).into_iter().map(|z| z * 0.01).collect();
        let op = CouplingOperator::circulant(kernel.clone(), Passivity::Enforce).unwrap();
        let spec = OperatorSpec::from(&op);
        let json = serde_json::to_string(&spec).unwrap();
        let back: OperatorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.build().unwrap().kernel().unwrap(), &kernel[..]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn field(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
            proptest::collection::vec((-5.0..5.0f64, -5.0..5.0f64).prop_map(|(r, i)| Complex64::new(r, i)), n)
        }

        fn kernel_and_fields() -> impl Strategy<Value = (Vec<Complex64>, Vec<Complex64>, Vec<Complex64>)> {
            (2usize..40).prop_flat_map(|n| (field(n), field(n), field(n)))
        }

        proptest! {
            #[test]
            fn circulant_apply_is_linear_and_matches_dense((k, x, y) in kernel_and_fields(), s in -3.0..3.0f64) {
                let op = CouplingOperator::circulant(k, Passivity::AllowActive).unwrap();
                let n = op.n_sites();
                let lhs = op.apply(&x.iter().zip(&y).map(|(a, b)| a * s + b).collect::<Vec<_>>()).unwrap();
                let (ox, oy) = (op.apply(&x).unwrap(), op.apply(&y).unwrap());
                let dense = op.to_dense();
                for i in 0..n {
                    prop_assert!((lhs[i] - (ox[i] * s + oy[i])).norm() < 1e-9);
                    let direct: Complex64 = (0..n).map(|j| dense[i * n + j] * x[j]).sum();
                    prop_assert!((ox[i] - direct).norm() < 1e-9);
                }
            }

            #[test]
            fn real_kernel_preserves_real_fields(n in 2usize..40, seed in any::<u64>()) {
                let k: Vec<Complex64> = (0..n).map(|i| Complex64::new(((seed >> (i % 60)) & 7) as f64 - 3.5, 0.0)).collect();
                let op = CouplingOperator::circulant(k, Passivity::AllowActive).unwrap();
                let x: Vec<Complex64> = (0..n).map(|i| Complex64::new(i as f64 - 1.5, 0.0)).collect();
                prop_assert!(op.apply(&x).unwrap().iter().all(|z| z.im == 0.0));
            }
        }
    }
}
