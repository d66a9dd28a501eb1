//! Degenerate parametric amplification inside the nonlinear medium.
//!
//! One pass through the χ⁽²⁾ crystal is the boundary-value-free ODE pair
//!
//! ```text
//!     dB/dz = -κ̃ A²        dA/dz = κ̃ B A*
//! ```
//!
//! in normalized units (z in units of the crystal length, fields in units of
//! the reference amplitude A₀). Each SLM pixel is integrated independently.
//! The polar form in [`integrate_pass_polar`] exists to cross-check the
//! Cartesian integrator; it is singular when the pump vanishes.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{CimError, Result};

pub const DEFAULT_STEPS: usize = 100;
pub const DEFAULT_KAPPA_TILDE: f64 = 1e-2;

/// Polar integration refuses pump magnitudes below this.
pub const POLAR_PUMP_FLOOR: f64 = 1e-12;

/// Physical constants of the crystal. They only feed the reported κ and
/// never enter the normalized dynamics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Field scale A₀ in V/m.
    pub a0_volts_per_m: f64,
    /// Crystal length L in metres.
    pub length_m: f64,
    /// χ⁽²⁾ in m/V.
    pub chi2: f64,
    /// Signal wavelength in metres.
    pub lambda_s: f64,
    pub n_refr: f64,
}

impl PhysicalConstants {
    /// Crystal and pump values of the reference 532/1064 nm setup.
    pub fn reference() -> Self {
        Self {
            a0_volts_per_m: 6.77e3,
            length_m: 0.1,
            chi2: 1e-11,
            lambda_s: 1064e-9,
            n_refr: 2.0,
        }
    }

    /// κ = 2π χ⁽²⁾ / (λ_s n²), in V⁻¹.
    pub fn kappa(&self) -> f64 {
        2.0 * PI * self.chi2 / (self.lambda_s * self.n_refr * self.n_refr)
    }

    /// κ̃ = κ L A₀ implied by these constants.
    pub fn kappa_tilde(&self) -> f64 {
        self.kappa() * self.length_m * self.a0_volts_per_m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormalizedUnits {
    pub kappa_tilde: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physical: Option<PhysicalConstants>,
}

impl Default for NormalizedUnits {
    fn default() -> Self {
        Self {
            kappa_tilde: DEFAULT_KAPPA_TILDE,
            physical: None,
        }
    }
}

impl NormalizedUnits {
    pub fn new(kappa_tilde: f64) -> Result<Self> {
        let units = Self {
            kappa_tilde,
            physical: None,
        };
        units.validate()?;
        Ok(units)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kappa_tilde.is_finite() && self.kappa_tilde > 0.0) {
            return Err(CimError::Config(format!(
                "kappa_tilde must be positive, got {}",
                self.kappa_tilde
            )));
        }
        Ok(())
    }

    /// Physical κ in V⁻¹, when constants are attached.
    pub fn reported_kappa(&self) -> Option<f64> {
        self.physical.map(|p| p.kappa())
    }
}

/// Signal and pump amplitude at one pixel, in units of A₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SitePair {
    pub signal: Complex64,
    pub pump: Complex64,
}

impl SitePair {
    pub fn new(signal: Complex64, pump: Complex64) -> Self {
        Self { signal, pump }
    }

    pub fn is_finite(&self) -> bool {
        self.signal.is_finite() && self.pump.is_finite()
    }

    /// |A|² + |B|², conserved by the exact flow.
    pub fn photon_flux(&self) -> f64 {
        self.signal.norm_sqr() + self.pump.norm_sqr()
    }

    pub fn to_polar(&self) -> PolarState {
        PolarState {
            u: self.signal.norm(),
            u_p: self.pump.norm(),
            theta: wrap_phase(self.pump.arg() - 2.0 * self.signal.arg()),
        }
    }
}

/// Signal magnitude, pump magnitude and relative phase θ = φ_p − 2φ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolarState {
    pub u: f64,
    pub u_p: f64,
    pub theta: f64,
}

impl PolarState {
    /// Cartesian state with the pump phase pinned to zero.
    pub fn to_cartesian(&self) -> SitePair {
        SitePair {
            signal: Complex64::from_polar(self.u, -self.theta / 2.0),
            pump: Complex64::new(self.u_p, 0.0),
        }
    }
}

/// Reduce an angle to (−π, π].
pub fn wrap_phase(theta: f64) -> f64 {
    let r = (theta + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r + 2.0 * PI
    } else {
        r
    }
}

#[inline]
fn rhs(a: Complex64, b: Complex64, kappa: f64) -> (Complex64, Complex64) {
    (kappa * b * a.conj(), -kappa * a * a)
}

/// Fixed-step RK4 over z ∈ [0, 1]. On failure returns the 1-based step at
/// which a non-finite value first appeared.
#[inline]
pub(crate) fn rk4_cartesian(
    mut a: Complex64,
    mut b: Complex64,
    kappa: f64,
    steps: usize,
) -> std::result::Result<(Complex64, Complex64), usize> {
    let h = 1.0 / steps as f64;
    let half = 0.5 * h;
    let sixth = h / 6.0;
    for step in 1..=steps {
        let (ka1, kb1) = rhs(a, b, kappa);
        let (ka2, kb2) = rhs(a + ka1 * half, b + kb1 * half, kappa);
        let (ka3, kb3) = rhs(a + ka2 * half, b + kb2 * half, kappa);
        let (ka4, kb4) = rhs(a + ka3 * h, b + kb3 * h, kappa);
        a += (ka1 + (ka2 + ka3) * 2.0 + ka4) * sixth;
        b += (kb1 + (kb2 + kb3) * 2.0 + kb4) * sixth;
        if !(a.is_finite() && b.is_finite()) {
            return Err(step);
        }
    }
    Ok((a, b))
}

/// One pass through the medium, z = 0 → 1.
pub fn integrate_pass(state: SitePair, units: &NormalizedUnits, steps: usize) -> Result<SitePair> {
    if steps == 0 {
        return Err(CimError::Config("steps must be at least 1".into()));
    }
    if !state.is_finite() {
        return Err(CimError::IntegrationDiverged { step: 0 });
    }
    rk4_cartesian(state.signal, state.pump, units.kappa_tilde, steps)
        .map(|(signal, pump)| SitePair { signal, pump })
        .map_err(|step| CimError::IntegrationDiverged { step })
}

fn polar_rhs(s: [f64; 3], kappa: f64) -> [f64; 3] {
    let [u, up, theta] = s;
    let (sin, cos) = theta.sin_cos();
    [
        kappa * u * up * cos,
        -kappa * u * u * cos,
        kappa * sin * (u * u - 2.0 * up * up) / up,
    ]
}

/// The same pass integrated in (u, u_p, θ). Cross-validation only.
pub fn integrate_pass_polar(
    state: PolarState,
    units: &NormalizedUnits,
    steps: usize,
) -> Result<PolarState> {
    if steps == 0 {
        return Err(CimError::Config("steps must be at least 1".into()));
    }
    let kappa = units.kappa_tilde;
    let h = 1.0 / steps as f64;
    let mut s = [state.u, state.u_p, state.theta];
    let axpy = |s: [f64; 3], k: [f64; 3], c: f64| [s[0] + c * k[0], s[1] + c * k[1], s[2] + c * k[2]];
    let check = |s: [f64; 3], step: usize| -> Result<()> {
        if s[1] < POLAR_PUMP_FLOOR {
            return Err(CimError::PolarSingularity {
                step,
                pump_magnitude: s[1],
            });
        }
        if s.iter().any(|v| !v.is_finite()) {
            return Err(CimError::IntegrationDiverged { step });
        }
        Ok(())
    };
    check(s, 0)?;
    for step in 1..=steps {
        let k1 = polar_rhs(s, kappa);
        let s2 = axpy(s, k1, 0.5 * h);
        check(s2, step)?;
        let k2 = polar_rhs(s2, kappa);
        let s3 = axpy(s, k2, 0.5 * h);
        check(s3, step)?;
        let k3 = polar_rhs(s3, kappa);
        let s4 = axpy(s, k3, h);
        check(s4, step)?;
        let k4 = polar_rhs(s4, kappa);
        for i in 0..3 {
            s[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        check(s, step)?;
    }
    Ok(PolarState {
        u: s[0],
        u_p: s[1],
        theta: wrap_phase(s[2]),
    })
}
