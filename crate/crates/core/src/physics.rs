//! Closed-form physical relations for the two-ion sensor state.
//!
//! All frequencies are angular (rad/s). Conversion to Hz happens only at the
//! I/O boundary.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Landé factors, Bohr-magneton ratio, D-state lifetime and trap drive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhysicsConstants {
    /// Landé factor of S1/2.
    pub g_s: f64,
    /// Landé factor of D5/2.
    pub g_d: f64,
    /// mu_B / hbar in rad s^-1 T^-1.
    pub mu_b_over_hbar: f64,
    /// D5/2 lifetime per ion (s).
    pub tau_d: f64,
    /// Trap drive angular frequency (rad/s).
    pub omega_rf: f64,
    /// Relative distance |nu - Omega_rf| / Omega_rf below which the ac shift is
    /// treated as resonant.
    pub resonance_tol: f64,
    /// Relative size of the separation denominator, with respect to 5 g_D,
    /// below which it is treated as singular.
    pub denominator_tol: f64,
}

impl Default for PhysicsConstants {
    fn default() -> Self {
        Self {
            g_s: 2.002_256_64,
            g_d: 1.200_334_0,
            mu_b_over_hbar: TAU * 13.996_245e9,
            tau_d: 1.17,
            omega_rf: TAU * 33.0e6,
            resonance_tol: 1e-9,
            denominator_tol: 1e-12,
        }
    }
}

impl PhysicsConstants {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("g_s", self.g_s),
            ("g_d", self.g_d),
            ("mu_b_over_hbar", self.mu_b_over_hbar),
            ("tau_d", self.tau_d),
            ("omega_rf", self.omega_rf),
            ("resonance_tol", self.resonance_tol),
            ("denominator_tol", self.denominator_tol),
        ];
        for (name, value) in fields {
            ensure(value.is_finite() && value > 0.0, || {
                format!("{name} must be finite and positive, got {value}")
            })?;
        }
        Ok(())
    }

    fn check_off_resonance(&self, nu: f64) -> Result<()> {
        if ((nu - self.omega_rf) / self.omega_rf).abs() < self.resonance_tol {
            return Err(Error::Resonance {
                nu,
                omega_rf: self.omega_rf,
            });
        }
        Ok(())
    }

    /// 5 g_D - χ g_S, rejected when too close to zero.
    pub fn separation_denominator(&self, chi: f64) -> Result<f64> {
        let den = 5.0 * self.g_d - chi * self.g_s;
        if den.abs() < self.denominator_tol * 5.0 * self.g_d || !den.is_finite() {
            return Err(Error::SingularSeparation(den));
        }
        Ok(den)
    }
}

/// Electronic manifold hosting the sensor state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manifold {
    S,
    D,
}

/// Zeeman structure of the manifold the sensor state is encoded in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpec {
    pub manifold: Manifold,
    /// Magnetic quantum number difference between the two populated sublevels.
    pub delta_mj: u32,
    pub lande: f64,
    /// Splitting between neighbouring Zeeman sublevels (rad/s).
    pub splitting_nu: f64,
}

impl ManifoldSpec {
    /// S1/2 sensor state (m_j = ±1/2).
    pub fn s(constants: &PhysicsConstants, nu_s: f64) -> Result<Self> {
        Self::new(Manifold::S, constants, nu_s)
    }

    /// D5/2 sensor state (m_j = ±5/2).
    pub fn d(constants: &PhysicsConstants, nu_d: f64) -> Result<Self> {
        Self::new(Manifold::D, constants, nu_d)
    }

    /// D5/2 sensor state whose splitting follows from the S1/2 splitting in the
    /// same quantizing field.
    pub fn d_from_shared_field(constants: &PhysicsConstants, nu_s: f64) -> Result<Self> {
        Self::d(constants, constants.g_d / constants.g_s * nu_s)
    }

    pub fn new(manifold: Manifold, constants: &PhysicsConstants, splitting_nu: f64) -> Result<Self> {
        let (delta_mj, lande) = match manifold {
            Manifold::S => (1, constants.g_s),
            Manifold::D => (5, constants.g_d),
        };
        let spec = Self {
            manifold,
            delta_mj,
            lande,
            splitting_nu,
        };
        spec.validate(constants)?;
        Ok(spec)
    }

    pub fn validate(&self, constants: &PhysicsConstants) -> Result<()> {
        let (delta_mj, lande) = match self.manifold {
            Manifold::S => (1, constants.g_s),
            Manifold::D => (5, constants.g_d),
        };
        ensure(self.delta_mj == delta_mj, || {
            format!(
                "delta_mj = {} inconsistent with manifold {:?} (expected {delta_mj})",
                self.delta_mj, self.manifold
            )
        })?;
        ensure(self.lande == lande, || {
            format!(
                "lande = {} inconsistent with manifold {:?} (expected {lande})",
                self.lande, self.manifold
            )
        })?;
        ensure(self.splitting_nu.is_finite() && self.splitting_nu > 0.0, || {
            format!("splitting_nu must be positive, got {}", self.splitting_nu)
        })?;
        constants.check_off_resonance(self.splitting_nu)
    }

    /// Effective Landé factor of the sensor state's phase rate, Δm_j · g.
    pub fn dc_factor(&self) -> f64 {
        self.delta_mj as f64 * self.lande
    }
}

/// Phase accumulation rate of the sensor state from a dc field difference.
///
/// `lande` is the effective factor of the sensor state (g_S for the S1/2
/// state, 5 g_D for the D5/2 state).
pub fn dc_phase_rate(delta_b: f64, lande: f64, constants: &PhysicsConstants) -> f64 {
    lande * constants.mu_b_over_hbar * delta_b
}

/// ac Zeeman shift between the populated sublevels from the rf field
/// component perpendicular to the quantizing field.
pub fn ac_zeeman_shift(b_rf_perp: f64, spec: &ManifoldSpec, constants: &PhysicsConstants) -> Result<f64> {
    let nu = spec.splitting_nu;
    constants.check_off_resonance(nu)?;
    let rabi = spec.lande * constants.mu_b_over_hbar / 2.0 * b_rf_perp;
    Ok(spec.delta_mj as f64 * rabi * rabi * nu / (nu * nu - constants.omega_rf * constants.omega_rf))
}

/// Ratio of the differential ac Zeeman shifts of the D5/2 and S1/2 sensor
/// states for splittings constant along the trap axis.
pub fn chi_ratio(nu_s: f64, nu_d: f64, constants: &PhysicsConstants) -> Result<f64> {
    ensure(nu_s > 0.0 && nu_d > 0.0, || {
        format!("splittings must be positive, got nu_s = {nu_s}, nu_d = {nu_d}")
    })?;
    constants.check_off_resonance(nu_s)?;
    constants.check_off_resonance(nu_d)?;
    let g_ratio = constants.g_d / constants.g_s;
    let omega2 = constants.omega_rf * constants.omega_rf;
    Ok(5.0 * g_ratio * g_ratio * (nu_d / nu_s) * (nu_s * nu_s - omega2) / (nu_d * nu_d - omega2))
}

/// dc magnetic field difference from the S1/2 and D5/2 phase rates.
pub fn separate_dc(
    delta_omega_s: f64,
    delta_omega_d: f64,
    chi: f64,
    constants: &PhysicsConstants,
) -> Result<f64> {
    let den = constants.separation_denominator(chi)?;
    Ok((delta_omega_d - chi * delta_omega_s) / (constants.mu_b_over_hbar * den))
}

/// Differential ac Zeeman shift of the S1/2 sensor state.
pub fn separate_ac(
    delta_omega_s: f64,
    delta_omega_d: f64,
    chi: f64,
    constants: &PhysicsConstants,
) -> Result<f64> {
    let den = constants.separation_denominator(chi)?;
    // (5 g_D Δω_S - g_S Δω_D) / den, equal to Δω_S - g_S (Δω_D - χ Δω_S) / den.
    // The dc terms cancel in the numerator, so it is formed with Kahan's
    // fused-multiply-add determinant, and the rounding of 5 g_D is carried.
    let five_gd = 5.0 * constants.g_d;
    let five_gd_lo = 5f64.mul_add(constants.g_d, -five_gd);
    let w = constants.g_s * delta_omega_d;
    let e = (-constants.g_s).mul_add(delta_omega_d, w);
    let f = five_gd.mul_add(delta_omega_s, -w);
    Ok((f + e + five_gd_lo * delta_omega_s) / den)
}

/// Measurement basis of the parity readout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    XX,
    XY,
}

/// Relative phase and contrast of the sensor state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorPhaseState {
    phi: f64,
    contrast: f64,
}

impl SensorPhaseState {
    pub fn new(phi: f64, contrast: f64) -> Result<Self> {
        ensure(phi.is_finite(), || format!("phase must be finite, got {phi}"))?;
        ensure((0.0..=1.0).contains(&contrast), || {
            format!("contrast must lie in [0, 1], got {contrast}")
        })?;
        Ok(Self { phi, contrast })
    }

    /// Unwrapped phase.
    pub fn phi(&self) -> f64 {
        self.phi
    }

    pub fn contrast(&self) -> f64 {
        self.contrast
    }

    /// Phase reduced to (-π, π].
    pub fn wrapped_phi(&self) -> f64 {
        wrap_phase(self.phi)
    }
}

/// Probability of projecting onto an even spin configuration.
pub fn parity_even_prob(basis: Basis, state: &SensorPhaseState) -> f64 {
    even_prob(basis, state.phi, state.contrast)
}

pub(crate) fn even_prob(basis: Basis, phi: f64, contrast: f64) -> f64 {
    let p = match basis {
        Basis::XX => 0.5 * (1.0 - contrast * phi.cos()),
        Basis::XY => 0.5 * (1.0 + contrast * phi.sin()),
    };
    p.clamp(0.0, 1.0)
}

/// Reduces a phase to (-π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let r = phi.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Reduces a phase to [-π, π).
pub fn wrap_phase_half_open(phi: f64) -> f64 {
    let r = (phi + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        -PI
    } else {
        r
    }
}

pub fn hz_to_angular(hz: f64) -> f64 {
    TAU * hz
}

pub fn angular_to_hz(omega: f64) -> f64 {
    omega / TAU
}
