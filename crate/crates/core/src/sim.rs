//! Stochastic simulator of the experimental cycle.
//!
//! A [`FieldModel`] is the ground truth: a dc field map, an rf field map and a
//! slow drift of the dc gradient. [`simulate_cycle`] turns one
//! [`CycleConfig`] into a [`MeasurementRecord`] by sampling binomial parity
//! counts, including postselection against spontaneous decay for the D5/2
//! sensor state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Geometric, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::physics::{self, Basis, Manifold, ManifoldSpec, PhysicsConstants};

/// Electrode pitch of the default axis (m).
pub const DEFAULT_PITCH: f64 = 200e-6;
/// Number of segments of the default axis.
pub const DEFAULT_SEGMENTS: usize = 32;

/// Piecewise polynomial on a uniformly segmented axis.
///
/// Segment `k` covers `[x_min + k pitch, x_min + (k+1) pitch]` and stores its
/// coefficients in ascending order of the local coordinate `x - x_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PiecewisePolynomial {
    pub x_min: f64,
    pub pitch: f64,
    pub segments: Vec<Vec<f64>>,
}

impl PiecewisePolynomial {
    pub fn constant(value: f64) -> Self {
        Self::linear(value, 0.0)
    }

    /// `offset + slope * x` on the default 32-segment axis.
    pub fn linear(offset: f64, slope: f64) -> Self {
        let segments = (0..DEFAULT_SEGMENTS)
            .map(|k| vec![offset + slope * (k as f64 * DEFAULT_PITCH), slope])
            .collect();
        Self {
            x_min: 0.0,
            pitch: DEFAULT_PITCH,
            segments,
        }
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.pitch * self.segments.len() as f64
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.pitch.is_finite() && self.pitch > 0.0, || {
            format!("segment pitch must be positive, got {}", self.pitch)
        })?;
        ensure(!self.segments.is_empty(), || "field map has no segments".into())?;
        ensure(
            self.segments
                .iter()
                .all(|s| !s.is_empty() && s.iter().all(|c| c.is_finite())),
            || "every segment needs at least one finite coefficient".into(),
        )
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let (min, max) = (self.x_min, self.x_max());
        if !(min..=max).contains(&x) {
            return Err(Error::OutOfDomain { x, min, max });
        }
        let k = (((x - min) / self.pitch).floor() as usize).min(self.segments.len() - 1);
        let t = x - (min + k as f64 * self.pitch);
        Ok(self.segments[k].iter().rev().fold(0.0, |acc, c| acc * t + c))
    }
}

/// Slow drift of the dc field gradient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriftProcess {
    #[default]
    None,
    /// Wiener process with diffusion constant in T^2 m^-2 s^-1.
    RandomWalk { diffusion: f64 },
    /// Mean-reverting process with relaxation rate (1/s) and stationary
    /// standard deviation (T/m).
    OrnsteinUhlenbeck { rate: f64, sigma: f64 },
    /// Deterministic ramp in T m^-1 s^-1.
    LinearRamp { rate: f64 },
}

impl DriftProcess {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            DriftProcess::None => true,
            DriftProcess::RandomWalk { diffusion } => diffusion >= 0.0,
            DriftProcess::OrnsteinUhlenbeck { rate, sigma } => rate > 0.0 && sigma >= 0.0,
            DriftProcess::LinearRamp { rate } => rate.is_finite(),
        };
        ensure(ok, || format!("invalid drift parameters {self:?}"))
    }
}

/// Ground-truth field along the trap axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldModel {
    /// dc field magnitude (T).
    pub b_dc: PiecewisePolynomial,
    /// rf field component perpendicular to the quantizing field (T).
    pub b_rf_perp: PiecewisePolynomial,
    #[serde(default)]
    pub drift: DriftProcess,
    /// Current drift contribution to the dc gradient (T/m).
    #[serde(default)]
    pub gradient_offset: f64,
}

impl FieldModel {
    /// Uniform dc gradient, no rf field and no drift.
    pub fn linear_gradient(gradient: f64) -> Self {
        Self {
            b_dc: PiecewisePolynomial::linear(0.0, gradient),
            b_rf_perp: PiecewisePolynomial::constant(0.0),
            drift: DriftProcess::None,
            gradient_offset: 0.0,
        }
    }

    pub fn with_rf(mut self, b_rf_perp: PiecewisePolynomial) -> Self {
        self.b_rf_perp = b_rf_perp;
        self
    }

    pub fn with_drift(mut self, drift: DriftProcess) -> Self {
        self.drift = drift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.b_dc.validate()?;
        self.b_rf_perp.validate()?;
        self.drift.validate()?;
        // sample each rf segment densely to check non-negativity
        let rf = &self.b_rf_perp;
        for k in 0..rf.segments.len() {
            for s in 0..=16 {
                let x = rf.x_min + (k as f64 + s as f64 / 16.0) * rf.pitch;
                let b = rf.eval(x.min(rf.x_max()))?;
                ensure(b >= 0.0, || format!("rf field negative ({b} T) at x = {x} m"))?;
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let field: FieldModel = serde_json::from_str(text)?;
        field.validate()?;
        Ok(field)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// dc field including the current drift of the gradient.
    pub fn dc_field(&self, x: f64) -> Result<f64> {
        Ok(self.b_dc.eval(x)? + self.gradient_offset * x)
    }

    pub fn rf_field(&self, x: f64) -> Result<f64> {
        self.b_rf_perp.eval(x)
    }

    /// True phase accumulation rate of the sensor state with ions at
    /// `positions = [x1, x2]`: dc Zeeman term plus the differential ac shift,
    /// both taken as the value at `x2` minus the value at `x1`.
    pub fn delta_omega(
        &self,
        positions: [f64; 2],
        manifold: &ManifoldSpec,
        constants: &PhysicsConstants,
    ) -> Result<f64> {
        let [x1, x2] = positions;
        let delta_b = self.dc_field(x2)? - self.dc_field(x1)?;
        let dc = physics::dc_phase_rate(delta_b, manifold.dc_factor(), constants);
        let ac2 = physics::ac_zeeman_shift(self.rf_field(x2)?, manifold, constants)?;
        let ac1 = physics::ac_zeeman_shift(self.rf_field(x1)?, manifold, constants)?;
        Ok(dc + ac2 - ac1)
    }
}

/// Applies the configured drift process over `dt` seconds.
pub fn advance_drift<R: Rng + ?Sized>(field: &FieldModel, dt: f64, rng: &mut R) -> FieldModel {
    let mut next = field.clone();
    if dt <= 0.0 {
        return next;
    }
    match field.drift {
        DriftProcess::None => {}
        DriftProcess::RandomWalk { diffusion } => {
            if diffusion > 0.0 {
                let z: f64 = rng.sample(StandardNormal);
                next.gradient_offset += (diffusion * dt).sqrt() * z;
            }
        }
        DriftProcess::OrnsteinUhlenbeck { rate, sigma } => {
            if sigma > 0.0 {
                let decay = (-rate * dt).exp();
                let z: f64 = rng.sample(StandardNormal);
                next.gradient_offset =
                    field.gradient_offset * decay + sigma * (1.0 - decay * decay).sqrt() * z;
            }
        }
        DriftProcess::LinearRamp { rate } => next.gradient_offset += rate * dt,
    }
    next
}

/// Contrast decay C(T) = C0 exp(-(T / T_coh)^p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContrastModel {
    pub c0: f64,
    pub t_coh: f64,
    pub exponent: f64,
}

impl Default for ContrastModel {
    /// Exponential decay with C(3.0 s) = 0.94.
    fn default() -> Self {
        Self {
            c0: 1.0,
            t_coh: 3.0 / (1.0f64 / 0.94).ln(),
            exponent: 1.0,
        }
    }
}

impl ContrastModel {
    pub fn ideal() -> Self {
        Self {
            c0: 1.0,
            t_coh: f64::INFINITY,
            exponent: 1.0,
        }
    }

    pub fn contrast(&self, t: f64) -> f64 {
        if self.t_coh.is_infinite() {
            return self.c0;
        }
        self.c0 * (-(t / self.t_coh).powf(self.exponent)).exp()
    }

    fn validate(&self) -> Result<()> {
        ensure((0.0..=1.0).contains(&self.c0), || {
            format!("C0 must lie in [0, 1], got {}", self.c0)
        })?;
        ensure(self.t_coh > 0.0, || format!("T_coh must be positive, got {}", self.t_coh))?;
        ensure(self.exponent > 0.0, || {
            format!("decay exponent must be positive, got {}", self.exponent)
        })
    }
}

/// One experimental cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleConfig {
    /// Ion positions (x1, x2) in m.
    pub positions: [f64; 2],
    pub manifold: ManifoldSpec,
    /// Interrogation time T (s).
    pub interrogation_time: f64,
    /// Repetitions in the XX basis (N).
    pub shots_xx: u32,
    /// Repetitions in the XY basis (M).
    pub shots_xy: u32,
    /// Phase added to the second analysis pulse (rad).
    pub analysis_offset: f64,
    /// Shuttling-induced phase offset φ0 (rad). `None` lets a campaign draw it.
    pub phase_offset: Option<f64>,
    pub contrast: ContrastModel,
    /// Dead time per repetition (s).
    pub overhead: f64,
}

impl CycleConfig {
    /// N = M = 50 repetitions, 0.3 s overhead, T = 0.
    pub fn new(positions: [f64; 2], manifold: ManifoldSpec) -> Self {
        Self {
            positions,
            manifold,
            interrogation_time: 0.0,
            shots_xx: 50,
            shots_xy: 50,
            analysis_offset: 0.0,
            phase_offset: None,
            contrast: ContrastModel::default(),
            overhead: 0.3,
        }
    }

    pub fn validate(&self, constants: &PhysicsConstants) -> Result<()> {
        self.manifold.validate(constants)?;
        self.contrast.validate()?;
        let t = self.interrogation_time;
        ensure(t.is_finite() && t >= 0.0, || format!("interrogation time must be >= 0, got {t}"))?;
        ensure(self.overhead.is_finite() && self.overhead >= 0.0, || {
            format!("overhead must be >= 0, got {}", self.overhead)
        })?;
        ensure(self.analysis_offset.is_finite(), || "analysis offset must be finite".into())?;
        ensure(self.positions.iter().all(|x| x.is_finite()), || "positions must be finite".into())
    }

    pub fn shots(&self) -> u64 {
        self.shots_xx as u64 + self.shots_xy as u64
    }

    /// Probability that neither ion decays during the interrogation.
    pub fn survival(&self, constants: &PhysicsConstants) -> f64 {
        match self.manifold.manifold {
            Manifold::S => 1.0,
            Manifold::D => (-2.0 * self.interrogation_time / constants.tau_d).exp(),
        }
    }
}

/// Even-parity counts in the two measurement bases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParityOutcome {
    /// n: even outcomes in the XX basis.
    pub xx_even: u32,
    /// N: accepted XX repetitions.
    pub xx_shots: u32,
    /// m: even outcomes in the XY basis.
    pub xy_even: u32,
    /// M: accepted XY repetitions.
    pub xy_shots: u32,
}

impl ParityOutcome {
    pub fn new(xx_even: u32, xx_shots: u32, xy_even: u32, xy_shots: u32) -> Result<Self> {
        let outcome = Self {
            xx_even,
            xx_shots,
            xy_even,
            xy_shots,
        };
        outcome.validate()?;
        Ok(outcome)
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.xx_even <= self.xx_shots && self.xy_even <= self.xy_shots, || {
            format!("even counts exceed repetitions in {self:?}")
        })
    }

    pub fn is_empty(&self) -> bool {
        self.xx_shots == 0 && self.xy_shots == 0
    }

    pub fn total_shots(&self) -> u32 {
        self.xx_shots + self.xy_shots
    }
}

/// Result of one simulated cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementRecord {
    pub cycle: CycleConfig,
    pub outcome: ParityOutcome,
    /// Wall-clock duration of the cycle (s).
    pub wall_time: f64,
    /// Repetitions attempted, including postselection rejections.
    pub attempts: u64,
    /// Start of the cycle, in s since campaign start.
    pub timestamp: f64,
}

/// Expected duration of a cycle, including the postselection overhead of the
/// D5/2 manifold.
pub fn duration(config: &CycleConfig, constants: &PhysicsConstants) -> f64 {
    config.shots() as f64 * (config.overhead + config.interrogation_time) / config.survival(constants)
}

/// Simulates one experimental cycle.
pub fn simulate_cycle<R: Rng + ?Sized>(
    config: &CycleConfig,
    field: &FieldModel,
    constants: &PhysicsConstants,
    rng: &mut R,
) -> Result<MeasurementRecord> {
    config.validate(constants)?;
    let phase_offset = config.phase_offset.ok_or_else(|| {
        Error::InvalidParameter("cycle has no phase offset; campaigns draw one per position pair".into())
    })?;
    let t = config.interrogation_time;
    let delta_omega = field.delta_omega(config.positions, &config.manifold, constants)?;
    let phi = delta_omega * t + phase_offset + config.analysis_offset;
    let c = config.contrast.contrast(t);

    let p_xx = physics::even_prob(Basis::XX, phi, c);
    let p_xy = physics::even_prob(Basis::XY, phi, c);
    let xx_even = sample_binomial(config.shots_xx, p_xx, rng);
    let xy_even = sample_binomial(config.shots_xy, p_xy, rng);

    let survival = config.survival(constants);
    let mut attempts = config.shots();
    if survival < 1.0 {
        let geometric = Geometric::new(survival)
            .map_err(|e| Error::InvalidParameter(format!("survival probability {survival}: {e}")))?;
        for _ in 0..config.shots() {
            attempts += geometric.sample(rng);
        }
    }

    Ok(MeasurementRecord {
        cycle: *config,
        outcome: ParityOutcome {
            xx_even,
            xx_shots: config.shots_xx,
            xy_even,
            xy_shots: config.shots_xy,
        },
        wall_time: attempts as f64 * (config.overhead + t),
        attempts,
        timestamp: 0.0,
    })
}

fn sample_binomial<R: Rng + ?Sized>(n: u32, p: f64, rng: &mut R) -> u32 {
    if n == 0 {
        return 0;
    }
    // p is clamped to [0, 1], so construction cannot fail
    Binomial::new(n as u64, p).expect("probability in [0, 1]").sample(rng) as u32
}

/// Deterministic random stream `stream` of the campaign seeded with `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
