//! Measurement campaigns: incremental phase unwrapping, the adaptive Bayesian
//! loop, the alternating S/D campaign and sensitivity accounting.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bayes::{FrequencyEstimate, PosteriorGrid};
use crate::design::{analysis_phase_offset, candidate_ladder, utility_profile};
use crate::error::{ensure, Error, Result};
use crate::mle::mle_fit;
use crate::physics::{self, PhysicsConstants};
use crate::sim::{advance_drift, duration, simulate_cycle, CycleConfig, FieldModel, MeasurementRecord};

/// Δω cells of the fresh grid used for per-measurement sensitivities.
const SENSITIVITY_CELLS: usize = 512;

/// Frequency uncertainty times the square root of the time spent.
pub fn sensitivity(omega_err: f64, total_time: f64) -> Result<f64> {
    ensure(total_time > 0.0, || format!("total time must be positive, got {total_time}"))?;
    Ok(omega_err * total_time.sqrt())
}

/// Projection-noise limit 1/√T_max (rad s^-1 Hz^-1/2).
pub fn standard_quantum_limit(t_max: f64) -> f64 {
    1.0 / t_max.sqrt()
}

/// Output of a campaign.
#[derive(Debug, Clone, Serialize)]
pub struct CampaignResult {
    pub records: Vec<MeasurementRecord>,
    /// Estimate after each cycle.
    pub estimate_history: Vec<FrequencyEstimate>,
    pub final_estimate: FrequencyEstimate,
    /// `final_estimate.omega_err * sqrt(total_wall_time)`.
    pub sensitivity: f64,
    pub total_wall_time: f64,
    /// Whether memory-loss broadening preceded the update of each cycle.
    pub broadened: Vec<bool>,
    /// Single-measurement sensitivity of each cycle at T_max.
    pub measurement_sensitivity: Vec<Option<f64>>,
    #[serde(skip)]
    pub posterior: Option<PosteriorGrid>,
}

impl CampaignResult {
    fn new(
        records: Vec<MeasurementRecord>,
        estimate_history: Vec<FrequencyEstimate>,
        broadened: Vec<bool>,
        measurement_sensitivity: Vec<Option<f64>>,
        posterior: Option<PosteriorGrid>,
    ) -> Result<Self> {
        let final_estimate = *estimate_history
            .last()
            .ok_or_else(|| Error::InvalidParameter("campaign recorded no cycles".into()))?;
        let total_wall_time: f64 = records.iter().map(|r| r.wall_time).sum();
        Ok(Self {
            sensitivity: sensitivity(final_estimate.omega_err, total_wall_time)?,
            records,
            estimate_history,
            final_estimate,
            total_wall_time,
            broadened,
            measurement_sensitivity,
            posterior,
        })
    }

    /// Index of the first cycle run at `t_max`.
    pub fn capture_cycle(&self, t_max: f64) -> Option<usize> {
        self.records.iter().position(|r| r.cycle.interrogation_time >= t_max)
    }

    /// Wall time elapsed before the first cycle at `t_max` started.
    pub fn capture_wall_time(&self, t_max: f64) -> Option<f64> {
        self.capture_cycle(t_max).map(|k| self.records[k].timestamp)
    }

    /// Median single-measurement sensitivity over the T_max cycles.
    pub fn tracking_sensitivity(&self) -> Option<f64> {
        let mut values: Vec<f64> = self.measurement_sensitivity.iter().flatten().copied().collect();
        median(&mut values)
    }
}

pub(crate) fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

fn draw_phase_offset<R: Rng + ?Sized>(config: &CycleConfig, rng: &mut R) -> CycleConfig {
    let mut config = *config;
    if config.phase_offset.is_none() {
        config.phase_offset = Some(rng.random_range(-PI..PI));
    }
    config
}

/// Straight-line fit φ = Δω T + φ0 to unwrapped phases.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearPhaseFit {
    pub omega: f64,
    pub omega_err: f64,
    pub phi0: f64,
    pub phi0_err: f64,
    pub unwrapped: Vec<f64>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct IncrementalResult {
    pub campaign: CampaignResult,
    pub fit: LinearPhaseFit,
    /// Some residual reached π: the schedule is too coarse for the frequency.
    pub unwrap_failed: bool,
}

/// `0, step, 2 step, ...` up to and including `t_max`.
pub fn incremental_schedule(t_max: f64, step: f64) -> Vec<f64> {
    let n = (t_max / step - 1e-9).ceil() as usize;
    let mut schedule: Vec<f64> = (0..n).map(|k| k as f64 * step).collect();
    schedule.push(t_max);
    schedule
}

/// Weighted least squares on (T, phase, variance) triples.
fn weighted_line(points: &[(f64, f64, f64)]) -> Option<(f64, f64, f64, f64)> {
    let (mut s, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(t, y, var) in points {
        let w = 1.0 / var;
        s += w;
        sx += w * t;
        sy += w * y;
        sxx += w * t * t;
        sxy += w * t * y;
    }
    let det = s * sxx - sx * sx;
    if !det.is_finite() || det <= 1e-12 * s * sxx {
        return None;
    }
    let slope = (s * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Some((slope, (s / det).sqrt(), intercept, (sxx / det).sqrt()))
}

/// Sequential unwrapping of phases measured modulo 2π.
#[derive(Debug, Clone, Default)]
pub struct PhaseUnwrapper {
    points: Vec<(f64, f64, f64)>,
    line: Option<(f64, f64, f64, f64)>,
}

impl PhaseUnwrapper {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shifts `phase` by a multiple of 2π to lie within π of the current
    /// prediction, then refits. Returns the unwrapped phase.
    pub fn push(&mut self, t: f64, phase: f64, variance: f64) -> f64 {
        let predicted = match (self.line, self.points.first()) {
            (Some((omega, _, phi0, _)), _) => omega * t + phi0,
            // one point so far: assume no accumulation
            (None, Some(&(_, first, _))) => first,
            (None, None) => phase,
        };
        let unwrapped = phase + TAU * ((predicted - phase) / TAU).round();
        self.points.push((t, unwrapped, variance.max(1e-12)));
        self.line = weighted_line(&self.points).or(self.line);
        unwrapped
    }

    /// Current fit as (Δω, σ, φ0, σ), once two distinct times are in.
    pub fn line(&self) -> Option<(f64, f64, f64, f64)> {
        self.line
    }

    /// Final fit and whether any residual reached π.
    pub fn finish(self) -> Result<(LinearPhaseFit, bool)> {
        let (omega, omega_err, phi0, phi0_err) = self.line.ok_or(Error::Underdetermined(self.points.len()))?;
        let residuals: Vec<f64> = self.points.iter().map(|&(t, y, _)| y - (omega * t + phi0)).collect();
        let failed = residuals.iter().any(|r| r.abs() >= PI);
        Ok((
            LinearPhaseFit {
                omega,
                omega_err,
                phi0,
                phi0_err,
                unwrapped: self.points.iter().map(|p| p.1).collect(),
                residuals,
            },
            failed,
        ))
    }
}

/// Runs the schedule, unwraps each fitted phase against the running linear
/// fit and refits after every point. Per-point variances are the squared
/// half-widths of the MLE phase intervals.
pub fn incremental_campaign<R: Rng + ?Sized>(
    schedule: &[f64],
    config: &CycleConfig,
    field: &FieldModel,
    constants: &PhysicsConstants,
    rng: &mut R,
) -> Result<IncrementalResult> {
    ensure(schedule.iter().all(|t| t.is_finite() && *t >= 0.0), || {
        format!("schedule times must be >= 0, got {schedule:?}")
    })?;
    ensure(schedule.windows(2).all(|w| w[0] <= w[1]), || "schedule must be nondecreasing".into())?;
    let distinct = schedule.windows(2).filter(|w| w[0] < w[1]).count() + usize::from(!schedule.is_empty());
    if distinct < 2 {
        return Err(Error::Underdetermined(schedule.len()));
    }
    let config = draw_phase_offset(config, rng);
    let mut field = field.clone();
    let mut clock = 0.0;
    let mut records = Vec::with_capacity(schedule.len());
    let mut history = Vec::with_capacity(schedule.len());
    let mut unwrapper = PhaseUnwrapper::new();

    for (k, &t) in schedule.iter().enumerate() {
        let cycle = CycleConfig {
            interrogation_time: t,
            ..config
        };
        let mut record = simulate_cycle(&cycle, &field, constants, rng).map_err(|e| e.at_cycle(k))?;
        record.timestamp = clock;
        clock += record.wall_time;
        field = advance_drift(&field, record.wall_time, rng);

        let estimate = mle_fit(&record.outcome).map_err(|e| e.at_cycle(k))?;
        let variance = estimate.phi_half_width().min(PI).powi(2);
        let unwrapped = unwrapper.push(t, estimate.phi_hat - cycle.analysis_offset, variance);
        history.push(match unwrapper.line() {
            Some((omega, omega_err, phi0, phi0_err)) => FrequencyEstimate {
                omega_mean: omega,
                omega_err,
                phi0_mean: physics::wrap_phase_half_open(phi0),
                phi0_err,
            },
            None => FrequencyEstimate {
                omega_mean: 0.0,
                omega_err: f64::INFINITY,
                phi0_mean: physics::wrap_phase_half_open(unwrapped),
                phi0_err: variance.sqrt(),
            },
        });
        records.push(record);
    }

    let (fit, unwrap_failed) = unwrapper.finish()?;
    let n = records.len();
    Ok(IncrementalResult {
        campaign: CampaignResult::new(records, history, vec![false; n], vec![None; n], None)?,
        fit,
        unwrap_failed,
    })
}

/// Parameters of the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveSettings {
    /// Longest interrogation time (s).
    pub t_max: f64,
    pub n_cycles: usize,
    /// Candidates are 0 and T_max / 2^k for k = 0..=ladder_depth.
    pub ladder_depth: u32,
    /// Relative growth of the Δω posterior width applied before every
    /// update at T_max.
    pub memory_loss: f64,
    /// Contrast assumed by the designer before any cycle has been fitted.
    pub default_contrast: f64,
    /// Number of recent MLE contrasts averaged for the designer.
    pub contrast_window: usize,
}

impl Default for AdaptiveSettings {
    fn default() -> Self {
        Self {
            t_max: 3.0,
            n_cycles: 60,
            ladder_depth: 10,
            memory_loss: 0.05,
            default_contrast: 0.9,
            contrast_window: 5,
        }
    }
}

impl AdaptiveSettings {
    pub fn validate(&self) -> Result<()> {
        ensure(self.t_max > 0.0 && self.t_max.is_finite(), || {
            format!("T_max must be positive, got {}", self.t_max)
        })?;
        ensure(self.n_cycles >= 1, || "at least one cycle is needed".into())?;
        ensure(self.memory_loss >= 0.0, || {
            format!("memory loss must be >= 0, got {}", self.memory_loss)
        })?;
        ensure(self.default_contrast > 0.0 && self.default_contrast <= 1.0, || {
            format!("default contrast must lie in (0, 1], got {}", self.default_contrast)
        })?;
        ensure(self.contrast_window >= 1, || "contrast window must be >= 1".into())
    }

    /// Kernel width, in units of the current Δω standard deviation, that
    /// grows the width by `memory_loss`.
    pub fn broadening_fraction(&self) -> f64 {
        ((1.0 + self.memory_loss).powi(2) - 1.0).sqrt()
    }
}

/// One adaptive loop, stepped a cycle at a time.
pub struct AdaptiveRunner {
    settings: AdaptiveSettings,
    config: CycleConfig,
    constants: PhysicsConstants,
    candidates: Vec<f64>,
    posterior: PosteriorGrid,
    contrasts: VecDeque<f64>,
    clock: f64,
    records: Vec<MeasurementRecord>,
    history: Vec<FrequencyEstimate>,
    broadened: Vec<bool>,
    measurement_sensitivity: Vec<Option<f64>>,
}

impl AdaptiveRunner {
    /// Draws φ0 from `rng` when `config` does not fix it.
    pub fn new<R: Rng + ?Sized>(
        settings: AdaptiveSettings,
        prior: PosteriorGrid,
        config: &CycleConfig,
        constants: &PhysicsConstants,
        rng: &mut R,
    ) -> Result<Self> {
        settings.validate()?;
        constants.validate()?;
        config.validate(constants)?;
        Ok(Self {
            candidates: candidate_ladder(settings.t_max, settings.ladder_depth),
            settings,
            config: draw_phase_offset(config, rng),
            constants: *constants,
            posterior: prior,
            contrasts: VecDeque::new(),
            clock: 0.0,
            records: Vec::new(),
            history: Vec::new(),
            broadened: Vec::new(),
            measurement_sensitivity: Vec::new(),
        })
    }

    pub fn posterior(&self) -> &PosteriorGrid {
        &self.posterior
    }

    pub fn records(&self) -> &[MeasurementRecord] {
        &self.records
    }

    fn assumed_contrast(&self) -> f64 {
        if self.contrasts.is_empty() {
            return self.settings.default_contrast;
        }
        let mean = self.contrasts.iter().sum::<f64>() / self.contrasts.len() as f64;
        mean.clamp(0.05, 1.0)
    }

    /// Selects T, runs one cycle on `field` and updates the posterior.
    /// Returns the cycle's wall time.
    pub fn step<R: Rng + ?Sized>(&mut self, field: &FieldModel, rng: &mut R) -> Result<f64> {
        let k = self.records.len();
        let config = self.config;
        let constants = self.constants;
        let profile = utility_profile(&self.posterior, &self.candidates, self.assumed_contrast(), |t| {
            duration(
                &CycleConfig {
                    interrogation_time: t,
                    ..config
                },
                &constants,
            )
        })
        .map_err(|e| e.at_cycle(k))?;
        let t = profile.chosen_time();
        let offset = analysis_phase_offset(&self.posterior, t);
        let at_t_max = t >= self.settings.t_max;
        if at_t_max {
            self.posterior = self
                .posterior
                .broaden(self.settings.broadening_fraction())
                .map_err(|e| e.at_cycle(k))?;
        }
        let cycle = CycleConfig {
            interrogation_time: t,
            analysis_offset: offset,
            ..config
        };
        let mut record = simulate_cycle(&cycle, field, &self.constants, rng).map_err(|e| e.at_cycle(k))?;
        record.timestamp = self.clock;
        self.clock += record.wall_time;

        let single = if at_t_max {
            Some(measurement_sensitivity(&self.posterior, &record).map_err(|e| e.at_cycle(k))?)
        } else {
            None
        };
        let update = self
            .posterior
            .update(&record.outcome, t, offset)
            .map_err(|e| e.at_cycle(k))?;
        self.posterior = update.posterior;
        if let Ok(fit) = mle_fit(&record.outcome) {
            self.contrasts.push_back(fit.c_hat);
            if self.contrasts.len() > self.settings.contrast_window {
                self.contrasts.pop_front();
            }
        }

        self.history.push(self.posterior.moments());
        self.broadened.push(at_t_max);
        self.measurement_sensitivity.push(single);
        let wall_time = record.wall_time;
        self.records.push(record);
        Ok(wall_time)
    }

    pub fn finish(self) -> Result<CampaignResult> {
        CampaignResult::new(
            self.records,
            self.history,
            self.broadened,
            self.measurement_sensitivity,
            Some(self.posterior),
        )
    }
}

/// Sensitivity of one measurement given only the prior knowledge of φ0:
/// the cycle's outcome updates a Δω-uniform grid spanning one period 2π/T
/// around the prior mean, and the resulting width is scaled by the square
/// root of the cycle's wall time.
pub fn measurement_sensitivity(prior: &PosteriorGrid, record: &MeasurementRecord) -> Result<f64> {
    let t = record.cycle.interrogation_time;
    ensure(t > 0.0, || "single-measurement sensitivity needs T > 0".into())?;
    let center = prior.moments().omega_mean;
    let range = (center - PI / t, center + PI / t);
    let fresh = PosteriorGrid::with_phi0_marginal(range, SENSITIVITY_CELLS, &prior.phi0_marginal())?;
    let posterior = fresh
        .update(&record.outcome, t, record.cycle.analysis_offset)?
        .posterior;
    sensitivity(posterior.moments().omega_err, record.wall_time)
}

/// Adaptive campaign on one position pair.
pub fn adaptive_campaign<R: Rng + ?Sized>(
    settings: &AdaptiveSettings,
    prior: PosteriorGrid,
    config: &CycleConfig,
    field: &FieldModel,
    constants: &PhysicsConstants,
    rng: &mut R,
) -> Result<CampaignResult> {
    let mut runner = AdaptiveRunner::new(*settings, prior, config, constants, rng)?;
    let mut field = field.clone();
    for _ in 0..settings.n_cycles {
        let wall_time = runner.step(&field, rng)?;
        field = advance_drift(&field, wall_time, rng);
    }
    runner.finish()
}

/// dc field difference and S-state ac shift inferred from both manifolds.
#[derive(Debug, Clone, Serialize)]
pub struct SeparationResult {
    /// T.
    pub delta_b: f64,
    pub delta_b_err: f64,
    /// rad/s.
    pub delta_omega_ac_s: f64,
    pub delta_omega_ac_s_err: f64,
    pub chi_used: f64,
    pub s: CampaignResult,
    pub d: CampaignResult,
}

/// Separated quantities with first-order errors, χ taken as exact.
pub fn propagate_separation(
    s: FrequencyEstimate,
    d: FrequencyEstimate,
    chi: f64,
    constants: &PhysicsConstants,
) -> Result<[(f64, f64); 2]> {
    let den = constants.separation_denominator(chi)?;
    let delta_b = physics::separate_dc(s.omega_mean, d.omega_mean, chi, constants)?;
    let ac = physics::separate_ac(s.omega_mean, d.omega_mean, chi, constants)?;
    let mu = constants.mu_b_over_hbar;
    let (db_ds, db_dd) = (-chi / (mu * den), 1.0 / (mu * den));
    let (dac_ds, dac_dd) = (1.0 + constants.g_s * chi / den, -constants.g_s / den);
    let err = |a: f64, b: f64| (a * s.omega_err).hypot(b * d.omega_err);
    Ok([(delta_b, err(db_ds, db_dd)), (ac, err(dac_ds, dac_dd))])
}

/// Alternates S and D adaptive cycles with independent posteriors on the
/// same drifting field. `n_cycles` counts cycle pairs.
#[allow(clippy::too_many_arguments)]
pub fn dual_manifold_campaign<R: Rng + ?Sized>(
    n_cycles: usize,
    settings: [&AdaptiveSettings; 2],
    priors: [PosteriorGrid; 2],
    configs: [&CycleConfig; 2],
    field: &FieldModel,
    constants: &PhysicsConstants,
    rng: &mut R,
) -> Result<SeparationResult> {
    let [config_s, config_d] = configs;
    ensure(config_s.positions == config_d.positions, || {
        "S and D cycles must use identical positions".into()
    })?;
    ensure(n_cycles >= 1, || "at least one cycle is needed".into())?;
    let chi = physics::chi_ratio(config_s.manifold.splitting_nu, config_d.manifold.splitting_nu, constants)?;
    constants.separation_denominator(chi)?;
    let [prior_s, prior_d] = priors;
    let mut s = AdaptiveRunner::new(*settings[0], prior_s, config_s, constants, rng)?;
    let mut d = AdaptiveRunner::new(*settings[1], prior_d, config_d, constants, rng)?;
    let mut field = field.clone();
    for _ in 0..n_cycles {
        for runner in [&mut s, &mut d] {
            let wall_time = runner.step(&field, rng)?;
            field = advance_drift(&field, wall_time, rng);
        }
    }
    let (s, d) = (s.finish()?, d.finish()?);
    let [(delta_b, delta_b_err), (ac, ac_err)] =
        propagate_separation(s.final_estimate, d.final_estimate, chi, constants)?;
    Ok(SeparationResult {
        delta_b,
        delta_b_err,
        delta_omega_ac_s: ac,
        delta_omega_ac_s_err: ac_err,
        chi_used: chi,
        s,
        d,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::physics::{hz_to_angular, ManifoldSpec};
    use crate::sim::{stream_rng, ContrastModel};

    fn constants() -> PhysicsConstants {
        PhysicsConstants::default()
    }

    fn s_config(c: &PhysicsConstants) -> CycleConfig {
        let spec = ManifoldSpec::s(c, hz_to_angular(10.4e6)).unwrap();
        CycleConfig::new([3.1e-3, 3.3e-3], spec)
    }

    /// Gradient giving Δω over the 200 µm separation for the S state.
    fn field_for(omega: f64, c: &PhysicsConstants) -> FieldModel {
        FieldModel::linear_gradient(omega / (c.g_s * c.mu_b_over_hbar * 200e-6))
    }

    #[test]
    fn sensitivity_arithmetic() {
        assert_eq!(sensitivity(1.0, 4.0).unwrap(), 2.0);
        assert_eq!(sensitivity(0.5, 4.0).unwrap(), 1.0);
        assert!(sensitivity(1.0, 0.0).is_err());
        assert!((standard_quantum_limit(3.0) - hz_to_angular(0.0919)).abs() < 1e-3);
    }

    #[test]
    fn schedule_ends_at_t_max() {
        let s = incremental_schedule(1.0, 0.3);
        assert_eq!(s, vec![0.0, 0.3, 0.6, 0.8999999999999999, 1.0]);
        assert_eq!(incremental_schedule(1.0, 0.5), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_point_is_underdetermined() {
        let c = constants();
        let mut rng = stream_rng(1, 0);
        let err = incremental_campaign(&[0.1], &s_config(&c), &field_for(1.0, &c), &c, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Underdetermined(1)));
        let err = incremental_campaign(&[0.1, 0.1], &s_config(&c), &field_for(1.0, &c), &c, &mut rng).unwrap_err();
        assert!(matches!(err, Error::Underdetermined(2)));
    }

    #[test]
    fn noiseless_incremental_recovers_frequency() {
        let c = constants();
        let omega = hz_to_angular(10.0);
        let mut config = s_config(&c);
        config.shots_xx = 10_000;
        config.shots_xy = 10_000;
        config.contrast = ContrastModel::ideal();
        let schedule: Vec<f64> = (0..=75).map(|k| 0.02 * k as f64).collect();
        let mut rng = stream_rng(7, 0);
        let result = incremental_campaign(&schedule, &config, &field_for(omega, &c), &c, &mut rng).unwrap();
        assert!(!result.unwrap_failed);
        assert!(((result.fit.omega - omega) / omega).abs() < 1e-4, "{}", result.fit.omega);
        assert_eq!(result.campaign.records.len(), schedule.len());
        assert_eq!(result.campaign.estimate_history.len(), schedule.len());
    }

    #[test]
    fn inconsistent_unwrap_is_flagged() {
        // two precise points in the middle pull the line away from the
        // imprecise first point after the fact
        let omega = 20.0;
        let mut u = PhaseUnwrapper::new();
        for (t, var) in [(0.0, 1.0), (0.59, 1e-3), (0.64, 1e-3), (0.85, 1.0)] {
            u.push(t, physics::wrap_phase(omega * t), var);
        }
        let (fit, failed) = u.finish().unwrap();
        assert!(failed, "{:?}", fit.residuals);
        assert!(fit.residuals.iter().any(|r| r.abs() >= PI));
    }

    #[test]
    fn consistent_unwrap_is_not_flagged() {
        let omega = 40.0;
        let mut u = PhaseUnwrapper::new();
        for k in 0..40 {
            let t = 0.025 * k as f64;
            u.push(t, physics::wrap_phase(omega * t + 0.4), 1e-2);
        }
        let (fit, failed) = u.finish().unwrap();
        assert!(!failed);
        assert!((fit.omega - omega).abs() < 1e-9);
        assert!((fit.phi0 - 0.4).abs() < 1e-9);
    }

    #[test]
    fn one_adaptive_cycle_matches_single_update() {
        let c = constants();
        let prior = PosteriorGrid::uniform_prior((hz_to_angular(3.0), hz_to_angular(7.0)), 256, 32).unwrap();
        let settings = AdaptiveSettings {
            n_cycles: 1,
            ..AdaptiveSettings::default()
        };
        let mut rng = stream_rng(11, 0);
        let field = field_for(hz_to_angular(5.0), &c);
        let result = adaptive_campaign(&settings, prior.clone(), &s_config(&c), &field, &c, &mut rng).unwrap();
        assert_eq!(result.records.len(), 1);
        let r = &result.records[0];
        let direct = prior
            .update(&r.outcome, r.cycle.interrogation_time, r.cycle.analysis_offset)
            .unwrap()
            .posterior
            .moments();
        assert_eq!(result.final_estimate, direct);
        assert_eq!(
            result.sensitivity,
            direct.omega_err * r.wall_time.sqrt()
        );
    }

    #[test]
    fn separation_errors_match_finite_differences() {
        let c = constants();
        let chi = 1.0062;
        let s = FrequencyEstimate {
            omega_mean: 3.1,
            omega_err: 0.02,
            phi0_mean: 0.0,
            phi0_err: 0.1,
        };
        let d = FrequencyEstimate {
            omega_mean: 9.0,
            omega_err: 0.05,
            ..s
        };
        let [(b, b_err), (ac, ac_err)] = propagate_separation(s, d, chi, &c).unwrap();
        let h = 1e-4;
        let jac = |f: &dyn Fn(f64, f64) -> f64| {
            let ds = (f(s.omega_mean + h, d.omega_mean) - f(s.omega_mean - h, d.omega_mean)) / (2.0 * h);
            let dd = (f(s.omega_mean, d.omega_mean + h) - f(s.omega_mean, d.omega_mean - h)) / (2.0 * h);
            (ds * s.omega_err).hypot(dd * d.omega_err)
        };
        let fd_b = jac(&|x, y| physics::separate_dc(x, y, chi, &c).unwrap());
        let fd_ac = jac(&|x, y| physics::separate_ac(x, y, chi, &c).unwrap());
        assert!(((b_err - fd_b) / fd_b).abs() < 1e-6);
        assert!(((ac_err - fd_ac) / fd_ac).abs() < 1e-6);
        assert_eq!(b, physics::separate_dc(3.1, 9.0, chi, &c).unwrap());
        assert_eq!(ac, physics::separate_ac(3.1, 9.0, chi, &c).unwrap());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&mut [4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&mut []), None);
    }
}
