//! Choice of the next interrogation time by expected Shannon information.
//!
//! With one repetition per basis and a fixed contrast, the probability of each
//! of the four hypothetical outcomes is a trigonometric polynomial of degree
//! two in the accumulated phase. Marginalizing a hypothetical posterior over
//! φ0 then only needs five sums per Δω row, which do not depend on the
//! candidate time, so every candidate costs O(n_ω).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::bayes::{Axis, PosteriorGrid};
use crate::error::{ensure, Result};
use crate::physics::wrap_phase_half_open;

/// Utility of every candidate interrogation time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityProfile {
    /// Candidate interrogation times (s).
    pub candidates: Vec<f64>,
    /// Duration-weighted expected information gain (nats).
    pub utility: Vec<f64>,
    /// Index of the maximizer; ties go to the shorter time.
    pub chosen: usize,
}

impl UtilityProfile {
    pub fn chosen_time(&self) -> f64 {
        self.candidates[self.chosen]
    }
}

/// `{0, T_max / 2^depth, ..., T_max / 2, T_max}`.
pub fn candidate_ladder(t_max: f64, depth: u32) -> Vec<f64> {
    let mut ladder = vec![0.0];
    ladder.extend((0..=depth).rev().map(|k| t_max / 2f64.powi(k as i32)));
    ladder
}

/// Analysis-pulse offset that moves the expected phase to π/4.
pub fn analysis_phase_offset(prior: &PosteriorGrid, t: f64) -> f64 {
    let est = prior.moments();
    wrap_phase_half_open(PI / 4.0 - (est.omega_mean * t + est.phi0_mean))
}

/// Duration-weighted expected information gain about Δω for one repetition
/// per basis at interrogation time `t`.
pub fn expected_utility(
    prior: &PosteriorGrid,
    t: f64,
    c_assumed: f64,
    duration_fn: impl Fn(f64) -> f64,
) -> Result<f64> {
    let designer = Designer::new(prior, c_assumed)?;
    let w = penalty(&duration_fn, t)?;
    Ok(w * designer.gain(t, analysis_phase_offset(prior, t)))
}

/// Unweighted expected information gain at time `t` with analysis offset
/// `offset`.
pub fn expected_information_gain(prior: &PosteriorGrid, t: f64, c_assumed: f64, offset: f64) -> Result<f64> {
    Ok(Designer::new(prior, c_assumed)?.gain(t, offset))
}

/// Utility of every candidate and the maximizer.
pub fn utility_profile(
    prior: &PosteriorGrid,
    candidates: &[f64],
    c_assumed: f64,
    duration_fn: impl Fn(f64) -> f64,
) -> Result<UtilityProfile> {
    ensure(!candidates.is_empty(), || "no candidate interrogation times".into())?;
    ensure(candidates.iter().all(|t| t.is_finite() && *t >= 0.0), || {
        format!("candidate times must be >= 0, got {candidates:?}")
    })?;
    let designer = Designer::new(prior, c_assumed)?;
    let est = prior.moments();
    let mut utility = Vec::with_capacity(candidates.len());
    for &t in candidates {
        let offset = wrap_phase_half_open(PI / 4.0 - (est.omega_mean * t + est.phi0_mean));
        utility.push(penalty(&duration_fn, t)? * designer.gain(t, offset));
    }
    let mut chosen = 0;
    for k in 1..candidates.len() {
        let better = utility[k] > utility[chosen];
        let tie_shorter = utility[k] == utility[chosen] && candidates[k] < candidates[chosen];
        if better || tie_shorter {
            chosen = k;
        }
    }
    Ok(UtilityProfile {
        candidates: candidates.to_vec(),
        utility,
        chosen,
    })
}

/// Interrogation time maximizing [`expected_utility`] over `candidates`.
pub fn select_interrogation_time(
    prior: &PosteriorGrid,
    candidates: &[f64],
    c_assumed: f64,
    duration_fn: impl Fn(f64) -> f64,
) -> Result<f64> {
    Ok(utility_profile(prior, candidates, c_assumed, duration_fn)?.chosen_time())
}

fn penalty(duration_fn: &impl Fn(f64) -> f64, t: f64) -> Result<f64> {
    let d0 = duration_fn(0.0);
    let dt = duration_fn(t);
    ensure(d0 > 0.0 && dt > 0.0 && d0.is_finite() && dt.is_finite(), || {
        format!("durations must be positive, got D(0) = {d0}, D({t}) = {dt}")
    })?;
    Ok(d0 / dt)
}

/// Prior quantities shared by all candidates.
struct Designer<'a> {
    prior: &'a PosteriorGrid,
    contrast: f64,
    /// Σ_j w_ij h_φ {1, cos φ0_j, sin φ0_j, cos 2φ0_j, sin 2φ0_j}
    rows: Vec<[f64; 5]>,
    prior_information: f64,
}

impl<'a> Designer<'a> {
    fn new(prior: &'a PosteriorGrid, contrast: f64) -> Result<Self> {
        ensure(contrast > 0.0 && contrast <= 1.0, || {
            format!("assumed contrast must lie in (0, 1], got {contrast}")
        })?;
        let h = prior.phi0_step();
        let trig: Vec<[f64; 4]> = prior
            .phi0_axis()
            .iter()
            .map(|p| [p.cos(), p.sin(), (2.0 * p).cos(), (2.0 * p).sin()])
            .collect();
        let rows = prior
            .weights()
            .chunks(prior.n_phi0())
            .map(|row| {
                let mut acc = [0.0; 5];
                for (w, t) in row.iter().zip(&trig) {
                    acc[0] += w;
                    acc[1] += w * t[0];
                    acc[2] += w * t[1];
                    acc[3] += w * t[2];
                    acc[4] += w * t[3];
                }
                acc.map(|a| a * h)
            })
            .collect();
        Ok(Self {
            prior,
            contrast,
            rows,
            prior_information: prior.shannon_information(Axis::Omega),
        })
    }

    /// Σ_outcomes p(n, m) [I(posterior marginal) - I(prior marginal)].
    fn gain(&self, t: f64, offset: f64) -> f64 {
        let c = self.contrast;
        let h = self.prior.omega_step();
        let n = self.rows.len();
        // four outcome marginals over Δω, indexed by (s_xx, s_xy) signs
        let mut marginals = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        const SIGNS: [(f64, f64); 4] = [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)];
        for (i, r) in self.rows.iter().enumerate() {
            let alpha = self.prior.omega(i) * t + offset;
            let (sa, ca) = alpha.sin_cos();
            let (s2a, c2a) = (2.0 * alpha).sin_cos();
            let cos1 = ca * r[1] - sa * r[2];
            let sin1 = sa * r[1] + ca * r[2];
            let sin2 = s2a * r[3] + c2a * r[4];
            for (k, (s_xx, s_xy)) in SIGNS.iter().enumerate() {
                // even XX: ½(1 - C cos φ); even XY: ½(1 + C sin φ)
                let q = 0.25 * (r[0] - s_xx * c * cos1 + s_xy * c * sin1 - 0.5 * s_xx * s_xy * c * c * sin2);
                marginals[k][i] = q.max(0.0);
            }
        }
        let mut gain = 0.0;
        for q in &marginals {
            let evidence: f64 = q.iter().sum::<f64>() * h;
            if evidence <= 0.0 {
                continue;
            }
            let information: f64 = q
                .iter()
                .filter(|v| **v > 0.0)
                .map(|v| {
                    let p = v / evidence;
                    p * p.ln()
                })
                .sum::<f64>()
                * h;
            gain += evidence * (information - self.prior_information);
        }
        // entropy differences below this are rounding, not information; a
        // flat φ0 prior, for instance, makes every candidate exactly useless
        if gain.abs() < 1e-12 * (1.0 + self.prior_information.abs()) {
            0.0
        } else {
            gain
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn duration(t: f64) -> f64 {
        100.0 * (0.3 + t)
    }

    #[test]
    fn ladder_shape() {
        let l = candidate_ladder(3.0, 10);
        assert_eq!(l.len(), 12);
        assert_eq!(l[0], 0.0);
        assert_eq!(*l.last().unwrap(), 3.0);
        assert!((l[1] - 3.0 / 1024.0).abs() < 1e-15);
        assert!(l.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn offset_examples() {
        let g = PosteriorGrid::from_fn((-1.0, 1.0), 64, 64, |w, p| {
            (-(w / 0.1).powi(2)).exp() * (-(p / 0.1).powi(2)).exp()
        })
        .unwrap();
        assert!((analysis_phase_offset(&g, 2.0) - PI / 4.0).abs() < 1e-9);
        let shifted = PosteriorGrid::from_fn((TAU - 1.0, TAU + 1.0), 64, 64, |w, p| {
            (-((w - TAU) / 0.1).powi(2)).exp() * (-(p / 0.1).powi(2)).exp()
        })
        .unwrap();
        let est = shifted.moments();
        let delta = analysis_phase_offset(&shifted, 1.0);
        assert!((-PI..PI).contains(&delta));
        let phase = est.omega_mean * 1.0 + est.phi0_mean + delta;
        assert!((wrap_phase_half_open(phase - PI / 4.0)).abs() < 1e-12);
        assert!((delta - PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn zero_time_on_product_prior_is_uninformative() {
        let g = PosteriorGrid::from_fn((-5.0, 5.0), 128, 32, |w, p| {
            (-(w / 2.0).powi(2)).exp() * (1.0 + 0.8 * p.cos())
        })
        .unwrap();
        assert!(expected_utility(&g, 0.0, 0.9, duration).unwrap().abs() < 1e-12);
    }

    #[test]
    fn penalty_halves_utility() {
        let g = PosteriorGrid::uniform_prior((-20.0, 20.0), 256, 32).unwrap();
        for t in [0.01, 0.1, 0.7] {
            let u = expected_utility(&g, t, 0.9, duration).unwrap();
            let doubled = expected_utility(&g, t, 0.9, |s| if s > 0.0 { 2.0 * duration(s) } else { duration(s) }).unwrap();
            assert!((doubled - 0.5 * u).abs() <= 1e-15 * u.abs());
        }
    }

    #[test]
    fn invalid_inputs() {
        let g = PosteriorGrid::uniform_prior((-1.0, 1.0), 8, 8).unwrap();
        assert!(expected_utility(&g, 1.0, 0.0, duration).is_err());
        assert!(expected_utility(&g, 1.0, 0.9, |_| 0.0).is_err());
        assert!(utility_profile(&g, &[], 0.9, duration).is_err());
    }

    #[test]
    fn single_candidate_selected() {
        let g = PosteriorGrid::uniform_prior((-1.0, 1.0), 32, 8).unwrap();
        assert_eq!(select_interrogation_time(&g, &[0.4], 0.9, duration).unwrap(), 0.4);
    }
}
