//! Maximum-likelihood phase and contrast from a single parity outcome.
//!
//! The two bases give independent binomial counts whose even-parity
//! probabilities are affine in `(C cos φ, C sin φ)`. The maximizer therefore
//! follows from the observed frequencies whenever they fall inside the unit
//! disk; otherwise it lies on the `C = 1` circle and is found by a grid search
//! over φ followed by golden-section refinement. Confidence intervals come
//! from the likelihood ratio `2 (ln L_max - ln L) <= 1`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{Error, Result};
use crate::physics::wrap_phase;
use crate::sim::ParityOutcome;

const BOUNDARY_GRID: usize = 256;
const CI_SCAN_STEPS: usize = 512;
const BISECTION_STEPS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseEstimate {
    /// Phase in (-π, π].
    pub phi_hat: f64,
    pub c_hat: f64,
    /// 68.3% interval for φ, expressed around `phi_hat` (may extend past ±π).
    pub phi_ci: (f64, f64),
    pub c_ci: (f64, f64),
    /// The maximizer sits on the C = 1 boundary; the contrast interval is one-sided.
    pub on_boundary: bool,
}

impl PhaseEstimate {
    /// Half of the φ interval width.
    pub fn phi_half_width(&self) -> f64 {
        0.5 * (self.phi_ci.1 - self.phi_ci.0)
    }

    /// Whether the φ interval spans the full circle.
    pub fn phi_unidentified(&self) -> bool {
        self.phi_half_width() >= PI
    }

    /// Wrap-aware membership test for the φ interval.
    pub fn phi_ci_contains(&self, phi: f64) -> bool {
        if self.phi_unidentified() {
            return true;
        }
        let d = wrap_phase(phi - self.phi_hat);
        d >= self.phi_ci.0 - self.phi_hat && d <= self.phi_ci.1 - self.phi_hat
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn binomial_log_mass(k: u32, n: u32, p_even: f64, p_odd: f64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    ln_binomial(n as u64, k as u64) + xlogy(k as f64, p_even) + xlogy((n - k) as f64, p_odd)
}

/// Log of the two-basis binomial likelihood. May be `-inf`.
pub fn log_likelihood(outcome: &ParityOutcome, phi: f64, c: f64) -> f64 {
    let (cos, sin) = (c * phi.cos(), c * phi.sin());
    binomial_log_mass(outcome.xx_even, outcome.xx_shots, 0.5 * (1.0 - cos), 0.5 * (1.0 + cos))
        + binomial_log_mass(outcome.xy_even, outcome.xy_shots, 0.5 * (1.0 + sin), 0.5 * (1.0 - sin))
}

/// Probability of the outcome given phase and contrast.
pub fn likelihood(outcome: &ParityOutcome, phi: f64, c: f64) -> f64 {
    log_likelihood(outcome, phi, c).exp()
}

/// Maximum-likelihood estimate of (φ, C) with likelihood-ratio intervals.
pub fn mle_fit(outcome: &ParityOutcome) -> Result<PhaseEstimate> {
    outcome.validate()?;
    if outcome.is_empty() {
        return Err(Error::EmptyOutcome);
    }
    let (phi_hat, c_hat) = maximize(outcome);
    let on_boundary = c_hat >= 1.0;
    let l_max = log_likelihood(outcome, phi_hat, c_hat);

    let phi_ci = if c_hat == 0.0 {
        (phi_hat - PI, phi_hat + PI)
    } else {
        phi_interval(outcome, phi_hat, c_hat, l_max)
    };
    let c_ci = contrast_interval(outcome, phi_hat, c_hat, l_max);
    Ok(PhaseEstimate {
        phi_hat,
        c_hat,
        phi_ci,
        c_ci,
        on_boundary,
    })
}

fn maximize(outcome: &ParityOutcome) -> (f64, f64) {
    let x = (outcome.xx_shots > 0).then(|| 1.0 - 2.0 * outcome.xx_even as f64 / outcome.xx_shots as f64);
    let y = (outcome.xy_shots > 0).then(|| 2.0 * outcome.xy_even as f64 / outcome.xy_shots as f64 - 1.0);
    match (x, y) {
        (Some(x), Some(y)) => {
            let r = x.hypot(y);
            if r == 0.0 {
                (0.0, 0.0)
            } else if r <= 1.0 {
                (wrap_phase(y.atan2(x)), r)
            } else {
                (maximize_on_unit_circle(outcome), 1.0)
            }
        }
        // Only C cos φ is observed: prefer the smallest |φ|, then the smallest C.
        (Some(x), None) => {
            if x >= 0.0 {
                (0.0, x)
            } else {
                (x.acos(), 1.0)
            }
        }
        // Only C sin φ is observed.
        (None, Some(y)) => {
            if y == 0.0 {
                (0.0, 0.0)
            } else {
                (y.asin(), 1.0)
            }
        }
        (None, None) => unreachable!("empty outcomes are rejected"),
    }
}

fn maximize_on_unit_circle(outcome: &ParityOutcome) -> f64 {
    let f = |phi: f64| log_likelihood(outcome, phi, 1.0);
    let h = TAU / BOUNDARY_GRID as f64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in 0..BOUNDARY_GRID {
        let phi = -PI + (k as f64 + 1.0) * h;
        let v = f(phi);
        if v > best.0 {
            best = (v, phi);
        }
    }
    // golden-section search in the bracketing cells
    let (mut a, mut b) = (best.1 - h, best.1 + h);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    wrap_phase(0.5 * (a + b))
}

fn bisect(mut inside: f64, mut outside: f64, excess: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (inside + outside);
        if excess(mid) > 0.0 {
            outside = mid;
        } else {
            inside = mid;
        }
    }
    0.5 * (inside + outside)
}

fn phi_interval(outcome: &ParityOutcome, phi_hat: f64, c_hat: f64, l_max: f64) -> (f64, f64) {
    let excess = |phi: f64| 2.0 * (l_max - log_likelihood(outcome, phi, c_hat)) - 1.0;
    let step = PI / CI_SCAN_STEPS as f64;
    let mut bounds = [0.0; 2];
    for (slot, dir) in bounds.iter_mut().zip([-1.0, 1.0]) {
        let mut prev = phi_hat;
        let mut found = None;
        for k in 1..=CI_SCAN_STEPS {
            let phi = phi_hat + dir * k as f64 * step;
            if excess(phi) > 0.0 {
                found = Some(bisect(prev, phi, excess));
                break;
            }
            prev = phi;
        }
        match found {
            Some(b) => *slot = b,
            None => return (phi_hat - PI, phi_hat + PI),
        }
    }
    (bounds[0], bounds[1])
}

fn contrast_interval(outcome: &ParityOutcome, phi_hat: f64, c_hat: f64, l_max: f64) -> (f64, f64) {
    // ln L is concave in C along a fixed phase, so each side has one crossing.
    let excess = |c: f64| 2.0 * (l_max - log_likelihood(outcome, phi_hat, c)) - 1.0;
    let lower = if c_hat == 0.0 || excess(0.0) <= 0.0 {
        0.0
    } else {
        bisect(c_hat, 0.0, excess)
    };
    let upper = if c_hat >= 1.0 || excess(1.0) <= 0.0 {
        1.0
    } else {
        bisect(c_hat, 1.0, excess)
    };
    (lower, upper)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(n: u32, big_n: u32, m: u32, big_m: u32) -> ParityOutcome {
        ParityOutcome::new(n, big_n, m, big_m).unwrap()
    }

    #[test]
    fn likelihood_hand_value() {
        let o = outcome(0, 1, 1, 1);
        assert!((likelihood(&o, PI / 2.0, 1.0) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn zero_contrast_likelihood_is_phase_free() {
        let o = outcome(7, 20, 12, 30);
        let expected = (ln_binomial(20, 7) + ln_binomial(30, 12) - 50.0 * 2f64.ln()).exp();
        for phi in [-3.0, -1.0, 0.0, 0.5, 2.9] {
            assert!((likelihood(&o, phi, 0.0) - expected).abs() < 1e-14 * expected);
        }
    }

    #[test]
    fn likelihood_normalized_over_outcomes() {
        let (big_n, big_m) = (7, 5);
        for (phi, c) in [(0.3, 0.9), (-2.0, 0.4), (PI, 1.0)] {
            let total: f64 = (0..=big_n)
                .flat_map(|n| (0..=big_m).map(move |m| (n, m)))
                .map(|(n, m)| likelihood(&outcome(n, big_n, m, big_m), phi, c))
                .sum();
            assert!((total - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn likelihood_finite_on_closed_domain() {
        let o = outcome(0, 10, 10, 10);
        for phi in [-PI, 0.0, PI / 2.0, PI] {
            for c in [0.0, 0.5, 1.0] {
                let l = likelihood(&o, phi, c);
                assert!(l.is_finite() && l >= 0.0);
            }
        }
    }

    #[test]
    fn balanced_outcome_is_unidentified() {
        let est = mle_fit(&outcome(25, 50, 25, 50)).unwrap();
        assert_eq!(est.c_hat, 0.0);
        assert!(est.phi_unidentified());
        assert!(est.c_ci.1 > 0.0);
    }

    #[test]
    fn interior_estimate_and_intervals() {
        let est = mle_fit(&outcome(10, 50, 40, 50)).unwrap();
        assert!((est.c_hat - (0.6f64.hypot(0.6))).abs() < 1e-12);
        assert!((est.phi_hat - PI / 4.0).abs() < 1e-12);
        assert!(!est.on_boundary);
        assert!(est.phi_ci.0 < est.phi_hat && est.phi_hat < est.phi_ci.1);
        assert!(est.c_ci.0 < est.c_hat && est.c_hat < est.c_ci.1);
        assert!(est.c_ci.0 >= 0.0 && est.c_ci.1 <= 1.0);
        for (bound, c) in [(est.phi_ci.0, est.c_hat), (est.phi_ci.1, est.c_hat)] {
            let r = 2.0 * (log_likelihood(&outcome(10, 50, 40, 50), est.phi_hat, est.c_hat)
                - log_likelihood(&outcome(10, 50, 40, 50), bound, c));
            assert!((r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_estimate_is_flagged() {
        let est = mle_fit(&outcome(5, 50, 45, 50)).unwrap();
        assert!(est.on_boundary);
        assert_eq!(est.c_hat, 1.0);
        assert_eq!(est.c_ci.1, 1.0);
        assert!((est.phi_hat - PI / 4.0).abs() < 1e-6);
    }

    #[test]
    fn single_basis_tie_breaks() {
        let est = mle_fit(&outcome(10, 40, 0, 0)).unwrap();
        assert_eq!(est.phi_hat, 0.0);
        assert!((est.c_hat - 0.5).abs() < 1e-15);
        let est = mle_fit(&outcome(30, 40, 0, 0)).unwrap();
        assert_eq!(est.c_hat, 1.0);
        assert!((est.phi_hat - (-0.5f64).acos()).abs() < 1e-15);
        let est = mle_fit(&outcome(0, 0, 30, 40)).unwrap();
        assert_eq!(est.c_hat, 1.0);
        assert!((est.phi_hat - 0.5f64.asin()).abs() < 1e-15);
    }

    #[test]
    fn empty_outcome_rejected() {
        assert!(matches!(mle_fit(&outcome(0, 0, 0, 0)), Err(Error::EmptyOutcome)));
    }

    #[test]
    fn wrap_aware_interval_membership() {
        let est = mle_fit(&outcome(49, 50, 24, 50)).unwrap();
        assert!(est.phi_hat.abs() > 3.0);
        assert!(est.phi_ci_contains(est.phi_hat + TAU));
        assert!(est.phi_ci_contains(est.phi_hat - TAU));
        assert!(!est.phi_ci_contains(est.phi_hat + PI / 2.0));
    }
}
