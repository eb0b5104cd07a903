mod common;

use std::f64::consts::{PI, TAU};

use ionmag::mle::{log_likelihood, mle_fit};
use ionmag::physics::wrap_phase;
use ionmag::sim::{stream_rng, ParityOutcome};
use rand::Rng;

/// Exhaustive search over φ ∈ (-π, π] and C ∈ [0, 1].
fn grid_argmax(o: &ParityOutcome, n_phi: usize, n_c: usize) -> (f64, f64, f64) {
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for i in 1..=n_phi {
        let phi = -PI + TAU * i as f64 / n_phi as f64;
        for j in 0..=n_c {
            let c = j as f64 / n_c as f64;
            let l = common::likelihood(o, phi, c).ln();
            if l > best.0 {
                best = (l, phi, c);
            }
        }
    }
    best
}

#[test]
fn matches_exhaustive_grid_search() {
    let o = ParityOutcome::new(5, 50, 45, 50).unwrap();
    let (_, phi, c) = grid_argmax(&o, 2000, 1000);
    let fit = mle_fit(&o).unwrap();
    assert!(wrap_phase(fit.phi_hat - phi).abs() <= TAU / 2000.0, "{} vs {phi}", fit.phi_hat);
    assert!((fit.c_hat - c).abs() <= 1.0 / 1000.0, "{} vs {c}", fit.c_hat);
}

#[test]
fn random_outcomes_match_refined_grid() {
    let mut rng = stream_rng(99, 0);
    let (n_phi, n_c) = (360, 100);
    for _ in 0..500 {
        let big_n = rng.random_range(1..=100);
        let big_m = rng.random_range(1..=100);
        let o = ParityOutcome::new(rng.random_range(0..=big_n), big_n, rng.random_range(0..=big_m), big_m).unwrap();
        let (coarse, phi0, c0) = grid_argmax(&o, n_phi, n_c);
        // two refinement levels, each a 41 x 41 patch spanning two cells of
        // the previous level each way
        let (dphi, dc) = (TAU / n_phi as f64 / 10.0, 1.0 / n_c as f64 / 10.0);
        let mut best = (coarse, phi0, c0);
        for scale in [1.0, 0.1] {
            let (centre_phi, centre_c) = (best.1, best.2);
            for i in -20..=20 {
                for j in -20..=20 {
                    let phi = centre_phi + i as f64 * dphi * scale;
                    let c = (centre_c + j as f64 * dc * scale).clamp(0.0, 1.0);
                    let l = common::likelihood(&o, phi, c).ln();
                    if l > best.0 {
                        best = (l, phi, c);
                    }
                }
            }
        }
        let fit = mle_fit(&o).unwrap();
        let l_fit = log_likelihood(&o, fit.phi_hat, fit.c_hat);
        assert!(l_fit >= best.0 - 1e-9, "{o:?}: {l_fit} < {}", best.0);
        // location is only meaningful when the likelihood is peaked in φ
        if fit.c_hat > 0.3 && !fit.phi_unidentified() {
            assert!(
                wrap_phase(fit.phi_hat - best.1).abs() <= dphi || l_fit - best.0 < 1e-6,
                "{o:?}: {} vs {}",
                fit.phi_hat,
                best.1
            );
        }
    }
}

#[test]
fn reflecting_the_xx_count_reflects_the_phase() {
    let mut rng = stream_rng(5, 1);
    for _ in 0..200 {
        let (big_n, big_m) = (50, 50);
        let o = ParityOutcome::new(rng.random_range(0..=big_n), big_n, rng.random_range(0..=big_m), big_m).unwrap();
        let r = ParityOutcome::new(big_n - o.xx_even, big_n, o.xy_even, big_m).unwrap();
        let (a, b) = (mle_fit(&o).unwrap(), mle_fit(&r).unwrap());
        if a.c_hat < 1e-9 {
            continue;
        }
        assert!((a.phi_hat.cos() + b.phi_hat.cos()).abs() < 1e-7, "{o:?}");
        assert!((a.phi_hat.sin() - b.phi_hat.sin()).abs() < 1e-7, "{o:?}");
        assert!((a.c_hat - b.c_hat).abs() < 1e-7);
    }
}

#[test]
fn likelihood_is_two_pi_periodic() {
    let o = ParityOutcome::new(17, 40, 9, 30).unwrap();
    for k in 0..50 {
        let phi = -3.0 + 0.12 * k as f64;
        let a = log_likelihood(&o, phi, 0.8);
        assert!((a - log_likelihood(&o, phi + TAU, 0.8)).abs() < 1e-10);
        assert!((a - common::likelihood(&o, phi, 0.8).ln()).abs() < 1e-10);
    }
}

#[test]
fn estimate_lies_inside_its_intervals() {
    let mut rng = stream_rng(12, 0);
    for _ in 0..300 {
        let big_n = rng.random_range(1..=80);
        let big_m = rng.random_range(1..=80);
        let o = ParityOutcome::new(rng.random_range(0..=big_n), big_n, rng.random_range(0..=big_m), big_m).unwrap();
        let fit = mle_fit(&o).unwrap();
        assert!(fit.phi_ci_contains(fit.phi_hat));
        assert!(fit.c_ci.0 <= fit.c_hat && fit.c_hat <= fit.c_ci.1);
        assert!(fit.c_ci.0 >= 0.0 && fit.c_ci.1 <= 1.0);
        assert!(fit.phi_hat > -PI && fit.phi_hat <= PI);
    }
}
