//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use ionmag::bayes::PosteriorGrid;
use ionmag::physics::{hz_to_angular, ManifoldSpec, PhysicsConstants};
use ionmag::sim::{CycleConfig, FieldModel, ParityOutcome};

/// Ion positions used throughout the tests (200 µm apart).
pub const POSITIONS: [f64; 2] = [3.1e-3, 3.3e-3];

pub fn s_config(c: &PhysicsConstants) -> CycleConfig {
    CycleConfig::new(POSITIONS, ManifoldSpec::s(c, hz_to_angular(10.4e6)).unwrap())
}

pub fn d_config(c: &PhysicsConstants) -> CycleConfig {
    CycleConfig::new(POSITIONS, ManifoldSpec::d_from_shared_field(c, hz_to_angular(10.4e6)).unwrap())
}

/// Linear dc gradient giving the S state the rate `omega` at [`POSITIONS`].
pub fn s_field(omega: f64, c: &PhysicsConstants) -> FieldModel {
    FieldModel::linear_gradient(omega / (c.g_s * c.mu_b_over_hbar * (POSITIONS[1] - POSITIONS[0])))
}

fn ln_choose(n: u32, k: u32) -> f64 {
    (1..=k).map(|i| ((n - k + i) as f64 / i as f64).ln()).sum()
}

fn xlny(x: u32, y: f64) -> f64 {
    if x == 0 {
        0.0
    } else {
        x as f64 * y.ln()
    }
}

/// Parity likelihood written out from the two binomials.
pub fn likelihood(o: &ParityOutcome, phi: f64, c: f64) -> f64 {
    let norm = ln_choose(o.xx_shots, o.xx_even) + ln_choose(o.xy_shots, o.xy_even);
    likelihood_with(o, norm, phi, c)
}

fn likelihood_with(o: &ParityOutcome, log_norm: f64, phi: f64, c: f64) -> f64 {
    let p_xx = (0.5 * (1.0 - c * phi.cos())).clamp(0.0, 1.0);
    let p_xy = (0.5 * (1.0 + c * phi.sin())).clamp(0.0, 1.0);
    (log_norm
        + xlny(o.xx_even, p_xx)
        + xlny(o.xx_shots - o.xx_even, 1.0 - p_xx)
        + xlny(o.xy_even, p_xy)
        + xlny(o.xy_shots - o.xy_even, 1.0 - p_xy))
        .exp()
}

/// ∫₀¹ L dC by a composite 5-point Gauss rule on 400 panels.
pub fn contrast_marginal(o: &ParityOutcome, phi: f64) -> f64 {
    const X: [f64; 5] = [
        -0.906_179_845_938_664,
        -0.538_469_310_105_683,
        0.0,
        0.538_469_310_105_683,
        0.906_179_845_938_664,
    ];
    const W: [f64; 5] = [
        0.236_926_885_056_189,
        0.478_628_670_499_366,
        0.568_888_888_888_889,
        0.478_628_670_499_366,
        0.236_926_885_056_189,
    ];
    let norm = ln_choose(o.xx_shots, o.xx_even) + ln_choose(o.xy_shots, o.xy_even);
    let panels = 400;
    let h = 1.0 / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = (p as f64 + 0.5) * h;
        for (x, w) in X.iter().zip(&W) {
            total += 0.5 * h * w * likelihood_with(o, norm, phi, mid + 0.5 * h * x);
        }
    }
    total
}

/// Posterior densities and log evidence by direct prior x likelihood.
pub fn direct_update(prior: &PosteriorGrid, o: &ParityOutcome, t: f64, offset: f64) -> (Vec<f64>, f64) {
    let n_phi = prior.n_phi0();
    let mut w: Vec<f64> = prior
        .weights()
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let phase = prior.omega(k / n_phi) * t + prior.phi0(k % n_phi) + offset;
            p * contrast_marginal(o, phase)
        })
        .collect();
    let evidence: f64 = w.iter().sum::<f64>() * prior.cell_area();
    w.iter_mut().for_each(|v| *v /= evidence);
    (w, evidence.ln())
}

/// Largest elementwise difference relative to the peak of `b`.
pub fn max_rel_diff(a: &[f64], b: &[f64]) -> f64 {
    let peak = b.iter().cloned().fold(0.0, f64::max);
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / peak
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Field with dc difference `delta_b` and S-state differential ac shift
/// `ac_s` (> 0) between [`POSITIONS`]. The rf amplitude falls linearly to zero
/// at the far end of the axis.
pub fn dual_field(delta_b: f64, ac_s: f64, c: &PhysicsConstants) -> FieldModel {
    let [x1, x2] = POSITIONS;
    let end = 6.4e-3;
    let spec = ManifoldSpec::s(c, hz_to_angular(10.4e6)).unwrap();
    // shift per T^2 of rf amplitude
    let k = ionmag::physics::ac_zeeman_shift(1.0, &spec, c).unwrap();
    let slope = (ac_s / (k * ((end - x2).powi(2) - (end - x1).powi(2)))).sqrt();
    FieldModel::linear_gradient(delta_b / (x2 - x1))
        .with_rf(ionmag::sim::PiecewisePolynomial::linear(slope * end, -slope))
}
