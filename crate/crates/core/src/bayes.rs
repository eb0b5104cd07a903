//! Grid posterior over the phase accumulation rate Δω and the phase offset φ0.
//!
//! The update function `∫ L(n, m; Δω T + φ0 + δ, C) dC` depends on the cell only
//! through the accumulated phase and is a trigonometric polynomial of degree
//! `N + M` in it. [`UpdateFunction`] samples it on a uniform phase grid, takes
//! its Fourier coefficients, and evaluates every row of the posterior grid
//! with one inverse FFT over the (periodic, uniform) φ0 axis. The result is
//! exact up to rounding.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use statrs::function::factorial::ln_binomial;

use crate::error::{ensure, Error, Result};
use crate::physics::wrap_phase_half_open;
use crate::quadrature;
use crate::sim::ParityOutcome;

/// Coefficients smaller than this (relative to the peak of the scaled update
/// function, which is 1) are dropped.
const COEFF_CUTOFF: f64 = 1e-19;
/// Posterior mass below which an update is reported as underflow.
const MASS_FLOOR: f64 = 1e-300;
/// Below this scaled evidence the update is recomputed cell by cell in the
/// log domain.
const DIRECT_FALLBACK_MASS: f64 = 1e-6;

/// Posterior moments of the marginalized axes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    pub omega_mean: f64,
    pub omega_err: f64,
    /// Circular mean in [-π, π).
    pub phi0_mean: f64,
    /// Circular standard deviation, capped at π/√3 (the uniform value).
    pub phi0_err: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Omega,
    Phi0,
}

/// Joint density over (Δω, φ0) on a uniform cell-centred grid.
///
/// Cells of the Δω axis are centred at `omega_min + (i + 1/2) h`; the φ0 axis
/// holds `-π + j 2π / n_phi0` and wraps. Weights are densities normalized so
/// that `Σ w · cell_area = 1`, stored row-major with one row per Δω value.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorGrid {
    omega_min: f64,
    omega_max: f64,
    n_omega: usize,
    n_phi0: usize,
    weights: Vec<f64>,
}

/// Posterior after one update and the log of the marginal p(n, m | T).
#[derive(Debug, Clone)]
pub struct BayesUpdate {
    pub posterior: PosteriorGrid,
    pub log_evidence: f64,
}

impl PosteriorGrid {
    /// Uniform prior over `[omega_min, omega_max] x [-π, π)`.
    pub fn uniform_prior(omega_range: (f64, f64), n_omega: usize, n_phi0: usize) -> Result<Self> {
        Self::from_fn(omega_range, n_omega, n_phi0, |_, _| 1.0)
    }

    /// Grid with weights proportional to `density(omega, phi0)`.
    pub fn from_fn(
        omega_range: (f64, f64),
        n_omega: usize,
        n_phi0: usize,
        density: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let mut grid = Self::empty(omega_range, n_omega, n_phi0)?;
        for i in 0..n_omega {
            let omega = grid.omega(i);
            for j in 0..n_phi0 {
                grid.weights[i * n_phi0 + j] = density(omega, grid.phi0(j));
            }
        }
        grid.normalize()?;
        Ok(grid)
    }

    /// Grid with row-major weights proportional to `weights`.
    pub fn from_weights(
        omega_range: (f64, f64),
        n_omega: usize,
        n_phi0: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut grid = Self::empty(omega_range, n_omega, n_phi0)?;
        ensure(weights.len() == n_omega * n_phi0, || {
            format!("expected {} weights, got {}", n_omega * n_phi0, weights.len())
        })?;
        grid.weights = weights;
        grid.normalize()?;
        Ok(grid)
    }

    /// Product of a uniform Δω prior and the given φ0 density.
    pub fn with_phi0_marginal(omega_range: (f64, f64), n_omega: usize, phi0_density: &[f64]) -> Result<Self> {
        let n_phi0 = phi0_density.len();
        let mut grid = Self::empty(omega_range, n_omega, n_phi0)?;
        for row in grid.weights.chunks_mut(n_phi0) {
            row.copy_from_slice(phi0_density);
        }
        grid.normalize()?;
        Ok(grid)
    }

    fn empty(omega_range: (f64, f64), n_omega: usize, n_phi0: usize) -> Result<Self> {
        let (lo, hi) = omega_range;
        ensure(lo.is_finite() && hi.is_finite() && lo < hi, || {
            format!("invalid frequency range [{lo}, {hi}]")
        })?;
        ensure(n_omega >= 2 && n_phi0 >= 2, || {
            format!("grid needs at least 2x2 cells, got {n_omega}x{n_phi0}")
        })?;
        Ok(Self {
            omega_min: lo,
            omega_max: hi,
            n_omega,
            n_phi0,
            weights: vec![0.0; n_omega * n_phi0],
        })
    }

    fn normalize(&mut self) -> Result<()> {
        ensure(self.weights.iter().all(|w| w.is_finite() && *w >= 0.0), || {
            "grid weights must be finite and non-negative".into()
        })?;
        let mass: f64 = self.weights.iter().sum::<f64>() * self.cell_area();
        if !mass.is_finite() || mass <= MASS_FLOOR {
            return Err(Error::MassUnderflow);
        }
        let inv = 1.0 / mass;
        self.weights.iter_mut().for_each(|w| *w *= inv);
        Ok(())
    }

    pub fn omega_range(&self) -> (f64, f64) {
        (self.omega_min, self.omega_max)
    }

    pub fn n_omega(&self) -> usize {
        self.n_omega
    }

    pub fn n_phi0(&self) -> usize {
        self.n_phi0
    }

    pub fn omega_step(&self) -> f64 {
        (self.omega_max - self.omega_min) / self.n_omega as f64
    }

    pub fn phi0_step(&self) -> f64 {
        TAU / self.n_phi0 as f64
    }

    pub fn cell_area(&self) -> f64 {
        self.omega_step() * self.phi0_step()
    }

    pub fn omega(&self, i: usize) -> f64 {
        self.omega_min + (i as f64 + 0.5) * self.omega_step()
    }

    pub fn phi0(&self, j: usize) -> f64 {
        -PI + j as f64 * self.phi0_step()
    }

    pub fn omega_axis(&self) -> Vec<f64> {
        (0..self.n_omega).map(|i| self.omega(i)).collect()
    }

    pub fn phi0_axis(&self) -> Vec<f64> {
        (0..self.n_phi0).map(|j| self.phi0(j)).collect()
    }

    /// Row-major densities.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn density(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.n_phi0 + j]
    }

    /// Probability mass of every cell (row-major, sums to one).
    pub fn masses(&self) -> Vec<f64> {
        let area = self.cell_area();
        self.weights.iter().map(|w| w * area).collect()
    }

    /// Marginal density over Δω.
    pub fn omega_marginal(&self) -> Vec<f64> {
        let h = self.phi0_step();
        self.weights
            .chunks(self.n_phi0)
            .map(|row| row.iter().sum::<f64>() * h)
            .collect()
    }

    /// Marginal density over φ0.
    pub fn phi0_marginal(&self) -> Vec<f64> {
        let h = self.omega_step();
        let mut out = vec![0.0; self.n_phi0];
        for row in self.weights.chunks(self.n_phi0) {
            for (o, w) in out.iter_mut().zip(row) {
                *o += w;
            }
        }
        out.iter_mut().for_each(|o| *o *= h);
        out
    }

    fn omega_mean_std(&self) -> (f64, f64) {
        let h = self.omega_step();
        let marginal = self.omega_marginal();
        let mean: f64 = marginal.iter().enumerate().map(|(i, p)| p * self.omega(i)).sum::<f64>() * h;
        let var: f64 = marginal
            .iter()
            .enumerate()
            .map(|(i, p)| p * (self.omega(i) - mean).powi(2))
            .sum::<f64>()
            * h;
        (mean, var.max(0.0).sqrt())
    }

    /// Marginal means and standard deviations; φ0 moments are circular.
    pub fn moments(&self) -> FrequencyEstimate {
        let (omega_mean, omega_err) = self.omega_mean_std();
        let h = self.phi0_step();
        let (mut re, mut im) = (0.0, 0.0);
        for (j, q) in self.phi0_marginal().iter().enumerate() {
            let phi = self.phi0(j);
            re += q * phi.cos() * h;
            im += q * phi.sin() * h;
        }
        let resultant = re.hypot(im).min(1.0);
        let uniform_std = PI / 3f64.sqrt();
        let phi0_err = if resultant > 0.0 {
            (-2.0 * resultant.ln()).sqrt().min(uniform_std)
        } else {
            uniform_std
        };
        let phi0_mean = if resultant > 0.0 {
            wrap_phase_half_open(im.atan2(re))
        } else {
            0.0
        };
        FrequencyEstimate {
            omega_mean,
            omega_err,
            phi0_mean,
            phi0_err,
        }
    }

    /// `∫ p log p` of the marginal along `axis` (nats).
    pub fn shannon_information(&self, axis: Axis) -> f64 {
        let (marginal, h) = match axis {
            Axis::Omega => (self.omega_marginal(), self.omega_step()),
            Axis::Phi0 => (self.phi0_marginal(), self.phi0_step()),
        };
        marginal.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>() * h
    }

    /// Convolves along Δω with a Gaussian of standard deviation
    /// `fraction` times the current Δω standard deviation, then renormalizes.
    /// Mass pushed beyond the grid edges is discarded.
    pub fn broaden(&self, fraction: f64) -> Result<Self> {
        ensure(fraction.is_finite() && fraction >= 0.0, || {
            format!("broadening fraction must be >= 0, got {fraction}")
        })?;
        let (_, std) = self.omega_mean_std();
        let sigma = fraction * std / self.omega_step();
        if sigma == 0.0 {
            return Ok(self.clone());
        }
        let kernel = gaussian_kernel(sigma);
        let half = (kernel.len() / 2) as isize;
        let n = self.n_phi0;
        let mut out = vec![0.0; self.weights.len()];
        for i in 0..self.n_omega {
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, k) in kernel.iter().enumerate() {
                let src = i as isize + d as isize - half;
                if src < 0 || src >= self.n_omega as isize {
                    continue;
                }
                let src = src as usize;
                for (o, w) in dst.iter_mut().zip(&self.weights[src * n..(src + 1) * n]) {
                    *o += k * w;
                }
            }
        }
        let mut grid = Self {
            weights: out,
            ..self.clone()
        };
        grid.normalize()?;
        Ok(grid)
    }

    /// Bayesian update with the contrast-marginalized parity likelihood at
    /// interrogation time `t` and analysis offset `offset`.
    pub fn update(&self, outcome: &ParityOutcome, t: f64, offset: f64) -> Result<BayesUpdate> {
        ensure(t.is_finite() && t >= 0.0, || format!("interrogation time must be >= 0, got {t}"))?;
        outcome.validate()?;
        if outcome.is_empty() {
            return Ok(BayesUpdate {
                posterior: self.clone(),
                log_evidence: 0.0,
            });
        }
        let function = UpdateFunction::new(outcome);
        let scaled = function.evaluate_grid(self, t, offset);
        let mut weights: Vec<f64> = self.weights.iter().zip(&scaled).map(|(w, f)| w * f).collect();
        let mut mass = weights.iter().sum::<f64>() * self.cell_area();
        if mass < DIRECT_FALLBACK_MASS {
            // the prior sits where the Fourier sum is dominated by round-off
            let scaled = function.evaluate_grid_direct(self, t, offset);
            weights = self.weights.iter().zip(&scaled).map(|(w, f)| w * f).collect();
            mass = weights.iter().sum::<f64>() * self.cell_area();
        }
        if !mass.is_finite() || mass <= MASS_FLOOR {
            return Err(Error::MassUnderflow);
        }
        let inv = 1.0 / mass;
        weights.iter_mut().for_each(|w| *w *= inv);
        Ok(BayesUpdate {
            posterior: Self {
                weights,
                ..self.clone()
            },
            log_evidence: mass.ln() + function.log_scale,
        })
    }
}

/// Discrete kernel along Δω with variance `sigma^2` cells^2.
fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma < 1.0 {
        // three taps reproduce the variance exactly for sub-cell widths
        let a = 0.5 * sigma * sigma;
        return vec![a, 1.0 - 2.0 * a, a];
    }
    let half = (6.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-half..=half)
        .map(|d| (-0.5 * (d as f64 / sigma).powi(2)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// The contrast-marginalized likelihood of one outcome as a function of the
/// accumulated phase, stored as Fourier coefficients of `f / exp(log_scale)`.
#[derive(Debug, Clone)]
pub struct UpdateFunction {
    outcome: ParityOutcome,
    /// c_0 ..= c_K; negative orders are complex conjugates.
    coefficients: Vec<Complex64>,
    log_scale: f64,
    nodes: Vec<f64>,
    log_node_weights: Vec<f64>,
}

impl UpdateFunction {
    pub fn new(outcome: &ParityOutcome) -> Self {
        let degree = outcome.total_shots() as usize;
        let (nodes, node_weights) = contrast_rule(degree);
        let log_node_weights: Vec<f64> = node_weights.iter().map(|w| w.ln()).collect();
        let mut function = Self {
            outcome: *outcome,
            coefficients: Vec::new(),
            log_scale: 0.0,
            nodes,
            log_node_weights,
        };

        let samples = (2 * degree + 2).next_power_of_two().max(8);
        let logs: Vec<f64> = (0..samples)
            .map(|s| function.log_value(TAU * s as f64 / samples as f64))
            .collect();
        let peak = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut buffer: Vec<Complex64> = logs.iter().map(|l| Complex64::new((l - peak).exp(), 0.0)).collect();
        FftPlanner::new().plan_fft_forward(samples).process(&mut buffer);
        let norm = 1.0 / samples as f64;
        let mut coefficients: Vec<Complex64> = buffer[..=degree].iter().map(|c| c * norm).collect();
        while coefficients.len() > 1 && coefficients.last().is_some_and(|c| c.norm() < COEFF_CUTOFF) {
            coefficients.pop();
        }
        function.coefficients = coefficients;
        function.log_scale = peak;
        function
    }

    /// ln f(φ), evaluated directly by quadrature over the contrast.
    pub fn log_value(&self, phi: f64) -> f64 {
        let o = &self.outcome;
        let base = ln_binomial(o.xx_shots as u64, o.xx_even as u64) + ln_binomial(o.xy_shots as u64, o.xy_even as u64)
            - (o.total_shots() as f64) * 2f64.ln();
        let (cos, sin) = (phi.cos(), phi.sin());
        let n = o.xx_even as f64;
        let n_odd = (o.xx_shots - o.xx_even) as f64;
        let m = o.xy_even as f64;
        let m_odd = (o.xy_shots - o.xy_even) as f64;
        let terms = self.nodes.iter().zip(&self.log_node_weights).map(|(c, lw)| {
            lw + xlog1p(n, -c * cos) + xlog1p(n_odd, c * cos) + xlog1p(m, c * sin) + xlog1p(m_odd, -c * sin)
        });
        base + log_sum_exp(terms)
    }

    /// f(φ) by direct quadrature.
    pub fn value(&self, phi: f64) -> f64 {
        self.log_value(phi).exp()
    }

    /// f(φ) from the Fourier representation.
    pub fn fourier_value(&self, phi: f64) -> f64 {
        let series: f64 = self
            .coefficients
            .iter()
            .enumerate()
            .skip(1)
            .map(|(k, c)| (c * Complex64::from_polar(1.0, k as f64 * phi)).re)
            .sum();
        (self.coefficients[0].re + 2.0 * series) * self.log_scale.exp()
    }

    /// Highest retained Fourier order.
    pub fn order(&self) -> usize {
        self.coefficients.len() - 1
    }

    /// Scaled update function `f / exp(log_scale)` on every grid cell.
    fn evaluate_grid(&self, grid: &PosteriorGrid, t: f64, offset: f64) -> Vec<f64> {
        let n = grid.n_phi0;
        let ifft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_inverse(n);
        let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
        let mut folded = vec![Complex64::new(0.0, 0.0); n];
        let mut out = vec![0.0; grid.weights.len()];
        let c0 = self.coefficients[0].re;
        for i in 0..grid.n_omega {
            // phase of cell (i, j) is alpha + phi0_j with phi0_j = -π + 2π j / n
            let alpha = (grid.omega(i) * t + offset).rem_euclid(TAU) - PI;
            let step = Complex64::from_polar(1.0, alpha);
            folded.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
            let mut z = step;
            for (k, c) in self.coefficients.iter().enumerate().skip(1) {
                if k % 32 == 0 {
                    z = Complex64::from_polar(1.0, k as f64 * alpha);
                }
                folded[k % n] += c * z;
                z *= step;
            }
            ifft.process_with_scratch(&mut folded, &mut scratch);
            for (o, g) in out[i * n..(i + 1) * n].iter_mut().zip(&folded) {
                *o = (c0 + 2.0 * g.re).max(0.0);
            }
        }
        out
    }
}

impl UpdateFunction {
    fn evaluate_grid_direct(&self, grid: &PosteriorGrid, t: f64, offset: f64) -> Vec<f64> {
        let n = grid.n_phi0;
        let mut out = vec![0.0; grid.weights.len()];
        for i in 0..grid.n_omega {
            let alpha = grid.omega(i) * t + offset;
            for j in 0..n {
                out[i * n + j] = (self.log_value(alpha + grid.phi0(j)) - self.log_scale).exp();
            }
        }
        out
    }
}

fn xlog1p(count: f64, x: f64) -> f64 {
    // count * ln((1 + x) / 2) without the 1/2, which is folded into the base
    if count == 0.0 {
        0.0
    } else {
        count * x.ln_1p()
    }
}

fn log_sum_exp(terms: impl Iterator<Item = f64>) -> f64 {
    let values: Vec<f64> = terms.collect();
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Quadrature over C in [0, 1] for an integrand that is a polynomial of
/// degree `degree` in C. Exact up to degree 127.
fn contrast_rule(degree: usize) -> (Vec<f64>, Vec<f64>) {
    let needed = (degree + 2) / 2;
    if needed <= 64 {
        quadrature::gauss_legendre_unit(needed.max(1))
    } else {
        let panels = ((degree + 1).div_ceil(128)).min(8);
        quadrature::composite_unit(64, panels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(n: u32, big_n: u32, m: u32, big_m: u32) -> ParityOutcome {
        ParityOutcome::new(n, big_n, m, big_m).unwrap()
    }

    fn gaussian_grid(center_cells: f64, sigma_cells: f64) -> PosteriorGrid {
        let range = (-50.0, 50.0);
        let n = 400;
        let h = 100.0 / n as f64;
        PosteriorGrid::from_fn(range, n, 16, |w, _| {
            let x = (w - (-50.0 + (center_cells + 0.5) * h)) / (sigma_cells * h);
            (-0.5 * x * x).exp()
        })
        .unwrap()
    }

    fn total_mass(g: &PosteriorGrid) -> f64 {
        g.masses().iter().sum()
    }

    #[test]
    fn uniform_prior_is_flat_and_normalized() {
        let g = PosteriorGrid::uniform_prior((-10.0, 30.0), 64, 32).unwrap();
        let first = g.weights()[0];
        assert!(g.weights().iter().all(|w| (w - first).abs() < 1e-15 * first));
        assert!((total_mass(&g) - 1.0).abs() < 1e-12);
        let entropy: f64 = -g.masses().iter().map(|p| p * p.ln()).sum::<f64>();
        assert!((entropy - ((64 * 32) as f64).ln()).abs() < 1e-10);
        let est = g.moments();
        assert!((est.omega_mean - 10.0).abs() < 0.5 * g.omega_step());
        assert!((est.omega_err - 40.0 / 12f64.sqrt()).abs() < g.omega_step());
        assert!((g.shannon_information(Axis::Omega) + 40f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn invalid_grids_rejected() {
        assert!(PosteriorGrid::uniform_prior((1.0, 1.0), 8, 8).is_err());
        assert!(PosteriorGrid::uniform_prior((0.0, 1.0), 1, 8).is_err());
        assert!(PosteriorGrid::from_weights((0.0, 1.0), 2, 2, vec![0.0; 4]).is_err());
    }

    #[test]
    fn empty_outcome_is_identity() {
        let g = gaussian_grid(200.0, 20.0);
        let up = g.update(&outcome(0, 0, 0, 0), 1.0, 0.0).unwrap();
        assert_eq!(up.posterior, g);
    }

    #[test]
    fn fourier_representation_matches_quadrature() {
        for o in [outcome(3, 10, 8, 10), outcome(5, 50, 45, 50), outcome(0, 1, 1, 1), outcome(400, 500, 20, 500)] {
            let f = UpdateFunction::new(&o);
            let peak = (0..256).map(|k| f.value(TAU * k as f64 / 256.0)).fold(0.0, f64::max);
            for k in 0..97 {
                let phi = -PI + 0.0731 * k as f64;
                assert!((f.fourier_value(phi) - f.value(phi)).abs() < 1e-12 * peak, "{o:?} phi={phi}");
            }
        }
    }

    #[test]
    fn zero_time_update_leaves_frequency_marginal() {
        let g = PosteriorGrid::from_fn((-20.0, 20.0), 64, 32, |w, p| {
            (-(w / 6.0).powi(2)).exp() * (1.0 + 0.5 * (p - 0.3).cos())
        })
        .unwrap();
        let up = g.update(&outcome(12, 50, 40, 50), 0.0, 0.4).unwrap();
        for (a, b) in g.omega_marginal().iter().zip(up.posterior.omega_marginal()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn moments_of_concentrated_grid() {
        let mut w = vec![0.0; 64 * 8];
        w[10 * 8 + 3] = 1.0;
        let g = PosteriorGrid::from_weights((0.0, 64.0), 64, 8, w).unwrap();
        let est = g.moments();
        assert!((est.omega_mean - 10.5).abs() < 1e-12);
        assert!(est.omega_err <= g.omega_step());
        assert!(est.phi0_err <= g.phi0_step());
        assert!((est.phi0_mean - g.phi0(3)).abs() < 1e-12);
    }

    #[test]
    fn moments_of_gaussian() {
        let g = gaussian_grid(200.0, 10.0);
        let est = g.moments();
        let h = g.omega_step();
        let center = -50.0 + 200.5 * h;
        assert!((est.omega_mean - center).abs() < 0.01 * 10.0 * h);
        assert!((est.omega_err / (10.0 * h) - 1.0).abs() < 0.01);
    }

    #[test]
    fn gaussian_entropy() {
        for sigma in [5.0, 10.0, 25.0] {
            let g = gaussian_grid(200.0, sigma);
            let s = sigma * g.omega_step();
            let exact = -0.5 * (TAU * std::f64::consts::E * s * s).ln();
            let info = g.shannon_information(Axis::Omega);
            assert!(((info - exact) / exact).abs() < 0.01, "{info} vs {exact}");
        }
        assert!(gaussian_grid(200.0, 5.0).shannon_information(Axis::Omega)
            > gaussian_grid(200.0, 10.0).shannon_information(Axis::Omega));
    }

    #[test]
    fn broadening_adds_variance_in_quadrature() {
        let g = gaussian_grid(200.0, 20.0);
        assert_eq!(g.broaden(0.0).unwrap(), g);
        let before = g.moments();
        for f in [0.05, 0.3, 1.0] {
            let b = g.broaden(f).unwrap();
            let after = b.moments();
            let expected = before.omega_err * (1.0 + f * f).sqrt();
            assert!((after.omega_err / expected - 1.0).abs() < 0.02, "f={f}");
            assert!((after.omega_mean - before.omega_mean).abs() < 1e-6 * g.omega_step());
            assert!((total_mass(&b) - 1.0).abs() < 1e-9);
        }
        assert!(g.broaden(-0.1).is_err());
    }

    #[test]
    fn underflow_reported() {
        // prior concentrated where the outcome is essentially impossible
        let g = PosteriorGrid::from_fn((-1.0, 1.0), 16, 64, |_, p| if p.abs() < 0.05 { 1.0 } else { 0.0 }).unwrap();
        let res = g.update(&outcome(20000, 20000, 10000, 20000), 0.0, 0.0);
        assert!(matches!(res, Err(Error::MassUnderflow)));
    }
}
