//! Pathwise stochastic convolution `z(t) = ∫₀^t S(t−s) Φ dW(s)`.
//!
//! Each scalar mode solves `dz = −νλ z dt + φ dβ`. Over one step the
//! stochastic integral is rewritten by parts,
//!
//! ```text
//! ∫ e^{−r(t₁−s)} dβ(s) = β(t₁) − e^{−rΔt} β(t₀) − r ∫ e^{−r(t₁−s)} β(s) ds,
//! ```
//!
//! and the ordinary integral uses the trapezoid rule on `quadrature_order`
//! sub-intervals of the piecewise-linear interpolant of `β`. Because `β` is
//! linear inside a step, the rule reduces to two precomputed weights per mode.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fbm::{CylindricalPath, HurstGrid};
use crate::rng::{substream, Purpose};
use crate::spectral::{NoiseOperator, SpectralField, StokesModel};

/// `z` on every point of a time grid, stored per mode.
#[derive(Clone)]
pub struct ConvolutionTrajectory {
    model: Arc<StokesModel>,
    noise_operator: NoiseOperator,
    grid: HurstGrid,
    quadrature_order: usize,
    /// `modes[j][n]` is the coefficient of mode `j` at grid point `n`.
    modes: Vec<Vec<f64>>,
}

impl std::fmt::Debug for ConvolutionTrajectory {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConvolutionTrajectory")
            .field("model", self.model.spec())
            .field("noise_operator", &self.noise_operator)
            .field("grid", &self.grid)
            .field("quadrature_order", &self.quadrature_order)
            .finish()
    }
}

impl ConvolutionTrajectory {
    /// The identically zero trajectory.
    pub fn zero(model: &Arc<StokesModel>, grid: HurstGrid) -> Self {
        Self {
            model: model.clone(),
            noise_operator: NoiseOperator::silent(),
            grid,
            quadrature_order: 1,
            modes: vec![vec![0.0; grid.n_steps() + 1]; model.n_modes()],
        }
    }

    pub fn model(&self) -> &Arc<StokesModel> {
        &self.model
    }

    pub fn noise_operator(&self) -> NoiseOperator {
        self.noise_operator
    }

    pub fn grid(&self) -> &HurstGrid {
        &self.grid
    }

    pub fn quadrature_order(&self) -> usize {
        self.quadrature_order
    }

    pub fn n_points(&self) -> usize {
        self.grid.n_steps() + 1
    }

    pub fn mode(&self, j: usize) -> &[f64] {
        &self.modes[j]
    }

    /// Modal coefficients at grid point `n`.
    pub fn modal_state(&self, n: usize) -> Vec<f64> {
        self.modes.iter().map(|m| m[n]).collect()
    }

    /// `z(t_n)` as a field.
    pub fn state(&self, n: usize) -> SpectralField {
        SpectralField::from_real_modes(&self.model, &self.modal_state(n))
            .expect("mode count matches model")
    }

    pub fn states(&self) -> Vec<SpectralField> {
        (0..self.n_points()).map(|n| self.state(n)).collect()
    }

    /// Same trajectory restricted to every `factor`-th grid point.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let modes = self.modes.iter().map(|m| m.iter().step_by(factor).copied().collect()).collect();
        Ok(Self { grid, modes, ..self.clone() })
    }

    /// The first `n_steps` steps, as a trajectory on `[0, n_steps·Δt]`.
    pub fn truncated(&self, n_steps: usize) -> Result<Self> {
        if n_steps == 0 || n_steps > self.grid.n_steps() {
            return Err(Error::GridMismatch(format!(
                "cannot keep {n_steps} of {} steps",
                self.grid.n_steps()
            )));
        }
        let grid = HurstGrid::new(self.grid.hurst(), n_steps as f64 * self.grid.dt(), n_steps)?;
        let modes = self.modes.iter().map(|m| m[..=n_steps].to_vec()).collect();
        Ok(Self {
            model: self.model.clone(),
            noise_operator: self.noise_operator,
            grid,
            quadrature_order: self.quadrature_order,
            modes,
        })
    }
}

/// Per-mode weights of the integration-by-parts step.
#[derive(Debug, Clone, Copy)]
struct StepWeights {
    decay: f64,
    /// `rΔt·∫₀¹ e^{−rΔt(1−θ)} dθ` by the trapezoid rule.
    w0: f64,
    /// `rΔt·∫₀¹ θ e^{−rΔt(1−θ)} dθ` by the trapezoid rule.
    w1: f64,
}

impl StepWeights {
    fn new(rate: f64, dt: f64, order: usize) -> Self {
        let x = rate * dt;
        let m = order as f64;
        let (mut w0, mut w1) = (0.0, 0.0);
        for i in 0..=order {
            let theta = i as f64 / m;
            let c = if i == 0 || i == order { 0.5 } else { 1.0 };
            let e = (-x * (1.0 - theta)).exp();
            w0 += c * e;
            w1 += c * theta * e;
        }
        Self { decay: (-x).exp(), w0: x * w0 / m, w1: x * w1 / m }
    }

    /// `∫_{t₀}^{t₁} e^{−r(t₁−s)} dβ(s)` for a path linear between `b0` and `b1`.
    fn increment(&self, b0: f64, b1: f64) -> f64 {
        b1 - self.decay * b0 - (self.w0 * b0 + self.w1 * (b1 - b0))
    }
}

/// `z` for one scalar mode with decay `rate = νλ` and multiplier `phi`,
/// driven by the grid values of `beta` (spacing `dt`).
pub fn convolve_mode(rate: f64, phi: f64, beta: &[f64], dt: f64, quadrature_order: usize) -> Vec<f64> {
    let w = StepWeights::new(rate, dt, quadrature_order.max(1));
    let mut z = Vec::with_capacity(beta.len());
    let mut cur = 0.0;
    z.push(cur);
    for pair in beta.windows(2) {
        cur = w.decay * cur + phi * w.increment(pair[0], pair[1]);
        z.push(cur);
    }
    z
}

/// Mode-by-mode convolution of `noise` with `S(t)Φ`.
pub fn convolve(
    noise: &CylindricalPath,
    model: &Arc<StokesModel>,
    noise_operator: NoiseOperator,
    quadrature_order: usize,
) -> Result<ConvolutionTrajectory> {
    if quadrature_order == 0 {
        return domain("quadrature_order must be at least 1");
    }
    let n_modes = model.n_modes();
    if noise.n_modes() < n_modes {
        return Err(Error::GridMismatch(format!(
            "noise has {} modes, model needs {n_modes}",
            noise.n_modes()
        )));
    }
    if let Some(bad) = noise.paths.iter().take(n_modes).find(|p| p.grid != noise.grid) {
        return Err(Error::GridMismatch(format!("mode path on {:?}", bad.grid)));
    }
    let dt = noise.grid.dt();
    let nu = model.viscosity();
    let phi = noise_operator.multipliers(model);
    let modes = model
        .eigenvalues()
        .iter()
        .zip(&phi)
        .zip(&noise.paths)
        .map(|((&lam, &f), path)| convolve_mode(nu * lam, f, &path.values, dt, quadrature_order))
        .collect();
    Ok(ConvolutionTrajectory {
        model: model.clone(),
        noise_operator,
        grid: noise.grid,
        quadrature_order,
        modes,
    })
}

/// Exact-in-law Ornstein–Uhlenbeck sampler for Brownian forcing: each step
/// adds a Gaussian with variance `φ²(1 − e^{−2rΔt})/(2r)`.
pub fn exact_ou(
    model: &Arc<StokesModel>,
    noise_operator: NoiseOperator,
    grid: HurstGrid,
    seed: u64,
) -> Result<ConvolutionTrajectory> {
    if grid.hurst() != 0.5 {
        return domain(format!("exact OU sampling needs hurst = 0.5, got {}", grid.hurst()));
    }
    let dt = grid.dt();
    let nu = model.viscosity();
    let phi = noise_operator.multipliers(model);
    let modes = model
        .eigenvalues()
        .iter()
        .zip(&phi)
        .enumerate()
        .map(|(j, (&lam, &f))| {
            let r = nu * lam;
            let decay = (-r * dt).exp();
            let sd = if r * dt < 1e-12 { dt.sqrt() } else { ((1.0 - decay * decay) / (2.0 * r)).sqrt() };
            let mut rng = substream(seed, Purpose::ExactOu, j as u64);
            let mut z = Vec::with_capacity(grid.n_steps() + 1);
            let mut cur = 0.0;
            z.push(cur);
            for _ in 0..grid.n_steps() {
                let xi: f64 = rng.sample(StandardNormal);
                cur = decay * cur + f * sd * xi;
                z.push(cur);
            }
            z
        })
        .collect();
    Ok(ConvolutionTrajectory {
        model: model.clone(),
        noise_operator,
        grid,
        quadrature_order: 0,
        modes,
    })
}

/// Outcome of a truncation-refinement study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityOptions {
    /// Ratio of successive increments separating decay from growth.
    pub ratio_threshold: f64,
    /// Number of trailing ratios that must agree for a verdict.
    pub window: usize,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        Self { ratio_threshold: 0.9, window: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementPoint {
    /// Wavenumber cutoff: modes with `λ ≤ cutoff²` are kept.
    pub cutoff: f64,
    pub n_modes: usize,
    pub sup_norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub alpha: f64,
    /// `sup_n ‖z(t_n)‖_{H^α}` with every mode of the trajectory.
    pub sup_norm: f64,
    pub curve: Vec<RefinementPoint>,
    /// `curve[l+1].sup_norm − curve[l].sup_norm`.
    pub increments: Vec<f64>,
    /// Successive increment ratios.
    pub ratios: Vec<f64>,
    pub verdict: Verdict,
}

/// Cutoffs `first, 2·first, 4·first, …` up to the largest retained `sqrt(λ)`.
pub fn doubling_cutoffs(model: &StokesModel, first: f64) -> Vec<f64> {
    let top = model.eigenvalues().last().copied().unwrap_or(0.0).sqrt();
    let mut out = Vec::new();
    let mut c = first;
    while c <= top * (1.0 + 1e-12) {
        out.push(c);
        c *= 2.0;
    }
    out
}

/// Sup over the grid of the `H^α` norm of `z`, and its dependence on the
/// spectral cutoff. Cutoffs double in wavenumber, so on the torus each level
/// keeps roughly `2^d` times as many modes as the last.
pub fn regularity_probe(
    trajectory: &ConvolutionTrajectory,
    alpha: f64,
    cutoffs: &[f64],
    options: RegularityOptions,
) -> Result<RegularityReport> {
    if alpha < 0.0 {
        return domain("alpha must be nonnegative");
    }
    if cutoffs.windows(2).any(|w| w[1] <= w[0]) {
        return domain("cutoffs must increase");
    }
    let model = trajectory.model();
    let eig = model.eigenvalues();
    let weights: Vec<f64> = eig.iter().map(|&l| l.powf(alpha)).collect();
    // Level of each mode: first cutoff that keeps it; modes above the last
    // cutoff only enter the full norm.
    let levels = cutoffs.len();
    let level_of: Vec<usize> = eig
        .iter()
        .map(|&l| cutoffs.iter().position(|&c| l <= c * c * (1.0 + 1e-12)).unwrap_or(levels))
        .collect();
    let mut sup = vec![0.0f64; levels + 1];
    let mut shell = vec![0.0f64; levels + 1];
    for n in 0..trajectory.n_points() {
        shell.iter_mut().for_each(|s| *s = 0.0);
        for (j, m) in trajectory.modes.iter().enumerate() {
            shell[level_of[j]] += weights[j] * m[n] * m[n];
        }
        let mut acc = 0.0;
        for (l, s) in shell.iter().enumerate() {
            acc += s;
            sup[l] = sup[l].max(acc.sqrt());
        }
    }
    let curve: Vec<RefinementPoint> = cutoffs
        .iter()
        .enumerate()
        .map(|(l, &c)| RefinementPoint {
            cutoff: c,
            n_modes: level_of.iter().filter(|&&x| x <= l).count(),
            sup_norm: sup[l],
        })
        .collect();
    let increments: Vec<f64> = curve.windows(2).map(|w| w[1].sup_norm - w[0].sup_norm).collect();
    let ratios: Vec<f64> = increments.windows(2).map(|w| w[1] / w[0]).collect();
    let verdict = classify(&ratios, options);
    Ok(RegularityReport { alpha, sup_norm: sup[levels], curve, increments, ratios, verdict })
}

/// Ensemble version of [`regularity_probe`]: averages the refinement curves
/// of independent realisations level by level before forming increments.
/// Averaging removes most of the sampling noise of the low levels.
pub fn average_reports(reports: &[RegularityReport], options: RegularityOptions) -> Result<RegularityReport> {
    let Some(first) = reports.first() else {
        return domain("no reports to average");
    };
    if reports.iter().any(|r| r.curve.len() != first.curve.len() || r.alpha != first.alpha) {
        return domain("reports must share alpha and cutoffs");
    }
    let k = reports.len() as f64;
    let curve: Vec<RefinementPoint> = (0..first.curve.len())
        .map(|l| RefinementPoint {
            sup_norm: reports.iter().map(|r| r.curve[l].sup_norm).sum::<f64>() / k,
            ..first.curve[l]
        })
        .collect();
    let increments: Vec<f64> = curve.windows(2).map(|w| w[1].sup_norm - w[0].sup_norm).collect();
    let ratios: Vec<f64> = increments.windows(2).map(|w| w[1] / w[0]).collect();
    let verdict = classify(&ratios, options);
    Ok(RegularityReport {
        alpha: first.alpha,
        sup_norm: reports.iter().map(|r| r.sup_norm).sum::<f64>() / k,
        curve,
        increments,
        ratios,
        verdict,
    })
}

fn classify(ratios: &[f64], options: RegularityOptions) -> Verdict {
    if options.window == 0 || ratios.len() < options.window {
        return Verdict::Inconclusive;
    }
    let tail = &ratios[ratios.len() - options.window..];
    // A zero increment followed by zero is perfect convergence.
    let below = |r: f64| r.is_nan() || r < options.ratio_threshold;
    if tail.iter().all(|&r| below(r)) {
        Verdict::Convergent
    } else if tail.iter().all(|&r| r >= options.ratio_threshold) {
        Verdict::Divergent
    } else {
        Verdict::Inconclusive
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// Fitted exponent; `None` when every increment vanishes.
    pub exponent: Option<f64>,
    /// Half-width of the 95% band.
    pub band: f64,
    pub degenerate: bool,
    /// `(h, RMS ‖z(t+h) − z(t)‖_{H^α})` pairs used in the fit.
    pub points: Vec<(f64, f64)>,
}

/// Temporal Hölder exponent of `z` in `H^α`: the least-squares slope of
/// `log RMS‖z(t+h) − z(t)‖` against `log h` over dyadic lags, pooled over
/// all supplied trajectories. With several trajectories the band comes from
/// the spread of their individual slopes; with one, from the fit residuals.
pub fn holder_probe(trajectories: &[ConvolutionTrajectory], alpha: f64) -> Result<HolderEstimate> {
    let Some(first) = trajectories.first() else {
        return domain("no trajectories supplied");
    };
    if trajectories.iter().any(|t| t.grid != first.grid || t.model.spec() != first.model.spec()) {
        return Err(Error::GridMismatch("trajectories must share grid and model".into()));
    }
    let n = first.grid.n_steps();
    let lags: Vec<usize> = (0..).map(|k| 1usize << k).take_while(|&h| 4 * h <= n).collect();
    if lags.len() < 2 {
        return domain("grid too short for a Hölder fit");
    }
    let weights: Vec<f64> = first.model.eigenvalues().iter().map(|&l| l.powf(alpha)).collect();
    let mean_sq = |traj: &ConvolutionTrajectory, h: usize| -> f64 {
        let mut total = 0.0;
        for (m, w) in traj.modes.iter().zip(&weights) {
            total += w * m.windows(h + 1).map(|x| (x[h] - x[0]).powi(2)).sum::<f64>();
        }
        total / (n + 1 - h) as f64
    };
    let per_traj: Vec<Vec<f64>> =
        trajectories.iter().map(|t| lags.iter().map(|&h| mean_sq(t, h)).collect()).collect();
    let dt = first.grid.dt();
    let pooled: Vec<f64> = (0..lags.len())
        .map(|i| per_traj.iter().map(|v| v[i]).sum::<f64>() / per_traj.len() as f64)
        .collect();
    let points: Vec<(f64, f64)> = lags.iter().zip(&pooled).map(|(&h, &ms)| (h as f64 * dt, ms.sqrt())).collect();
    if pooled.iter().all(|&v| v == 0.0) {
        return Ok(HolderEstimate { exponent: None, band: f64::NAN, degenerate: true, points });
    }
    let fit = |ms: &[f64]| -> (f64, f64) {
        let xy: Vec<(f64, f64)> =
            lags.iter().zip(ms).map(|(&h, &v)| ((h as f64 * dt).ln(), 0.5 * v.ln())).collect();
        slope_with_se(&xy)
    };
    let (slope, se_fit) = fit(&pooled);
    let band = if trajectories.len() >= 2 {
        let slopes: Vec<f64> = per_traj.iter().map(|v| fit(v).0).collect();
        let k = slopes.len() as f64;
        let mean = slopes.iter().sum::<f64>() / k;
        let var = slopes.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (k - 1.0);
        1.96 * (var / k).sqrt()
    } else {
        1.96 * se_fit
    };
    Ok(HolderEstimate { exponent: Some(slope), band, degenerate: false, points })
}

fn slope_with_se(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let resid: f64 = points.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum();
    let se = if points.len() > 2 { (resid / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    (slope, se)
}
