//! Local mild solutions of the stochastic Navier–Stokes system.
//!
//! With `z` the stochastic convolution, `v = u − z` solves
//! `v(t) = S(t)u₀ + ∫₀^t S(t−s) B(v(s) + z(s)) ds`. The solver fixes the
//! random constant `K₀ = max(‖u₀‖_p, sup_t ‖z(t)‖_p)`, derives the horizon
//! `τ` on which the Picard map contracts, and iterates it on a grid of
//! `[0, τ]` with exponential quadrature of the Duhamel integral. A direct
//! exponential-Euler integrator on `u` serves as an independent check.

use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::convolution::{convolve, ConvolutionTrajectory};
use crate::error::{domain, Error, Result};
use crate::estimates::{check_admissibility, AdmissibilityReport};
use crate::fbm::{refine_cylindrical, sample_cylindrical, CylindricalPath, HurstGrid};
use crate::spectral::calibrate::calibrate_semigroup_constant;
use crate::spectral::{snapshot, ModelSpec, NoiseOperator, SpectralField, StokesModel};

/// A constant that is either given or measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstantSpec {
    Value(f64),
    /// Measured from random fields.
    Named(NamedConstant),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedConstant {
    Calibrated,
}

impl Default for ConstantSpec {
    fn default() -> Self {
        ConstantSpec::Value(1.0)
    }
}

/// Quadrature of the Duhamel integral over one step. Both rules integrate
/// the linear part exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DuhamelRule {
    /// Linear interpolation of the forcing between the step endpoints.
    #[default]
    ExpTrapezoid,
    /// Forcing frozen at the left endpoint.
    ExpEuler,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    #[default]
    Zero,
    /// Random solenoidal field with spectrum `(1 + λ)^{−decay/2}`, rescaled
    /// to the given L² norm.
    Random { seed: u64, l2_norm: f64, #[serde(default = "default_decay")] decay: f64 },
    Snapshot { path: PathBuf },
}

fn default_decay() -> f64 {
    4.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    pub model: ModelSpec,
    pub noise: NoiseOperator,
    pub hurst: f64,
    pub p_exponent: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub seed: u64,
    #[serde(default)]
    pub m_constant: ConstantSpec,
    #[serde(default = "default_iters")]
    pub max_picard_iters: usize,
    #[serde(default = "default_tol")]
    pub picard_tol: f64,
    #[serde(default)]
    pub duhamel_rule: DuhamelRule,
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    #[serde(default = "default_local_steps")]
    pub min_local_steps: usize,
    #[serde(default)]
    pub initial_condition: InitialCondition,
}

fn default_iters() -> usize {
    60
}
fn default_tol() -> f64 {
    1e-12
}
fn default_order() -> usize {
    4
}
fn default_local_steps() -> usize {
    64
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        let d = self.model.dim as f64;
        if !(self.p_exponent > d && self.p_exponent.is_finite()) {
            return domain(format!("p_exponent must exceed the dimension {d}, got {}", self.p_exponent));
        }
        if !(self.picard_tol > 0.0) {
            return domain("picard_tol must be positive");
        }
        if self.max_picard_iters == 0 || self.min_local_steps == 0 || self.quadrature_order == 0 {
            return domain("iteration counts, local steps and quadrature order must be positive");
        }
        if let ConstantSpec::Value(m) = self.m_constant {
            if !(m > 0.0 && m.is_finite()) {
                return domain(format!("M constant must be positive, got {m}"));
            }
        }
        HurstGrid::new(self.hurst, self.t_final, self.n_steps)?;
        Ok(())
    }
}

/// `max(‖u₀‖_p, max_n ‖z(t_n)‖_p)`.
pub fn compute_k0(u0: &SpectralField, z: &ConvolutionTrajectory, p: f64) -> Result<f64> {
    u0.model().ensure_same(z.model())?;
    let mut k0 = u0.lp_norm(p)?;
    for n in 0..z.n_points() {
        k0 = k0.max(z.state(n).lp_norm(p)?);
    }
    Ok(k0)
}

/// `min{T, ((p−d)/(20 p M K₀))^{2p/(p−d)}}`.
pub fn compute_tau(p: f64, d: usize, m: f64, k0: f64, t_final: f64) -> Result<f64> {
    let df = d as f64;
    if !(p > df) {
        return domain(format!("need p > d, got p={p}, d={d}"));
    }
    if !(m > 0.0) || k0 < 0.0 {
        return domain("M must be positive and K0 nonnegative");
    }
    if k0 == 0.0 {
        return Ok(t_final);
    }
    let (num, den, e) = (p - df, 20.0 * p * m * k0, 2.0 * p / (p - df));
    // Raising numerator and denominator separately keeps integer data exact;
    // the quotient form is the fallback when either power leaves the range.
    let (a, b) = (num.powf(e), den.powf(e));
    let tau = if a.is_normal() && b.is_normal() { a / b } else { (num / den).powf(e) };
    Ok(t_final.min(tau))
}

/// `C₀ = (12 p M K₀/(p−d)) τ^{1/2 − d/(2p)}`.
pub fn contraction_constant(p: f64, d: usize, m: f64, k0: f64, tau: f64) -> f64 {
    let df = d as f64;
    12.0 * p * m * k0 / (p - df) * tau.powf(0.5 - df / (2.0 * p))
}

/// `(1 − e^{−x})/x` and `(x − 1 + e^{−x})/x²`.
fn phi12(x: f64) -> (f64, f64) {
    if x < 1e-2 {
        let x2 = x * x;
        let phi1 = 1.0 - x / 2.0 + x2 / 6.0 - x2 * x / 24.0 + x2 * x2 / 120.0 - x2 * x2 * x / 720.0;
        let phi2 = 0.5 - x / 6.0 + x2 / 24.0 - x2 * x / 120.0 + x2 * x2 / 720.0 - x2 * x2 * x / 5040.0;
        (phi1, phi2)
    } else {
        let em1 = (-x).exp_m1();
        (-em1 / x, (x + em1) / (x * x))
    }
}

struct StepWeights {
    decay: Vec<f64>,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl StepWeights {
    fn new(model: &StokesModel, dt: f64, rule: DuhamelRule) -> Self {
        let nu = model.viscosity();
        let n = model.wave_sq().len();
        let mut w = Self { decay: Vec::with_capacity(n), left: Vec::with_capacity(n), right: Vec::with_capacity(n) };
        for &l in model.wave_sq() {
            let x = nu * l * dt;
            let (phi1, phi2) = phi12(x);
            w.decay.push((-x).exp());
            match rule {
                DuhamelRule::ExpEuler => {
                    w.left.push(dt * phi1);
                    w.right.push(0.0);
                }
                DuhamelRule::ExpTrapezoid => {
                    w.left.push(dt * (phi1 - phi2));
                    w.right.push(dt * phi2);
                }
            }
        }
        w
    }
}

fn coeffs(f: &SpectralField) -> Result<&[Complex64]> {
    f.fourier().ok_or(Error::UnsupportedBackend { op: "mild solver", required: "fourier_periodic" })
}

/// `w(t₀) = u₀`, `w(t_{n+1}) = S(Δt) w(t_n) + Q_n` with `Q_n` the
/// exponential quadrature of `∫ S(t_{n+1}−s) F(s) ds` from `forcing` at the
/// grid points.
fn duhamel(u0: &SpectralField, forcing: &[SpectralField], dt: f64, rule: DuhamelRule) -> Result<Vec<SpectralField>> {
    let model = u0.model().clone();
    let d = model.dim();
    let w = StepWeights::new(&model, dt, rule);
    let mut out = Vec::with_capacity(forcing.len());
    let mut cur = coeffs(u0)?.to_vec();
    out.push(u0.clone());
    for pair in forcing.windows(2) {
        let f0 = coeffs(&pair[0])?;
        let f1 = coeffs(&pair[1])?;
        for i in 0..w.decay.len() {
            for a in 0..d {
                let k = i * d + a;
                cur[k] = cur[k] * w.decay[i] + f0[k] * w.left[i] + f1[k] * w.right[i];
            }
        }
        out.push(SpectralField::from_fourier(&model, cur.clone())?);
    }
    Ok(out)
}

/// One application of the Picard map: `w(t) = S(t)u₀ + ∫₀^t S(t−s) F(s) ds`
/// with `F = B(z + v_prev)`, or `F = 0` when `with_convection` is false.
pub fn picard_step(
    v_prev: &[SpectralField],
    z: &[SpectralField],
    u0: &SpectralField,
    dt: f64,
    rule: DuhamelRule,
    with_convection: bool,
) -> Result<Vec<SpectralField>> {
    if v_prev.len() != z.len() {
        return Err(Error::GridMismatch(format!("{} iterate points vs {} noise points", v_prev.len(), z.len())));
    }
    let forcing = if with_convection {
        v_prev
            .iter()
            .zip(z)
            .map(|(v, zz)| {
                let u = v.add(zz)?;
                u.bilinear(&u)
            })
            .collect::<Result<Vec<_>>>()?
    } else {
        vec![SpectralField::zeros(u0.model()); v_prev.len()]
    };
    duhamel(u0, &forcing, dt, rule)
}

/// Initial iterate of the Picard scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PicardStart {
    /// `v⁰ ≡ u₀`.
    InitialData,
    /// `v⁰ ≡ 0`.
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    pub k0: f64,
    pub tau: f64,
    pub c0: f64,
    pub m_constant: f64,
    /// End of the grid actually solved on (`≤ τ`).
    pub horizon: f64,
    pub local_steps: usize,
    /// The grid on `[0, τ]` was refined below the configured step.
    pub refined_grid: bool,
    pub iteration_gaps: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `sup_{j,n} ‖v^j(t_n)‖_p`.
    pub sup_iterate_norm: f64,
    /// `sup_iterate_norm ≤ 2 K₀ (1 + 0.05)`.
    pub uniform_bound_ok: bool,
    pub max_divergence_residual: f64,
    pub admissibility: AdmissibilityReport,
}

pub struct LocalSolution {
    pub times: Vec<f64>,
    pub u: Vec<SpectralField>,
    pub v: Vec<SpectralField>,
    pub diagnostics: SolveDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DirectStatus {
    Completed,
    BlowUp { time: f64, norm: f64, guard: f64 },
}

pub struct DirectSolution {
    pub times: Vec<f64>,
    pub u: Vec<SpectralField>,
    pub status: DirectStatus,
    pub k0: f64,
}

/// Everything a solve needs that is fixed by the configuration: model,
/// initial data, noise on the configured grid and its convolution.
pub struct Setup {
    pub config: SolveConfig,
    pub model: Arc<StokesModel>,
    pub u0: SpectralField,
    pub noise: CylindricalPath,
    pub z: ConvolutionTrajectory,
    pub m_value: f64,
    pub k0: f64,
}

impl Setup {
    pub fn new(config: SolveConfig) -> Result<Self> {
        config.validate()?;
        let model = config.model.build()?;
        model.require_fourier("mild solver")?;
        let u0 = initial_field(&model, &config.initial_condition)?;
        Self::with_initial(config, u0)
    }

    pub fn with_initial(config: SolveConfig, u0: SpectralField) -> Result<Self> {
        config.validate()?;
        let model = u0.model().clone();
        if *model.spec() != config.model {
            return Err(Error::ModelMismatch("initial field is not on the configured model".into()));
        }
        model.require_fourier("mild solver")?;
        let grid = HurstGrid::new(config.hurst, config.t_final, config.n_steps)?;
        let noise = sample_cylindrical(grid, model.n_modes(), config.seed)?;
        let z = convolve(&noise, &model, config.noise, config.quadrature_order)?;
        let m_value = match config.m_constant {
            ConstantSpec::Value(m) => m,
            ConstantSpec::Named(NamedConstant::Calibrated) => {
                calibrate_semigroup_constant(&model, config.p_exponent, 0)?
            }
        };
        let k0 = compute_k0(&u0, &z, config.p_exponent)?;
        Ok(Self { config, model, u0, noise, z, m_value, k0 })
    }

    pub fn tau(&self) -> Result<f64> {
        compute_tau(self.config.p_exponent, self.model.dim(), self.m_value, self.k0, self.config.t_final)
    }
}

pub fn initial_field(model: &Arc<StokesModel>, ic: &InitialCondition) -> Result<SpectralField> {
    match ic {
        InitialCondition::Zero => Ok(SpectralField::zeros(model)),
        InitialCondition::Random { seed, l2_norm, decay } => {
            let f = SpectralField::random(model, *seed, 0, *decay);
            let n = f.l2_norm();
            Ok(if n > 0.0 { f.scale(l2_norm / n) } else { f })
        }
        InitialCondition::Snapshot { path } => {
            let file = std::io::BufReader::new(std::fs::File::open(path)?);
            Ok(snapshot::read_snapshot(file, Some(model))?.0)
        }
    }
}

/// Noise convolution on the grid used for the Picard iteration.
struct LocalPlan {
    k0: f64,
    tau: f64,
    z: ConvolutionTrajectory,
    refined: bool,
}

fn plan_local(setup: &Setup, horizon: Option<f64>) -> Result<LocalPlan> {
    let cfg = &setup.config;
    let d = setup.model.dim();
    let p = cfg.p_exponent;
    let dt = setup.z.grid().dt();
    let mut k0 = setup.k0;
    for _ in 0..8 {
        let tau = compute_tau(p, d, setup.m_value, k0, cfg.t_final)?;
        let h = match horizon {
            Some(h) if h > tau * (1.0 + 1e-12) => {
                return domain(format!("horizon {h} exceeds tau {tau}"));
            }
            Some(h) => h,
            None => tau,
        };
        let n_in = ((h / dt) * (1.0 + 1e-12)).floor() as usize;
        if n_in >= cfg.min_local_steps {
            let z = truncate(&setup.z, n_in.min(cfg.n_steps))?;
            return Ok(LocalPlan { k0, tau, z, refined: false });
        }
        let fine = HurstGrid::new(cfg.hurst, h, cfg.min_local_steps)?;
        let noise = refine_cylindrical(&setup.noise, fine)?;
        let z = convolve(&noise, &setup.model, cfg.noise, cfg.quadrature_order)?;
        let mut fine_sup: f64 = 0.0;
        for n in 0..z.n_points() {
            fine_sup = fine_sup.max(z.state(n).lp_norm(p)?);
        }
        if fine_sup <= k0 || horizon.is_some() {
            return Ok(LocalPlan { k0, tau, z, refined: true });
        }
        k0 = fine_sup;
    }
    Err(Error::Domain("local grid refinement did not settle K0".into()))
}

/// First `n` steps of a trajectory as a trajectory on `[0, n·dt]`.
fn truncate(z: &ConvolutionTrajectory, n: usize) -> Result<ConvolutionTrajectory> {
    if n == z.grid().n_steps() {
        return Ok(z.clone());
    }
    z.truncated(n)
}

struct PicardRun {
    v: Vec<SpectralField>,
    gaps: Vec<f64>,
    sup_norm: f64,
    converged: bool,
}

fn run_picard(
    u0: &SpectralField,
    z: &[SpectralField],
    dt: f64,
    cfg: &SolveConfig,
    start: PicardStart,
) -> Result<PicardRun> {
    let p = cfg.p_exponent;
    let init = match start {
        PicardStart::InitialData => u0.clone(),
        PicardStart::Zero => SpectralField::zeros(u0.model()),
    };
    let mut v = vec![init; z.len()];
    let mut sup_norm = v[0].lp_norm(p)?;
    let mut gaps = Vec::new();
    for _ in 0..cfg.max_picard_iters {
        let next = picard_step(&v, z, u0, dt, cfg.duhamel_rule, true)?;
        let mut gap: f64 = 0.0;
        for (a, b) in next.iter().zip(&v) {
            gap = gap.max(a.sub(b)?.lp_norm(p)?);
        }
        for f in &next {
            sup_norm = sup_norm.max(f.lp_norm(p)?);
        }
        gaps.push(gap);
        v = next;
        if gap <= cfg.picard_tol {
            return Ok(PicardRun { v, gaps, sup_norm, converged: true });
        }
    }
    Ok(PicardRun { v, gaps, sup_norm, converged: false })
}

fn finish(setup: &Setup, plan: &LocalPlan, run: PicardRun) -> Result<LocalSolution> {
    let cfg = &setup.config;
    let d = setup.model.dim();
    let p = cfg.p_exponent;
    if !run.converged {
        return Err(Error::NonConvergence {
            iterations: run.gaps.len(),
            last_gap: run.gaps.last().copied().unwrap_or(f64::NAN),
            gaps: run.gaps,
        });
    }
    let z_states = plan.z.states();
    let u = run.v.iter().zip(&z_states).map(|(v, z)| v.add(z)).collect::<Result<Vec<_>>>()?;
    let max_div = u.iter().map(|f| f.divergence_residual()).fold(0.0, f64::max);
    let diagnostics = SolveDiagnostics {
        k0: plan.k0,
        tau: plan.tau,
        c0: contraction_constant(p, d, setup.m_value, plan.k0, plan.tau),
        m_constant: setup.m_value,
        horizon: plan.z.grid().t_final(),
        local_steps: plan.z.grid().n_steps(),
        refined_grid: plan.refined,
        iterations: run.gaps.len(),
        iteration_gaps: run.gaps,
        converged: true,
        sup_iterate_norm: run.sup_norm,
        uniform_bound_ok: run.sup_norm <= 2.0 * plan.k0 * 1.05,
        max_divergence_residual: max_div,
        admissibility: check_admissibility(d, p, cfg.noise.q_exponent, cfg.hurst),
    };
    Ok(LocalSolution { times: plan.z.grid().times(), u, v: run.v, diagnostics })
}

/// Local mild solution on `[0, τ]`.
pub fn solve_local(setup: &Setup) -> Result<LocalSolution> {
    solve_local_with(setup, None, PicardStart::InitialData)
}

/// Local mild solution on `[0, horizon]` (`horizon ≤ τ`, default `τ`).
pub fn solve_local_with(setup: &Setup, horizon: Option<f64>, start: PicardStart) -> Result<LocalSolution> {
    let plan = plan_local(setup, horizon)?;
    let z_states = plan.z.states();
    let run = run_picard(&setup.u0, &z_states, plan.z.grid().dt(), &setup.config, start)?;
    finish(setup, &plan, run)
}

/// Exponential Euler on `u` driven by the increments of `z`:
/// `u_{n+1} = S(Δt)u_n + Δt φ₁(νλΔt) B(u_n) + z_{n+1} − S(Δt) z_n`.
pub fn exp_euler(
    u0: &SpectralField,
    z: &[SpectralField],
    dt: f64,
    p: f64,
    guard: f64,
    with_convection: bool,
) -> Result<(Vec<SpectralField>, DirectStatus)> {
    let model = u0.model().clone();
    let d = model.dim();
    let w = StepWeights::new(&model, dt, DuhamelRule::ExpEuler);
    let mut out = vec![u0.clone()];
    let mut cur = coeffs(u0)?.to_vec();
    for (n, pair) in z.windows(2).enumerate() {
        let u = out.last().expect("nonempty");
        let b = if with_convection { u.bilinear(u)? } else { SpectralField::zeros(&model) };
        let bc = coeffs(&b)?;
        let z0 = coeffs(&pair[0])?;
        let z1 = coeffs(&pair[1])?;
        for i in 0..w.decay.len() {
            for a in 0..d {
                let k = i * d + a;
                cur[k] = cur[k] * w.decay[i] + bc[k] * w.left[i] + z1[k] - z0[k] * w.decay[i];
            }
        }
        let next = SpectralField::from_fourier(&model, cur.clone())?;
        let norm = next.lp_norm(p)?;
        let time = (n + 1) as f64 * dt;
        let blown = !norm.is_finite() || (guard > 0.0 && norm > guard);
        out.push(next);
        if blown {
            return Ok((out, DirectStatus::BlowUp { time, norm, guard }));
        }
    }
    Ok((out, DirectStatus::Completed))
}

/// Relative blow-up guard of the direct integrator.
pub const BLOW_UP_FACTOR: f64 = 1e6;

/// Direct exponential-Euler run over the whole configured horizon.
pub fn solve_direct(setup: &Setup) -> Result<DirectSolution> {
    let z = setup.z.states();
    let guard = BLOW_UP_FACTOR * setup.k0;
    let (u, status) = exp_euler(&setup.u0, &z, setup.z.grid().dt(), setup.config.p_exponent, guard, true)?;
    let times = setup.z.grid().times()[..u.len()].to_vec();
    Ok(DirectSolution { times, u, status, k0: setup.k0 })
}

fn sup_distance(a: &[SpectralField], b: &[SpectralField], p: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch("trajectories have different lengths".into()));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in a.iter().zip(b) {
        worst = worst.max(x.sub(y)?.lp_norm(p)?);
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// `sup_n ‖u_a(t_n) − u_b(t_n)‖_p` over the common grid.
    pub deviation: f64,
    pub picard_tol: f64,
    pub horizon: f64,
    pub iterations: [usize; 2],
}

/// Solves twice on the same noise, once from `v⁰ = u₀` and once from
/// `v⁰ = 0`, and measures how far apart the two solutions end up.
pub fn uniqueness_probe(setup: &Setup) -> Result<UniquenessReport> {
    let plan = plan_local(setup, None)?;
    let z = plan.z.states();
    let dt = plan.z.grid().dt();
    let a = finish(setup, &plan, run_picard(&setup.u0, &z, dt, &setup.config, PicardStart::InitialData)?)?;
    let b = finish(setup, &plan, run_picard(&setup.u0, &z, dt, &setup.config, PicardStart::Zero)?)?;
    Ok(UniquenessReport {
        deviation: sup_distance(&a.u, &b.u, setup.config.p_exponent)?,
        picard_tol: setup.config.picard_tol,
        horizon: a.diagnostics.horizon,
        iterations: [a.diagnostics.iterations, b.diagnostics.iterations],
    })
}

/// Distance between the solutions driven by two different setups (usually
/// different seeds) on their common horizon `min(τ_a, τ_b)`.
pub fn seed_contrast(a: &Setup, b: &Setup) -> Result<f64> {
    let h = a.tau()?.min(b.tau()?);
    let sa = solve_local_with(a, Some(h), PicardStart::InitialData)?;
    let sb = solve_local_with(b, Some(h), PicardStart::InitialData)?;
    if sa.times.len() != sb.times.len() {
        return Err(Error::GridMismatch("local grids differ".into()));
    }
    sup_distance(&sa.u, &sb.u, a.config.p_exponent)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n_steps: usize,
    pub dt: f64,
    /// `‖u_picard(τ) − u_direct(τ)‖_p`.
    pub scheme_gap: f64,
    /// Previous row's gap over this one.
    pub ratio: f64,
    pub picard_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub tau: f64,
    pub k0: f64,
    pub rows: Vec<ConvergenceRow>,
}

/// Picard (exponential trapezoid) against direct exponential Euler on
/// `[0, τ]` for `levels` step counts `min_local_steps·2^l`. The noise is
/// sampled once on the finest grid and subsampled, so every level sees the
/// same realisation.
pub fn convergence_study(setup: &Setup, levels: usize) -> Result<ConvergenceReport> {
    if levels == 0 {
        return domain("need at least one level");
    }
    let cfg = &setup.config;
    let tau = setup.tau()?;
    let finest = cfg.min_local_steps << (levels - 1);
    let grid = HurstGrid::new(cfg.hurst, tau, finest)?;
    let noise = refine_cylindrical(&setup.noise, grid)?;
    let mut picard_cfg = cfg.clone();
    picard_cfg.duhamel_rule = DuhamelRule::ExpTrapezoid;
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for l in 0..levels {
        let factor = 1 << (levels - 1 - l);
        let level_noise = noise.subsample(factor)?;
        let z = convolve(&level_noise, &setup.model, cfg.noise, cfg.quadrature_order)?.states();
        let dt = level_noise.grid.dt();
        let run = run_picard(&setup.u0, &z, dt, &picard_cfg, PicardStart::InitialData)?;
        if !run.converged {
            return Err(Error::NonConvergence {
                iterations: run.gaps.len(),
                last_gap: run.gaps.last().copied().unwrap_or(f64::NAN),
                gaps: run.gaps,
            });
        }
        let n = z.len() - 1;
        let u_picard = run.v[n].add(&z[n])?;
        let (direct, _) = exp_euler(&setup.u0, &z, dt, cfg.p_exponent, 0.0, true)?;
        let gap = u_picard.sub(&direct[n])?.lp_norm(cfg.p_exponent)?;
        let ratio = rows.last().map_or(f64::NAN, |r| r.scheme_gap / gap);
        rows.push(ConvergenceRow {
            n_steps: level_noise.grid.n_steps(),
            dt,
            scheme_gap: gap,
            ratio,
            picard_iterations: run.gaps.len(),
        });
    }
    Ok(ConvergenceReport { tau, k0: setup.k0, rows })
}
