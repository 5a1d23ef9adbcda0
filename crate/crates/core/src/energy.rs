//! Energy bookkeeping for `v = u − z` in two dimensions.
//!
//! Testing the equation for `v` against `v` gives
//! `½ d/dt ‖v‖² + ν‖∇v‖² = ⟨B(v+z, z), v⟩`. With Ladyzhenskaya's inequality
//! the right side is bounded by `ν‖∇v‖² + (C/2)‖z‖₄⁴(‖v‖² + 1)`, so
//! `‖v‖²` stays below the Gronwall envelope of `E' = C‖z‖₄⁴(E + 1)`.
//! The audit post-processes trajectories; it never integrates the PDE.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::spectral::calibrate::{random_corpus, ConstantEstimate};
use crate::spectral::{SpectralField, StokesModel};

use std::sync::Arc;

/// Relative slack when comparing `‖v‖²` with the envelope.
const ENVELOPE_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub v_l2_sq: Vec<f64>,
    pub grad_v_sq: Vec<f64>,
    pub z_l4_fourth: Vec<f64>,
    pub gronwall_envelope: Vec<f64>,
    /// Discrete energy-identity defect on each step; one fewer than points.
    pub residuals: Vec<f64>,
    /// `max_n |⟨B(v+z, v), v⟩| / (‖v+z‖₂‖∇v‖₂‖v‖₂)` over audited steps.
    pub max_trilinear_defect: f64,
    pub c_constant: f64,
    /// `v_l2_sq ≤ gronwall_envelope` at every point.
    pub pass: bool,
}

impl EnergyLedger {
    /// `max_n |residual_n|`.
    pub fn residual_norm(&self) -> f64 {
        self.residuals.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Whether `p` lies in the range for which the global bound is stated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatedRange {
    Inside,
    /// `2 < p < 4`: audited, but outside the range of the global result.
    Outside,
}

pub fn stated_range(p: f64) -> StatedRange {
    if p >= 4.0 {
        StatedRange::Inside
    } else {
        StatedRange::Outside
    }
}

/// Audits `v` against the Gronwall envelope with constant `c`. `v` and `z`
/// are sampled at `times` (uniform spacing).
pub fn energy_audit(v: &[SpectralField], z: &[SpectralField], times: &[f64], c: f64) -> Result<EnergyLedger> {
    let Some(first) = v.first() else {
        return domain("empty trajectory");
    };
    let model = first.model().clone();
    if model.dim() != 2 || !model.is_fourier() {
        return Err(Error::UnsupportedBackend { op: "energy_audit", required: "fourier_periodic with d=2" });
    }
    if v.len() != z.len() || v.len() != times.len() {
        return Err(Error::GridMismatch(format!(
            "{} v points, {} z points, {} times",
            v.len(),
            z.len(),
            times.len()
        )));
    }
    if !(c >= 0.0 && c.is_finite()) {
        return domain(format!("Gronwall constant must be nonnegative, got {c}"));
    }
    let nu = model.viscosity();
    let n = v.len();
    let mut ledger = EnergyLedger {
        times: times.to_vec(),
        v_l2_sq: Vec::with_capacity(n),
        grad_v_sq: Vec::with_capacity(n),
        z_l4_fourth: Vec::with_capacity(n),
        gronwall_envelope: Vec::with_capacity(n),
        residuals: Vec::with_capacity(n.saturating_sub(1)),
        max_trilinear_defect: 0.0,
        c_constant: c,
        pass: true,
    };
    let mut forcing = Vec::with_capacity(n);
    for (vn, zn) in v.iter().zip(z) {
        model.ensure_same(vn.model())?;
        model.ensure_same(zn.model())?;
        let e = vn.l2_norm().powi(2);
        let g = vn.grad_l2_sq();
        ledger.v_l2_sq.push(e);
        ledger.grad_v_sq.push(g);
        ledger.z_l4_fourth.push(zn.lp_norm(4.0)?.powi(4));
        let w = vn.add(zn)?;
        forcing.push(w.trilinear(zn, vn)?);
        let scale = w.l2_norm() * g.sqrt() * e.sqrt();
        if scale > 0.0 {
            let defect = w.trilinear(vn, vn)?.abs() / scale;
            ledger.max_trilinear_defect = ledger.max_trilinear_defect.max(defect);
        }
    }
    let mut env = ledger.v_l2_sq[0];
    ledger.gronwall_envelope.push(env);
    for k in 0..n - 1 {
        let dt = times[k + 1] - times[k];
        if !(dt > 0.0) {
            return domain("times must be increasing");
        }
        let rate = c * ledger.z_l4_fourth[k] * dt;
        env = (env + rate) * rate.exp();
        ledger.gronwall_envelope.push(env);
        ledger.residuals.push(
            (ledger.v_l2_sq[k + 1] - ledger.v_l2_sq[k]) / dt + 2.0 * nu * ledger.grad_v_sq[k] - 2.0 * forcing[k],
        );
    }
    ledger.pass = ledger
        .v_l2_sq
        .iter()
        .zip(&ledger.gronwall_envelope)
        .all(|(e, env)| *e <= env * (1.0 + ENVELOPE_SLACK));
    Ok(ledger)
}

/// `sup ‖w‖₄ / (‖w‖₂^{1/2} ‖∇w‖₂^{1/2})` over `n_fields` random fields.
pub fn ladyzhenskaya_constant(model: &Arc<StokesModel>, seed: u64, n_fields: usize) -> Result<ConstantEstimate> {
    if model.dim() != 2 {
        return domain("the Ladyzhenskaya constant is calibrated in two dimensions");
    }
    let corpus = random_corpus(model, seed, n_fields);
    let mut best = ConstantEstimate { sup: 0.0, argmax_time: 0.0, argmax_field: 0, n_fields, n_times: 1 };
    for (i, w) in corpus.iter().enumerate() {
        let r = w.lp_norm(4.0)? / (w.l2_norm() * w.grad_l2_sq().sqrt()).sqrt();
        if r > best.sup {
            best.sup = r;
            best.argmax_field = i;
        }
    }
    Ok(best)
}

/// Gronwall constant from a Ladyzhenskaya constant `c_l` and viscosity `ν`:
/// Young's inequality gives `max(27 c_l⁴/(16ν³), 1/ν)`.
pub fn gronwall_constant(c_l: f64, viscosity: f64) -> f64 {
    (27.0 * c_l.powi(4) / (16.0 * viscosity.powi(3))).max(1.0 / viscosity)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterpolationNorms {
    /// Time exponent `r`.
    pub r: f64,
    /// Space exponent `s`.
    pub s: f64,
    /// `θ = 2/r`.
    pub theta: f64,
    /// `‖v‖_{L^r_t H^s}`.
    pub lr_hs: f64,
    /// `‖v‖_{L^∞_t L²}`.
    pub linf_l2: f64,
    /// `‖v‖_{L²_t H¹}`.
    pub l2_h1: f64,
    /// `linf_l2^{1−θ} · l2_h1^θ`.
    pub bound: f64,
    pub holds: bool,
}

/// `(r, s)` of the interpolation space for dimension `d` and exponent `p`.
pub fn interpolation_exponents(d: usize, p: f64) -> Result<(f64, f64)> {
    match d {
        2 if p > 2.0 && p.is_finite() => Ok((2.0 * p / (p - 2.0), 1.0 - 2.0 / p)),
        3 if p > 2.0 && p <= 6.0 => Ok((4.0 * p / (3.0 * (p - 2.0)), 3.0 * (p - 2.0) / (2.0 * p))),
        2 => domain(format!("d=2 needs 2 < p < inf, got {p}")),
        3 => domain(format!("d=3 needs 2 < p <= 6, got {p}")),
        _ => domain(format!("unsupported dimension {d}")),
    }
}

/// Time-integrated norms of `v` (trapezoid weights in time) and the
/// interpolation inequality between them.
pub fn interpolation_norms(v: &[SpectralField], times: &[f64], p: f64) -> Result<InterpolationNorms> {
    let Some(first) = v.first() else {
        return domain("empty trajectory");
    };
    if v.len() != times.len() {
        return Err(Error::GridMismatch(format!("{} points vs {} times", v.len(), times.len())));
    }
    let (r, s) = interpolation_exponents(first.model().dim(), p)?;
    let theta = 2.0 / r;
    let weights = trapezoid_weights(times)?;
    let (mut lr, mut h1, mut linf) = (0.0, 0.0, 0.0f64);
    for ((f, w), _) in v.iter().zip(&weights).zip(times) {
        lr += w * f.sobolev_norm(s).powf(r);
        h1 += w * f.grad_l2_sq();
        linf = linf.max(f.l2_norm());
    }
    let lr_hs = lr.powf(1.0 / r);
    let l2_h1 = h1.sqrt();
    let bound = linf.powf(1.0 - theta) * l2_h1.powf(theta);
    Ok(InterpolationNorms {
        r,
        s,
        theta,
        lr_hs,
        linf_l2: linf,
        l2_h1,
        bound,
        holds: lr_hs <= bound * (1.0 + 1e-12),
    })
}

fn trapezoid_weights(times: &[f64]) -> Result<Vec<f64>> {
    let mut w = vec![0.0; times.len()];
    for k in 0..times.len().saturating_sub(1) {
        let h = times[k + 1] - times[k];
        if !(h > 0.0) {
            return domain("times must be increasing");
        }
        w[k] += 0.5 * h;
        w[k + 1] += 0.5 * h;
    }
    Ok(w)
}
