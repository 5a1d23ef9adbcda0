//! Empirical semigroup constants.
//!
//! The smoothing and `L^r → L^p` estimates hold with unspecified constants.
//! These routines measure the best constant seen on a corpus of random
//! fields over a log-spaced time grid. They are lower bounds for the true
//! operator constants, reported as calibration data.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::field::SpectralField;
use super::model::StokesModel;
use crate::error::{domain, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantEstimate {
    /// Largest ratio observed.
    pub sup: f64,
    pub argmax_time: f64,
    pub argmax_field: usize,
    pub n_fields: usize,
    pub n_times: usize,
}

/// `n` log-spaced points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

/// Random fields with flat spectrum, seeds `0..n` of substream family `seed`.
pub fn random_corpus(model: &Arc<StokesModel>, seed: u64, n: usize) -> Vec<SpectralField> {
    (0..n as u64).map(|i| SpectralField::random(model, seed, i, 0.0)).collect()
}

fn sup_over(
    corpus: &[SpectralField],
    times: &[f64],
    ratio: impl Fn(&SpectralField, f64) -> Result<f64>,
) -> Result<ConstantEstimate> {
    let mut best = ConstantEstimate {
        sup: 0.0,
        argmax_time: times.first().copied().unwrap_or(0.0),
        argmax_field: 0,
        n_fields: corpus.len(),
        n_times: times.len(),
    };
    for (i, u) in corpus.iter().enumerate() {
        for &t in times {
            let r = ratio(u, t)?;
            if r > best.sup {
                best.sup = r;
                best.argmax_time = t;
                best.argmax_field = i;
            }
        }
    }
    Ok(best)
}

/// Sharp constant of `t^α ‖A^α S(t)‖ ≤ M` on L², namely `(α/(eν))^α`.
pub fn smoothing_bound(alpha: f64, viscosity: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        (alpha / (std::f64::consts::E * viscosity)).powf(alpha)
    }
}

/// `sup t^α ‖A^α S(t) u‖₂ / ‖u‖₂` over the corpus and times.
pub fn smoothing_constant(corpus: &[SpectralField], alpha: f64, times: &[f64]) -> Result<ConstantEstimate> {
    if alpha < 0.0 {
        return domain("smoothing exponent must be nonnegative");
    }
    sup_over(corpus, times, |u, t| {
        let s = u.apply_semigroup(t)?.fractional_power(alpha);
        Ok(t.powf(alpha) * s.l2_norm() / u.l2_norm())
    })
}

/// `sup t^{(d/2)(1/r − 1/p)} ‖S(t) u‖_p / ‖u‖_r` over the corpus and times.
pub fn lr_lp_constant(corpus: &[SpectralField], r: f64, p: f64, times: &[f64]) -> Result<ConstantEstimate> {
    if !(2.0 <= r && r <= p) {
        return domain(format!("need 2 <= r <= p, got r={r}, p={p}"));
    }
    let Some(first) = corpus.first() else {
        return domain("empty corpus");
    };
    let d = first.model().dim() as f64;
    let expo = 0.5 * d * (1.0 / r - 1.0 / p);
    sup_over(corpus, times, |u, t| {
        let s = u.apply_semigroup(t)?;
        Ok(t.powf(expo) * s.lp_norm(p)? / u.lp_norm(r)?)
    })
}

/// Semigroup constant for the solver: the larger of the measured smoothing
/// constant at `α = 1/2` and the `L^{max(2,p/2)} → L^p` constant.
pub fn calibrate_semigroup_constant(model: &Arc<StokesModel>, p: f64, seed: u64) -> Result<f64> {
    let corpus = random_corpus(model, seed, 100);
    let times = log_grid(1e-3, 1.0, 13);
    let a = smoothing_constant(&corpus, 0.5, &times)?.sup;
    let b = lr_lp_constant(&corpus, (p / 2.0).max(2.0), p, &times)?.sup;
    Ok(a.max(b))
}
