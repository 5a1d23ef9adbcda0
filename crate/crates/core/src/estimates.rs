//! Hilbert–Schmidt norms of `S(t)A^{−q/2}` on the diagonal model
//! `λ_j = j^{2/d}`, their small-time bound shapes, and the parameter
//! admissibility test for the existence theory.
//!
//! Everything reduces to the series `s_q(t) = Σ_j a(j)` with
//! `a(x) = exp(−2t x^{2/d}) x^{−2q/d}`. Partial sums are exact up to
//! round-off; the remainder is bracketed by integrals of `a` computed with
//! adaptive quadrature after the substitution `y = 2t x^{2/d}`.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::integrate;

/// How many terms of the series to sum explicitly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation {
    Fixed(u64),
    /// Grow the truncation until the tail bound is at most `rel_tol` times
    /// the partial sum, but never beyond `max_terms`.
    Auto { rel_tol: f64, max_terms: u64 },
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation::Auto { rel_tol: 1e-10, max_terms: 100_000_000 }
    }
}

/// Certified enclosure `[partial_sum, partial_sum + tail_bound]` of a
/// positive series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesInterval {
    pub terms: u64,
    pub partial_sum: f64,
    /// Integral bound on the remainder, including the quadrature error
    /// estimate and, when needed, the largest remaining term.
    pub tail_bound: f64,
    pub quadrature_error: f64,
    /// Best point value: partial sum plus the Euler–Maclaurin corrected tail.
    pub estimate: f64,
    /// The auto truncation stopped at `max_terms` before meeting `rel_tol`.
    pub cap_reached: bool,
}

impl SeriesInterval {
    pub fn lower(&self) -> f64 {
        self.partial_sum
    }

    pub fn upper(&self) -> f64 {
        self.partial_sum + self.tail_bound
    }

    pub fn width(&self) -> f64 {
        self.tail_bound
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower() <= x && x <= self.upper()
    }
}

struct Series {
    t: f64,
    q: f64,
    d: f64,
}

impl Series {
    fn term(&self, j: u64) -> f64 {
        let x = j as f64;
        if self.d == 2.0 {
            let mut e = -2.0 * self.t * x;
            if self.q != 0.0 {
                e -= self.q * x.ln();
            }
            e.exp()
        } else {
            // exp of a logarithm is markedly cheaper than cbrt here.
            let l = x.ln();
            (-2.0 * self.t * (l * (2.0 / 3.0)).exp() - 2.0 * self.q / 3.0 * l).exp()
        }
    }

    /// Maximiser of `a` on `(0, ∞)`; zero when `a` is decreasing.
    fn argmax(&self) -> f64 {
        if self.q >= 0.0 || self.t == 0.0 {
            0.0
        } else {
            (-self.q / (2.0 * self.t)).powf(self.d / 2.0)
        }
    }

    fn value_at(&self, x: f64) -> f64 {
        (-2.0 * self.t * x.powf(2.0 / self.d) - 2.0 * self.q / self.d * x.ln()).exp()
    }

    /// `∫_x^∞ a`, with its quadrature error.
    fn tail_integral(&self, x: f64) -> (f64, f64) {
        // ∫_x^∞ a = (d/2)(2t)^{q−d/2} ∫_{y0}^∞ y^{s−1} e^{−y} dy with s = d/2 − q,
        // written as C e^{−y0} ∫_0^∞ (y0 + w)^{s−1} e^{−w} dw, w = u/(1−u).
        let s = self.d / 2.0 - self.q;
        let y0 = 2.0 * self.t * x.powf(2.0 / self.d);
        let g = |u: f64| {
            if u >= 1.0 {
                return 0.0;
            }
            let w = u / (1.0 - u);
            let v = (y0 + w).powf(s - 1.0) * (-w).exp() / ((1.0 - u) * (1.0 - u));
            if v.is_finite() {
                v
            } else {
                0.0
            }
        };
        let r = integrate(g, 0.0, 1.0, 0.0, 1e-13, 4000);
        let log_c = (self.d / 2.0).ln() + (self.q - self.d / 2.0) * (2.0 * self.t).ln() - y0;
        let c = log_c.exp();
        (c * r.value, c * r.error)
    }
}

/// Neumaier-compensated sum of `a(j)` for `j` in `from..=to`.
fn partial(series: &Series, from: u64, to: u64, acc: &mut (f64, f64)) {
    for j in from..=to {
        let x = series.term(j);
        let s = acc.0 + x;
        if acc.0.abs() >= x.abs() {
            acc.1 += (acc.0 - s) + x;
        } else {
            acc.1 += (x - s) + acc.0;
        }
        acc.0 = s;
    }
}

fn check_dim(d: usize) -> Result<f64> {
    if d == 2 || d == 3 {
        Ok(d as f64)
    } else {
        domain(format!("dimension must be 2 or 3, got {d}"))
    }
}

/// `s_q(t) = Σ_{j≥1} exp(−2 j^{2/d} t) j^{−2q/d}` as a certified interval.
pub fn s_q_series(t: f64, q: f64, d: usize, truncation: Truncation) -> Result<SeriesInterval> {
    let df = check_dim(d)?;
    if !(t > 0.0 && t.is_finite()) {
        return domain(format!("s_q requires t > 0, got {t}"));
    }
    if !q.is_finite() {
        return domain("q must be finite");
    }
    let series = Series { t, q, d: df };
    let mut acc = (0.0, 0.0);
    let (terms, cap_reached) = match truncation {
        Truncation::Fixed(j) => {
            if j == 0 {
                return domain("truncation must be at least 1");
            }
            partial(&series, 1, j, &mut acc);
            (j, false)
        }
        Truncation::Auto { rel_tol, max_terms } => {
            let mut j = 1024.min(max_terms);
            partial(&series, 1, j, &mut acc);
            loop {
                let (tail, err) = series.tail_integral(j as f64);
                if tail + err <= rel_tol * (acc.0 + acc.1) {
                    break (j, false);
                }
                if j >= max_terms {
                    break (j, true);
                }
                let next = (j.saturating_mul(2)).min(max_terms);
                partial(&series, j + 1, next, &mut acc);
                j = next;
            }
        }
    };
    let partial_sum = acc.0 + acc.1;
    let jf = terms as f64;
    let (tail, quad_err) = series.tail_integral(jf);
    // Unimodal terms: the remainder exceeds the integral by at most the
    // largest remaining term.
    let bump = if series.argmax() > jf { series.value_at(series.argmax()) } else { 0.0 };
    let tail_bound = tail + quad_err + bump;
    let estimate = partial_sum + tail - 0.5 * series.term(terms);
    Ok(SeriesInterval {
        terms,
        partial_sum,
        tail_bound,
        quadrature_error: quad_err,
        estimate,
        cap_reached,
    })
}

/// Which small-time behaviour the series follows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HsRegime {
    /// `q = d/2`: `s_q(t) ≲ (2 − ln t)²`.
    Critical,
    /// `0 ≤ q < d/2`: `s_q(t) ≲ t^{q − d/2}`.
    Subcritical,
    /// `q < 0`: `s_q(t) ≲ t^{q − d/2}`.
    Negative,
}

impl HsRegime {
    pub fn of(q: f64, d: usize) -> Option<Self> {
        let half = d as f64 / 2.0;
        if q > half {
            None
        } else if q == half {
            Some(HsRegime::Critical)
        } else if q >= 0.0 {
            Some(HsRegime::Subcritical)
        } else {
            Some(HsRegime::Negative)
        }
    }

    /// Squared bound shape `g(t)²`.
    pub fn shape(&self, q: f64, d: usize, t: f64) -> f64 {
        match self {
            HsRegime::Critical => (2.0 - t.ln()).powi(2),
            _ => t.powf(q - d as f64 / 2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeRow {
    pub t: f64,
    pub partial_sum: f64,
    pub tail_bound: f64,
    pub estimate: f64,
    pub bound_shape_value: f64,
    pub ratio: f64,
    pub cap_reached: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HsRegimeReport {
    pub d: usize,
    pub q: f64,
    pub regime: HsRegime,
    /// `sup_t s_q(t) / g(t)²`.
    pub sup_ratio: f64,
    /// `sqrt(sup_ratio)`, the fitted constant in `‖S(t)Φ‖_HS ≤ M g(t)`.
    pub fitted_m: f64,
    pub argmax_t: f64,
    /// Least-squares slope of `ln ratio` against `ln t` over the smallest decade.
    pub slope: f64,
    /// The ratio is nonincreasing as `t` decreases through `t ≤ 1e-3`.
    pub nonincreasing_small_t: bool,
    /// For `q < 0`: every value lies below `max_x a(x) + ∫_1^∞ a`.
    pub device_bound_holds: bool,
    pub pass: bool,
    pub rows: Vec<RegimeRow>,
}

/// Slope threshold below which the ratio is considered to grow as `t → 0`.
pub const SLOPE_FLOOR: f64 = -0.01;

/// Checks the small-time shape of `s_q` against its claimed bound on `t_grid`.
///
/// Passes when every ratio is finite and the log-log slope over the smallest
/// decade of `t_grid` is at least [`SLOPE_FLOOR`].
pub fn verify_hs_regime(q: f64, d: usize, t_grid: &[f64]) -> Result<HsRegimeReport> {
    check_dim(d)?;
    let Some(regime) = HsRegime::of(q, d) else {
        return domain(format!("q = {q} exceeds d/2; the HS norm is bounded uniformly in t"));
    };
    if t_grid.len() < 2 {
        return domain("t_grid needs at least two points");
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
        return domain("t_grid must lie in (0, 1]");
    }
    let mut rows = Vec::with_capacity(t_grid.len());
    let mut device_bound_holds = true;
    for &t in t_grid {
        let s = s_q_series(t, q, d, Truncation::default())?;
        let shape = regime.shape(q, d, t);
        if regime == HsRegime::Negative {
            device_bound_holds &= s.estimate <= device_bound(t, q, d);
        }
        rows.push(RegimeRow {
            t,
            partial_sum: s.partial_sum,
            tail_bound: s.tail_bound,
            estimate: s.estimate,
            bound_shape_value: shape,
            ratio: s.estimate / shape,
            cap_reached: s.cap_reached,
        });
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    let (argmax_t, sup_ratio) = rows
        .iter()
        .map(|r| (r.t, r.ratio))
        .fold((rows[0].t, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let t_min = rows[0].t;
    let decade: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.t <= 10.0 * t_min)
        .map(|r| (r.t.ln(), r.ratio.ln()))
        .collect();
    let slope = least_squares_slope(&decade);
    let small: Vec<f64> = rows.iter().filter(|r| r.t <= 1e-3).map(|r| r.ratio).collect();
    // Ascending t: nonincreasing as t → 0 means ratios nondecreasing here.
    let nonincreasing_small_t = small.windows(2).all(|w| w[0] <= w[1]);
    let finite = rows.iter().all(|r| r.ratio.is_finite());
    let pass = finite && slope.is_finite() && slope >= SLOPE_FLOOR && device_bound_holds;
    Ok(HsRegimeReport {
        d,
        q,
        regime,
        sup_ratio,
        fitted_m: sup_ratio.sqrt(),
        argmax_t,
        slope,
        nonincreasing_small_t,
        device_bound_holds,
        pass,
        rows,
    })
}

/// `max_{x ≥ 1} a(x) + ∫_1^∞ a(x) dx`, an upper bound for `s_q(t)` whenever
/// the terms are unimodal.
pub fn device_bound(t: f64, q: f64, d: usize) -> f64 {
    let series = Series { t, q, d: d as f64 };
    let peak = series.argmax().max(1.0);
    let (tail, err) = series.tail_integral(1.0);
    series.value_at(peak) + tail + err
}

fn least_squares_slope(points: &[(f64, f64)]) -> f64 {
    if points.len() < 2 {
        return f64::NAN;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

/// Square-rooted series interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormInterval {
    pub lower: f64,
    pub upper: f64,
    pub estimate: f64,
    pub terms: u64,
    pub cap_reached: bool,
}

impl NormInterval {
    fn from_squared(s: &SeriesInterval) -> Self {
        Self {
            lower: s.lower().sqrt(),
            upper: s.upper().sqrt(),
            estimate: s.estimate.sqrt(),
            terms: s.terms,
            cap_reached: s.cap_reached,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsNormReport {
    pub t: f64,
    pub q: f64,
    pub d: usize,
    /// `‖S(t)A^{−q/2}‖_HS`; `None` when it is infinite (`t = 0`, `q ≤ d/2`).
    pub s_phi: Option<NormInterval>,
    /// `‖A^{−q/2}‖_HS`, reported when `q > d/2`.
    pub phi: Option<NormInterval>,
}

impl HsNormReport {
    pub fn is_unbounded(&self) -> bool {
        self.s_phi.is_none()
    }
}

/// `‖S(t)A^{−q/2}‖_HS = sqrt(s_q(t))` for `λ_j = j^{2/d}`.
pub fn hs_norm_s_phi(t: f64, q: f64, d: usize, truncation: Truncation) -> Result<HsNormReport> {
    let df = check_dim(d)?;
    if !(t >= 0.0) {
        return domain(format!("t must be nonnegative, got {t}"));
    }
    let phi = if q > df / 2.0 { Some(NormInterval::from_squared(&phi_hs_sq(q, df, truncation)?)) } else { None };
    let s_phi = if t > 0.0 {
        Some(NormInterval::from_squared(&s_q_series(t, q, d, truncation)?))
    } else {
        phi
    };
    Ok(HsNormReport { t, q, d, s_phi, phi })
}

/// `Σ_j j^{−2q/d}` with the closed-form tail `J^{1−2q/d}/(2q/d − 1)`.
fn phi_hs_sq(q: f64, d: f64, truncation: Truncation) -> Result<SeriesInterval> {
    let e = 2.0 * q / d;
    let tail = |j: u64| (j as f64).powf(1.0 - e) / (e - 1.0);
    let series = Series { t: 0.0, q, d };
    let mut acc = (0.0, 0.0);
    let (terms, cap_reached) = match truncation {
        Truncation::Fixed(j) => {
            if j == 0 {
                return domain("truncation must be at least 1");
            }
            partial(&series, 1, j, &mut acc);
            (j, false)
        }
        Truncation::Auto { rel_tol, max_terms } => {
            let mut j = 1024.min(max_terms);
            partial(&series, 1, j, &mut acc);
            loop {
                if tail(j) <= rel_tol * (acc.0 + acc.1) {
                    break (j, false);
                }
                if j >= max_terms {
                    break (j, true);
                }
                let next = (j.saturating_mul(2)).min(max_terms);
                partial(&series, j + 1, next, &mut acc);
                j = next;
            }
        }
    };
    let partial_sum = acc.0 + acc.1;
    Ok(SeriesInterval {
        terms,
        partial_sum,
        tail_bound: tail(terms),
        quadrature_error: 0.0,
        estimate: partial_sum + tail(terms) - 0.5 * series.term(terms),
        cap_reached,
    })
}

/// Outcome of the parameter test `H > (d/2)(1 − 1/p) − q/2`, `d < p`, `H < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub d: usize,
    pub p: f64,
    pub q: f64,
    pub hurst: f64,
    pub lhs: f64,
    pub margin: f64,
    pub admissible: bool,
    /// `p ≤ d`: the local existence theorem does not apply.
    pub existence_inapplicable: bool,
}

pub fn check_admissibility(d: usize, p: f64, q: f64, hurst: f64) -> AdmissibilityReport {
    let lhs = 0.5 * d as f64 * (1.0 - 1.0 / p) - 0.5 * q;
    let margin = hurst - lhs;
    let existence_inapplicable = !(p > d as f64);
    AdmissibilityReport {
        d,
        p,
        q,
        hurst,
        lhs,
        margin,
        admissible: margin > 0.0 && !existence_inapplicable && hurst < 1.0,
        existence_inapplicable,
    }
}
