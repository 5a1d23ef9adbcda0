//! Pseudo-spectral operations: collocation-grid evaluation, the convective
//! term and L^p norms.

use num_complex::Complex64;

use super::field::{project_slot, SpectralField};
use super::model::{StokesModel, Transform};
use crate::error::{domain, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Point values of real scalar fields given by their retained coefficients.
/// Fields are evaluated two at a time through one complex transform.
fn to_grid(t: &Transform, scalars: &[Vec<Complex64>]) -> Vec<Vec<f64>> {
    let i_unit = Complex64::new(0.0, 1.0);
    let mut out = Vec::with_capacity(scalars.len());
    for pair in scalars.chunks(2) {
        let mut buf = vec![ZERO; t.fft.len()];
        for (slot, &c) in t.slots.iter().zip(&pair[0]) {
            buf[*slot] = c;
        }
        if let Some(second) = pair.get(1) {
            for (slot, &c) in t.slots.iter().zip(second) {
                buf[*slot] += i_unit * c;
            }
        }
        t.fft.inverse(&mut buf);
        out.push(buf.iter().map(|z| z.re).collect());
        if pair.len() == 2 {
            out.push(buf.iter().map(|z| z.im).collect());
        }
    }
    out
}

/// Retained Fourier coefficients of real point-value arrays, two per
/// complex transform.
fn from_grid(model: &StokesModel, t: &Transform, values: &[Vec<f64>]) -> Vec<Vec<Complex64>> {
    let neg = model.neg_index();
    let mut out = Vec::with_capacity(values.len());
    for pair in values.chunks(2) {
        let mut buf: Vec<Complex64> = match pair.get(1) {
            Some(b) => pair[0].iter().zip(b).map(|(&x, &y)| Complex64::new(x, y)).collect(),
            None => pair[0].iter().map(|&x| Complex64::new(x, 0.0)).collect(),
        };
        t.fft.forward(&mut buf);
        let at = |i: usize| buf[t.slots[i]];
        if pair.len() == 2 {
            let half = Complex64::new(0.5, 0.0);
            let minus_half_i = Complex64::new(0.0, -0.5);
            let mut a = Vec::with_capacity(neg.len());
            let mut b = Vec::with_capacity(neg.len());
            for i in 0..neg.len() {
                let x = at(i);
                let y = at(neg[i]).conj();
                a.push(half * (x + y));
                b.push(minus_half_i * (x - y));
            }
            out.push(a);
            out.push(b);
        } else {
            out.push((0..neg.len()).map(at).collect());
        }
    }
    out
}

fn components(field: &SpectralField, op: &'static str) -> Result<Vec<Vec<Complex64>>> {
    let c = field.fourier_or_err(op)?;
    let d = field.model().dim();
    Ok((0..d).map(|a| c.iter().skip(a).step_by(d).copied().collect()).collect())
}

impl SpectralField {
    /// Component arrays of point values on the uniform `n^d` grid
    /// `x = 2π·index/n`, row-major with the last axis contiguous.
    pub fn to_physical(&self, n: usize) -> Result<Vec<Vec<f64>>> {
        let comps = components(self, "to_physical")?;
        let k = self.model().max_wavenumber().unwrap_or(0);
        if n < 2 * k + 1 {
            return domain(format!("grid size {n} cannot resolve wavenumber {k}"));
        }
        let t = self.model().transform(n);
        Ok(to_grid(&t, &comps))
    }

    /// `B(u, v) = −P div(u ⊗ v)`, evaluated on a grid fine enough that the
    /// retained coefficients of every product are exact.
    pub fn bilinear(&self, v: &SpectralField) -> Result<SpectralField> {
        let model = self.model().clone();
        model.ensure_same(v.model())?;
        let uc = components(self, "bilinear")?;
        let vc = components(v, "bilinear")?;
        let d = model.dim();
        let t = model.transform(model.dealias_size());
        let ug = to_grid(&t, &uc);
        let vg = to_grid(&t, &vc);
        let mut products = Vec::with_capacity(d * d);
        for ua in &ug {
            for vb in &vg {
                products.push(ua.iter().zip(vb).map(|(x, y)| x * y).collect::<Vec<f64>>());
            }
        }
        let w = from_grid(&model, &t, &products);
        let mut out = vec![ZERO; model.wavevectors().len() * d];
        for (i, k) in model.wavevectors().iter().enumerate() {
            let slot = &mut out[i * d..(i + 1) * d];
            for (b, s) in slot.iter_mut().enumerate() {
                let div: Complex64 = (0..d).map(|a| w[a * d + b][i] * k[a] as f64).sum();
                // −i·div
                *s = Complex64::new(div.im, -div.re);
            }
            project_slot(slot, k, model.wave_sq()[i]);
        }
        SpectralField::from_fourier(&model, out)
    }

    /// `(∫ |u(x)|^p dx)^{1/p}` by uniform quadrature on the collocation grid,
    /// exact for even integer `p ≤ 8`.
    pub fn lp_norm(&self, p: f64) -> Result<f64> {
        if !(p >= 2.0 && p.is_finite()) {
            return domain(format!("L^p norm requires 2 <= p < inf, got {p}"));
        }
        let model = self.model();
        let n = model.quadrature_size(p);
        let grid = self.to_physical(n)?;
        let half = p / 2.0;
        let npts = grid[0].len();
        let mut sum = 0.0;
        for x in 0..npts {
            let sq: f64 = grid.iter().map(|c| c[x] * c[x]).sum();
            sum += if half == 2.0 { sq * sq } else { sq.powf(half) };
        }
        let weight = model.volume() / npts as f64;
        Ok((sum * weight).powf(1.0 / p))
    }

    /// `⟨B(self, v), w⟩`.
    pub fn trilinear(&self, v: &SpectralField, w: &SpectralField) -> Result<f64> {
        self.bilinear(v)?.inner(w)
    }
}
