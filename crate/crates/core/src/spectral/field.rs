use std::f64::consts::{PI, SQRT_2};
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::model::{Parity, StokesModel};
use crate::error::{domain, Error, Result};
use crate::rng::{substream, Purpose};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Coefficient storage of a field.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    /// `û(k)` for every retained wavevector in canonical order, components
    /// contiguous: entry `i * d + a` is component `a` at wavevector `i`.
    Fourier(Vec<Complex64>),
    /// Real coefficient per scalar eigenmode.
    Modal(Vec<f64>),
}

/// A vector field in the span of the model's retained modes.
///
/// On the Fourier backend `u(x) = Σ_k û(k) e^{ik·x}` on `[0, 2π)^d`.
#[derive(Clone)]
pub struct SpectralField {
    model: Arc<StokesModel>,
    coeffs: Coefficients,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("model", self.model.spec())
            .field("coeffs", &self.coeffs)
            .finish()
    }
}

impl PartialEq for SpectralField {
    fn eq(&self, other: &Self) -> bool {
        self.model.spec() == other.model.spec() && self.coeffs == other.coeffs
    }
}

impl SpectralField {
    pub fn zeros(model: &Arc<StokesModel>) -> Self {
        let coeffs = if model.is_fourier() {
            Coefficients::Fourier(vec![ZERO; model.wavevectors().len() * model.dim()])
        } else {
            Coefficients::Modal(vec![0.0; model.n_modes()])
        };
        Self { model: model.clone(), coeffs }
    }

    /// Raw Fourier coefficients; neither reality nor incompressibility is
    /// enforced (see [`SpectralField::leray_project`]).
    pub fn from_fourier(model: &Arc<StokesModel>, coeffs: Vec<Complex64>) -> Result<Self> {
        model.require_fourier("from_fourier")?;
        let expected = model.wavevectors().len() * model.dim();
        if coeffs.len() != expected {
            return domain(format!("expected {expected} coefficients, got {}", coeffs.len()));
        }
        Ok(Self { model: model.clone(), coeffs: Coefficients::Fourier(coeffs) })
    }

    /// Field with the given coefficient on each real orthonormal eigenmode.
    pub fn from_real_modes(model: &Arc<StokesModel>, values: &[f64]) -> Result<Self> {
        if values.len() != model.n_modes() {
            return domain(format!(
                "expected {} modal coefficients, got {}",
                model.n_modes(),
                values.len()
            ));
        }
        if !model.is_fourier() {
            return Ok(Self { model: model.clone(), coeffs: Coefficients::Modal(values.to_vec()) });
        }
        let d = model.dim();
        let scale = 1.0 / (SQRT_2 * (2.0 * PI).powf(d as f64 / 2.0));
        let mut c = vec![ZERO; model.wavevectors().len() * d];
        for (mode, &value) in model.real_modes().iter().zip(values) {
            let z = match mode.parity {
                Parity::Cos => Complex64::new(value * scale, 0.0),
                Parity::Sin => Complex64::new(0.0, -value * scale),
            };
            let i = mode.wavevector;
            let j = model.neg_index()[i];
            for a in 0..d {
                let e = mode.polarization[a];
                c[i * d + a] += z * e;
                c[j * d + a] += z.conj() * e;
            }
        }
        Ok(Self { model: model.clone(), coeffs: Coefficients::Fourier(c) })
    }

    /// Coefficients on the real orthonormal eigenmodes. Exact inverse of
    /// [`SpectralField::from_real_modes`] for real divergence-free fields.
    pub fn real_mode_coefficients(&self) -> Vec<f64> {
        match &self.coeffs {
            Coefficients::Modal(c) => c.clone(),
            Coefficients::Fourier(c) => {
                let d = self.model.dim();
                let scale = SQRT_2 * (2.0 * PI).powf(d as f64 / 2.0);
                self.model
                    .real_modes()
                    .iter()
                    .map(|mode| {
                        let i = mode.wavevector;
                        let proj: Complex64 =
                            (0..d).map(|a| c[i * d + a] * mode.polarization[a]).sum();
                        match mode.parity {
                            Parity::Cos => scale * proj.re,
                            Parity::Sin => -scale * proj.im,
                        }
                    })
                    .collect()
            }
        }
    }

    /// Gaussian field with coefficient `(1 + λ_j)^{-decay/2}·N(0,1)` on each
    /// real eigenmode, drawn from substream `index` of `seed`.
    pub fn random(model: &Arc<StokesModel>, seed: u64, index: u64, decay: f64) -> Self {
        let mut rng = substream(seed, Purpose::Fields, index);
        let values: Vec<f64> = model
            .eigenvalues()
            .iter()
            .map(|&lam| {
                let g: f64 = rng.sample(StandardNormal);
                g * (1.0 + lam).powf(-decay / 2.0)
            })
            .collect();
        Self::from_real_modes(model, &values).expect("length matches by construction")
    }

    pub fn model(&self) -> &Arc<StokesModel> {
        &self.model
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    /// Fourier coefficient slice; `None` on the diagonal backend.
    pub fn fourier(&self) -> Option<&[Complex64]> {
        match &self.coeffs {
            Coefficients::Fourier(c) => Some(c),
            Coefficients::Modal(_) => None,
        }
    }

    pub fn modal(&self) -> Option<&[f64]> {
        match &self.coeffs {
            Coefficients::Modal(c) => Some(c),
            Coefficients::Fourier(_) => None,
        }
    }

    pub(crate) fn fourier_or_err(&self, op: &'static str) -> Result<&[Complex64]> {
        self.fourier()
            .ok_or(Error::UnsupportedBackend { op, required: "fourier_periodic" })
    }

    /// Multiplies the coefficients at eigenvalue `λ` by `f(λ)`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> Self {
        let coeffs = match &self.coeffs {
            Coefficients::Modal(c) => Coefficients::Modal(
                c.iter().zip(self.model.eigenvalues()).map(|(v, &l)| v * f(l)).collect(),
            ),
            Coefficients::Fourier(c) => {
                let d = self.model.dim();
                let mut out = c.clone();
                for (i, &l) in self.model.wave_sq().iter().enumerate() {
                    let m = f(l);
                    for v in &mut out[i * d..(i + 1) * d] {
                        *v *= m;
                    }
                }
                Coefficients::Fourier(out)
            }
        };
        Self { model: self.model.clone(), coeffs }
    }

    /// `S(t) u`: each mode decays by `exp(-ν λ t)`.
    pub fn apply_semigroup(&self, t: f64) -> Result<Self> {
        if !(t >= 0.0) {
            return domain(format!("semigroup time must be nonnegative, got {t}"));
        }
        let nu = self.model.viscosity();
        Ok(self.map_spectrum(|l| (-nu * l * t).exp()))
    }

    /// `A^β u`.
    pub fn fractional_power(&self, beta: f64) -> Self {
        if beta == 0.0 {
            return self.clone();
        }
        self.map_spectrum(|l| l.powf(beta))
    }

    /// Removes the gradient part: `û ← û − k (k·û)/|k|²`. The diagonal
    /// backend only represents solenoidal fields, so there it is the identity.
    pub fn leray_project(&self) -> Self {
        let c = match &self.coeffs {
            Coefficients::Modal(_) => return self.clone(),
            Coefficients::Fourier(c) => c,
        };
        let d = self.model.dim();
        let mut out = c.clone();
        for (i, k) in self.model.wavevectors().iter().enumerate() {
            project_slot(&mut out[i * d..(i + 1) * d], k, self.model.wave_sq()[i]);
        }
        Self { model: self.model.clone(), coeffs: Coefficients::Fourier(out) }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map_coeffs(|c| c * s, |c| c * s)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b, |a, b| a - b)
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b * s, |a, b| a + b * s)
    }

    fn map_coeffs(&self, fm: impl Fn(f64) -> f64, fc: impl Fn(Complex64) -> Complex64) -> Self {
        let coeffs = match &self.coeffs {
            Coefficients::Modal(c) => Coefficients::Modal(c.iter().map(|&v| fm(v)).collect()),
            Coefficients::Fourier(c) => Coefficients::Fourier(c.iter().map(|&v| fc(v)).collect()),
        };
        Self { model: self.model.clone(), coeffs }
    }

    fn zip_with(
        &self,
        other: &Self,
        fm: impl Fn(f64, f64) -> f64,
        fc: impl Fn(Complex64, Complex64) -> Complex64,
    ) -> Result<Self> {
        self.model.ensure_same(&other.model)?;
        let coeffs = match (&self.coeffs, &other.coeffs) {
            (Coefficients::Modal(a), Coefficients::Modal(b)) => {
                Coefficients::Modal(a.iter().zip(b).map(|(&x, &y)| fm(x, y)).collect())
            }
            (Coefficients::Fourier(a), Coefficients::Fourier(b)) => {
                Coefficients::Fourier(a.iter().zip(b).map(|(&x, &y)| fc(x, y)).collect())
            }
            _ => return Err(Error::ModelMismatch("coefficient layouts differ".into())),
        };
        Ok(Self { model: self.model.clone(), coeffs })
    }

    /// `Σ_j w(λ_j) |u_j|²` in the L²-normalised eigenbasis.
    fn weighted_energy(&self, w: impl Fn(f64) -> f64) -> f64 {
        match &self.coeffs {
            Coefficients::Modal(c) => {
                c.iter().zip(self.model.eigenvalues()).map(|(v, &l)| w(l) * v * v).sum()
            }
            Coefficients::Fourier(c) => {
                let d = self.model.dim();
                let sum: f64 = self
                    .model
                    .wave_sq()
                    .iter()
                    .enumerate()
                    .map(|(i, &l)| w(l) * c[i * d..(i + 1) * d].iter().map(|z| z.norm_sqr()).sum::<f64>())
                    .sum();
                sum * self.model.volume()
            }
        }
    }

    /// L² inner product `∫ u·v dx`.
    pub fn inner(&self, other: &Self) -> Result<f64> {
        self.model.ensure_same(&other.model)?;
        match (&self.coeffs, &other.coeffs) {
            (Coefficients::Modal(a), Coefficients::Modal(b)) => {
                Ok(a.iter().zip(b).map(|(x, y)| x * y).sum())
            }
            (Coefficients::Fourier(a), Coefficients::Fourier(b)) => {
                let s: f64 = a.iter().zip(b).map(|(x, y)| (x * y.conj()).re).sum();
                Ok(s * self.model.volume())
            }
            _ => Err(Error::ModelMismatch("coefficient layouts differ".into())),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_energy(|_| 1.0).sqrt()
    }

    /// `‖A^{s/2} u‖₂ = (Σ_j λ_j^s |u_j|²)^{1/2}`.
    pub fn sobolev_norm(&self, s: f64) -> f64 {
        if s == 0.0 {
            return self.l2_norm();
        }
        self.weighted_energy(|l| l.powf(s)).sqrt()
    }

    /// `‖∇u‖₂²`, equal to `Σ λ_j |u_j|²`.
    pub fn grad_l2_sq(&self) -> f64 {
        self.weighted_energy(|l| l)
    }

    /// `max_k |k·û(k)| / max_k |k||û(k)|`; zero for the diagonal backend and
    /// for the zero field.
    pub fn divergence_residual(&self) -> f64 {
        let Coefficients::Fourier(c) = &self.coeffs else {
            return 0.0;
        };
        let d = self.model.dim();
        let mut num: f64 = 0.0;
        let mut den: f64 = 0.0;
        for (i, k) in self.model.wavevectors().iter().enumerate() {
            let slot = &c[i * d..(i + 1) * d];
            let div: Complex64 = (0..d).map(|a| slot[a] * k[a] as f64).sum();
            let mag = slot.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            num = num.max(div.norm());
            den = den.max(self.model.wave_sq()[i].sqrt() * mag);
        }
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// `max_k |û(−k) − conj û(k)|`, zero for real fields.
    pub fn reality_defect(&self) -> f64 {
        let Coefficients::Fourier(c) = &self.coeffs else {
            return 0.0;
        };
        let d = self.model.dim();
        let neg = self.model.neg_index();
        let mut worst: f64 = 0.0;
        for i in 0..neg.len() {
            for a in 0..d {
                worst = worst.max((c[neg[i] * d + a] - c[i * d + a].conj()).norm());
            }
        }
        worst
    }
}

/// Slots whose divergence is already at round-off level are left untouched,
/// which makes projection exactly idempotent.
pub(crate) fn project_slot(slot: &mut [Complex64], k: &[i32; 3], k_sq: f64) {
    let dot: Complex64 = slot.iter().zip(k).map(|(v, &ka)| v * ka as f64).sum();
    let mag = slot.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if dot.norm() <= 8.0 * f64::EPSILON * k_sq.sqrt() * mag {
        return;
    }
    let f = dot / k_sq;
    for (v, &ka) in slot.iter_mut().zip(k) {
        *v -= f * ka as f64;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fourier2(k: usize) -> Arc<StokesModel> {
        StokesModel::fourier_periodic(2, k, 1.0).unwrap()
    }

    #[test]
    fn leray_example_and_gradient_kernel() {
        let m = fourier2(2);
        let i = m.wavevectors().iter().position(|k| *k == [1, 0, 0]).unwrap();
        let mut c = vec![ZERO; m.wavevectors().len() * 2];
        c[2 * i] = Complex64::new(1.0, 0.0);
        c[2 * i + 1] = Complex64::new(1.0, 0.0);
        let p = SpectralField::from_fourier(&m, c).unwrap().leray_project();
        let f = p.fourier().unwrap();
        assert_eq!(f[2 * i], ZERO);
        assert_eq!(f[2 * i + 1], Complex64::new(1.0, 0.0));

        let grad: Vec<Complex64> = m
            .wavevectors()
            .iter()
            .flat_map(|k| [k[0], k[1]].map(|ka| Complex64::new(0.0, 0.7 * ka as f64)))
            .collect();
        let g = SpectralField::from_fourier(&m, grad).unwrap().leray_project();
        assert!(g.l2_norm() < 1e-14);
    }

    #[test]
    fn leray_is_idempotent_bitwise() {
        let m = StokesModel::fourier_periodic(3, 3, 1.0).unwrap();
        let raw: Vec<Complex64> = (0..m.wavevectors().len() * 3)
            .map(|i| Complex64::new((i as f64 * 0.731).sin(), (i as f64 * 1.37).cos()))
            .collect();
        let once = SpectralField::from_fourier(&m, raw).unwrap().leray_project();
        assert!(once.divergence_residual() < 1e-15);
        assert_eq!(once.leray_project(), once);
    }

    #[test]
    fn real_modes_round_trip_and_are_orthonormal() {
        for m in [fourier2(3), StokesModel::fourier_periodic(3, 2, 1.0).unwrap()] {
            let n = m.n_modes();
            let vals: Vec<f64> = (0..n).map(|i| ((i * 7 + 3) as f64).sin()).collect();
            let f = SpectralField::from_real_modes(&m, &vals).unwrap();
            assert!(f.divergence_residual() < 1e-14);
            assert!(f.reality_defect() < 1e-15);
            let back = f.real_mode_coefficients();
            for (a, b) in vals.iter().zip(&back) {
                assert!((a - b).abs() < 1e-13);
            }
            let energy: f64 = vals.iter().map(|v| v * v).sum();
            assert!((f.l2_norm().powi(2) - energy).abs() < 1e-12 * energy);
            let mut e = vec![0.0; n];
            e[5] = 1.0;
            let g = SpectralField::from_real_modes(&m, &e).unwrap();
            assert!((g.inner(&f).unwrap() - vals[5]).abs() < 1e-13);
        }
    }

    #[test]
    fn semigroup_and_powers() {
        let m = StokesModel::abstract_diagonal(2, 6, 1.0).unwrap();
        let mut v = vec![0.0; 6];
        v[3] = 1.0;
        let f = SpectralField::from_real_modes(&m, &v).unwrap();
        let s = f.apply_semigroup(0.5).unwrap();
        assert!((s.modal().unwrap()[3] - (-2.0f64).exp()).abs() < 1e-16);
        assert_eq!(f.apply_semigroup(0.0).unwrap(), f);
        assert!(f.apply_semigroup(-1.0).is_err());
        assert_eq!(f.fractional_power(1.0).modal().unwrap()[3], 4.0);
        assert!((f.sobolev_norm(1.0) - 2.0).abs() < 1e-15);
    }
}
