use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::fft::{smooth_size, GridFft};

/// Which eigen-structure the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Backend {
    /// Zero-mean fields on the 2π-torus; retains every nonzero wavevector
    /// with `|k_i| <= max_wavenumber` on each axis.
    FourierPeriodic { max_wavenumber: usize },
    /// Scalar modes `j = 1..=n_modes` with `λ_j = j^{2/d}`.
    AbstractDiagonal { n_modes: usize },
}

impl Backend {
    pub fn name(&self) -> &'static str {
        match self {
            Backend::FourierPeriodic { .. } => "fourier_periodic",
            Backend::AbstractDiagonal { .. } => "abstract_diagonal",
        }
    }
}

/// Serializable description of a model; enough to rebuild it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub backend: Backend,
    #[serde(default = "default_viscosity")]
    pub viscosity: f64,
}

fn default_viscosity() -> f64 {
    1.0
}

impl ModelSpec {
    pub fn build(&self) -> Result<Arc<StokesModel>> {
        StokesModel::new(*self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Cos,
    Sin,
}

/// A real orthonormal eigenfunction of the Fourier backend:
/// `√2 ε cos(k·x) / (2π)^{d/2}` or the matching sine.
#[derive(Debug, Clone, Copy)]
pub struct RealMode {
    pub wavevector: usize,
    pub polarization: [f64; 3],
    pub parity: Parity,
}

/// Grid transform plus the grid slot of every retained wavevector.
pub struct Transform {
    pub fft: GridFft,
    pub slots: Vec<usize>,
}

/// Spectral description of the (surrogate) Stokes operator.
pub struct StokesModel {
    spec: ModelSpec,
    wavevectors: Vec<[i32; 3]>,
    wave_sq: Vec<f64>,
    neg_index: Vec<usize>,
    real_modes: Vec<RealMode>,
    eigenvalues: Vec<f64>,
    transforms: Mutex<HashMap<usize, Arc<Transform>>>,
}

impl std::fmt::Debug for StokesModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StokesModel").field("spec", &self.spec).finish()
    }
}

impl StokesModel {
    pub fn new(spec: ModelSpec) -> Result<Arc<Self>> {
        if spec.dim != 2 && spec.dim != 3 {
            return domain(format!("dimension must be 2 or 3, got {}", spec.dim));
        }
        if !(spec.viscosity > 0.0 && spec.viscosity.is_finite()) {
            return domain(format!("viscosity must be positive, got {}", spec.viscosity));
        }
        let model = match spec.backend {
            Backend::FourierPeriodic { max_wavenumber } => {
                if max_wavenumber == 0 {
                    return domain("max_wavenumber must be at least 1");
                }
                Self::fourier(spec, max_wavenumber as i32)
            }
            Backend::AbstractDiagonal { n_modes } => {
                if n_modes == 0 {
                    return domain("n_modes must be at least 1");
                }
                let p = 2.0 / spec.dim as f64;
                let eigenvalues = (1..=n_modes).map(|j| (j as f64).powf(p)).collect();
                Self {
                    spec,
                    wavevectors: Vec::new(),
                    wave_sq: Vec::new(),
                    neg_index: Vec::new(),
                    real_modes: Vec::new(),
                    eigenvalues,
                    transforms: Mutex::new(HashMap::new()),
                }
            }
        };
        Ok(Arc::new(model))
    }

    pub fn fourier_periodic(dim: usize, max_wavenumber: usize, viscosity: f64) -> Result<Arc<Self>> {
        Self::new(ModelSpec {
            dim,
            backend: Backend::FourierPeriodic { max_wavenumber },
            viscosity,
        })
    }

    pub fn abstract_diagonal(dim: usize, n_modes: usize, viscosity: f64) -> Result<Arc<Self>> {
        Self::new(ModelSpec {
            dim,
            backend: Backend::AbstractDiagonal { n_modes },
            viscosity,
        })
    }

    fn fourier(spec: ModelSpec, kmax: i32) -> Self {
        let d = spec.dim;
        let mut wavevectors = Vec::new();
        let range = -kmax..=kmax;
        for a in range.clone() {
            for b in range.clone() {
                if d == 2 {
                    wavevectors.push([a, b, 0]);
                } else {
                    for c in range.clone() {
                        wavevectors.push([a, b, c]);
                    }
                }
            }
        }
        wavevectors.retain(|k| *k != [0, 0, 0]);
        let norm_sq = |k: &[i32; 3]| k.iter().map(|&c| (c as i64) * (c as i64)).sum::<i64>();
        wavevectors.sort_by(|x, y| norm_sq(x).cmp(&norm_sq(y)).then_with(|| x.cmp(y)));

        let index: HashMap<[i32; 3], usize> =
            wavevectors.iter().enumerate().map(|(i, k)| (*k, i)).collect();
        let neg_index = wavevectors
            .iter()
            .map(|k| index[&[-k[0], -k[1], -k[2]]])
            .collect();
        let wave_sq: Vec<f64> = wavevectors.iter().map(|k| norm_sq(k) as f64).collect();

        let mut real_modes = Vec::new();
        let mut eigenvalues = Vec::new();
        for (i, k) in wavevectors.iter().enumerate() {
            if !is_positive(k) {
                continue;
            }
            for eps in polarizations(k, d) {
                for parity in [Parity::Cos, Parity::Sin] {
                    real_modes.push(RealMode { wavevector: i, polarization: eps, parity });
                    eigenvalues.push(wave_sq[i]);
                }
            }
        }
        Self {
            spec,
            wavevectors,
            wave_sq,
            neg_index,
            real_modes,
            eigenvalues,
            transforms: Mutex::new(HashMap::new()),
        }
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dim
    }

    pub fn viscosity(&self) -> f64 {
        self.spec.viscosity
    }

    pub fn backend(&self) -> Backend {
        self.spec.backend
    }

    pub fn is_fourier(&self) -> bool {
        matches!(self.spec.backend, Backend::FourierPeriodic { .. })
    }

    pub fn max_wavenumber(&self) -> Option<usize> {
        match self.spec.backend {
            Backend::FourierPeriodic { max_wavenumber } => Some(max_wavenumber),
            _ => None,
        }
    }

    /// Number of real scalar eigenmodes (the index set of the cylindrical noise).
    pub fn n_modes(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Eigenvalues of the scalar modes, nondecreasing.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn real_modes(&self) -> &[RealMode] {
        &self.real_modes
    }

    /// Retained wavevectors in canonical order: sorted by `|k|^2`, ties broken
    /// lexicographically. Unused trailing components are zero.
    pub fn wavevectors(&self) -> &[[i32; 3]] {
        &self.wavevectors
    }

    pub fn wave_sq(&self) -> &[f64] {
        &self.wave_sq
    }

    pub fn neg_index(&self) -> &[usize] {
        &self.neg_index
    }

    /// `(2π)^d`, the measure of the torus.
    pub fn volume(&self) -> f64 {
        (2.0 * PI).powi(self.spec.dim as i32)
    }

    /// Grid size for products of two retained fields without aliasing.
    pub fn dealias_size(&self) -> usize {
        smooth_size(3 * self.max_wavenumber().unwrap_or(0) + 1)
    }

    /// Grid size for L^p quadrature; exact for even integer `p <= 8`.
    pub fn quadrature_size(&self, p: f64) -> usize {
        let k = self.max_wavenumber().unwrap_or(0);
        let mult = (p.ceil() as usize).clamp(2, 8);
        smooth_size((3 * k).max(mult * k + 1))
    }

    pub(crate) fn transform(&self, n: usize) -> Arc<Transform> {
        let mut cache = self.transforms.lock().expect("transform cache poisoned");
        cache
            .entry(n)
            .or_insert_with(|| {
                let fft = GridFft::new(n, self.spec.dim);
                let d = self.spec.dim;
                let slots = self.wavevectors.iter().map(|k| fft.index_of(&k[..d])).collect();
                Arc::new(Transform { fft, slots })
            })
            .clone()
    }

    pub(crate) fn ensure_same(&self, other: &StokesModel) -> Result<()> {
        if std::ptr::eq(self, other) || self.spec == other.spec {
            Ok(())
        } else {
            Err(Error::ModelMismatch(format!("{:?} vs {:?}", self.spec, other.spec)))
        }
    }

    pub(crate) fn require_fourier(&self, op: &'static str) -> Result<()> {
        if self.is_fourier() {
            Ok(())
        } else {
            Err(Error::UnsupportedBackend { op, required: "fourier_periodic" })
        }
    }
}

/// First nonzero component positive.
fn is_positive(k: &[i32; 3]) -> bool {
    k.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

/// Orthonormal basis of the plane (line for d=2) orthogonal to `k`.
fn polarizations(k: &[i32; 3], d: usize) -> Vec<[f64; 3]> {
    let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
    let norm = (kf[0] * kf[0] + kf[1] * kf[1] + kf[2] * kf[2]).sqrt();
    if d == 2 {
        return vec![[-kf[1] / norm, kf[0] / norm, 0.0]];
    }
    // Cross with the axis along which k is smallest (lowest index on ties).
    let axis = (0..3)
        .min_by(|&a, &b| k[a].abs().cmp(&k[b].abs()).then(a.cmp(&b)))
        .unwrap_or(0);
    let mut e = [0.0; 3];
    e[axis] = 1.0;
    let first = normalize(cross(&e, &kf));
    let second = normalize(cross(&kf, &first));
    vec![first, second]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_eigenvalues_follow_power_law() {
        let m = StokesModel::abstract_diagonal(2, 10, 1.0).unwrap();
        assert_eq!(m.eigenvalues()[3], 4.0);
        let m3 = StokesModel::abstract_diagonal(3, 8, 1.0).unwrap();
        assert!((m3.eigenvalues()[7] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn fourier_enumeration_is_sorted_and_complete() {
        let m = StokesModel::fourier_periodic(2, 3, 1.0).unwrap();
        assert_eq!(m.wavevectors().len(), 48);
        assert_eq!(m.wavevectors()[0], [-1, 0, 0]);
        assert!(m.wave_sq().windows(2).all(|w| w[0] <= w[1]));
        assert!(m.eigenvalues().windows(2).all(|w| w[0] <= w[1]));
        assert!(m.eigenvalues()[0] > 0.0);
        // Each ±k pair carries (d-1) polarisations times cos and sin.
        assert_eq!(m.n_modes(), 48);
        let m3 = StokesModel::fourier_periodic(3, 2, 1.0).unwrap();
        assert_eq!(m3.n_modes(), (125 - 1) * 2);
        for (i, k) in m3.wavevectors().iter().enumerate() {
            let n = m3.wavevectors()[m3.neg_index()[i]];
            assert_eq!(n, [-k[0], -k[1], -k[2]]);
        }
    }

    #[test]
    fn polarizations_are_orthonormal_and_transverse() {
        for k in [[1, 2, 3], [0, 0, 1], [2, -2, 0], [1, 1, 1]] {
            let eps = polarizations(&k, 3);
            let kf = [k[0] as f64, k[1] as f64, k[2] as f64];
            let dot = |a: &[f64; 3], b: &[f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            for e in &eps {
                assert!(dot(e, &kf).abs() < 1e-14);
                assert!((dot(e, e) - 1.0).abs() < 1e-14);
            }
            assert!(dot(&eps[0], &eps[1]).abs() < 1e-14);
        }
    }

    #[test]
    fn invalid_models_rejected() {
        assert!(StokesModel::fourier_periodic(4, 2, 1.0).is_err());
        assert!(StokesModel::fourier_periodic(2, 0, 1.0).is_err());
        assert!(StokesModel::abstract_diagonal(2, 4, 0.0).is_err());
    }
}
