//! # Fractional Brownian motion on a uniform grid
//!
//! $$
//! \mathbb E[B_t^H B_s^H]=\tfrac12\left(t^{2H}+s^{2H}-|t-s|^{2H}\right)
//! $$
//!
//! Paths are exact in law at the grid points. The default generator embeds
//! the fractional Gaussian noise covariance in a circulant matrix of size
//! `2n` (Davies-Harte); the dense Cholesky factor of the fBm covariance is
//! kept as a fallback and as a test oracle.
//!
//! A cylindrical path is a family of independent scalar paths, one per
//! eigenmode, drawn from disjoint substreams keyed by `(seed, mode)`.

use std::io::Write;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{domain, Error, Result};
use crate::rng::{substream, Purpose};

/// Relative size below which negative circulant eigenvalues count as round-off.
pub const EMBEDDING_CLAMP: f64 = 1e-12;

/// Hurst parameter together with the uniform sampling grid `t_k = k dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HurstGrid {
    hurst: f64,
    t_final: f64,
    n_steps: usize,
}

impl HurstGrid {
    pub fn new(hurst: f64, t_final: f64, n_steps: usize) -> Result<Self> {
        check_hurst(hurst)?;
        if !(t_final > 0.0 && t_final.is_finite()) {
            return domain(format!("t_final must be positive, got {t_final}"));
        }
        if n_steps == 0 {
            return domain("n_steps must be at least 1");
        }
        Ok(Self { hurst, t_final, n_steps })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_steps as f64
    }

    /// Grid point `t_k`. The last point is exactly `t_final`.
    pub fn time(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.t_final
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps).map(|k| self.time(k)).collect()
    }

    /// Same Hurst parameter and horizon, `factor` times fewer steps.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.n_steps % factor != 0 {
            return Err(Error::GridMismatch(format!(
                "cannot coarsen {} steps by {factor}",
                self.n_steps
            )));
        }
        Self::new(self.hurst, self.t_final, self.n_steps / factor)
    }
}

fn check_hurst(hurst: f64) -> Result<()> {
    if hurst > 0.0 && hurst < 1.0 {
        Ok(())
    } else {
        domain(format!("hurst must lie in (0,1), got {hurst}"))
    }
}

/// Covariance `R_H(t,s)` of fractional Brownian motion.
pub fn fbm_covariance(t: f64, s: f64, hurst: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(t >= 0.0 && s >= 0.0) {
        return domain(format!("times must be nonnegative, got ({t}, {s})"));
    }
    Ok(covariance_unchecked(t, s, hurst))
}

#[inline]
fn covariance_unchecked(t: f64, s: f64, hurst: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (t.powf(h2) + s.powf(h2) - (t - s).abs().powf(h2))
}

/// Autocovariance at lag `k` of the increments of fBm sampled with step `dt`.
pub fn fgn_autocovariance(k: usize, hurst: f64, dt: f64) -> Result<f64> {
    check_hurst(hurst)?;
    if !(dt > 0.0) {
        return domain(format!("dt must be positive, got {dt}"));
    }
    Ok(fgn_unchecked(k, hurst, dt))
}

#[inline]
fn fgn_unchecked(k: usize, hurst: f64, dt: f64) -> f64 {
    let h2 = 2.0 * hurst;
    let k = k as f64;
    dt.powf(h2) * 0.5 * ((k + 1.0).powf(h2) - 2.0 * k.powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Which exact generator produced a path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    CirculantEmbedding,
    Cholesky,
}

/// Scalar fBm sampled at the points of a grid. `values[0] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModePath {
    pub grid: HurstGrid,
    pub values: Vec<f64>,
}

impl ModePath {
    /// Increments `values[k+1] - values[k]`.
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }
}

enum Kernel {
    Circulant { weights: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    Cholesky { factor: DMatrix<f64> },
}

/// Precomputed generator for one grid; reusable across seeds and modes.
pub struct FbmSampler {
    grid: HurstGrid,
    kernel: Kernel,
}

impl FbmSampler {
    /// Circulant embedding, falling back to Cholesky when the embedding is
    /// not nonnegative definite beyond round-off.
    pub fn new(grid: HurstGrid) -> Result<Self> {
        match Self::circulant(grid) {
            Some(s) => Ok(s),
            None => Self::cholesky(grid),
        }
    }

    pub fn with_generator(grid: HurstGrid, generator: Generator) -> Result<Self> {
        match generator {
            Generator::CirculantEmbedding => Self::circulant(grid).ok_or_else(|| {
                Error::Factorization("circulant embedding has negative eigenvalues".into())
            }),
            Generator::Cholesky => Self::cholesky(grid),
        }
    }

    pub fn grid(&self) -> &HurstGrid {
        &self.grid
    }

    pub fn generator(&self) -> Generator {
        match self.kernel {
            Kernel::Circulant { .. } => Generator::CirculantEmbedding,
            Kernel::Cholesky { .. } => Generator::Cholesky,
        }
    }

    fn circulant(grid: HurstGrid) -> Option<Self> {
        let n = grid.n_steps;
        let m = 2 * n;
        let (h, dt) = (grid.hurst, grid.dt());
        let mut row: Vec<Complex64> = (0..m)
            .map(|j| {
                let lag = if j <= n { j } else { m - j };
                Complex64::new(fgn_unchecked(lag, h, dt), 0.0)
            })
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(m);
        fft.process(&mut row);
        let max = row.iter().map(|c| c.re).fold(0.0_f64, f64::max);
        if row.iter().any(|c| c.re < -EMBEDDING_CLAMP * max) {
            return None;
        }
        let weights = row
            .iter()
            .enumerate()
            .map(|(k, c)| {
                let ev = c.re.max(0.0);
                if k == 0 || k == n {
                    (ev / m as f64).sqrt()
                } else {
                    (ev / (2 * m) as f64).sqrt()
                }
            })
            .collect();
        Some(Self { grid, kernel: Kernel::Circulant { weights, fft } })
    }

    fn cholesky(grid: HurstGrid) -> Result<Self> {
        let n = grid.n_steps;
        let h = grid.hurst;
        let times: Vec<f64> = (1..=n).map(|k| grid.time(k)).collect();
        let cov = DMatrix::from_fn(n, n, |i, j| covariance_unchecked(times[i], times[j], h));
        let factor = factorize(cov)?;
        Ok(Self { grid, kernel: Kernel::Cholesky { factor } })
    }

    /// Draws one path from `rng`.
    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R) -> ModePath {
        let n = self.grid.n_steps;
        let mut values = Vec::with_capacity(n + 1);
        values.push(0.0);
        match &self.kernel {
            Kernel::Circulant { weights, fft } => {
                let m = 2 * n;
                let mut w = vec![Complex64::new(0.0, 0.0); m];
                w[0] = Complex64::new(weights[0] * rng.sample::<f64, _>(StandardNormal), 0.0);
                w[n] = Complex64::new(weights[n] * rng.sample::<f64, _>(StandardNormal), 0.0);
                for k in 1..n {
                    let a: f64 = rng.sample(StandardNormal);
                    let b: f64 = rng.sample(StandardNormal);
                    w[k] = Complex64::new(weights[k] * a, weights[k] * b);
                    w[m - k] = w[k].conj();
                }
                fft.process(&mut w);
                let mut acc = 0.0;
                for x in &w[..n] {
                    acc += x.re;
                    values.push(acc);
                }
            }
            Kernel::Cholesky { factor } => {
                let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
                let x = factor * z;
                values.extend(x.iter());
            }
        }
        ModePath { grid: self.grid, values }
    }

    /// Path for substream `stream` under `seed`.
    pub fn sample_stream(&self, seed: u64, stream: u64) -> ModePath {
        self.sample_with(&mut substream(seed, Purpose::ModePath, stream))
    }
}

/// Lower Cholesky factor, with a tiny relative diagonal jitter as the only
/// concession to round-off.
fn factorize(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = cov.clone().cholesky() {
        return Ok(ch.l());
    }
    let scale = cov.diagonal().max();
    let n = cov.nrows();
    let jittered = cov + DMatrix::identity(n, n) * (1e-12 * scale);
    jittered
        .cholesky()
        .map(|c| c.l())
        .ok_or_else(|| Error::Factorization("covariance is not positive semidefinite".into()))
}

/// One path on `grid` from substream 0 of `seed`.
pub fn sample_fbm(grid: HurstGrid, seed: u64) -> Result<ModePath> {
    Ok(FbmSampler::new(grid)?.sample_stream(seed, 0))
}

/// Independent fBm paths, one per eigenmode.
#[derive(Debug, Clone, PartialEq)]
pub struct CylindricalPath {
    pub grid: HurstGrid,
    pub seed: u64,
    pub generator: Generator,
    pub stream_ids: Vec<u64>,
    pub paths: Vec<ModePath>,
}

impl CylindricalPath {
    pub fn n_modes(&self) -> usize {
        self.paths.len()
    }

    /// Every `factor`-th grid point of every mode. The noise is unchanged;
    /// only its sampling gets coarser.
    pub fn subsample(&self, factor: usize) -> Result<Self> {
        let grid = self.grid.coarsen(factor)?;
        let paths = self
            .paths
            .iter()
            .map(|p| ModePath {
                grid,
                values: p.values.iter().step_by(factor).copied().collect(),
            })
            .collect();
        Ok(Self { grid, paths, ..self.clone() })
    }

    /// Little-endian f64, row-major in (mode, time).
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for p in &self.paths {
            for v in &p.values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// SHA-256 of the binary dump, hex encoded.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for p in &self.paths {
            for v in &p.values {
                hasher.update(v.to_le_bytes());
            }
        }
        hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifest(&self) -> PathManifest {
        PathManifest {
            seed: self.seed,
            hurst: self.grid.hurst,
            t_final: self.grid.t_final,
            n_steps: self.grid.n_steps,
            n_modes: self.n_modes(),
            generator: self.generator,
            code_version: crate::CODE_VERSION.to_string(),
        }
    }
}

/// JSON sidecar describing a binary path dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathManifest {
    pub seed: u64,
    pub hurst: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub n_modes: usize,
    pub generator: Generator,
    pub code_version: String,
}

/// `n_modes` independent paths; mode `j` uses substream `j`, so extending
/// `n_modes` leaves the existing paths untouched.
pub fn sample_cylindrical(grid: HurstGrid, n_modes: usize, seed: u64) -> Result<CylindricalPath> {
    if n_modes == 0 {
        return domain("n_modes must be at least 1");
    }
    let sampler = FbmSampler::new(grid)?;
    Ok(sample_cylindrical_with(&sampler, n_modes, seed))
}

pub fn sample_cylindrical_with(sampler: &FbmSampler, n_modes: usize, seed: u64) -> CylindricalPath {
    let stream_ids: Vec<u64> = (0..n_modes as u64).collect();
    let paths = stream_ids
        .par_iter()
        .map(|&j| sampler.sample_stream(seed, j))
        .collect();
    CylindricalPath {
        grid: sampler.grid,
        seed,
        generator: sampler.generator(),
        stream_ids,
        paths,
    }
}

/// Samples fBm at extra times conditionally on the values already drawn at
/// the coarse times, so the refined path is a continuation of the same
/// realisation.
pub struct ConditionalRefiner {
    hurst: f64,
    coarse_times: Vec<f64>,
    fine_times: Vec<f64>,
    // Fine index -> coarse index for fine times that coincide with coarse ones.
    shared: Vec<Option<usize>>,
    factor: DMatrix<f64>,
    n_new: usize,
}

impl ConditionalRefiner {
    /// `coarse_times` and `fine_times` must be positive; zero is implied.
    pub fn new(hurst: f64, coarse_times: &[f64], fine_times: &[f64]) -> Result<Self> {
        check_hurst(hurst)?;
        if coarse_times.iter().chain(fine_times).any(|&t| !(t > 0.0)) {
            return domain("refinement times must be positive");
        }
        let shared: Vec<Option<usize>> = fine_times
            .iter()
            .map(|&t| coarse_times.iter().position(|&c| (c - t).abs() <= 1e-14 * c))
            .collect();
        let new_times: Vec<f64> = fine_times
            .iter()
            .zip(&shared)
            .filter(|(_, s)| s.is_none())
            .map(|(&t, _)| t)
            .collect();
        let all: Vec<f64> = coarse_times.iter().chain(&new_times).copied().collect();
        // Correlation form keeps widely separated time scales well conditioned.
        let scale: Vec<f64> = all.iter().map(|t| t.powf(hurst)).collect();
        let n = all.len();
        let cor = DMatrix::from_fn(n, n, |i, j| {
            covariance_unchecked(all[i], all[j], hurst) / (scale[i] * scale[j])
        });
        let factor = factorize(cor)?;
        Ok(Self {
            hurst,
            coarse_times: coarse_times.to_vec(),
            fine_times: fine_times.to_vec(),
            shared,
            factor,
            n_new: new_times.len(),
        })
    }

    /// Values at the fine times given the path values at the coarse times.
    pub fn refine<R: Rng + ?Sized>(&self, coarse_values: &[f64], rng: &mut R) -> Vec<f64> {
        let nc = self.coarse_times.len();
        let h = self.hurst;
        // Whitened coarse coordinates: L_cc w = y_c.
        let mut w = vec![0.0; nc + self.n_new];
        for i in 0..nc {
            let y = coarse_values[i] / self.coarse_times[i].powf(h);
            let mut acc = y;
            for k in 0..i {
                acc -= self.factor[(i, k)] * w[k];
            }
            w[i] = acc / self.factor[(i, i)];
        }
        for slot in w.iter_mut().skip(nc) {
            *slot = rng.sample(StandardNormal);
        }
        let mut out = Vec::with_capacity(self.fine_times.len());
        let mut next_new = nc;
        for (f, &t) in self.fine_times.iter().enumerate() {
            match self.shared[f] {
                Some(c) => out.push(coarse_values[c]),
                None => {
                    let i = next_new;
                    next_new += 1;
                    let y: f64 = (0..=i).map(|k| self.factor[(i, k)] * w[k]).sum();
                    out.push(y * t.powf(h));
                }
            }
        }
        out
    }
}

/// Continues every mode of `coarse` onto `fine`, a grid starting at zero
/// whose points may fall between the coarse ones. Values at coarse grid
/// points are kept; the others are drawn conditionally on the whole coarse
/// path from the refinement substream of each mode.
pub fn refine_cylindrical(coarse: &CylindricalPath, fine: HurstGrid) -> Result<CylindricalPath> {
    if fine.hurst() != coarse.grid.hurst() {
        return Err(Error::GridMismatch("refinement must keep the Hurst parameter".into()));
    }
    let coarse_times: Vec<f64> = coarse.grid.times()[1..].to_vec();
    let fine_times: Vec<f64> = fine.times()[1..].to_vec();
    let refiner = ConditionalRefiner::new(fine.hurst(), &coarse_times, &fine_times)?;
    let paths = coarse
        .paths
        .par_iter()
        .zip(&coarse.stream_ids)
        .map(|(p, &id)| {
            let mut rng = substream(coarse.seed, Purpose::Refinement, id);
            let mut values = Vec::with_capacity(fine.n_steps() + 1);
            values.push(0.0);
            values.extend(refiner.refine(&p.values[1..], &mut rng));
            ModePath { grid: fine, values }
        })
        .collect();
    Ok(CylindricalPath {
        grid: fine,
        seed: coarse.seed,
        generator: coarse.generator,
        stream_ids: coarse.stream_ids.clone(),
        paths,
    })
}

/// Ensemble check of a sampler against the exact covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCheck {
    pub hurst: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub generator: Generator,
    /// Entry pairs `(s ≤ t)` over positive grid times.
    pub n_pairs: usize,
    /// Share of pairs whose empirical covariance lies within `z_limit`
    /// Monte-Carlo standard errors of the exact one.
    pub fraction_within: f64,
    pub max_abs_z: f64,
    pub z_limit: f64,
}

/// Draws `n_paths` paths (substreams `0..n_paths` of `seed`) and compares the
/// empirical second moments with the exact covariance. The standard error of
/// `X_s X_t` is `√((C_ss C_tt + C_st²)/n)` for centred Gaussians.
pub fn covariance_check(grid: HurstGrid, n_paths: usize, seed: u64, z_limit: f64) -> Result<CovarianceCheck> {
    if n_paths < 2 {
        return domain("need at least two paths");
    }
    let sampler = FbmSampler::new(grid)?;
    let n = grid.n_steps();
    let tri = n * (n + 1) / 2;
    let chunk = 256;
    let partial: Vec<Vec<f64>> = (0..n_paths.div_ceil(chunk))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![0.0; tri];
            for i in c * chunk..((c + 1) * chunk).min(n_paths) {
                let x = &sampler.sample_stream(seed, i as u64).values[1..];
                let mut k = 0;
                for a in 0..n {
                    let xa = x[a];
                    for xb in &x[a..] {
                        acc[k] += xa * xb;
                        k += 1;
                    }
                }
            }
            acc
        })
        .collect();
    let mut sum = vec![0.0; tri];
    for p in &partial {
        for (s, v) in sum.iter_mut().zip(p) {
            *s += v;
        }
    }
    let times = grid.times();
    let h = grid.hurst();
    let np = n_paths as f64;
    let (mut within, mut max_z, mut k) = (0usize, 0.0f64, 0);
    for a in 0..n {
        let caa = covariance_unchecked(times[a + 1], times[a + 1], h);
        for b in a..n {
            let cbb = covariance_unchecked(times[b + 1], times[b + 1], h);
            let cab = covariance_unchecked(times[a + 1], times[b + 1], h);
            let se = ((caa * cbb + cab * cab) / np).sqrt();
            let z = (sum[k] / np - cab).abs() / se;
            max_z = max_z.max(z);
            if z <= z_limit {
                within += 1;
            }
            k += 1;
        }
    }
    Ok(CovarianceCheck {
        hurst: h,
        n_steps: n,
        n_paths,
        generator: sampler.generator(),
        n_pairs: tri,
        fraction_within: within as f64 / tri as f64,
        max_abs_z: max_z,
        z_limit,
    })
}
