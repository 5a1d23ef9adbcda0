//! d-dimensional FFT on a uniform `n^d` grid of the 2π-torus.
//!
//! Index layout is row-major with the last axis contiguous. `inverse` maps
//! Fourier coefficients to point values (no normalisation), `forward` maps
//! point values back to coefficients (divides by `n^d`).

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub struct GridFft {
    n: usize,
    dim: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl GridFft {
    pub fn new(n: usize, dim: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            dim,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Flat index of wavevector `k` (components taken mod `n`).
    pub fn index_of(&self, k: &[i32]) -> usize {
        let n = self.n as i64;
        k.iter()
            .fold(0usize, |acc, &c| acc * self.n + (c as i64).rem_euclid(n) as usize)
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.apply(&*self.inverse, data);
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.apply(&*self.forward, data);
        let norm = 1.0 / self.len() as f64;
        for x in data.iter_mut() {
            *x *= norm;
        }
    }

    fn apply(&self, fft: &dyn Fft<f64>, data: &mut [Complex64]) {
        debug_assert_eq!(data.len(), self.len());
        let n = self.n;
        let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        // Last axis is contiguous.
        fft.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::new(0.0, 0.0); n];
        for axis in (0..self.dim.saturating_sub(1)).rev() {
            let stride = n.pow((self.dim - 1 - axis) as u32);
            let block = stride * n;
            for base in (0..data.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, slot) in line.iter_mut().enumerate() {
                        *slot = data[start + i * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (i, v) in line.iter().enumerate() {
                        data[start + i * stride] = *v;
                    }
                }
            }
        }
    }
}

/// Smallest integer `>= target` of the form `2^a 3^b 5^c`.
pub fn smooth_size(target: usize) -> usize {
    let mut n = target.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smooth_sizes() {
        assert_eq!(smooth_size(49), 50);
        assert_eq!(smooth_size(65), 72);
        assert_eq!(smooth_size(64), 64);
        assert_eq!(smooth_size(7), 8);
    }

    #[test]
    fn round_trip_3d() {
        let g = GridFft::new(6, 3);
        let orig: Vec<Complex64> = (0..g.len())
            .map(|i| Complex64::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()))
            .collect();
        let mut data = orig.clone();
        g.inverse(&mut data);
        g.forward(&mut data);
        for (a, b) in data.iter().zip(&orig) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn single_mode_evaluates_exponential() {
        let n = 8;
        let g = GridFft::new(n, 2);
        let mut data = vec![Complex64::new(0.0, 0.0); g.len()];
        data[g.index_of(&[1, -2])] = Complex64::new(1.0, 0.0);
        g.inverse(&mut data);
        let h = 2.0 * std::f64::consts::PI / n as f64;
        for i in 0..n {
            for j in 0..n {
                let phase = i as f64 * h - 2.0 * j as f64 * h;
                let v = data[i * n + j];
                assert!((v.re - phase.cos()).abs() < 1e-13);
                assert!((v.im - phase.sin()).abs() < 1e-13);
            }
        }
    }
}
