//! Law-level checks of the fBm generators.

use fracstokes::fbm::{fbm_covariance, refine_cylindrical, sample_cylindrical, FbmSampler, Generator, HurstGrid};
use fracstokes::stats::ks_two_sample;

const PATHS: usize = 4000;

fn endpoints(sampler: &FbmSampler, seed: u64) -> Vec<f64> {
    (0..PATHS as u64).map(|i| *sampler.sample_stream(seed, i).values.last().unwrap()).collect()
}

#[test]
fn endpoint_variance_scales_self_similarly() {
    for h in [0.3, 0.5, 0.8] {
        let a = FbmSampler::new(HurstGrid::new(h, 1.0, 64).unwrap()).unwrap();
        let b = FbmSampler::new(HurstGrid::new(h, 2.0, 64).unwrap()).unwrap();
        let var = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let ratio = var(&endpoints(&b, 2)) / var(&endpoints(&a, 3));
        // Each variance has relative SE √(2/n); the log-ratio SE is about 2/√n.
        let se = 2.0 / (PATHS as f64).sqrt();
        let expected = 2f64.powf(2.0 * h);
        assert!((ratio / expected).ln().abs() <= 5.0 * se, "H={h}: {ratio} vs {expected}");
    }
}

#[test]
fn circulant_and_cholesky_agree_in_law() {
    for h in [0.25, 0.5, 0.85] {
        let grid = HurstGrid::new(h, 1.0, 48).unwrap();
        let circ = FbmSampler::with_generator(grid, Generator::CirculantEmbedding).unwrap();
        let chol = FbmSampler::with_generator(grid, Generator::Cholesky).unwrap();
        let ks = ks_two_sample(&endpoints(&circ, 10), &endpoints(&chol, 11));
        assert!(ks.p_value > 0.01, "H={h}: {ks:?}");
    }
}

#[test]
fn refined_paths_have_fbm_covariance() {
    // Coarse grid of 4 steps on [0, 1], refined onto 12 points of [0, 0.6].
    let h = 0.7;
    let coarse_grid = HurstGrid::new(h, 1.0, 4).unwrap();
    let fine = HurstGrid::new(h, 0.6, 12).unwrap();
    let n = 6000;
    let coarse = sample_cylindrical(coarse_grid, n, 21).unwrap();
    let refined = refine_cylindrical(&coarse, fine).unwrap();
    let times = fine.times();
    for &(a, b) in &[(1usize, 1usize), (3, 7), (5, 12), (12, 12), (2, 11)] {
        let emp: f64 = refined.paths.iter().map(|p| p.values[a] * p.values[b]).sum::<f64>() / n as f64;
        let c = fbm_covariance(times[a], times[b], h).unwrap();
        let caa = fbm_covariance(times[a], times[a], h).unwrap();
        let cbb = fbm_covariance(times[b], times[b], h).unwrap();
        let se = ((caa * cbb + c * c) / n as f64).sqrt();
        assert!((emp - c).abs() <= 5.0 * se, "({a},{b}): {emp} vs {c}");
    }
    // Fine points 5 and 10 are the coarse times 0.25 and 0.5.
    for (r, c) in refined.paths.iter().zip(&coarse.paths).take(50) {
        assert!((r.values[5] - c.values[1]).abs() <= 1e-12);
        assert!((r.values[10] - c.values[2]).abs() <= 1e-12);
    }
}
