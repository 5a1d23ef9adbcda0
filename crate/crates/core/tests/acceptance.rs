//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs as a plain binary so the lines always reach the
//! test log.

mod common;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::{reference_config, small_data_config};
use fracstokes::convolution::{
    average_reports, convolve, doubling_cutoffs, exact_ou, regularity_probe, RegularityOptions, Verdict,
};
use fracstokes::energy::{energy_audit, gronwall_constant, ladyzhenskaya_constant};
use fracstokes::estimates::{check_admissibility, verify_hs_regime};
use fracstokes::fbm::{covariance_check, sample_cylindrical, HurstGrid};
use fracstokes::runner::{run, Cli, EXIT_OK};
use fracstokes::solver::{
    compute_tau, convergence_study, exp_euler, seed_contrast, solve_local, uniqueness_probe, DirectStatus, Setup,
};
use fracstokes::spectral::calibrate::log_grid;
use fracstokes::spectral::{NoiseOperator, SpectralField, StokesModel};
use fracstokes::stats::ks_two_sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn fbm_exactness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 1.0;
    let mut details = Vec::new();
    for (i, h) in [0.3, 0.5, 0.75, 0.9].into_iter().enumerate() {
        let grid = HurstGrid::new(h, 1.0, 256).unwrap();
        let c = covariance_check(grid, 20_000, 100 + i as u64, 5.0).unwrap();
        worst = worst.min(c.fraction_within);
        details.push(format!("H={h}: {:.4}", c.fraction_within));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst >= 0.99 && secs < 60.0, format!("{} within 5 SE; {secs:.1}s", details.join(", ")))
}

fn hs_shapes() -> Outcome {
    let start = Instant::now();
    let grid = log_grid(1e-6, 1.0, 20);
    let half = verify_hs_regime(0.0, 2, &grid).unwrap();
    let mut pass = (0.49..=0.51).contains(&half.sup_ratio);
    let mut details = vec![format!("sup t·s_0 = {:.5}", half.sup_ratio)];
    for (d, q) in [(2, 1.0), (3, 1.5), (2, -1.0), (2, -0.5), (3, -1.0), (3, -0.5)] {
        let r = verify_hs_regime(q, d, &grid).unwrap();
        pass &= r.pass && r.sup_ratio.is_finite();
        details.push(format!("d={d} q={q}: slope {:.4}", r.slope));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(pass && secs < 120.0, format!("{}; {secs:.1}s", details.join(", ")))
}

fn convolution_law() -> Outcome {
    let start = Instant::now();
    let model = StokesModel::abstract_diagonal(2, 1, 1.0).unwrap();
    let noise = NoiseOperator::new(0.0);
    let grid = HurstGrid::new(0.5, 2.0, 40).unwrap();
    let n = 20_000u64;
    let mut quad_end = Vec::with_capacity(n as usize);
    let mut ou_end = Vec::with_capacity(n as usize);
    let mut sum_sq = vec![0.0; grid.n_steps() + 1];
    for seed in 0..n {
        let z = convolve(&sample_cylindrical(grid, 1, seed).unwrap(), &model, noise, 4).unwrap();
        for (s, v) in sum_sq.iter_mut().zip(z.mode(0)) {
            *s += v * v;
        }
        quad_end.push(*z.mode(0).last().unwrap());
        ou_end.push(*exact_ou(&model, noise, grid, seed).unwrap().mode(0).last().unwrap());
    }
    let mut worst_z: f64 = 0.0;
    for k in (4..=40).step_by(4) {
        let t = grid.time(k);
        let var = 0.5 * (1.0 - (-2.0 * t).exp());
        let se = var * (2.0 / n as f64).sqrt();
        worst_z = worst_z.max((sum_sq[k] / n as f64 - var).abs() / se);
    }
    let ks = ks_two_sample(&quad_end, &ou_end);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_z <= 5.0 && ks.p_value > 0.01 && secs < 120.0,
        format!("max |variance z-score| {worst_z:.2} over 10 times, KS p = {:.3}; {secs:.1}s", ks.p_value),
    )
}

fn regularity_dichotomy() -> Outcome {
    let start = Instant::now();
    let model = StokesModel::fourier_periodic(2, 64, 1.0).unwrap();
    let cutoffs = doubling_cutoffs(&model, 4.0);
    let options = RegularityOptions::default();
    let mut verdicts = Vec::new();
    let mut details = Vec::new();
    for h in [0.8, 0.55] {
        // Δt resolves the fastest retained mode: νλ_max Δt ≈ 1.
        let grid = HurstGrid::new(h, 1.0 / 16.0, 512).unwrap();
        let reports: Vec<_> = (0..4)
            .map(|seed| {
                let noise = sample_cylindrical(grid, model.n_modes(), 40 + seed).unwrap();
                let z = convolve(&noise, &model, NoiseOperator::new(0.0), 4).unwrap();
                regularity_probe(&z, 0.5, &cutoffs, options).unwrap()
            })
            .collect();
        let avg = average_reports(&reports, options).unwrap();
        let tail: Vec<String> = avg.ratios.iter().map(|r| format!("{r:.3}")).collect();
        details.push(format!("H={h}: ratios [{}] {:?}", tail.join(", "), avg.verdict));
        verdicts.push(avg.verdict);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        verdicts == [Verdict::Convergent, Verdict::Divergent] && secs < 300.0,
        format!("{}; {secs:.1}s", details.join("; ")),
    )
}

fn picard_contraction() -> Outcome {
    let tau = compute_tau(4.0, 2, 1.0, 1.0, 1.0).unwrap();
    let setup = Setup::new(reference_config(1)).unwrap();
    let sol = solve_local(&setup).unwrap();
    let d = &sol.diagnostics;
    let gaps = &d.iteration_gaps;
    let contracting = gaps.windows(2).skip(1).all(|w| w[1] <= (d.c0 + 0.05) * w[0]);
    let bounded = d.sup_iterate_norm <= 2.1 * d.k0;
    outcome(
        d.converged && contracting && bounded && tau == 3.90625e-7,
        format!(
            "{} iterations, C0 = {:.3}, sup|v|_4 / K0 = {:.3}, tau(4,2,1,1) = {tau:e}",
            d.iterations,
            d.c0,
            d.sup_iterate_norm / d.k0
        ),
    )
}

fn uniqueness() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut tol = 0.0;
    for seed in 1..=5 {
        let r = uniqueness_probe(&Setup::new(reference_config(seed)).unwrap()).unwrap();
        worst = worst.max(r.deviation);
        tol = r.picard_tol;
    }
    let a = Setup::new(reference_config(1)).unwrap();
    let b = Setup::new(reference_config(2)).unwrap();
    let contrast = seed_contrast(&a, &b).unwrap();
    outcome(
        worst <= 10.0 * tol && contrast > 1e3 * tol,
        format!("max deviation {worst:.2e}, different-seed deviation {contrast:.2e}, tol {tol:e}"),
    )
}

fn scheme_cross_validation() -> Outcome {
    let setup = Setup::new(small_data_config(3)).unwrap();
    let report = convergence_study(&setup, 4).unwrap();
    let ratios: Vec<f64> = report.rows.iter().skip(1).map(|r| r.ratio).collect();
    let pass = ratios.len() == 3 && ratios.iter().all(|&r| r >= 1.8);
    let shown: Vec<String> = ratios.iter().map(|r| format!("{r:.3}")).collect();
    outcome(pass, format!("tau = {:.4}, gap ratios [{}]", report.tau, shown.join(", ")))
}

fn bilinear_identities() -> Outcome {
    let mut worst: f64 = 0.0;
    for (d, k) in [(2, 16), (3, 8)] {
        let model = StokesModel::fourier_periodic(d, k, 1.0).unwrap();
        for i in 0..100u64 {
            let f = |j: u64| SpectralField::random(&model, 900 + d as u64, 3 * i + j, 2.0);
            let (u, v, w) = (f(0), f(1), f(2));
            let buu = u.bilinear(&u).unwrap();
            let energy = buu.inner(&u).unwrap().abs() / (buu.l2_norm() * u.l2_norm());
            let (buv, buw) = (u.bilinear(&v).unwrap(), u.bilinear(&w).unwrap());
            let scale = (buv.l2_norm() * w.l2_norm()).max(buw.l2_norm() * v.l2_norm());
            let anti = (buv.inner(&w).unwrap() + buw.inner(&v).unwrap()).abs() / scale;
            worst = worst.max(energy).max(anti);
        }
    }
    outcome(worst <= 1e-12, format!("max relative defect {worst:.2e} over 200 fields"))
}

fn energy_gronwall() -> Outcome {
    let model = StokesModel::fourier_periodic(2, 16, 1.0).unwrap();
    let c = gronwall_constant(ladyzhenskaya_constant(&model, 0, 100).unwrap().sup, 1.0);
    let mut residuals = Vec::new();
    let mut envelope_ok = true;
    let mut monotone_control = true;
    for amplitude in [1.0, 0.0] {
        let mut cfg = reference_config(4);
        cfg.n_steps = 2048;
        cfg.noise = NoiseOperator::new(1.5).with_amplitude(amplitude);
        let setup = Setup::new(cfg).unwrap();
        for factor in [8, 4, 2, 1] {
            let noise = setup.noise.subsample(factor).unwrap();
            let z = convolve(&noise, &setup.model, setup.config.noise, 4).unwrap().states();
            let (u, status) = exp_euler(&setup.u0, &z, noise.grid.dt(), 4.0, 0.0, true).unwrap();
            if status != DirectStatus::Completed {
                return outcome(false, format!("direct run stopped: {status:?}"));
            }
            let v: Vec<_> = u.iter().zip(&z).map(|(a, b)| a.sub(b).unwrap()).collect();
            let ledger = energy_audit(&v, &z, &noise.grid.times(), c).unwrap();
            if amplitude > 0.0 {
                envelope_ok &= ledger.pass;
                residuals.push(ledger.residual_norm());
            } else {
                monotone_control &= ledger.v_l2_sq.windows(2).all(|w| w[1] <= w[0]);
            }
        }
    }
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let first_order = orders.iter().all(|&o| o >= 0.8);
    let shown: Vec<String> = orders.iter().map(|o| format!("{o:.2}")).collect();
    outcome(
        envelope_ok && first_order && monotone_control,
        format!(
            "C = {c:.3}, envelope holds {envelope_ok}, residual orders [{}], z=0 decay monotone {monotone_control}",
            shown.join(", ")
        ),
    )
}

fn admissibility_table() -> Outcome {
    let mut pass = true;
    for p in [2.5, 3.0, 4.0, 6.0, 10.0, 100.0] {
        for h in [0.01, 0.3, 0.5, 1.0 - 1.0 / p, 0.75, 0.9, 0.99] {
            let two = check_admissibility(2, p, 0.0, h);
            pass &= two.admissible == (h > 1.0 - 1.0 / p);
            if p > 3.0 {
                pass &= !check_admissibility(3, p, 0.0, h).admissible;
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut mismatches = 0;
    for i in 0..1000 {
        let d = if i % 2 == 0 { 2 } else { 3 };
        let p = [1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 12.0, 50.0][(i / 2) % 10];
        let q = rng.random_range(-2.0..3.0);
        let h = if i % 7 == 0 {
            // Exactly on the boundary, where strictness matters.
            d as f64 / 2.0 * (1.0 - 1.0 / p) - q / 2.0
        } else {
            rng.random_range(0.0..1.2)
        };
        let lhs = d as f64 / 2.0 * (1.0 - 1.0 / p) - q / 2.0;
        let direct = h > lhs && p > d as f64 && h < 1.0;
        let r = check_admissibility(d, p, q, h);
        if r.admissible != direct || r.lhs.to_bits() != lhs.to_bits() {
            mismatches += 1;
        }
    }
    outcome(pass && mismatches == 0, format!("table matches {pass}, lattice mismatches {mismatches}/1000"))
}

fn csv_cells(dir: &Path) -> Vec<(String, String)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read_to_string(&p).unwrap()))
        .collect();
    out.sort();
    out
}

fn cli(config: PathBuf, out: PathBuf) -> Cli {
    Cli { config, seed: None, out: Some(out), threads: Some(1), quiet: true }
}

fn reproducibility() -> Outcome {
    let configs = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let tmp = tempfile::tempdir().unwrap();
    let mut names: Vec<PathBuf> = fs::read_dir(&configs).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    let mut failures = Vec::new();
    let mut files = 0;
    for path in &names {
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let (first, second) = (tmp.path().join(format!("{stem}_a")), tmp.path().join(format!("{stem}_b")));
        let code_a = run(&cli(path.clone(), first.clone()));
        let code_b = run(&cli(first.join("manifest.json"), second.clone()));
        let (a, b) = (csv_cells(&first), csv_cells(&second));
        files += a.len();
        if code_a != EXIT_OK || code_b != EXIT_OK || a.is_empty() && stem != "check_params" || a != b {
            failures.push(stem);
        }
    }
    // Extending the mode count must not disturb existing mode paths.
    let grid = HurstGrid::new(0.7, 1.0, 128).unwrap();
    let small = sample_cylindrical(grid, 50, 77).unwrap();
    let large = sample_cylindrical(grid, 400, 77).unwrap();
    let paths_stable = small.paths.iter().zip(&large.paths).all(|(a, b)| {
        a.values.iter().zip(&b.values).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    let (k8, k16) = (StokesModel::fourier_periodic(2, 8, 1.0).unwrap(), StokesModel::fourier_periodic(2, 16, 1.0).unwrap());
    let shared = k8.eigenvalues().iter().filter(|&&l| l <= 64.0).count();
    let z8 = convolve(&sample_cylindrical(grid, k8.n_modes(), 5).unwrap(), &k8, NoiseOperator::new(1.0), 4).unwrap();
    let z16 = convolve(&sample_cylindrical(grid, k16.n_modes(), 5).unwrap(), &k16, NoiseOperator::new(1.0), 4).unwrap();
    let modes_stable = (0..shared).all(|j| z8.mode(j).iter().zip(z16.mode(j)).all(|(x, y)| x.to_bits() == y.to_bits()));
    outcome(
        failures.is_empty() && paths_stable && modes_stable,
        format!(
            "{} configs rerun from manifest, {files} CSV files, mismatches {failures:?}; mode paths stable {paths_stable}, {shared} shared modes stable {modes_stable}",
            names.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("fbm covariance exactness", fbm_exactness),
        ("Hilbert-Schmidt small-time shapes", hs_shapes),
        ("stochastic convolution law", convolution_law),
        ("regularity dichotomy", regularity_dichotomy),
        ("Picard contraction", picard_contraction),
        ("pathwise uniqueness", uniqueness),
        ("scheme cross-validation", scheme_cross_validation),
        ("bilinear identities", bilinear_identities),
        ("energy and Gronwall audit", energy_gronwall),
        ("admissibility table", admissibility_table),
        ("reproducibility", reproducibility),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {verdict} {name}: {} [{:.1}s]", i + 1, o.detail, start.elapsed().as_secs_f64());
        if !o.pass {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
