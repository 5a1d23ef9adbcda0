mod common;

use common::{reference_config, small_data_config};
use fracstokes::convolution::convolve;
use fracstokes::energy::{energy_audit, interpolation_norms};
use fracstokes::error::Error;
use fracstokes::solver::{
    compute_k0, exp_euler, seed_contrast, solve_direct, solve_local, solve_local_with, uniqueness_probe,
    DirectStatus, DuhamelRule, InitialCondition, PicardStart, Setup, SolveConfig,
};
use fracstokes::spectral::{Backend, ModelSpec, NoiseOperator, SpectralField};

fn k8(mut c: SolveConfig) -> SolveConfig {
    c.model.backend = Backend::FourierPeriodic { max_wavenumber: 8 };
    c
}

#[test]
fn k0_is_a_reproducible_max() {
    let a = Setup::new(reference_config(7)).unwrap();
    let b = Setup::new(reference_config(7)).unwrap();
    assert_eq!(a.k0.to_bits(), b.k0.to_bits());
    let sup_z = compute_k0(&SpectralField::zeros(&a.model), &a.z, 4.0).unwrap();
    let u0 = a.u0.scale(2.0 * sup_z / a.u0.lp_norm(4.0).unwrap());
    let k0 = compute_k0(&u0, &a.z, 4.0).unwrap();
    assert!((k0 - 2.0 * sup_z).abs() <= 1e-12 * k0);
}

#[test]
fn exp_euler_picard_fixed_point_is_the_direct_scheme() {
    let mut cfg = small_data_config(2);
    cfg.duhamel_rule = DuhamelRule::ExpEuler;
    cfg.min_local_steps = 16;
    let setup = Setup::new(cfg).unwrap();
    let local = solve_local(&setup).unwrap();
    assert!(!local.diagnostics.refined_grid);
    let direct = solve_direct(&setup).unwrap();
    for (n, u) in local.u.iter().enumerate() {
        let gap = u.sub(&direct.u[n]).unwrap().lp_norm(4.0).unwrap();
        assert!(gap <= 1e-11, "n={n}: {gap}");
    }
}

#[test]
fn deterministic_problem_is_unique_to_round_off() {
    let mut cfg = reference_config(3);
    cfg.noise = NoiseOperator::silent();
    let setup = Setup::new(cfg).unwrap();
    let r = uniqueness_probe(&setup).unwrap();
    assert!(r.deviation <= 1e-14, "{r:?}");
}

#[test]
fn distinct_noise_gives_distinct_solutions() {
    let a = Setup::new(k8(reference_config(1))).unwrap();
    let b = Setup::new(k8(reference_config(2))).unwrap();
    let dev = seed_contrast(&a, &b).unwrap();
    assert!(dev > 1e3 * a.config.picard_tol, "{dev}");
}

#[test]
fn horizon_beyond_tau_is_rejected() {
    let setup = Setup::new(k8(reference_config(1))).unwrap();
    let tau = setup.tau().unwrap();
    assert!(solve_local_with(&setup, Some(2.0 * tau), PicardStart::InitialData).is_err());
    let half = solve_local_with(&setup, Some(0.5 * tau), PicardStart::Zero).unwrap();
    assert!((half.diagnostics.horizon - 0.5 * tau).abs() <= 1e-15);
}

#[test]
fn starved_iteration_reports_its_gaps() {
    let mut cfg = k8(reference_config(1));
    cfg.max_picard_iters = 2;
    cfg.picard_tol = 1e-30;
    let err = solve_local(&Setup::new(cfg).unwrap()).err().unwrap();
    match err {
        Error::NonConvergence { iterations, gaps, .. } => {
            assert_eq!(iterations, 2);
            assert_eq!(gaps.len(), 2);
            assert!(gaps[1] < gaps[0]);
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn three_dimensional_local_solution() {
    let cfg = SolveConfig {
        model: ModelSpec { dim: 3, backend: Backend::FourierPeriodic { max_wavenumber: 4 }, viscosity: 1.0 },
        p_exponent: 6.0,
        n_steps: 64,
        min_local_steps: 32,
        ..reference_config(5)
    };
    let setup = Setup::new(cfg).unwrap();
    let sol = solve_local(&setup).unwrap();
    let d = &sol.diagnostics;
    assert!(d.converged && d.uniform_bound_ok && d.c0 < 1.0);
    assert!(d.max_divergence_residual <= 1e-12);
    assert!(d.admissibility.admissible);
}

/// `v = u − z` from the direct integrator on every `factor`-th noise point.
fn direct_v(setup: &Setup, factor: usize) -> (Vec<SpectralField>, Vec<SpectralField>, Vec<f64>) {
    let noise = setup.noise.subsample(factor).unwrap();
    let z = convolve(&noise, &setup.model, setup.config.noise, setup.config.quadrature_order).unwrap().states();
    let (u, status) = exp_euler(&setup.u0, &z, noise.grid.dt(), 4.0, 0.0, true).unwrap();
    assert_eq!(status, DirectStatus::Completed);
    let v = u.iter().zip(&z).map(|(a, b)| a.sub(b).unwrap()).collect();
    (v, z, noise.grid.times())
}

#[test]
fn energy_verdict_is_stable_under_refinement() {
    let mut cfg = k8(reference_config(6));
    cfg.n_steps = 256;
    let setup = Setup::new(cfg).unwrap();
    let mut residuals = Vec::new();
    for factor in [2, 1] {
        let (v, z, t) = direct_v(&setup, factor);
        let ledger = energy_audit(&v, &z, &t, 1.0).unwrap();
        assert!(ledger.pass, "factor {factor}");
        assert!(ledger.max_trilinear_defect <= 1e-12);
        assert!(interpolation_norms(&v, &t, 4.0).unwrap().holds);
        residuals.push(ledger.residual_norm());
    }
    assert!(residuals[1] < residuals[0]);
}

#[test]
fn energy_stays_bounded_as_the_horizon_grows() {
    let mut sup = Vec::new();
    for t_final in [1.0, 2.0, 4.0] {
        let mut cfg = k8(reference_config(8));
        cfg.t_final = t_final;
        cfg.n_steps = (128.0 * t_final) as usize;
        cfg.initial_condition = InitialCondition::Zero;
        let setup = Setup::new(cfg).unwrap();
        let (v, _, t) = direct_v(&setup, 1);
        let norms = interpolation_norms(&v, &t, 4.0).unwrap();
        sup.push((norms.linf_l2, norms.l2_h1 / t_final.sqrt()));
    }
    // Running averages of the dissipation and the peak energy do not grow.
    let (e1, g1) = sup[0];
    for &(e, g) in &sup[1..] {
        assert!(e <= 3.0 * e1 && g <= 3.0 * g1, "{sup:?}");
    }
}
