mod common;

use common::{gaussian_hi, random_density, rng};
use ddft_core::diagnostics::{check_envelope, RecordOptions};
use ddft_core::dynamics::{Dynamics, StepControl};
use ddft_core::energy::Potentials;
use ddft_core::equilibrium::{
    picard_map, picard_solve, poincare_constant, rate_estimate, solve_equilibrium, stationary_flux_check,
    PicardOptions, RateNorms,
};
use ddft_core::grid::{integrate, l1_distance, l2_distance};
use ddft_core::nonlocal::HiOperator;
use ddft_core::{Error, Field, Grid, KernelSpec, Model};
use std::f64::consts::PI;

#[test]
fn picard_map_examples() {
    let g = Grid::new(2.0, 32, 1).unwrap();
    let free = Potentials::new(&g, &KernelSpec::zero(), &KernelSpec::zero()).unwrap();
    let s = picard_map(&free, &random_density(&g, &mut rng(1))).unwrap();
    assert!(s.values.iter().all(|v| (v - 0.5).abs() < 1e-15));
    // overflow guard: huge potentials still give a density
    let steep = Potentials::new(&g, &KernelSpec::harmonic(1.0, 2000.0), &KernelSpec::zero()).unwrap();
    let s = picard_map(&steep, &Field::constant(&g, 0.5)).unwrap();
    assert!((integrate(&g, &s).unwrap() - 1.0).abs() < 1e-13);
}

#[test]
fn picard_map_contracts_for_small_interactions() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let pot = Potentials::new(&g, &KernelSpec::harmonic(0.5, 2.0), &KernelSpec::gaussian(0.2, 0.2)).unwrap();
    let factor = 0.5f64.exp() / 2.0;
    let mut r = rng(3);
    for _ in 0..30 {
        let a = random_density(&g, &mut r);
        let b = random_density(&g, &mut r);
        let lhs = l1_distance(&g, &picard_map(&pot, &a).unwrap(), &picard_map(&pot, &b).unwrap());
        assert!(lhs <= factor * l1_distance(&g, &a, &b));
    }
}

#[test]
fn non_interacting_equilibrium_in_one_iteration() {
    let g = Grid::new(1.0, 128, 1).unwrap();
    let res = solve_equilibrium(&g, &KernelSpec::harmonic(0.3, 5.0), &KernelSpec::zero(), &PicardOptions::default())
        .unwrap();
    assert_eq!(res.iterations, 1);
    assert!(res.el_residual <= 1e-10);
    assert!(res.contraction_flag);
}

#[test]
fn interacting_equilibrium_contracts_and_is_unique() {
    let g = Grid::new(1.0, 128, 1).unwrap();
    let v1 = KernelSpec::harmonic(0.5, 4.0);
    let v2 = KernelSpec::gaussian(0.2, 0.2);
    let pot = Potentials::new(&g, &v1, &v2).unwrap();
    let opts = PicardOptions { tol: 1e-13, ..PicardOptions::default() };
    let base = solve_equilibrium(&g, &v1, &v2, &opts).unwrap();
    assert!(base.asymptotic_ratio(10).unwrap() <= 0.83);
    assert!(base.el_residual <= 1e-6 * (1.0 + base.chemical_potential.abs()));
    assert!(l1_distance(&g, &base.rho0, &picard_map(&pot, &base.rho0).unwrap()) <= 1e-13);
    let mut r = rng(17);
    for _ in 0..5 {
        let res = picard_solve(&pot, &random_density(&g, &mut r), &opts).unwrap();
        assert!(l1_distance(&g, &res.rho0, &base.rho0) <= 1e-8);
    }
    let hi = HiOperator::new(&g, &gaussian_hi(0.3, 0.2), &gaussian_hi(0.5, 0.2)).unwrap();
    assert!(stationary_flux_check(&pot, &hi, &base.rho0).unwrap() <= 1e-8);
    // negative control
    let bumped = common::normalize(&g, base.rho0.sub(&Field::from_fn(&g, |x| -0.1 * x[0])));
    assert!(stationary_flux_check(&pot, &hi, &bumped).unwrap() > 1e-3);
}

#[test]
fn picard_reports_history_on_failure() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let pot = Potentials::new(&g, &KernelSpec::harmonic(0.5, 4.0), &KernelSpec::gaussian(0.2, 0.2)).unwrap();
    let err = picard_solve(&pot, &Field::constant(&g, 1.0), &PicardOptions { tol: 1e-300, max_iter: 1, damping: 1.0 })
        .unwrap_err();
    match err {
        Error::MaxIterations { history, iterations, .. } => {
            assert_eq!(iterations, 1);
            assert_eq!(history.len(), 2);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn poincare_constants() {
    for (l, n) in [(1.0, 256usize), (2.0, 256)] {
        let (nu1, c_pw) = poincare_constant(&Grid::new(l, n, 1).unwrap()).unwrap();
        let exact = (PI / l).powi(2);
        assert!((nu1 / exact - 1.0).abs() < 1e-3, "{nu1}");
        assert!(c_pw <= l / PI + 1e-3);
    }
    let g = Grid::new(1.0, 32, 2).unwrap();
    let (nu1, c_pw) = poincare_constant(&g).unwrap();
    assert!((nu1 / (PI * PI) - 1.0).abs() < 1e-2);
    assert!(c_pw <= g.diameter() / PI + 1e-3);
}

#[test]
fn heat_equation_rate_and_envelope() {
    let g = Grid::new(1.0, 128, 1).unwrap();
    let dynm = Dynamics::new(&g, &Model::free()).unwrap();
    let (_, c_pw) = poincare_constant(&g).unwrap();
    let rho0 = Field::from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
    let opts = RecordOptions {
        record_every: 10,
        equilibrium: Some(Field::constant(&g, 1.0)),
        c_pw: Some(c_pw),
        ..RecordOptions::default()
    };
    let traj = dynm.evolve(&rho0, &StepControl { dt: 1e-3, ..StepControl::default() }, 0.5, &opts).unwrap();
    let rate = rate_estimate(&traj, &RateNorms::default(), c_pw).unwrap();
    assert!((rate.r_t - 0.5 / (c_pw * c_pw)).abs() < 1e-12);
    assert_eq!(rate.r_t, rate.r_t_conservative);
    assert!(rate.positive);
    assert!(check_envelope(&traj, &rate).ok);
}

#[test]
fn trap_envelope_and_hypothesis_gate() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let model = Model { v1: KernelSpec::harmonic(0.5, 0.5), ..Model::free() };
    let (_, c_pw) = poincare_constant(&g).unwrap();
    let eq = solve_equilibrium(&g, &model.v1, &model.v2, &PicardOptions::default()).unwrap();
    let rho0 = Field::from_fn(&g, |x| 1.0 + 0.5 * (PI * x[0]).cos());
    let ctrl = StepControl { dt: 1e-3, ..StepControl::default() };
    let opts = RecordOptions { record_every: 10, equilibrium: Some(eq.rho0.clone()), c_pw: Some(c_pw), ..Default::default() };
    let traj = Dynamics::new(&g, &model).unwrap().evolve(&rho0, &ctrl, 1.0, &opts).unwrap();
    let rate = rate_estimate(&traj, &RateNorms::from_model(&g, &model), c_pw).unwrap();
    assert!(rate.positive);
    assert!(check_envelope(&traj, &rate).ok);

    // a steep trap makes r_t negative: the theorem says nothing, so nothing is checked
    let steep = Model { v1: KernelSpec::harmonic(0.5, 20.0), ..model };
    let traj = Dynamics::new(&g, &steep).unwrap().evolve(&rho0, &ctrl, 0.2, &opts).unwrap();
    let rate = rate_estimate(&traj, &RateNorms::from_model(&g, &steep), c_pw).unwrap();
    assert!(!rate.positive);
    let check = check_envelope(&traj, &rate);
    assert!(check.ok && check.notice.is_some());
    assert!(l2_distance(&g, &traj.snapshots.last().unwrap().rho, &eq.rho0) > 0.0);
}
