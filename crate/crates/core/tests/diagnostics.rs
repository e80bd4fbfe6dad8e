use ddft_core::diagnostics::{check_envelope_rows, record, RecordOptions, Row, COLUMNS};
use ddft_core::dynamics::{Dynamics, StepControl};
use ddft_core::energy::EnergyBreakdown;
use ddft_core::equilibrium::{solve_equilibrium, PicardOptions, RateAccumulator, RateNorms};
use ddft_core::{Field, Grid, KernelSpec, Model, TensorKernelSpec};

#[test]
fn uniform_free_state() {
    let g = Grid::new(1.0, 32, 1).unwrap();
    let dynm = Dynamics::new(&g, &Model::free()).unwrap();
    let s = dynm.initial_state(Field::constant(&g, 1.0), 0.0, &StepControl::default()).unwrap();
    let row = record(&dynm, &s, None).unwrap();
    assert!((row.mass - 1.0).abs() < 1e-15);
    assert!((row.f.total + 1.0).abs() < 1e-15);
    assert_eq!(row.dissipation, 0.0);
    assert_eq!(row.harnack_ratio, 1.0);
    assert_eq!(row.l2_dist_to_equilibrium, None);
    assert_eq!(row.values().len(), COLUMNS.len());
}

#[test]
fn equilibrium_state_has_no_flux() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let model = Model {
        v1: KernelSpec::harmonic(0.5, 3.0),
        v2: KernelSpec::gaussian(0.2, 0.2),
        z1: TensorKernelSpec::isotropic(KernelSpec::gaussian(0.3, 0.2)),
        z2: TensorKernelSpec::isotropic(KernelSpec::gaussian(0.5, 0.2)),
    };
    let eq = solve_equilibrium(&g, &model.v1, &model.v2, &PicardOptions::default()).unwrap();
    let dynm = Dynamics::new(&g, &model).unwrap();
    let s = dynm.initial_state(eq.rho0.clone(), 0.0, &StepControl::default()).unwrap();
    let row = record(&dynm, &s, Some(&eq.rho0)).unwrap();
    assert!(row.dissipation.abs() < 1e-12);
    assert!(row.flux_l1_norm <= 1e-8);
    assert_eq!(row.l2_dist_to_equilibrium, Some(0.0));
    assert!(row.contraction_margin > 0.0);
}

#[test]
fn transient_rows_and_reproducibility() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let model = Model { v1: KernelSpec::harmonic(0.5, 1.0), ..Model::free() };
    let eq = solve_equilibrium(&g, &model.v1, &model.v2, &PicardOptions::default()).unwrap();
    let dynm = Dynamics::new(&g, &model).unwrap();
    let rho0 = Field::from_fn(&g, |x| 1.0 + 0.4 * (3.0 * x[0]).cos());
    let m = ddft_core::grid::integrate(&g, &rho0).unwrap();
    let opts = RecordOptions { record_every: 5, snapshot_every: 1, equilibrium: Some(eq.rho0.clone()), ..Default::default() };
    let ctrl = StepControl { dt: 1e-3, ..StepControl::default() };
    let traj = dynm.evolve(&rho0.map(|v| v / m), &ctrl, 0.2, &opts).unwrap();
    assert_eq!(traj.rows.len(), traj.snapshots.len());
    for w in traj.rows.windows(2) {
        assert!(w[1].t > w[0].t);
        assert!(w[1].l2_dist_to_equilibrium < w[0].l2_dist_to_equilibrium);
        assert!(w[1].dissipation < 0.0);
    }
    // every row is recomputable from its snapshot
    for (row, snap) in traj.rows.iter().zip(&traj.snapshots) {
        let s = dynm.initial_state(snap.rho.clone(), snap.t, &ctrl).unwrap();
        let again = record(&dynm, &s, Some(&eq.rho0)).unwrap();
        for (a, b) in row.values().iter().zip(again.values().iter()).take(16) {
            let (a, b) = (a.unwrap_or(0.0), b.unwrap_or(0.0));
            assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()), "{a} vs {b}");
        }
    }
}

fn synthetic_row(t: f64, dist: f64, rt: f64) -> Row {
    Row {
        t,
        mass: 1.0,
        min_rho: 1.0,
        max_rho: 1.0,
        f: EnergyBreakdown { entropy: 0.0, external: 0.0, interaction: 0.0, total: 0.0 },
        dissipation: 0.0,
        l2_dist_to_equilibrium: Some(dist),
        flux_l1_norm: 0.0,
        mu_min: 1.0,
        mu_max: 1.0,
        contraction_margin: 1.0,
        r_t_running: Some(rt),
        harnack_ratio: 1.0,
        flux_iterations: 0,
    }
}

#[test]
fn envelope_negative_control() {
    let mut acc = RateAccumulator::new(RateNorms::default(), 1.0 / std::f64::consts::PI);
    acc.push(0.0, 1.0, 1.0, 0.0);
    let rate = acc.push(1.0, 1.0, 1.0, 0.0);
    let good: Vec<Row> = (0..5).map(|k| synthetic_row(k as f64 * 0.25, (-(k as f64)).exp(), k as f64 * 1.6)).collect();
    assert!(check_envelope_rows(&good, &rate).ok);
    let mut bad = good.clone();
    bad[3].l2_dist_to_equilibrium = Some(0.9);
    let check = check_envelope_rows(&bad, &rate);
    assert!(!check.ok);
    assert_eq!(check.violations, vec![3]);
}
