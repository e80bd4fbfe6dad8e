use ddft_core::diagnostics::RecordOptions;
use ddft_core::dynamics::{Dynamics, Freezing, Scheme, StepControl};
use ddft_core::grid::{integrate, l2_distance, l2_norm};
use ddft_core::{Field, Grid, KernelSpec, Model, TensorKernelSpec};

fn harmonic_model(hi: bool) -> Model {
    let z = |a: f64| if hi { TensorKernelSpec::isotropic(KernelSpec::gaussian(a, 0.2)) } else { TensorKernelSpec::zero() };
    Model { v1: KernelSpec::harmonic(0.5, 4.0), v2: KernelSpec::gaussian(0.2, 0.2), z1: z(0.5), z2: z(0.5) }
}

fn cosine_bump(g: &Grid) -> Field {
    Field::from_fn(g, |x| 1.0 + 0.1 * (std::f64::consts::PI * x[0]).cos())
}

#[test]
fn heat_equation_decay_rate() {
    let g = Grid::new(1.0, 256, 1).unwrap();
    let dynm = Dynamics::new(&g, &Model::free()).unwrap();
    let ctrl = StepControl { dt: 1e-4, ..StepControl::default() };
    let mut s = dynm.initial_state(cosine_bump(&g), 0.0, &ctrl).unwrap();
    let one = Field::constant(&g, 1.0);
    let mut ts = vec![];
    let mut ls = vec![];
    for k in 1..=1000u32 {
        s = dynm.step(&s, &ctrl).unwrap();
        assert!((integrate(&g, &s.rho).unwrap() - 1.0).abs() < 1e-13);
        if k.is_multiple_of(50) {
            ts.push(s.time);
            ls.push(l2_distance(&g, &s.rho, &one).powi(2).ln());
        }
    }
    let n = ts.len() as f64;
    let (mt, ml) = (ts.iter().sum::<f64>() / n, ls.iter().sum::<f64>() / n);
    let slope = ts.iter().zip(&ls).map(|(t, l)| (t - mt) * (l - ml)).sum::<f64>()
        / ts.iter().map(|t| (t - mt).powi(2)).sum::<f64>();
    let target = -2.0 * std::f64::consts::PI.powi(2);
    assert!((slope / target - 1.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn gibbs_state_is_a_fixed_point() {
    let g = Grid::new(1.0, 128, 1).unwrap();
    let model = Model { v1: KernelSpec::harmonic(0.3, 6.0), ..Model::free() };
    let w = Field::from_fn(&g, |x| (-0.5 * 6.0 * (x[0] - 0.3).powi(2)).exp());
    let z = integrate(&g, &w).unwrap();
    let rho = w.map(|v| v / z);
    let dynm = Dynamics::new(&g, &model).unwrap();
    let ctrl = StepControl { dt: 1e-3, ..StepControl::default() };
    let mut s = dynm.initial_state(rho.clone(), 0.0, &ctrl).unwrap();
    for _ in 0..20 {
        let next = dynm.step(&s, &ctrl).unwrap();
        let change = next.rho.values.iter().zip(&s.rho.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(change <= 1e-12, "{change}");
        s = next;
    }
    assert!(s.flux.max_norm() < 1e-10);
}

#[test]
fn mass_positivity_and_h_theorem_with_hi() {
    let g = Grid::new(1.0, 128, 1).unwrap();
    let dynm = Dynamics::new(&g, &harmonic_model(true)).unwrap();
    let mut rho0 = cosine_bump(&g);
    rho0.values[40] = 0.0;
    let m = integrate(&g, &rho0).unwrap();
    let rho0 = rho0.map(|v| v / m);
    let ctrl = StepControl { dt: 1e-4, ..StepControl::default() };
    let opts = RecordOptions { record_every: 1, ..RecordOptions::default() };
    let traj = dynm.evolve(&rho0, &ctrl, 0.05, &opts).unwrap();
    assert_eq!(traj.rows.len(), 501);
    for (k, r) in traj.rows.iter().enumerate() {
        assert!((r.mass - 1.0).abs() <= 1e-12);
        if k > 0 {
            assert!(r.min_rho > 0.0);
            let prev = &traj.rows[k - 1];
            assert!(r.f.total - prev.f.total <= 1e-10 * (1.0 + prev.f.total.abs()));
            let quotient = (r.f.total - prev.f.total) / (r.t - prev.t);
            let diss = 0.5 * (r.dissipation + prev.dissipation);
            if k > 5 && quotient.abs() > 1e-6 {
                assert!((diss / quotient - 1.0).abs() < 0.1, "row {k}: {diss} vs {quotient}");
            }
        }
        assert!(r.dissipation <= 1e-12);
    }
}

#[test]
fn evolve_zero_time_returns_initial_density() {
    let g = Grid::new(1.0, 32, 1).unwrap();
    let dynm = Dynamics::new(&g, &harmonic_model(false)).unwrap();
    let rho0 = Field::constant(&g, 1.0);
    let traj = dynm.evolve(&rho0, &StepControl::default(), 0.0, &RecordOptions::default()).unwrap();
    assert_eq!(traj.rows.len(), 1);
    assert_eq!(traj.snapshots.last().unwrap().rho, rho0);
}

#[test]
fn evolve_renormalizes_small_defects_only() {
    let g = Grid::new(1.0, 32, 1).unwrap();
    let dynm = Dynamics::new(&g, &Model::free()).unwrap();
    let ok = dynm.evolve(&Field::constant(&g, 1.0 + 1e-8), &StepControl::default(), 0.0, &RecordOptions::default());
    let ok = ok.unwrap();
    assert_eq!(ok.warnings.len(), 1);
    assert!((ok.rows[0].mass - 1.0).abs() < 1e-15);
    assert!(dynm.evolve(&Field::constant(&g, 1.1), &StepControl::default(), 0.0, &RecordOptions::default()).is_err());
}

#[test]
fn runs_are_deterministic() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let dynm = Dynamics::new(&g, &harmonic_model(true)).unwrap();
    let ctrl = StepControl { dt: 1e-3, ..StepControl::default() };
    let opts = RecordOptions { record_every: 5, ..RecordOptions::default() };
    let a = dynm.evolve(&cosine_bump(&g), &ctrl, 0.1, &opts).unwrap();
    let b = dynm.evolve(&cosine_bump(&g), &ctrl, 0.1, &opts).unwrap();
    assert_eq!(a, b);
}

#[test]
fn drift_terms_add_up() {
    let g = Grid::new(1.0, 32, 2).unwrap();
    let model = harmonic_model(true);
    let dynm = Dynamics::new(&g, &model).unwrap();
    let rho = Field::from_fn(&g, |x| 1.0 + 0.3 * (3.0 * x[0]).sin() * x[1]);
    let m = integrate(&g, &rho).unwrap();
    let s = dynm.initial_state(rho.map(|v| v / m), 0.0, &StepControl::default()).unwrap();
    let w = dynm.assemble_drift(&s).unwrap();
    let g2 = ddft_core::convolve::VectorTable::gradient_of(&g, &model.v2).unwrap().convolve(&s.rho).unwrap();
    let za = ddft_core::convolve::convolve_tensor(&g, &model.z2, &s.flux).unwrap();
    for c in 0..g.num_cells() {
        let g1 = model.v1.gradient(g.center(c), 2, 0.0).unwrap();
        for (k, g1k) in g1.iter().enumerate() {
            let e = g1k + g2.values[c][k] + za.values[c][k];
            assert!((w.values[c][k] - e).abs() < 1e-13);
        }
    }
    let free = Dynamics::new(&g, &Model { v1: model.v1.clone(), ..Model::free() }).unwrap();
    let s0 = free.initial_state(s.rho.clone(), 0.0, &StepControl::default()).unwrap();
    let w0 = free.assemble_drift(&s0).unwrap();
    for c in 0..g.num_cells() {
        assert_eq!(w0.values[c], model.v1.gradient(g.center(c), 2, 0.0).unwrap());
    }
}

/// Independent explicit RK4 of the `Z = 0` semi-discrete system.
fn rk4_reference(g: &Grid, v1: &KernelSpec, v2: &KernelSpec, rho0: &Field, t_end: f64, dt: f64) -> Vec<f64> {
    let n = g.num_cells();
    let h = g.spacing();
    let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) * h).collect();
    let v1x: Vec<f64> = x.iter().map(|&xi| v1.value([xi, 0.0], 1, 0.0).unwrap()).collect();
    let v2tab: Vec<f64> = (0..2 * n - 1).map(|k| v2.value([(k as f64 - (n as f64 - 1.0)) * h, 0.0], 1, 0.0).unwrap()).collect();
    let bern = |z: f64| if z.abs() < 1e-8 { 1.0 - z / 2.0 } else { z / z.exp_m1() };
    let rhs = |r: &[f64]| -> Vec<f64> {
        let v: Vec<f64> = (0..n).map(|i| v1x[i] + (0..n).map(|j| v2tab[i + n - 1 - j] * r[j] * h).sum::<f64>()).collect();
        let mut out = vec![0.0; n];
        for i in 0..n - 1 {
            let d = v[i + 1] - v[i];
            let j = (bern(d) * r[i] - bern(-d) * r[i + 1]) / h;
            out[i] -= j / h;
            out[i + 1] += j / h;
        }
        out
    };
    let mut r = rho0.values.clone();
    let steps = (t_end / dt).round() as usize;
    for _ in 0..steps {
        let k1 = rhs(&r);
        let s: Vec<f64> = r.iter().zip(&k1).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k2 = rhs(&s);
        let s: Vec<f64> = r.iter().zip(&k2).map(|(a, b)| a + 0.5 * dt * b).collect();
        let k3 = rhs(&s);
        let s: Vec<f64> = r.iter().zip(&k3).map(|(a, b)| a + dt * b).collect();
        let k4 = rhs(&s);
        for i in 0..n {
            r[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    r
}

#[test]
fn zero_kernel_stepper_matches_rk4_reference() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let model = harmonic_model(false);
    let rho0 = cosine_bump(&g);
    let reference = rk4_reference(&g, &model.v1, &model.v2, &rho0, 0.1, 2e-5);
    let dynm = Dynamics::new(&g, &model).unwrap();
    let linf = |r: &Field| r.values.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);

    let heun = StepControl { dt: 2e-5, scheme: Scheme::ExplicitHeun, energy_guard: false, ..StepControl::default() };
    let traj = dynm.evolve(&rho0, &heun, 0.1, &RecordOptions { record_every: 1000, ..Default::default() }).unwrap();
    let e = linf(&traj.snapshots.last().unwrap().rho);
    assert!(e <= 1e-6, "heun {e}");

    // the implicit scheme converges to the same solution at first order
    let mut errs = vec![];
    for dt in [1e-3, 5e-4] {
        let ctrl = StepControl { dt, inner_picard_max: 20, inner_picard_tol: 1e-14, ..StepControl::default() };
        let traj = dynm.evolve(&rho0, &ctrl, 0.1, &RecordOptions { record_every: 1000, ..Default::default() }).unwrap();
        errs.push(linf(&traj.snapshots.last().unwrap().rho));
    }
    let order = (errs[0] / errs[1]).log2();
    assert!((order - 1.0).abs() < 0.15, "{errs:?}");
}

#[test]
fn hi_changes_path_but_not_endpoint() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let ctrl = StepControl { dt: 2e-3, ..StepControl::default() };
    let opts = RecordOptions { record_every: 100, ..Default::default() };
    let rho0 = cosine_bump(&g);
    let on = Dynamics::new(&g, &harmonic_model(true)).unwrap().evolve(&rho0, &ctrl, 5.0, &opts).unwrap();
    let off = Dynamics::new(&g, &harmonic_model(false)).unwrap().evolve(&rho0, &ctrl, 5.0, &opts).unwrap();
    let mid = |t: &ddft_core::diagnostics::TrajectoryRecord| t.rows[1].f.total;
    assert!((mid(&on) - mid(&off)).abs() > 1e-6);
    let a = &on.snapshots.last().unwrap().rho;
    let b = &off.snapshots.last().unwrap().rho;
    assert!(l2_distance(&g, a, b) < 1e-6);
}

#[test]
fn lagged_freezing_and_two_dimensions() {
    let g = Grid::new(1.0, 16, 2).unwrap();
    let model = Model {
        z1: TensorKernelSpec::dyadic(KernelSpec::gaussian(0.3, 0.3), 1.0, 0.5, 0.05),
        z2: TensorKernelSpec::dyadic(KernelSpec::gaussian(0.3, 0.3), 1.0, 0.5, 0.05),
        ..harmonic_model(false)
    };
    let dynm = Dynamics::new(&g, &model).unwrap();
    let rho0 = Field::from_fn(&g, |x| 1.0 + 0.5 * (3.0 * x[0]).cos() * (2.0 * x[1]).sin());
    let m = integrate(&g, &rho0).unwrap();
    let rho0 = rho0.map(|v| v / m);
    for freezing in [Freezing::Lagged, Freezing::Synchronized] {
        let ctrl = StepControl { dt: 1e-3, freezing, inner_picard_max: 3, ..StepControl::default() };
        let traj = dynm.evolve(&rho0, &ctrl, 0.05, &RecordOptions { record_every: 1, ..Default::default() }).unwrap();
        for w in traj.rows.windows(2) {
            assert!((w[1].mass - 1.0).abs() < 1e-12);
            assert!(w[1].min_rho > 0.0);
            assert!(w[1].f.total <= w[0].f.total + 1e-10 * (1.0 + w[0].f.total.abs()));
        }
    }
    assert!(l2_norm(&g, &rho0) > 0.0);
}
