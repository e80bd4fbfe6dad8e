mod common;

use common::{gaussian_hi, normalize, random_density, rng};
use ddft_core::energy::{compute_f, functional_derivative, Potentials};
use ddft_core::grid::integrate;
use ddft_core::nonlocal::HiOperator;
use ddft_core::{Field, Grid, KernelSpec, VectorField};
use rand::Rng;

fn potentials(g: &Grid) -> Potentials {
    Potentials::new(g, &KernelSpec::harmonic(0.4, 3.0), &KernelSpec::gaussian(0.2, 0.2)).unwrap()
}

#[test]
fn free_energy_examples() {
    let g = Grid::new(1.0, 32, 1).unwrap();
    let uniform = Field::constant(&g, 1.0);
    let f = compute_f(&g, &uniform, &KernelSpec::zero(), &KernelSpec::zero(), 0.0).unwrap();
    assert!((f.total + 1.0).abs() < 1e-14);
    // constant pair potential c adds c / 2 for unit mass
    let f = compute_f(&g, &uniform, &KernelSpec::zero(), &KernelSpec::constant(0.6), 0.0).unwrap();
    assert!((f.interaction - 0.3).abs() < 1e-14);
    // empty cells contribute nothing; tiny negative round-off is tolerated
    let mut rho = Field::constant(&g, 32.0 / 31.0);
    rho.values[3] = -1e-15;
    assert!(compute_f(&g, &rho, &KernelSpec::zero(), &KernelSpec::zero(), 0.0).is_ok());
    rho.values[3] = -1e-6;
    assert!(compute_f(&g, &rho, &KernelSpec::zero(), &KernelSpec::zero(), 0.0).is_err());
}

#[test]
fn functional_derivative_is_the_gradient() {
    let mut r = rng(21);
    for dim in [1usize, 2] {
        let g = if dim == 1 { Grid::new(1.0, 64, 1).unwrap() } else { Grid::new(1.0, 12, 2).unwrap() };
        let pot = potentials(&g);
        let rho = random_density(&g, &mut r);
        let mu = pot.functional_derivative(&rho, 0.0).unwrap();
        for _ in 0..20 {
            let mut w: Vec<f64> = (0..g.num_cells()).map(|_| r.random_range(-1.0..1.0)).collect();
            let mean = w.iter().sum::<f64>() / w.len() as f64;
            w.iter_mut().for_each(|x| *x -= mean);
            let eps = 1e-5;
            let shifted = |s: f64| Field::new(rho.values.iter().zip(&w).map(|(a, b)| a + s * b).collect());
            let fd = (pot.compute_f(&shifted(eps), 0.0).unwrap().total - pot.compute_f(&shifted(-eps), 0.0).unwrap().total)
                / (2.0 * eps);
            let exact: f64 = mu.values.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume();
            assert!((fd - exact).abs() <= 1e-3 * exact.abs().max(1e-8), "{fd} vs {exact}");
        }
    }
}

#[test]
fn derivative_examples_and_errors() {
    let g = Grid::new(1.0, 16, 1).unwrap();
    let v1 = KernelSpec::harmonic(0.5, 2.0);
    let w = Field::from_fn(&g, |x| (-(x[0] - 0.5).powi(2)).exp());
    let gibbs = normalize(&g, w);
    let mu = functional_derivative(&g, &gibbs, &v1, &KernelSpec::zero(), 0.0).unwrap();
    let spread = mu.max() - mu.min();
    assert!(spread < 1e-13);
    let mut bad = gibbs.clone();
    bad.values[0] = 0.0;
    assert!(functional_derivative(&g, &bad, &v1, &KernelSpec::zero(), 0.0).is_err());
}

#[test]
fn dissipation_signs() {
    let g = Grid::new(1.0, 64, 1).unwrap();
    let pot = potentials(&g);
    let hi = HiOperator::new(&g, &gaussian_hi(0.3, 0.2), &gaussian_hi(0.5, 0.2)).unwrap();
    let uniform = Field::constant(&g, 1.0);
    let free = Potentials::new(&g, &KernelSpec::zero(), &KernelSpec::zero()).unwrap();
    assert_eq!(free.dissipation(&uniform, &VectorField::zeros(&g), 0.0).unwrap(), 0.0);
    let mut r = rng(4);
    for _ in 0..10 {
        let rho = random_density(&g, &mut r);
        let d = hi.assemble_d(&rho).unwrap();
        let rhs = pot.thermodynamic_force(&rho, 0.0).unwrap().scale(-1.0);
        let a = hi.solve_flux(&d, &rho, &rhs, 1e-13, 500).unwrap().flux;
        assert!(pot.dissipation(&rho, &a, 0.0).unwrap() < 0.0);
    }
}

#[test]
fn solved_flux_minimizes_the_quadratic_functional() {
    let mut r = rng(8);
    let g = Grid::new(1.0, 48, 1).unwrap();
    let pot = potentials(&g);
    let hi = HiOperator::new(&g, &gaussian_hi(0.3, 0.2), &gaussian_hi(0.5, 0.2)).unwrap();
    let rho = random_density(&g, &mut r);
    let d = hi.assemble_d(&rho).unwrap();
    assert_eq!(pot.flux_objective_j(&hi, &d, &rho, &VectorField::zeros(&g), 0.0).unwrap(), 0.0);
    // minimizer of the functional solves H a = +rho grad(delta F / delta rho)
    let f = pot.thermodynamic_force(&rho, 0.0).unwrap();
    let a = hi.solve_flux(&d, &rho, &f, 1e-14, 500).unwrap().flux;
    let j0 = pot.flux_objective_j(&hi, &d, &rho, &a, 0.0).unwrap();
    for _ in 0..50 {
        let w = VectorField::new((0..g.num_cells()).map(|_| [r.random_range(-1.0..1.0), 0.0]).collect());
        let j = pot.flux_objective_j(&hi, &d, &rho, &a.add(&w.scale(1e-3)), 0.0).unwrap();
        assert!(j > j0, "{j} <= {j0}");
    }
    // with no HI and rho = 1 the minimizer is grad(delta F / delta rho)
    let one = Field::constant(&g, 1.0);
    let id = HiOperator::new(&g, &ddft_core::TensorKernelSpec::zero(), &ddft_core::TensorKernelSpec::zero()).unwrap();
    let d1 = id.assemble_d(&one).unwrap();
    let f1 = pot.thermodynamic_force(&one, 0.0).unwrap();
    let a1 = id.solve_flux(&d1, &one, &f1, 1e-14, 10).unwrap().flux;
    assert_eq!(a1, pot.chemical_potential_gradient(&one, 0.0).unwrap());
    assert!((integrate(&g, &one).unwrap() - 1.0).abs() < 1e-15);
}
