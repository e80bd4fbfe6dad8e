mod common;

use common::{gaussian_hi, random_density, rng};
use ddft_core::grid::integrate;
use ddft_core::nonlocal::{flux_by_eigen_expansion, HiOperator, TensorField};
use ddft_core::{Field, Grid, KernelSpec, TensorKernelSpec, VectorField};
use rand::Rng;

fn random_rhs(g: &Grid, rng: &mut impl Rng) -> VectorField {
    VectorField::new(
        (0..g.num_cells())
            .map(|_| [rng.random_range(-1.0..1.0), if g.dim() == 2 { rng.random_range(-1.0..1.0) } else { 0.0 }])
            .collect(),
    )
}

fn rel(a: &VectorField, b: &VectorField) -> f64 {
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sum();
    let n: f64 = b.values.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum();
    (d / n).sqrt()
}

#[test]
fn diffusion_tensor_examples() {
    let g = Grid::new(1.0, 16, 1).unwrap();
    let rho = Field::constant(&g, 1.0);
    let hi = HiOperator::new(&g, &TensorKernelSpec::zero(), &TensorKernelSpec::zero()).unwrap();
    assert_eq!(hi.assemble_d(&rho).unwrap(), TensorField::identity(&g));
    let c = 0.5;
    let hi = HiOperator::new(&g, &TensorKernelSpec::isotropic(KernelSpec::constant(c)), &TensorKernelSpec::zero()).unwrap();
    for m in hi.assemble_d(&rho).unwrap().values {
        assert!((m.xx - 1.0 / (1.0 + c)).abs() < 1e-14);
    }
    // a kernel that makes I + Z1 * rho indefinite is rejected
    let hi = HiOperator::new(&g, &TensorKernelSpec::isotropic(KernelSpec::constant(-2.0)), &TensorKernelSpec::zero()).unwrap();
    assert!(hi.assemble_d(&rho).is_err());
}

#[test]
fn neumann_dense_and_eigen_solves_agree() {
    let mut r = rng(11);
    for dim in [1usize, 2] {
        let g = if dim == 1 { Grid::new(1.0, 64, 1).unwrap() } else { Grid::new(1.0, 10, 2).unwrap() };
        let hi = HiOperator::new(&g, &gaussian_hi(0.4, 0.25), &gaussian_hi(0.6, 0.2)).unwrap();
        for _ in 0..5 {
            let rho = random_density(&g, &mut r);
            let d = hi.assemble_d(&rho).unwrap();
            let rhs = random_rhs(&g, &mut r);
            let it = hi.solve_flux(&d, &rho, &rhs, 1e-13, 500).unwrap();
            assert!(!it.direct);
            let dense = hi.solve_flux_dense(&d, &rho, &rhs).unwrap();
            let rep = hi.spectral_report(&d, &rho).unwrap();
            let eig = flux_by_eigen_expansion(&g, &rep, &rho, &rhs).unwrap();
            assert!(rel(&it.flux, &dense) < 1e-10);
            assert!(rel(&eig, &dense) < 1e-10);
            let back = hi.apply_h(&d, &rho, &it.flux).unwrap();
            assert!(rel(&back, &rhs) < 1e-12);
        }
    }
}

#[test]
fn dense_fallback_when_neumann_diverges() {
    // contraction margin negative: the Neumann series diverges but H is still invertible
    let g = Grid::new(1.0, 32, 1).unwrap();
    let hi = HiOperator::new(&g, &TensorKernelSpec::zero(), &gaussian_hi(3.0, 0.3)).unwrap();
    let rho = Field::constant(&g, 1.0);
    let d = hi.assemble_d(&rho).unwrap();
    let rhs = random_rhs(&g, &mut rng(2));
    let rep = hi.spectral_report(&d, &rho).unwrap();
    assert!(rep.contraction_margin < 0.0);
    let sol = hi.solve_flux(&d, &rho, &rhs, 1e-12, 200).unwrap();
    assert!(sol.direct);
    assert!(rel(&hi.apply_h(&d, &rho, &sol.flux).unwrap(), &rhs) < 1e-11);
}

#[test]
fn operator_structure() {
    let mut r = rng(5);
    let g = Grid::new(1.0, 48, 1).unwrap();
    let z2 = gaussian_hi(0.5, 0.2);
    let hi = HiOperator::new(&g, &gaussian_hi(0.3, 0.3), &z2).unwrap();
    for _ in 0..5 {
        let rho = random_density(&g, &mut r);
        let d = hi.assemble_d(&rho).unwrap();
        let rep = hi.spectral_report(&d, &rho).unwrap();
        assert!(rep.symmetry_defect <= 1e-12, "{}", rep.symmetry_defect);
        // unit mass makes rho^{1/2} (Z2 * rho^{1/2} .) a contraction of size ||Z2||
        let bound = rep.mu_max * hi.z2_sup_norm();
        for gm in &rep.eigenvalues_gamma {
            assert!(gm.abs() <= bound + 1e-10, "{gm} vs {bound}");
        }
        // log det H from its own spectrum
        let direct: f64 = rep.eigenvalues_h.iter().map(|v| v.ln()).sum();
        assert!((direct - rep.log_fredholm_det).abs() < 1e-9 * (1.0 + direct.abs()));
        assert!(rep.eigenvalues_h[0] > 0.0);
    }
}

#[test]
fn weighted_self_adjointness() {
    let mut r = rng(9);
    let g = Grid::new(1.0, 8, 2).unwrap();
    let z = TensorKernelSpec::dyadic(KernelSpec::gaussian(0.4, 0.3), 1.0, -0.5, 0.05);
    let hi = HiOperator::new(&g, &z, &z).unwrap();
    let rho = random_density(&g, &mut r);
    assert!((integrate(&g, &rho).unwrap() - 1.0).abs() < 1e-13);
    let d = hi.assemble_d(&rho).unwrap();
    let u = random_rhs(&g, &mut r);
    let v = random_rhs(&g, &mut r);
    let ip = |a: &VectorField, b: &VectorField| -> f64 {
        a.values.iter().zip(&b.values).zip(&rho.values).map(|((x, y), p)| (x[0] * y[0] + x[1] * y[1]) / p).sum()
    };
    let lhs = ip(&u, &hi.apply_h(&d, &rho, &v).unwrap());
    let rhs = ip(&hi.apply_h(&d, &rho, &u).unwrap(), &v);
    assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
}
