//! Hydrodynamic-interaction operators.
//!
//! With `D_phi = (I + Z1 * phi)^-1` and `A[a] = Z2 * a`, the flux operator is
//! `H_phi v = D_phi^-1 v + phi (Z2 * v)`. It is self-adjoint in the
//! `phi^-1`-weighted inner product and invertible when
//! `mu_max * ||Z2||_inf < 1` (the contraction margin is positive).

use alloc::vec;
use alloc::vec::Vec;

use crate::convolve::TensorTable;
use crate::energy::check_positive;
use crate::grid::{Field, Grid, VectorField};
use crate::linalg::{symmetric_eigen, DenseMatrix, Sym2};
use crate::math;
use crate::model::TensorKernelSpec;
use crate::{Error, Result};

/// One symmetric positive definite `d x d` matrix per cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorField {
    pub dim: usize,
    pub values: Vec<Sym2>,
}

impl TensorField {
    pub fn identity(g: &Grid) -> Self {
        Self { dim: g.dim(), values: vec![Sym2::identity(g.dim()); g.num_cells()] }
    }

    pub fn apply(&self, v: &VectorField) -> VectorField {
        VectorField::new(self.values.iter().zip(&v.values).map(|(m, x)| m.mul_vec(*x, self.dim)).collect())
    }

    /// Solves `D x = v` cell by cell.
    pub fn solve(&self, v: &VectorField) -> Result<VectorField> {
        self.values
            .iter()
            .zip(&v.values)
            .enumerate()
            .map(|(c, (m, x))| {
                m.inverse(self.dim)
                    .map(|inv| inv.mul_vec(*x, self.dim))
                    .ok_or(Error::SingularTensor { cell: c, det: m.det(self.dim) })
            })
            .collect::<Result<Vec<_>>>()
            .map(VectorField::new)
    }
}

/// Extreme eigenvalues of `D` over all cells.
pub fn eigen_bounds(d: &TensorField) -> (f64, f64) {
    d.values.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| {
        let (a, b) = m.eigenvalues(d.dim);
        (lo.min(a), hi.max(b))
    })
}

/// Spectral diagnostics of the discrete `H_rho` at one density.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralReport {
    pub mu_min: f64,
    pub mu_max: f64,
    /// `1 - mu_max ||Z2||_inf`
    pub contraction_margin: f64,
    /// `log det H = sum_k log(1 + gamma_k) - sum_cells sum_j log mu_j`
    pub log_fredholm_det: f64,
    /// Spectrum of `H` in the `rho^-1`-weighted inner product, ascending.
    pub eigenvalues_h: Vec<f64>,
    /// Spectrum of `D rho (Z2 * .)`, ascending.
    pub eigenvalues_gamma: Vec<f64>,
    /// `||W M - (W M)^T||_inf / ||W M||_inf` for the assembled matrix.
    pub symmetry_defect: f64,
    /// Orthonormal eigenvectors of the symmetrized `H`, column-wise.
    #[cfg_attr(feature = "serde", serde(skip))]
    pub eigenvectors_h: Option<DenseMatrix>,
}

/// Result of a flux solve together with how it was obtained.
#[derive(Debug, Clone)]
pub struct FluxSolve {
    pub flux: VectorField,
    pub iterations: usize,
    pub relative_residual: f64,
    pub direct: bool,
}

/// Largest system the dense routines will assemble.
pub const MAX_DENSE_UNKNOWNS: usize = 2048;

/// Tabulated `Z1`, `Z2` on one mesh.
#[derive(Debug, Clone)]
pub struct HiOperator {
    grid: Grid,
    z1: TensorTable,
    z2: TensorTable,
    z1_zero: bool,
    z2_zero: bool,
    z2_sup: f64,
}

impl HiOperator {
    pub fn new(grid: &Grid, z1: &TensorKernelSpec, z2: &TensorKernelSpec) -> Result<Self> {
        z1.validate()?;
        z2.validate()?;
        Ok(Self {
            grid: *grid,
            z1: TensorTable::new(grid, z1)?,
            z2: TensorTable::new(grid, z2)?,
            z1_zero: z1.is_zero(),
            z2_zero: z2.is_zero(),
            z2_sup: z2.sup_norm(grid),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn z2_sup_norm(&self) -> f64 {
        self.z2_sup
    }

    pub fn has_z2(&self) -> bool {
        !self.z2_zero
    }

    /// `D_phi = (I + Z1 * phi)^-1` at every cell.
    pub fn assemble_d(&self, phi: &Field) -> Result<TensorField> {
        phi.check(&self.grid)?;
        let dim = self.grid.dim();
        if self.z1_zero {
            return Ok(TensorField::identity(&self.grid));
        }
        let conv = self.z1.convolve_scalar(phi)?;
        let values = conv
            .into_iter()
            .enumerate()
            .map(|(c, z)| {
                let m = Sym2::identity(dim).add(z);
                let det = m.det(dim);
                if det.abs() < 1e-14 {
                    return Err(Error::SingularTensor { cell: c, det });
                }
                let (lo, _) = m.eigenvalues(dim);
                if lo <= 0.0 {
                    return Err(Error::NotPositiveDefinite { cell: c, eigenvalue: lo });
                }
                m.inverse(dim).ok_or(Error::SingularTensor { cell: c, det })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TensorField { dim, values })
    }

    /// `A[a] = Z2 * a`.
    pub fn apply_a(&self, a: &VectorField) -> Result<VectorField> {
        if self.z2_zero {
            a.check(&self.grid)?;
            return Ok(VectorField::zeros(&self.grid));
        }
        self.z2.convolve(a)
    }

    /// `H_phi v = D^-1 v + phi (Z2 * v)`.
    pub fn apply_h(&self, d: &TensorField, phi: &Field, v: &VectorField) -> Result<VectorField> {
        let dv = d.solve(v)?;
        let av = self.apply_a(v)?;
        Ok(dv.add(&av.scale_by(phi)))
    }

    /// Solves `H_rho a = rhs` by the Neumann iteration
    /// `a <- D (rhs - rho (Z2 * a))`, falling back to a dense direct solve when
    /// the iteration stalls.
    pub fn solve_flux(
        &self,
        d: &TensorField,
        rho: &Field,
        rhs: &VectorField,
        tol: f64,
        max_iter: usize,
    ) -> Result<FluxSolve> {
        rhs.check(&self.grid)?;
        rho.check(&self.grid)?;
        let rhs_norm = l2(rhs);
        if rhs_norm == 0.0 {
            return Ok(FluxSolve { flux: VectorField::zeros(&self.grid), iterations: 0, relative_residual: 0.0, direct: false });
        }
        let mut a = d.apply(rhs);
        if self.z2_zero {
            return Ok(FluxSolve { flux: a, iterations: 1, relative_residual: 0.0, direct: false });
        }
        let mut best = f64::INFINITY;
        let mut stalled = 0;
        let mut last = f64::INFINITY;
        for it in 1..=max_iter.max(1) {
            let za = self.z2.convolve(&a)?.scale_by(rho);
            let resid = d.solve(&a)?.add(&za).sub(rhs);
            let rel = l2(&resid) / rhs_norm;
            if !rel.is_finite() {
                break;
            }
            if rel <= tol {
                return Ok(FluxSolve { flux: a, iterations: it, relative_residual: rel, direct: false });
            }
            if rel > 0.999 * last {
                stalled += 1;
                if stalled >= 5 {
                    break;
                }
            } else {
                stalled = 0;
            }
            last = rel;
            best = best.min(rel);
            a = d.apply(&rhs.sub(&za));
        }
        let flux = self.solve_flux_dense(d, rho, rhs)?;
        let rel = l2(&self.apply_h(d, rho, &flux)?.sub(rhs)) / rhs_norm;
        if rel <= tol.max(1e-12) {
            Ok(FluxSolve { flux, iterations: max_iter, relative_residual: rel, direct: true })
        } else {
            Err(Error::NoConvergence { residual: rel.min(best) })
        }
    }

    /// Assembles `H_rho` as a dense `(cells d) x (cells d)` matrix.
    pub fn assemble_h(&self, d: &TensorField, rho: &Field) -> Result<DenseMatrix> {
        let dim = self.grid.dim();
        let cells = self.grid.num_cells();
        let n = cells * dim;
        if n > MAX_DENSE_UNKNOWNS {
            return Err(Error::TooLarge(n));
        }
        let w = self.grid.cell_volume();
        let mut m = DenseMatrix::zeros(n);
        for c in 0..cells {
            let dinv = d.values[c].inverse(dim).ok_or(Error::SingularTensor { cell: c, det: d.values[c].det(dim) })?;
            let blk = |s: &Sym2, k: usize, l: usize| match (k, l) {
                (0, 0) => s.xx,
                (1, 1) => s.yy,
                _ => s.xy,
            };
            for k in 0..dim {
                for l in 0..dim {
                    m.add_to(c * dim + k, c * dim + l, blk(&dinv, k, l));
                }
            }
            if !self.z2_zero {
                for j in 0..cells {
                    let z = self.z2.at(c, j);
                    for k in 0..dim {
                        for l in 0..dim {
                            m.add_to(c * dim + k, j * dim + l, rho.values[c] * blk(&z, k, l) * w);
                        }
                    }
                }
            }
        }
        Ok(m)
    }

    /// Dense direct solve of `H_rho a = rhs`.
    pub fn solve_flux_dense(&self, d: &TensorField, rho: &Field, rhs: &VectorField) -> Result<VectorField> {
        let dim = self.grid.dim();
        let m = self.assemble_h(d, rho)?;
        let x = m.solve(&rhs.to_flat(dim))?;
        Ok(VectorField::from_flat(&x, dim))
    }

    /// Spectra of `H_rho` and of `D rho (Z2 * .)`, Fredholm log-determinant and
    /// contraction margin. Requires `rho > 0` everywhere.
    pub fn spectral_report(&self, d: &TensorField, rho: &Field) -> Result<SpectralReport> {
        check_positive(rho)?;
        let dim = self.grid.dim();
        let cells = self.grid.num_cells();
        let n = cells * dim;
        let m = self.assemble_h(d, rho)?;
        let w = self.grid.cell_volume();
        let weight = |idx: usize| w / rho.values[idx / dim];

        // W M is symmetric for a self-adjoint H in the weighted product.
        let mut wm = DenseMatrix::zeros(n);
        let mut s = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                wm.set(i, j, weight(i) * m.get(i, j));
                s.set(i, j, math::sqrt(weight(i) / weight(j)) * m.get(i, j));
            }
        }
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                defect = defect.max((wm.get(i, j) - wm.get(j, i)).abs());
            }
        }
        let symmetry_defect = defect / wm.max_abs().max(f64::MIN_POSITIVE);
        let eig_h = symmetric_eigen(&s)?;

        // gamma: D^{1/2} B D^{1/2} with B_cj = sqrt(rho_c rho_j) Z2(c - j) h^d
        let mut gm = DenseMatrix::zeros(n);
        if !self.z2_zero {
            let roots: Vec<Sym2> = d.values.iter().map(|x| x.sqrt(dim)).collect();
            let full = |s: &Sym2| -> [[f64; 2]; 2] { [[s.xx, s.xy], [s.xy, s.yy]] };
            for c in 0..cells {
                let rc = full(&roots[c]);
                for j in 0..cells {
                    let rj = full(&roots[j]);
                    let z = full(&self.z2.at(c, j));
                    let scale = math::sqrt(rho.values[c] * rho.values[j]) * w;
                    for k in 0..dim {
                        for l in 0..dim {
                            let mut v = 0.0;
                            for p in 0..dim {
                                for q in 0..dim {
                                    v += rc[k][p] * z[p][q] * rj[q][l];
                                }
                            }
                            gm.set(c * dim + k, j * dim + l, scale * v);
                        }
                    }
                }
            }
        }
        let mut gdefect: f64 = 0.0;
        for i in 0..n {
            for j in 0..i {
                gdefect = gdefect.max((gm.get(i, j) - gm.get(j, i)).abs());
            }
        }
        if gdefect > 1e-12 * gm.max_abs().max(1.0) {
            return Err(Error::ComplexSpectrum(gdefect));
        }
        let eig_g = symmetric_eigen(&gm)?;

        let (mu_min, mu_max) = eigen_bounds(d);
        let log_det_d: f64 = d
            .values
            .iter()
            .map(|x| {
                let (a, b) = x.eigenvalues(dim);
                if dim == 1 {
                    math::ln(a)
                } else {
                    math::ln(a) + math::ln(b)
                }
            })
            .sum();
        let log_fredholm_det = eig_g.values.iter().map(|g| math::ln(1.0 + g)).sum::<f64>() - log_det_d;
        Ok(SpectralReport {
            mu_min,
            mu_max,
            contraction_margin: 1.0 - mu_max * self.z2_sup,
            log_fredholm_det,
            eigenvalues_h: eig_h.values,
            eigenvalues_gamma: eig_g.values,
            symmetry_defect,
            eigenvectors_h: Some(eig_h.vectors),
        })
    }
}

fn l2(v: &VectorField) -> f64 {
    math::sqrt(v.values.iter().map(|x| x[0] * x[0] + x[1] * x[1]).sum())
}

/// `D_phi` from kernel specs.
pub fn assemble_d(g: &Grid, z1: &TensorKernelSpec, phi: &Field) -> Result<TensorField> {
    HiOperator::new(g, z1, &TensorKernelSpec::zero())?.assemble_d(phi)
}

/// `A[a] = Z2 * a` from a kernel spec.
pub fn apply_a(g: &Grid, z2: &TensorKernelSpec, a: &VectorField) -> Result<VectorField> {
    HiOperator::new(g, &TensorKernelSpec::zero(), z2)?.apply_a(a)
}

/// `H_phi v` from a kernel spec.
pub fn apply_h(g: &Grid, d: &TensorField, z2: &TensorKernelSpec, phi: &Field, v: &VectorField) -> Result<VectorField> {
    HiOperator::new(g, &TensorKernelSpec::zero(), z2)?.apply_h(d, phi, v)
}

/// Flux from the eigenpairs of `H_rho`:
/// `a = sum_n gamma_n^-1 <u_n, rhs>_W u_n` with `W = rho^-1 h^d`.
pub fn flux_by_eigen_expansion(g: &Grid, report: &SpectralReport, rho: &Field, rhs: &VectorField) -> Result<VectorField> {
    check_positive(rho)?;
    let dim = g.dim();
    let vecs = report
        .eigenvectors_h
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("spectral report carries no eigenvectors".into()))?;
    let n = vecs.size();
    if n != g.num_cells() * dim || rhs.len() != g.num_cells() {
        return Err(Error::SizeMismatch { expected: n, got: rhs.len() * dim });
    }
    let scale = report.eigenvalues_h.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if let Some(k) = report.eigenvalues_h.iter().position(|v| v.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::ZeroEigenvalue(k));
    }
    let w = g.cell_volume();
    let sqrt_w: Vec<f64> = (0..n).map(|i| math::sqrt(w / rho.values[i / dim])).collect();
    let b: Vec<f64> = rhs.to_flat(dim).iter().zip(&sqrt_w).map(|(r, s)| r * s).collect();
    let mut y = vec![0.0; n];
    for k in 0..n {
        let coeff: f64 = (0..n).map(|i| vecs.get(i, k) * b[i]).sum::<f64>() / report.eigenvalues_h[k];
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += coeff * vecs.get(i, k);
        }
    }
    let x: Vec<f64> = y.iter().zip(&sqrt_w).map(|(v, s)| v / s).collect();
    Ok(VectorField::from_flat(&x, dim))
}
