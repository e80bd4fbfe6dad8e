//! Dense nonlocal convolutions on the mesh.
//!
//! On a uniform mesh `K(x_i - x_j)` only depends on the index offset, so a
//! kernel is tabulated once per offset and every convolution is a dense
//! `O(cells^2)` sum over that table. No periodic wrap: the domain is a box.

use alloc::vec::Vec;

use crate::grid::{Field, Grid, VectorField};
use crate::linalg::Sym2;
use crate::model::{KernelSpec, TensorKernelSpec};
use crate::{Error, Result};

/// Kernel values indexed by cell offset.
#[derive(Debug, Clone)]
pub struct OffsetTable<T> {
    grid: Grid,
    span: usize,
    values: Vec<T>,
}

impl<T: Copy> OffsetTable<T> {
    fn build(grid: &Grid, mut f: impl FnMut([f64; 2]) -> Result<T>) -> Result<Self> {
        let n = grid.cells_per_axis() as isize;
        let h = grid.spacing();
        let span = (2 * n - 1) as usize;
        let mut values = Vec::with_capacity(if grid.dim() == 1 { span } else { span * span });
        if grid.dim() == 1 {
            for di in -(n - 1)..n {
                values.push(f([di as f64 * h, 0.0])?);
            }
        } else {
            for dj in -(n - 1)..n {
                for di in -(n - 1)..n {
                    values.push(f([di as f64 * h, dj as f64 * h])?);
                }
            }
        }
        Ok(Self { grid: *grid, span, values })
    }

    /// Kernel value for the displacement from cell `j` to cell `i`.
    #[inline]
    pub fn at(&self, i: usize, j: usize) -> T {
        let n = self.grid.cells_per_axis();
        let (ii, ij) = self.grid.cell_index(i);
        let (ji, jj) = self.grid.cell_index(j);
        let ox = ii + n - 1 - ji;
        if self.grid.dim() == 1 {
            return self.values[ox];
        }
        let oy = ij + n - 1 - jj;
        self.values[ox + self.span * oy]
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.grid.num_cells() {
            return Err(Error::SizeMismatch { expected: self.grid.num_cells(), got: len });
        }
        Ok(())
    }

    /// Generic dense sum `out_i = sum_j op(K(i - j), x_j) h^d`.
    fn apply<X: Copy, Y: Copy + Default>(
        &self,
        input: &[X],
        mut acc: impl FnMut(Y, T, X) -> Y,
        mut finish: impl FnMut(Y) -> Y,
    ) -> Vec<Y> {
        let cells = self.grid.num_cells();
        let n = self.grid.cells_per_axis();
        let mut out = Vec::with_capacity(cells);
        if self.grid.dim() == 1 {
            for i in 0..cells {
                let base = i + n - 1;
                let mut s = Y::default();
                for (j, &x) in input.iter().enumerate() {
                    s = acc(s, self.values[base - j], x);
                }
                out.push(finish(s));
            }
        } else {
            for i in 0..cells {
                let (ii, ij) = self.grid.cell_index(i);
                let mut s = Y::default();
                for jj in 0..n {
                    let row = self.span * (ij + n - 1 - jj) + ii + n - 1;
                    for ji in 0..n {
                        s = acc(s, self.values[row - ji], input[ji + n * jj]);
                    }
                }
                out.push(finish(s));
            }
        }
        out
    }
}

/// Scalar kernel tabulated on a mesh.
pub type ScalarTable = OffsetTable<f64>;
/// Vector kernel (a gradient) tabulated on a mesh.
pub type VectorTable = OffsetTable<[f64; 2]>;
/// Symmetric tensor kernel tabulated on a mesh.
pub type TensorTable = OffsetTable<Sym2>;

impl ScalarTable {
    pub fn new(grid: &Grid, spec: &KernelSpec) -> Result<Self> {
        Self::build(grid, |r| spec.value(r, grid.dim(), 0.0))
    }

    pub fn convolve(&self, f: &Field) -> Result<Field> {
        self.check(f.len())?;
        let w = self.grid.cell_volume();
        Ok(Field::new(self.apply(&f.values, |s: f64, k, x: f64| s + k * x, |s| s * w)))
    }
}

impl VectorTable {
    /// Tabulates the gradient of a scalar kernel.
    pub fn gradient_of(grid: &Grid, spec: &KernelSpec) -> Result<Self> {
        Self::build(grid, |r| spec.gradient(r, grid.dim(), 0.0))
    }

    /// `(grad K) * f`, a vector field.
    pub fn convolve(&self, f: &Field) -> Result<VectorField> {
        self.check(f.len())?;
        let w = self.grid.cell_volume();
        let out = self.apply(
            &f.values,
            |s: [f64; 2], k: [f64; 2], x: f64| [s[0] + k[0] * x, s[1] + k[1] * x],
            |s| [s[0] * w, s[1] * w],
        );
        Ok(VectorField::new(out))
    }
}

impl TensorTable {
    pub fn new(grid: &Grid, spec: &TensorKernelSpec) -> Result<Self> {
        Self::build(grid, |r| spec.eval(r, grid.dim()))
    }

    /// `(Z * v)_i = sum_j Z(x_i - x_j) v_j h^d`.
    pub fn convolve(&self, v: &VectorField) -> Result<VectorField> {
        self.check(v.len())?;
        let w = self.grid.cell_volume();
        let dim = self.grid.dim();
        let out = self.apply(
            &v.values,
            |s: [f64; 2], k: Sym2, x: [f64; 2]| {
                let kx = k.mul_vec(x, dim);
                [s[0] + kx[0], s[1] + kx[1]]
            },
            |s| [s[0] * w, s[1] * w],
        );
        Ok(VectorField::new(out))
    }

    /// `(Z * f)_i` for a scalar field: a tensor per cell.
    pub fn convolve_scalar(&self, f: &Field) -> Result<Vec<Sym2>> {
        self.check(f.len())?;
        let w = self.grid.cell_volume();
        Ok(self.apply(&f.values, |s: Sym2, k: Sym2, x: f64| s.add(k.scale(x)), |s| s.scale(w)))
    }
}

/// `(K * f)(x_i) = sum_j K(x_i - x_j) f_j h^d`.
pub fn convolve_scalar(g: &Grid, kernel: &KernelSpec, f: &Field) -> Result<Field> {
    ScalarTable::new(g, kernel)?.convolve(f)
}

/// `(Z * v)(x_i) = sum_j Z(x_i - x_j) v_j h^d`.
pub fn convolve_tensor(g: &Grid, kernel: &TensorKernelSpec, v: &VectorField) -> Result<VectorField> {
    TensorTable::new(g, kernel)?.convolve(v)
}
