//! Uniform cell-centered finite-volume mesh on the box `[0, L]^d`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Uniform cell-centered mesh with `n` cells per axis.
///
/// Cells are numbered `i + n * j` in two dimensions. Positions are stored as
/// `[f64; 2]`; in one dimension the second component is zero.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Grid {
    dim: usize,
    extent: f64,
    n: usize,
    h: f64,
}

impl Grid {
    pub fn new(extent: f64, n: usize, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if n < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 cells per axis, got {n}")));
        }
        if !(extent > 0.0) || !extent.is_finite() {
            return Err(Error::InvalidGrid(format!("extent must be positive, got {extent}")));
        }
        Ok(Self { dim, extent, n, h: extent / n as f64 })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    pub fn cells_per_axis(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn num_cells(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    pub fn cell_volume(&self) -> f64 {
        if self.dim == 1 {
            self.h
        } else {
            self.h * self.h
        }
    }

    /// Lebesgue measure of the domain, `L^d`.
    pub fn volume(&self) -> f64 {
        if self.dim == 1 {
            self.extent
        } else {
            self.extent * self.extent
        }
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.extent * math::sqrt(self.dim as f64)
    }

    /// Axis indices `(i, j)` of a cell; `j = 0` in one dimension.
    #[inline]
    pub fn cell_index(&self, c: usize) -> (usize, usize) {
        (c % self.n, c / self.n)
    }

    #[inline]
    pub fn cell_at(&self, i: usize, j: usize) -> usize {
        i + self.n * j
    }

    #[inline]
    pub fn center(&self, c: usize) -> [f64; 2] {
        let (i, j) = self.cell_index(c);
        let x = (i as f64 + 0.5) * self.h;
        if self.dim == 1 {
            [x, 0.0]
        } else {
            [x, (j as f64 + 0.5) * self.h]
        }
    }

    pub fn centers(&self) -> Vec<[f64; 2]> {
        (0..self.num_cells()).map(|c| self.center(c)).collect()
    }

    /// Neighbor of `c` one cell along `axis` (`+1` or `-1`), if inside.
    #[inline]
    pub fn neighbor(&self, c: usize, axis: usize, forward: bool) -> Option<usize> {
        let (i, j) = self.cell_index(c);
        let k = if axis == 0 { i } else { j };
        if forward {
            (k + 1 < self.n).then(|| if axis == 0 { c + 1 } else { c + self.n })
        } else {
            (k > 0).then(|| if axis == 0 { c - 1 } else { c - self.n })
        }
    }

    /// Number of faces normal to one axis, boundary faces included.
    pub fn faces_per_axis(&self) -> usize {
        if self.dim == 1 {
            self.n + 1
        } else {
            (self.n + 1) * self.n
        }
    }

    /// Face index (along `axis`) on the low side of cell `c`.
    #[inline]
    pub fn low_face(&self, c: usize, axis: usize) -> usize {
        let (i, j) = self.cell_index(c);
        if axis == 0 {
            i + (self.n + 1) * j
        } else {
            i + self.n * j
        }
    }

    /// Face index (along `axis`) on the high side of cell `c`.
    #[inline]
    pub fn high_face(&self, c: usize, axis: usize) -> usize {
        if axis == 0 {
            self.low_face(c, 0) + 1
        } else {
            self.low_face(c, 1) + self.n
        }
    }

    /// Position of a face along its normal axis, as a count of cell widths
    /// (`0` and `n` are the walls).
    #[inline]
    pub fn face_position(&self, face: usize, axis: usize) -> usize {
        if axis == 0 {
            face % (self.n + 1)
        } else {
            face / self.n
        }
    }

    pub fn is_boundary_face(&self, face: usize, axis: usize) -> bool {
        let p = self.face_position(face, axis);
        p == 0 || p == self.n
    }

    /// Cells on either side of an interior face.
    pub fn face_cells(&self, face: usize, axis: usize) -> Option<(usize, usize)> {
        if self.is_boundary_face(face, axis) {
            return None;
        }
        if axis == 0 {
            let p = face % (self.n + 1);
            let j = face / (self.n + 1);
            let hi = self.cell_at(p, j);
            Some((hi - 1, hi))
        } else {
            let i = face % self.n;
            let p = face / self.n;
            Some((self.cell_at(i, p - 1), self.cell_at(i, p)))
        }
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.num_cells() {
            return Err(Error::SizeMismatch { expected: self.num_cells(), got: len });
        }
        Ok(())
    }
}

/// One scalar per cell.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Field {
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn zeros(g: &Grid) -> Self {
        Self { values: vec![0.0; g.num_cells()] }
    }

    pub fn constant(g: &Grid, v: f64) -> Self {
        Self { values: vec![v; g.num_cells()] }
    }

    pub fn from_fn(g: &Grid, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        Self { values: (0..g.num_cells()).map(|c| f(g.center(c))).collect() }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        g.check_len(self.values.len())?;
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Field {
        Field { values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn sub(&self, other: &Field) -> Field {
        Field { values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect() }
    }
}

/// One `d`-vector per cell; in one dimension the second component is zero.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VectorField {
    pub values: Vec<[f64; 2]>,
}

impl VectorField {
    pub fn new(values: Vec<[f64; 2]>) -> Self {
        Self { values }
    }

    pub fn zeros(g: &Grid) -> Self {
        Self { values: vec![[0.0; 2]; g.num_cells()] }
    }

    pub fn constant(g: &Grid, v: [f64; 2]) -> Self {
        let v = if g.dim() == 1 { [v[0], 0.0] } else { v };
        Self { values: vec![v; g.num_cells()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        g.check_len(self.values.len())?;
        match self.values.iter().position(|v| !(v[0].is_finite() && v[1].is_finite())) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }

    pub fn add(&self, o: &VectorField) -> VectorField {
        VectorField {
            values: self.values.iter().zip(&o.values).map(|(a, b)| [a[0] + b[0], a[1] + b[1]]).collect(),
        }
    }

    pub fn sub(&self, o: &VectorField) -> VectorField {
        VectorField {
            values: self.values.iter().zip(&o.values).map(|(a, b)| [a[0] - b[0], a[1] - b[1]]).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> VectorField {
        VectorField { values: self.values.iter().map(|a| [a[0] * s, a[1] * s]).collect() }
    }

    /// Multiplies each cell vector by the matching scalar.
    pub fn scale_by(&self, f: &Field) -> VectorField {
        VectorField {
            values: self.values.iter().zip(&f.values).map(|(a, s)| [a[0] * s, a[1] * s]).collect(),
        }
    }

    /// Flattened components, `d` per cell.
    pub fn to_flat(&self, dim: usize) -> Vec<f64> {
        self.values.iter().flat_map(|v| v[..dim].iter().copied()).collect()
    }

    pub fn from_flat(flat: &[f64], dim: usize) -> VectorField {
        VectorField {
            values: flat
                .chunks_exact(dim)
                .map(|c| if dim == 1 { [c[0], 0.0] } else { [c[0], c[1]] })
                .collect(),
        }
    }

    /// Largest Euclidean cell norm.
    pub fn max_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(math::hypot(v[0], v[1])))
    }
}

/// Normal flux through every face, one array per axis.
///
/// Boundary entries are the no-flux condition and must stay exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceFluxField {
    pub axes: Vec<Vec<f64>>,
}

impl FaceFluxField {
    pub fn zeros(g: &Grid) -> Self {
        Self { axes: vec![vec![0.0; g.faces_per_axis()]; g.dim()] }
    }

    /// Builds a face field from a rule evaluated on interior faces;
    /// boundary faces are left at zero.
    pub fn from_interior(g: &Grid, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut out = Self::zeros(g);
        for (axis, vals) in out.axes.iter_mut().enumerate() {
            for (face, v) in vals.iter_mut().enumerate() {
                if let Some((lo, hi)) = g.face_cells(face, axis) {
                    *v = f(axis, lo, hi);
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.axes.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn check(&self, g: &Grid) -> Result<()> {
        if self.axes.len() != g.dim() {
            return Err(Error::SizeMismatch { expected: g.dim(), got: self.axes.len() });
        }
        for (axis, vals) in self.axes.iter().enumerate() {
            if vals.len() != g.faces_per_axis() {
                return Err(Error::SizeMismatch { expected: g.faces_per_axis(), got: vals.len() });
            }
            for (face, &v) in vals.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(face));
                }
                if v != 0.0 && g.is_boundary_face(face, axis) {
                    return Err(Error::BoundaryFlux { face: axis * g.faces_per_axis() + face, value: v });
                }
            }
        }
        Ok(())
    }
}

/// Midpoint quadrature `sum_i f_i h^d`.
pub fn integrate(g: &Grid, f: &Field) -> Result<f64> {
    g.check_len(f.len())?;
    Ok(f.values.iter().sum::<f64>() * g.cell_volume())
}

/// Componentwise midpoint quadrature of a vector field.
pub fn integrate_vector(g: &Grid, v: &VectorField) -> Result<[f64; 2]> {
    g.check_len(v.len())?;
    let s = v.values.iter().fold([0.0, 0.0], |acc, x| [acc[0] + x[0], acc[1] + x[1]]);
    Ok([s[0] * g.cell_volume(), s[1] * g.cell_volume()])
}

/// `L^p`-type norms on the mesh.
pub fn l1_norm(g: &Grid, f: &Field) -> f64 {
    f.values.iter().map(|v| v.abs()).sum::<f64>() * g.cell_volume()
}

pub fn l2_norm(g: &Grid, f: &Field) -> f64 {
    math::sqrt(f.values.iter().map(|v| v * v).sum::<f64>() * g.cell_volume())
}

pub fn l1_distance(g: &Grid, a: &Field, b: &Field) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).sum::<f64>() * g.cell_volume()
}

pub fn l2_distance(g: &Grid, a: &Field, b: &Field) -> f64 {
    math::sqrt(a.values.iter().zip(&b.values).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * g.cell_volume())
}

/// `sum_i |v_i| h^d` with the Euclidean norm per cell.
pub fn vector_l1_norm(g: &Grid, v: &VectorField) -> f64 {
    v.values.iter().map(|x| math::hypot(x[0], x[1])).sum::<f64>() * g.cell_volume()
}

/// Discrete divergence: net outward face flux divided by `h`, per axis.
///
/// Rejects any nonzero boundary entry, so the result always integrates to
/// zero up to round-off.
pub fn divergence(g: &Grid, flux: &FaceFluxField) -> Result<Field> {
    flux.check(g)?;
    let inv_h = 1.0 / g.spacing();
    let values = (0..g.num_cells())
        .map(|c| {
            (0..g.dim())
                .map(|axis| {
                    let vals = &flux.axes[axis];
                    vals[g.high_face(c, axis)] - vals[g.low_face(c, axis)]
                })
                .sum::<f64>()
                * inv_h
        })
        .collect();
    Ok(Field { values })
}

/// Cell-centered gradient: second-order central differences inside,
/// second-order one-sided differences in boundary cells.
pub fn gradient_cells(g: &Grid, f: &Field) -> Result<VectorField> {
    g.check_len(f.len())?;
    let n = g.cells_per_axis();
    let inv2h = 0.5 / g.spacing();
    let mut out = vec![[0.0; 2]; g.num_cells()];
    for (c, o) in out.iter_mut().enumerate() {
        let (i, j) = g.cell_index(c);
        for axis in 0..g.dim() {
            let k = if axis == 0 { i } else { j };
            let stride = if axis == 0 { 1 } else { n };
            let at = |m: usize| f.values[c - k * stride + m * stride];
            o[axis] = if k == 0 {
                (-3.0 * at(0) + 4.0 * at(1) - at(2)) * inv2h
            } else if k == n - 1 {
                (3.0 * at(n - 1) - 4.0 * at(n - 2) + at(n - 3)) * inv2h
            } else {
                (at(k + 1) - at(k - 1)) * inv2h
            };
        }
    }
    Ok(VectorField { values: out })
}
