//! Small dense and banded linear algebra used by the solvers.
//!
//! Nothing here is tuned for large systems: the dense routines serve the
//! spectral diagnostics and fallback solves (a few thousand unknowns at
//! most) and the banded LU serves the implicit transport step.

use alloc::vec;
use alloc::vec::Vec;

use crate::math;
use crate::{Error, Result};

/// Symmetric 2x2 matrix. In one dimension only `xx` is meaningful and the
/// other entries stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 { xx: 0.0, xy: 0.0, yy: 0.0 };

    pub fn identity(dim: usize) -> Self {
        Self::scalar(1.0, dim)
    }

    pub fn scalar(s: f64, dim: usize) -> Self {
        if dim == 1 {
            Sym2 { xx: s, xy: 0.0, yy: 0.0 }
        } else {
            Sym2 { xx: s, xy: 0.0, yy: s }
        }
    }

    pub fn scale(self, s: f64) -> Self {
        Sym2 { xx: self.xx * s, xy: self.xy * s, yy: self.yy * s }
    }

    #[allow(clippy::should_implement_trait)]
    pub fn add(self, o: Sym2) -> Self {
        Sym2 { xx: self.xx + o.xx, xy: self.xy + o.xy, yy: self.yy + o.yy }
    }

    pub fn det(&self, dim: usize) -> f64 {
        if dim == 1 {
            self.xx
        } else {
            self.xx * self.yy - self.xy * self.xy
        }
    }

    /// Eigenvalues in ascending order (closed form).
    pub fn eigenvalues(&self, dim: usize) -> (f64, f64) {
        if dim == 1 {
            return (self.xx, self.xx);
        }
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = math::hypot(half_diff, self.xy);
        (mean - r, mean + r)
    }

    pub fn inverse(&self, dim: usize) -> Option<Sym2> {
        let det = self.det(dim);
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        if dim == 1 {
            return Some(Sym2 { xx: 1.0 / det, xy: 0.0, yy: 0.0 });
        }
        Some(Sym2 { xx: self.yy / det, xy: -self.xy / det, yy: self.xx / det })
    }

    pub fn mul_vec(&self, v: [f64; 2], dim: usize) -> [f64; 2] {
        if dim == 1 {
            [self.xx * v[0], 0.0]
        } else {
            [self.xx * v[0] + self.xy * v[1], self.xy * v[0] + self.yy * v[1]]
        }
    }

    /// Principal square root of a positive semidefinite matrix.
    pub fn sqrt(&self, dim: usize) -> Sym2 {
        if dim == 1 {
            return Sym2 { xx: math::sqrt(self.xx.max(0.0)), xy: 0.0, yy: 0.0 };
        }
        // sqrt(A) = (A + sqrt(det) I) / sqrt(tr + 2 sqrt(det)) for 2x2 SPD.
        let s = math::sqrt(self.det(2).max(0.0));
        let t = math::sqrt((self.xx + self.yy + 2.0 * s).max(0.0));
        if t == 0.0 {
            return Sym2::ZERO;
        }
        Sym2 { xx: (self.xx + s) / t, xy: self.xy / t, yy: (self.yy + s) / t }
    }

    pub fn max_abs(&self) -> f64 {
        self.xx.abs().max(self.xy.abs()).max(self.yy.abs())
    }
}

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self { n, data: vec![0.0; n * n] }
    }

    pub fn from_row_major(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::SizeMismatch { expected: n * n, got: data.len() });
        }
        Ok(Self { n, data })
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] += v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.n)
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Solves `A x = b` by LU factorization with partial pivoting.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::SizeMismatch { expected: n, got: b.len() });
        }
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let (p, pmax) = (k..n)
                .map(|i| (i, a[i * n + k].abs()))
                .fold((k, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc });
            if pmax <= 1e-300 || pmax <= scale * 1e-15 {
                return Err(Error::LinearSolveFailure(alloc::format!(
                    "singular pivot at column {k}"
                )));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                x.swap(k, p);
            }
            let piv = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / piv;
                if l == 0.0 {
                    continue;
                }
                a[i * n + k] = 0.0;
                for j in k + 1..n {
                    a[i * n + j] -= l * a[k * n + j];
                }
                x[i] -= l * x[k];
            }
        }
        for k in (0..n).rev() {
            let s: f64 = (k + 1..n).map(|j| a[k * n + j] * x[j]).sum();
            x[k] = (x[k] - s) / a[k * n + k];
        }
        Ok(x)
    }
}

/// Square band matrix with equal lower and upper bandwidth, factored in place
/// by Gaussian elimination without pivoting.
///
/// Only safe for diagonally dominant systems (M-matrices from the transport
/// step, shifted Laplacians); the factorization checks each pivot.
#[derive(Debug, Clone)]
pub struct BandedMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    factored: bool,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, data: vec![0.0; n * (2 * bw + 1)], factored: false }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.bw >= i && j <= i + self.bw);
        i * (2 * self.bw + 1) + (j + self.bw - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        if j + self.bw < i || j > i + self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.bw);
                let hi = (i + self.bw + 1).min(self.n);
                (lo..hi).map(|j| self.get(i, j) * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(&mut self) -> Result<()> {
        if self.factored {
            return Ok(());
        }
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let piv = self.data[self.idx(k, k)];
            if !(piv.abs() > 1e-300) || !piv.is_finite() {
                return Err(Error::LinearSolveFailure(alloc::format!(
                    "zero pivot in banded solve at row {k}"
                )));
            }
            let hi = (k + bw + 1).min(n);
            for i in k + 1..hi {
                let ik = self.idx(i, k);
                let l = self.data[ik] / piv;
                if l == 0.0 {
                    continue;
                }
                self.data[ik] = l;
                for j in k + 1..hi {
                    let kj = self.data[self.idx(k, j)];
                    let ij = self.idx(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` on an unfactored matrix with `sweeps` rounds of
    /// iterative refinement against the original entries.
    pub fn solve_refined(&self, b: &[f64], sweeps: usize) -> Result<Vec<f64>> {
        if self.factored {
            return Err(Error::LinearSolveFailure("refinement needs the unfactored matrix".into()));
        }
        let mut lu = self.clone();
        let mut x = lu.solve(b)?;
        for _ in 0..sweeps {
            let ax = self.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let dx = lu.solve(&r)?;
            for (x, d) in x.iter_mut().zip(&dx) {
                *x += d;
            }
        }
        Ok(x)
    }

    /// Solves `A x = b`, factoring first if needed.
    pub fn solve(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::SizeMismatch { expected: self.n, got: b.len() });
        }
        self.factor()?;
        let (n, bw) = (self.n, self.bw);
        let mut x = b.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            let mut s = x[i];
            for j in lo..i {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let hi = (i + bw + 1).min(n);
            let mut s = x[i];
            for j in i + 1..hi {
                s -= self.data[self.idx(i, j)] * x[j];
            }
            x[i] = s / self.data[self.idx(i, i)];
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolveFailure("non-finite solution".into()));
        }
        Ok(x)
    }
}

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors stored column-wise, row-major `n x n`.
    pub vectors: DenseMatrix,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> Vec<f64> {
        let n = self.values.len();
        (0..n).map(|i| self.vectors.get(i, k)).collect()
    }
}

/// Householder tridiagonalization followed by implicit QL iterations
/// (the classic `tred2`/`tql2` pair). The input is symmetrized as
/// `(A + A^T)/2` first.
pub fn symmetric_eigen(a: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = a.size();
    let mut v = DenseMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            v.set(i, j, 0.5 * (a.get(i, j) + a.get(j, i)));
        }
    }
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    if n == 0 {
        return Ok(SymmetricEigen { values: d, vectors: v });
    }
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| d[i].total_cmp(&d[j]));
    let values = order.iter().map(|&k| d[k]).collect();
    let mut vectors = DenseMatrix::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        for i in 0..n {
            vectors.set(i, col, v.get(i, k));
        }
    }
    Ok(SymmetricEigen { values, vectors })
}

fn tred2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v.get(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
                v.set(j, i, 0.0);
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = math::sqrt(h);
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for ej in e.iter_mut().take(i) {
                *ej = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v.set(j, i, f);
                g = e[j] + v.get(j, j) * f;
                for k in j + 1..i {
                    g += v.get(k, j) * d[k];
                    e[k] += v.get(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v.add_to(k, j, -(f * e[k] + g * d[k]));
                }
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v.set(n - 1, i, v.get(i, i));
        v.set(i, i, 1.0);
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.get(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.get(k, i + 1) * v.get(k, j);
                }
                for k in 0..=i {
                    v.add_to(k, j, -g * d[k]);
                }
            }
        }
        for k in 0..=i {
            v.set(k, i + 1, 0.0);
        }
    }
    for j in 0..n {
        d[j] = v.get(n - 1, j);
        v.set(n - 1, j, 0.0);
    }
    v.set(n - 1, n - 1, 1.0);
    e[0] = 0.0;
}

fn tql2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) -> Result<()> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > 60 {
                    return Err(Error::EigenStagnation(iter));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = math::hypot(p, 1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = math::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        h = v.get(k, i + 1);
                        v.set(k, i + 1, s * v.get(k, i) + c * h);
                        v.set(k, i, c * v.get(k, i) - s * h);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sym2_closed_forms() {
        let m = Sym2 { xx: 2.0, xy: 1.0, yy: 2.0 };
        assert_eq!(m.eigenvalues(2), (1.0, 3.0));
        let inv = m.inverse(2).unwrap();
        let v = inv.mul_vec(m.mul_vec([0.3, -0.7], 2), 2);
        assert!((v[0] - 0.3).abs() < 1e-15 && (v[1] + 0.7).abs() < 1e-15);
        let r = m.sqrt(2);
        let back = [r.xx * r.xx + r.xy * r.xy, r.xx * r.xy + r.xy * r.yy, r.xy * r.xy + r.yy * r.yy];
        assert!((back[0] - 2.0).abs() < 1e-14);
        assert!((back[1] - 1.0).abs() < 1e-14);
        assert!((back[2] - 2.0).abs() < 1e-14);
        assert_eq!(Sym2::scalar(4.0, 1).sqrt(1).xx, 2.0);
    }

    #[test]
    fn dense_lu_solves_pivoting_case() {
        let a = DenseMatrix::from_row_major(3, vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0]).unwrap();
        let x = a.solve(&[3.0, 2.0, 4.0]).unwrap();
        for (xi, ei) in x.iter().zip([1.0, 1.0, 1.0]) {
            assert!((xi - ei).abs() < 1e-14);
        }
        let s = DenseMatrix::from_row_major(2, vec![1.0, 2.0, 2.0, 4.0]).unwrap();
        assert!(s.solve(&[1.0, 1.0]).is_err());
    }

    #[test]
    fn banded_matches_dense() {
        let n = 9;
        let bw = 3;
        let mut b = BandedMatrix::zeros(n, bw);
        let mut d = DenseMatrix::zeros(n);
        for i in 0..n {
            for j in i.saturating_sub(bw)..(i + bw + 1).min(n) {
                let v = if i == j { 10.0 } else { -(((i * 7 + j * 3) % 5) as f64) * 0.3 };
                b.add_to(i, j, v);
                d.set(i, j, v);
            }
        }
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let xb = b.solve(&rhs).unwrap();
        let xd = d.solve(&rhs).unwrap();
        for (u, v) in xb.iter().zip(&xd) {
            assert!((u - v).abs() < 1e-13);
        }
    }

    #[test]
    fn eigen_of_path_laplacian() {
        // Neumann path graph Laplacian: eigenvalues 2 - 2 cos(k pi / n).
        let n = 12;
        let mut a = DenseMatrix::zeros(n);
        for i in 0..n {
            if i > 0 {
                a.add_to(i, i, 1.0);
                a.set(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.add_to(i, i, 1.0);
                a.set(i, i + 1, -1.0);
            }
        }
        let eig = symmetric_eigen(&a).unwrap();
        for k in 0..n {
            let exact = 2.0 - 2.0 * (k as f64 * core::f64::consts::PI / n as f64).cos();
            assert!((eig.values[k] - exact).abs() < 1e-13, "{k}");
        }
    }

    proptest! {
        #[test]
        fn eigen_reconstructs(seed in proptest::collection::vec(-1.0f64..1.0, 36)) {
            let n = 6;
            let mut a = DenseMatrix::zeros(n);
            for i in 0..n {
                for j in 0..n {
                    a.set(i, j, seed[i * n + j] + seed[j * n + i]);
                }
            }
            let eig = symmetric_eigen(&a).unwrap();
            for i in 0..n {
                for j in 0..n {
                    let r: f64 = (0..n)
                        .map(|k| eig.vectors.get(i, k) * eig.values[k] * eig.vectors.get(j, k))
                        .sum();
                    prop_assert!((r - a.get(i, j)).abs() < 1e-12);
                    let o: f64 = (0..n).map(|k| eig.vectors.get(k, i) * eig.vectors.get(k, j)).sum();
                    let expect = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((o - expect).abs() < 1e-12);
                }
            }
        }
    }
}
