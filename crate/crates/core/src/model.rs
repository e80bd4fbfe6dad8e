//! Potentials and hydrodynamic interaction kernels.
//!
//! A [`KernelSpec`] describes a scalar function on `R^d`: the one-body
//! potential `V1` (optionally modulated in time), the pair potential `V2`,
//! or the radial profile of a tensor kernel. A [`TensorKernelSpec`] builds a
//! symmetric `d x d` kernel (`Z1`, `Z2`) from a profile. Every family here is
//! bounded with two bounded derivatives on bounded sets.

use alloc::format;
use alloc::vec::Vec;

use crate::grid::Grid;
use crate::linalg::Sym2;
use crate::math;
use crate::{Error, Result};

/// Multiplicative time dependence `1 + amplitude * sin(frequency * t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Modulation {
    pub amplitude: f64,
    pub frequency: f64,
}

impl Modulation {
    pub fn factor(&self, t: f64) -> f64 {
        1.0 + self.amplitude * math::sin(self.frequency * t)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum KernelKind {
    Zero,
    Constant { value: f64 },
    /// `k/2 |x - c|^2`
    Harmonic { center: [f64; 2], stiffness: f64 },
    /// `alpha exp(-|x - c|^2 / (2 sigma^2))`
    Gaussian { amplitude: f64, width: f64, center: [f64; 2] },
    /// `A (1 - |x - c|^2 / w^2)^2` inside the ball of radius `w`, zero outside.
    SoftCore { amplitude: f64, width: f64, center: [f64; 2] },
    /// `a s^4 - b s^2` with `s = |x - c|`.
    DoubleWell { a: f64, b: f64, center: [f64; 2] },
    /// Radial profile in `|x - c|`, linear between samples spaced `spacing`
    /// apart starting at radius 0.
    Tabulated { spacing: f64, samples: Vec<f64>, center: [f64; 2] },
}

/// Scalar potential or kernel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub modulation: Option<Modulation>,
}

/// Where a sup-norm is taken: over the domain itself (one-body potentials)
/// or over the difference set `Omega - Omega` (convolution kernels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    Domain,
    Differences,
}

impl From<KernelKind> for KernelSpec {
    fn from(kind: KernelKind) -> Self {
        KernelSpec { kind, modulation: None }
    }
}

#[inline]
fn offset(x: [f64; 2], c: [f64; 2], dim: usize) -> [f64; 2] {
    if dim == 1 {
        [x[0] - c[0], 0.0]
    } else {
        [x[0] - c[0], x[1] - c[1]]
    }
}

#[inline]
fn norm2(r: [f64; 2]) -> f64 {
    r[0] * r[0] + r[1] * r[1]
}

impl KernelSpec {
    pub fn zero() -> Self {
        KernelKind::Zero.into()
    }

    pub fn constant(value: f64) -> Self {
        KernelKind::Constant { value }.into()
    }

    pub fn harmonic(center: f64, stiffness: f64) -> Self {
        KernelKind::Harmonic { center: [center, center], stiffness }.into()
    }

    pub fn gaussian(amplitude: f64, width: f64) -> Self {
        KernelKind::Gaussian { amplitude, width, center: [0.0; 2] }.into()
    }

    pub fn soft_core(amplitude: f64, width: f64) -> Self {
        KernelKind::SoftCore { amplitude, width, center: [0.0; 2] }.into()
    }

    pub fn double_well(a: f64, b: f64) -> Self {
        KernelKind::DoubleWell { a, b, center: [0.0; 2] }.into()
    }

    pub fn tabulated(spacing: f64, samples: Vec<f64>) -> Self {
        KernelKind::Tabulated { spacing, samples, center: [0.0; 2] }.into()
    }

    pub fn with_modulation(mut self, m: Modulation) -> Self {
        self.modulation = Some(m);
        self
    }

    pub fn is_zero(&self) -> bool {
        match &self.kind {
            KernelKind::Zero => true,
            KernelKind::Constant { value } => *value == 0.0,
            KernelKind::Gaussian { amplitude, .. } | KernelKind::SoftCore { amplitude, .. } => *amplitude == 0.0,
            KernelKind::Harmonic { stiffness, .. } => *stiffness == 0.0,
            KernelKind::DoubleWell { a, b, .. } => *a == 0.0 && *b == 0.0,
            KernelKind::Tabulated { samples, .. } => samples.iter().all(|&s| s == 0.0),
        }
    }

    pub fn is_time_dependent(&self) -> bool {
        self.modulation.is_some_and(|m| m.amplitude != 0.0)
    }

    fn center(&self) -> Option<[f64; 2]> {
        match &self.kind {
            KernelKind::Zero | KernelKind::Constant { .. } => None,
            KernelKind::Harmonic { center, .. }
            | KernelKind::Gaussian { center, .. }
            | KernelKind::SoftCore { center, .. }
            | KernelKind::DoubleWell { center, .. }
            | KernelKind::Tabulated { center, .. } => Some(*center),
        }
    }

    /// Checks parameters (widths positive, table nonempty, values finite).
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidKernel(what.into()));
        match &self.kind {
            KernelKind::Gaussian { width, .. } | KernelKind::SoftCore { width, .. } if !(*width > 0.0) => {
                return bad("width must be positive");
            }
            KernelKind::Tabulated { spacing, samples, .. } => {
                if !(*spacing > 0.0) {
                    return bad("tabulated spacing must be positive");
                }
                if samples.len() < 2 {
                    return bad("tabulated kernel needs at least two samples");
                }
                if samples.iter().any(|s| !s.is_finite()) {
                    return bad("tabulated samples must be finite");
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Checks the evenness required of pair potentials and kernel profiles:
    /// no center offset and no time modulation.
    pub fn validate_even(&self) -> Result<()> {
        self.validate()?;
        if self.center().is_some_and(|c| c != [0.0, 0.0]) {
            return Err(Error::InvalidKernel("pair kernels must be centered at the origin".into()));
        }
        if self.modulation.is_some() {
            return Err(Error::InvalidKernel("pair kernels cannot be time modulated".into()));
        }
        Ok(())
    }

    fn time_factor(&self, t: f64) -> f64 {
        self.modulation.map_or(1.0, |m| m.factor(t))
    }

    /// Value at `x` and time `t`. Time is ignored for unmodulated specs.
    pub fn value(&self, x: [f64; 2], dim: usize, t: f64) -> Result<f64> {
        let v = match &self.kind {
            KernelKind::Zero => 0.0,
            KernelKind::Constant { value } => *value,
            KernelKind::Harmonic { center, stiffness } => 0.5 * stiffness * norm2(offset(x, *center, dim)),
            KernelKind::Gaussian { amplitude, width, center } => {
                amplitude * math::exp(-norm2(offset(x, *center, dim)) / (2.0 * width * width))
            }
            KernelKind::SoftCore { amplitude, width, center } => {
                let s2 = norm2(offset(x, *center, dim)) / (width * width);
                if s2 < 1.0 {
                    amplitude * (1.0 - s2) * (1.0 - s2)
                } else {
                    0.0
                }
            }
            KernelKind::DoubleWell { a, b, center } => {
                let s2 = norm2(offset(x, *center, dim));
                a * s2 * s2 - b * s2
            }
            KernelKind::Tabulated { spacing, samples, center } => {
                let r = math::sqrt(norm2(offset(x, *center, dim)));
                table_lookup(*spacing, samples, r)?.0
            }
        };
        Ok(v * self.time_factor(t))
    }

    /// Analytic gradient at `x` and time `t`.
    pub fn gradient(&self, x: [f64; 2], dim: usize, t: f64) -> Result<[f64; 2]> {
        let g = match &self.kind {
            KernelKind::Zero | KernelKind::Constant { .. } => [0.0, 0.0],
            KernelKind::Harmonic { center, stiffness } => {
                let r = offset(x, *center, dim);
                [stiffness * r[0], stiffness * r[1]]
            }
            KernelKind::Gaussian { amplitude, width, center } => {
                let r = offset(x, *center, dim);
                let s = -amplitude / (width * width) * math::exp(-norm2(r) / (2.0 * width * width));
                [s * r[0], s * r[1]]
            }
            KernelKind::SoftCore { amplitude, width, center } => {
                let r = offset(x, *center, dim);
                let s2 = norm2(r) / (width * width);
                if s2 < 1.0 {
                    let s = -4.0 * amplitude * (1.0 - s2) / (width * width);
                    [s * r[0], s * r[1]]
                } else {
                    [0.0, 0.0]
                }
            }
            KernelKind::DoubleWell { a, b, center } => {
                let r = offset(x, *center, dim);
                let s = 4.0 * a * norm2(r) - 2.0 * b;
                [s * r[0], s * r[1]]
            }
            KernelKind::Tabulated { spacing, samples, center } => {
                let r = offset(x, *center, dim);
                let rad = math::sqrt(norm2(r));
                let (_, slope) = table_lookup(*spacing, samples, rad)?;
                if rad == 0.0 {
                    [0.0, 0.0]
                } else {
                    [slope * r[0] / rad, slope * r[1] / rad]
                }
            }
        };
        let m = self.time_factor(t);
        Ok([g[0] * m, g[1] * m])
    }

    /// Upper bound on `sup |V|` over the region (attained for most families).
    pub fn sup_norm(&self, grid: &Grid, region: Region) -> f64 {
        let m = self.modulation.map_or(1.0, |m| 1.0 + m.amplitude.abs());
        let base = match &self.kind {
            KernelKind::Zero => 0.0,
            KernelKind::Constant { value } => value.abs(),
            KernelKind::Gaussian { amplitude, .. } | KernelKind::SoftCore { amplitude, .. } => amplitude.abs(),
            KernelKind::Harmonic { center, stiffness } => {
                let d = max_corner_distance(grid, region, *center);
                0.5 * stiffness.abs() * d * d
            }
            KernelKind::Tabulated { samples, .. } => samples.iter().fold(0.0_f64, |a, s| a.max(s.abs())),
            KernelKind::DoubleWell { a, b, center } => {
                // a s^2 - b s on s = |r|^2 in [0, d^2]
                let d = max_corner_distance(grid, region, *center);
                let d2 = d * d;
                let v = |s: f64| (a * s * s - b * s).abs();
                let mut m = v(d2);
                if *a != 0.0 {
                    let s = b / (2.0 * a);
                    if s > 0.0 && s < d2 {
                        m = m.max(v(s));
                    }
                }
                m
            }
        };
        base * m
    }

    /// Upper bound on `sup |grad V|` over the region.
    pub fn gradient_sup_norm(&self, grid: &Grid, region: Region) -> f64 {
        let m = self.modulation.map_or(1.0, |m| 1.0 + m.amplitude.abs());
        let base = match &self.kind {
            KernelKind::Zero | KernelKind::Constant { .. } => 0.0,
            KernelKind::Gaussian { amplitude, width, .. } => amplitude.abs() / width * math::exp(-0.5),
            KernelKind::SoftCore { amplitude, width, .. } => {
                // max of 4 (1 - s^2) s at s = 1/sqrt(3)
                4.0 * amplitude.abs() / width * 2.0 / (3.0 * math::sqrt(3.0))
            }
            KernelKind::Harmonic { center, stiffness } => stiffness.abs() * max_corner_distance(grid, region, *center),
            KernelKind::Tabulated { spacing, samples, .. } => {
                samples.windows(2).fold(0.0_f64, |a, w| a.max((w[1] - w[0]).abs() / spacing))
            }
            KernelKind::DoubleWell { a, b, center } => {
                // |4 a r^3 - 2 b r| on r in [0, d]
                let d = max_corner_distance(grid, region, *center);
                let g = |r: f64| (4.0 * a * r * r * r - 2.0 * b * r).abs();
                let mut m = g(d);
                if *a != 0.0 {
                    let r2 = b / (6.0 * a);
                    if r2 > 0.0 && r2 < d * d {
                        m = m.max(g(math::sqrt(r2)));
                    }
                }
                m
            }
        };
        base * m
    }
}

/// Linear interpolation in a radial table; returns value and slope.
fn table_lookup(spacing: f64, samples: &[f64], r: f64) -> Result<(f64, f64)> {
    let max = spacing * (samples.len() - 1) as f64;
    if !(r <= max * (1.0 + 1e-12)) {
        return Err(Error::OutsideTable { position: r, max });
    }
    let u = (r / spacing).min((samples.len() - 1) as f64);
    let k = (math::floor(u) as usize).min(samples.len() - 2);
    let frac = u - k as f64;
    let slope = (samples[k + 1] - samples[k]) / spacing;
    Ok((samples[k] + frac * (samples[k + 1] - samples[k]), slope))
}

fn region_box(grid: &Grid, region: Region) -> (f64, f64) {
    match region {
        Region::Domain => (0.0, grid.extent()),
        Region::Differences => (-grid.extent(), grid.extent()),
    }
}

fn max_corner_distance(grid: &Grid, region: Region, center: [f64; 2]) -> f64 {
    let (lo, hi) = region_box(grid, region);
    let dx = (lo - center[0]).abs().max((hi - center[0]).abs());
    if grid.dim() == 1 {
        dx
    } else {
        let dy = (lo - center[1]).abs().max((hi - center[1]).abs());
        math::hypot(dx, dy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "structure", rename_all = "snake_case"))]
pub enum TensorStructure {
    /// `profile(r) I`
    Isotropic,
    /// `profile(r) (c1 I + c2 r r^T / (|r|^2 + eps_reg^2))`
    Dyadic { c1: f64, c2: f64, eps_reg: f64 },
}

/// Symmetric, even, bounded `d x d` kernel.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TensorKernelSpec {
    pub profile: KernelSpec,
    pub structure: TensorStructure,
}

impl TensorKernelSpec {
    pub fn zero() -> Self {
        Self::isotropic(KernelSpec::zero())
    }

    pub fn isotropic(profile: KernelSpec) -> Self {
        Self { profile, structure: TensorStructure::Isotropic }
    }

    pub fn dyadic(profile: KernelSpec, c1: f64, c2: f64, eps_reg: f64) -> Self {
        Self { profile, structure: TensorStructure::Dyadic { c1, c2, eps_reg } }
    }

    pub fn is_zero(&self) -> bool {
        self.profile.is_zero()
            || matches!(self.structure, TensorStructure::Dyadic { c1, c2, .. } if c1 == 0.0 && c2 == 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate_even()?;
        if let TensorStructure::Dyadic { eps_reg, .. } = self.structure {
            if !(eps_reg > 0.0) {
                return Err(Error::InvalidKernel(format!("dyadic regularization length must be positive, got {eps_reg}")));
            }
        }
        Ok(())
    }

    /// Kernel matrix at displacement `r`.
    pub fn eval(&self, r: [f64; 2], dim: usize) -> Result<Sym2> {
        let p = self.profile.value(r, dim, 0.0)?;
        match self.structure {
            TensorStructure::Isotropic => Ok(Sym2::scalar(p, dim)),
            TensorStructure::Dyadic { c1, c2, eps_reg } => {
                if !(eps_reg > 0.0) {
                    return Err(Error::InvalidKernel("dyadic regularization length must be positive".into()));
                }
                let r = if dim == 1 { [r[0], 0.0] } else { r };
                let w = c2 / (norm2(r) + eps_reg * eps_reg);
                let m = if dim == 1 {
                    Sym2 { xx: c1 + w * r[0] * r[0], xy: 0.0, yy: 0.0 }
                } else {
                    Sym2 { xx: c1 + w * r[0] * r[0], xy: w * r[0] * r[1], yy: c1 + w * r[1] * r[1] }
                };
                Ok(m.scale(p))
            }
        }
    }

    /// Upper bound on the operator norm of `Z(r)` over `Omega - Omega`.
    pub fn sup_norm(&self, grid: &Grid) -> f64 {
        let p = self.profile.sup_norm(grid, Region::Differences);
        match self.structure {
            TensorStructure::Isotropic => p,
            // eigenvalues of c1 I + c2 s r^ r^T lie between c1 and c1 + c2 (0 <= s < 1)
            TensorStructure::Dyadic { c1, c2, .. } => p * c1.abs().max((c1 + c2).abs()),
        }
    }
}

/// The four functions that define a run: one-body potential, pair potential
/// and the two hydrodynamic tensors.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Model {
    pub v1: KernelSpec,
    pub v2: KernelSpec,
    pub z1: TensorKernelSpec,
    pub z2: TensorKernelSpec,
}

impl Model {
    /// Pure diffusion: every potential and kernel zero.
    pub fn free() -> Self {
        Self {
            v1: KernelSpec::zero(),
            v2: KernelSpec::zero(),
            z1: TensorKernelSpec::zero(),
            z2: TensorKernelSpec::zero(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.v1.validate()?;
        self.v2.validate_even()?;
        self.z1.validate()?;
        self.z2.validate()
    }

    pub fn without_hi(&self) -> Self {
        Self { z1: TensorKernelSpec::zero(), z2: TensorKernelSpec::zero(), ..self.clone() }
    }

    pub fn is_autonomous(&self) -> bool {
        !self.v1.is_time_dependent()
    }
}
