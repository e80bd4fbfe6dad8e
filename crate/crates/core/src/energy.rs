//! Free energy
//! `F[rho] = int rho (log rho - 1) + int rho V1 + 1/2 int rho (V2 * rho)`,
//! its functional derivative, the dissipation rate and the flux functional.

use alloc::vec::Vec;

use crate::convolve::{ScalarTable, VectorTable};
use crate::grid::{gradient_cells, Field, Grid, VectorField};
use crate::math;
use crate::model::{KernelSpec, Model, Region};
use crate::nonlocal::{HiOperator, TensorField};
use crate::{Error, Result};

/// The three parts of `F` and their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnergyBreakdown {
    pub entropy: f64,
    pub external: f64,
    pub interaction: f64,
    pub total: f64,
}

/// Potentials `V1`, `V2` tabulated on one mesh.
#[derive(Debug, Clone)]
pub struct Potentials {
    grid: Grid,
    v1: KernelSpec,
    v2: ScalarTable,
    grad_v2: VectorTable,
    v2_zero: bool,
    v2_sup: f64,
    static_v1: Option<(Field, VectorField)>,
}

impl Potentials {
    pub fn new(grid: &Grid, v1: &KernelSpec, v2: &KernelSpec) -> Result<Self> {
        v1.validate()?;
        v2.validate_even()?;
        let static_v1 = if v1.is_time_dependent() {
            None
        } else {
            Some((v1_values(grid, v1, 0.0)?, v1_gradients(grid, v1, 0.0)?))
        };
        Ok(Self {
            grid: *grid,
            v1: v1.clone(),
            v2: ScalarTable::new(grid, v2)?,
            grad_v2: VectorTable::gradient_of(grid, v2)?,
            v2_zero: v2.is_zero(),
            v2_sup: v2.sup_norm(grid, Region::Differences),
            static_v1,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// `sup |V2(x - y)|` over pairs of points in the domain.
    pub fn v2_sup_norm(&self) -> f64 {
        self.v2_sup
    }

    /// `V1(x_i, t)`.
    pub fn v1(&self, t: f64) -> Result<Field> {
        match &self.static_v1 {
            Some((v, _)) => Ok(v.clone()),
            None => v1_values(&self.grid, &self.v1, t),
        }
    }

    /// Analytic `grad V1(x_i, t)`.
    pub fn grad_v1(&self, t: f64) -> Result<VectorField> {
        match &self.static_v1 {
            Some((_, g)) => Ok(g.clone()),
            None => v1_gradients(&self.grid, &self.v1, t),
        }
    }

    /// `V2 * rho`.
    pub fn v2_conv(&self, rho: &Field) -> Result<Field> {
        if self.v2_zero {
            rho.check(&self.grid)?;
            return Ok(Field::zeros(&self.grid));
        }
        self.v2.convolve(rho)
    }

    /// `(grad V2) * rho`.
    pub fn grad_v2_conv(&self, rho: &Field) -> Result<VectorField> {
        if self.v2_zero {
            rho.check(&self.grid)?;
            return Ok(VectorField::zeros(&self.grid));
        }
        self.grad_v2.convolve(rho)
    }

    /// `V1 + V2 * rho`.
    pub fn effective_potential(&self, rho: &Field, t: f64) -> Result<Field> {
        let mut v = self.v1(t)?;
        for (a, b) in v.values.iter_mut().zip(self.v2_conv(rho)?.values) {
            *a += b;
        }
        Ok(v)
    }

    pub fn compute_f(&self, rho: &Field, t: f64) -> Result<EnergyBreakdown> {
        rho.check(&self.grid)?;
        check_nonnegative(rho)?;
        let w = self.grid.cell_volume();
        let entropy = rho
            .values
            .iter()
            .map(|&r| if r > 0.0 { r * (math::ln(r) - 1.0) } else { 0.0 })
            .sum::<f64>()
            * w;
        let v1 = self.v1(t)?;
        let external = rho.values.iter().zip(&v1.values).map(|(r, v)| r * v).sum::<f64>() * w;
        let v2r = self.v2_conv(rho)?;
        let interaction = 0.5 * rho.values.iter().zip(&v2r.values).map(|(r, v)| r * v).sum::<f64>() * w;
        Ok(EnergyBreakdown { entropy, external, interaction, total: entropy + external + interaction })
    }

    /// `log rho + V1 + V2 * rho`; requires `rho > 0`.
    pub fn functional_derivative(&self, rho: &Field, t: f64) -> Result<Field> {
        check_positive(rho)?;
        let mut v = self.effective_potential(rho, t)?;
        for (a, r) in v.values.iter_mut().zip(&rho.values) {
            *a += math::ln(*r);
        }
        Ok(v)
    }

    /// Discrete `rho grad(delta F / delta rho)`, written as
    /// `e^{-V} grad(rho e^{V})` with `V = V1 + V2 * rho` so that it vanishes
    /// identically on discrete Gibbs states and stays defined where `rho = 0`.
    pub fn thermodynamic_force(&self, rho: &Field, t: f64) -> Result<VectorField> {
        rho.check(&self.grid)?;
        let v = self.effective_potential(rho, t)?;
        let vref = v.max();
        let boltz: Vec<f64> = v.values.iter().map(|x| math::exp(x - vref)).collect();
        let u = Field::new(rho.values.iter().zip(&boltz).map(|(r, b)| r * b).collect());
        let gu = gradient_cells(&self.grid, &u)?;
        Ok(VectorField::new(gu.values.iter().zip(&boltz).map(|(g, b)| [g[0] / b, g[1] / b]).collect()))
    }

    /// `grad(delta F / delta rho)` consistent with [`Self::thermodynamic_force`].
    pub fn chemical_potential_gradient(&self, rho: &Field, t: f64) -> Result<VectorField> {
        check_positive(rho)?;
        let f = self.thermodynamic_force(rho, t)?;
        Ok(VectorField::new(f.values.iter().zip(&rho.values).map(|(x, r)| [x[0] / r, x[1] / r]).collect()))
    }

    /// `dF/dt = int grad(delta F / delta rho) . a`. Cells with `rho = 0`
    /// carry no contribution.
    pub fn dissipation(&self, rho: &Field, a: &VectorField, t: f64) -> Result<f64> {
        a.check(&self.grid)?;
        let f = self.thermodynamic_force(rho, t)?;
        let s: f64 = f
            .values
            .iter()
            .zip(&a.values)
            .zip(&rho.values)
            .filter(|(_, &r)| r > 0.0)
            .map(|((x, y), r)| (x[0] * y[0] + x[1] * y[1]) / r)
            .sum();
        Ok(s * self.grid.cell_volume())
    }

    /// `J[v] = 1/2 int rho^-1 v . (H_rho v) - int v . grad(delta F / delta rho)`.
    pub fn flux_objective_j(&self, hi: &HiOperator, d: &TensorField, rho: &Field, v: &VectorField, t: f64) -> Result<f64> {
        let grad_mu = self.chemical_potential_gradient(rho, t)?;
        let hv = hi.apply_h(d, rho, v)?;
        let w = self.grid.cell_volume();
        let quad: f64 = v
            .values
            .iter()
            .zip(&hv.values)
            .zip(&rho.values)
            .map(|((x, y), r)| (x[0] * y[0] + x[1] * y[1]) / r)
            .sum();
        let lin: f64 = v.values.iter().zip(&grad_mu.values).map(|(x, y)| x[0] * y[0] + x[1] * y[1]).sum();
        Ok((0.5 * quad - lin) * w)
    }
}

fn v1_values(grid: &Grid, v1: &KernelSpec, t: f64) -> Result<Field> {
    (0..grid.num_cells())
        .map(|c| v1.value(grid.center(c), grid.dim(), t))
        .collect::<Result<Vec<_>>>()
        .map(Field::new)
}

fn v1_gradients(grid: &Grid, v1: &KernelSpec, t: f64) -> Result<VectorField> {
    (0..grid.num_cells())
        .map(|c| v1.gradient(grid.center(c), grid.dim(), t))
        .collect::<Result<Vec<_>>>()
        .map(VectorField::new)
}

fn check_nonnegative(rho: &Field) -> Result<()> {
    match rho.values.iter().position(|&v| v < -1e-13) {
        Some(c) => Err(Error::NegativeDensity { cell: c, value: rho.values[c] }),
        None => Ok(()),
    }
}

pub(crate) fn check_positive(rho: &Field) -> Result<()> {
    match rho.values.iter().position(|&v| !(v > 0.0)) {
        Some(c) => Err(Error::NonPositiveDensity { cell: c, value: rho.values[c] }),
        None => Ok(()),
    }
}

pub fn compute_f(g: &Grid, rho: &Field, v1: &KernelSpec, v2: &KernelSpec, t: f64) -> Result<EnergyBreakdown> {
    Potentials::new(g, v1, v2)?.compute_f(rho, t)
}

pub fn functional_derivative(g: &Grid, rho: &Field, v1: &KernelSpec, v2: &KernelSpec, t: f64) -> Result<Field> {
    Potentials::new(g, v1, v2)?.functional_derivative(rho, t)
}

pub fn dissipation(g: &Grid, rho: &Field, a: &VectorField, v1: &KernelSpec, v2: &KernelSpec, t: f64) -> Result<f64> {
    Potentials::new(g, v1, v2)?.dissipation(rho, a, t)
}

pub fn flux_objective_j(g: &Grid, rho: &Field, v: &VectorField, model: &Model, t: f64) -> Result<f64> {
    let pot = Potentials::new(g, &model.v1, &model.v2)?;
    let hi = HiOperator::new(g, &model.z1, &model.z2)?;
    let d = hi.assemble_d(rho)?;
    pot.flux_objective_j(&hi, &d, rho, v, t)
}
