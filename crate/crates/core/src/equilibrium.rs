//! Stationary states and decay rates.
//!
//! Equilibria solve the self-consistency `rho = e^{-(V1 + V2 * rho)} / Z`,
//! which we iterate (damped Picard); the map is a contraction with factor
//! `e^{1/2} / 2` when `||V2||_inf <= 1/4`. The decay exponent `r_t` bounds
//! `||rho(t) - rho_inf||^2 <= ||rho_0 - rho_inf||^2 e^{-r_t}`.

use alloc::vec::Vec;

use crate::diagnostics::{Row, TrajectoryRecord};
use crate::energy::Potentials;
use crate::grid::{integrate, l1_distance, Field, Grid};
use crate::linalg::BandedMatrix;
use crate::math;
use crate::model::{KernelSpec, Model, Region};
use crate::nonlocal::HiOperator;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EquilibriumResult {
    pub rho0: Field,
    /// `||S rho_k - rho_k||_1` for each iterate.
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    /// `||V2||_inf <= 1/4`, where uniqueness and contraction are proven.
    pub contraction_flag: bool,
    /// Spatial standard deviation of `delta F / delta rho` at `rho0`.
    pub el_residual: f64,
    /// Spatial mean of `delta F / delta rho` at `rho0`.
    pub chemical_potential: f64,
    pub final_damping: f64,
}

impl EquilibriumResult {
    /// Geometric mean of the last (up to) `window` residual ratios.
    pub fn asymptotic_ratio(&self, window: usize) -> Option<f64> {
        let h = &self.residual_history;
        let end = h.iter().rposition(|&r| r > 0.0)?;
        let k = window.min(end);
        if k == 0 {
            return None;
        }
        Some(math::exp((math::ln(h[end]) - math::ln(h[end - k])) / k as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct PicardOptions {
    pub damping: f64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self { damping: 1.0, tol: 1e-12, max_iter: 500 }
    }
}

/// Smallest damping the solver halves down to.
pub const DAMPING_FLOOR: f64 = 1.0 / 16.0;

/// `S rho = e^{-(V1 + V2 * rho)} / Z`, exponent shifted by its minimum.
pub fn picard_map(pot: &Potentials, rho: &Field) -> Result<Field> {
    let g = pot.grid();
    let v = pot.effective_potential(rho, 0.0)?;
    let vmin = v.min();
    let w = v.map(|x| math::exp(vmin - x));
    let z = integrate(g, &w)?;
    if !(z > 0.0) || !z.is_finite() {
        return Err(Error::NonFinite(0));
    }
    Ok(w.map(|x| x / z))
}

pub fn picard_solve(pot: &Potentials, rho_init: &Field, opts: &PicardOptions) -> Result<EquilibriumResult> {
    if !(opts.damping > 0.0 && opts.damping <= 1.0) || !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("damping must lie in (0, 1] and tol must be positive".into()));
    }
    let g = *pot.grid();
    rho_init.check(&g)?;
    let mass = integrate(&g, rho_init)?;
    if rho_init.values.iter().any(|&v| v < 0.0) || (mass - 1.0).abs() > 1e-6 {
        return Err(Error::BadInitialMass { mass });
    }
    let mut omega = opts.damping;
    let mut rho = rho_init.clone();
    let mut history = Vec::new();
    for it in 0..=opts.max_iter {
        let s = picard_map(pot, &rho)?;
        let r = l1_distance(&g, &s, &rho);
        if history.last().is_some_and(|&prev| r > prev) {
            omega = (0.5 * omega).max(DAMPING_FLOOR);
        }
        history.push(r);
        if r <= opts.tol {
            let mu = pot.functional_derivative(&rho, 0.0)?;
            let n = mu.len() as f64;
            let mean = mu.values.iter().sum::<f64>() / n;
            let var = mu.values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
            return Ok(EquilibriumResult {
                rho0: rho,
                residual_history: history,
                iterations: it,
                contraction_flag: pot.v2_sup_norm() <= 0.25,
                el_residual: math::sqrt(var),
                chemical_potential: mean,
                final_damping: omega,
            });
        }
        if it == opts.max_iter {
            break;
        }
        rho = Field::new(rho.values.iter().zip(&s.values).map(|(a, b)| (1.0 - omega) * a + omega * b).collect());
    }
    let residual = history.last().copied().unwrap_or(f64::NAN);
    Err(Error::MaxIterations { iterations: opts.max_iter, residual, history })
}

/// Picard solve from the uniform density, with the contraction flag filled.
pub fn solve_equilibrium(g: &Grid, v1: &KernelSpec, v2: &KernelSpec, opts: &PicardOptions) -> Result<EquilibriumResult> {
    let pot = Potentials::new(g, v1, v2)?;
    picard_solve(&pot, &Field::constant(g, 1.0 / g.volume()), opts)
}

/// `||a||_inf` for the flux solved at `rho0`; vanishes at equilibrium.
pub fn stationary_flux_check(pot: &Potentials, hi: &HiOperator, rho0: &Field) -> Result<f64> {
    let d = hi.assemble_d(rho0)?;
    let rhs = pot.thermodynamic_force(rho0, 0.0)?.scale(-1.0);
    let sol = hi.solve_flux(&d, rho0, &rhs, 1e-13, 1000)?;
    Ok(sol.flux.max_norm())
}

/// Discrete Neumann Laplacian (positive semidefinite), two-point flux stencil.
pub fn neumann_laplacian(g: &Grid) -> BandedMatrix {
    let n = g.num_cells();
    let bw = if g.dim() == 1 { 1 } else { g.cells_per_axis() };
    let inv_h2 = 1.0 / (g.spacing() * g.spacing());
    let mut m = BandedMatrix::zeros(n, bw);
    for c in 0..n {
        for axis in 0..g.dim() {
            if let Some(k) = g.neighbor(c, axis, true) {
                m.add_to(c, c, inv_h2);
                m.add_to(k, k, inv_h2);
                m.add_to(c, k, -inv_h2);
                m.add_to(k, c, -inv_h2);
            }
        }
    }
    m
}

/// Smallest nonzero eigenvalue `nu1` of the discrete Neumann Laplacian and
/// `c_pw = nu1^{-1/2}`, by shifted inverse iteration on mean-zero vectors.
pub fn poincare_constant(g: &Grid) -> Result<(f64, f64)> {
    let lap = neumann_laplacian(g);
    let shift = 1.0 / (g.extent() * g.extent());
    let mut m = lap.clone();
    for c in 0..g.num_cells() {
        m.add_to(c, c, shift);
    }
    m.factor()?;
    let l = g.extent();
    let mut x: Vec<f64> = g.centers().iter().map(|p| (p[0] - 0.5 * l) + 0.5 * (p[1] - 0.5 * l)).collect();
    let project = |v: &mut Vec<f64>| {
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let mut norm = 0.0;
        for x in v.iter_mut() {
            *x -= mean;
            norm += *x * *x;
        }
        let norm = math::sqrt(norm);
        for x in v.iter_mut() {
            *x /= norm;
        }
    };
    project(&mut x);
    let mut nu = f64::INFINITY;
    for _ in 0..1000 {
        let mut y = m.solve(&x)?;
        project(&mut y);
        let ly = lap.mul_vec(&y);
        let next: f64 = y.iter().zip(&ly).map(|(a, b)| a * b).sum();
        x = y;
        if (next - nu).abs() <= 1e-14 * next {
            let nu1 = next;
            return Ok((nu1, 1.0 / math::sqrt(nu1)));
        }
        nu = next;
    }
    Err(Error::EigenStagnation(1000))
}

/// Sup norms entering `r_t`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateNorms {
    pub grad_v1: f64,
    pub grad_v2: f64,
    pub v2: f64,
    pub z2: f64,
}

impl RateNorms {
    pub fn from_model(g: &Grid, model: &Model) -> Self {
        Self {
            grad_v1: model.v1.gradient_sup_norm(g, Region::Domain),
            grad_v2: model.v2.gradient_sup_norm(g, Region::Differences),
            v2: model.v2.sup_norm(g, Region::Differences),
            z2: model.z2.sup_norm(g),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RateReport {
    pub t: f64,
    pub c_pw: f64,
    pub nu1: f64,
    /// `int_0^t mu_min ds`
    pub mu_hat_min: f64,
    /// `int_0^t mu_max ds`
    pub mu_hat_max: f64,
    /// `int_0^t ||a||_{L1}^2 ds`
    pub flux_sq_integral: f64,
    /// Interaction constant `e + 1`.
    pub r_t: f64,
    /// Interaction constant `e^{4 ||V2||} + 1`.
    pub r_t_appendix: f64,
    /// The smaller of the two; gates the envelope check.
    pub r_t_conservative: f64,
    pub positive: bool,
}

/// Trapezoid accumulator of the time integrals in `r_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAccumulator {
    norms: RateNorms,
    c_pw: f64,
    last: Option<(f64, f64, f64, f64)>,
    mu_hat_min: f64,
    mu_hat_max: f64,
    flux_sq: f64,
}

impl RateAccumulator {
    pub fn new(norms: RateNorms, c_pw: f64) -> Self {
        Self { norms, c_pw, last: None, mu_hat_min: 0.0, mu_hat_max: 0.0, flux_sq: 0.0 }
    }

    /// Adds a sample `(t, mu_min, mu_max, ||a||_{L1})` and returns the report at `t`.
    pub fn push(&mut self, t: f64, mu_min: f64, mu_max: f64, flux_l1: f64) -> RateReport {
        let a2 = flux_l1 * flux_l1;
        if let Some((t0, lo, hi, f0)) = self.last {
            let dt = t - t0;
            self.mu_hat_min += 0.5 * dt * (lo + mu_min);
            self.mu_hat_max += 0.5 * dt * (hi + mu_max);
            self.flux_sq += 0.5 * dt * (f0 + a2);
        }
        self.last = Some((t, mu_min, mu_max, a2));
        self.report()
    }

    pub fn report(&self) -> RateReport {
        let n = self.norms;
        let t = self.last.map_or(0.0, |l| l.0);
        let base = self.mu_hat_min / (self.c_pw * self.c_pw) - self.mu_hat_max * n.z2 * n.z2 * self.flux_sq;
        let with = |k: f64| base - 2.0 * self.mu_hat_max * (n.grad_v1 * n.grad_v1 + k * n.grad_v2 * n.grad_v2);
        let r_t = with(core::f64::consts::E + 1.0);
        let r_t_appendix = with(math::exp(4.0 * n.v2) + 1.0);
        let r_t_conservative = r_t.min(r_t_appendix);
        RateReport {
            t,
            c_pw: self.c_pw,
            nu1: 1.0 / (self.c_pw * self.c_pw),
            mu_hat_min: self.mu_hat_min,
            mu_hat_max: self.mu_hat_max,
            flux_sq_integral: self.flux_sq,
            r_t,
            r_t_appendix,
            r_t_conservative,
            positive: r_t_conservative > 0.0,
        }
    }
}

/// `r_t` at the last row of a trajectory.
pub fn rate_estimate(traj: &TrajectoryRecord, norms: &RateNorms, c_pw: f64) -> Result<RateReport> {
    rate_from_rows(&traj.rows, norms, c_pw)
}

pub fn rate_from_rows(rows: &[Row], norms: &RateNorms, c_pw: f64) -> Result<RateReport> {
    if rows.len() < 2 {
        return Err(Error::TrajectoryTooShort(rows.len()));
    }
    let mut acc = RateAccumulator::new(*norms, c_pw);
    let mut rep = acc.report();
    for r in rows {
        rep = acc.push(r.t, r.mu_min, r.mu_max, r.flux_l1_norm);
    }
    Ok(rep)
}
