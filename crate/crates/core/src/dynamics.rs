//! Time integration of
//! `d_t rho = div(D_rho (grad rho + rho (grad(V1 + V2 * rho) + Z2 * a)))`
//! with no-flux walls.
//!
//! The default scheme is an exponentially fitted (Scharfetter–Gummel /
//! Chang–Cooper) finite-volume discretization, implicit in `rho` with frozen
//! coefficients. Its matrix is a column-stochastic M-matrix, so mass is
//! conserved to round-off and positivity is preserved for any `dt`; its
//! fixed points are exactly the discrete Gibbs states `e^{-V_eff} / Z`.

use alloc::vec::Vec;

use crate::diagnostics::{RecordOptions, Recorder, Snapshot, TrajectoryRecord};
use crate::energy::Potentials;
use crate::grid::{integrate, l1_distance, Field, Grid, VectorField};
use crate::linalg::BandedMatrix;
use crate::math;
use crate::model::Model;
use crate::nonlocal::{FluxSolve, HiOperator, TensorField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Scheme {
    #[default]
    SemiImplicitCc,
    ExplicitHeun,
}

/// Which density the diffusion tensor is frozen at during a step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Freezing {
    /// `D` from the previous step's density, drift from the current one.
    Lagged,
    /// `D` and drift both from the current density.
    #[default]
    Synchronized,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct StepControl {
    pub dt: f64,
    pub scheme: Scheme,
    pub freezing: Freezing,
    pub inner_picard_tol: f64,
    /// Number of coefficient sweeps per step; 1 means a single frozen solve.
    pub inner_picard_max: usize,
    pub energy_guard: bool,
    pub guard_tol: f64,
    pub flux_tol: f64,
    pub flux_max_iter: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        Self {
            dt: 1e-4,
            scheme: Scheme::SemiImplicitCc,
            freezing: Freezing::Synchronized,
            inner_picard_tol: 1e-12,
            inner_picard_max: 1,
            energy_guard: true,
            guard_tol: 1e-10,
            flux_tol: 1e-12,
            flux_max_iter: 500,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.inner_picard_tol > 0.0
            && self.guard_tol > 0.0
            && self.flux_tol > 0.0
            && self.inner_picard_max >= 1
            && self.flux_max_iter >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter("step control needs dt > 0, positive tolerances and iteration caps".into()))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    pub time: f64,
    pub rho: Field,
    /// Cell-centered flux `a` solved at `rho`.
    pub flux: VectorField,
    /// `D` at `rho`.
    pub d_current: TensorField,
    pub step_index: usize,
    /// `D` at the previous step's density.
    pub d_previous: Option<TensorField>,
    pub flux_iterations: usize,
}

/// A model discretized on one mesh, ready to be stepped.
#[derive(Debug, Clone)]
pub struct Dynamics {
    grid: Grid,
    model: Model,
    pot: Potentials,
    hi: HiOperator,
}

impl Dynamics {
    pub fn new(grid: &Grid, model: &Model) -> Result<Self> {
        model.validate()?;
        Ok(Self {
            grid: *grid,
            model: model.clone(),
            pot: Potentials::new(grid, &model.v1, &model.v2)?,
            hi: HiOperator::new(grid, &model.z1, &model.z2)?,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn potentials(&self) -> &Potentials {
        &self.pot
    }

    pub fn hi(&self) -> &HiOperator {
        &self.hi
    }

    /// Solves `H_rho a = -rho grad(delta F / delta rho)` with `D` given.
    pub fn solve_flux(&self, d: &TensorField, rho: &Field, t: f64, ctrl: &StepControl) -> Result<FluxSolve> {
        let rhs = self.pot.thermodynamic_force(rho, t)?.scale(-1.0);
        self.hi.solve_flux(d, rho, &rhs, ctrl.flux_tol, ctrl.flux_max_iter)
    }

    /// Builds the state at `t` for a density; `rho` must be nonnegative with unit mass.
    pub fn initial_state(&self, rho: Field, t: f64, ctrl: &StepControl) -> Result<SimState> {
        rho.check(&self.grid)?;
        if let Some(c) = rho.values.iter().position(|&v| v < 0.0) {
            return Err(Error::NegativeDensity { cell: c, value: rho.values[c] });
        }
        let d = self.hi.assemble_d(&rho)?;
        let sol = self.solve_flux(&d, &rho, t, ctrl)?;
        Ok(SimState {
            time: t,
            rho,
            flux: sol.flux,
            d_current: d,
            step_index: 0,
            d_previous: None,
            flux_iterations: sol.iterations,
        })
    }

    /// `grad V1 + (grad V2) * rho + Z2 * a` at cell centers.
    pub fn assemble_drift(&self, state: &SimState) -> Result<VectorField> {
        let g1 = self.pot.grad_v1(state.time)?;
        let g2 = self.pot.grad_v2_conv(&state.rho)?;
        let za = self.hi.apply_a(&state.flux)?;
        Ok(g1.add(&g2).add(&za))
    }

    /// One step of size `ctrl.dt`; with the energy guard on (and static
    /// potentials) a step that raises `F` is redone as two half steps.
    pub fn step(&self, state: &SimState, ctrl: &StepControl) -> Result<SimState> {
        ctrl.validate()?;
        let guarded = ctrl.energy_guard && self.model.is_autonomous();
        let f0 = if guarded { Some(self.pot.compute_f(&state.rho, state.time)?.total) } else { None };
        let mut next = self.guarded_step(state, ctrl.dt, f0, ctrl)?;
        next.step_index = state.step_index + 1;
        Ok(next)
    }

    fn guarded_step(&self, state: &SimState, dt: f64, f0: Option<f64>, ctrl: &StepControl) -> Result<SimState> {
        if dt < 1e-12 {
            return Err(Error::EnergyGuardExhausted { dt });
        }
        let Some(f0) = f0 else {
            return self.raw_step(state, dt, ctrl);
        };
        match self.raw_step(state, dt, ctrl) {
            Ok(next) => {
                let f1 = self.pot.compute_f(&next.rho, next.time)?.total;
                if f1 - f0 <= ctrl.guard_tol * (1.0 + f0.abs()) {
                    return Ok(next);
                }
            }
            Err(Error::PositivityLoss { .. }) => {}
            Err(e) => return Err(e),
        }
        let half = 0.5 * dt;
        let mid = self.guarded_step(state, half, Some(f0), ctrl)?;
        let f_mid = self.pot.compute_f(&mid.rho, mid.time)?.total;
        self.guarded_step(&mid, half, Some(f_mid), ctrl)
    }

    /// One unguarded step; `step_index` is left for the caller.
    fn raw_step(&self, state: &SimState, dt: f64, ctrl: &StepControl) -> Result<SimState> {
        let d_frozen = match (ctrl.freezing, &state.d_previous) {
            (Freezing::Lagged, Some(d)) => d.clone(),
            _ => state.d_current.clone(),
        };
        let t_new = state.time + dt;
        let rho_new = match ctrl.scheme {
            Scheme::SemiImplicitCc => {
                let mut coeff_rho = state.rho.clone();
                let mut coeff_flux = state.flux.clone();
                let mut rho_new = self.implicit_sweep(&state.rho, &coeff_rho, &coeff_flux, &d_frozen, t_new, dt)?;
                for _ in 1..ctrl.inner_picard_max {
                    let change = l1_distance(&self.grid, &rho_new, &coeff_rho);
                    if change <= ctrl.inner_picard_tol {
                        break;
                    }
                    coeff_rho = rho_new;
                    let d = match ctrl.freezing {
                        Freezing::Synchronized => self.hi.assemble_d(&coeff_rho)?,
                        Freezing::Lagged => d_frozen.clone(),
                    };
                    coeff_flux = self.solve_flux(&d, &coeff_rho, t_new, ctrl)?.flux;
                    rho_new = self.implicit_sweep(&state.rho, &coeff_rho, &coeff_flux, &d, t_new, dt)?;
                }
                rho_new
            }
            Scheme::ExplicitHeun => {
                let k1 = self.explicit_rate(&state.rho, &state.flux, &d_frozen, state.time)?;
                let stage = Field::new(state.rho.values.iter().zip(&k1).map(|(r, k)| r + dt * k).collect());
                let d_stage = match ctrl.freezing {
                    Freezing::Synchronized => self.hi.assemble_d(&stage)?,
                    Freezing::Lagged => d_frozen.clone(),
                };
                let a_stage = self.solve_flux(&d_stage, &stage, t_new, ctrl)?.flux;
                let k2 = self.explicit_rate(&stage, &a_stage, &d_stage, t_new)?;
                Field::new(
                    state.rho.values.iter().zip(k1.iter().zip(&k2)).map(|(r, (a, b))| r + 0.5 * dt * (a + b)).collect(),
                )
            }
        };
        let min = rho_new.min();
        if !(min > 0.0) || rho_new.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::PositivityLoss { min });
        }
        let d_new = self.hi.assemble_d(&rho_new)?;
        let sol = self.solve_flux(&d_new, &rho_new, t_new, ctrl)?;
        Ok(SimState {
            time: t_new,
            rho: rho_new,
            flux: sol.flux,
            d_current: d_new,
            step_index: state.step_index,
            d_previous: Some(state.d_current.clone()),
            flux_iterations: sol.iterations,
        })
    }

    /// Face data shared by both schemes: for each interior face
    /// `(low cell, high cell, axis, D_face / h, delta, explicit flux)`.
    fn faces(&self, rho: &Field, flux: &VectorField, d: &TensorField, t: f64) -> Result<Vec<Face>> {
        let g = &self.grid;
        let h = g.spacing();
        let dim = g.dim();
        let veff = self.pot.effective_potential(rho, t)?;
        let big_a = self.hi.apply_a(flux)?;
        // Off-diagonal mobility is handled explicitly through the Slotboom
        // form of rho grad(delta F / delta rho).
        let cross = if dim == 2 && d.values.iter().any(|m| m.xy != 0.0) {
            Some(self.pot.thermodynamic_force(rho, t)?)
        } else {
            None
        };
        let mut out = Vec::with_capacity(g.num_cells() * dim);
        for c in 0..g.num_cells() {
            for axis in 0..dim {
                let Some(k) = g.neighbor(c, axis, true) else { continue };
                let diag = |m: &crate::linalg::Sym2| if axis == 0 { m.xx } else { m.yy };
                let coef = 0.5 * (diag(&d.values[c]) + diag(&d.values[k])) / h;
                let delta = veff.values[k] - veff.values[c] + 0.5 * h * (big_a.values[c][axis] + big_a.values[k][axis]);
                let explicit = match &cross {
                    Some(f) => {
                        let o = 1 - axis;
                        let dxy = 0.5 * (d.values[c].xy + d.values[k].xy);
                        let w = |i: usize| f.values[i][o] + rho.values[i] * big_a.values[i][o];
                        -dxy * 0.5 * (w(c) + w(k))
                    }
                    None => 0.0,
                };
                out.push(Face { lo: c, hi: k, coef, delta, explicit });
            }
        }
        Ok(out)
    }

    fn implicit_sweep(
        &self,
        rho_old: &Field,
        coeff_rho: &Field,
        coeff_flux: &VectorField,
        d: &TensorField,
        t: f64,
        dt: f64,
    ) -> Result<Field> {
        let g = &self.grid;
        let n = g.num_cells();
        let bw = if g.dim() == 1 { 1 } else { g.cells_per_axis() };
        let s = dt / g.spacing();
        let mut m = BandedMatrix::zeros(n, bw);
        let mut rhs = rho_old.values.clone();
        for i in 0..n {
            m.add_to(i, i, 1.0);
        }
        for f in self.faces(coeff_rho, coeff_flux, d, t)? {
            let bp = f.coef * math::bernoulli(f.delta);
            let bm = f.coef * math::bernoulli(-f.delta);
            m.add_to(f.lo, f.lo, s * bp);
            m.add_to(f.lo, f.hi, -s * bm);
            m.add_to(f.hi, f.hi, s * bm);
            m.add_to(f.hi, f.lo, -s * bp);
            rhs[f.lo] -= s * f.explicit;
            rhs[f.hi] += s * f.explicit;
        }
        Ok(Field::new(m.solve_refined(&rhs, 1)?))
    }

    /// `-div J` with fitted face fluxes evaluated at `rho` itself.
    fn explicit_rate(&self, rho: &Field, flux: &VectorField, d: &TensorField, t: f64) -> Result<Vec<f64>> {
        let inv_h = 1.0 / self.grid.spacing();
        let mut rate = alloc::vec![0.0; self.grid.num_cells()];
        for f in self.faces(rho, flux, d, t)? {
            let j = f.coef * (math::bernoulli(f.delta) * rho.values[f.lo] - math::bernoulli(-f.delta) * rho.values[f.hi])
                + f.explicit;
            rate[f.lo] -= j * inv_h;
            rate[f.hi] += j * inv_h;
        }
        Ok(rate)
    }

    /// Steps from `rho0` to `t_end`, recording a diagnostics row every
    /// `opts.record_every` steps and at the end. A density whose mass is off
    /// by less than `1e-6` is renormalized (with a warning); otherwise it is
    /// rejected.
    pub fn evolve(&self, rho0: &Field, ctrl: &StepControl, t_end: f64, opts: &RecordOptions) -> Result<TrajectoryRecord> {
        ctrl.validate()?;
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::InvalidParameter("t_end must be finite and nonnegative".into()));
        }
        let (rho0, warning) = normalize_initial(&self.grid, rho0)?;
        let mut recorder = Recorder::new(self, opts)?;
        if let Some(w) = warning {
            recorder.warn(w);
        }
        let mut state = self.initial_state(rho0, 0.0, ctrl)?;
        recorder.record(&state)?;
        let steps = step_count(t_end, ctrl.dt);
        let record_every = opts.record_every.max(1);
        for k in 1..=steps {
            let mut c = ctrl.clone();
            // land exactly on t_end
            if k == steps {
                c.dt = t_end - state.time;
                if c.dt <= 1e-15 * t_end.max(1.0) {
                    break;
                }
            }
            state = self.step(&state, &c)?;
            if k.is_multiple_of(record_every) || k == steps {
                recorder.record(&state)?;
            }
        }
        Ok(recorder.finish())
    }
}

#[derive(Debug, Clone, Copy)]
struct Face {
    lo: usize,
    hi: usize,
    coef: f64,
    delta: f64,
    explicit: f64,
}

fn step_count(t_end: f64, dt: f64) -> usize {
    let r = t_end / dt;
    let n = math::floor(r + 0.5);
    let n = if (r - n).abs() <= 1e-9 * r.max(1.0) { n } else { math::floor(r) + 1.0 };
    n as usize
}

/// Checks `rho0 >= 0` and unit mass, renormalizing small defects.
pub fn normalize_initial(g: &Grid, rho0: &Field) -> Result<(Field, Option<alloc::string::String>)> {
    rho0.check(g)?;
    if let Some(c) = rho0.values.iter().position(|&v| v < 0.0) {
        return Err(Error::NegativeDensity { cell: c, value: rho0.values[c] });
    }
    let mass = integrate(g, rho0)?;
    let off = (mass - 1.0).abs();
    if off >= 1e-6 || !mass.is_finite() {
        return Err(Error::BadInitialMass { mass });
    }
    // a few ulps of mass defect are what normalizing in floating point leaves
    if off <= 1e-14 {
        return Ok((rho0.clone(), None));
    }
    let rho = rho0.map(|v| v / mass);
    Ok((rho, Some(alloc::format!("initial density renormalized (mass was {mass:.17e})"))))
}

/// Convenience wrapper building a [`Dynamics`] and stepping once.
pub fn step(g: &Grid, state: &SimState, ctrl: &StepControl, model: &Model) -> Result<SimState> {
    Dynamics::new(g, model)?.step(state, ctrl)
}

/// Convenience wrapper around [`Dynamics::evolve`].
pub fn evolve(
    g: &Grid,
    rho0: &Field,
    ctrl: &StepControl,
    model: &Model,
    t_end: f64,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    let opts = RecordOptions { record_every, ..RecordOptions::default() };
    Dynamics::new(g, model)?.evolve(rho0, ctrl, t_end, &opts)
}

/// Terminal density of a record, if snapshots were kept.
pub fn terminal_density(traj: &TrajectoryRecord) -> Option<&Snapshot> {
    traj.snapshots.last()
}
