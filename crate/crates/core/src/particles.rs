//! Overdamped Langevin particles without hydrodynamic interactions:
//!
//! `dX_i = -(grad V1(X_i) + 1/N sum_j grad V2(X_i - X_j)) dt + sqrt(2) dW_i`
//!
//! in a box with reflecting walls. Its one-body density follows the
//! mean-field equation with `Z1 = Z2 = 0`, which makes it an independent
//! oracle for the equilibrium and for the `Z = 0` dynamics.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::convolve::VectorTable;
use crate::grid::{Field, Grid};
use crate::math;
use crate::model::KernelSpec;
use crate::{Error, Result};

/// Positions (the second coordinate is unused in 1D).
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParticleEnsemble {
    pub step: usize,
    pub time: f64,
    pub rng_seed: u64,
    pub positions: Vec<[f64; 2]>,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// How the pair force `1/N sum_j grad V2(X_i - X_j)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PairForce {
    /// Direct `O(N^2)` sum.
    Exact,
    /// Cloud-in-cell deposit on a mesh with this many cells per axis, mesh
    /// convolution with `grad V2`, and interpolation back with the same
    /// weights. `O(N + cells^{2d})` per step.
    Mesh { cells: usize },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParticleConfig {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub seed: u64,
    /// Report the ensemble every `thin` steps.
    pub thin: usize,
    pub pair_force: PairForce,
}

impl Default for ParticleConfig {
    fn default() -> Self {
        Self { n: 10_000, dt: 1e-3, steps: 100_000, seed: 0, thin: 100, pair_force: PairForce::Mesh { cells: 128 } }
    }
}

/// Runs the simulation, returning the ensemble at step 0 and every `thin` steps.
pub fn simulate(domain: &Grid, v1: &KernelSpec, v2: &KernelSpec, cfg: &ParticleConfig) -> Result<Vec<ParticleEnsemble>> {
    let mut out = Vec::new();
    simulate_with(domain, v1, v2, cfg, |e| out.push(e.clone()))?;
    Ok(out)
}

/// Like [`simulate`] but hands each reported ensemble to `visit` instead of
/// storing it.
pub fn simulate_with(
    domain: &Grid,
    v1: &KernelSpec,
    v2: &KernelSpec,
    cfg: &ParticleConfig,
    mut visit: impl FnMut(&ParticleEnsemble),
) -> Result<()> {
    validate(domain, v1, v2, cfg)?;
    let dim = domain.dim();
    let l = domain.extent();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let positions = (0..cfg.n)
        .map(|_| {
            let x = l * rng.random::<f64>();
            let y = if dim == 2 { l * rng.random::<f64>() } else { 0.0 };
            [x, y]
        })
        .collect();
    let mut ens = ParticleEnsemble { step: 0, time: 0.0, rng_seed: cfg.seed, positions };
    let mesh = match cfg.pair_force {
        PairForce::Mesh { cells } if !v2.is_zero() => {
            let g = Grid::new(l, cells, dim)?;
            Some((g, VectorTable::gradient_of(&g, v2)?))
        }
        _ => None,
    };
    let noise = math::sqrt(2.0 * cfg.dt);
    let mut pair = vec![[0.0; 2]; cfg.n];
    visit(&ens);
    for step in 1..=cfg.steps {
        let t = (step - 1) as f64 * cfg.dt;
        if !v2.is_zero() {
            match &mesh {
                Some((g, table)) => mesh_force(g, table, &ens.positions, &mut pair)?,
                None => exact_force(v2, dim, &ens.positions, &mut pair)?,
            }
        }
        for (p, f2) in ens.positions.iter_mut().zip(&pair) {
            let f1 = v1.gradient(*p, dim, t)?;
            for k in 0..dim {
                let xi: f64 = rng.sample(StandardNormal);
                p[k] = reflect(p[k] - (f1[k] + f2[k]) * cfg.dt + noise * xi, l);
            }
        }
        ens.step = step;
        ens.time = step as f64 * cfg.dt;
        if step.is_multiple_of(cfg.thin) {
            visit(&ens);
        }
    }
    Ok(())
}

/// Mean-field pair force `1/N sum_j grad V2(X_i - X_j)` on every particle.
pub fn pair_forces(domain: &Grid, v2: &KernelSpec, method: PairForce, positions: &[[f64; 2]]) -> Result<Vec<[f64; 2]>> {
    let mut out = vec![[0.0; 2]; positions.len()];
    match method {
        PairForce::Exact => exact_force(v2, domain.dim(), positions, &mut out)?,
        PairForce::Mesh { cells } => {
            let g = Grid::new(domain.extent(), cells, domain.dim())?;
            mesh_force(&g, &VectorTable::gradient_of(&g, v2)?, positions, &mut out)?;
        }
    }
    Ok(out)
}

fn validate(domain: &Grid, v1: &KernelSpec, v2: &KernelSpec, cfg: &ParticleConfig) -> Result<()> {
    if cfg.n < 100 {
        return Err(Error::InvalidParameter("at least 100 particles are required".into()));
    }
    if !(cfg.dt > 0.0) || !cfg.dt.is_finite() || cfg.thin == 0 {
        return Err(Error::InvalidParameter("dt must be positive and thin at least 1".into()));
    }
    if let PairForce::Mesh { cells } = cfg.pair_force {
        if cells < 2 {
            return Err(Error::InvalidParameter("pair-force mesh needs at least 2 cells".into()));
        }
    }
    v1.validate()?;
    v2.validate_even()?;
    let curv = hessian_estimate(v1, domain, false)? + hessian_estimate(v2, domain, true)?;
    if cfg.dt * curv >= 0.5 {
        return Err(Error::InvalidParameter(alloc::format!(
            "dt * |Hess V| = {:.3} must be below 0.5",
            cfg.dt * curv
        )));
    }
    Ok(())
}

/// Sampled bound on the operator norm of the Hessian, by central
/// differences of the gradient at mesh points (or mesh offsets).
fn hessian_estimate(v: &KernelSpec, g: &Grid, offsets: bool) -> Result<f64> {
    if v.is_zero() {
        return Ok(0.0);
    }
    let dim = g.dim();
    let n = g.cells_per_axis();
    let h = g.spacing();
    let eps = 1e-4 * h;
    let coords: Vec<f64> = if offsets {
        (0..2 * n - 1).map(|k| (k as f64 - (n - 1) as f64) * h).collect()
    } else {
        (0..n).map(|k| (k as f64 + 0.5) * h).collect()
    };
    let ys: &[f64] = if dim == 2 { &coords } else { &[0.0] };
    let mut best: f64 = 0.0;
    for &x in &coords {
        for &y in ys {
            let mut frob = 0.0;
            for k in 0..dim {
                let mut p = [x, y];
                let mut m = [x, y];
                p[k] += eps;
                m[k] -= eps;
                let gp = v.gradient(p, dim, 0.0)?;
                let gm = v.gradient(m, dim, 0.0)?;
                for c in 0..dim {
                    let d = (gp[c] - gm[c]) / (2.0 * eps);
                    frob += d * d;
                }
            }
            best = best.max(math::sqrt(frob));
        }
    }
    let amp = v.modulation.map_or(1.0, |m| 1.0 + m.amplitude.abs());
    Ok(best * amp)
}

/// Folds a coordinate back into `[0, l]` (mirror walls).
pub fn reflect(x: f64, l: f64) -> f64 {
    if (0.0..=l).contains(&x) {
        return x;
    }
    let period = 2.0 * l;
    let mut y = x - period * math::floor(x / period);
    if y > l {
        y = period - y;
    }
    y.clamp(0.0, l)
}

/// Cloud-in-cell stencil of a coordinate: `(lower cell, weight of lower)`.
fn cic(x: f64, h: f64, n: usize) -> (usize, f64) {
    let s = x / h - 0.5;
    if s <= 0.0 {
        (0, 1.0)
    } else if s >= (n - 1) as f64 {
        (n - 2, 0.0)
    } else {
        let i = math::floor(s) as usize;
        let i = i.min(n - 2);
        (i, 1.0 - (s - i as f64))
    }
}

fn cic_weights(g: &Grid, p: [f64; 2], mut visit: impl FnMut(usize, f64)) {
    let n = g.cells_per_axis();
    let h = g.spacing();
    let (i, wx) = cic(p[0], h, n);
    if g.dim() == 1 {
        visit(i, wx);
        visit(i + 1, 1.0 - wx);
    } else {
        let (j, wy) = cic(p[1], h, n);
        for (di, a) in [(0, wx), (1, 1.0 - wx)] {
            for (dj, b) in [(0, wy), (1, 1.0 - wy)] {
                visit(g.cell_at(i + di, j + dj), a * b);
            }
        }
    }
}

fn mesh_force(g: &Grid, table: &VectorTable, pos: &[[f64; 2]], out: &mut [[f64; 2]]) -> Result<()> {
    let mut dens = vec![0.0; g.num_cells()];
    let w = 1.0 / (pos.len() as f64 * g.cell_volume());
    for p in pos {
        cic_weights(g, *p, |c, a| dens[c] += a * w);
    }
    let field = table.convolve(&Field::new(dens))?;
    for (p, o) in pos.iter().zip(out.iter_mut()) {
        let mut f = [0.0; 2];
        cic_weights(g, *p, |c, a| {
            f[0] += a * field.values[c][0];
            f[1] += a * field.values[c][1];
        });
        *o = f;
    }
    Ok(())
}

fn exact_force(v2: &KernelSpec, dim: usize, pos: &[[f64; 2]], out: &mut [[f64; 2]]) -> Result<()> {
    let n = pos.len() as f64;
    for (i, o) in out.iter_mut().enumerate() {
        let mut f = [0.0; 2];
        for q in pos {
            let gr = v2.gradient([pos[i][0] - q[0], pos[i][1] - q[1]], dim, 0.0)?;
            f[0] += gr[0];
            f[1] += gr[1];
        }
        *o = [f[0] / n, f[1] / n];
    }
    Ok(())
}

fn cell_of(g: &Grid, p: [f64; 2]) -> usize {
    let n = g.cells_per_axis();
    let idx = |x: f64| {
        let k = math::floor(x / g.spacing());
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(n - 1)
        }
    };
    if g.dim() == 1 {
        idx(p[0])
    } else {
        g.cell_at(idx(p[0]), idx(p[1]))
    }
}

/// Empirical density: cell counts over `N h^d`.
pub fn histogram(samples: &[[f64; 2]], g: &Grid) -> Field {
    let mut acc = HistogramAccumulator::new(g);
    acc.add(samples);
    acc.density()
}

/// Pools samples from several ensembles into one histogram.
#[derive(Debug, Clone)]
pub struct HistogramAccumulator {
    grid: Grid,
    counts: Vec<u64>,
    total: u64,
}

impl HistogramAccumulator {
    pub fn new(g: &Grid) -> Self {
        Self { grid: *g, counts: vec![0; g.num_cells()], total: 0 }
    }

    pub fn add(&mut self, samples: &[[f64; 2]]) {
        for p in samples {
            self.counts[cell_of(&self.grid, *p)] += 1;
        }
        self.total += samples.len() as u64;
    }

    pub fn samples(&self) -> u64 {
        self.total
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn density(&self) -> Field {
        let norm = 1.0 / (self.total.max(1) as f64 * self.grid.cell_volume());
        Field::new(self.counts.iter().map(|&c| c as f64 * norm).collect())
    }
}

/// Time-averaged histogram over ensembles with `time >= burn_in`.
pub fn averaged_histogram(
    domain: &Grid,
    v1: &KernelSpec,
    v2: &KernelSpec,
    cfg: &ParticleConfig,
    burn_in: f64,
    hist_grid: &Grid,
) -> Result<(Field, u64)> {
    let mut acc = HistogramAccumulator::new(hist_grid);
    simulate_with(domain, v1, v2, cfg, |e| {
        if e.time >= burn_in {
            acc.add(&e.positions);
        }
    })?;
    Ok((acc.density(), acc.samples()))
}
