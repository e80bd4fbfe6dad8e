//! The `evolve`, `equilibrium` and `particles` runs behind the CLI.

use std::path::{Path, PathBuf};

use ddft_core::diagnostics::{check_envelope, EnvelopeCheck, RecordOptions, TrajectoryRecord};
use ddft_core::dynamics::Dynamics;
use ddft_core::energy::Potentials;
use ddft_core::equilibrium::{picard_solve, poincare_constant, solve_equilibrium, stationary_flux_check, EquilibriumResult, RateReport};
use ddft_core::grid::l1_distance;
use ddft_core::nonlocal::{HiOperator, SpectralReport};
use ddft_core::particles::{simulate_with, HistogramAccumulator, PairForce, ParticleConfig};
use ddft_core::{Error, Field, Grid};
use serde::Serialize;

use crate::config::{assumption_gate, ConfigError, GateReport, RunConfig};
use crate::output;

/// Why a command failed; decides the exit code.
#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("output error: {0:#}")]
    Output(anyhow::Error),
    #[error("{0} acceptance criteria failed")]
    Validation(usize),
}

impl CommandError {
    /// 1 for anything the user can fix in the inputs, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<anyhow::Error> for CommandError {
    fn from(e: anyhow::Error) -> Self {
        CommandError::Output(e)
    }
}

/// Core errors from bad parameters are config errors; the rest are numerical.
fn core_error(key: &str, e: Error) -> CommandError {
    match e {
        Error::InvalidGrid(_) | Error::InvalidKernel(_) | Error::InvalidParameter(_) | Error::BadInitialMass { .. } => {
            CommandError::Config(ConfigError::new(key, e.to_string()))
        }
        e => CommandError::Numerical(e),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfigEcho {
    pub config_echo: String,
    pub config_hash: String,
}

impl ConfigEcho {
    pub fn of(cfg: &RunConfig) -> Self {
        let text = cfg.to_text();
        ConfigEcho { config_hash: output::content_hash(&text), config_echo: text }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SnapshotEntry {
    pub file: String,
    pub t: f64,
    pub step: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralEntry {
    pub t: f64,
    pub report: SpectralReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReferenceSummary {
    pub iterations: usize,
    pub el_residual: f64,
    pub chemical_potential: f64,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunMetadata {
    pub program: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    #[serde(flatten)]
    pub echo: ConfigEcho,
    pub seed: u64,
    pub gate: Option<GateReport>,
    pub warnings: Vec<String>,
    pub equilibrium_reference: Option<ReferenceSummary>,
    pub poincare: Option<(f64, f64)>,
    pub rate: Option<RateReport>,
    pub envelope: Option<EnvelopeCheck>,
    pub spectral: Vec<SpectralEntry>,
    pub snapshots: Vec<SnapshotEntry>,
    pub error: Option<String>,
}

impl RunMetadata {
    fn new(command: &'static str, cfg: &RunConfig) -> Self {
        RunMetadata {
            program: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            echo: ConfigEcho::of(cfg),
            seed: cfg.seed,
            gate: None,
            warnings: Vec::new(),
            equilibrium_reference: None,
            poincare: None,
            rate: None,
            envelope: None,
            spectral: Vec::new(),
            snapshots: Vec::new(),
            error: None,
        }
    }
}

#[derive(Debug)]
pub struct EvolveOutput {
    pub trajectory: TrajectoryRecord,
    pub metadata: RunMetadata,
}

/// Runs the dynamics and writes `diagnostics.csv`, `snapshots/*.csv` and
/// `run.json` under `out`.
pub fn cmd_evolve(cfg: &RunConfig, out: &Path) -> Result<EvolveOutput, CommandError> {
    let g = cfg.grid();
    let rho0 = cfg.initial_density(&g)?;
    let gate = assumption_gate(cfg, &g, &rho0)?;
    let dynamics = Dynamics::new(&g, &cfg.model).map_err(|e| core_error("potentials", e))?;
    let mut meta = RunMetadata::new("evolve", cfg);
    meta.warnings.extend(gate.warnings.iter().cloned());
    meta.gate = Some(gate);

    let result = (|| -> Result<TrajectoryRecord, CommandError> {
        let mut equilibrium = None;
        if cfg.stepping.track_equilibrium {
            match solve_equilibrium(&g, &cfg.model.v1, &cfg.model.v2, &cfg.equilibrium) {
                Ok(eq) => {
                    meta.equilibrium_reference = Some(ReferenceSummary {
                        iterations: eq.iterations,
                        el_residual: eq.el_residual,
                        chemical_potential: eq.chemical_potential,
                    });
                    equilibrium = Some(eq.rho0);
                }
                Err(e) => meta.warnings.push(format!("WARNING: no equilibrium reference: {e}")),
            }
        }
        let c_pw = if cfg.stepping.rate {
            let (nu1, c) = poincare_constant(&g).map_err(CommandError::Numerical)?;
            meta.poincare = Some((nu1, c));
            Some(c)
        } else {
            None
        };
        let opts = RecordOptions {
            record_every: cfg.stepping.record_every,
            snapshot_every: cfg.stepping.snapshot_every,
            spectral_every: cfg.stepping.spectral_every,
            equilibrium,
            c_pw,
        };
        dynamics
            .evolve(&rho0, &cfg.stepping.control, cfg.stepping.t_end, &opts)
            .map_err(|e| core_error("stepping", e))
    })();

    let traj = match result {
        Ok(t) => t,
        Err(e) => {
            meta.error = Some(e.to_string());
            output::write_json(&out.join("run.json"), &meta)?;
            return Err(e);
        }
    };

    meta.warnings.extend(traj.warnings.iter().cloned());
    meta.rate = traj.rate;
    if let (Some(rate), Some(_)) = (&traj.rate, &meta.equilibrium_reference) {
        meta.envelope = Some(check_envelope(&traj, rate));
    }
    meta.spectral = traj.spectral.iter().map(|(t, r)| SpectralEntry { t: *t, report: r.clone() }).collect();

    output::write_diagnostics(&out.join("diagnostics.csv"), &traj)?;
    for (k, s) in traj.snapshots.iter().enumerate() {
        let file = format!("snapshots/snapshot_{k:05}.csv");
        output::write_field(&out.join(&file), &g, "rho", &s.rho, Some(&s.flux))?;
        meta.snapshots.push(SnapshotEntry { file, t: s.t, step: s.step });
    }
    output::write_json(&out.join("run.json"), &meta)?;
    Ok(EvolveOutput { trajectory: traj, metadata: meta })
}

/// Contents of `equilibrium.json`.
#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    #[serde(flatten)]
    pub echo: ConfigEcho,
    pub converged: bool,
    pub iterations: usize,
    pub residual_history: Vec<f64>,
    pub asymptotic_ratio: Option<f64>,
    pub contraction_flag: Option<bool>,
    pub el_residual: Option<f64>,
    pub chemical_potential_stddev: Option<f64>,
    pub chemical_potential: Option<f64>,
    pub final_damping: Option<f64>,
    pub stationary_flux_max: Option<f64>,
    pub nu1: Option<f64>,
    pub c_pw: Option<f64>,
    pub v2_sup_norm: f64,
    pub v2_small: bool,
    pub error: Option<String>,
}

/// Standard deviation of the cell values.
pub fn stddev(f: &Field) -> f64 {
    let n = f.values.len() as f64;
    let mean = f.values.iter().sum::<f64>() / n;
    (f.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Solves the self-consistency equation from the uniform density and writes
/// `equilibrium.json` and `rho0.csv`. Hitting the iteration cap is a
/// numerical failure, but the residual history is still written.
pub fn cmd_equilibrium(cfg: &RunConfig, out: &Path) -> Result<(EquilibriumReport, Option<EquilibriumResult>), CommandError> {
    let g = cfg.grid();
    let pot = Potentials::new(&g, &cfg.model.v1, &cfg.model.v2).map_err(|e| core_error("potentials", e))?;
    let v2_sup_norm = cfg.model.v2.sup_norm(&g, ddft_core::model::Region::Differences);
    let mut report = EquilibriumReport {
        echo: ConfigEcho::of(cfg),
        converged: false,
        iterations: 0,
        residual_history: Vec::new(),
        asymptotic_ratio: None,
        contraction_flag: None,
        el_residual: None,
        chemical_potential_stddev: None,
        chemical_potential: None,
        final_damping: None,
        stationary_flux_max: None,
        nu1: None,
        c_pw: None,
        v2_sup_norm,
        v2_small: v2_sup_norm <= 0.25,
        error: None,
    };
    let path = out.join("equilibrium.json");
    let res = match picard_solve(&pot, &Field::constant(&g, 1.0 / g.volume()), &cfg.equilibrium) {
        Ok(r) => r,
        Err(e) => {
            if let Error::MaxIterations { iterations, history, .. } = &e {
                report.iterations = *iterations;
                report.residual_history = history.clone();
            }
            report.error = Some(e.to_string());
            output::write_json(&path, &report)?;
            return Err(core_error("equilibrium", e));
        }
    };
    let hi = HiOperator::new(&g, &cfg.model.z1, &cfg.model.z2).map_err(|e| core_error("hi", e))?;
    let extra = (|| -> Result<_, Error> {
        let flux = stationary_flux_check(&pot, &hi, &res.rho0)?;
        let (nu1, c_pw) = poincare_constant(&g)?;
        let mu = pot.functional_derivative(&res.rho0, 0.0)?;
        Ok((flux, nu1, c_pw, stddev(&mu)))
    })();
    let (flux, nu1, c_pw, sd) = match extra {
        Ok(v) => v,
        Err(e) => {
            report.error = Some(e.to_string());
            output::write_json(&path, &report)?;
            return Err(CommandError::Numerical(e));
        }
    };
    report.converged = true;
    report.iterations = res.iterations;
    report.residual_history = res.residual_history.clone();
    report.asymptotic_ratio = res.asymptotic_ratio(10);
    report.contraction_flag = Some(res.contraction_flag);
    report.el_residual = Some(res.el_residual);
    report.chemical_potential_stddev = Some(sd);
    report.chemical_potential = Some(res.chemical_potential);
    report.final_damping = Some(res.final_damping);
    report.stationary_flux_max = Some(flux);
    report.nu1 = Some(nu1);
    report.c_pw = Some(c_pw);
    output::write_field(&out.join("rho0.csv"), &g, "rho", &res.rho0, None)?;
    output::write_json(&path, &report)?;
    Ok((report, Some(res)))
}

/// Averages `fine` (per-axis resolution `nf`) onto a mesh with `nc` cells per
/// axis; `nf` must be a multiple of `nc`.
pub fn coarsen(fine: &Field, nf: usize, nc: usize, dim: usize) -> Option<Field> {
    if nc == 0 || !nf.is_multiple_of(nc) {
        return None;
    }
    let r = nf / nc;
    let per = r.pow(dim as u32) as f64;
    let mut out = vec![0.0; nc.pow(dim as u32)];
    for (c, v) in fine.values.iter().enumerate() {
        let (i, j) = (c % nf, c / nf);
        let k = if dim == 1 { i / r } else { (j / r) * nc + i / r };
        out[k] += v / per;
    }
    Some(Field::new(out))
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub reference: PathBuf,
    pub l1: f64,
}

/// Contents of `particles.json`.
#[derive(Debug, Clone, Serialize)]
pub struct ParticlesReport {
    #[serde(flatten)]
    pub echo: ConfigEcho,
    pub seed: u64,
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub thin: usize,
    pub burn_in: f64,
    pub pair_force: String,
    pub samples: u64,
    pub histogram_cells: usize,
    /// L1 distance to the self-consistent equilibrium computed on the fly.
    pub l1_vs_equilibrium: Option<f64>,
    pub comparison: Option<Comparison>,
    pub warnings: Vec<String>,
}

/// Runs the particle oracle and writes `histogram.csv`, `particles.csv`
/// (final positions) and `particles.json`.
pub fn cmd_particles(cfg: &RunConfig, out: &Path, compare: Option<&Path>) -> Result<ParticlesReport, CommandError> {
    let reference = compare.map(Path::to_path_buf).or_else(|| cfg.oracle.reference.clone());
    if let Some(p) = &reference {
        if !p.is_file() {
            return Err(CommandError::Usage(format!("reference file {} does not exist", p.display())));
        }
    }
    let o = &cfg.oracle;
    let hist = Grid::new(cfg.domain.extent, o.histogram_cells, cfg.domain.dim).map_err(|e| core_error("particles.histogram_cells", e))?;
    let pcfg = ParticleConfig { n: o.n, dt: o.dt, steps: o.steps, seed: cfg.seed, thin: o.thin, pair_force: o.pair_force };
    let mut warnings = Vec::new();
    if !(cfg.model.z1.is_zero() && cfg.model.z2.is_zero()) {
        warnings.push("WARNING: the particle oracle has no hydrodynamic interactions; Z1 and Z2 are ignored".into());
    }
    let mut acc = HistogramAccumulator::new(&hist);
    let mut last = Vec::new();
    simulate_with(&hist, &cfg.model.v1, &cfg.model.v2, &pcfg, |e| {
        if e.time >= o.burn_in {
            acc.add(&e.positions);
        }
        last.clone_from(&e.positions);
    })
    .map_err(|e| core_error("particles", e))?;
    if acc.samples() == 0 {
        return Err(CommandError::Config(ConfigError::new("particles.burn_in", "no ensemble was recorded after the burn-in")));
    }
    let density = acc.density();

    // the equilibrium for the same potentials, on the config mesh when it refines the histogram
    let g = cfg.grid();
    let eq_grid = if g.cells_per_axis().is_multiple_of(o.histogram_cells) { g } else { hist };
    let l1_vs_equilibrium = match solve_equilibrium(&eq_grid, &cfg.model.v1, &cfg.model.v2, &cfg.equilibrium) {
        Ok(eq) => coarsen(&eq.rho0, eq_grid.cells_per_axis(), o.histogram_cells, hist.dim()).map(|c| l1_distance(&hist, &density, &c)),
        Err(e) => {
            warnings.push(format!("WARNING: no equilibrium for comparison: {e}"));
            None
        }
    };

    let comparison = match reference {
        None => None,
        Some(p) => {
            let values = output::read_column(&p, &["rho", "density"]).map_err(|e| CommandError::Usage(format!("{e:#}")))?;
            let n = values.len();
            let nf = (n as f64).powf(1.0 / hist.dim() as f64).round() as usize;
            let coarse = (nf.pow(hist.dim() as u32) == n)
                .then(|| coarsen(&Field::new(values), nf, o.histogram_cells, hist.dim()))
                .flatten()
                .ok_or_else(|| {
                    CommandError::Usage(format!(
                        "reference {} has {n} cells, which does not refine a {}-cell histogram",
                        p.display(),
                        o.histogram_cells
                    ))
                })?;
            Some(Comparison { l1: l1_distance(&hist, &density, &coarse), reference: p })
        }
    };

    output::write_histogram(&out.join("histogram.csv"), &hist, &density, acc.counts())?;
    output::write_positions(&out.join("particles.csv"), hist.dim(), &last)?;
    let report = ParticlesReport {
        echo: ConfigEcho::of(cfg),
        seed: cfg.seed,
        n: o.n,
        dt: o.dt,
        steps: o.steps,
        thin: o.thin,
        burn_in: o.burn_in,
        pair_force: match o.pair_force {
            PairForce::Exact => "exact".into(),
            PairForce::Mesh { cells } => format!("mesh:{cells}"),
        },
        samples: acc.samples(),
        histogram_cells: o.histogram_cells,
        l1_vs_equilibrium,
        comparison,
        warnings,
    };
    output::write_json(&out.join("particles.json"), &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coarsen_averages_blocks() {
        let f = Field::new((0..16).map(|v| v as f64).collect());
        assert_eq!(coarsen(&f, 16, 4, 1).unwrap().values, vec![1.5, 5.5, 9.5, 13.5]);
        let c = coarsen(&f, 4, 2, 2).unwrap();
        assert_eq!(c.values, vec![2.5, 4.5, 10.5, 12.5]);
        assert!(coarsen(&f, 16, 5, 1).is_none());
    }
}
