//! Per-snapshot metrics and the decay-envelope check.

use alloc::string::String;
use alloc::vec::Vec;

use crate::dynamics::{Dynamics, SimState};
use crate::energy::EnergyBreakdown;
use crate::equilibrium::{RateAccumulator, RateNorms, RateReport};
use crate::grid::{integrate, l2_distance, vector_l1_norm, Field, VectorField};
use crate::nonlocal::{eigen_bounds, SpectralReport, MAX_DENSE_UNKNOWNS};
use crate::Result;

/// Column names of [`Row`], in output order.
pub const COLUMNS: [&str; 17] = [
    "t",
    "mass",
    "min_rho",
    "max_rho",
    "F_total",
    "F_entropy",
    "F_external",
    "F_interaction",
    "dissipation",
    "l2_dist_to_equilibrium",
    "flux_l1_norm",
    "mu_min",
    "mu_max",
    "contraction_margin",
    "r_t_running",
    "harnack_ratio",
    "flux_iterations",
];

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Row {
    pub t: f64,
    pub mass: f64,
    pub min_rho: f64,
    pub max_rho: f64,
    pub f: EnergyBreakdown,
    pub dissipation: f64,
    pub l2_dist_to_equilibrium: Option<f64>,
    pub flux_l1_norm: f64,
    pub mu_min: f64,
    pub mu_max: f64,
    pub contraction_margin: f64,
    /// Conservative `r_t` accumulated up to `t`, when `c_pw` is known.
    pub r_t_running: Option<f64>,
    /// `max rho / min rho` (infinite while some cell is empty).
    pub harnack_ratio: f64,
    pub flux_iterations: usize,
}

impl Row {
    /// Values in [`COLUMNS`] order; `None` marks an empty cell.
    pub fn values(&self) -> [Option<f64>; 17] {
        [
            Some(self.t),
            Some(self.mass),
            Some(self.min_rho),
            Some(self.max_rho),
            Some(self.f.total),
            Some(self.f.entropy),
            Some(self.f.external),
            Some(self.f.interaction),
            Some(self.dissipation),
            self.l2_dist_to_equilibrium,
            Some(self.flux_l1_norm),
            Some(self.mu_min),
            Some(self.mu_max),
            Some(self.contraction_margin),
            self.r_t_running,
            Some(self.harnack_ratio),
            Some(self.flux_iterations as f64),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Snapshot {
    pub t: f64,
    pub step: usize,
    pub rho: Field,
    pub flux: VectorField,
}

#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrajectoryRecord {
    pub rows: Vec<Row>,
    pub snapshots: Vec<Snapshot>,
    pub spectral: Vec<(f64, SpectralReport)>,
    pub rate: Option<RateReport>,
    pub warnings: Vec<String>,
}

impl TrajectoryRecord {
    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordOptions {
    /// Record a row every this many steps (and always at start and end).
    pub record_every: usize,
    /// Keep the density every this many rows; 0 keeps only the final one.
    pub snapshot_every: usize,
    /// Compute a full spectral report every this many rows; 0 never.
    pub spectral_every: usize,
    /// Reference `rho_inf` for the L2 distance column.
    pub equilibrium: Option<Field>,
    /// Poincaré constant; enables the running `r_t` column.
    pub c_pw: Option<f64>,
}

/// Builds rows for one run.
#[derive(Debug)]
pub struct Recorder<'a> {
    dynamics: &'a Dynamics,
    opts: RecordOptions,
    rate: Option<RateAccumulator>,
    record: TrajectoryRecord,
    last_state: Option<SimState>,
}

impl<'a> Recorder<'a> {
    pub fn new(dynamics: &'a Dynamics, opts: &RecordOptions) -> Result<Self> {
        if let Some(eq) = &opts.equilibrium {
            eq.check(dynamics.grid())?;
        }
        let norms = RateNorms::from_model(dynamics.grid(), dynamics.model());
        Ok(Self {
            dynamics,
            opts: opts.clone(),
            rate: opts.c_pw.map(|c| RateAccumulator::new(norms, c)),
            record: TrajectoryRecord::default(),
            last_state: None,
        })
    }

    pub fn warn(&mut self, w: String) {
        self.record.warnings.push(w);
    }

    pub fn record(&mut self, state: &SimState) -> Result<()> {
        let mut row = record(self.dynamics, state, self.opts.equilibrium.as_ref())?;
        if let Some(acc) = &mut self.rate {
            row.r_t_running = Some(acc.push(row.t, row.mu_min, row.mu_max, row.flux_l1_norm).r_t_conservative);
        }
        let k = self.record.rows.len();
        if self.opts.snapshot_every > 0 && k.is_multiple_of(self.opts.snapshot_every) {
            self.record.snapshots.push(snapshot(state));
        }
        if self.opts.spectral_every > 0 && k.is_multiple_of(self.opts.spectral_every) {
            let g = self.dynamics.grid();
            if g.num_cells() * g.dim() <= MAX_DENSE_UNKNOWNS {
                let mut rep = self.dynamics.hi().spectral_report(&state.d_current, &state.rho)?;
                rep.eigenvectors_h = None;
                self.record.spectral.push((state.time, rep));
            } else if self.record.spectral.is_empty() && !self.record.warnings.iter().any(|w| w.contains("spectral")) {
                self.record.warnings.push("mesh too large for spectral reports; skipped".into());
            }
        }
        self.record.rows.push(row);
        self.last_state = Some(state.clone());
        Ok(())
    }

    pub fn finish(mut self) -> TrajectoryRecord {
        if let Some(s) = &self.last_state {
            let keep_last = self.record.snapshots.last().is_none_or(|l| l.step != s.step_index || l.t != s.time);
            if keep_last {
                self.record.snapshots.push(snapshot(s));
            }
        }
        self.record.rate = self.rate.map(|a| a.report());
        self.record
    }
}

fn snapshot(s: &SimState) -> Snapshot {
    Snapshot { t: s.time, step: s.step_index, rho: s.rho.clone(), flux: s.flux.clone() }
}

/// One diagnostics row for a state (the running `r_t` is left empty).
pub fn record(dynamics: &Dynamics, state: &SimState, equilibrium: Option<&Field>) -> Result<Row> {
    let g = dynamics.grid();
    let pot = dynamics.potentials();
    let rho = &state.rho;
    let f = pot.compute_f(rho, state.time)?;
    let dissipation = pot.dissipation(rho, &state.flux, state.time)?;
    let (mu_min, mu_max) = eigen_bounds(&state.d_current);
    let (min_rho, max_rho) = (rho.min(), rho.max());
    Ok(Row {
        t: state.time,
        mass: integrate(g, rho)?,
        min_rho,
        max_rho,
        f,
        dissipation,
        l2_dist_to_equilibrium: equilibrium.map(|e| l2_distance(g, rho, e)),
        flux_l1_norm: vector_l1_norm(g, &state.flux),
        mu_min,
        mu_max,
        contraction_margin: 1.0 - mu_max * dynamics.hi().z2_sup_norm(),
        r_t_running: None,
        harnack_ratio: if min_rho > 0.0 { max_rho / min_rho } else { f64::INFINITY },
        flux_iterations: state.flux_iterations,
    })
}

/// Outcome of [`check_envelope`].
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvelopeCheck {
    pub ok: bool,
    /// Indices of rows above the envelope.
    pub violations: Vec<usize>,
    pub notice: Option<String>,
}

/// Relative slack allowed above the envelope.
pub const ENVELOPE_SLACK: f64 = 0.05;

/// Checks `||rho(t) - rho_inf||^2 <= ||rho_0 - rho_inf||^2 e^{-r_t}` on
/// every row, using each row's running `r_t`. The check is vacuous when the
/// rate is not positive.
pub fn check_envelope(traj: &TrajectoryRecord, rate: &RateReport) -> EnvelopeCheck {
    check_envelope_rows(&traj.rows, rate)
}

pub fn check_envelope_rows(rows: &[Row], rate: &RateReport) -> EnvelopeCheck {
    if !rate.positive {
        return EnvelopeCheck {
            ok: true,
            violations: Vec::new(),
            notice: Some("r_t is not positive; the decay bound has no content and was not checked".into()),
        };
    }
    let Some(d0) = rows.first().and_then(|r| r.l2_dist_to_equilibrium) else {
        return EnvelopeCheck { ok: false, violations: Vec::new(), notice: Some("no equilibrium distances recorded".into()) };
    };
    let e0 = d0 * d0;
    let mut violations = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        let ok = match (r.l2_dist_to_equilibrium, r.r_t_running) {
            (Some(d), Some(rt)) => d * d <= (1.0 + ENVELOPE_SLACK) * e0 * crate::math::exp(-rt),
            _ => false,
        };
        if !ok {
            violations.push(i);
        }
    }
    EnvelopeCheck { ok: violations.is_empty(), violations, notice: None }
}
