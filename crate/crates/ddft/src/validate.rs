//! Built-in acceptance suite.
//!
//! Each criterion runs a canned configuration and compares measured values
//! against fixed limits. A run can be told to corrupt one criterion's limits
//! (every comparison then fails) to prove the harness reports failures.

use std::f64::consts::PI;
use std::sync::OnceLock;
use std::time::Instant;

use ddft_core::diagnostics::{check_envelope, RecordOptions, TrajectoryRecord};
use ddft_core::dynamics::{Dynamics, StepControl};
use ddft_core::energy::Potentials;
use ddft_core::equilibrium::{picard_solve, poincare_constant, rate_estimate, solve_equilibrium, stationary_flux_check, PicardOptions, RateNorms};
use ddft_core::grid::{integrate, l1_distance, l2_distance};
use ddft_core::nonlocal::{flux_by_eigen_expansion, HiOperator};
use ddft_core::particles::{averaged_histogram, PairForce, ParticleConfig};
use ddft_core::{Field, Grid, KernelSpec, Model, TensorKernelSpec, VectorField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::commands::{coarsen, stddev};

pub struct Criterion {
    pub id: usize,
    pub name: &'static str,
    pub summary: &'static str,
}

pub const CRITERIA: [Criterion; 12] = [
    Criterion { id: 1, name: "mass conservation", summary: "1D N=256, HI on, 2000 steps at dt=1e-4: max |mass - 1| <= 1e-12" },
    Criterion { id: 2, name: "positivity", summary: "same model from a density with one empty cell: min rho > 0 after every step" },
    Criterion { id: 3, name: "free-energy decay", summary: "F never rises by more than 1e-10(1+|F|); dissipation within 10% of dF/dt" },
    Criterion { id: 4, name: "heat-equation rate", summary: "pure diffusion: log-L2 slope within 5% of -2 pi^2; envelope with r_t = pi^2 t holds" },
    Criterion { id: 5, name: "equilibrium flux", summary: "Picard at tol 1e-12: std(dF/drho) <= 1e-6 and max |a| <= 1e-8" },
    Criterion { id: 6, name: "HI-independent equilibrium", summary: "runs with and without HI to t=5 agree within 1e-6 L2, and with Picard within 1e-5" },
    Criterion { id: 7, name: "Picard contraction", summary: "||V2|| = 0.2: asymptotic residual ratio <= 0.83; 5 random starts agree within 1e-8 L1" },
    Criterion { id: 8, name: "flux solver agreement", summary: "Neumann, dense and eigen-expansion flux agree within 1e-8 on 20 states, N=128" },
    Criterion { id: 9, name: "operator structure", summary: "weighted symmetry defect <= 1e-12; |gamma_k| <= mu_max ||Z2|| + 1e-10" },
    Criterion { id: 10, name: "flux variational principle", summary: "J[a*] < J[a* + 1e-3 w] for 50 random w" },
    Criterion { id: 11, name: "particle cross-check", summary: "1e4 particles, 1e5 steps: histogram vs Picard density, L1 <= 0.05" },
    Criterion { id: 12, name: "functional derivative", summary: "central differences of F vs <dF/drho, w> for 20 mean-zero w at eps=1e-5: rel. error <= 1e-3" },
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Gt,
}

#[derive(Debug, Clone)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub relation: Relation,
    pub limit: f64,
    pub passed: bool,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub error: Option<String>,
    pub seconds: f64,
}

impl Outcome {
    /// One table line: status, id, name, then every comparison.
    pub fn line(&self) -> String {
        let status = if self.passed { "PASS" } else { "FAIL" };
        let mut s = format!("{status}  C{:02} {:<27}", self.id, self.name);
        let parts: Vec<String> = self
            .checks
            .iter()
            .map(|c| {
                let op = match c.relation {
                    Relation::Le => "<=",
                    Relation::Gt => ">",
                };
                let mark = if c.passed { "" } else { " !" };
                format!("{} = {:.3e} ({op} {:.1e}){mark}", c.label, c.value, c.limit)
            })
            .collect();
        s.push_str(&parts.join("; "));
        if let Some(e) = &self.error {
            s.push_str(&format!(" error: {e}"));
        }
        s.push_str(&format!("  [{:.1}s]", self.seconds));
        s
    }
}

/// Collects comparisons. When corrupted every limit is replaced by one that
/// cannot be met.
struct Checker {
    corrupt: bool,
    checks: Vec<Check>,
    notes: Vec<String>,
}

impl Checker {
    fn push(&mut self, label: &str, value: f64, relation: Relation, limit: f64) {
        let limit = match (self.corrupt, relation) {
            (false, _) => limit,
            (true, Relation::Gt) => f64::INFINITY,
            (true, _) => f64::NEG_INFINITY,
        };
        let passed = match relation {
            Relation::Le => value <= limit,
            Relation::Gt => value > limit,
        };
        self.checks.push(Check { label: label.into(), value, relation, limit, passed });
    }

    fn le(&mut self, label: &str, value: f64, limit: f64) {
        self.push(label, value, Relation::Le, limit)
    }

    fn gt(&mut self, label: &str, value: f64, bound: f64) {
        self.push(label, value, Relation::Gt, bound)
    }

    fn note(&mut self, s: String) {
        self.notes.push(s);
    }
}

type Res = Result<(), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn grid(n: usize) -> Grid {
    Grid::new(1.0, n, 1).expect("valid grid")
}

fn normalized(g: &Grid, f: Field) -> Field {
    let m = integrate(g, &f).expect("finite");
    f.map(|v| v / m)
}

fn iso(amplitude: f64, width: f64) -> TensorKernelSpec {
    TensorKernelSpec::isotropic(KernelSpec::gaussian(amplitude, width))
}

/// Trap, weak Gaussian pair potential (sup 0.2) and Gaussian HI kernels.
/// `D = (1 + Z1 * rho)^-1` has `mu_max <= 1`, so the contraction margin is
/// at least `1 - 0.5 = 0.5`.
fn hi_model() -> Model {
    Model { v1: KernelSpec::harmonic(0.5, 4.0), v2: KernelSpec::gaussian(0.2, 0.2), z1: iso(0.3, 0.2), z2: iso(0.5, 0.2) }
}

fn smooth_start(g: &Grid) -> Field {
    normalized(g, Field::from_fn(g, |x| 1.0 + 0.5 * (PI * x[0]).cos() + 0.2 * (3.0 * PI * x[0]).sin()))
}

fn random_density(g: &Grid, rng: &mut ChaCha8Rng) -> Field {
    normalized(g, Field::new((0..g.num_cells()).map(|_| rng.random_range(0.2..1.8)).collect()))
}

const LONG_STEPS: usize = 2000;
const LONG_DT: f64 = 1e-4;

fn long_run(zero_cell: bool) -> Result<TrajectoryRecord, String> {
    let g = grid(256);
    let mut rho0 = smooth_start(&g);
    if zero_cell {
        rho0.values[100] = 0.0;
        rho0 = normalized(&g, rho0);
    }
    let dynm = Dynamics::new(&g, &hi_model()).map_err(err)?;
    let ctrl = StepControl { dt: LONG_DT, ..StepControl::default() };
    let opts = RecordOptions { record_every: 1, ..RecordOptions::default() };
    dynm.evolve(&rho0, &ctrl, LONG_STEPS as f64 * LONG_DT, &opts).map_err(err)
}

fn smooth_run() -> Result<&'static TrajectoryRecord, String> {
    static RUN: OnceLock<Result<TrajectoryRecord, String>> = OnceLock::new();
    RUN.get_or_init(|| long_run(false)).as_ref().map_err(Clone::clone)
}

fn c1(ck: &mut Checker) -> Res {
    let traj = smooth_run()?;
    let drift = traj.rows.iter().map(|r| (r.mass - 1.0).abs()).fold(0.0, f64::max);
    let margin = traj.rows.iter().map(|r| r.contraction_margin).fold(f64::INFINITY, f64::min);
    ck.le("max|mass-1|", drift, 1e-12);
    ck.note(format!("{} steps; minimum contraction margin {margin:.3}", traj.rows.len() - 1));
    ck.le("|rows - 2001|", (traj.rows.len() as f64 - (LONG_STEPS + 1) as f64).abs(), 0.0);
    ck.gt("min contraction margin", margin, 0.3 - 1e-15);
    Ok(())
}

fn c2(ck: &mut Checker) -> Res {
    let traj = long_run(true)?;
    let first = traj.rows.first().ok_or("empty run")?;
    ck.note(format!("initial min rho {:.1e}", first.min_rho));
    let min = traj.rows.iter().skip(1).map(|r| r.min_rho).fold(f64::INFINITY, f64::min);
    ck.le("initial min rho", first.min_rho, 0.0);
    ck.gt("min rho over steps >= 1", min, 0.0);
    Ok(())
}

fn c3(ck: &mut Checker) -> Res {
    let traj = smooth_run()?;
    let rows = &traj.rows;
    let mut worst_rise = f64::NEG_INFINITY;
    let mut worst_rel = 0.0f64;
    let mut compared = 0usize;
    for w in rows.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let df = b.f.total - a.f.total;
        worst_rise = worst_rise.max(df / (1.0 + a.f.total.abs()));
        let quotient = df / (b.t - a.t);
        if quotient.abs() > 1e-6 {
            let mid = 0.5 * (a.dissipation + b.dissipation);
            worst_rel = worst_rel.max((mid - quotient).abs() / quotient.abs());
            compared += 1;
        }
    }
    ck.le("max dF/(1+|F|)", worst_rise, 1e-10);
    ck.le("dissipation vs dF/dt rel. err", worst_rel, 0.1);
    ck.gt("steps compared", compared as f64, 0.0);
    Ok(())
}

fn c4(ck: &mut Checker) -> Res {
    let g = grid(256);
    let dynm = Dynamics::new(&g, &Model::free()).map_err(err)?;
    let rho0 = Field::from_fn(&g, |x| 1.0 + 0.1 * (PI * x[0]).cos());
    let c_pw = 1.0 / PI;
    let opts = RecordOptions { record_every: 10, equilibrium: Some(Field::constant(&g, 1.0)), c_pw: Some(c_pw), ..Default::default() };
    let traj = dynm.evolve(&rho0, &StepControl { dt: 1e-4, ..StepControl::default() }, 0.1, &opts).map_err(err)?;
    let pts: Vec<(f64, f64)> = traj
        .rows
        .iter()
        .filter_map(|r| r.l2_dist_to_equilibrium.map(|d| (r.t, (d * d).ln())))
        .collect();
    let n = pts.len() as f64;
    let (mt, my) = (pts.iter().map(|p| p.0).sum::<f64>() / n, pts.iter().map(|p| p.1).sum::<f64>() / n);
    let slope = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum::<f64>() / pts.iter().map(|p| (p.0 - mt).powi(2)).sum::<f64>();
    let target = -2.0 * PI * PI;
    ck.note(format!("fitted slope {slope:.4} vs {target:.4}"));
    ck.le("|slope/(-2pi^2) - 1|", (slope / target - 1.0).abs(), 0.05);
    let rate = rate_estimate(&traj, &RateNorms::default(), c_pw).map_err(err)?;
    let last = traj.rows.last().ok_or("empty run")?;
    ck.le("|r_t - pi^2 t|", (rate.r_t_conservative - PI * PI * last.t).abs(), 1e-9);
    let env = check_envelope(&traj, &rate);
    if !env.ok && env.violations.is_empty() {
        return Err(env.notice.unwrap_or_default());
    }
    ck.le("envelope violations", env.violations.len() as f64, 0.0);
    Ok(())
}

fn c5(ck: &mut Checker) -> Res {
    let g = grid(256);
    let m = hi_model();
    let pot = Potentials::new(&g, &m.v1, &m.v2).map_err(err)?;
    let res = picard_solve(&pot, &Field::constant(&g, 1.0), &PicardOptions { tol: 1e-12, ..Default::default() }).map_err(err)?;
    let hi = HiOperator::new(&g, &m.z1, &m.z2).map_err(err)?;
    let mu = pot.functional_derivative(&res.rho0, 0.0).map_err(err)?;
    ck.note(format!("{} Picard iterations", res.iterations));
    ck.le("std(dF/drho)", stddev(&mu), 1e-6);
    ck.le("max|a|", stationary_flux_check(&pot, &hi, &res.rho0).map_err(err)?, 1e-8);
    Ok(())
}

fn c6(ck: &mut Checker) -> Res {
    let g = grid(128);
    let with = Model { v1: KernelSpec::harmonic(0.5, 1.0), v2: KernelSpec::gaussian(0.2, 0.3), z1: iso(0.3, 0.2), z2: iso(0.5, 0.2) };
    let without = with.without_hi();
    let eq = solve_equilibrium(&g, &with.v1, &with.v2, &PicardOptions { tol: 1e-13, ..Default::default() }).map_err(err)?;
    let (_, c_pw) = poincare_constant(&g).map_err(err)?;
    let rho0 = smooth_start(&g);
    let ctrl = StepControl { dt: 1e-3, ..StepControl::default() };
    let opts = RecordOptions { record_every: 100, equilibrium: Some(eq.rho0.clone()), c_pw: Some(c_pw), ..Default::default() };
    let mut finals = Vec::new();
    for (label, model) in [("HI", &with), ("no HI", &without)] {
        let traj = Dynamics::new(&g, model).map_err(err)?.evolve(&rho0, &ctrl, 5.0, &opts).map_err(err)?;
        let rate = traj.rate.ok_or("no rate report")?;
        ck.note(format!("{label}: r_t = {:.3} at t = {}", rate.r_t_conservative, rate.t));
        ck.gt(&format!("r_t ({label})"), rate.r_t_conservative, 0.0);
        finals.push(traj.snapshots.last().ok_or("no snapshot")?.rho.clone());
    }
    ck.le("L2(HI, no HI)", l2_distance(&g, &finals[0], &finals[1]), 1e-6);
    ck.le("L2(HI, Picard)", l2_distance(&g, &finals[0], &eq.rho0), 1e-5);
    ck.le("L2(no HI, Picard)", l2_distance(&g, &finals[1], &eq.rho0), 1e-5);
    Ok(())
}

fn c7(ck: &mut Checker) -> Res {
    let g = grid(128);
    let (v1, v2) = (KernelSpec::harmonic(0.5, 4.0), KernelSpec::gaussian(0.2, 0.2));
    let pot = Potentials::new(&g, &v1, &v2).map_err(err)?;
    let opts = PicardOptions { tol: 1e-13, ..Default::default() };
    let base = solve_equilibrium(&g, &v1, &v2, &opts).map_err(err)?;
    let ratio = base.asymptotic_ratio(10).ok_or("too few iterations for a ratio")?;
    ck.note(format!("{} iterations; ||V2|| = {}", base.iterations, pot.v2_sup_norm()));
    ck.le("asymptotic ratio", ratio, 0.83);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..5 {
        let res = picard_solve(&pot, &random_density(&g, &mut rng), &opts).map_err(err)?;
        worst = worst.max(l1_distance(&g, &res.rho0, &base.rho0));
    }
    ck.le("max L1 between starts", worst, 1e-8);
    Ok(())
}

fn relative(a: &VectorField, b: &VectorField) -> f64 {
    let d: f64 = a.values.iter().zip(&b.values).map(|(x, y)| (x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sum();
    let n: f64 = b.values.iter().map(|y| y[0] * y[0] + y[1] * y[1]).sum();
    (d / n).sqrt()
}

/// Twenty random positive unit-mass densities with their `D` tensors.
fn random_states() -> (Grid, HiOperator, Potentials, Vec<Field>) {
    let g = grid(128);
    let m = hi_model();
    let hi = HiOperator::new(&g, &iso(0.4, 0.25), &iso(0.6, 0.2)).expect("valid kernels");
    let pot = Potentials::new(&g, &m.v1, &m.v2).expect("valid potentials");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let states = (0..20).map(|_| random_density(&g, &mut rng)).collect();
    (g, hi, pot, states)
}

fn c8(ck: &mut Checker) -> Res {
    let (g, hi, pot, states) = random_states();
    let (mut worst, mut fallbacks) = (0.0f64, 0usize);
    for rho in &states {
        let d = hi.assemble_d(rho).map_err(err)?;
        let rhs = pot.thermodynamic_force(rho, 0.0).map_err(err)?.scale(-1.0);
        let it = hi.solve_flux(&d, rho, &rhs, 1e-14, 1000).map_err(err)?;
        fallbacks += it.direct as usize;
        let dense = hi.solve_flux_dense(&d, rho, &rhs).map_err(err)?;
        let rep = hi.spectral_report(&d, rho).map_err(err)?;
        let eig = flux_by_eigen_expansion(&g, &rep, rho, &rhs).map_err(err)?;
        worst = worst.max(relative(&it.flux, &dense)).max(relative(&eig, &dense)).max(relative(&it.flux, &eig));
    }
    ck.le("max pairwise rel. diff", worst, 1e-8);
    ck.le("Neumann fallbacks to dense", fallbacks as f64, 0.0);
    Ok(())
}

fn c9(ck: &mut Checker) -> Res {
    let (_, hi, _, states) = random_states();
    let (mut defect, mut excess) = (0.0f64, f64::NEG_INFINITY);
    for rho in &states {
        let d = hi.assemble_d(rho).map_err(err)?;
        let rep = hi.spectral_report(&d, rho).map_err(err)?;
        defect = defect.max(rep.symmetry_defect);
        let bound = rep.mu_max * hi.z2_sup_norm();
        for gm in &rep.eigenvalues_gamma {
            excess = excess.max(gm.abs() - bound);
        }
    }
    ck.le("symmetry defect", defect, 1e-12);
    ck.le("max |gamma| - mu_max||Z2||", excess, 1e-10);
    Ok(())
}

fn c10(ck: &mut Checker) -> Res {
    let (g, hi, pot, states) = random_states();
    let rho = &states[0];
    let d = hi.assemble_d(rho).map_err(err)?;
    // the minimizer of J solves H a = rho grad(dF/drho)
    let f = pot.thermodynamic_force(rho, 0.0).map_err(err)?;
    let a = hi.solve_flux(&d, rho, &f, 1e-14, 1000).map_err(err)?.flux;
    let j0 = pot.flux_objective_j(&hi, &d, rho, &a, 0.0).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let w = VectorField::new((0..g.num_cells()).map(|_| [rng.random_range(-1.0..1.0), 0.0]).collect());
        let j = pot.flux_objective_j(&hi, &d, rho, &a.add(&w.scale(1e-3)), 0.0).map_err(err)?;
        worst = worst.min(j - j0);
    }
    ck.note(format!("J[a*] = {j0:.6e}"));
    ck.gt("min J[a*+eps w] - J[a*]", worst, 0.0);
    Ok(())
}

fn c11(ck: &mut Checker) -> Res {
    let (v1, v2) = (KernelSpec::harmonic(0.5, 4.0), KernelSpec::gaussian(0.2, 0.2));
    let fine = grid(256);
    let hist = grid(32);
    let cfg = ParticleConfig { n: 10_000, dt: 1e-4, steps: 100_000, seed: 11, thin: 100, pair_force: PairForce::Mesh { cells: 128 } };
    let burn_in = 1.0;
    let (density, samples) = averaged_histogram(&hist, &v1, &v2, &cfg, burn_in, &hist).map_err(err)?;
    let eq = solve_equilibrium(&fine, &v1, &v2, &PicardOptions::default()).map_err(err)?;
    let reference = coarsen(&eq.rho0, 256, 32, 1).ok_or("bad coarsening")?;
    ck.note(format!("{samples} pooled samples after t = {burn_in}"));
    ck.le("L1(histogram, Picard)", l1_distance(&hist, &density, &reference), 0.05);
    Ok(())
}

fn c12(ck: &mut Checker) -> Res {
    let g = grid(256);
    let m = hi_model();
    let pot = Potentials::new(&g, &m.v1, &m.v2).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let rho = random_density(&g, &mut rng);
    let mu = pot.functional_derivative(&rho, 0.0).map_err(err)?;
    let eps = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut w: Vec<f64> = (0..g.num_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        w.iter_mut().for_each(|x| *x -= mean);
        let shifted = |s: f64| Field::new(rho.values.iter().zip(&w).map(|(a, b)| a + s * b).collect());
        let fp = pot.compute_f(&shifted(eps), 0.0).map_err(err)?.total;
        let fm = pot.compute_f(&shifted(-eps), 0.0).map_err(err)?.total;
        let fd = (fp - fm) / (2.0 * eps);
        let exact: f64 = mu.values.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() * g.cell_volume();
        worst = worst.max((fd - exact).abs() / exact.abs());
    }
    ck.le("max rel. error", worst, 1e-3);
    Ok(())
}

/// Runs one criterion. `corrupt` replaces its limits with unreachable ones.
pub fn run_criterion(id: usize, corrupt: bool) -> Option<Outcome> {
    let crit = CRITERIA.iter().find(|c| c.id == id)?;
    let f: fn(&mut Checker) -> Res = match id {
        1 => c1,
        2 => c2,
        3 => c3,
        4 => c4,
        5 => c5,
        6 => c6,
        7 => c7,
        8 => c8,
        9 => c9,
        10 => c10,
        11 => c11,
        12 => c12,
        _ => return None,
    };
    let start = Instant::now();
    let mut ck = Checker { corrupt, checks: Vec::new(), notes: Vec::new() };
    let error = f(&mut ck).err();
    let passed = error.is_none() && !ck.checks.is_empty() && ck.checks.iter().all(|c| c.passed);
    Some(Outcome {
        id,
        name: crit.name,
        passed,
        checks: ck.checks,
        notes: ck.notes,
        error,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, Default)]
pub struct SuiteOptions {
    /// Criterion ids to run; all when empty.
    pub only: Vec<usize>,
    /// Criterion whose limits are corrupted (test mode).
    pub corrupt: Option<usize>,
    /// Worker threads; criteria are independent, so results do not depend on it.
    pub threads: usize,
}

pub fn run_suite(opts: &SuiteOptions) -> Vec<Outcome> {
    let ids: Vec<usize> = CRITERIA.iter().map(|c| c.id).filter(|id| opts.only.is_empty() || opts.only.contains(id)).collect();
    let threads = opts.threads.max(1).min(ids.len().max(1));
    let run = |id: usize| run_criterion(id, opts.corrupt == Some(id)).expect("known id");
    if threads == 1 {
        return ids.into_iter().map(run).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut results: Vec<Option<Outcome>> = vec![None; ids.len()];
    let slots = std::sync::Mutex::new(&mut results);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let k = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if k >= ids.len() {
                    break;
                }
                let out = run(ids[k]);
                slots.lock().expect("no panics while holding the lock")[k] = Some(out);
            });
        }
    });
    results.into_iter().map(|o| o.expect("every criterion ran")).collect()
}

pub fn list() -> String {
    CRITERIA.iter().map(|c| format!("C{:02} {:<27} {}\n", c.id, c.name, c.summary)).collect()
}
