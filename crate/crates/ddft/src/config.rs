//! Run configuration.
//!
//! The text format is line oriented: `[section]` headers, `key = value`
//! lines, `#` comments. Kernels are spec strings (see [`crate::kernel`]).
//! A JSON document with the same sections and keys is accepted too:
//!
//! ```text
//! [domain]
//! L = 1.0
//! N = 256
//! d = 1
//!
//! [initial]
//! kind = cosine        # uniform | cosine | gaussian | mixture | file
//! amplitude = 0.1
//!
//! [potentials]
//! V1 = harmonic:stiffness=4,center=0.5
//! V2 = gaussian:amplitude=0.2,width=0.2
//!
//! [hi]
//! Z1 = gaussian:amplitude=0.3,width=0.2
//! Z2 = gaussian:amplitude=0.5,width=0.2
//!
//! [stepping]
//! dt = 1e-4
//! t_end = 0.2
//! ```
//!
//! [`RunConfig::to_text`] writes every field back; parsing that echo yields
//! an identical config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ddft_core::dynamics::{Freezing, Scheme, StepControl};
use ddft_core::equilibrium::PicardOptions;
use ddft_core::grid::integrate;
use ddft_core::model::Region;
use ddft_core::nonlocal::{eigen_bounds, HiOperator};
use ddft_core::particles::PairForce;
use ddft_core::{Field, Grid, Model};
use serde::Serialize;

use crate::kernel::{format_kernel, format_tensor_kernel, parse_kernel, parse_tensor_kernel};

/// A config problem, tied to the `section.key` (or line) it came from.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("config error at `{key}`: {message}")]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(key: impl Into<String>, message: impl Into<String>) -> Self {
        Self { key: key.into(), message: message.into() }
    }
}

type Section = BTreeMap<String, String>;

/// Sections of untyped `key = value` pairs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    sections: BTreeMap<String, Section>,
}

impl RawConfig {
    pub fn parse_text(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        let mut current: Option<String> = None;
        for (i, line) in text.lines().enumerate() {
            let at = || format!("line {}", i + 1);
            let line = match line.find('#') {
                Some(p) => &line[..p],
                None => line,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| ConfigError::new(at(), "unterminated section header"))?
                    .trim();
                if name.is_empty() {
                    return Err(ConfigError::new(at(), "empty section name"));
                }
                if raw.sections.contains_key(name) {
                    return Err(ConfigError::new(name, "section given twice"));
                }
                raw.sections.insert(name.to_string(), Section::new());
                current = Some(name.to_string());
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::new(at(), format!("expected `key = value`, got `{line}`")))?;
            let section = current.as_ref().ok_or_else(|| ConfigError::new(at(), "key outside of any section"))?;
            let key = k.trim();
            if key.is_empty() {
                return Err(ConfigError::new(at(), "empty key"));
            }
            let entries = raw.sections.get_mut(section).expect("section exists");
            if entries.insert(key.to_string(), v.trim().to_string()).is_some() {
                return Err(ConfigError::new(format!("{section}.{key}"), "key given twice"));
            }
        }
        Ok(raw)
    }

    pub fn parse_json(text: &str) -> Result<Self, ConfigError> {
        let doc: serde_json::Value =
            serde_json::from_str(text).map_err(|e| ConfigError::new(format!("line {}", e.line()), e.to_string()))?;
        let top = doc.as_object().ok_or_else(|| ConfigError::new("<root>", "expected a JSON object of sections"))?;
        let mut raw = RawConfig::default();
        for (name, body) in top {
            let obj = body.as_object().ok_or_else(|| ConfigError::new(name.as_str(), "section must be a JSON object"))?;
            let mut section = Section::new();
            for (key, v) in obj {
                let at = format!("{name}.{key}");
                section.insert(key.clone(), json_scalar(v, &at)?);
            }
            raw.sections.insert(name.clone(), section);
        }
        Ok(raw)
    }

    /// Picks the reader from the content: JSON if it starts with `{`.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        if text.trim_start().starts_with('{') {
            Self::parse_json(text)
        } else {
            Self::parse_text(text)
        }
    }
}

fn json_scalar(v: &serde_json::Value, at: &str) -> Result<String, ConfigError> {
    use serde_json::Value;
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        Value::Bool(b) => Ok(b.to_string()),
        Value::Array(items) => {
            let parts = items.iter().map(|x| json_scalar(x, at)).collect::<Result<Vec<_>, _>>()?;
            Ok(parts.join(", "))
        }
        _ => Err(ConfigError::new(at, "expected a string, number, boolean or list")),
    }
}

/// Typed access that records which keys were consumed.
struct Reader {
    sections: BTreeMap<String, Section>,
}

impl Reader {
    fn take(&mut self, section: &str, key: &str) -> Option<String> {
        self.sections.get_mut(section).and_then(|s| s.remove(key))
    }

    fn parsed<T: std::str::FromStr>(&mut self, section: &str, key: &str, what: &str) -> Result<Option<T>, ConfigError> {
        match self.take(section, key) {
            None => Ok(None),
            Some(v) => v
                .parse::<T>()
                .map(Some)
                .map_err(|_| ConfigError::new(format!("{section}.{key}"), format!("`{v}` is not {what}"))),
        }
    }

    fn f64_or(&mut self, section: &str, key: &str, default: f64) -> Result<f64, ConfigError> {
        let v = self.parsed::<f64>(section, key, "a number")?.unwrap_or(default);
        if !v.is_finite() {
            return Err(ConfigError::new(format!("{section}.{key}"), "must be finite"));
        }
        Ok(v)
    }

    fn usize_or(&mut self, section: &str, key: &str, default: usize) -> Result<usize, ConfigError> {
        Ok(self.parsed::<usize>(section, key, "a nonnegative integer")?.unwrap_or(default))
    }

    fn bool_or(&mut self, section: &str, key: &str, default: bool) -> Result<bool, ConfigError> {
        Ok(self.parsed::<bool>(section, key, "`true` or `false`")?.unwrap_or(default))
    }

    fn leftovers(&self) -> Result<(), ConfigError> {
        for (name, entries) in &self.sections {
            if !SECTIONS.contains(&name.as_str()) {
                return Err(ConfigError::new(name.as_str(), "unknown section"));
            }
            if let Some(k) = entries.keys().next() {
                return Err(ConfigError::new(format!("{name}.{k}"), "unknown key"));
            }
        }
        Ok(())
    }
}

const SECTIONS: [&str; 9] = ["domain", "initial", "potentials", "hi", "stepping", "equilibrium", "particles", "output", "run"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainConfig {
    /// Side length `L` of `[0, L]^d`.
    pub extent: f64,
    /// Cells per axis.
    pub cells: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub center: [f64; 2],
    pub width: f64,
}

/// Shape of the initial density before normalization to unit mass.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialShape {
    Uniform,
    /// `1 + amplitude * cos(mode * pi * x / L)` (along the first axis).
    Cosine { amplitude: f64, mode: usize },
    Gaussian { center: [f64; 2], width: f64 },
    Mixture { components: Vec<MixtureComponent> },
    /// CSV with a `rho` column (any other columns are ignored), one row per cell.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialDensity {
    pub shape: InitialShape,
    /// Cells forced to zero before normalizing.
    pub zero_cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteppingConfig {
    #[serde(skip)]
    pub control: StepControl,
    pub t_end: f64,
    pub record_every: usize,
    pub snapshot_every: usize,
    pub spectral_every: usize,
    /// Compute the Poincaré constant and the running decay exponent.
    pub rate: bool,
    /// Solve for the equilibrium first and record the L2 distance to it.
    pub track_equilibrium: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleConfig {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub thin: usize,
    pub burn_in: f64,
    #[serde(skip)]
    pub pair_force: PairForce,
    pub histogram_cells: usize,
    /// PDE equilibrium to compare the histogram against.
    pub reference: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub domain: DomainConfig,
    pub initial: InitialDensity,
    pub model: Model,
    pub stepping: SteppingConfig,
    pub equilibrium: PicardOptions,
    pub oracle: OracleConfig,
    pub output: PathBuf,
    pub seed: u64,
}

fn parse_scheme(s: &str) -> Option<Scheme> {
    match s {
        "semi_implicit_cc" => Some(Scheme::SemiImplicitCc),
        "explicit_heun" => Some(Scheme::ExplicitHeun),
        _ => None,
    }
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::SemiImplicitCc => "semi_implicit_cc",
        Scheme::ExplicitHeun => "explicit_heun",
    }
}

fn freezing_name(f: Freezing) -> &'static str {
    match f {
        Freezing::Lagged => "lagged",
        Freezing::Synchronized => "synchronized",
    }
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str, what: &str) -> Result<Vec<T>, ConfigError> {
    s.split([',', ';'])
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(|x| x.parse::<T>().map_err(|_| ConfigError::new(key, format!("`{x}` is not {what}"))))
        .collect()
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

impl RunConfig {
    /// Reads a config file; relative `file` paths inside it are resolved
    /// against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("--config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse_with_base(&text, path.parent())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Self::parse_with_base(text, None)
    }

    pub fn parse_with_base(text: &str, base: Option<&Path>) -> Result<Self, ConfigError> {
        Self::from_raw(RawConfig::parse(text)?, base)
    }

    pub fn from_raw(raw: RawConfig, base: Option<&Path>) -> Result<Self, ConfigError> {
        let mut r = Reader { sections: raw.sections };
        let resolve = |p: String| -> PathBuf {
            let p = PathBuf::from(p);
            match base {
                Some(b) if p.is_relative() && !b.as_os_str().is_empty() => b.join(p),
                _ => p,
            }
        };

        let extent = r
            .parsed::<f64>("domain", "L", "a number")?
            .ok_or_else(|| ConfigError::new("domain.L", "missing required key"))?;
        let cells = r
            .parsed::<usize>("domain", "N", "a positive integer")?
            .ok_or_else(|| ConfigError::new("domain.N", "missing required key"))?;
        let dim = r.usize_or("domain", "d", 1)?;
        Grid::new(extent, cells, dim).map_err(|e| ConfigError::new("domain", e.to_string()))?;
        let domain = DomainConfig { extent, cells, dim };

        let kind = r.take("initial", "kind").unwrap_or_else(|| "uniform".into());
        let shape = match kind.as_str() {
            "uniform" => InitialShape::Uniform,
            "cosine" => InitialShape::Cosine {
                amplitude: r.f64_or("initial", "amplitude", 0.1)?,
                mode: r.usize_or("initial", "mode", 1)?,
            },
            "gaussian" => {
                let cx = r.f64_or("initial", "cx", extent / 2.0)?;
                let cy = r.f64_or("initial", "cy", cx)?;
                let width = r.f64_or("initial", "width", extent / 10.0)?;
                if width <= 0.0 {
                    return Err(ConfigError::new("initial.width", "must be positive"));
                }
                InitialShape::Gaussian { center: [cx, cy], width }
            }
            "mixture" => {
                let spec = r
                    .take("initial", "components")
                    .ok_or_else(|| ConfigError::new("initial.components", "mixture needs components"))?;
                let mut components = Vec::new();
                for part in spec.split(';').map(str::trim).filter(|p| !p.is_empty()) {
                    let v: Vec<f64> = parse_list(&part.replace(' ', ","), "initial.components", "a number")?;
                    let c = match v.as_slice() {
                        [w, cx, width] => MixtureComponent { weight: *w, center: [*cx, *cx], width: *width },
                        [w, cx, cy, width] => MixtureComponent { weight: *w, center: [*cx, *cy], width: *width },
                        _ => {
                            return Err(ConfigError::new(
                                "initial.components",
                                format!("component `{part}` should be `weight cx [cy] width`"),
                            ))
                        }
                    };
                    if !(c.weight >= 0.0 && c.width > 0.0) {
                        return Err(ConfigError::new("initial.components", "weights must be >= 0 and widths > 0"));
                    }
                    components.push(c);
                }
                if components.is_empty() {
                    return Err(ConfigError::new("initial.components", "mixture needs at least one component"));
                }
                InitialShape::Mixture { components }
            }
            "file" => {
                let p = r.take("initial", "path").ok_or_else(|| ConfigError::new("initial.path", "file initial density needs a path"))?;
                InitialShape::File { path: resolve(p) }
            }
            other => return Err(ConfigError::new("initial.kind", format!("unknown initial density `{other}`"))),
        };
        let zero_cells = match r.take("initial", "zero_cells") {
            Some(s) => parse_list::<usize>(&s, "initial.zero_cells", "a cell index")?,
            None => Vec::new(),
        };
        let initial = InitialDensity { shape, zero_cells };

        let mut scalar = |section: &str, key: &str| -> Result<ddft_core::KernelSpec, ConfigError> {
            match r.take(section, key) {
                None => Ok(ddft_core::KernelSpec::zero()),
                Some(s) => parse_kernel(&s).map_err(|e| ConfigError::new(format!("{section}.{key}"), e.0)),
            }
        };
        let v1 = scalar("potentials", "V1")?;
        let v2 = scalar("potentials", "V2")?;
        let mut tensor = |key: &str| -> Result<ddft_core::TensorKernelSpec, ConfigError> {
            match r.take("hi", key) {
                None => Ok(ddft_core::TensorKernelSpec::zero()),
                Some(s) => parse_tensor_kernel(&s).map_err(|e| ConfigError::new(format!("hi.{key}"), e.0)),
            }
        };
        let z1 = tensor("Z1")?;
        let z2 = tensor("Z2")?;
        let model = Model { v1, v2, z1, z2 };
        model.validate().map_err(|e| ConfigError::new("potentials", e.to_string()))?;

        let d = StepControl::default();
        let scheme = match r.take("stepping", "scheme") {
            None => d.scheme,
            Some(s) => parse_scheme(&s).ok_or_else(|| {
                ConfigError::new("stepping.scheme", format!("`{s}` is not semi_implicit_cc or explicit_heun"))
            })?,
        };
        let freezing = match r.take("stepping", "freezing").as_deref() {
            None => d.freezing,
            Some("lagged") => Freezing::Lagged,
            Some("synchronized") => Freezing::Synchronized,
            Some(s) => return Err(ConfigError::new("stepping.freezing", format!("`{s}` is not lagged or synchronized"))),
        };
        let control = StepControl {
            dt: r.f64_or("stepping", "dt", d.dt)?,
            scheme,
            freezing,
            inner_picard_tol: r.f64_or("stepping", "inner_picard_tol", d.inner_picard_tol)?,
            inner_picard_max: r.usize_or("stepping", "inner_picard_max", d.inner_picard_max)?,
            energy_guard: r.bool_or("stepping", "energy_guard", d.energy_guard)?,
            guard_tol: r.f64_or("stepping", "guard_tol", d.guard_tol)?,
            flux_tol: r.f64_or("stepping", "flux_tol", d.flux_tol)?,
            flux_max_iter: r.usize_or("stepping", "flux_max_iter", d.flux_max_iter)?,
        };
        control.validate().map_err(|e| ConfigError::new("stepping", e.to_string()))?;
        let stepping = SteppingConfig {
            control,
            t_end: r.f64_or("stepping", "t_end", 1.0)?,
            record_every: r.usize_or("stepping", "record_every", 10)?,
            snapshot_every: r.usize_or("stepping", "snapshot_every", 0)?,
            spectral_every: r.usize_or("stepping", "spectral_every", 0)?,
            rate: r.bool_or("stepping", "rate", true)?,
            track_equilibrium: r.bool_or("stepping", "track_equilibrium", true)?,
        };
        if stepping.t_end < 0.0 {
            return Err(ConfigError::new("stepping.t_end", "must be nonnegative"));
        }
        if stepping.record_every == 0 {
            return Err(ConfigError::new("stepping.record_every", "must be at least 1"));
        }

        let pd = PicardOptions::default();
        let equilibrium = PicardOptions {
            damping: r.f64_or("equilibrium", "damping", pd.damping)?,
            tol: r.f64_or("equilibrium", "tol", pd.tol)?,
            max_iter: r.usize_or("equilibrium", "max_iter", pd.max_iter)?,
        };
        if !(equilibrium.damping > 0.0 && equilibrium.damping <= 1.0) {
            return Err(ConfigError::new("equilibrium.damping", "must lie in (0, 1]"));
        }
        if !(equilibrium.tol > 0.0) || equilibrium.max_iter == 0 {
            return Err(ConfigError::new("equilibrium", "tol must be positive and max_iter at least 1"));
        }

        let pair_force = match r.take("particles", "pair_force").as_deref() {
            None | Some("mesh") => PairForce::Mesh { cells: r.usize_or("particles", "mesh_cells", 128)? },
            Some("exact") => PairForce::Exact,
            Some(s) => return Err(ConfigError::new("particles.pair_force", format!("`{s}` is not mesh or exact"))),
        };
        // mesh_cells is meaningless for the exact sum; reject it so the echo stays canonical
        if pair_force == PairForce::Exact && r.take("particles", "mesh_cells").is_some() {
            return Err(ConfigError::new("particles.mesh_cells", "only applies to pair_force = mesh"));
        }
        let oracle = OracleConfig {
            n: r.usize_or("particles", "n", 10_000)?,
            dt: r.f64_or("particles", "dt", 1e-4)?,
            steps: r.usize_or("particles", "steps", 100_000)?,
            thin: r.usize_or("particles", "thin", 100)?,
            burn_in: r.f64_or("particles", "burn_in", 1.0)?,
            pair_force,
            histogram_cells: r.usize_or("particles", "histogram_cells", 32)?,
            reference: r.take("particles", "reference").map(resolve),
        };
        if oracle.thin == 0 || oracle.histogram_cells == 0 {
            return Err(ConfigError::new("particles", "thin and histogram_cells must be at least 1"));
        }

        let output = PathBuf::from(r.take("output", "dir").unwrap_or_else(|| "out".into()));
        let seed = r.parsed::<u64>("run", "seed", "an unsigned integer")?.unwrap_or(0);
        r.leftovers()?;
        Ok(RunConfig { domain, initial, model, stepping, equilibrium, oracle, output, seed })
    }

    pub fn grid(&self) -> Grid {
        Grid::new(self.domain.extent, self.domain.cells, self.domain.dim).expect("validated at parse time")
    }

    /// Canonical text form listing every field.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let d = &self.domain;
        let _ = writeln!(s, "[domain]\nL = {}\nN = {}\nd = {}\n", num(d.extent), d.cells, d.dim);
        s.push_str("[initial]\n");
        match &self.initial.shape {
            InitialShape::Uniform => s.push_str("kind = uniform\n"),
            InitialShape::Cosine { amplitude, mode } => {
                let _ = writeln!(s, "kind = cosine\namplitude = {}\nmode = {mode}", num(*amplitude));
            }
            InitialShape::Gaussian { center, width } => {
                let _ = writeln!(s, "kind = gaussian\ncx = {}\ncy = {}\nwidth = {}", num(center[0]), num(center[1]), num(*width));
            }
            InitialShape::Mixture { components } => {
                let parts: Vec<String> = components
                    .iter()
                    .map(|c| format!("{} {} {} {}", num(c.weight), num(c.center[0]), num(c.center[1]), num(c.width)))
                    .collect();
                let _ = writeln!(s, "kind = mixture\ncomponents = {}", parts.join("; "));
            }
            InitialShape::File { path } => {
                let _ = writeln!(s, "kind = file\npath = {}", path.display());
            }
        }
        if !self.initial.zero_cells.is_empty() {
            let cells: Vec<String> = self.initial.zero_cells.iter().map(|c| c.to_string()).collect();
            let _ = writeln!(s, "zero_cells = {}", cells.join(", "));
        }
        let m = &self.model;
        let _ = writeln!(s, "\n[potentials]\nV1 = {}\nV2 = {}", format_kernel(&m.v1), format_kernel(&m.v2));
        let _ = writeln!(s, "\n[hi]\nZ1 = {}\nZ2 = {}", format_tensor_kernel(&m.z1), format_tensor_kernel(&m.z2));
        let st = &self.stepping;
        let c = &st.control;
        let _ = writeln!(
            s,
            "\n[stepping]\ndt = {}\nscheme = {}\nfreezing = {}\ninner_picard_tol = {}\ninner_picard_max = {}\n\
             energy_guard = {}\nguard_tol = {}\nflux_tol = {}\nflux_max_iter = {}\nt_end = {}\nrecord_every = {}\n\
             snapshot_every = {}\nspectral_every = {}\nrate = {}\ntrack_equilibrium = {}",
            num(c.dt),
            scheme_name(c.scheme),
            freezing_name(c.freezing),
            num(c.inner_picard_tol),
            c.inner_picard_max,
            c.energy_guard,
            num(c.guard_tol),
            num(c.flux_tol),
            c.flux_max_iter,
            num(st.t_end),
            st.record_every,
            st.snapshot_every,
            st.spectral_every,
            st.rate,
            st.track_equilibrium
        );
        let e = &self.equilibrium;
        let _ = writeln!(s, "\n[equilibrium]\ndamping = {}\ntol = {}\nmax_iter = {}", num(e.damping), num(e.tol), e.max_iter);
        let o = &self.oracle;
        let _ = writeln!(s, "\n[particles]\nn = {}\ndt = {}\nsteps = {}\nthin = {}\nburn_in = {}", o.n, num(o.dt), o.steps, o.thin, num(o.burn_in));
        match o.pair_force {
            PairForce::Exact => s.push_str("pair_force = exact\n"),
            PairForce::Mesh { cells } => {
                let _ = writeln!(s, "pair_force = mesh\nmesh_cells = {cells}");
            }
        }
        let _ = writeln!(s, "histogram_cells = {}", o.histogram_cells);
        if let Some(p) = &o.reference {
            let _ = writeln!(s, "reference = {}", p.display());
        }
        let _ = writeln!(s, "\n[output]\ndir = {}\n\n[run]\nseed = {}", self.output.display(), self.seed);
        s
    }

    /// The initial density on the mesh, normalized to unit mass.
    pub fn initial_density(&self, g: &Grid) -> Result<Field, ConfigError> {
        let l = g.extent();
        let gauss = |x: [f64; 2], c: [f64; 2], w: f64| {
            let dy = if g.dim() == 2 { x[1] - c[1] } else { 0.0 };
            (-((x[0] - c[0]).powi(2) + dy * dy) / (2.0 * w * w)).exp()
        };
        let mut rho = match &self.initial.shape {
            InitialShape::Uniform => Field::constant(g, 1.0),
            InitialShape::Cosine { amplitude, mode } => {
                Field::from_fn(g, |x| 1.0 + amplitude * (*mode as f64 * std::f64::consts::PI * x[0] / l).cos())
            }
            InitialShape::Gaussian { center, width } => Field::from_fn(g, |x| gauss(x, *center, *width)),
            InitialShape::Mixture { components } => {
                Field::from_fn(g, |x| components.iter().map(|c| c.weight * gauss(x, c.center, c.width)).sum())
            }
            InitialShape::File { path } => {
                let values = crate::output::read_column(path, &["rho", "density"])
                    .map_err(|e| ConfigError::new("initial.path", e.to_string()))?;
                if values.len() != g.num_cells() {
                    return Err(ConfigError::new(
                        "initial.path",
                        format!("{} rows but the mesh has {} cells", values.len(), g.num_cells()),
                    ));
                }
                Field::new(values)
            }
        };
        for &c in &self.initial.zero_cells {
            if c >= g.num_cells() {
                return Err(ConfigError::new("initial.zero_cells", format!("cell {c} is outside the mesh")));
            }
            rho.values[c] = 0.0;
        }
        if rho.values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ConfigError::new("initial", "initial density must be finite and nonnegative"));
        }
        let mass = integrate(g, &rho).map_err(|e| ConfigError::new("initial", e.to_string()))?;
        if !(mass > 0.0) {
            return Err(ConfigError::new("initial", "initial density has zero mass and cannot be normalized"));
        }
        Ok(rho.map(|v| v / mass))
    }
}

/// Outcome of the assumption checks run before a simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateReport {
    pub v2_sup_norm: f64,
    /// `||V2||_inf <= 1/4`: the self-consistent equilibrium is unique.
    pub v2_small: bool,
    pub z2_sup_norm: f64,
    /// Largest eigenvalue of the diffusion tensor at the initial density.
    pub mu_max_initial: f64,
    /// `sup|Z2| * mu_max`; the flux equation is a contraction below 1.
    pub contraction_product: f64,
    pub time_dependent_v1: bool,
    pub warnings: Vec<String>,
}

/// Checks the standing assumptions for `cfg` at the initial density `rho0`.
/// Hard violations (indefinite diffusion tensor) are errors; soft ones are
/// warnings.
pub fn assumption_gate(cfg: &RunConfig, g: &Grid, rho0: &Field) -> Result<GateReport, ConfigError> {
    let v2_sup_norm = cfg.model.v2.sup_norm(g, Region::Differences);
    let z2_sup_norm = cfg.model.z2.sup_norm(g);
    let hi = HiOperator::new(g, &cfg.model.z1, &cfg.model.z2).map_err(|e| ConfigError::new("hi", e.to_string()))?;
    let d = hi
        .assemble_d(rho0)
        .map_err(|e| ConfigError::new("hi.Z1", format!("I + Z1 * rho is not positive definite at the initial density: {e}")))?;
    let (_, mu_max_initial) = eigen_bounds(&d);
    let contraction_product = z2_sup_norm * mu_max_initial;
    let mut warnings = Vec::new();
    if contraction_product >= 1.0 {
        warnings.push(format!(
            "WARNING: contraction condition violated: sup|Z2| * mu_max = {contraction_product:.6} >= 1; \
             the flux solver falls back to dense solves"
        ));
    }
    let v2_small = v2_sup_norm <= 0.25;
    if !v2_small {
        warnings.push(format!("WARNING: ||V2||_inf = {v2_sup_norm:.6} > 1/4; the equilibrium may not be unique"));
    }
    let time_dependent_v1 = !cfg.model.is_autonomous();
    if time_dependent_v1 {
        warnings.push("WARNING: V1 is time dependent; the free energy need not decrease and the energy guard is off".into());
    }
    Ok(GateReport { v2_sup_norm, v2_small, z2_sup_norm, mu_max_initial, contraction_product, time_dependent_v1, warnings })
}
