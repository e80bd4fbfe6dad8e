use std::collections::BTreeMap;

use ddft::config::{assumption_gate, InitialShape, RunConfig};
use ddft::kernel::format_kernel;
use ddft_core::KernelSpec;
use proptest::prelude::*;

fn configs_dir() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn shipped_configs_parse_and_echo() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(RunConfig::parse(&cfg.to_text()).unwrap(), cfg, "{}", path.display());
        seen += 1;
    }
    assert!(seen >= 4);
}

/// Turns the canonical text into the equivalent JSON document.
fn text_to_json(text: &str) -> String {
    let mut doc: BTreeMap<String, BTreeMap<String, serde_json::Value>> = BTreeMap::new();
    let mut section = String::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
            doc.entry(section.clone()).or_default();
        } else {
            let (k, v) = line.split_once('=').unwrap();
            let v = v.trim();
            let value = match v.parse::<f64>() {
                // numbers go in as JSON numbers unless that would lose the exact text
                Ok(x) if x.is_finite() && !v.contains(' ') && format!("{x:?}") == v => serde_json::json!(x),
                _ => serde_json::Value::String(v.to_string()),
            };
            doc.get_mut(&section).unwrap().insert(k.trim().to_string(), value);
        }
    }
    serde_json::to_string_pretty(&doc).unwrap()
}

#[test]
fn json_reader_accepts_the_same_schema() {
    let text = std::fs::read_to_string(configs_dir().join("hi_relaxation.cfg")).unwrap();
    let cfg = RunConfig::parse(&text).unwrap();
    let json = text_to_json(&cfg.to_text());
    assert!(json.trim_start().starts_with('{'));
    assert_eq!(RunConfig::parse(&json).unwrap(), cfg);
    let json_cfg = RunConfig::load(&configs_dir().join("equilibrium.json")).unwrap();
    assert_eq!(json_cfg.domain.cells, 256);
    assert_eq!(json_cfg.model.v2, KernelSpec::gaussian(0.2, 0.2));
    // JSON errors also name the key
    let bad = r#"{"domain": {"L": 1, "N": 8}, "stepping": {"dt": "soon"}}"#;
    assert_eq!(RunConfig::parse(bad).unwrap_err().key, "stepping.dt");
}

#[test]
fn gate_flags_contraction_and_interaction_strength() {
    let base = "[domain]\nL = 1\nN = 32\n";
    let cfg = RunConfig::parse(base).unwrap();
    let g = cfg.grid();
    let rho = cfg.initial_density(&g).unwrap();
    let gate = assumption_gate(&cfg, &g, &rho).unwrap();
    assert!(gate.warnings.is_empty() && gate.v2_small);

    let strong = format!("{base}[potentials]\nV2 = gaussian:amplitude=0.4,width=0.2\n[hi]\nZ2 = gaussian:amplitude=3,width=0.3\n");
    let cfg = RunConfig::parse(&strong).unwrap();
    let gate = assumption_gate(&cfg, &g, &rho).unwrap();
    assert!(gate.contraction_product >= 1.0);
    assert!(!gate.v2_small);
    assert!(gate.warnings.iter().any(|w| w.contains("contraction condition violated")));

    // I + Z1 * rho indefinite: a hard error naming Z1
    let cfg = RunConfig::parse(&format!("{base}[hi]\nZ1 = constant:value=-2\n")).unwrap();
    assert_eq!(assumption_gate(&cfg, &g, &rho).unwrap_err().key, "hi.Z1");
}

#[test]
fn file_initial_density_resolves_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("rho.csv"), "x,rho\n0.125,1\n0.375,3\n0.625,0\n0.875,0\n").unwrap();
    let cfg_path = dir.path().join("run.cfg");
    std::fs::write(&cfg_path, "[domain]\nL = 1\nN = 4\n[initial]\nkind = file\npath = rho.csv\n").unwrap();
    let cfg = RunConfig::load(&cfg_path).unwrap();
    assert_eq!(cfg.initial.shape, InitialShape::File { path: dir.path().join("rho.csv") });
    let rho = cfg.initial_density(&cfg.grid()).unwrap();
    assert_eq!(rho.values, vec![1.0, 3.0, 0.0, 0.0]);
    let wrong = RunConfig::parse("[domain]\nL = 1\nN = 8\n[initial]\nkind = file\npath = /nonexistent/rho.csv\n").unwrap();
    assert_eq!(wrong.initial_density(&wrong.grid()).unwrap_err().key, "initial.path");
}

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..1e3f64, 1e-9..1e-3f64, Just(0.1), Just(1.0 / 3.0)]
}

fn positive() -> impl Strategy<Value = f64> {
    prop_oneof![1e-6..10.0f64, Just(0.2), Just(1e-4)]
}

fn kernel() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::zero()),
        finite().prop_map(KernelSpec::constant),
        (positive(), positive()).prop_map(|(a, w)| KernelSpec::gaussian(a, w)),
        (finite(), positive()).prop_map(|(a, w)| KernelSpec::soft_core(a, w)),
        (finite(), finite()).prop_map(|(a, b)| KernelSpec::double_well(a, b)),
        (positive(), prop::collection::vec(finite(), 2..6)).prop_map(|(s, v)| KernelSpec::tabulated(s, v)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn echo_round_trips(
        l in positive(),
        n in 4usize..300,
        dim in 1usize..3,
        v1c in finite(),
        v1k in finite(),
        v2 in kernel(),
        z in kernel(),
        dt in positive(),
        t_end in 0.0..10.0f64,
        record_every in 1usize..100,
        tol in 1e-15..1e-3f64,
        seed in any::<u64>(),
        shape in 0usize..4,
        weights in prop::collection::vec((positive(), finite(), positive()), 1..4),
        zero_cells in prop::collection::vec(0usize..10, 0..3),
    ) {
        let init = match shape {
            0 => "kind = uniform".to_string(),
            1 => format!("kind = cosine\namplitude = {v1c:?}\nmode = {record_every}"),
            2 => format!("kind = gaussian\ncx = {v1c:?}\nwidth = {dt:?}"),
            _ => format!(
                "kind = mixture\ncomponents = {}",
                weights.iter().map(|(w, c, s)| format!("{w:?} {c:?} {s:?}")).collect::<Vec<_>>().join("; ")
            ),
        };
        let zc = if zero_cells.is_empty() {
            String::new()
        } else {
            format!("zero_cells = {}\n", zero_cells.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "))
        };
        let text = format!(
            "[domain]\nL = {l:?}\nN = {n}\nd = {dim}\n[initial]\n{init}\n{zc}\
             [potentials]\nV1 = harmonic:stiffness={v1k:?},center={v1c:?}\nV2 = {}\n\
             [hi]\nZ1 = {}\n[stepping]\ndt = {dt:?}\nt_end = {t_end:?}\nrecord_every = {record_every}\n\
             [equilibrium]\ntol = {tol:?}\n[run]\nseed = {seed}\n",
            format_kernel(&v2),
            format_kernel(&z),
        );
        let cfg = RunConfig::parse(&text).unwrap();
        let echo = cfg.to_text();
        prop_assert_eq!(&RunConfig::parse(&echo).unwrap(), &cfg);
        // the echo is a fixed point
        prop_assert_eq!(RunConfig::parse(&echo).unwrap().to_text(), echo);
    }
}
