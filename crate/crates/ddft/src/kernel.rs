//! Kernel spec strings: `kind:param=value,param=value`.
//!
//! ```text
//! zero
//! constant:value=0.5
//! harmonic:stiffness=4,center=0.5
//! gaussian:amplitude=0.2,width=0.2
//! soft_core:amplitude=1,width=0.1
//! double_well:a=1,b=2,cx=0.5,cy=0.5
//! tabulated:spacing=0.1,samples=1 0.5 0.1 0
//! ```
//!
//! Every scalar kind also takes `cx`, `cy` (or `center` for both) and an
//! optional time modulation `mod_amplitude`, `mod_frequency`. Tensor kernels
//! add `structure=isotropic|dyadic` and, for dyadic, `c1`, `c2`, `eps_reg`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use ddft_core::{KernelKind, KernelSpec, Modulation, TensorKernelSpec, TensorStructure};

/// Parse failure; the message names the offending parameter.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct SpecError(pub String);

type Params = BTreeMap<String, String>;

fn split(s: &str) -> Result<(String, Params), SpecError> {
    let s = s.trim();
    let (kind, rest) = match s.split_once(':') {
        Some((k, r)) => (k.trim(), r),
        None => (s, ""),
    };
    if kind.is_empty() {
        return Err(SpecError("empty kernel kind".into()));
    }
    let mut params = Params::new();
    for item in rest.split(',').map(str::trim).filter(|i| !i.is_empty()) {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| SpecError(format!("expected `param=value` in kernel spec, got `{item}`")))?;
        let k = k.trim().to_string();
        if params.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(SpecError(format!("parameter `{k}` given twice")));
        }
    }
    Ok((kind.to_string(), params))
}

fn take_f64(p: &mut Params, key: &str) -> Result<Option<f64>, SpecError> {
    match p.remove(key) {
        None => Ok(None),
        Some(v) => {
            let x: f64 = v.parse().map_err(|_| SpecError(format!("parameter `{key}`: `{v}` is not a number")))?;
            if !x.is_finite() {
                return Err(SpecError(format!("parameter `{key}` must be finite")));
            }
            Ok(Some(x))
        }
    }
}

fn need_f64(p: &mut Params, key: &str, kind: &str) -> Result<f64, SpecError> {
    take_f64(p, key)?.ok_or_else(|| SpecError(format!("`{kind}` needs parameter `{key}`")))
}

fn take_center(p: &mut Params) -> Result<[f64; 2], SpecError> {
    let both = take_f64(p, "center")?;
    let cx = take_f64(p, "cx")?;
    let cy = take_f64(p, "cy")?;
    if both.is_some() && (cx.is_some() || cy.is_some()) {
        return Err(SpecError("use either `center` or `cx`/`cy`".into()));
    }
    let cx = both.or(cx).unwrap_or(0.0);
    Ok([cx, both.or(cy).unwrap_or(cx)])
}

fn parse_scalar_params(kind: &str, p: &mut Params) -> Result<KernelSpec, SpecError> {
    let kk = match kind {
        "zero" => KernelKind::Zero,
        "constant" => KernelKind::Constant { value: need_f64(p, "value", kind)? },
        "harmonic" => KernelKind::Harmonic { stiffness: need_f64(p, "stiffness", kind)?, center: take_center(p)? },
        "gaussian" => KernelKind::Gaussian {
            amplitude: need_f64(p, "amplitude", kind)?,
            width: need_f64(p, "width", kind)?,
            center: take_center(p)?,
        },
        "soft_core" => KernelKind::SoftCore {
            amplitude: need_f64(p, "amplitude", kind)?,
            width: need_f64(p, "width", kind)?,
            center: take_center(p)?,
        },
        "double_well" => KernelKind::DoubleWell { a: need_f64(p, "a", kind)?, b: need_f64(p, "b", kind)?, center: take_center(p)? },
        "tabulated" => {
            let spacing = need_f64(p, "spacing", kind)?;
            let raw = p.remove("samples").ok_or_else(|| SpecError("`tabulated` needs parameter `samples`".into()))?;
            let samples = raw
                .split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| SpecError(format!("parameter `samples`: `{s}` is not a number"))))
                .collect::<Result<Vec<_>, _>>()?;
            KernelKind::Tabulated { spacing, samples, center: take_center(p)? }
        }
        other => return Err(SpecError(format!("unknown kernel kind `{other}`"))),
    };
    let modulation = match (take_f64(p, "mod_amplitude")?, take_f64(p, "mod_frequency")?) {
        (None, None) => None,
        (Some(amplitude), Some(frequency)) => Some(Modulation { amplitude, frequency }),
        _ => return Err(SpecError("`mod_amplitude` and `mod_frequency` go together".into())),
    };
    Ok(KernelSpec { kind: kk, modulation })
}

fn reject_leftovers(p: &Params) -> Result<(), SpecError> {
    match p.keys().next() {
        Some(k) => Err(SpecError(format!("unknown kernel parameter `{k}`"))),
        None => Ok(()),
    }
}

pub fn parse_kernel(s: &str) -> Result<KernelSpec, SpecError> {
    let (kind, mut p) = split(s)?;
    let spec = parse_scalar_params(&kind, &mut p)?;
    reject_leftovers(&p)?;
    spec.validate().map_err(|e| SpecError(e.to_string()))?;
    Ok(spec)
}

pub fn parse_tensor_kernel(s: &str) -> Result<TensorKernelSpec, SpecError> {
    let (kind, mut p) = split(s)?;
    let structure = p.remove("structure");
    let c1 = take_f64(&mut p, "c1")?;
    let c2 = take_f64(&mut p, "c2")?;
    let eps = take_f64(&mut p, "eps_reg")?;
    let structure = match structure.as_deref().unwrap_or("isotropic") {
        "isotropic" => {
            if c1.is_some() || c2.is_some() || eps.is_some() {
                return Err(SpecError("`c1`, `c2`, `eps_reg` only apply to structure=dyadic".into()));
            }
            TensorStructure::Isotropic
        }
        "dyadic" => TensorStructure::Dyadic {
            c1: c1.ok_or_else(|| SpecError("dyadic kernel needs `c1`".into()))?,
            c2: c2.ok_or_else(|| SpecError("dyadic kernel needs `c2`".into()))?,
            eps_reg: eps.ok_or_else(|| SpecError("dyadic kernel needs `eps_reg`".into()))?,
        },
        other => return Err(SpecError(format!("unknown tensor structure `{other}`"))),
    };
    let profile = parse_scalar_params(&kind, &mut p)?;
    reject_leftovers(&p)?;
    let spec = TensorKernelSpec { profile, structure };
    spec.validate().map_err(|e| SpecError(e.to_string()))?;
    Ok(spec)
}

fn num(x: f64) -> String {
    // Debug formatting is the shortest string that parses back to the same bits
    format!("{x:?}")
}

fn push_center(out: &mut String, c: [f64; 2]) {
    let _ = write!(out, ",cx={},cy={}", num(c[0]), num(c[1]));
}

/// Canonical spec string; [`parse_kernel`] inverts it exactly.
pub fn format_kernel(k: &KernelSpec) -> String {
    let mut s = match &k.kind {
        KernelKind::Zero => "zero".to_string(),
        KernelKind::Constant { value } => format!("constant:value={}", num(*value)),
        KernelKind::Harmonic { center, stiffness } => {
            let mut s = format!("harmonic:stiffness={}", num(*stiffness));
            push_center(&mut s, *center);
            s
        }
        KernelKind::Gaussian { amplitude, width, center } => {
            let mut s = format!("gaussian:amplitude={},width={}", num(*amplitude), num(*width));
            push_center(&mut s, *center);
            s
        }
        KernelKind::SoftCore { amplitude, width, center } => {
            let mut s = format!("soft_core:amplitude={},width={}", num(*amplitude), num(*width));
            push_center(&mut s, *center);
            s
        }
        KernelKind::DoubleWell { a, b, center } => {
            let mut s = format!("double_well:a={},b={}", num(*a), num(*b));
            push_center(&mut s, *center);
            s
        }
        KernelKind::Tabulated { spacing, samples, center } => {
            let list: Vec<String> = samples.iter().map(|v| num(*v)).collect();
            let mut s = format!("tabulated:spacing={},samples={}", num(*spacing), list.join(" "));
            push_center(&mut s, *center);
            s
        }
    };
    if let Some(m) = k.modulation {
        let sep = if s.contains(':') { ',' } else { ':' };
        let _ = write!(s, "{sep}mod_amplitude={},mod_frequency={}", num(m.amplitude), num(m.frequency));
    }
    s
}

pub fn format_tensor_kernel(z: &TensorKernelSpec) -> String {
    let mut s = format_kernel(&z.profile);
    if let TensorStructure::Dyadic { c1, c2, eps_reg } = z.structure {
        let sep = if s.contains(':') { ',' } else { ':' };
        let _ = write!(s, "{sep}structure=dyadic,c1={},c2={},eps_reg={}", num(c1), num(c2), num(eps_reg));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(parse_kernel("zero").unwrap(), KernelSpec::zero());
        assert_eq!(parse_kernel(" gaussian:amplitude=0.2, width=0.2 ").unwrap(), KernelSpec::gaussian(0.2, 0.2));
        assert_eq!(parse_kernel("harmonic:stiffness=4,center=0.5").unwrap(), KernelSpec::harmonic(0.5, 4.0));
        let z = parse_tensor_kernel("gaussian:amplitude=0.4,width=0.3,structure=dyadic,c1=1,c2=-0.5,eps_reg=0.05").unwrap();
        assert_eq!(z, TensorKernelSpec::dyadic(KernelSpec::gaussian(0.4, 0.3), 1.0, -0.5, 0.05));
    }

    #[test]
    fn errors_name_the_parameter() {
        let e = parse_kernel("gaussian:amplitude=0.2").unwrap_err();
        assert!(e.0.contains("width"), "{e}");
        let e = parse_kernel("gaussian:amplitude=0.2,width=0.1,colour=red").unwrap_err();
        assert!(e.0.contains("colour"));
        let e = parse_kernel("gaussian:amplitude=x,width=0.1").unwrap_err();
        assert!(e.0.contains("amplitude"));
        assert!(parse_kernel("spline:knots=3").is_err());
        assert!(parse_tensor_kernel("gaussian:amplitude=1,width=1,c1=2").is_err());
        assert!(parse_kernel("gaussian:amplitude=1,width=-1").is_err());
    }

    #[test]
    fn canonical_strings_round_trip() {
        let specs = [
            KernelSpec::zero(),
            KernelSpec::constant(0.1),
            KernelSpec::harmonic(0.3, 1e-7),
            KernelSpec::gaussian(-0.2, 0.123456789012345),
            KernelSpec::soft_core(1.0, 0.25),
            KernelSpec::double_well(1.0, 2.0),
            KernelSpec::tabulated(0.1, vec![1.0, 0.5, 0.1, 0.0]),
            KernelSpec::gaussian(0.3, 0.2).with_modulation(Modulation { amplitude: 0.5, frequency: 6.0 }),
            KernelSpec::zero().with_modulation(Modulation { amplitude: 0.5, frequency: 6.0 }),
        ];
        for k in specs {
            assert_eq!(parse_kernel(&format_kernel(&k)).unwrap(), k);
            if k.validate_even().is_err() {
                continue;
            }
            let z = TensorKernelSpec::dyadic(k.clone(), 1.0, 0.5, 0.05);
            assert_eq!(parse_tensor_kernel(&format_tensor_kernel(&z)).unwrap(), z);
        }
    }
}
