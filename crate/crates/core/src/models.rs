//! Built-in metric family registry: analytically understood test cases.
//!
//! Families:
//! * `flat`: identity components, periods 2π (usable as a torus chart).
//! * `round_sphere`: stereographic chart of the radius-r round sphere,
//!   g = 4r⁴/(r² + |x|²)² δ; rational components, no chart singularity
//!   near the evaluation region.
//! * `conf_flat_torus`: g = e^{2φ}δ with a preset (or caller-supplied)
//!   trigonometric φ, periods 2π.
//! * `perturbed_flat`: g = δ + ε·h with preset smooth trigonometric h
//!   selected by an integer seed; generically W ≠ 0.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::expr;
use crate::tensor::{MetricKind, MetricSpec};

pub const FAMILY_NAMES: [&str; 4] = ["flat", "round_sphere", "conf_flat_torus", "perturbed_flat"];

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

fn get_param(params: &BTreeMap<String, f64>, key: &str, default: f64) -> f64 {
    params.get(key).copied().unwrap_or(default)
}

fn check_param_keys(
    name: &str,
    params: &BTreeMap<String, f64>,
    allowed: &[&str],
) -> Result<()> {
    for key in params.keys() {
        if !allowed.contains(&key.as_str()) {
            return Err(Error::InvalidSpec(format!(
                "family `{name}` does not take parameter `{key}` (allowed: {allowed:?})"
            )));
        }
    }
    Ok(())
}

fn check_dim(name: &str, dim: usize, lo: usize, hi: usize) -> Result<()> {
    if dim < lo || dim > hi {
        return Err(Error::InvalidSpec(format!(
            "family `{name}` supports dimensions {lo}..={hi}, got {dim}"
        )));
    }
    Ok(())
}

fn identity_components(dim: usize) -> Vec<expr::Expression> {
    let mut comps = Vec::new();
    for i in 0..dim {
        for j in i..dim {
            comps.push(expr::parse(if i == j { "1" } else { "0" }, dim).expect("literal"));
        }
    }
    comps
}

fn label(name: &str, dim: usize, params: &BTreeMap<String, f64>) -> String {
    let mut s = format!("builtin:{name}(dim={dim}");
    for (k, v) in params {
        s.push_str(&format!(", {k}={v}"));
    }
    s.push(')');
    s
}

fn sum_of_squares(dim: usize) -> String {
    (1..=dim)
        .map(|k| format!("x{k}^2"))
        .collect::<Vec<_>>()
        .join(" + ")
}

fn torus_phi(preset: i64, dim: usize) -> Result<String> {
    Ok(match preset {
        0 => "a*sin(x1)*cos(x2)".to_string(),
        1 => {
            if dim >= 4 {
                "a*(cos(x1)*sin(x2) + 0.5*sin(x3 + x4))".to_string()
            } else {
                "a*(cos(x1)*sin(x2) + 0.5*sin(x1 + 2*x2))".to_string()
            }
        }
        2 => "a*cos(2*x1)".to_string(),
        other => {
            return Err(Error::InvalidSpec(format!(
                "conf_flat_torus preset {other} not in 0..=2"
            )))
        }
    })
}

fn lcg(state: &mut u64) -> u64 {
    *state = state
        .wrapping_mul(6364136223846793005)
        .wrapping_add(1442695040888963407);
    *state >> 33
}

/// Instantiate a builtin family as a ready-to-evaluate spec.
pub fn builtin(
    name: &str,
    dim: usize,
    params: &BTreeMap<String, f64>,
    phi_src: Option<&str>,
) -> Result<MetricSpec> {
    match name {
        "flat" => {
            check_dim(name, dim, 1, 6)?;
            check_param_keys(name, params, &[])?;
            let spec = MetricSpec::explicit(
                dim,
                identity_components(dim),
                BTreeMap::new(),
                label(name, dim, params),
            )?
            .with_periods(vec![TWO_PI; dim]);
            Ok(spec)
        }
        "round_sphere" => {
            check_dim(name, dim, 2, 6)?;
            check_param_keys(name, params, &["radius"])?;
            let radius = get_param(params, "radius", 1.0);
            if !(radius > 0.0) {
                return Err(Error::InvalidSpec("radius must be positive".into()));
            }
            let conf = format!("4*r^4/((r^2 + {})^2)", sum_of_squares(dim));
            let mut comps = Vec::new();
            for i in 0..dim {
                for j in i..dim {
                    let src = if i == j { conf.as_str() } else { "0" };
                    comps.push(expr::parse(src, dim)?);
                }
            }
            let mut p = BTreeMap::new();
            p.insert("r".to_string(), radius);
            MetricSpec::explicit(dim, comps, p, label(name, dim, params))
        }
        "conf_flat_torus" => {
            check_dim(name, dim, 2, 6)?;
            let src = match phi_src {
                Some(src) => src.to_string(),
                None => {
                    check_param_keys(name, params, &["a", "preset"])?;
                    torus_phi(get_param(params, "preset", 0.0) as i64, dim)?
                }
            };
            let phi = expr::parse(&src, dim)?;
            let mut p = params.clone();
            p.remove("preset");
            p.entry("a".to_string()).or_insert(0.3);
            let spec = MetricSpec::conformally_flat(dim, phi, p, label(name, dim, params))
                .with_periods(vec![TWO_PI; dim]);
            spec.validate()?;
            Ok(spec)
        }
        "perturbed_flat" => {
            check_dim(name, dim, 2, 6)?;
            check_param_keys(name, params, &["eps", "seed"])?;
            let eps = get_param(params, "eps", 0.05);
            if !(eps.abs() < 0.15) {
                return Err(Error::InvalidSpec(
                    "perturbed_flat needs |eps| < 0.15 to stay positive definite".into(),
                ));
            }
            let seed = get_param(params, "seed", 0.0) as u64;
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(17);
            let mut comps = Vec::new();
            for i in 0..dim {
                for j in i..dim {
                    let p = (lcg(&mut state) as usize % dim) + 1;
                    let mut q = (lcg(&mut state) as usize % dim) + 1;
                    if q == p {
                        q = q % dim + 1;
                    }
                    let f1 = (lcg(&mut state) % 2) + 1;
                    let f2 = (lcg(&mut state) % 2) + 1;
                    let src = if i == j {
                        format!("1 + eps*sin({f1}*x{p} + {f2}*x{q})")
                    } else {
                        format!("eps*cos({f1}*x{p})*sin({f2}*x{q})")
                    };
                    comps.push(expr::parse(&src, dim)?);
                }
            }
            let mut p = BTreeMap::new();
            p.insert("eps".to_string(), eps);
            let spec = MetricSpec::explicit(dim, comps, p, label(name, dim, params))?
                .with_periods(vec![TWO_PI; dim]);
            Ok(spec)
        }
        other => Err(Error::UnknownBuiltin(other.to_string())),
    }
}

/// Expand a builtin-kind spec through the registry; explicit and
/// conformally-flat specs pass through unchanged.
pub fn resolve(spec: &MetricSpec) -> Result<MetricSpec> {
    match &spec.kind {
        MetricKind::Builtin { name, phi_src } => {
            let mut out = builtin(name, spec.dim, &spec.params, phi_src.as_deref())?;
            if let Some(periods) = &spec.periods {
                out.periods = Some(periods.clone());
            }
            out.label = spec.label.clone();
            Ok(out)
        }
        _ => Ok(spec.clone()),
    }
}

/// Parse the CLI form `builtin:name,dim=4,key=value,…`.
pub fn parse_builtin_arg(arg: &str) -> Result<MetricSpec> {
    let rest = arg
        .strip_prefix("builtin:")
        .ok_or_else(|| Error::InvalidSpec(format!("not a builtin reference: `{arg}`")))?;
    let mut parts = rest.split(',');
    let name = parts
        .next()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::InvalidSpec("missing builtin family name".into()))?;
    let mut dim: Option<usize> = None;
    let mut params = BTreeMap::new();
    for part in parts {
        let (key, value) = part.split_once('=').ok_or_else(|| {
            Error::InvalidSpec(format!("expected key=value in builtin argument, got `{part}`"))
        })?;
        if key == "dim" {
            dim = Some(value.parse().map_err(|_| {
                Error::InvalidSpec(format!("invalid dimension `{value}`"))
            })?);
        } else {
            let v: f64 = value.parse().map_err(|_| {
                Error::InvalidSpec(format!("invalid numeric value for `{key}`: `{value}`"))
            })?;
            params.insert(key.to_string(), v);
        }
    }
    let dim = dim.ok_or_else(|| Error::InvalidSpec("builtin reference needs dim=<n>".into()))?;
    builtin(name, dim, &params, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::CurvatureBundle;
    use crate::tensor::metric_jets;

    #[test]
    fn flat_identity_components() {
        let spec = builtin("flat", 4, &BTreeMap::new(), None).unwrap();
        let g = metric_jets(&spec, &[0.0; 4], 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_eq!(g.get(&[i, j]).value(), expect);
            }
        }
    }

    #[test]
    fn sphere_at_origin() {
        let mut p = BTreeMap::new();
        p.insert("radius".to_string(), 1.0);
        let spec = builtin("round_sphere", 4, &p, None).unwrap();
        let g = metric_jets(&spec, &[0.0; 4], 2).unwrap();
        assert!((g.get(&[0, 0]).value() - 4.0).abs() < 1e-15);
        let b = CurvatureBundle::build(&spec, &[0.0; 4], 4).unwrap();
        assert!((b.r().value() - 12.0).abs() < 1e-10);
        // radius scaling: R = n(n−1)/r²
        let mut p = BTreeMap::new();
        p.insert("radius".to_string(), 2.0);
        let spec = builtin("round_sphere", 4, &p, None).unwrap();
        let b = CurvatureBundle::build(&spec, &[0.1, 0.0, -0.2, 0.3], 4).unwrap();
        assert!((b.r().value() - 3.0).abs() < 1e-10, "R = {}", b.r().value());
    }

    #[test]
    fn torus_with_user_phi_is_conformally_flat() {
        let mut p = BTreeMap::new();
        p.insert("a".to_string(), 0.3);
        let spec = builtin("conf_flat_torus", 4, &p, Some("a*sin(x1)*cos(x2)")).unwrap();
        assert_eq!(spec.periods.as_deref(), Some(&[TWO_PI; 4][..]));
        let b = CurvatureBundle::build(&spec, &[0.4, 1.1, -0.3, 2.0], 4).unwrap();
        assert!(b.w().unwrap().max_abs_coeff() < 1e-10);
    }

    #[test]
    fn perturbed_flat_has_weyl() {
        let spec = builtin("perturbed_flat", 4, &BTreeMap::new(), None).unwrap();
        let b = CurvatureBundle::build(&spec, &[0.3, -0.2, 0.5, 0.1], 4).unwrap();
        assert!(b.w().unwrap().max_abs_coeff() > 1e-4);
        // different seeds give different metrics
        let mut p = BTreeMap::new();
        p.insert("seed".to_string(), 3.0);
        let spec2 = builtin("perturbed_flat", 4, &p, None).unwrap();
        let g1 = metric_jets(&spec, &[0.3; 4], 2).unwrap();
        let g2 = metric_jets(&spec2, &[0.3; 4], 2).unwrap();
        let mut differ = false;
        for i in 0..4 {
            for j in 0..4 {
                if (g1.get(&[i, j]).value() - g2.get(&[i, j]).value()).abs() > 1e-12 {
                    differ = true;
                }
            }
        }
        assert!(differ);
    }

    #[test]
    fn registry_errors() {
        assert!(matches!(
            builtin("nosuch", 4, &BTreeMap::new(), None),
            Err(Error::UnknownBuiltin(_))
        ));
        assert!(builtin("round_sphere", 1, &BTreeMap::new(), None).is_err());
        let mut p = BTreeMap::new();
        p.insert("radius".to_string(), 1.0);
        assert!(builtin("flat", 2, &p, None).is_err()); // flat takes no params
    }

    #[test]
    fn component_periodicity() {
        let spec = builtin("perturbed_flat", 3, &BTreeMap::new(), None).unwrap();
        let periods = spec.periods.clone().unwrap();
        let comps = match &spec.kind {
            MetricKind::Explicit { components } => components.clone(),
            _ => unreachable!(),
        };
        let pt = [0.7, -1.3, 2.1];
        for (axis, period) in periods.iter().enumerate() {
            let mut shifted = pt;
            shifted[axis] += period;
            for c in &comps {
                let a = c.eval(&pt, &spec.params).unwrap();
                let b = c.eval(&shifted, &spec.params).unwrap();
                assert!((a - b).abs() < 1e-12, "axis {axis}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn cli_builtin_parsing() {
        let spec = parse_builtin_arg("builtin:round_sphere,dim=4,radius=1.5").unwrap();
        assert_eq!(spec.dim, 4);
        assert_eq!(spec.params.get("r"), Some(&1.5));
        assert!(parse_builtin_arg("builtin:round_sphere").is_err()); // no dim
        assert!(parse_builtin_arg("builtin:flat,dim=oops").is_err());
    }

    #[test]
    fn resolve_builtin_kind() {
        let spec = MetricSpec {
            dim: 4,
            kind: MetricKind::Builtin {
                name: "conf_flat_torus".into(),
                phi_src: None,
            },
            periods: None,
            params: BTreeMap::new(),
            label: "from_file".into(),
        };
        let resolved = resolve(&spec).unwrap();
        assert!(!resolved.is_builtin());
        assert_eq!(resolved.label, "from_file");
        assert!(resolved.periods.is_some());
    }
}
