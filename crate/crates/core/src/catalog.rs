//! Built-in systems with recommended norms and expected verdicts.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::contraction::{Domain, Verdict};
use crate::error::{Error, Result};
use crate::expr::{parse_field, VectorFieldDef};
use crate::linear::relation_rank;
use crate::norms::NormSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedVerdict {
    CertifiedExact,
    PassedSampled,
    Violated,
}

impl ExpectedVerdict {
    /// An exact certificate also satisfies a `PassedSampled` expectation.
    pub fn matches(self, v: Verdict) -> bool {
        match self {
            ExpectedVerdict::CertifiedExact => v == Verdict::CertifiedExact,
            ExpectedVerdict::PassedSampled => v.passed(),
            ExpectedVerdict::Violated => v == Verdict::Violated,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "classification", rename_all = "snake_case")]
pub enum ExpectedLimit {
    Equilibrium,
    Torus { k: usize },
    Unbounded,
}

#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub name: &'static str,
    pub field: VectorFieldDef,
    pub parameters: BTreeMap<String, f64>,
    pub norm: NormSpec,
    pub domain: Domain,
    pub x0: Vec<f64>,
    pub expected_verdict: ExpectedVerdict,
    pub expected_limit: ExpectedLimit,
    pub note: &'static str,
}

pub const CATALOG: [(&str, &[&str]); 6] = [
    ("ac_l4", &["c"]),
    ("harmonic", &[]),
    ("coupled_osc", &["alpha1", "alpha2"]),
    ("hurwitz_noncontractive", &[]),
    ("diag_stable", &[]),
    ("rot_saturated", &["omega"]),
];

pub fn names() -> impl Iterator<Item = &'static str> {
    CATALOG.iter().map(|(n, _)| *n)
}

/// `A_c = [[-1, -4c], [8c^3, -4c^4]]`.
pub fn ac_matrix(c: f64) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[-1.0, -4.0 * c, 8.0 * c.powi(3), -4.0 * c.powi(4)])
}

pub fn get_system(name: &str, params: &BTreeMap<String, f64>) -> Result<CatalogEntry> {
    let (name, wanted) = CATALOG
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownSystem(name.to_string()))?;
    for key in params.keys() {
        if !wanted.contains(&key.as_str()) {
            return Err(Error::InvalidArgument(format!("{name} takes no parameter '{key}'")));
        }
    }
    let get = |k: &str| -> Result<f64> {
        let v = *params.get(k).ok_or_else(|| Error::MissingParameter(k.to_string()))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::InvalidArgument(format!("parameter '{k}' must be finite")))
        }
    };
    let parameters: BTreeMap<String, f64> = wanted
        .iter()
        .map(|k| Ok((k.to_string(), get(k)?)))
        .collect::<Result<_>>()?;

    let entry = match *name {
        "ac_l4" => CatalogEntry {
            name,
            field: VectorFieldDef::linear(&ac_matrix(parameters["c"]))?,
            parameters,
            norm: NormSpec::lp(4.0, 2)?,
            domain: Domain::cube(2, 2.0),
            x0: vec![1.0, 1.0],
            expected_verdict: ExpectedVerdict::PassedSampled,
            expected_limit: ExpectedLimit::Equilibrium,
            note: "linear field nonexpansive in the l4 norm for every real c",
        },
        "harmonic" => CatalogEntry {
            name,
            field: parse_field("y; -x", 2)?,
            parameters,
            norm: NormSpec::l2(),
            domain: Domain::cube(2, 2.0),
            x0: vec![1.0, 0.0],
            expected_verdict: ExpectedVerdict::CertifiedExact,
            expected_limit: ExpectedLimit::Torus { k: 1 },
            note: "isometric linear oscillator with periodic limit sets",
        },
        "coupled_osc" => {
            let (a1, a2) = (parameters["alpha1"], parameters["alpha2"]);
            let mut b = DMatrix::zeros(4, 4);
            b[(0, 1)] = a1;
            b[(1, 0)] = -a1;
            b[(2, 3)] = a2;
            b[(3, 2)] = -a2;
            let alive: Vec<f64> = [a1.abs(), a2.abs()].into_iter().filter(|a| *a > 0.0).collect();
            let k = alive.len() - relation_rank(&alive, 50, 1e-9)?;
            CatalogEntry {
                name,
                field: VectorFieldDef::linear(&b)?,
                parameters,
                norm: NormSpec::l2(),
                domain: Domain::cube(4, 2.0),
                x0: vec![1.0, 0.0, 1.0, 0.0],
                expected_verdict: ExpectedVerdict::CertifiedExact,
                expected_limit: if k == 0 {
                    ExpectedLimit::Equilibrium
                } else {
                    ExpectedLimit::Torus { k }
                },
                note: "two planar rotations; torus dimension from integer relations of the frequencies",
            }
        }
        "hurwitz_noncontractive" => CatalogEntry {
            name,
            field: parse_field("-x; -(x^2 + 1) * y", 2)?,
            parameters,
            norm: NormSpec::l2(),
            domain: Domain::cube(2, 3.0),
            x0: vec![1.0, 1.0],
            expected_verdict: ExpectedVerdict::Violated,
            expected_limit: ExpectedLimit::Equilibrium,
            note: "Hurwitz Jacobian everywhere and globally convergent, yet not nonexpansive for any norm",
        },
        "diag_stable" => CatalogEntry {
            name,
            field: parse_field("-x; -y", 2)?,
            parameters,
            norm: NormSpec::linf(2),
            domain: Domain::cube(2, 2.0),
            x0: vec![1.0, 1.0],
            expected_verdict: ExpectedVerdict::CertifiedExact,
            expected_limit: ExpectedLimit::Equilibrium,
            note: "-I contracts every norm",
        },
        "rot_saturated" => {
            let w = parameters["omega"];
            let src = format!(
                "{} - ramp(x^2 + y^2 - 1)^2 * x; {} - ramp(x^2 + y^2 - 1)^2 * y",
                scaled(w, "y"),
                scaled(-w, "x")
            );
            CatalogEntry {
                name,
                field: parse_field(&src, 2)?,
                parameters,
                norm: NormSpec::l2(),
                domain: Domain::cube(2, 2.0),
                x0: vec![0.5, 0.0],
                expected_verdict: ExpectedVerdict::PassedSampled,
                expected_limit: if w == 0.0 {
                    ExpectedLimit::Equilibrium
                } else {
                    ExpectedLimit::Torus { k: 1 }
                },
                note: "rotation inside the unit disk, squared-hinge damping outside; the closed disk is the attractor",
            }
        }
        _ => unreachable!(),
    };
    Ok(entry)
}

fn scaled(w: f64, var: &str) -> String {
    match w {
        1.0 => var.to_string(),
        -1.0 => format!("-{var}"),
        _ => format!("({w:?}) * {var}"),
    }
}

/// Convenience for parameter maps in code and tests.
pub fn params<const N: usize>(kv: [(&str, f64); N]) -> BTreeMap<String, f64> {
    kv.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Parameters used when an entry is listed without explicit values.
pub fn default_params(name: &str) -> BTreeMap<String, f64> {
    match name {
        "ac_l4" => params([("c", 1.0)]),
        "coupled_osc" => params([("alpha1", 1.0), ("alpha2", std::f64::consts::SQRT_2)]),
        "rot_saturated" => params([("omega", 1.0)]),
        _ => BTreeMap::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::norms::mu_l2;

    #[test]
    fn lookups_and_errors() {
        let e = get_system("ac_l4", &params([("c", 1.0)])).unwrap();
        assert_eq!(e.field.linear_part().unwrap(), ac_matrix(1.0));
        assert_eq!(e.field.jacobian(&[0.3, -7.0]).unwrap(), ac_matrix(1.0));
        assert!(matches!(get_system("nope", &BTreeMap::new()), Err(Error::UnknownSystem(_))));
        assert!(matches!(get_system("ac_l4", &BTreeMap::new()), Err(Error::MissingParameter(p)) if p == "c"));
        assert!(get_system("harmonic", &params([("c", 1.0)])).is_err());
        let h = get_system("harmonic", &BTreeMap::new()).unwrap();
        let b = h.field.linear_part().unwrap();
        assert_eq!(b.transpose(), -b);
    }

    #[test]
    fn coupled_expectations() {
        let k = |a2: f64| get_system("coupled_osc", &params([("alpha1", 1.0), ("alpha2", a2)])).unwrap().expected_limit;
        assert_eq!(k(std::f64::consts::SQRT_2), ExpectedLimit::Torus { k: 2 });
        assert_eq!(k(2.0), ExpectedLimit::Torus { k: 1 });
        assert_eq!(k(0.0), ExpectedLimit::Torus { k: 1 });
        let e = get_system("coupled_osc", &default_params("coupled_osc")).unwrap();
        assert_eq!(e.field.dimension(), 4);
        assert!(e.field.is_linear());
    }

    #[test]
    fn rot_saturated_symmetric_jacobian_is_nonpositive() {
        for w in [1.0, -2.5] {
            let e = get_system("rot_saturated", &params([("omega", w)])).unwrap();
            for i in 0..=40 {
                for j in 0..=40 {
                    let x = [-2.0 + 0.1 * i as f64, -2.0 + 0.1 * j as f64];
                    assert!(mu_l2(&e.field.jacobian(&x).unwrap()) <= 1e-12, "{x:?}");
                }
            }
        }
    }

    #[test]
    fn all_defaults_build() {
        for n in names() {
            let e = get_system(n, &default_params(n)).unwrap();
            assert_eq!(e.x0.len(), e.field.dimension());
            e.domain.validate(e.field.dimension()).unwrap();
        }
    }
}
