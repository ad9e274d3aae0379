//! Reproduction runs for the worked examples, one consolidated report per
//! case.

use std::f64::consts::SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::catalog::{ac_matrix, get_system, params, CatalogEntry};
use crate::contraction::{
    certify_linear, check_demidovich, empirical_pairwise_test, Domain, Verdict,
};
use crate::error::{Error, Result};
use crate::limitset::{classify_limit_set, ClassifyConfig, LimitSet, LimitSetReport};
use crate::linear::analyze_conserved;
use crate::norms::{random_weighted_l2_family, NormSpec};
use crate::odeint::IntegratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Case {
    AcL4,
    Hurwitz,
    Tori,
    Polyhedral,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::AcL4, Case::Hurwitz, Case::Tori, Case::Polyhedral];

    pub fn name(self) -> &'static str {
        match self {
            Case::AcL4 => "ac_l4",
            Case::Hurwitz => "hurwitz",
            Case::Tori => "tori",
            Case::Polyhedral => "polyhedral",
        }
    }
}

impl fmt::Display for Case {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Case::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown case '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subcheck {
    pub name: String,
    pub passed: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseReport {
    pub case: String,
    pub passed: bool,
    pub subchecks: Vec<Subcheck>,
}

fn sub(name: impl Into<String>, passed: bool, detail: Value) -> Subcheck {
    Subcheck {
        name: name.into(),
        passed,
        detail,
    }
}

pub const AC_VALUES: [f64; 5] = [-2.0, -1.0, 0.5, 1.0, 2.0];

pub fn reproduce(case: Case) -> Result<CaseReport> {
    let subchecks = match case {
        Case::AcL4 => ac_l4()?,
        Case::Hurwitz => hurwitz()?,
        Case::Tori => tori()?,
        Case::Polyhedral => polyhedral()?,
    };
    Ok(CaseReport {
        case: case.name().to_string(),
        passed: subchecks.iter().all(|s| s.passed),
        subchecks,
    })
}

/// `[u^3, v^3] A_c [u; v]` and the scale of its four terms.
pub fn l4_margin(u: f64, v: f64, c: f64) -> (f64, f64) {
    let a = ac_matrix(c);
    let terms = [
        u.powi(3) * a[(0, 0)] * u,
        u.powi(3) * a[(0, 1)] * v,
        v.powi(3) * a[(1, 0)] * u,
        v.powi(3) * a[(1, 1)] * v,
    ];
    (terms.iter().sum(), terms.iter().map(|t| t.abs()).sum())
}

/// `-(u^2 + 2cuv - 2c^2 v^2)^2`.
pub fn l4_closed_form(u: f64, v: f64, c: f64) -> f64 {
    -(u * u + 2.0 * c * u * v - 2.0 * c * c * v * v).powi(2)
}

fn ac_l4() -> Result<Vec<Subcheck>> {
    let mut out: Vec<Subcheck> = AC_VALUES
        .par_iter()
        .map(|&c| -> Result<Subcheck> {
            let e = get_system("ac_l4", &params([("c", c)]))?;
            let r = check_demidovich(&e.field, &e.norm, &Domain::cube(2, 2.0), 2500, 500, 0)?;
            Ok(sub(
                format!("demidovich c={c}"),
                r.verdict == Verdict::PassedSampled && r.worst_margin <= 1e-9,
                json!({"verdict": r.verdict, "worst_margin": r.worst_margin}),
            ))
        })
        .collect::<Result<_>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let u = rng.random_range(-1.0..1.0);
        let v = rng.random_range(-1.0..1.0);
        let c = rng.random_range(-2.0..2.0);
        let (m, scale) = l4_margin(u, v, c);
        worst = worst.max((m - l4_closed_form(u, v, c)).abs() / scale.max(f64::MIN_POSITIVE));
    }
    out.push(sub(
        "closed form identity",
        worst <= 1e-9,
        json!({"pairs": 10000, "max_relative_error": worst}),
    ));

    let direction = |k: f64| -> (f64, Vec<f64>) {
        let mut w = 0.0f64;
        let mut ms = Vec::new();
        for &c in &AC_VALUES {
            let (m, scale) = l4_margin(k * c, 1.0, c);
            ms.push(m);
            w = w.max(m.abs() / scale);
        }
        (w, ms)
    };
    let s3 = 3f64.sqrt();
    let (w, ms) = direction(1.0 + s3);
    out.push(sub(
        "equality direction u = (1+sqrt3) c v",
        w <= 1e-9,
        json!({"max_relative_margin": w, "margins": ms}),
    ));
    let (wa, _) = direction(s3 - 1.0);
    let (wb, _) = direction(-(1.0 + s3));
    out.push(sub(
        "equality direction u = (-1 +- sqrt3) c v",
        wa.max(wb) <= 1e-9,
        json!({"max_relative_margin": wa.max(wb)}),
    ));

    let e = get_system("ac_l4", &params([("c", 1.0)]))?;
    let p = empirical_pairwise_test(
        &e.field,
        &e.norm,
        100,
        &Domain::cube(2, 2.0),
        20.0,
        &IntegratorConfig::default(),
        0,
    )?;
    out.push(sub(
        "pairwise distances c=1",
        p.passed && p.max_increment <= 1e-7,
        json!({"pairs": p.pairs, "max_increment": p.max_increment}),
    ));
    Ok(out)
}

/// Norms the Hurwitz example is checked against.
pub fn hurwitz_norm_family() -> Result<Vec<(String, NormSpec)>> {
    let mut v = vec![
        ("l1".to_string(), NormSpec::l1(2)),
        ("l2".to_string(), NormSpec::l2()),
        ("l4".to_string(), NormSpec::lp(4.0, 2)?),
        ("linf".to_string(), NormSpec::linf(2)),
    ];
    for (i, n) in random_weighted_l2_family(2, 100, 0.5, 2.0, 0)?.into_iter().enumerate() {
        v.push((format!("weighted_l2[{i}]"), n));
    }
    Ok(v)
}

fn hurwitz() -> Result<Vec<Subcheck>> {
    let e = get_system("hurwitz_noncontractive", &Default::default())?;
    let norms = hurwitz_norm_family()?;
    let results: Vec<(String, Verdict, f64)> = norms
        .par_iter()
        .map(|(label, n)| {
            let r = check_demidovich(&e.field, n, &e.domain, 2500, 500, 0)?;
            Ok((label.clone(), r.verdict, r.worst_margin))
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<Subcheck> = results[..4]
        .iter()
        .map(|(l, v, m)| {
            sub(
                format!("violated {l}"),
                *v == Verdict::Violated,
                json!({"verdict": v, "worst_margin": m}),
            )
        })
        .collect();
    let weighted = &results[4..];
    let violated = weighted.iter().filter(|r| r.1 == Verdict::Violated).count();
    let least = weighted.iter().map(|r| r.2).fold(f64::INFINITY, f64::min);
    out.push(sub(
        "violated random weighted l2",
        violated == weighted.len(),
        json!({"norms": weighted.len(), "violated": violated, "smallest_worst_margin": least}),
    ));
    let r = classify_entry(&e, &[1.0, 1.0]);
    out.push(sub(
        "classify from (1,1)",
        matches!(&r.limit_set, LimitSet::Equilibrium { point } if point.iter().all(|v| v.abs() < 1e-8)),
        serde_json::to_value(r.to_doc()).unwrap_or(Value::Null),
    ));
    Ok(out)
}

fn classify_entry(e: &CatalogEntry, x0: &[f64]) -> LimitSetReport {
    classify_limit_set(
        &e.field,
        x0,
        &e.norm,
        &ClassifyConfig::default(),
        &IntegratorConfig::default(),
    )
}

/// Torus verdict with residual and spectrum checks.
pub fn torus_ok(r: &LimitSetReport, k: usize) -> bool {
    match &r.limit_set {
        LimitSet::Torus { k: got, generator, .. } => {
            *got == k
                && generator.rms_residual < 1e-6
                && analyze_conserved(&generator.b_span, Some(1e-6))
                    .map(|a| a.eigenvalues.iter().all(|z| z.re.abs() < 1e-6))
                    .unwrap_or(false)
        }
        _ => false,
    }
}

fn tori() -> Result<Vec<Subcheck>> {
    let runs: Vec<(&str, CatalogEntry, usize)> = vec![
        ("harmonic", get_system("harmonic", &Default::default())?, 1),
        (
            "coupled(1, sqrt2)",
            get_system("coupled_osc", &params([("alpha1", 1.0), ("alpha2", SQRT_2)]))?,
            2,
        ),
        (
            "coupled(1, 2)",
            get_system("coupled_osc", &params([("alpha1", 1.0), ("alpha2", 2.0)]))?,
            1,
        ),
    ];
    Ok(runs
        .par_iter()
        .map(|(label, e, k)| {
            let r = classify_entry(e, &e.x0);
            sub(
                format!("{label} => k={k}"),
                torus_ok(&r, *k),
                serde_json::to_value(r.to_doc()).unwrap_or(Value::Null),
            )
        })
        .collect())
}

fn polyhedral() -> Result<Vec<Subcheck>> {
    let mut out = Vec::new();
    let d = get_system("diag_stable", &Default::default())?;
    let cert = certify_linear(&d.field.linear_part().unwrap(), &NormSpec::linf(2))?;
    out.push(sub(
        "diag_stable certified under linf",
        cert.verdict == Verdict::CertifiedExact,
        json!({"verdict": cert.verdict, "worst_margin": cert.worst_margin}),
    ));
    let r = classify_entry(&d, &d.x0);
    out.push(sub(
        "diag_stable converges to equilibrium",
        matches!(r.limit_set, LimitSet::Equilibrium { .. }),
        serde_json::to_value(r.to_doc()).unwrap_or(Value::Null),
    ));
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
    let cert = certify_linear(&rot, &NormSpec::linf(2))?;
    out.push(sub(
        "rotation violated under linf",
        cert.verdict == Verdict::Violated && cert.counterexample.is_some(),
        serde_json::to_value(&cert).unwrap_or(Value::Null),
    ));
    let consistency = polyhedral_consistency()?;
    let bad: Vec<&PolyhedralRow> = consistency
        .iter()
        .filter(|r| r.certified && r.classification != "equilibrium")
        .collect();
    out.push(sub(
        "polyhedral certificates imply equilibrium",
        bad.is_empty(),
        serde_json::to_value(&consistency).unwrap_or(Value::Null),
    ));
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyhedralRow {
    pub system: String,
    pub norm: String,
    pub certified: bool,
    pub classification: String,
}

/// Linear catalog systems paired with l1 and linf: exact certificate and
/// limit-set classification for each.
pub fn polyhedral_consistency() -> Result<Vec<PolyhedralRow>> {
    let mut systems: Vec<(String, CatalogEntry)> = Vec::new();
    for c in AC_VALUES {
        systems.push((format!("ac_l4(c={c})"), get_system("ac_l4", &params([("c", c)]))?));
    }
    systems.push(("harmonic".into(), get_system("harmonic", &Default::default())?));
    systems.push((
        "coupled_osc(1, sqrt2)".into(),
        get_system("coupled_osc", &params([("alpha1", 1.0), ("alpha2", SQRT_2)]))?,
    ));
    systems.push((
        "coupled_osc(1, 2)".into(),
        get_system("coupled_osc", &params([("alpha1", 1.0), ("alpha2", 2.0)]))?,
    ));
    systems.push(("diag_stable".into(), get_system("diag_stable", &Default::default())?));

    let jobs: Vec<(String, CatalogEntry, NormSpec)> = systems
        .into_iter()
        .flat_map(|(name, e)| {
            let n = e.field.dimension();
            [NormSpec::l1(n), NormSpec::linf(n)]
                .into_iter()
                .map(move |norm| (name.clone(), e.clone(), norm))
        })
        .collect();
    jobs.par_iter()
        .map(|(name, e, norm)| {
            let a = e.field.linear_part().expect("catalog entry is linear");
            let cert = certify_linear(&a, norm)?;
            let r = classify_limit_set(
                &e.field,
                &e.x0,
                norm,
                &ClassifyConfig::default(),
                &IntegratorConfig::default(),
            );
            Ok(PolyhedralRow {
                system: name.clone(),
                norm: norm.label(),
                certified: cert.verdict == Verdict::CertifiedExact,
                classification: r.label().to_string(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_names() {
        for c in Case::ALL {
            assert_eq!(c.name().parse::<Case>().unwrap(), c);
        }
        assert!("nope".parse::<Case>().is_err());
    }

    #[test]
    fn l4_identity_spot_values() {
        // u = v = c = 1: [1, 1] . (-5, 4) = -1 and -(1 + 2 - 2)^2 = -1
        assert_eq!(l4_margin(1.0, 1.0, 1.0).0, -1.0);
        assert_eq!(l4_closed_form(1.0, 1.0, 1.0), -1.0);
    }
}
