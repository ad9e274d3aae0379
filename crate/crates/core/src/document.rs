//! JSON system documents.
//!
//! ```json
//! {
//!   "dimension": 2,
//!   "field": ["y", "-x"],
//!   "norm": {"type": "lp", "p": 2},
//!   "domain": {"type": "box", "lower": [-2, -2], "upper": [2, 2]},
//!   "x0": [1, 0]
//! }
//! ```
//!
//! Optional sections `integrator`, `classification` and `check` override
//! defaults key by key. Unknown keys are rejected everywhere. The schema is
//! published as `schema/system.schema.json`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog::CatalogEntry;
use crate::contraction::{DemidovichOptions, Domain};
use crate::error::{Error, Result};
use crate::expr::{parse_expr, VectorFieldDef};
use crate::limitset::ClassifyConfig;
use crate::norms::{NormDoc, NormSpec};
use crate::odeint::IntegratorConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDocument {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub dimension: usize,
    pub field: Vec<String>,
    pub norm: NormDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Domain>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub classification: Option<ClassifyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckSettings>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl IntegratorOverrides {
    pub fn apply(&self, mut cfg: IntegratorConfig) -> IntegratorConfig {
        if let Some(v) = self.rtol {
            cfg.rtol = v;
        }
        if let Some(v) = self.atol {
            cfg.atol = v;
        }
        if let Some(v) = self.max_step {
            cfg.max_step = v;
        }
        if let Some(v) = self.max_steps {
            cfg.max_steps = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    /// State samples (nx).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Direction samples (nv).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directions: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

/// A validated document.
#[derive(Debug, Clone)]
pub struct System {
    pub name: Option<String>,
    pub field: VectorFieldDef,
    pub norm: NormSpec,
    pub domain: Domain,
    pub x0: Option<Vec<f64>>,
    pub integrator: IntegratorConfig,
    pub classify: ClassifyConfig,
    pub check: DemidovichOptions,
}

/// Box used when a document has no domain.
pub const DEFAULT_HALF_WIDTH: f64 = 1.0;

impl SystemDocument {
    pub fn from_json(src: &str) -> Result<Self> {
        serde_json::from_str(src).map_err(|e| Error::Document(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let src = std::fs::read_to_string(path)
            .map_err(|e| Error::Document(format!("{}: {e}", path.display())))?;
        Self::from_json(&src)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("documents always serialize")
    }

    pub fn build(&self) -> Result<System> {
        let n = self.dimension;
        if n == 0 {
            return Err(Error::Document("dimension must be positive".into()));
        }
        if self.field.len() != n {
            return Err(Error::Arity {
                expected: n,
                found: self.field.len(),
            });
        }
        let comps = self
            .field
            .iter()
            .enumerate()
            .map(|(i, src)| parse_expr(src, n).map_err(|e| Error::Document(format!("field[{i}]: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let field = VectorFieldDef::new(n, comps)?;
        let norm = self.norm.build(n)?;
        let domain = self.domain.clone().unwrap_or(Domain::cube(n, DEFAULT_HALF_WIDTH));
        if domain != Domain::Global {
            domain.validate(n)?;
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: x0.len(),
                });
            }
            if x0.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite);
            }
        }
        let integrator = self.integrator.unwrap_or_default().apply(IntegratorConfig::default());
        integrator.validate()?;
        let classify = self.classification.clone().unwrap_or_default();
        classify.validate()?;
        let c = self.check.unwrap_or_default();
        let defaults = DemidovichOptions::default();
        let check = DemidovichOptions {
            nx: c.samples.unwrap_or(defaults.nx),
            nv: c.directions.unwrap_or(defaults.nv),
            seed: c.seed.unwrap_or(defaults.seed),
            tolerance: c.tolerance.unwrap_or(defaults.tolerance),
            ..defaults
        };
        Ok(System {
            name: self.name.clone(),
            field,
            norm,
            domain,
            x0: self.x0.clone(),
            integrator,
            classify,
            check,
        })
    }
}

impl From<&CatalogEntry> for SystemDocument {
    fn from(e: &CatalogEntry) -> Self {
        SystemDocument {
            name: Some(e.name.to_string()),
            dimension: e.field.dimension(),
            field: e.field.to_strings(),
            norm: NormDoc::from(&e.norm),
            domain: Some(e.domain.clone()),
            x0: Some(e.x0.clone()),
            integrator: None,
            classification: None,
            check: None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::{default_params, get_system, names};

    #[test]
    fn minimal_document() {
        let d = SystemDocument::from_json(
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 2}}"#,
        )
        .unwrap();
        let s = d.build().unwrap();
        assert_eq!(s.domain, Domain::cube(2, 1.0));
        assert_eq!(s.check, DemidovichOptions::default());
        assert_eq!(s.integrator, IntegratorConfig::default());
    }

    #[test]
    fn overrides() {
        let d = SystemDocument::from_json(
            r#"{"dimension": 1, "field": ["-x"], "norm": {"type": "lp", "p": "inf"},
                "integrator": {"rtol": 1e-6},
                "classification": {"transient": 10, "window": 20},
                "check": {"samples": 10, "seed": 3}}"#,
        )
        .unwrap();
        let s = d.build().unwrap();
        assert_eq!(s.integrator.rtol, 1e-6);
        assert_eq!(s.integrator.atol, IntegratorConfig::default().atol);
        assert_eq!(s.classify.transient, 10.0);
        assert_eq!(s.classify.sample_dt, 0.5);
        assert_eq!((s.check.nx, s.check.nv, s.check.seed), (10, 500, 3));
    }

    #[test]
    fn rejections() {
        let bad = [
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 2}, "extra": 1}"#,
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 2, "q": 1}}"#,
            r#"{"dimension": 2, "field": ["y"], "norm": {"type": "lp", "p": 2}}"#,
            r#"{"dimension": 2, "field": ["y", "-x +"], "norm": {"type": "lp", "p": 2}}"#,
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 0.5}}"#,
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 2}, "x0": [1]}"#,
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 2}, "integrator": {"rtol": -1}}"#,
            r#"{"dimension": 2, "field": ["y", "-x"], "norm": {"type": "lp", "p": 2}, "classification": {"window": 0}}"#,
            r#"{"dimension": 2, "field": ["y", "-x"]"#,
        ];
        for src in bad {
            let r = SystemDocument::from_json(src).and_then(|d| d.build());
            assert!(r.is_err(), "{src}");
        }
        let err = SystemDocument::from_json(
            r#"{"dimension": 2, "field": ["y", "-x +"], "norm": {"type": "lp", "p": 2}}"#,
        )
        .unwrap()
        .build()
        .unwrap_err();
        assert!(err.to_string().contains("field[1]"), "{err}");
    }

    #[test]
    fn catalog_round_trip() {
        for n in names() {
            let e = get_system(n, &default_params(n)).unwrap();
            let doc = SystemDocument::from(&e);
            let back = SystemDocument::from_json(&doc.to_json_pretty()).unwrap();
            assert_eq!(doc, back);
            let s = back.build().unwrap();
            assert_eq!(s.field.components(), e.field.components(), "{n}");
            assert_eq!(s.norm, e.norm);
        }
    }
}
