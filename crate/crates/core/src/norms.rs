//! Norms on R^n with the geometry the nonexpansivity checks need: evaluation,
//! supporting normals at a point of a sphere, strict convexity and matrix
//! measures (logarithmic norms).
//!
//! Supporting normals are always scaled so that `n . v = ||v||`. With that
//! scale `n` is the gradient of the norm at `v` (or a facet normal), has dual
//! norm one, and does not change when `v` is rescaled.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance for deciding that a facet is active at a point.
pub const ACTIVE_FACET_TOL: f64 = 1e-9;

const DEFAULT_MEASURE_SAMPLES: usize = 20_000;

/// Polytope unit ball `{x : eta_k . x <= 1 for all k}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    dim: usize,
    facets: Vec<DVector<f64>>,
    vertices: Vec<DVector<f64>>,
    /// For each vertex, indices of the facets active there.
    active: Vec<Vec<usize>>,
    name: Option<String>,
}

impl Polytope {
    /// Validates a facet/vertex description. Vertices may be omitted for
    /// n <= 3, in which case they are enumerated from the facets; for n <= 3
    /// a supplied vertex list is checked against the enumeration.
    pub fn new(facets: Vec<Vec<f64>>, vertices: Option<Vec<Vec<f64>>>) -> Result<Self> {
        let dim = facets
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidNorm("polyhedral norm needs facets".into()))?;
        if dim == 0 {
            return Err(Error::InvalidNorm("zero-dimensional facets".into()));
        }
        let facets: Vec<DVector<f64>> = facets
            .into_iter()
            .map(|f| {
                if f.len() != dim {
                    return Err(Error::InvalidNorm("facet normals of mixed length".into()));
                }
                if f.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidNorm("non-finite facet normal".into()));
                }
                Ok(DVector::from_vec(f))
            })
            .collect::<Result<_>>()?;

        for (k, eta) in facets.iter().enumerate() {
            let scale = eta.amax().max(1.0);
            if !facets
                .iter()
                .any(|other| (other + eta).amax() <= 1e-9 * scale)
            {
                return Err(Error::InvalidNorm(format!(
                    "facet {k} has no opposite facet; the unit ball must be symmetric"
                )));
            }
        }
        let stacked = DMatrix::from_columns(&facets);
        if stacked.rank(1e-10 * stacked.amax().max(1.0)) < dim {
            return Err(Error::InvalidNorm(
                "facet normals do not span the space; unit ball is unbounded".into(),
            ));
        }

        let enumerated = if dim <= 3 {
            Some(enumerate_vertices(&facets, dim))
        } else {
            None
        };
        let vertices: Vec<DVector<f64>> = match (vertices, enumerated.as_ref()) {
            (Some(vs), _) => vs
                .into_iter()
                .map(|v| {
                    if v.len() != dim {
                        return Err(Error::InvalidNorm("vertex of wrong length".into()));
                    }
                    Ok(DVector::from_vec(v))
                })
                .collect::<Result<_>>()?,
            (None, Some(e)) => e.clone(),
            (None, None) => {
                return Err(Error::InvalidNorm(format!(
                    "vertices must be supplied for polyhedral norms in dimension {dim} > 3"
                )))
            }
        };
        for (i, v) in vertices.iter().enumerate() {
            let value = facets.iter().map(|eta| eta.dot(v)).fold(f64::MIN, f64::max);
            if (value - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidNorm(format!(
                    "vertex {i} is not on the unit sphere (max facet value {value})"
                )));
            }
        }
        if let Some(e) = &enumerated {
            let same = e.len() == vertices.len()
                && e.iter()
                    .all(|a| vertices.iter().any(|b| (a - b).amax() < 1e-8));
            if !same {
                return Err(Error::InvalidNorm(format!(
                    "vertex list does not match the {} vertices of the facet polytope",
                    e.len()
                )));
            }
        }

        let active = vertices
            .iter()
            .map(|v| active_facets(&facets, v, 1.0))
            .collect();
        Ok(Polytope {
            dim,
            facets,
            vertices,
            active,
            name: None,
        })
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    /// The l1 ball: facets (+-1, ..., +-1), vertices +-e_i.
    pub fn l1(dim: usize) -> Self {
        let mut facets = Vec::with_capacity(1 << dim);
        for mask in 0..(1usize << dim) {
            facets.push(
                (0..dim)
                    .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                    .collect::<Vec<_>>(),
            );
        }
        let mut vertices = Vec::with_capacity(2 * dim);
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[i] = s;
                vertices.push(v);
            }
        }
        Polytope::new(facets, Some(vertices))
            .expect("l1 ball is a valid polytope")
            .with_name("l1")
    }

    /// The l-infinity ball: facets +-e_i, vertices (+-1, ..., +-1).
    pub fn linf(dim: usize) -> Self {
        let l1 = Polytope::l1(dim);
        let facets = l1.vertices.iter().map(|v| v.as_slice().to_vec()).collect();
        let vertices = l1.facets.iter().map(|v| v.as_slice().to_vec()).collect();
        Polytope::new(facets, Some(vertices))
            .expect("l-infinity ball is a valid polytope")
            .with_name("linf")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[DVector<f64>] {
        &self.facets
    }

    pub fn vertices(&self) -> &[DVector<f64>] {
        &self.vertices
    }

    /// Facet indices active at vertex `i`.
    pub fn active_at_vertex(&self, i: usize) -> &[usize] {
        &self.active[i]
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.facets
            .iter()
            .map(|eta| eta.iter().zip(x).map(|(a, b)| a * b).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

fn active_facets(facets: &[DVector<f64>], v: &DVector<f64>, norm: f64) -> Vec<usize> {
    facets
        .iter()
        .enumerate()
        .filter(|(_, eta)| eta.dot(v) >= norm - ACTIVE_FACET_TOL * norm.max(f64::MIN_POSITIVE))
        .map(|(k, _)| k)
        .collect()
}

/// Brute-force vertex enumeration: intersect every n-subset of facet planes
/// and keep the feasible, distinct solutions.
fn enumerate_vertices(facets: &[DVector<f64>], dim: usize) -> Vec<DVector<f64>> {
    let m = facets.len();
    let mut out: Vec<DVector<f64>> = Vec::new();
    let mut idx: Vec<usize> = (0..dim).collect();
    if m < dim {
        return out;
    }
    loop {
        let a = DMatrix::from_fn(dim, dim, |r, c| facets[idx[r]][c]);
        let b = DVector::from_element(dim, 1.0);
        if let Some(x) = a.clone().lu().solve(&b) {
            let residual = (&a * &x - &b).amax();
            let feasible = facets.iter().all(|eta| eta.dot(&x) <= 1.0 + 1e-9);
            if residual < 1e-9 && feasible && !out.iter().any(|y| (y - &x).amax() < 1e-8) {
                out.push(x);
            }
        }
        // next combination
        let mut i = dim;
        loop {
            if i == 0 {
                return out;
            }
            i -= 1;
            if idx[i] < m - dim + i {
                idx[i] += 1;
                for j in i + 1..dim {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Weighted Euclidean norm `sqrt(x' P x)` with `P = L'L`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedL2 {
    p: DMatrix<f64>,
    /// Upper factor `L` with `P = L'L`.
    l: DMatrix<f64>,
    l_inv: DMatrix<f64>,
}

impl WeightedL2 {
    pub fn new(p: DMatrix<f64>) -> Result<Self> {
        if !p.is_square() || p.nrows() == 0 {
            return Err(Error::InvalidNorm("weight matrix must be square".into()));
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidNorm("non-finite weight matrix".into()));
        }
        let scale = p.amax().max(f64::MIN_POSITIVE);
        if (&p - p.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidNorm("weight matrix is not symmetric".into()));
        }
        let p = (&p + p.transpose()) * 0.5;
        let eig = p.clone().symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidNorm(
                "weight matrix is not positive definite".into(),
            ));
        }
        let chol = p
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidNorm("Cholesky factorization failed".into()))?;
        let l = chol.l().transpose();
        let l_inv = l
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidNorm("singular Cholesky factor".into()))?;
        Ok(WeightedL2 { p, l, l_inv })
    }

    pub fn identity(dim: usize) -> Self {
        WeightedL2::new(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.l
    }

    pub fn dim(&self) -> usize {
        self.p.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormSpec {
    /// l^p with 1 < p < infinity. l1 and l-infinity are represented as
    /// [`NormSpec::Polyhedral`].
    Lp(f64),
    WeightedL2(WeightedL2),
    Polyhedral(Polytope),
}

/// Supporting normals of the ball `B_||v||` at `v`, scaled so `n . v = ||v||`.
#[derive(Debug, Clone, PartialEq)]
pub enum SupportingNormalSet {
    Unique(DVector<f64>),
    /// `N_v` is the convex hull of these.
    Finite(Vec<DVector<f64>>),
}

impl SupportingNormalSet {
    pub fn normals(&self) -> &[DVector<f64>] {
        match self {
            SupportingNormalSet::Unique(n) => std::slice::from_ref(n),
            SupportingNormalSet::Finite(ns) => ns,
        }
    }
}

/// Logarithmic norm value. `lower_bound` is set when the value comes from
/// sampling (general l^p) rather than a closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatrixMeasure {
    pub value: f64,
    pub lower_bound: bool,
    pub samples: usize,
}

impl NormSpec {
    /// l^p norm; p = 1 and p = infinity become the polyhedral l1/l-infinity balls.
    pub fn lp(p: f64, dim: usize) -> Result<Self> {
        if p.is_nan() || p < 1.0 {
            return Err(Error::InvalidNorm(format!("l^p needs p >= 1, got {p}")));
        }
        if p == 1.0 {
            Ok(NormSpec::Polyhedral(Polytope::l1(dim)))
        } else if p.is_infinite() {
            Ok(NormSpec::Polyhedral(Polytope::linf(dim)))
        } else {
            Ok(NormSpec::Lp(p))
        }
    }

    pub fn l1(dim: usize) -> Self {
        NormSpec::Polyhedral(Polytope::l1(dim))
    }

    pub fn l2() -> Self {
        NormSpec::Lp(2.0)
    }

    pub fn linf(dim: usize) -> Self {
        NormSpec::Polyhedral(Polytope::linf(dim))
    }

    pub fn weighted_l2(p: DMatrix<f64>) -> Result<Self> {
        Ok(NormSpec::WeightedL2(WeightedL2::new(p)?))
    }

    /// Fixed dimension of the norm, if it has one (l^p works in any dimension).
    pub fn dim(&self) -> Option<usize> {
        match self {
            NormSpec::Lp(_) => None,
            NormSpec::WeightedL2(w) => Some(w.dim()),
            NormSpec::Polyhedral(p) => Some(p.dim()),
        }
    }

    /// Short human-readable label, e.g. `l4`, `linf`, `weighted_l2`.
    pub fn label(&self) -> String {
        match self {
            NormSpec::Lp(p) => format!("l{p}"),
            NormSpec::WeightedL2(_) => "weighted_l2".into(),
            NormSpec::Polyhedral(poly) => poly.name().unwrap_or("polyhedral").into(),
        }
    }

    pub fn check_dim(&self, n: usize) -> Result<()> {
        match self.dim() {
            Some(d) if d != n => Err(Error::DimensionMismatch {
                expected: d,
                found: n,
            }),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(match self {
            NormSpec::Lp(p) => {
                let m = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                if m == 0.0 || !m.is_finite() {
                    return Ok(m);
                }
                m * x.iter().map(|v| (v.abs() / m).powf(*p)).sum::<f64>().powf(1.0 / p)
            }
            NormSpec::WeightedL2(w) => {
                let v = DVector::from_column_slice(x);
                (&w.l * v).norm()
            }
            NormSpec::Polyhedral(poly) => poly.eval(x),
        })
    }

    pub fn supporting_normals(&self, v: &[f64]) -> Result<SupportingNormalSet> {
        self.check_dim(v.len())?;
        let norm = self.eval(v)?;
        if norm == 0.0 {
            return Err(Error::ZeroVector);
        }
        let vv = DVector::from_column_slice(v);
        Ok(match self {
            NormSpec::Lp(p) => {
                let n = vv.map(|c| {
                    let u = c / norm;
                    u.signum() * u.abs().powf(p - 1.0)
                });
                // exact n . v = ||v|| up to rounding of the power sums
                let s = norm / n.dot(&vv);
                SupportingNormalSet::Unique(n * s)
            }
            NormSpec::WeightedL2(w) => SupportingNormalSet::Unique(&w.p * &vv / norm),
            NormSpec::Polyhedral(poly) => {
                let ks = active_facets(&poly.facets, &vv, norm);
                let ns: Vec<_> = ks.into_iter().map(|k| poly.facets[k].clone()).collect();
                if ns.len() == 1 {
                    SupportingNormalSet::Unique(ns.into_iter().next().unwrap())
                } else {
                    SupportingNormalSet::Finite(ns)
                }
            }
        })
    }

    pub fn is_strictly_convex(&self) -> bool {
        match self {
            NormSpec::Lp(p) => *p > 1.0 && p.is_finite(),
            NormSpec::WeightedL2(_) => true,
            NormSpec::Polyhedral(_) => false,
        }
    }

    /// True when [`NormSpec::matrix_measure`] is a closed form rather than a sample bound.
    pub fn has_exact_measure(&self) -> bool {
        !matches!(self, NormSpec::Lp(p) if *p != 2.0)
    }

    pub fn matrix_measure(&self, a: &DMatrix<f64>) -> Result<MatrixMeasure> {
        self.matrix_measure_sampled(a, DEFAULT_MEASURE_SAMPLES, 0)
    }

    /// As [`NormSpec::matrix_measure`]; `samples`/`seed` only matter for general l^p.
    pub fn matrix_measure_sampled(
        &self,
        a: &DMatrix<f64>,
        samples: usize,
        seed: u64,
    ) -> Result<MatrixMeasure> {
        if !a.is_square() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                found: a.ncols(),
            });
        }
        self.check_dim(a.nrows())?;
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let exact = |value| MatrixMeasure {
            value,
            lower_bound: false,
            samples: 0,
        };
        Ok(match self {
            NormSpec::Lp(p) if *p == 2.0 => exact(mu_l2(a)),
            NormSpec::Lp(_) => {
                let mut best = f64::NEG_INFINITY;
                for v in self.sphere_sample(a.nrows(), samples, seed)? {
                    let n = match self.supporting_normals(v.as_slice())? {
                        SupportingNormalSet::Unique(n) => n,
                        SupportingNormalSet::Finite(_) => unreachable!(),
                    };
                    best = best.max(n.dot(&(a * &v)));
                }
                MatrixMeasure {
                    value: best,
                    lower_bound: true,
                    samples,
                }
            }
            NormSpec::WeightedL2(w) => exact(mu_l2(&(&w.l * a * &w.l_inv))),
            NormSpec::Polyhedral(poly) => {
                let mut best = f64::NEG_INFINITY;
                for (i, v) in poly.vertices.iter().enumerate() {
                    let av = a * v;
                    for &k in &poly.active[i] {
                        best = best.max(poly.facets[k].dot(&av));
                    }
                }
                exact(best)
            }
        })
    }

    /// `count` deterministic points on the unit sphere of this norm in R^dim.
    pub fn sphere_sample(&self, dim: usize, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        self.check_dim(dim)?;
        if dim == 0 {
            return Err(Error::InvalidArgument("dimension must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let g = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
            let n = self.eval(g.as_slice())?;
            if n > 1e-6 {
                out.push(g / n);
            }
        }
        Ok(out)
    }
}

/// l1 logarithmic norm: max over columns of `a_jj + sum_{i != j} |a_ij|`.
pub fn mu_l1(a: &DMatrix<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| {
            a[(j, j)]
                + (0..a.nrows())
                    .filter(|&i| i != j)
                    .map(|i| a[(i, j)].abs())
                    .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// l-infinity logarithmic norm: max over rows of `a_ii + sum_{j != i} |a_ij|`.
pub fn mu_linf(a: &DMatrix<f64>) -> f64 {
    (0..a.nrows())
        .map(|i| {
            a[(i, i)]
                + (0..a.ncols())
                    .filter(|&j| j != i)
                    .map(|j| a[(i, j)].abs())
                    .sum::<f64>()
        })
        .fold(f64::NEG_INFINITY, f64::max)
}

/// l2 logarithmic norm: largest eigenvalue of the symmetric part.
pub fn mu_l2(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Seeded family of weighted Euclidean norms `P = R diag(l) R'` with `R` a
/// random rotation (QR of a Gaussian matrix) and `l` uniform in
/// `[min_eig, max_eig]`.
pub fn random_weighted_l2_family(
    dim: usize,
    count: usize,
    min_eig: f64,
    max_eig: f64,
    seed: u64,
) -> Result<Vec<NormSpec>> {
    if dim == 0 || !(min_eig > 0.0) || !(max_eig >= min_eig) {
        return Err(Error::InvalidArgument("need dim > 0 and 0 < min_eig <= max_eig".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let g = DMatrix::from_fn(dim, dim, |_, _| -> f64 { StandardNormal.sample(&mut rng) });
        let q = g.qr().q();
        let l = DVector::from_fn(dim, |_, _| {
            let u: f64 = rand::Rng::random(&mut rng);
            min_eig + (max_eig - min_eig) * u
        });
        let p = &q * DMatrix::from_diagonal(&l) * q.transpose();
        let p = (&p + p.transpose()) * 0.5;
        out.push(NormSpec::weighted_l2(p)?);
    }
    Ok(out)
}

// --- JSON representation -------------------------------------------------

/// `p` as written in documents: a number or the string `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PValue {
    Number(f64),
    Named(String),
}

impl PValue {
    pub fn value(&self) -> Result<f64> {
        match self {
            PValue::Number(p) => Ok(*p),
            PValue::Named(s) if matches!(s.as_str(), "inf" | "infinity" | "Infinity") => {
                Ok(f64::INFINITY)
            }
            PValue::Named(s) => Err(Error::InvalidNorm(format!("bad p value '{s}'"))),
        }
    }
}

/// Tagged norm object of the system document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NormDoc {
    Lp {
        p: PValue,
    },
    WeightedL2 {
        #[serde(rename = "P")]
        p: Vec<Vec<f64>>,
    },
    Polyhedral {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        name: Option<String>,
        facets: Vec<Vec<f64>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        vertices: Option<Vec<Vec<f64>>>,
    },
}

impl NormDoc {
    pub fn build(&self, dim: usize) -> Result<NormSpec> {
        let spec = match self {
            NormDoc::Lp { p } => NormSpec::lp(p.value()?, dim)?,
            NormDoc::WeightedL2 { p } => {
                if p.len() != dim || p.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidNorm(format!("P must be {dim}x{dim}")));
                }
                let flat: Vec<f64> = p.iter().flatten().copied().collect();
                NormSpec::weighted_l2(DMatrix::from_row_slice(dim, dim, &flat))?
            }
            NormDoc::Polyhedral {
                name,
                facets,
                vertices,
            } => {
                let mut poly = Polytope::new(facets.clone(), vertices.clone())?;
                if let Some(n) = name {
                    poly = poly.with_name(n.clone());
                }
                NormSpec::Polyhedral(poly)
            }
        };
        spec.check_dim(dim)?;
        Ok(spec)
    }
}

impl From<&NormSpec> for NormDoc {
    fn from(spec: &NormSpec) -> Self {
        let rows = |m: &DMatrix<f64>| {
            (0..m.nrows())
                .map(|i| m.row(i).iter().copied().collect())
                .collect()
        };
        let list = |vs: &[DVector<f64>]| vs.iter().map(|v| v.as_slice().to_vec()).collect();
        match spec {
            NormSpec::Lp(p) => NormDoc::Lp {
                p: PValue::Number(*p),
            },
            NormSpec::WeightedL2(w) => NormDoc::WeightedL2 { p: rows(&w.p) },
            NormSpec::Polyhedral(poly) => NormDoc::Polyhedral {
                name: poly.name.clone(),
                facets: list(&poly.facets),
                vertices: Some(list(&poly.vertices)),
            },
        }
    }
}
