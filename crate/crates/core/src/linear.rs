//! Conserved linear systems `dx/dt = B x`.
//!
//! B is conserved when it is diagonalizable with a purely imaginary
//! spectrum. Then a real basis L exists with `L^-1 B L` block diagonal,
//! made of 2x2 blocks `[[0, a], [-a, 0]]` and zeros, so the flow is a
//! product of rotations in L-coordinates and `x' P x` with
//! `P = L^-T L^-1` is conserved. Orbit closures are tori whose dimension
//! is the number of rationally independent frequencies the initial state
//! excites.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::VectorFieldDef;

#[derive(Debug, Clone, PartialEq)]
pub struct ConservedAnalysis {
    pub b: DMatrix<f64>,
    pub eigenvalues: Vec<Complex64>,
    pub conserved: bool,
    /// One positive frequency per 2x2 block, in block order.
    pub frequencies: Vec<f64>,
    pub zero_blocks: usize,
    /// Columns: (Re w, Im w) per block, then zero-eigenspace vectors.
    /// Only meaningful when `conserved`.
    pub basis: DMatrix<f64>,
    pub basis_inv: DMatrix<f64>,
    /// `||L^-1 B L - K||_F` against the ideal block form K.
    pub block_residual: f64,
    pub spectral_tol: f64,
    /// Why the matrix is not conserved, if it is not.
    pub reason: Option<String>,
}

impl ConservedAnalysis {
    /// Ideal block-diagonal generator in L-coordinates.
    pub fn block_form(&self) -> DMatrix<f64> {
        let n = self.b.nrows();
        let mut k = DMatrix::zeros(n, n);
        for (j, a) in self.frequencies.iter().enumerate() {
            k[(2 * j, 2 * j + 1)] = *a;
            k[(2 * j + 1, 2 * j)] = -*a;
        }
        k
    }

    /// `e^{Bt}` from the block form: exact rotations, no series.
    pub fn exp(&self, t: f64) -> DMatrix<f64> {
        &self.basis * self.block_rotation(t) * &self.basis_inv
    }

    fn block_rotation(&self, t: f64) -> DMatrix<f64> {
        let n = self.b.nrows();
        let mut r = DMatrix::identity(n, n);
        for (j, a) in self.frequencies.iter().enumerate() {
            let (s, c) = (a * t).sin_cos();
            r[(2 * j, 2 * j)] = c;
            r[(2 * j, 2 * j + 1)] = s;
            r[(2 * j + 1, 2 * j)] = -s;
            r[(2 * j + 1, 2 * j + 1)] = c;
        }
        r
    }

    fn require_conserved(&self) -> Result<()> {
        if self.conserved {
            Ok(())
        } else {
            Err(Error::Precondition(format!(
                "generator is not conserved: {}",
                self.reason.as_deref().unwrap_or("unknown")
            )))
        }
    }
}

fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

/// Default "zero real part" tolerance: 1e-8 relative to ||B||.
pub fn default_spectral_tol(b: &DMatrix<f64>) -> f64 {
    (1e-8 * spectral_norm(b)).max(1e-14)
}

/// Eigen-structure test for conservation and the real block basis.
pub fn analyze_conserved(b: &DMatrix<f64>, spectral_tol: Option<f64>) -> Result<ConservedAnalysis> {
    if !b.is_square() || b.nrows() == 0 {
        return Err(Error::InvalidArgument("generator must be a non-empty square matrix".into()));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite matrix entries".into()));
    }
    let n = b.nrows();
    let scale = spectral_norm(b);
    let tol = spectral_tol.unwrap_or_else(|| default_spectral_tol(b));
    let mut eigenvalues: Vec<Complex64> = b
        .clone()
        .try_schur(1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?
        .complex_eigenvalues()
        .iter()
        .copied()
        .collect();
    eigenvalues.sort_by(|x, y| x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re)));

    let mut analysis = ConservedAnalysis {
        b: b.clone(),
        eigenvalues: eigenvalues.clone(),
        conserved: false,
        frequencies: Vec::new(),
        zero_blocks: 0,
        basis: DMatrix::identity(n, n),
        basis_inv: DMatrix::identity(n, n),
        block_residual: f64::INFINITY,
        spectral_tol: tol,
        reason: None,
    };

    if let Some(l) = eigenvalues.iter().find(|l| l.re.abs() >= tol) {
        analysis.reason = Some(format!("eigenvalue {l} has nonzero real part"));
        return Ok(analysis);
    }
    if scale == 0.0 {
        analysis.zero_blocks = n;
        analysis.block_residual = 0.0;
        analysis.conserved = true;
        return Ok(analysis);
    }

    // cluster by imaginary part
    let cluster_tol = (1e-6 * scale).max(tol);
    let mut clusters: Vec<Vec<f64>> = Vec::new();
    for l in &eigenvalues {
        match clusters.last_mut() {
            Some(c) if (l.im - c.last().unwrap()).abs() <= cluster_tol => c.push(l.im),
            _ => clusters.push(vec![l.im]),
        }
    }
    let null_tol = 1e-6 * scale;
    let mut pair_columns: Vec<(f64, DVector<f64>, DVector<f64>)> = Vec::new();
    let mut zero_columns: Vec<DVector<f64>> = Vec::new();
    for c in &clusters {
        let center = c.iter().sum::<f64>() / c.len() as f64;
        if center < -cluster_tol {
            continue;
        }
        if center.abs() <= cluster_tol {
            let svd = b.clone().svd(false, true);
            let v_t = svd.v_t.as_ref().unwrap();
            let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] < null_tol).collect();
            if null.len() != c.len() {
                analysis.reason = Some(format!(
                    "zero eigenvalue has algebraic multiplicity {} but only {} eigenvectors",
                    c.len(),
                    null.len()
                ));
                return Ok(analysis);
            }
            for i in null {
                zero_columns.push(v_t.row(i).transpose());
            }
        } else {
            let shifted: DMatrix<Complex64> = DMatrix::from_fn(n, n, |i, j| {
                let d = if i == j { Complex64::new(0.0, center) } else { Complex64::new(0.0, 0.0) };
                Complex64::new(b[(i, j)], 0.0) - d
            });
            let svd = shifted.svd(false, true);
            let v_t = svd.v_t.as_ref().unwrap();
            let null: Vec<usize> = (0..n).filter(|&i| svd.singular_values[i] < null_tol).collect();
            if null.len() != c.len() {
                analysis.reason = Some(format!(
                    "eigenvalue {center}i has algebraic multiplicity {} but only {} eigenvectors",
                    c.len(),
                    null.len()
                ));
                return Ok(analysis);
            }
            for i in null {
                let w = v_t.row(i).adjoint();
                pair_columns.push((center, w.map(|z| z.re), w.map(|z| z.im)));
            }
        }
    }
    if 2 * pair_columns.len() + zero_columns.len() != n {
        analysis.reason = Some("eigenvalues do not pair into conjugates".into());
        return Ok(analysis);
    }

    let mut cols: Vec<DVector<f64>> = Vec::with_capacity(n);
    let mut freqs = Vec::with_capacity(pair_columns.len());
    for (a, re, im) in pair_columns {
        freqs.push(a);
        cols.push(re);
        cols.push(im);
    }
    let zero_blocks = zero_columns.len();
    cols.extend(zero_columns);
    let basis = DMatrix::from_columns(&cols);
    let svals = basis.clone().svd(false, false).singular_values;
    let cond = svals.max() / svals.min();
    if !(cond < 1e12) {
        analysis.reason = Some(format!("eigenvector basis is singular (condition {cond:e})"));
        return Ok(analysis);
    }
    let basis_inv = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Eigen("eigenvector basis not invertible".into()))?;

    analysis.frequencies = freqs;
    analysis.zero_blocks = zero_blocks;
    analysis.basis = basis;
    analysis.basis_inv = basis_inv;
    analysis.block_residual =
        (&analysis.basis_inv * b * &analysis.basis - analysis.block_form()).norm();
    analysis.conserved = true;
    Ok(analysis)
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInvariant {
    /// Symmetric positive definite, normalized to trace n.
    pub p: DMatrix<f64>,
    /// `||B'P + PB||_F`.
    pub residual: f64,
}

/// `P = M'M` with `M = L^-1`, so `x'Px` is the squared Euclidean norm in
/// block coordinates, where the flow is a rotation.
pub fn quadratic_invariant(analysis: &ConservedAnalysis) -> Result<QuadraticInvariant> {
    analysis.require_conserved()?;
    let n = analysis.b.nrows();
    let m = &analysis.basis_inv;
    let p = m.transpose() * m;
    let p = (&p + p.transpose()) * (0.5 * n as f64 / p.trace());
    let b = &analysis.b;
    let residual = (b.transpose() * &p + &p * b).norm();
    Ok(QuadraticInvariant { p, residual })
}

/// First `t` in `[delta, horizon]` with `||e^{Bt} - I||_2 < eps`, refined to
/// the nearby minimum of the deviation. `None` when the horizon is too short.
pub fn min_return_time(b: &DMatrix<f64>, eps: f64, delta: f64, horizon: f64) -> Result<Option<f64>> {
    let analysis = analyze_conserved(b, None)?;
    return_time(&analysis, eps, delta, horizon)
}

pub fn return_time(
    analysis: &ConservedAnalysis,
    eps: f64,
    delta: f64,
    horizon: f64,
) -> Result<Option<f64>> {
    analysis.require_conserved()?;
    if !(eps > 0.0) || !(delta > 0.0) {
        return Err(Error::InvalidArgument("eps and delta must be positive".into()));
    }
    let n = analysis.b.nrows();
    let ident = DMatrix::<f64>::identity(n, n);
    let deviation = |t: f64| spectral_norm(&(analysis.exp(t) - &ident));
    if analysis.frequencies.is_empty() {
        return Ok((delta <= horizon).then_some(delta));
    }
    let kappa = spectral_norm(&analysis.basis) * spectral_norm(&analysis.basis_inv);
    let amax = analysis.frequencies.iter().copied().fold(0.0, f64::max);
    let amin = analysis.frequencies.iter().copied().fold(f64::INFINITY, f64::min);
    // |d/dt e^{Bt}| <= kappa * max frequency
    let lip = kappa * amax;
    let min_step = eps / (4.0 * lip);

    let mut t = delta;
    while t <= horizon {
        let d = deviation(t);
        if d < eps {
            if t == delta {
                return Ok(Some(t));
            }
            let w = (2.0 * eps * kappa / amin).min(std::f64::consts::PI / amax);
            let lo = (t - w).max(delta);
            let hi = (t + w).min(horizon);
            let tm = golden_min(&deviation, lo, hi, 200);
            return Ok(Some(if deviation(tm) <= d { tm } else { t }));
        }
        t += ((d - eps) / lip).max(min_step);
    }
    Ok(None)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if b - a <= 1e-15 * b.abs().max(1.0) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        c
    } else {
        d
    }
}

/// Dimension of the closure of `{e^{Bt} x0}`: the number of excited
/// frequencies minus the rank of their integer relations with
/// `|m_i| <= coeff_bound` (bounded exhaustive search).
pub fn torus_dimension(
    analysis: &ConservedAnalysis,
    x0: &[f64],
    coeff_bound: u32,
    tol: f64,
) -> Result<usize> {
    analysis.require_conserved()?;
    let n = analysis.b.nrows();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    let z = &analysis.basis_inv * DVector::from_column_slice(x0);
    let alive: Vec<f64> = analysis
        .frequencies
        .iter()
        .enumerate()
        .filter(|(j, _)| z[2 * j].abs() >= tol || z[2 * j + 1].abs() >= tol)
        .map(|(_, a)| *a)
        .collect();
    if alive.is_empty() {
        return Ok(0);
    }
    let rank = relation_rank(&alive, coeff_bound, tol)?;
    Ok(alive.len() - rank)
}

/// Rank of the integer relations `m` with `|m . alpha| < tol * |m|` and
/// `|m_i| <= bound`. Alpha must be positive, so the rank is at most l - 1.
pub fn relation_rank(alpha: &[f64], bound: u32, tol: f64) -> Result<usize> {
    let l = alpha.len();
    if l <= 1 {
        return Ok(0);
    }
    let side = 2 * bound as u64 + 1;
    if (side as f64).powi(l as i32) > 2e9 {
        return Err(Error::InvalidArgument(format!(
            "integer relation search over {l} frequencies with bound {bound} is too large"
        )));
    }
    let bound = bound as i64;
    // canonical representatives: first coordinate >= 0
    let found: Vec<Vec<i64>> = (0..=bound)
        .into_par_iter()
        .flat_map_iter(|m0| {
            let mut out = Vec::new();
            let mut m = vec![-bound; l];
            m[0] = m0;
            loop {
                if m.iter().any(|&c| c != 0) {
                    let dot: f64 = m.iter().zip(alpha).map(|(&c, a)| c as f64 * a).sum();
                    let len = m.iter().map(|&c| (c * c) as f64).sum::<f64>().sqrt();
                    if dot.abs() < tol * len {
                        out.push(m.clone());
                    }
                }
                let mut i = l - 1;
                loop {
                    if i == 0 {
                        return out.into_iter();
                    }
                    if m[i] < bound {
                        m[i] += 1;
                        break;
                    }
                    m[i] = -bound;
                    i -= 1;
                }
            }
        })
        .collect();
    let mut basis: Vec<DVector<f64>> = Vec::new();
    for m in found {
        let mut v = DVector::from_iterator(l, m.iter().map(|&c| c as f64));
        for q in &basis {
            let c = q.dot(&v);
            v -= q * c;
        }
        let nv = v.norm();
        if nv > 1e-9 {
            basis.push(v / nv);
            if basis.len() == l - 1 {
                break;
            }
        }
    }
    Ok(basis.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorFit {
    /// Fitted generator in ambient coordinates, `Q B_span Q'`.
    pub b: DMatrix<f64>,
    /// Generator in span coordinates.
    pub b_span: DMatrix<f64>,
    /// Orthonormal basis (columns) of span{y_j - equilibrium}.
    pub span_basis: DMatrix<f64>,
    pub equilibrium: Vec<f64>,
    /// RMS of `||f(y_j) - B (y_j - equilibrium)||`.
    pub rms_residual: f64,
    pub rank: usize,
}

/// Relative singular value below which sample directions are dropped.
pub const SPAN_REL_TOL: f64 = 1e-8;

/// Orthonormal basis of the column span of `y`, dropping singular values
/// below `SPAN_REL_TOL * max(sigma_max, sqrt(m) * scale)` for `m` columns.
/// The floor keeps integrator jitter around a single point at rank 0.
pub fn span_basis(y: &DMatrix<f64>, scale: f64) -> DMatrix<f64> {
    let n = y.nrows();
    if y.ncols() == 0 {
        return DMatrix::zeros(n, 0);
    }
    let svd = y.clone().svd(true, false);
    let u = svd.u.as_ref().unwrap();
    let smax = svd.singular_values.max();
    let cut = SPAN_REL_TOL * smax.max((y.ncols() as f64).sqrt() * scale);
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > cut)
        .collect();
    let mut idx = keep;
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let cols: Vec<DVector<f64>> = idx.iter().map(|&i| u.column(i).into_owned()).collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Least-squares `B` with `f(y_j) ~ B (y_j - equilibrium)`, restricted to the
/// span of the centered samples.
pub fn fit_linear_generator(
    f: &VectorFieldDef,
    samples: &[Vec<f64>],
    equilibrium: &[f64],
) -> Result<GeneratorFit> {
    let n = f.dimension();
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples to fit".into()));
    }
    if equilibrium.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: equilibrium.len(),
        });
    }
    let eq = DVector::from_column_slice(equilibrium);
    let m = samples.len();
    let mut y = DMatrix::zeros(n, m);
    let mut fy = DMatrix::zeros(n, m);
    for (j, s) in samples.iter().enumerate() {
        if s.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: s.len(),
            });
        }
        let d = DVector::from_column_slice(s) - &eq;
        y.set_column(j, &d);
        fy.set_column(j, &DVector::from_vec(f.eval(s)?));
    }
    let scale = eq.amax().max(1.0);
    let q = span_basis(&y, scale);
    let r = q.ncols();
    let (b_span, b) = if r == 0 {
        (DMatrix::zeros(0, 0), DMatrix::zeros(n, n))
    } else {
        let c = q.transpose() * &y; // r x m
        let g = q.transpose() * &fy; // r x m
        // B_span c = g  <=>  c' B_span' = g'
        let svd = c.transpose().svd(true, true);
        let smax = svd.singular_values.max();
        let bt = svd
            .solve(&g.transpose(), 1e-14 * smax)
            .map_err(|e| Error::Eigen(e.to_string()))?;
        let b_span = bt.transpose();
        let b = &q * &b_span * q.transpose();
        (b_span, b)
    };
    let resid = &fy - &b * &y;
    let rms = (resid.norm_squared() / m as f64).sqrt();
    Ok(GeneratorFit {
        b,
        b_span,
        span_basis: q,
        equilibrium: equilibrium.to_vec(),
        rms_residual: rms,
        rank: r,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreservedQuadratic {
    pub invariant: QuadraticInvariant,
    /// Dimension of `{P symmetric : B'P + PB = 0}`; 1 means unique up to scale.
    pub null_space_dim: usize,
}

/// In the plane, a generator with purely imaginary nonzero eigenvalues
/// preserves exactly one quadratic form up to scale; return it (trace 2).
pub fn preserved_quadratic_2d(b: &DMatrix<f64>) -> Result<Option<PreservedQuadratic>> {
    if b.shape() != (2, 2) {
        return Err(Error::InvalidArgument("expected a 2x2 matrix".into()));
    }
    let scale = b.amax();
    if scale == 0.0 {
        return Ok(None);
    }
    let tr = b.trace();
    let det = b.determinant();
    if tr.abs() > 1e-8 * scale || det <= 1e-12 * scale * scale {
        return Ok(None);
    }
    let (a, c, d, e) = (b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
    // P = [[p, q], [q, r]];  B'P + PB entries (1,1), (1,2), (2,2) in (p, q, r)
    let m = DMatrix::from_row_slice(
        3,
        3,
        &[
            2.0 * a, 2.0 * d, 0.0, //
            c, a + e, d, //
            0.0, 2.0 * c, 2.0 * e,
        ],
    );
    let svd = m.clone().svd(false, true);
    let smax = svd.singular_values.max();
    let v_t = svd.v_t.as_ref().unwrap();
    let null: Vec<usize> = (0..3)
        .filter(|&i| svd.singular_values[i] < 1e-10 * smax)
        .collect();
    if null.is_empty() {
        return Ok(None);
    }
    let k = null[0];
    let (p, q, r) = (v_t[(k, 0)], v_t[(k, 1)], v_t[(k, 2)]);
    let mut pm = DMatrix::from_row_slice(2, 2, &[p, q, q, r]);
    let trace = pm.trace();
    pm *= 2.0 / trace;
    if pm.determinant() <= 0.0 || pm[(0, 0)] <= 0.0 {
        return Ok(None);
    }
    let residual = (b.transpose() * &pm + &pm * b).norm();
    Ok(Some(PreservedQuadratic {
        invariant: QuadraticInvariant { p: pm, residual },
        null_space_dim: null.len(),
    }))
}

/// JSON summary of a conserved-linear analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAnalysisReport {
    pub eigenvalues: Vec<[f64; 2]>,
    pub conserved: bool,
    pub frequencies: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub torus_dimension: Option<usize>,
    #[serde(rename = "P", skip_serializing_if = "Option::is_none")]
    pub p: Option<Vec<Vec<f64>>>,
    pub residuals: LinearResiduals,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearResiduals {
    pub block: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lyapunov: Option<f64>,
}

impl LinearAnalysisReport {
    pub fn new(analysis: &ConservedAnalysis, torus_dimension: Option<usize>) -> Self {
        let inv = quadratic_invariant(analysis).ok();
        LinearAnalysisReport {
            eigenvalues: analysis.eigenvalues.iter().map(|z| [z.re, z.im]).collect(),
            conserved: analysis.conserved,
            frequencies: analysis.frequencies.clone(),
            torus_dimension,
            p: inv.as_ref().map(|q| {
                (0..q.p.nrows())
                    .map(|i| q.p.row(i).iter().copied().collect())
                    .collect()
            }),
            residuals: LinearResiduals {
                block: analysis.block_residual,
                lyapunov: inv.map(|q| q.residual),
            },
        }
    }
}

/// Block-diagonal rotation generator with the given frequencies (zero
/// frequencies give 2x2 zero blocks).
pub fn block_rotation_generator(freqs: &[f64]) -> DMatrix<f64> {
    let n = 2 * freqs.len();
    let mut b = DMatrix::zeros(n, n);
    for (j, a) in freqs.iter().enumerate() {
        b[(2 * j, 2 * j + 1)] = *a;
        b[(2 * j + 1, 2 * j)] = -*a;
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{PI, SQRT_2};

    fn mat(r: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, v.len() / r, v)
    }

    #[test]
    fn rotation_is_conserved() {
        let a = analyze_conserved(&mat(2, &[0.0, 1.0, -1.0, 0.0]), None).unwrap();
        assert!(a.conserved);
        assert_eq!(a.frequencies.len(), 1);
        assert!((a.frequencies[0] - 1.0).abs() < 1e-12);
        assert_eq!(a.zero_blocks, 0);
        assert!(a.block_residual < 1e-9);
    }

    #[test]
    fn jordan_and_damped_are_not() {
        let j = analyze_conserved(&mat(2, &[0.0, 1.0, 0.0, 0.0]), None).unwrap();
        assert!(!j.conserved);
        assert!(j.reason.unwrap().contains("eigenvectors"));
        let d = analyze_conserved(&mat(2, &[-1.0, 0.0, 0.0, 0.0]), None).unwrap();
        assert!(!d.conserved);
        // rotational Jordan block: repeated +-i, one eigenvector each
        let mut b = block_rotation_generator(&[1.0, 1.0]);
        b[(0, 2)] = 1.0;
        b[(1, 3)] = 1.0;
        assert!(!analyze_conserved(&b, None).unwrap().conserved);
        assert!(quadratic_invariant(&analyze_conserved(&b, None).unwrap()).is_err());
    }

    #[test]
    fn invariants() {
        let q = quadratic_invariant(&analyze_conserved(&mat(2, &[0.0, 1.0, -1.0, 0.0]), None).unwrap())
            .unwrap();
        assert!((&q.p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert!(q.residual < 1e-12);

        // B'P + PB = 0 holds for P = diag(0.5, 2)
        let b = mat(2, &[0.0, 2.0, -0.5, 0.0]);
        let q = quadratic_invariant(&analyze_conserved(&b, None).unwrap()).unwrap();
        assert!(q.residual < 1e-9);
        let ratio = q.p[(1, 1)] / q.p[(0, 0)];
        assert!((ratio - 4.0).abs() < 1e-9 && q.p[(0, 1)].abs() < 1e-9);

        let z = analyze_conserved(&DMatrix::zeros(2, 2), None).unwrap();
        assert!(z.conserved && z.zero_blocks == 2);
        let q = quadratic_invariant(&z).unwrap();
        assert_eq!(q.p, DMatrix::identity(2, 2));
    }

    #[test]
    fn mixed_zero_and_rotation_blocks() {
        let mut b = DMatrix::zeros(3, 3);
        b[(0, 1)] = 2.0;
        b[(1, 0)] = -2.0;
        let a = analyze_conserved(&b, None).unwrap();
        assert!(a.conserved);
        assert_eq!(a.zero_blocks, 1);
        assert!((a.frequencies[0] - 2.0).abs() < 1e-12);
        assert!(quadratic_invariant(&a).unwrap().residual < 1e-12);
        let e = a.exp(PI);
        assert!((e - DMatrix::<f64>::identity(3, 3)).amax() < 1e-12);
    }

    #[test]
    fn return_times() {
        let t = min_return_time(&mat(2, &[0.0, 1.0, -1.0, 0.0]), 1e-6, 1.0, 10.0)
            .unwrap()
            .unwrap();
        assert!((t - 2.0 * PI).abs() < 1e-6, "{t}");
        assert_eq!(
            min_return_time(&DMatrix::zeros(2, 2), 1e-3, 0.5, 10.0).unwrap(),
            Some(0.5)
        );
        assert_eq!(
            min_return_time(&mat(2, &[0.0, 1.0, -1.0, 0.0]), 1e-6, 1.0, 5.0).unwrap(),
            None
        );
        assert!(min_return_time(&mat(2, &[0.0, 1.0, 0.0, 0.0]), 1e-6, 1.0, 5.0).is_err());
    }

    #[test]
    fn incommensurate_return_time() {
        // brute-force oracle: scan the torus line on a fine grid
        let b = block_rotation_generator(&[1.0, SQRT_2]);
        let t = min_return_time(&b, 0.1, 1.0, 1000.0).unwrap().unwrap();
        let wrap = |x: f64| (x + PI).rem_euclid(2.0 * PI) - PI;
        let bound = 2.0 * 0.05f64.asin();
        assert!(wrap(t).abs() < bound && wrap(SQRT_2 * t).abs() < bound, "{t}");
        let first = (0..1_000_000)
            .map(|k| 1.0 + k as f64 * 1e-3)
            .find(|&s| {
                let d = (2.0 * (wrap(s) / 2.0).sin()).abs().max((2.0 * (wrap(SQRT_2 * s) / 2.0).sin()).abs());
                d < 0.1
            })
            .unwrap();
        assert!((t - first).abs() < 0.05, "{t} vs {first}");
    }

    #[test]
    fn torus_dimensions() {
        let one = analyze_conserved(&block_rotation_generator(&[1.0]), None).unwrap();
        assert_eq!(torus_dimension(&one, &[0.3, -0.7], 50, 1e-8).unwrap(), 1);
        assert_eq!(torus_dimension(&one, &[0.0, 0.0], 50, 1e-8).unwrap(), 0);

        let x0 = [0.4, 0.1, -0.3, 0.8];
        let irr = analyze_conserved(&block_rotation_generator(&[1.0, SQRT_2]), None).unwrap();
        assert_eq!(torus_dimension(&irr, &x0, 50, 1e-8).unwrap(), 2);
        // only the first block excited
        assert_eq!(torus_dimension(&irr, &[1.0, 0.0, 0.0, 0.0], 50, 1e-8).unwrap(), 1);

        let res = analyze_conserved(&block_rotation_generator(&[1.0, 2.0]), None).unwrap();
        assert_eq!(torus_dimension(&res, &x0, 50, 1e-8).unwrap(), 1);
    }

    #[test]
    fn relation_oracle() {
        // exhaustive oracle with bound 50 over {1, sqrt 2}: smallest |m.a|/|m|
        let mut best = f64::INFINITY;
        for m0 in -50i32..=50 {
            for m1 in -50i32..=50 {
                if (m0, m1) != (0, 0) {
                    let v = (m0 as f64 + m1 as f64 * SQRT_2).abs()
                        / ((m0 * m0 + m1 * m1) as f64).sqrt();
                    best = best.min(v);
                }
            }
        }
        assert!(best > 1e-4);
        assert_eq!(relation_rank(&[1.0, SQRT_2], 50, 1e-6).unwrap(), 0);
        assert_eq!(relation_rank(&[1.0, 2.0], 50, 1e-6).unwrap(), 1);
        assert_eq!(relation_rank(&[1.0, 2.0, 3.0], 10, 1e-9).unwrap(), 2);
        assert_eq!(relation_rank(&[1.0, SQRT_2, 1.0 + SQRT_2], 10, 1e-9).unwrap(), 1);
    }

    #[test]
    fn preserved_quadratics() {
        let p = preserved_quadratic_2d(&mat(2, &[0.0, 1.0, -1.0, 0.0])).unwrap().unwrap();
        assert!((&p.invariant.p - DMatrix::<f64>::identity(2, 2)).amax() < 1e-12);
        assert_eq!(p.null_space_dim, 1);

        // by hand: B'P + PB = 0 for P = [[p,q],[q,r]] and B = [[0,4],[-1,0]]
        // gives q = 0 and 4p - r = 0, so P ~ diag(1, 4)
        let p = preserved_quadratic_2d(&mat(2, &[0.0, 4.0, -1.0, 0.0])).unwrap().unwrap();
        assert_eq!(p.null_space_dim, 1);
        assert!((p.invariant.p[(1, 1)] / p.invariant.p[(0, 0)] - 4.0).abs() < 1e-12);
        assert!((p.invariant.p.trace() - 2.0).abs() < 1e-12);

        assert!(preserved_quadratic_2d(&mat(2, &[1.0, 0.0, 0.0, -1.0])).unwrap().is_none());
        assert!(preserved_quadratic_2d(&mat(2, &[-0.1, 1.0, -1.0, -0.1])).unwrap().is_none());
    }

    #[test]
    fn fits_linear_field_exactly() {
        let b = mat(2, &[0.3, -1.2, 0.7, -0.4]);
        let f = VectorFieldDef::linear(&b).unwrap();
        let samples = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-0.5, 2.0], vec![3.0, 1.0]];
        let fit = fit_linear_generator(&f, &samples, &[0.0, 0.0]).unwrap();
        assert_eq!(fit.rank, 2);
        assert!((&fit.b - &b).amax() < 1e-12);
        assert!(fit.rms_residual < 1e-10);
    }

    #[test]
    fn fit_on_a_point() {
        let f = crate::expr::parse_field("-x; -y", 2).unwrap();
        let fit = fit_linear_generator(&f, &vec![vec![0.0, 0.0]; 5], &[0.0, 0.0]).unwrap();
        assert_eq!(fit.rank, 0);
        assert_eq!(fit.rms_residual, 0.0);
    }

    #[test]
    fn report_json() {
        let a = analyze_conserved(&block_rotation_generator(&[1.0]), None).unwrap();
        let r = LinearAnalysisReport::new(&a, Some(1));
        let v = serde_json::to_value(&r).unwrap();
        for key in ["eigenvalues", "conserved", "frequencies", "torus_dimension", "P", "residuals"] {
            assert!(v.get(key).is_some(), "{key}");
        }
    }
}
