//! Nonexpansivity checks.
//!
//! A C¹ system is nonexpansive with respect to a norm iff for every state x,
//! every direction v and every supporting normal n of the sphere through v,
//! `n' J_f(x) v <= 0`. [`check_demidovich`] samples that condition,
//! [`certify_linear`] decides it exactly for linear fields under polyhedral
//! or weighted Euclidean norms, and [`empirical_pairwise_test`] tests the
//! flow definition directly.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::VectorFieldDef;
use crate::norms::{NormDoc, NormSpec};
use crate::odeint::{self, IntegratorConfig, Termination};

/// Normalized margins above this count as violations.
pub const VIOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    CertifiedExact,
    PassedSampled,
    Violated,
}

impl Verdict {
    pub fn passed(self) -> bool {
        self != Verdict::Violated
    }
}

/// Region of state space over which the condition is checked.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Domain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Whole space; only meaningful for exact linear certificates.
    Global,
}

impl Domain {
    pub fn cube(dim: usize, half_width: f64) -> Domain {
        Domain::Box {
            lower: vec![-half_width; dim],
            upper: vec![half_width; dim],
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        match self {
            Domain::Box { lower, upper } => {
                if lower.len() != dim || upper.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: lower.len().max(upper.len()),
                    });
                }
                if lower
                    .iter()
                    .zip(upper)
                    .any(|(a, b)| !(a <= b) || !a.is_finite() || !b.is_finite())
                {
                    return Err(Error::InvalidArgument("empty or non-finite box".into()));
                }
            }
            Domain::Ball { center, radius } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        found: center.len(),
                    });
                }
                if !(*radius >= 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidArgument("ball radius must be >= 0".into()));
                }
            }
            Domain::Global => {
                return Err(Error::InvalidArgument(
                    "sampling needs a bounded domain".into(),
                ))
            }
        }
        Ok(())
    }

    /// `count` points: a full tensor grid (endpoints included) of
    /// floor(count^(1/n)) points per axis for boxes, topped up with seeded
    /// uniform points; uniform seeded points for balls.
    pub fn sample(&self, dim: usize, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
        self.validate(dim)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::with_capacity(count);
        match self {
            Domain::Box { lower, upper } => {
                let mut per_axis = (count as f64).powf(1.0 / dim as f64).floor() as usize;
                while (per_axis + 1).checked_pow(dim as u32).is_some_and(|c| c <= count) {
                    per_axis += 1;
                }
                while per_axis > 0 && per_axis.pow(dim as u32) > count {
                    per_axis -= 1;
                }
                if per_axis > 0 {
                    let total = per_axis.pow(dim as u32);
                    for mut idx in 0..total {
                        let mut x = vec![0.0; dim];
                        for i in 0..dim {
                            let k = idx % per_axis;
                            idx /= per_axis;
                            x[i] = if per_axis == 1 {
                                0.5 * (lower[i] + upper[i])
                            } else {
                                lower[i] + (upper[i] - lower[i]) * k as f64 / (per_axis - 1) as f64
                            };
                        }
                        out.push(x);
                    }
                }
                while out.len() < count {
                    out.push(
                        (0..dim)
                            .map(|i| lower[i] + (upper[i] - lower[i]) * rng.random::<f64>())
                            .collect(),
                    );
                }
            }
            Domain::Ball { center, radius } => {
                while out.len() < count {
                    let p: Vec<f64> = (0..dim).map(|_| 2.0 * rng.random::<f64>() - 1.0).collect();
                    if p.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                        out.push(p.iter().zip(center).map(|(a, c)| c + radius * a).collect());
                    }
                }
            }
            Domain::Global => unreachable!(),
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub n: Vec<f64>,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub nx: usize,
    pub nv: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonexpansivityReport {
    pub verdict: Verdict,
    /// Max of `n' J(x) v / ||v||` over everything tested.
    pub worst_margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<Counterexample>,
    pub samples: SampleCounts,
    pub norm: NormDoc,
    pub norm_label: String,
    pub domain: Domain,
    pub tolerance: f64,
}

/// Options for [`check_demidovich_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DemidovichOptions {
    pub nx: usize,
    pub nv: usize,
    pub seed: u64,
    /// Radius of the sphere the directions are drawn from; margins are
    /// divided by `||v||` so verdicts do not depend on it.
    pub direction_radius: f64,
    pub tolerance: f64,
}

impl Default for DemidovichOptions {
    fn default() -> Self {
        DemidovichOptions {
            nx: 2500,
            nv: 500,
            seed: 0,
            direction_radius: 1.0,
            tolerance: VIOLATION_TOL,
        }
    }
}

/// Samples `n' J_f(x) v <= 0` on `nx` states of `domain` and `nv` directions
/// on the unit sphere (plus the unit-ball vertices for polyhedral norms),
/// testing every extreme supporting normal at each direction.
pub fn check_demidovich(
    f: &VectorFieldDef,
    norm: &NormSpec,
    domain: &Domain,
    nx: usize,
    nv: usize,
    seed: u64,
) -> Result<NonexpansivityReport> {
    check_demidovich_with(
        f,
        norm,
        domain,
        &DemidovichOptions {
            nx,
            nv,
            seed,
            ..Default::default()
        },
    )
}

type Probe = (DVector<f64>, Vec<DVector<f64>>, f64);

/// Samples states and directions, returning them with the worst
/// `(margin, x index, direction index, normal index)` at each state.
fn scan(
    f: &VectorFieldDef,
    norm: &NormSpec,
    domain: &Domain,
    opts: &DemidovichOptions,
) -> Result<(Vec<Vec<f64>>, Vec<Probe>, Vec<(f64, usize, usize, usize)>)> {
    let dim = f.dimension();
    norm.check_dim(dim)?;
    if opts.nx == 0 || opts.nv == 0 {
        return Err(Error::InvalidArgument("nx and nv must be positive".into()));
    }
    if !(opts.direction_radius > 0.0) {
        return Err(Error::InvalidArgument("direction radius must be positive".into()));
    }
    let xs = domain.sample(dim, opts.nx, opts.seed)?;

    let mut directions = norm.sphere_sample(dim, opts.nv, opts.seed)?;
    if let NormSpec::Polyhedral(poly) = norm {
        directions.extend(poly.vertices().iter().cloned());
    }
    // (v scaled to the radius, its normals, ||v||)
    let probes: Vec<Probe> = directions
        .into_iter()
        .map(|v| {
            let v = v * opts.direction_radius;
            let ns = norm.supporting_normals(v.as_slice())?.normals().to_vec();
            let nv = norm.eval(v.as_slice())?;
            Ok((v, ns, nv))
        })
        .collect::<Result<_>>()?;

    let per_x: Vec<(f64, usize, usize, usize)> = xs
        .par_iter()
        .enumerate()
        .map(|(ix, x)| {
            let jac = f.jacobian(x)?;
            let mut best = (f64::NEG_INFINITY, ix, 0, 0);
            for (iv, (v, ns, nv)) in probes.iter().enumerate() {
                let jv = &jac * v;
                for (k, n) in ns.iter().enumerate() {
                    let m = n.dot(&jv) / nv;
                    if m > best.0 {
                        best = (m, ix, iv, k);
                    }
                }
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    Ok((xs, probes, per_x))
}

/// Worst sampled margin at each state sample, for plotting.
pub fn margin_map(
    f: &VectorFieldDef,
    norm: &NormSpec,
    domain: &Domain,
    opts: &DemidovichOptions,
) -> Result<Vec<(Vec<f64>, f64)>> {
    let (xs, _, per_x) = scan(f, norm, domain, opts)?;
    Ok(xs.into_iter().zip(per_x).map(|(x, b)| (x, b.0)).collect())
}

pub fn check_demidovich_with(
    f: &VectorFieldDef,
    norm: &NormSpec,
    domain: &Domain,
    opts: &DemidovichOptions,
) -> Result<NonexpansivityReport> {
    let (xs, probes, per_x) = scan(f, norm, domain, opts)?;
    let (worst, ix, iv, k) = per_x
        .into_iter()
        .fold((f64::NEG_INFINITY, 0, 0, 0), |a, b| if b.0 > a.0 { b } else { a });
    let verdict = if worst > opts.tolerance {
        Verdict::Violated
    } else {
        Verdict::PassedSampled
    };
    let counterexample = (verdict == Verdict::Violated).then(|| Counterexample {
        x: xs[ix].clone(),
        v: probes[iv].0.as_slice().to_vec(),
        n: probes[iv].1[k].as_slice().to_vec(),
        margin: worst,
    });
    Ok(NonexpansivityReport {
        verdict,
        worst_margin: worst,
        counterexample,
        samples: SampleCounts {
            nx: xs.len(),
            nv: probes.len(),
            seed: opts.seed,
        },
        norm: NormDoc::from(norm),
        norm_label: norm.label(),
        domain: domain.clone(),
        tolerance: opts.tolerance,
    })
}

/// Exact decision for `dx/dt = A x`. Polyhedral norms: `eta' A v <= 0` over
/// every unit-ball vertex v and facet normal eta active at v, which suffices
/// because `v -> eta' A v` is linear on each facet. Weighted l2 (and l2):
/// the largest eigenvalue of `A'P + PA` must be `<= 0`.
pub fn certify_linear(a: &DMatrix<f64>, norm: &NormSpec) -> Result<NonexpansivityReport> {
    if !a.is_square() {
        return Err(Error::DimensionMismatch {
            expected: a.nrows(),
            found: a.ncols(),
        });
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let n = a.nrows();
    norm.check_dim(n)?;
    let (worst, witness, pairs) = match norm {
        NormSpec::Polyhedral(poly) => {
            let mut worst = (f64::NEG_INFINITY, 0, 0);
            let mut pairs = 0;
            for (i, v) in poly.vertices().iter().enumerate() {
                let av = a * v;
                for &k in poly.active_at_vertex(i) {
                    pairs += 1;
                    let m = poly.facets()[k].dot(&av);
                    if m > worst.0 {
                        worst = (m, i, k);
                    }
                }
            }
            let v = poly.vertices()[worst.1].clone();
            let eta = poly.facets()[worst.2].clone();
            (worst.0, (v, eta), pairs)
        }
        NormSpec::WeightedL2(_) | NormSpec::Lp(_) => {
            let w = match norm {
                NormSpec::WeightedL2(w) => w.clone(),
                NormSpec::Lp(p) if *p == 2.0 => crate::norms::WeightedL2::identity(n),
                _ => {
                    return Err(Error::UnsupportedNorm(format!(
                        "{} has no exact linear certificate; use the sampled check",
                        norm.label()
                    )))
                }
            };
            // max over v of v'PAv / v'Pv = top eigenvalue of sym(L A L^-1)
            let l = w.factor();
            let l_inv = l.clone().try_inverse().ok_or_else(|| {
                Error::InvalidNorm("singular weight factor".into())
            })?;
            let b = l * a * &l_inv;
            let sym = (&b + b.transpose()) * 0.5;
            let eig = sym.symmetric_eigen();
            let (imax, &lmax) = eig
                .eigenvalues
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.total_cmp(y.1))
                .expect("non-empty spectrum");
            let z = eig.eigenvectors.column(imax).into_owned();
            let v = &l_inv * z;
            let nv = norm.eval(v.as_slice())?;
            let v = v / nv;
            let nrm = match norm.supporting_normals(v.as_slice())? {
                crate::norms::SupportingNormalSet::Unique(nn) => nn,
                crate::norms::SupportingNormalSet::Finite(ns) => ns[0].clone(),
            };
            (lmax, (v, nrm), 1)
        }
    };
    let verdict = if worst > VIOLATION_TOL {
        Verdict::Violated
    } else {
        Verdict::CertifiedExact
    };
    let counterexample = (verdict == Verdict::Violated).then(|| Counterexample {
        x: vec![0.0; n],
        v: witness.0.as_slice().to_vec(),
        n: witness.1.as_slice().to_vec(),
        margin: worst,
    });
    Ok(NonexpansivityReport {
        verdict,
        worst_margin: worst,
        counterexample,
        samples: SampleCounts {
            nx: 0,
            nv: pairs,
            seed: 0,
        },
        norm: NormDoc::from(norm),
        norm_label: norm.label(),
        domain: Domain::Global,
        tolerance: VIOLATION_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseReport {
    pub passed: bool,
    /// Largest increase of the pair distance between consecutive samples.
    pub max_increment: f64,
    pub threshold: f64,
    pub pairs: usize,
    pub diverged_pairs: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
}

/// Draws `pair_count` seeded pairs in `domain`, integrates each pair as one
/// stacked system and records the largest increase of `||phi_t(x) - phi_t(y)||`
/// between consecutive samples. Passes when that increase stays below ten
/// times the integrator tolerance at the pair's scale.
pub fn empirical_pairwise_test(
    f: &VectorFieldDef,
    norm: &NormSpec,
    pair_count: usize,
    domain: &Domain,
    horizon: f64,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<PairwiseReport> {
    empirical_pairwise_test_dt(f, norm, pair_count, domain, horizon, horizon / 400.0, cfg, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn empirical_pairwise_test_dt(
    f: &VectorFieldDef,
    norm: &NormSpec,
    pair_count: usize,
    domain: &Domain,
    horizon: f64,
    sample_dt: f64,
    cfg: &IntegratorConfig,
    seed: u64,
) -> Result<PairwiseReport> {
    let dim = f.dimension();
    norm.check_dim(dim)?;
    if pair_count == 0 {
        return Err(Error::InvalidArgument("pair_count must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = domain.sample(dim, 2 * pair_count, rng.random())?;
    // grid points come first; shuffle pairing so pairs are not grid neighbours
    let mut order: Vec<usize> = (0..pts.len()).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let times = odeint::sample_times(horizon, sample_dt)?;

    let results: Vec<(f64, f64, bool)> = (0..pair_count)
        .into_par_iter()
        .map(|p| {
            let x = &pts[order[2 * p]];
            let y = &pts[order[2 * p + 1]];
            let traj = odeint::pair_trajectory(f, x, y, &times, cfg)?;
            let series = odeint::pair_distances(&traj, dim, norm)?;
            let inc = series
                .windows(2)
                .map(|w| w[1].1 - w[0].1)
                .fold(f64::NEG_INFINITY, f64::max);
            let d0 = series.first().map_or(0.0, |s| s.1);
            let threshold = 10.0 * (cfg.rtol * d0 + cfg.atol);
            Ok((inc, threshold, traj.termination != Termination::ReachedHorizon))
        })
        .collect::<Result<_>>()?;

    let mut worst = (f64::NEG_INFINITY, f64::INFINITY, 0);
    let mut passed = true;
    let mut diverged = 0;
    for (p, (inc, thr, div)) in results.iter().enumerate() {
        diverged += *div as usize;
        if inc > thr {
            passed = false;
        }
        if inc - thr > worst.0 - worst.1 {
            worst = (*inc, *thr, p);
        }
    }
    Ok(PairwiseReport {
        passed,
        max_increment: worst.0,
        threshold: worst.1,
        pairs: pair_count,
        diverged_pairs: diverged,
        worst_pair: Some((
            pts[order[2 * worst.2]].clone(),
            pts[order[2 * worst.2 + 1]].clone(),
        )),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum Boundedness {
    /// Stayed inside the guard radius for the whole horizon (evidence only).
    Bounded { max_norm: f64 },
    /// Left the guard radius at `escape_time`.
    UnboundedEvidence { escape_time: f64 },
}

/// Integrates for `horizon` and reports whether the Euclidean state norm
/// stayed below `radius_guard`. Either the system has an equilibrium and all
/// trajectories are bounded, or every trajectory is unbounded; a finite run
/// can only give evidence for one side.
pub fn boundedness_probe(
    f: &VectorFieldDef,
    x0: &[f64],
    horizon: f64,
    radius_guard: f64,
    cfg: &IntegratorConfig,
) -> Result<Boundedness> {
    let cfg = IntegratorConfig {
        overflow_guard: radius_guard,
        ..*cfg
    };
    let traj = odeint::trace(f, x0, horizon, horizon / 1000.0, &cfg)?;
    match traj.termination {
        Termination::ReachedHorizon => {
            let max_norm = traj
                .states
                .iter()
                .map(|s| s.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max);
            Ok(Boundedness::Bounded { max_norm })
        }
        _ => Ok(Boundedness::UnboundedEvidence {
            escape_time: traj.stopped_at.unwrap_or(horizon),
        }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub point: Vec<f64>,
    /// Euclidean norm of f at `point`.
    pub residual: f64,
    pub converged: bool,
}

/// Largest accepted convergence tolerance.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;

/// Damped Newton on f(x) = 0 from each seed in turn (step halving until the
/// residual decreases, at most 40 halvings). Singular Jacobians are handled
/// with a pseudo-inverse step. Returns the first converged root, otherwise the
/// best point found with `converged = false`.
pub fn find_equilibrium(
    f: &VectorFieldDef,
    seeds: &[Vec<f64>],
    newton_iters: usize,
    tol: f64,
) -> Result<EquilibriumResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed is required".into()));
    }
    let tol = tol.min(EQUILIBRIUM_TOL);
    let residual = |x: &[f64]| -> Option<f64> {
        let v = f.eval(x).ok()?;
        Some(v.iter().map(|c| c * c).sum::<f64>().sqrt())
    };
    let mut best: Option<EquilibriumResult> = None;
    for seed in seeds {
        if seed.len() != f.dimension() {
            return Err(Error::DimensionMismatch {
                expected: f.dimension(),
                found: seed.len(),
            });
        }
        let mut x = DVector::from_column_slice(seed);
        let Some(mut r) = residual(x.as_slice()) else {
            continue;
        };
        for _ in 0..newton_iters {
            if r < tol {
                break;
            }
            let (Ok(fx), Ok(jac)) = (f.eval(x.as_slice()), f.jacobian(x.as_slice())) else {
                break;
            };
            let svd = jac.svd(true, true);
            let smax = svd.singular_values.max();
            let Ok(step) = svd.solve(&DVector::from_vec(fx), 1e-12 * smax.max(f64::MIN_POSITIVE))
            else {
                break;
            };
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..=40 {
                let trial = &x - &step * lambda;
                if let Some(rt) = residual(trial.as_slice()) {
                    if rt < r {
                        x = trial;
                        r = rt;
                        accepted = true;
                        break;
                    }
                }
                lambda *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        let result = EquilibriumResult {
            point: x.as_slice().to_vec(),
            residual: r,
            converged: r < tol,
        };
        if result.converged {
            return Ok(result);
        }
        if best.as_ref().is_none_or(|b| result.residual < b.residual) {
            best = Some(result);
        }
    }
    Ok(best.unwrap_or(EquilibriumResult {
        point: seeds[0].clone(),
        residual: f64::INFINITY,
        converged: false,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_field;

    fn mat(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, v)
    }

    fn ac(c: f64) -> DMatrix<f64> {
        mat(&[-1.0, -4.0 * c, 8.0 * c.powi(3), -4.0 * c.powi(4)])
    }

    #[test]
    fn l4_family_passes() {
        let f = VectorFieldDef::linear(&ac(1.0)).unwrap();
        let norm = NormSpec::lp(4.0, 2).unwrap();
        let rep = check_demidovich(&f, &norm, &Domain::cube(2, 2.0), 2500, 200, 3).unwrap();
        assert_eq!(rep.verdict, Verdict::PassedSampled);
        assert!(rep.worst_margin <= 1e-12);
        assert!(rep.counterexample.is_none());
    }

    #[test]
    fn stable_diagonal_passes_everywhere() {
        let f = parse_field("-x; -y", 2).unwrap();
        for norm in [
            NormSpec::l1(2),
            NormSpec::l2(),
            NormSpec::lp(4.0, 2).unwrap(),
            NormSpec::linf(2),
        ] {
            let rep = check_demidovich(&f, &norm, &Domain::cube(2, 1.0), 25, 50, 0).unwrap();
            assert_eq!(rep.verdict, Verdict::PassedSampled);
            assert!((rep.worst_margin + 1.0).abs() < 1e-12, "{}", rep.worst_margin);
        }
    }

    #[test]
    fn hurwitz_violates_l2() {
        let f = parse_field("-x; -(x^2+1)*y", 2).unwrap();
        let rep = check_demidovich(&f, &NormSpec::l2(), &Domain::cube(2, 3.0), 2500, 200, 0)
            .unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
        let ce = rep.counterexample.unwrap();
        // the witness must reproduce
        let j = f.jacobian(&ce.x).unwrap();
        let v = DVector::from_vec(ce.v.clone());
        let n = DVector::from_vec(ce.n.clone());
        let m = n.dot(&(j * &v)) / v.norm();
        assert!((m - ce.margin).abs() < 1e-12 && m > 0.0);
    }

    #[test]
    fn linear_certificates() {
        let rot = mat(&[0.0, 1.0, -1.0, 0.0]);
        let rep = certify_linear(&rot, &NormSpec::weighted_l2(DMatrix::identity(2, 2)).unwrap())
            .unwrap();
        assert_eq!(rep.verdict, Verdict::CertifiedExact);
        assert!(rep.worst_margin.abs() < 1e-15);

        let rep = certify_linear(&-DMatrix::<f64>::identity(2, 2), &NormSpec::linf(2)).unwrap();
        assert_eq!(rep.verdict, Verdict::CertifiedExact);

        let rep = certify_linear(&rot, &NormSpec::linf(2)).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
        let ce = rep.counterexample.unwrap();
        assert_eq!(ce.margin, 1.0);
        assert!(ce.v.iter().all(|c| c.abs() == 1.0));

        assert!(matches!(
            certify_linear(&rot, &NormSpec::lp(4.0, 2).unwrap()),
            Err(Error::UnsupportedNorm(_))
        ));
    }

    #[test]
    fn weighted_certificate_witness() {
        // expands in l2 but not in the weighted norm it preserves
        let b = mat(&[0.0, 4.0, -1.0, 0.0]);
        let rep = certify_linear(&b, &NormSpec::l2()).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
        assert!((rep.worst_margin - 1.5).abs() < 1e-12);
        let p = NormSpec::weighted_l2(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 4.0])))
            .unwrap();
        assert_eq!(certify_linear(&b, &p).unwrap().verdict, Verdict::CertifiedExact);
    }

    #[test]
    fn pairwise_tests() {
        let cfg = IntegratorConfig::default();
        let h = parse_field("y; -x", 2).unwrap();
        let rep = empirical_pairwise_test(&h, &NormSpec::l2(), 10, &Domain::cube(2, 2.0), 20.0, &cfg, 1)
            .unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_increment.abs() < 1e-7);

        let e = parse_field("x", 1).unwrap();
        let dom = Domain::Box {
            lower: vec![-1.0],
            upper: vec![1.0],
        };
        let rep = empirical_pairwise_test(&e, &NormSpec::l2(), 5, &dom, 5.0, &cfg, 2).unwrap();
        assert!(!rep.passed);
        assert!(rep.max_increment > 1e-3);
    }

    #[test]
    fn boundedness() {
        let cfg = IntegratorConfig::default();
        let f = parse_field("-x", 1).unwrap();
        assert!(matches!(
            boundedness_probe(&f, &[5.0], 50.0, 1e6, &cfg).unwrap(),
            Boundedness::Bounded { .. }
        ));
        let g = parse_field("x", 1).unwrap();
        match boundedness_probe(&g, &[1.0], 100.0, 1e12, &cfg).unwrap() {
            Boundedness::UnboundedEvidence { escape_time } => {
                assert!((escape_time - 1e12f64.ln()).abs() < 0.5)
            }
            other => panic!("{other:?}"),
        }
        let h = parse_field("y; -x", 2).unwrap();
        match boundedness_probe(&h, &[3.0, 4.0], 50.0, 1e6, &cfg).unwrap() {
            Boundedness::Bounded { max_norm } => assert!((max_norm - 5.0).abs() < 1e-6),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn equilibria() {
        let f = parse_field("-x; -y", 2).unwrap();
        let r = find_equilibrium(&f, &[vec![3.0, 3.0]], 50, 1e-12).unwrap();
        assert!(r.converged && r.residual < 1e-12);
        assert!(r.point.iter().all(|c| c.abs() < 1e-12));

        let h = parse_field("-x; -(x^2+1)*y", 2).unwrap();
        let r = find_equilibrium(&h, &[vec![1.0, 1.0]], 50, 1e-12).unwrap();
        assert!(r.converged);
        assert!(r.point.iter().all(|c| c.abs() < 1e-10));

        let a = VectorFieldDef::linear(&ac(1.0)).unwrap();
        assert!((ac(1.0).determinant() - 36.0).abs() < 1e-12);
        let r = find_equilibrium(&a, &[vec![1.0, 1.0]], 50, 1e-12).unwrap();
        assert!(r.converged && r.point.iter().all(|c| c.abs() < 1e-12));

        // no root: x^2 + 1 = 0
        let n = parse_field("x^2 + 1", 1).unwrap();
        let r = find_equilibrium(&n, &[vec![0.3], vec![-2.0]], 50, 1e-12).unwrap();
        assert!(!r.converged);
    }

    #[test]
    fn singular_jacobian_line_of_equilibria() {
        let f = VectorFieldDef::linear(&ac(0.0)).unwrap();
        let r = find_equilibrium(&f, &[vec![1.0, 1.0]], 50, 1e-12).unwrap();
        assert!(r.converged);
        assert!(r.point[0].abs() < 1e-12 && (r.point[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn report_json_shape() {
        let rot = mat(&[0.0, 1.0, -1.0, 0.0]);
        let rep = certify_linear(&rot, &NormSpec::linf(2)).unwrap();
        let v: serde_json::Value = serde_json::to_value(&rep).unwrap();
        for key in ["verdict", "worst_margin", "counterexample", "samples", "norm", "domain"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["verdict"], "Violated");
        assert_eq!(v["samples"]["nx"], 0);
    }

    #[test]
    fn grid_sampling_hits_corners() {
        let pts = Domain::cube(2, 3.0).sample(2, 2500, 0).unwrap();
        assert_eq!(pts.len(), 2500);
        assert!(pts.contains(&vec![3.0, 3.0]) && pts.contains(&vec![-3.0, 3.0]));
        let pts = Domain::cube(2, 1.0).sample(2, 7, 5).unwrap();
        assert_eq!(pts.len(), 7);
        assert!(pts.iter().all(|p| p.iter().all(|c| c.abs() <= 1.0)));
    }
}
