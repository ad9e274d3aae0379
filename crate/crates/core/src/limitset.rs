//! Attractor sampling and omega-limit set classification.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contraction::{boundedness_probe, find_equilibrium, Boundedness, EquilibriumResult};
use crate::error::{Error, Result};
use crate::expr::VectorFieldDef;
use crate::linear::{analyze_conserved, fit_linear_generator, span_basis, torus_dimension, GeneratorFit};
use crate::norms::NormSpec;
use crate::odeint::{integrate_at, sample_times, IntegratorConfig, Stacked, Termination};

/// Post-transient trajectory samples.
#[derive(Debug, Clone, PartialEq)]
pub struct AttractorSample {
    pub times: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub center: Vec<f64>,
    /// Orthonormal columns spanning `points - center`.
    pub span_basis: DMatrix<f64>,
    pub equilibrium: Option<EquilibriumResult>,
}

impl AttractorSample {
    /// Sample without an equilibrium estimate; times are left empty.
    pub fn from_points(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty attractor sample".into()))?;
        let n = first.len();
        if let Some(p) = points.iter().find(|p| p.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: p.len(),
            });
        }
        let m = points.len();
        let mut center = vec![0.0; n];
        for p in &points {
            for (c, v) in center.iter_mut().zip(p) {
                *c += v / m as f64;
            }
        }
        let y = DMatrix::from_fn(n, m, |i, j| points[j][i] - center[i]);
        let scale = center.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let span_basis = span_basis(&y, scale);
        Ok(AttractorSample {
            times: Vec::new(),
            points,
            center,
            span_basis,
            equilibrium: None,
        })
    }

    pub fn rank(&self) -> usize {
        self.span_basis.ncols()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }
}

/// Integrates through `transient`, then samples every `sample_dt` over
/// `window`. Divergence surfaces as [`Error::Diverged`].
pub fn extract_attractor(
    f: &VectorFieldDef,
    x0: &[f64],
    transient: f64,
    window: f64,
    sample_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<AttractorSample> {
    if !(transient > 0.0) || !(window > 0.0) {
        return Err(Error::InvalidArgument("transient and window must be positive".into()));
    }
    let times: Vec<f64> = sample_times(window, sample_dt)?
        .into_iter()
        .map(|t| t + transient)
        .collect();
    let traj = integrate_at(f, x0, &times, cfg)?;
    match traj.termination {
        Termination::ReachedHorizon => {}
        Termination::NormOverflow => {
            return Err(Error::Diverged {
                t: traj.stopped_at.unwrap_or(transient),
            })
        }
        Termination::StepFailure => {
            return Err(Error::StepSizeUnderflow {
                t: traj.stopped_at.unwrap_or(transient),
            })
        }
    }
    let mut sample = AttractorSample::from_points(traj.states)?;
    sample.times = traj.times;
    sample.equilibrium = Some(find_equilibrium(f, &[sample.center.clone()], 50, 1e-12)?);
    Ok(sample)
}

pub const DEFAULT_CHECK_PAIRS: usize = 8;

fn choose_pairs(m: usize, count: usize, seed: u64) -> Vec<(usize, usize)> {
    let mut all: Vec<(usize, usize)> = Vec::new();
    if m * (m - 1) / 2 <= count {
        for i in 0..m {
            for j in i + 1..m {
                all.push((i, j));
            }
        }
        return all;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..m).collect();
    while all.len() < count {
        idx.shuffle(&mut rng);
        all.push((idx[0].min(idx[1]), idx[0].max(idx[1])));
    }
    all
}

fn sorted_times(ts: &[f64]) -> Result<Vec<f64>> {
    if ts.is_empty() {
        return Err(Error::InvalidArgument("at least one time is required".into()));
    }
    let mut v = ts.to_vec();
    v.sort_by(f64::total_cmp);
    if !(v[0] >= 0.0) || !v[v.len() - 1].is_finite() {
        return Err(Error::InvalidArgument("times must be finite and >= 0".into()));
    }
    Ok(v)
}

fn completed(traj: crate::odeint::Trajectory) -> Result<Vec<Vec<f64>>> {
    match traj.termination {
        Termination::ReachedHorizon => Ok(traj.states),
        Termination::NormOverflow => Err(Error::Diverged {
            t: traj.stopped_at.unwrap_or(f64::NAN),
        }),
        Termination::StepFailure => Err(Error::StepSizeUnderflow {
            t: traj.stopped_at.unwrap_or(f64::NAN),
        }),
    }
}

/// Max over sample pairs and `ts` of `| ||phi_t x - phi_t y|| - ||x - y|| |`.
pub fn isometry_check(
    f: &VectorFieldDef,
    sample: &AttractorSample,
    norm: &NormSpec,
    ts: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64> {
    isometry_check_with(f, sample, norm, ts, cfg, DEFAULT_CHECK_PAIRS, 0)
}

pub fn isometry_check_with(
    f: &VectorFieldDef,
    sample: &AttractorSample,
    norm: &NormSpec,
    ts: &[f64],
    cfg: &IntegratorConfig,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    let n = f.dimension();
    norm.check_dim(n)?;
    let ts = sorted_times(ts)?;
    if sample.points.len() < 2 {
        return Ok(0.0);
    }
    let devs: Vec<Result<f64>> = choose_pairs(sample.points.len(), pairs, seed)
        .into_par_iter()
        .map(|(i, j)| {
            let (x, y) = (&sample.points[i], &sample.points[j]);
            let d0 = norm.eval(&diff(x, y))?;
            let z0: Vec<f64> = x.iter().chain(y).copied().collect();
            let states = completed(integrate_at(&Stacked(f), &z0, &ts, cfg)?)?;
            let mut worst = 0.0f64;
            for z in states {
                let d = norm.eval(&diff(&z[..n], &z[n..]))?;
                worst = worst.max((d - d0).abs());
            }
            Ok(worst)
        })
        .collect();
    devs.into_iter().try_fold(0.0f64, |a, d| Ok(a.max(d?)))
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Max over pairs, `lambdas` and `ts` of
/// `||phi_t(l x + (1-l) y) - (l phi_t x + (1-l) phi_t y)||`.
/// Requires a strictly convex norm.
pub fn convex_combination_check(
    f: &VectorFieldDef,
    sample: &AttractorSample,
    norm: &NormSpec,
    lambdas: &[f64],
    ts: &[f64],
    cfg: &IntegratorConfig,
) -> Result<f64> {
    convex_combination_check_with(f, sample, norm, lambdas, ts, cfg, DEFAULT_CHECK_PAIRS, 0)
}

#[allow(clippy::too_many_arguments)]
pub fn convex_combination_check_with(
    f: &VectorFieldDef,
    sample: &AttractorSample,
    norm: &NormSpec,
    lambdas: &[f64],
    ts: &[f64],
    cfg: &IntegratorConfig,
    pairs: usize,
    seed: u64,
) -> Result<f64> {
    if !norm.is_strictly_convex() {
        return Err(Error::UnsupportedNorm(format!(
            "{} is not strictly convex",
            norm.label()
        )));
    }
    norm.check_dim(f.dimension())?;
    let ts = sorted_times(ts)?;
    if lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
        return Err(Error::InvalidArgument("lambdas must lie in [0, 1]".into()));
    }
    if sample.points.len() < 2 {
        return Ok(0.0);
    }
    let devs: Vec<Result<f64>> = choose_pairs(sample.points.len(), pairs, seed)
        .into_par_iter()
        .map(|(i, j)| {
            let (x, y) = (&sample.points[i], &sample.points[j]);
            let fx = completed(integrate_at(f, x, &ts, cfg)?)?;
            let fy = completed(integrate_at(f, y, &ts, cfg)?)?;
            let mut worst = 0.0f64;
            for &l in lambdas {
                let z: Vec<f64> = x.iter().zip(y).map(|(a, b)| l * a + (1.0 - l) * b).collect();
                let fz = completed(integrate_at(f, &z, &ts, cfg)?)?;
                for k in 0..ts.len() {
                    let e: Vec<f64> = (0..z.len())
                        .map(|c| fz[k][c] - (l * fx[k][c] + (1.0 - l) * fy[k][c]))
                        .collect();
                    worst = worst.max(norm.eval(&e)?);
                }
            }
            Ok(worst)
        })
        .collect();
    devs.into_iter().try_fold(0.0f64, |a, d| Ok(a.max(d?)))
}

/// First sampled time in `[t_start, t_end]` at which the trajectory from
/// `x0` lies within `radius` of `x0`. Integrates in chunks so it can stop
/// early.
#[allow(clippy::too_many_arguments)]
pub fn first_return(
    f: &VectorFieldDef,
    x0: &[f64],
    norm: &NormSpec,
    radius: f64,
    t_start: f64,
    t_end: f64,
    sample_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Option<f64>> {
    if !(t_start >= 0.0) || !(t_end > t_start) {
        return Err(Error::InvalidArgument("need 0 <= t_start < t_end".into()));
    }
    let mut state = if t_start > 0.0 {
        completed(integrate_at(f, x0, &[t_start], cfg)?)?.remove(0)
    } else {
        x0.to_vec()
    };
    let chunk = (100.0f64).max(sample_dt);
    let mut t0 = t_start;
    while t0 < t_end {
        let len = chunk.min(t_end - t0);
        let traj = integrate_at(f, &state, &sample_times(len, sample_dt)?, cfg)?;
        let times = traj.times.clone();
        let states = completed(traj)?;
        for (t, s) in times.iter().zip(&states) {
            if norm.eval(&diff(s, x0))? < radius {
                return Ok(Some(t0 + t));
            }
        }
        state = states.last().unwrap().clone();
        t0 += len;
    }
    Ok(None)
}

/// Classifier settings. Every field has a default, so documents may
/// override any subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub transient: f64,
    pub window: f64,
    pub sample_dt: f64,
    pub radius_guard: f64,
    /// Max RMS residual of the linear generator fit.
    pub fit_tol: f64,
    /// Max |Re lambda| of the fitted generator.
    pub spectral_tol: f64,
    /// Max ||f|| at an equilibrium and max late displacement.
    pub equilibrium_tol: f64,
    pub coeff_bound: u32,
    pub relation_tol: f64,
    pub isometry_times: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub convexity_times: Vec<f64>,
    pub check_pairs: usize,
    pub seed: u64,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            transient: 50.0,
            window: 200.0,
            sample_dt: 0.5,
            radius_guard: 1e6,
            fit_tol: 1e-6,
            spectral_tol: 1e-6,
            equilibrium_tol: 1e-8,
            coeff_bound: 50,
            relation_tol: 1e-6,
            isometry_times: vec![1.0, 5.0, 25.0],
            lambdas: vec![0.25, 0.5, 0.75],
            convexity_times: vec![1.0, 10.0],
            check_pairs: DEFAULT_CHECK_PAIRS,
            seed: 0,
        }
    }
}

impl ClassifyConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("transient", self.transient),
            ("window", self.window),
            ("sample_dt", self.sample_dt),
            ("radius_guard", self.radius_guard),
            ("fit_tol", self.fit_tol),
            ("spectral_tol", self.spectral_tol),
            ("equilibrium_tol", self.equilibrium_tol),
            ("relation_tol", self.relation_tol),
        ];
        for (name, v) in pos {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be positive and finite")));
            }
        }
        if self.sample_dt > self.window {
            return Err(Error::InvalidArgument("sample_dt exceeds window".into()));
        }
        Ok(())
    }

    pub fn horizon(&self) -> f64 {
        self.transient + self.window
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LimitSet {
    Equilibrium { point: Vec<f64> },
    Torus {
        k: usize,
        generator: GeneratorFit,
        frequencies: Vec<f64>,
    },
    Unbounded { escape_time: f64 },
    Unknown { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub isometry_dev: Option<f64>,
    pub fit_residual: Option<f64>,
    pub convexity_dev: Option<f64>,
    pub span_rank: Option<usize>,
    /// `||f||` at the last sample.
    pub final_residual: Option<f64>,
    /// Max distance from the last sample over the last 10% of the horizon.
    pub displacement: Option<f64>,
    pub transient: f64,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetReport {
    pub limit_set: LimitSet,
    pub evidence: Evidence,
}

impl LimitSetReport {
    pub fn label(&self) -> &'static str {
        match self.limit_set {
            LimitSet::Equilibrium { .. } => "equilibrium",
            LimitSet::Torus { .. } => "torus",
            LimitSet::Unbounded { .. } => "unbounded",
            LimitSet::Unknown { .. } => "unknown",
        }
    }

    pub fn torus_k(&self) -> Option<usize> {
        match self.limit_set {
            LimitSet::Torus { k, .. } => Some(k),
            _ => None,
        }
    }

    pub fn to_doc(&self) -> LimitSetDoc {
        let mut doc = LimitSetDoc {
            classification: self.label().to_string(),
            k: None,
            equilibrium: None,
            frequencies: None,
            generator: None,
            escape_time: None,
            reason: None,
            evidence: self.evidence.clone(),
        };
        match &self.limit_set {
            LimitSet::Equilibrium { point } => doc.equilibrium = Some(point.clone()),
            LimitSet::Torus {
                k,
                generator,
                frequencies,
            } => {
                doc.k = Some(*k);
                doc.frequencies = Some(frequencies.clone());
                doc.equilibrium = Some(generator.equilibrium.clone());
                doc.generator = Some(GeneratorDoc {
                    b: rows(&generator.b),
                    span_basis: rows(&generator.span_basis),
                    rank: generator.rank,
                    rms_residual: generator.rms_residual,
                });
            }
            LimitSet::Unbounded { escape_time } => doc.escape_time = Some(*escape_time),
            LimitSet::Unknown { reason } => doc.reason = Some(reason.clone()),
        }
        doc
    }
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// JSON form of a [`LimitSetReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitSetDoc {
    pub classification: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub equilibrium: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frequencies: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorDoc {
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    pub span_basis: Vec<Vec<f64>>,
    pub rank: usize,
    pub rms_residual: f64,
}

/// Boundedness probe, attractor extraction, then either an equilibrium
/// test (rank-0 span) or a conserved-linear generator fit. Failures become
/// `Unknown` with a reason; nothing is assumed about the norm.
pub fn classify_limit_set(
    f: &VectorFieldDef,
    x0: &[f64],
    norm: &NormSpec,
    config: &ClassifyConfig,
    cfg: &IntegratorConfig,
) -> LimitSetReport {
    let mut evidence = Evidence {
        isometry_dev: None,
        fit_residual: None,
        convexity_dev: None,
        span_rank: None,
        final_residual: None,
        displacement: None,
        transient: config.transient,
        horizon: config.horizon(),
    };
    let limit_set = classify_inner(f, x0, norm, config, cfg, &mut evidence)
        .unwrap_or_else(|e| LimitSet::Unknown { reason: e.to_string() });
    LimitSetReport { limit_set, evidence }
}

fn classify_inner(
    f: &VectorFieldDef,
    x0: &[f64],
    norm: &NormSpec,
    config: &ClassifyConfig,
    cfg: &IntegratorConfig,
    ev: &mut Evidence,
) -> Result<LimitSet> {
    config.validate()?;
    norm.check_dim(f.dimension())?;
    if x0.len() != f.dimension() {
        return Err(Error::DimensionMismatch {
            expected: f.dimension(),
            found: x0.len(),
        });
    }
    let horizon = config.horizon();
    if let Boundedness::UnboundedEvidence { escape_time } =
        boundedness_probe(f, x0, horizon, config.radius_guard, cfg)?
    {
        return Ok(LimitSet::Unbounded { escape_time });
    }
    let sample = match extract_attractor(f, x0, config.transient, config.window, config.sample_dt, cfg) {
        Ok(s) => s,
        Err(Error::Diverged { t }) => return Ok(LimitSet::Unbounded { escape_time: t }),
        Err(e) => return Err(e),
    };
    let last = sample.points.last().unwrap();
    let final_residual = f.eval(last)?.iter().map(|v| v * v).sum::<f64>().sqrt();
    let late = horizon - 0.1 * horizon;
    let displacement = sample
        .times
        .iter()
        .zip(&sample.points)
        .filter(|(t, _)| **t >= late)
        .map(|(_, p)| p.iter().zip(last).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max);
    ev.span_rank = Some(sample.rank());
    ev.final_residual = Some(final_residual);
    ev.displacement = Some(displacement);
    ev.isometry_dev = Some(isometry_check_with(
        f,
        &sample,
        norm,
        &config.isometry_times,
        cfg,
        config.check_pairs,
        config.seed,
    )?);
    if norm.is_strictly_convex() {
        ev.convexity_dev = Some(convex_combination_check_with(
            f,
            &sample,
            norm,
            &config.lambdas,
            &config.convexity_times,
            cfg,
            config.check_pairs,
            config.seed,
        )?);
    }

    if sample.rank() == 0 {
        if final_residual >= config.equilibrium_tol {
            return Ok(LimitSet::Unknown {
                reason: format!("samples are stationary but ||f|| = {final_residual:e} at the last state"),
            });
        }
        if displacement >= config.equilibrium_tol {
            return Ok(LimitSet::Unknown {
                reason: format!("late displacement {displacement:e} is above the equilibrium tolerance"),
            });
        }
        let point = match &sample.equilibrium {
            Some(e) if e.converged && dist_inf(&e.point, last) < 1e-6 => e.point.clone(),
            _ => last.clone(),
        };
        return Ok(LimitSet::Equilibrium { point });
    }

    let eq = match &sample.equilibrium {
        Some(e) if e.residual < config.equilibrium_tol => e.point.clone(),
        _ => {
            return Ok(LimitSet::Unknown {
                reason: "no equilibrium found near the attractor samples".into(),
            })
        }
    };
    let fit = fit_linear_generator(f, &sample.points, &eq)?;
    ev.fit_residual = Some(fit.rms_residual);
    if fit.rms_residual >= config.fit_tol {
        return Ok(LimitSet::Unknown {
            reason: format!(
                "generator residual {:e} exceeds {:e}; the system may not be nonexpansive for a strictly convex norm",
                fit.rms_residual, config.fit_tol
            ),
        });
    }
    if fit.rank == 0 {
        return Ok(LimitSet::Unknown {
            reason: "samples spread but no span relative to the equilibrium".into(),
        });
    }
    let analysis = analyze_conserved(&fit.b_span, Some(config.spectral_tol))?;
    if !analysis.conserved {
        return Ok(LimitSet::Unknown {
            reason: format!(
                "fitted generator is not conserved: {}",
                analysis.reason.as_deref().unwrap_or("unknown")
            ),
        });
    }
    let z0 = fit.span_basis.transpose() * (DVector::from_column_slice(last) - DVector::from_column_slice(&eq));
    let k = torus_dimension(&analysis, z0.as_slice(), config.coeff_bound, config.relation_tol)?;
    if k == 0 {
        return Ok(LimitSet::Unknown {
            reason: "samples spread but the fitted generator leaves them fixed".into(),
        });
    }
    Ok(LimitSet::Torus {
        k,
        frequencies: analysis.frequencies.clone(),
        generator: fit,
    })
}

fn dist_inf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Classifies several initial conditions in parallel.
pub fn classify_many(
    f: &VectorFieldDef,
    x0s: &[Vec<f64>],
    norm: &NormSpec,
    config: &ClassifyConfig,
    cfg: &IntegratorConfig,
) -> Vec<LimitSetReport> {
    x0s.par_iter()
        .map(|x0| classify_limit_set(f, x0, norm, config, cfg))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_field;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig::default()
    }

    #[test]
    fn sink_gives_single_point() {
        let f = parse_field("-x; -y", 2).unwrap();
        let s = extract_attractor(&f, &[1.0, 1.0], 50.0, 200.0, 0.5, &cfg()).unwrap();
        assert_eq!(s.rank(), 0);
        assert!(s.center.iter().all(|c| c.abs() < 1e-12));
        let n = NormSpec::l2();
        assert_eq!(isometry_check(&f, &AttractorSample::from_points(vec![vec![0.0, 0.0]]).unwrap(), &n, &[1.0], &cfg()).unwrap(), 0.0);
    }

    #[test]
    fn harmonic_circle() {
        let f = parse_field("y; -x", 2).unwrap();
        let s = extract_attractor(&f, &[1.0, 0.0], 50.0, 200.0, 0.5, &cfg()).unwrap();
        assert_eq!(s.rank(), 2);
        for p in &s.points {
            assert!(((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs() < 1e-7);
        }
        let eq = s.equilibrium.as_ref().unwrap();
        assert!(eq.converged && eq.point.iter().all(|v| v.abs() < 1e-12));
        let n = NormSpec::l2();
        assert!(isometry_check(&f, &s, &n, &[1.0, 5.0, 25.0], &cfg()).unwrap() < 1e-7);
        assert!(convex_combination_check(&f, &s, &n, &[0.3, 0.5], &[1.0, 10.0], &cfg()).unwrap() < 1e-9);
    }

    #[test]
    fn convexity_rejects_polyhedral() {
        let f = parse_field("y; -x", 2).unwrap();
        let s = AttractorSample::from_points(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            convex_combination_check(&f, &s, &NormSpec::linf(2), &[0.5], &[1.0], &cfg()),
            Err(Error::UnsupportedNorm(_))
        ));
    }

    #[test]
    fn convexity_detects_nonlinear_flow() {
        let f = parse_field("x + x^3", 1).unwrap();
        let s = AttractorSample::from_points(vec![vec![0.1], vec![0.2]]).unwrap();
        let d = convex_combination_check(&f, &s, &NormSpec::l2(), &[0.5], &[1.0], &cfg()).unwrap();
        assert!(d > 1e-3, "{d}");
    }

    #[test]
    fn classifications() {
        let c = ClassifyConfig::default();
        let n = NormSpec::l2();
        let h = parse_field("y; -x", 2).unwrap();
        let r = classify_limit_set(&h, &[1.0, 0.0], &n, &c, &cfg());
        assert_eq!(r.torus_k(), Some(1), "{:?}", r.limit_set);
        assert!(r.evidence.fit_residual.unwrap() < 1e-10);

        let hw = parse_field("-x; -(x^2 + 1) * y", 2).unwrap();
        let r = classify_limit_set(&hw, &[1.0, 1.0], &n, &c, &cfg());
        match r.limit_set {
            LimitSet::Equilibrium { point } => assert!(point.iter().all(|v| v.abs() < 1e-8)),
            other => panic!("{other:?}"),
        }

        let e = parse_field("x", 1).unwrap();
        let r = classify_limit_set(&e, &[1.0], &n, &c, &cfg());
        match r.limit_set {
            LimitSet::Unbounded { escape_time } => assert!((escape_time - 1e6f64.ln()).abs() < 0.1),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_conserved_generator_is_unknown() {
        // slowly decaying spiral: still spread after the window
        let f = parse_field("-0.001*x + y; -x - 0.001*y", 2).unwrap();
        let r = classify_limit_set(&f, &[1.0, 0.0], &NormSpec::l2(), &ClassifyConfig::default(), &cfg());
        match &r.limit_set {
            LimitSet::Unknown { reason } => assert!(reason.contains("not conserved"), "{reason}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn recurrence() {
        let f = parse_field("y; -x", 2).unwrap();
        let t = first_return(&f, &[1.0, 0.0], &NormSpec::l2(), 0.01, 1.0, 20.0, 0.001, &cfg())
            .unwrap()
            .unwrap();
        assert!((t - 2.0 * std::f64::consts::PI).abs() < 0.011, "{t}");
    }

    #[test]
    fn report_json_shape() {
        let h = parse_field("y; -x", 2).unwrap();
        let r = classify_limit_set(&h, &[1.0, 0.0], &NormSpec::l2(), &ClassifyConfig::default(), &cfg());
        let v = serde_json::to_value(r.to_doc()).unwrap();
        assert_eq!(v["classification"], "torus");
        assert_eq!(v["k"], 1);
        for key in ["isometry_dev", "fit_residual", "convexity_dev"] {
            assert!(v["evidence"].get(key).is_some(), "{key}");
        }
    }
}
