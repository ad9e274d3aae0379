//! Adaptive Dormand–Prince 5(4) integration of `dx/dt = f(x)`.
//!
//! Steps are clipped so every requested output time is hit exactly; no
//! interpolation is involved in sampled output.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expr::VectorFieldDef;
use crate::norms::NormSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Embedded Runge–Kutta 5(4), Dormand–Prince coefficients.
    DormandPrince54,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub rtol: f64,
    pub atol: f64,
    pub max_step: f64,
    pub max_steps: usize,
    /// Euclidean state norm beyond which the trajectory is declared divergent.
    pub overflow_guard: f64,
    pub method: Method,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rtol: 1e-9,
            atol: 1e-11,
            max_step: f64::INFINITY,
            max_steps: 5_000_000,
            overflow_guard: 1e12,
            method: Method::DormandPrince54,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |x: f64| x > 0.0 && !x.is_nan();
        if !positive(self.rtol) || !positive(self.atol) {
            return Err(Error::InvalidArgument("tolerances must be positive".into()));
        }
        if !positive(self.max_step) || self.max_steps == 0 {
            return Err(Error::InvalidArgument(
                "max_step and max_steps must be positive".into(),
            ));
        }
        if !positive(self.overflow_guard) {
            return Err(Error::InvalidArgument("overflow guard must be positive".into()));
        }
        Ok(())
    }

    pub fn with_tolerances(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ReachedHorizon,
    StepFailure,
    NormOverflow,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub config: IntegratorConfig,
    pub termination: Termination,
    /// Time at which integration stopped early, if it did.
    pub stopped_at: Option<f64>,
}

impl Trajectory {
    pub fn last_state(&self) -> &[f64] {
        self.states.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn completed(&self) -> bool {
        self.termination == Termination::ReachedHorizon
    }

    /// Writes `t,x1,...,xn` CSV with round-trip precision.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = String::from("t");
        for i in 1..=n {
            header.push_str(&format!(",x{i}"));
        }
        writeln!(out, "{header}")?;
        for (t, x) in self.times.iter().zip(&self.states) {
            let mut row = format_f64(*t);
            for v in x {
                row.push(',');
                row.push_str(&format_f64(*v));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }
}

/// Shortest decimal that parses back to the same double; exponent form
/// outside [1e-4, 1e15).
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

// Dormand–Prince tableau (the c_i nodes are not needed for autonomous systems).
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// error coefficients: b5 - b4
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Right-hand side of an autonomous system, writing `f(x)` into `out`.
pub trait Rhs {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()>;
}

impl Rhs for VectorFieldDef {
    fn dim(&self) -> usize {
        self.dimension()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.eval_into(x, out)
    }
}

/// Two copies of a field integrated as one system on a shared step sequence.
pub struct Stacked<'a, R: Rhs>(pub &'a R);

impl<R: Rhs> Rhs for Stacked<'_, R> {
    fn dim(&self) -> usize {
        2 * self.0.dim()
    }

    fn eval(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let n = self.0.dim();
        let (oa, ob) = out.split_at_mut(n);
        self.0.eval(&x[..n], oa)?;
        self.0.eval(&x[n..], ob)
    }
}

/// Integrates from `x0` at t = 0 and records the state at each of `times`
/// (non-decreasing, non-negative). Early stops are reported through
/// [`Trajectory::termination`].
pub fn integrate_at<R: Rhs>(
    rhs: &R,
    x0: &[f64],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = rhs.dim();
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if times.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
        return Err(Error::InvalidArgument("output times must be finite and >= 0".into()));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("output times must be sorted".into()));
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }

    let mut traj = Trajectory {
        times: Vec::with_capacity(times.len()),
        states: Vec::with_capacity(times.len()),
        config: *cfg,
        termination: Termination::ReachedHorizon,
        stopped_at: None,
    };
    let mut stepper = Stepper::new(rhs, x0, cfg)?;
    for &target in times {
        if let Some(&last) = traj.times.last() {
            if target == last {
                continue;
            }
        }
        match stepper.advance_to(target) {
            Ok(()) => {
                traj.times.push(target);
                traj.states.push(stepper.y.clone());
            }
            Err(Error::Diverged { t }) => {
                traj.times.push(t);
                traj.states.push(stepper.y.clone());
                traj.termination = Termination::NormOverflow;
                traj.stopped_at = Some(t);
                return Ok(traj);
            }
            Err(Error::StepSizeUnderflow { t }) | Err(Error::TooManySteps { t }) => {
                traj.termination = Termination::StepFailure;
                traj.stopped_at = Some(t);
                return Ok(traj);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

struct Stepper<'a, R: Rhs> {
    rhs: &'a R,
    cfg: IntegratorConfig,
    t: f64,
    y: Vec<f64>,
    k1: Vec<f64>,
    h: f64,
    steps: usize,
    // scratch
    k: [Vec<f64>; 6],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl<'a, R: Rhs> Stepper<'a, R> {
    fn new(rhs: &'a R, x0: &[f64], cfg: &IntegratorConfig) -> Result<Self> {
        let n = x0.len();
        let mut k1 = vec![0.0; n];
        rhs.eval(x0, &mut k1)?;
        let mut s = Stepper {
            rhs,
            cfg: *cfg,
            t: 0.0,
            y: x0.to_vec(),
            k1,
            h: 0.0,
            steps: 0,
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        };
        s.h = s.initial_step()?;
        Ok(s)
    }

    fn scale(&self, y: f64) -> f64 {
        self.cfg.atol + self.cfg.rtol * y.abs()
    }

    /// Starting step from the size of x and f(x) (Hairer, Norsett & Wanner).
    fn initial_step(&mut self) -> Result<f64> {
        let n = self.y.len() as f64;
        let mut d0 = 0.0;
        let mut d1 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i]);
            d0 += (self.y[i] / sc).powi(2);
            d1 += (self.k1[i] / sc).powi(2);
        }
        let (d0, d1) = ((d0 / n).sqrt(), (d1 / n).sqrt());
        let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        let h0 = h0.min(self.cfg.max_step);
        for i in 0..self.y.len() {
            self.ytmp[i] = self.y[i] + h0 * self.k1[i];
        }
        let mut f1 = vec![0.0; self.y.len()];
        self.rhs.eval(&self.ytmp, &mut f1)?;
        let mut d2 = 0.0;
        for i in 0..self.y.len() {
            let sc = self.scale(self.y[i]);
            d2 += ((f1[i] - self.k1[i]) / sc).powi(2);
        }
        let d2 = (d2 / n).sqrt() / h0;
        let h1 = if d1.max(d2) <= 1e-15 {
            (h0 * 1e-3).max(1e-6)
        } else {
            (0.01 / d1.max(d2)).powf(1.0 / 5.0)
        };
        Ok((100.0 * h0).min(h1).min(self.cfg.max_step))
    }

    fn advance_to(&mut self, target: f64) -> Result<()> {
        while self.t < target {
            if self.steps >= self.cfg.max_steps {
                return Err(Error::TooManySteps { t: self.t });
            }
            let remaining = target - self.t;
            // land on the target instead of leaving a sliver
            let last = self.h >= remaining || self.h * 1.01 >= remaining;
            let h = if last { remaining } else { self.h };
            if h <= 16.0 * f64::EPSILON * self.t.abs().max(1.0) && !last {
                return Err(Error::StepSizeUnderflow { t: self.t });
            }
            let err = self.try_step(h)?;
            if err <= 1.0 {
                self.steps += 1;
                self.t = if last { target } else { self.t + h };
                std::mem::swap(&mut self.y, &mut self.ynew);
                // FSAL: the last stage is f(y_new)
                std::mem::swap(&mut self.k1, &mut self.k[5]);
                let norm = self.y.iter().map(|v| v * v).sum::<f64>().sqrt();
                if !(norm <= self.cfg.overflow_guard) {
                    return Err(Error::Diverged { t: self.t });
                }
                let factor = if err == 0.0 {
                    5.0
                } else {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                };
                let proposed = (h * factor).min(self.cfg.max_step);
                if !last || proposed > self.h {
                    self.h = proposed;
                }
            } else {
                self.h = h * (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
                if self.h <= 16.0 * f64::EPSILON * self.t.abs().max(1.0) {
                    return Err(Error::StepSizeUnderflow { t: self.t });
                }
            }
        }
        Ok(())
    }

    /// One trial step of size h; fills `ynew` and `k[5]` (= f(ynew)) and
    /// returns the scaled error norm.
    fn try_step(&mut self, h: f64) -> Result<f64> {
        let n = self.y.len();
        let y = &self.y;
        let k1 = &self.k1;
        let [k2, k3, k4, k5, k6, k7] = &mut self.k;
        let ytmp = &mut self.ytmp;
        let rhs = self.rhs;

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        stage(rhs, ytmp, k2)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        stage(rhs, ytmp, k3)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        stage(rhs, ytmp, k4)?;
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        stage(rhs, ytmp, k5)?;
        for i in 0..n {
            ytmp[i] = y[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        stage(rhs, ytmp, k6)?;
        let ynew = &mut self.ynew;
        for i in 0..n {
            ynew[i] = y[i]
                + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        if ynew.iter().any(|v| !v.is_finite()) {
            return Ok(f64::INFINITY);
        }
        stage(rhs, ynew, k7)?;
        let mut err = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = self.cfg.atol + self.cfg.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        Ok((err / n as f64).sqrt())
    }
}

/// Stage evaluation; a non-finite stage makes the step fail (and shrink)
/// rather than abort the run.
fn stage<R: Rhs>(rhs: &R, x: &[f64], out: &mut [f64]) -> Result<()> {
    match rhs.eval(x, out) {
        Ok(()) => Ok(()),
        Err(Error::NonFinite) => {
            out.iter_mut().for_each(|v| *v = f64::NAN);
            Ok(())
        }
        Err(e) => Err(e),
    }
}

/// Approximates the flow map `phi_t(x0)`.
pub fn flow(f: &VectorFieldDef, x0: &[f64], t: f64, cfg: &IntegratorConfig) -> Result<Vec<f64>> {
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument("flow time must be >= 0".into()));
    }
    if t == 0.0 {
        if x0.len() != f.dimension() {
            return Err(Error::DimensionMismatch {
                expected: f.dimension(),
                found: x0.len(),
            });
        }
        return Ok(x0.to_vec());
    }
    let traj = integrate_at(f, x0, &[t], cfg)?;
    match traj.termination {
        Termination::ReachedHorizon => Ok(traj.states.into_iter().next().unwrap()),
        Termination::NormOverflow => Err(Error::Diverged {
            t: traj.stopped_at.unwrap_or(t),
        }),
        Termination::StepFailure => Err(Error::StepSizeUnderflow {
            t: traj.stopped_at.unwrap_or(t),
        }),
    }
}

/// Sample grid `0, dt, 2dt, ...` up to `horizon`, with `horizon` itself
/// appended when it is not on the grid.
pub fn sample_times(horizon: f64, sample_dt: f64) -> Result<Vec<f64>> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    if !(sample_dt > 0.0) || !sample_dt.is_finite() {
        return Err(Error::InvalidArgument("sample_dt must be positive".into()));
    }
    let count = (horizon / sample_dt + 1e-9).floor() as usize;
    let mut ts: Vec<f64> = (0..=count).map(|k| k as f64 * sample_dt).collect();
    let last = *ts.last().unwrap();
    if last > horizon {
        *ts.last_mut().unwrap() = horizon;
    } else if horizon - last > 1e-12 * horizon {
        ts.push(horizon);
    }
    Ok(ts)
}

/// Trajectory sampled every `sample_dt` over `[0, horizon]`.
pub fn trace(
    f: &VectorFieldDef,
    x0: &[f64],
    horizon: f64,
    sample_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    integrate_at(f, x0, &sample_times(horizon, sample_dt)?, cfg)
}

/// `(t, ||phi_t(x0) - phi_t(y0)||)` with both trajectories integrated as one
/// stacked system. Stops early (shorter series) if the pair diverges.
pub fn distance_series(
    f: &VectorFieldDef,
    x0: &[f64],
    y0: &[f64],
    norm: &NormSpec,
    horizon: f64,
    sample_dt: f64,
    cfg: &IntegratorConfig,
) -> Result<Vec<(f64, f64)>> {
    let traj = pair_trajectory(f, x0, y0, &sample_times(horizon, sample_dt)?, cfg)?;
    pair_distances(&traj, f.dimension(), norm)
}

pub(crate) fn pair_trajectory(
    f: &VectorFieldDef,
    x0: &[f64],
    y0: &[f64],
    times: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    let n = f.dimension();
    if x0.len() != n || y0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: if x0.len() != n { x0.len() } else { y0.len() },
        });
    }
    let z0: Vec<f64> = x0.iter().chain(y0).copied().collect();
    integrate_at(&Stacked(f), &z0, times, cfg)
}

pub(crate) fn pair_distances(traj: &Trajectory, n: usize, norm: &NormSpec) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::with_capacity(traj.times.len());
    let mut diff = vec![0.0; n];
    for (t, z) in traj.times.iter().zip(&traj.states) {
        if traj.termination == Termination::NormOverflow && Some(*t) == traj.stopped_at {
            break;
        }
        for i in 0..n {
            diff[i] = z[i] - z[n + i];
        }
        out.push((*t, norm.eval(&diff)?));
    }
    Ok(out)
}
