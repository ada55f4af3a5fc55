//! Closed-loop simulation in state space and in error coordinates.
//!
//! The control input is recomputed at every integrator stage evaluation
//! (continuous-time control, no sample-and-hold), and the barrier domain
//! test runs at stage states too, so a step that pokes past a constraint
//! surfaces as an error instead of a non-finite blow-up.

use crate::controller::{self, ControllerConfig};
use crate::error::{Error, Result};
use crate::plant::{ReferenceSignal, StrictFeedbackModel};

/// Right-hand side of a first-order ODE system; may fail at inadmissible
/// states (barrier breach at an integrator stage).
pub type RhsFn<'a> = dyn Fn(&[f64], f64) -> Result<Vec<f64>> + 'a;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Rkf45,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Rkf45 => "rkf45",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "rkf45" => Ok(Method::Rkf45),
            other => Err(Error::Config(format!("unknown integrator '{other}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntegratorConfig {
    pub method: Method,
    /// Step size (RK4) or initial step (RKF45), seconds.
    pub h: f64,
    pub t_final: f64,
    /// RKF45 error tolerances; ignored by RK4.
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Record every `record_stride`-th accepted step (1 = every step).
    pub record_stride: usize,
}

impl IntegratorConfig {
    pub fn rk4(h: f64, t_final: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            h,
            t_final,
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            record_stride: 1,
        }
    }

    pub fn rkf45(h0: f64, t_final: f64, abs_tol: f64, rel_tol: f64) -> Self {
        IntegratorConfig {
            method: Method::Rkf45,
            h: h0,
            t_final,
            abs_tol,
            rel_tol,
            record_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h.is_finite() && self.h > 0.0) {
            return Err(Error::Config(format!(
                "step size must be positive, got {}",
                self.h
            )));
        }
        if !(self.t_final.is_finite() && self.t_final > 0.0) {
            return Err(Error::Config(format!(
                "horizon must be positive, got {}",
                self.t_final
            )));
        }
        if !(self.abs_tol.is_finite() && self.abs_tol > 0.0)
            || !(self.rel_tol.is_finite() && self.rel_tol > 0.0)
        {
            return Err(Error::Config("tolerances must be positive".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::Config("record stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Configuration snapshot stored with every trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetadata {
    pub design: String,
    pub plant: String,
    pub reference: String,
    pub space: String,
    pub kappa: Vec<f64>,
    pub barrier_kinds: Vec<String>,
    pub barrier_k: Vec<f64>,
    pub barrier_beta: Vec<f64>,
    pub method: String,
    pub h: f64,
    pub t_final: f64,
    pub record_stride: usize,
    pub initial: Vec<f64>,
}

/// Time-indexed series from one closed-loop run. All series share one
/// length; `alpha` holds the first `n - 1` stabilizing functions (the
/// last one is `u`).
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub alpha: Vec<Vec<f64>>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub vdot_analytic: Vec<f64>,
    pub metadata: RunMetadata,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn order(&self) -> usize {
        self.x.first().map_or(0, |row| row.len())
    }

    /// Column view of one state channel (zero-based).
    pub fn x_channel(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.x.iter().map(move |row| row[i])
    }

    pub fn z_channel(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.z.iter().map(move |row| row[i])
    }

    /// Structural invariants: equal lengths, finite entries, nonnegative
    /// Lyapunov values, nonpositive analytic rate.
    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Config("empty trajectory record".into()));
        }
        let lengths_ok = self.x.len() == n
            && self.z.len() == n
            && self.alpha.len() == n
            && self.u.len() == n
            && self.v.len() == n
            && self.vdot_analytic.len() == n;
        if !lengths_ok {
            return Err(Error::Config("trajectory series lengths disagree".into()));
        }
        for i in 0..n {
            let finite = self.t[i].is_finite()
                && self.x[i].iter().all(|v| v.is_finite())
                && self.z[i].iter().all(|v| v.is_finite())
                && self.alpha[i].iter().all(|v| v.is_finite())
                && self.u[i].is_finite()
                && self.v[i].is_finite()
                && self.vdot_analytic[i].is_finite();
            if !finite {
                return Err(Error::NonFiniteState { t: self.t[i] });
            }
            if self.v[i] < 0.0 {
                return Err(Error::Config(format!(
                    "negative Lyapunov value {} at t = {}",
                    self.v[i], self.t[i]
                )));
            }
            if self.vdot_analytic[i] > 0.0 {
                return Err(Error::Config(format!(
                    "positive analytic Lyapunov rate at t = {}",
                    self.t[i]
                )));
            }
        }
        Ok(())
    }

    /// True when the time grid is uniform to within `tol`.
    pub fn uniform_grid(&self, tol: f64) -> Option<f64> {
        if self.len() < 2 {
            return None;
        }
        let h = self.t[1] - self.t[0];
        for w in self.t.windows(2) {
            if ((w[1] - w[0]) - h).abs() > tol {
                return None;
            }
        }
        Some(h)
    }
}

/// One classical fourth-order Runge-Kutta step. The right-hand side may
/// fail (barrier breach at a stage state); the error propagates.
pub fn rk4_step(rhs: &RhsFn, y: &[f64], t: f64, h: f64) -> Result<Vec<f64>> {
    let k1 = rhs(y, t)?;
    let y2: Vec<f64> = y.iter().zip(&k1).map(|(a, k)| a + 0.5 * h * k).collect();
    let k2 = rhs(&y2, t + 0.5 * h)?;
    let y3: Vec<f64> = y.iter().zip(&k2).map(|(a, k)| a + 0.5 * h * k).collect();
    let k3 = rhs(&y3, t + 0.5 * h)?;
    let y4: Vec<f64> = y.iter().zip(&k3).map(|(a, k)| a + h * k).collect();
    let k4 = rhs(&y4, t + h)?;
    let mut out = Vec::with_capacity(y.len());
    for i in 0..y.len() {
        let v = y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if !v.is_finite() {
            return Err(Error::NonFiniteState { t: t + h });
        }
        out.push(v);
    }
    Ok(out)
}

/// One Runge-Kutta-Fehlberg 4(5) attempt: returns the fifth-order state
/// and the scaled error estimate (<= 1 means acceptable).
fn rkf45_attempt(
    rhs: &RhsFn,
    y: &[f64],
    t: f64,
    h: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(Vec<f64>, f64)> {
    let stage = |coeffs: &[(f64, &Vec<f64>)]| -> Vec<f64> {
        let mut s = y.to_vec();
        for (c, k) in coeffs {
            for (si, ki) in s.iter_mut().zip(k.iter()) {
                *si += h * c * ki;
            }
        }
        s
    };
    let k1 = rhs(y, t)?;
    let k2 = rhs(&stage(&[(0.25, &k1)]), t + 0.25 * h)?;
    let k3 = rhs(
        &stage(&[(3.0 / 32.0, &k1), (9.0 / 32.0, &k2)]),
        t + 3.0 / 8.0 * h,
    )?;
    let k4 = rhs(
        &stage(&[
            (1932.0 / 2197.0, &k1),
            (-7200.0 / 2197.0, &k2),
            (7296.0 / 2197.0, &k3),
        ]),
        t + 12.0 / 13.0 * h,
    )?;
    let k5 = rhs(
        &stage(&[
            (439.0 / 216.0, &k1),
            (-8.0, &k2),
            (3680.0 / 513.0, &k3),
            (-845.0 / 4104.0, &k4),
        ]),
        t + h,
    )?;
    let k6 = rhs(
        &stage(&[
            (-8.0 / 27.0, &k1),
            (2.0, &k2),
            (-3544.0 / 2565.0, &k3),
            (1859.0 / 4104.0, &k4),
            (-11.0 / 40.0, &k5),
        ]),
        t + 0.5 * h,
    )?;

    let mut y5 = Vec::with_capacity(y.len());
    let mut err = 0.0f64;
    for i in 0..y.len() {
        let fifth = y[i]
            + h * (16.0 / 135.0 * k1[i] + 6656.0 / 12825.0 * k3[i] + 28561.0 / 56430.0 * k4[i]
                - 9.0 / 50.0 * k5[i]
                + 2.0 / 55.0 * k6[i]);
        let fourth = y[i]
            + h * (25.0 / 216.0 * k1[i] + 1408.0 / 2565.0 * k3[i] + 2197.0 / 4104.0 * k4[i]
                - 0.2 * k5[i]);
        if !fifth.is_finite() {
            return Err(Error::NonFiniteState { t: t + h });
        }
        let scale = abs_tol + rel_tol * y[i].abs().max(fifth.abs());
        err = err.max((fifth - fourth).abs() / scale);
        y5.push(fifth);
    }
    Ok((y5, err))
}

/// Drives either integrator over the horizon, invoking `record` at t = 0,
/// at every `record_stride`-th accepted step, and at the final time.
fn integrate(
    rhs: &RhsFn,
    y0: Vec<f64>,
    integ: &IntegratorConfig,
    record: &mut dyn FnMut(f64, &[f64]) -> Result<()>,
) -> Result<()> {
    match integ.method {
        Method::Rk4 => {
            let steps = (integ.t_final / integ.h).round().max(1.0) as u64;
            let exact = (steps as f64 * integ.h - integ.t_final).abs() < 1e-9 * integ.t_final;
            let mut y = y0;
            record(0.0, &y)?;
            let mut recorded_last = false;
            for i in 0..steps {
                let t = i as f64 * integ.h;
                let h = if !exact && i == steps - 1 {
                    integ.t_final - t
                } else {
                    integ.h
                };
                y = rk4_step(rhs, &y, t, h)?;
                let t_next = if i == steps - 1 {
                    integ.t_final
                } else {
                    (i + 1) as f64 * integ.h
                };
                if (i + 1) % integ.record_stride as u64 == 0 || i == steps - 1 {
                    record(t_next, &y)?;
                    recorded_last = i == steps - 1;
                }
            }
            debug_assert!(recorded_last);
            Ok(())
        }
        Method::Rkf45 => {
            let mut y = y0;
            let mut t = 0.0f64;
            let mut h = integ.h.min(integ.t_final);
            record(0.0, &y)?;
            let mut accepted: u64 = 0;
            while t < integ.t_final {
                let h_try = h.min(integ.t_final - t);
                let (y5, err) = rkf45_attempt(rhs, &y, t, h_try, integ.abs_tol, integ.rel_tol)?;
                if err <= 1.0 {
                    t += h_try;
                    y = y5;
                    accepted += 1;
                    if accepted.is_multiple_of(integ.record_stride as u64) || t >= integ.t_final {
                        record(t, &y)?;
                    }
                }
                let factor = if err > 0.0 {
                    (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                } else {
                    5.0
                };
                h = h_try * factor;
                if h < 1e-12 * integ.t_final {
                    return Err(Error::StepSizeUnderflow { t });
                }
            }
            Ok(())
        }
    }
}

fn metadata(
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
    integ: &IntegratorConfig,
    space: &str,
    initial: &[f64],
) -> RunMetadata {
    RunMetadata {
        design: cfg.design.name().into(),
        plant: model.name().into(),
        reference: rf.name().into(),
        space: space.into(),
        kappa: cfg.kappa.clone(),
        barrier_kinds: cfg.barriers.iter().map(|b| b.kind.name().into()).collect(),
        barrier_k: cfg.barriers.iter().map(|b| b.k).collect(),
        barrier_beta: cfg.barriers.iter().map(|b| b.beta).collect(),
        method: integ.method.name().into(),
        h: integ.h,
        t_final: integ.t_final,
        record_stride: integ.record_stride,
        initial: initial.to_vec(),
    }
}

struct SeriesBuf {
    t: Vec<f64>,
    x: Vec<Vec<f64>>,
    z: Vec<Vec<f64>>,
    alpha: Vec<Vec<f64>>,
    u: Vec<f64>,
    v: Vec<f64>,
    vdot: Vec<f64>,
}

impl SeriesBuf {
    fn new() -> Self {
        SeriesBuf {
            t: Vec::new(),
            x: Vec::new(),
            z: Vec::new(),
            alpha: Vec::new(),
            u: Vec::new(),
            v: Vec::new(),
            vdot: Vec::new(),
        }
    }

    fn push(
        &mut self,
        t: f64,
        x: &[f64],
        cfg: &ControllerConfig,
        ev: &controller::ErrorVector,
        u: f64,
    ) -> Result<()> {
        let v = cfg.lyapunov_value(&ev.z)?;
        self.t.push(t);
        self.x.push(x.to_vec());
        self.z.push(ev.z.clone());
        self.alpha.push(ev.alpha[..ev.alpha.len() - 1].to_vec());
        self.u.push(u);
        self.v.push(v);
        self.vdot.push(cfg.lyapunov_rate(&ev.z));
        Ok(())
    }

    fn finish(self, metadata: RunMetadata) -> Result<TrajectoryRecord> {
        let rec = TrajectoryRecord {
            t: self.t,
            x: self.x,
            z: self.z,
            alpha: self.alpha,
            u: self.u,
            v: self.v,
            vdot_analytic: self.vdot,
            metadata,
        };
        rec.validate()?;
        Ok(rec)
    }
}

/// Promotes controller domain errors to simulation-level diagnostics.
fn promote(e: Error, t: f64) -> Error {
    match e {
        Error::Domain { channel, .. } => Error::ConstraintBreach { channel, t },
        Error::NonFinite { .. } => Error::NonFiniteState { t },
        other => other,
    }
}

fn check_declared_constraints(cfg: &ControllerConfig, x: &[f64], t: f64) -> Result<()> {
    for (i, bound) in cfg.constraint_box.iter().enumerate() {
        if let Some(kx) = bound {
            if x[i].abs() >= *kx {
                return Err(Error::ConstraintBreach { channel: i + 1, t });
            }
        }
    }
    Ok(())
}

/// Integrates the plant under the configured control law, recording every
/// series. Halts with a diagnostic on barrier breach (checked at stage
/// states), declared-constraint violation (checked at recorded states),
/// or non-finite values.
pub fn simulate_x_space(
    model: &StrictFeedbackModel,
    cfg: &ControllerConfig,
    rf: &ReferenceSignal,
    integ: &IntegratorConfig,
    x0: &[f64],
) -> Result<TrajectoryRecord> {
    integ.validate()?;
    if x0.len() != model.order() {
        return Err(Error::Config(format!(
            "initial state has {} entries, model order is {}",
            x0.len(),
            model.order()
        )));
    }

    // The boundedness guarantees assume admissible initial errors.
    match controller::control(x0, 0.0, cfg, model, rf) {
        Err(Error::Domain { channel, z, k }) => {
            return Err(Error::InadmissibleInitialCondition { channel, z0: z, k })
        }
        Err(e) => return Err(e),
        Ok(_) => {}
    }

    let rhs = |x: &[f64], t: f64| -> Result<Vec<f64>> {
        let (u, _) = controller::control(x, t, cfg, model, rf).map_err(|e| promote(e, t))?;
        let s = crate::plant::StateVector::new(x.to_vec(), t)
            .map_err(|_| Error::NonFiniteState { t })?;
        model.eval_dynamics(&s, u).map_err(|e| promote(e, t))
    };

    let mut buf = SeriesBuf::new();
    let mut record = |t: f64, x: &[f64]| -> Result<()> {
        check_declared_constraints(cfg, x, t)?;
        let (u, ev) = controller::control(x, t, cfg, model, rf).map_err(|e| promote(e, t))?;
        buf.push(t, x, cfg, &ev, u)
    };
    integrate(&rhs, x0.to_vec(), integ, &mut record)?;
    buf.finish(metadata(cfg, model, rf, integ, "x", x0))
}

/// Integrates the closed-loop error dynamics directly in z-coordinates,
/// reconstructing the state alongside for gain evaluation and recording.
pub fn simulate_z_space(
    model: &StrictFeedbackModel,
    cfg: &ControllerConfig,
    rf: &ReferenceSignal,
    integ: &IntegratorConfig,
    z0: &[f64],
) -> Result<TrajectoryRecord> {
    integ.validate()?;
    if z0.len() != model.order() {
        return Err(Error::Config(format!(
            "initial errors have {} entries, model order is {}",
            z0.len(),
            model.order()
        )));
    }
    for (i, &zi) in z0.iter().enumerate() {
        let b = cfg.barrier(i);
        let barriered = matches!(cfg.design, controller::ControlDesign::FullState) || i == 0;
        if barriered && zi.abs() >= b.k {
            return Err(Error::InadmissibleInitialCondition {
                channel: i + 1,
                z0: zi,
                k: b.k,
            });
        }
    }

    let rhs = |z: &[f64], t: f64| -> Result<Vec<f64>> {
        controller::closed_loop_z_rhs(z, t, cfg, model, rf).map_err(|e| promote(e, t))
    };

    let mut buf = SeriesBuf::new();
    let mut record = |t: f64, z: &[f64]| -> Result<()> {
        let x = controller::reconstruct_state(z, t, cfg, model, rf).map_err(|e| promote(e, t))?;
        check_declared_constraints(cfg, &x, t)?;
        let (u, ev) = controller::control(&x, t, cfg, model, rf).map_err(|e| promote(e, t))?;
        buf.push(t, &x, cfg, &ev, u)
    };
    integrate(&rhs, z0.to_vec(), integ, &mut record)?;
    buf.finish(metadata(cfg, model, rf, integ, "z", z0))
}

/// Fourth-order central-difference derivative of a uniformly sampled
/// series. Entries without a full stencil are `None`.
pub fn fourth_order_derivative(series: &[f64], h: f64) -> Vec<Option<f64>> {
    let n = series.len();
    let mut out = vec![None; n];
    if n >= 5 {
        for j in 2..n - 2 {
            let d = (-series[j + 2] + 8.0 * series[j + 1] - 8.0 * series[j - 1] + series[j - 2])
                / (12.0 * h);
            out[j] = Some(d);
        }
    }
    out
}

/// Summary statistics supporting the reported figures.
#[derive(Clone, Debug, PartialEq)]
pub struct RunMetrics {
    pub max_abs_x: Vec<f64>,
    pub max_abs_z: Vec<f64>,
    pub max_abs_u: f64,
    /// `sup |z1|` over the window `[0.8 t_final, t_final]`.
    pub tail_sup_z1: f64,
    /// Trapezoidal `integral of u^2 dt`.
    pub control_effort: f64,
    /// Max |d/dt V (numerical) - Vdot_analytic|; None on non-uniform grids.
    pub max_vdot_residual: Option<f64>,
    /// Largest single-step increase of V (negative when V always falls).
    pub max_v_step_increase: f64,
}

pub fn metrics(rec: &TrajectoryRecord) -> RunMetrics {
    let n = rec.order();
    let mut max_abs_x = vec![0.0f64; n];
    let mut max_abs_z = vec![0.0f64; n];
    let mut max_abs_u = 0.0f64;
    for row in 0..rec.len() {
        for i in 0..n {
            max_abs_x[i] = max_abs_x[i].max(rec.x[row][i].abs());
            max_abs_z[i] = max_abs_z[i].max(rec.z[row][i].abs());
        }
        max_abs_u = max_abs_u.max(rec.u[row].abs());
    }

    let t_end = *rec.t.last().unwrap();
    let window_start = 0.8 * t_end;
    let tail_sup_z1 = rec
        .t
        .iter()
        .zip(rec.z.iter())
        .filter(|(t, _)| **t >= window_start)
        .map(|(_, z)| z[0].abs())
        .fold(0.0f64, f64::max);

    let mut control_effort = 0.0;
    for w in 0..rec.len() - 1 {
        let dt = rec.t[w + 1] - rec.t[w];
        control_effort += 0.5 * dt * (rec.u[w] * rec.u[w] + rec.u[w + 1] * rec.u[w + 1]);
    }

    let max_vdot_residual = rec.uniform_grid(1e-9).map(|h| {
        fourth_order_derivative(&rec.v, h)
            .iter()
            .zip(&rec.vdot_analytic)
            .filter_map(|(d, a)| d.map(|d| (d - a).abs()))
            .fold(0.0f64, f64::max)
    });

    let max_v_step_increase = rec
        .v
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::NEG_INFINITY, f64::max);

    RunMetrics {
        max_abs_x,
        max_abs_z,
        max_abs_u,
        tail_sup_z1,
        control_effort,
        max_vdot_residual,
        max_v_step_increase,
    }
}
