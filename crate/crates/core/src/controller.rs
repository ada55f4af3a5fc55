//! Backstepping control laws with barrier-shaped error feedback.
//!
//! Four designs are provided:
//!
//! - `SecondOrderLog` / `SecondOrderRational`: dedicated n = 2 paths that
//!   follow the two progressive-barrier designs line by line. They exist
//!   as an independent route against which the general recursion is
//!   checked.
//! - `OutputConstrained`: general-n design with a barrier on the tracking
//!   error `z1` only; channels 2..n get quadratic Lyapunov terms.
//! - `FullState`: general-n design with a log barrier on every error
//!   channel.
//!
//! Every design needs the total time derivative of each stabilizing
//! function along the closed-loop flow. Those are obtained exactly by
//! evaluating the whole recursion over truncated Taylor scalars
//! ([`Jet`]): state jets carry the flow direction, the reference enters
//! through its analytic derivatives, and differentiating a stabilizing
//! function is a coefficient shift. No symbolic work, no finite
//! differences in the control path.

use crate::barrier::{BarrierKind, BarrierParams};
use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::plant::{ReferenceSignal, StrictFeedbackModel};

/// Minimum gain magnitude the control laws will divide by.
pub const GAIN_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlDesign {
    SecondOrderLog,
    SecondOrderRational,
    OutputConstrained,
    FullState,
}

impl ControlDesign {
    pub fn name(&self) -> &'static str {
        match self {
            ControlDesign::SecondOrderLog => "second-order-log",
            ControlDesign::SecondOrderRational => "second-order-rational",
            ControlDesign::OutputConstrained => "output-constrained",
            ControlDesign::FullState => "full-state",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "second-order-log" => Ok(ControlDesign::SecondOrderLog),
            "second-order-rational" => Ok(ControlDesign::SecondOrderRational),
            "output-constrained" => Ok(ControlDesign::OutputConstrained),
            "full-state" => Ok(ControlDesign::FullState),
            other => Err(Error::Config(format!("unknown design '{other}'"))),
        }
    }
}

/// Gains, barrier channels, and declared state constraints for one design.
///
/// `barriers` holds one channel for the output-constrained designs and one
/// per error channel for `FullState`. `constraint_box[i]` is the declared
/// bound `k_xi` on `|x_{i+1}|`, with the output bound mandatory.
#[derive(Debug, Clone)]
pub struct ControllerConfig {
    pub design: ControlDesign,
    pub kappa: Vec<f64>,
    pub barriers: Vec<BarrierParams>,
    pub constraint_box: Vec<Option<f64>>,
}

/// The error half-width implied by a state bound and a reference bound.
pub fn barrier_halfwidth_from_box(k_x1: f64, k_xd: f64) -> Result<f64> {
    let k1 = k_x1 - k_xd;
    if !(k1.is_finite() && k1 > 0.0) {
        return Err(Error::Config(format!(
            "state bound {k_x1} minus reference bound {k_xd} leaves no error margin"
        )));
    }
    Ok(k1)
}

impl ControllerConfig {
    pub fn new(
        design: ControlDesign,
        kappa: Vec<f64>,
        barriers: Vec<BarrierParams>,
        constraint_box: Vec<Option<f64>>,
    ) -> Result<Self> {
        let n = kappa.len();
        if n == 0 {
            return Err(Error::Config("at least one gain is required".into()));
        }
        if kappa.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::Config(
                "all gains must be positive and finite".into(),
            ));
        }
        if constraint_box.len() != n {
            return Err(Error::Config(format!(
                "constraint box must declare {n} channels (use None for unconstrained)"
            )));
        }
        if constraint_box[0].is_none() {
            return Err(Error::Config("the output bound k_x1 is mandatory".into()));
        }
        if let Some(kx1) = constraint_box[0] {
            if !(kx1.is_finite() && kx1 > 0.0) {
                return Err(Error::Config("k_x1 must be positive".into()));
            }
        }
        for b in &barriers {
            if b.kind == BarrierKind::ZoneLog {
                return Err(Error::Config(
                    "the zone-log form is comparison-only and cannot drive a controller".into(),
                ));
            }
        }
        match design {
            ControlDesign::SecondOrderLog | ControlDesign::SecondOrderRational => {
                if n != 2 {
                    return Err(Error::Config(format!(
                        "{} requires a second-order system, got n = {n}",
                        design.name()
                    )));
                }
                if barriers.len() != 1 {
                    return Err(Error::Config(
                        "second-order designs take exactly one barrier channel".into(),
                    ));
                }
                let want = match design {
                    ControlDesign::SecondOrderLog => BarrierKind::LogPblf,
                    _ => BarrierKind::RationalPblf,
                };
                if barriers[0].kind != want {
                    return Err(Error::Config(format!(
                        "{} requires the {} barrier",
                        design.name(),
                        want.name()
                    )));
                }
            }
            ControlDesign::OutputConstrained => {
                if n < 2 {
                    return Err(Error::Config(
                        "the output-constrained design needs n >= 2".into(),
                    ));
                }
                if barriers.len() != 1 {
                    return Err(Error::Config(
                        "the output-constrained design takes exactly one barrier channel".into(),
                    ));
                }
            }
            ControlDesign::FullState => {
                if barriers.len() != n {
                    return Err(Error::Config(format!(
                        "the full-state design needs one barrier per channel ({n}), got {}",
                        barriers.len()
                    )));
                }
                let beta = barriers[0].beta;
                if barriers.iter().any(|b| b.kind != BarrierKind::LogPblf) {
                    return Err(Error::Config(
                        "the full-state design uses the log p-BLF on every channel".into(),
                    ));
                }
                if barriers.iter().any(|b| b.beta != beta) {
                    return Err(Error::Config(
                        "the full-state design shares one beta across channels".into(),
                    ));
                }
            }
        }
        Ok(ControllerConfig {
            design,
            kappa,
            barriers,
            constraint_box,
        })
    }

    pub fn order(&self) -> usize {
        self.kappa.len()
    }

    /// Barrier channel for error channel `i` (zero-based). Output designs
    /// only carry channel 0.
    pub fn barrier(&self, i: usize) -> &BarrierParams {
        match self.design {
            ControlDesign::FullState => &self.barriers[i],
            _ => &self.barriers[0],
        }
    }

    /// Composite Lyapunov value for an error vector: barrier terms on
    /// barrier channels, quadratic terms elsewhere.
    pub fn lyapunov_value(&self, z: &[f64]) -> Result<f64> {
        let mut v = self.barriers[0].value(z[0]).map_err(|e| relabel(e, 1))?;
        for (i, &zi) in z.iter().enumerate().skip(1) {
            v += match self.design {
                ControlDesign::FullState => {
                    self.barriers[i].value(zi).map_err(|e| relabel(e, i + 1))?
                }
                _ => 0.5 * zi * zi,
            };
        }
        Ok(v)
    }

    /// `-sum_i kappa_i z_i^2`, the analytic Lyapunov derivative along the
    /// closed loop for every design.
    pub fn lyapunov_rate(&self, z: &[f64]) -> f64 {
        -self
            .kappa
            .iter()
            .zip(z)
            .map(|(k, zi)| k * zi * zi)
            .sum::<f64>()
    }
}

fn relabel(e: Error, channel: usize) -> Error {
    match e {
        Error::Domain { z, k, .. } => Error::Domain { channel, z, k },
        other => other,
    }
}

/// Errors, stabilizing functions, and their total time derivatives at one
/// evaluation point. `alpha` has `n` entries with `alpha[n-1] = u`;
/// `alpha_dot` has `n - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorVector {
    pub z: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_dot: Vec<f64>,
}

fn check_gain(channel: usize, g: f64) -> Result<f64> {
    if !g.is_finite() || g.abs() < GAIN_FLOOR {
        return Err(Error::VanishingGain {
            channel,
            magnitude: g.abs(),
        });
    }
    Ok(g)
}

fn check_finite(context: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite {
            context: context.into(),
        })
    }
}

/// Jets of `y_d` and `y_d'` at `t`, each carrying `len` Taylor terms.
#[allow(clippy::needless_range_loop)]
fn reference_jets(rf: &ReferenceSignal, t: f64, len: usize) -> (Jet, Jet) {
    const FACT: [f64; 9] = [1.0, 1.0, 2.0, 6.0, 24.0, 120.0, 720.0, 5040.0, 40320.0];
    let mut y0 = Jet::padded(rf.eval(t, 0), len);
    let mut y1 = Jet::padded(rf.eval(t, 1), len);
    for m in 1..len {
        y0.set_coeff(m, rf.eval(t, m) / FACT[m]);
        y1.set_coeff(m, rf.eval(t, m + 1) / FACT[m]);
    }
    (y0, y1)
}

/// Taylor jets of the state along the open-loop flow. Channel `j`
/// (zero-based) is expanded to order `n - 1 - j`; by the cascade
/// structure those coefficients never involve the input.
fn state_jets(model: &StrictFeedbackModel, x: &[f64]) -> Vec<Jet> {
    let n = model.order();
    let mut xj: Vec<Jet> = x
        .iter()
        .enumerate()
        .map(|(j, &v)| Jet::padded(v, n - j))
        .collect();
    for p in 0..n.saturating_sub(1) {
        // Coefficient p+1 exists for channels j with order n-1-j > p.
        let mut new_coeffs = Vec::new();
        for j in 0..n - 1 - p {
            let args: Vec<Jet> = xj[..=j + 1].iter().map(|q| q.truncated(p + 1)).collect();
            let phi = model.f_jet(j, &args) + model.g_jet(j, &args) * args[j + 1];
            new_coeffs.push(phi.coeff(p) / (p + 1) as f64);
        }
        for (j, c) in new_coeffs.into_iter().enumerate() {
            xj[j].set_coeff(p + 1, c);
        }
    }
    xj
}

struct Recursion {
    z: Vec<Jet>,
    alpha: Vec<Jet>,
}

impl Recursion {
    fn into_outputs(self) -> Result<(f64, ErrorVector)> {
        let n = self.alpha.len();
        let u = check_finite("control input", self.alpha[n - 1].value())?;
        let z: Vec<f64> = self.z.iter().map(|j| j.value()).collect();
        let alpha: Vec<f64> = self.alpha.iter().map(|j| j.value()).collect();
        let alpha_dot: Vec<f64> = self.alpha[..n - 1]
            .iter()
            .map(|j| j.derivative_series().value())
            .collect();
        for (i, v) in alpha.iter().chain(alpha_dot.iter()).enumerate() {
            check_finite(&format!("stabilizing function chain ({i})"), *v)?;
        }
        Ok((
            u,
            ErrorVector {
                z,
                alpha,
                alpha_dot,
            },
        ))
    }
}

/// General output-constrained recursion over jets: a barrier on `z1`,
/// quadratic terms elsewhere. All barrier coupling happens through the
/// gradient factor of the configured barrier kind.
fn output_constrained_recursion(
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
    xj: &[Jet],
    t: f64,
    levels: usize,
) -> Result<Recursion> {
    let n = model.order();
    let b = &cfg.barriers[0];
    let (yd0, yd1) = reference_jets(rf, t, n);

    let z1 = xj[0] - yd0;
    let inv_mu = b.inverse_gradient_factor_jet(1, z1)?;
    let mu = b.gradient_factor_jet(1, z1)?;

    let f1 = model.f_jet(0, &xj[..1]);
    let g1 = model.g_jet(0, &xj[..1]);
    check_gain(1, g1.value())?;
    let alpha1 = (-f1 - z1 * inv_mu * cfg.kappa[0] + yd1) / g1;

    let mut z = vec![z1];
    let mut alpha = vec![alpha1];
    for i in 2..=levels.min(n) {
        let prev = alpha[i - 2];
        let adot = prev.derivative_series();
        let zi = xj[i - 1] - prev;
        let fi = model.f_jet(i - 1, &xj[..i]);
        let gi = model.g_jet(i - 1, &xj[..i]);
        check_gain(i, gi.value())?;
        let coupling = if i == 2 {
            model.g_jet(0, &xj[..1]) * z[0] * mu
        } else {
            model.g_jet(i - 2, &xj[..i - 1]) * z[i - 2]
        };
        let ai = (-fi + adot - zi * cfg.kappa[i - 1] - coupling) / gi;
        z.push(zi);
        alpha.push(ai);
    }
    Ok(Recursion { z, alpha })
}

/// General full-state recursion: a log barrier on every channel. The
/// cross coupling carries the ratio of barrier denominators so that the
/// composite Lyapunov derivative telescopes to `-sum kappa_i z_i^2`.
fn full_state_recursion(
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
    xj: &[Jet],
    t: f64,
    levels: usize,
) -> Result<Recursion> {
    let n = model.order();
    let beta = cfg.barriers[0].beta;
    let (yd0, yd1) = reference_jets(rf, t, n);

    let z1 = xj[0] - yd0;
    let k1 = cfg.barriers[0].k;
    cfg.barriers[0].gradient_factor_jet(1, z1)?;
    let f1 = model.f_jet(0, &xj[..1]);
    let g1 = model.g_jet(0, &xj[..1]);
    check_gain(1, g1.value())?;
    let d1 = -(z1 * z1) + k1 * k1;
    let alpha1 = (-f1 - z1 * d1 * (beta * cfg.kappa[0]) + yd1) / g1;

    let mut z = vec![z1];
    let mut denom = vec![d1];
    let mut alpha = vec![alpha1];
    for i in 2..=levels.min(n) {
        let prev = alpha[i - 2];
        let adot = prev.derivative_series();
        let zi = xj[i - 1] - prev;
        let ki = cfg.barriers[i - 1].k;
        cfg.barriers[i - 1].gradient_factor_jet(i, zi)?;
        let di = -(zi * zi) + ki * ki;
        let fi = model.f_jet(i - 1, &xj[..i]);
        let gi = model.g_jet(i - 1, &xj[..i]);
        check_gain(i, gi.value())?;
        let gprev = model.g_jet(i - 2, &xj[..i - 1]);
        let coupling = gprev * z[i - 2] * (di / denom[i - 2]);
        let ai = (-fi + adot - zi * di * (beta * cfg.kappa[i - 1]) - coupling) / gi;
        z.push(zi);
        denom.push(di);
        alpha.push(ai);
    }
    Ok(Recursion { z, alpha })
}

/// Straight-line second-order paths following the two-step design
/// directly. Kept independent of the general recursion on purpose.
fn second_order_direct(
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
    x: &[f64],
    t: f64,
) -> Result<(f64, ErrorVector)> {
    let b = &cfg.barriers[0];
    let k2b = b.k * b.k;
    let beta = b.beta;
    let (kappa1, kappa2) = (cfg.kappa[0], cfg.kappa[1]);

    let g1v = check_gain(1, model.g_value(0, x))?;
    let f1v = model.f_value(0, x);
    // Flow direction for x1; x2 enters as a value only.
    let x1 = Jet::from_taylor(&[x[0], f1v + g1v * x[1]]);
    let yd0 = Jet::from_taylor(&[rf.eval(t, 0), rf.eval(t, 1)]);
    let yd1 = Jet::from_taylor(&[rf.eval(t, 1), rf.eval(t, 2)]);
    let z1 = x1 - yd0;
    if z1.value().abs() >= b.k {
        return Err(Error::Domain {
            channel: 1,
            z: z1.value(),
            k: b.k,
        });
    }

    let f1 = model.f_jet(0, &[x1]);
    let g1 = model.g_jet(0, &[x1]);
    let alpha1 = match cfg.design {
        ControlDesign::SecondOrderLog => {
            (-f1 - z1 * (-(z1 * z1) + k2b) * (beta * kappa1) + yd1) / g1
        }
        _ => {
            // Rational barrier: restoring term kappa1 (D/N) z1, where
            // N = beta z1^4 + k^2 and D = (k^2 - z1^2)^2 (1 + beta z1^2)^2.
            let z1sq = z1 * z1;
            let nn = z1sq * z1sq * beta + k2b;
            let dd =
                (-(z1sq) + k2b) * (-(z1sq) + k2b) * ((z1sq * beta + 1.0) * (z1sq * beta + 1.0));
            (-f1 - z1 * (dd / nn) * kappa1 + yd1) / g1
        }
    };

    let alpha1_v = check_finite("alpha1", alpha1.value())?;
    let alpha1_dot = check_finite("alpha1 derivative", alpha1.derivative_series().value())?;
    let z1v = z1.value();
    let z2 = x[1] - alpha1_v;

    let f2v = model.f_value(1, x);
    let g2v = check_gain(2, model.g_value(1, x))?;
    let coupling = match cfg.design {
        ControlDesign::SecondOrderLog => g1v * z1v / (beta * (k2b - z1v * z1v)),
        _ => {
            let z1sq = z1v * z1v;
            let nn = beta * z1sq * z1sq + k2b;
            let dd = (k2b - z1sq) * (k2b - z1sq) * (1.0 + beta * z1sq) * (1.0 + beta * z1sq);
            g1v * (nn / dd) * z1v
        }
    };
    let u = check_finite(
        "control input",
        (-f2v + alpha1_dot - kappa2 * z2 - coupling) / g2v,
    )?;

    Ok((
        u,
        ErrorVector {
            z: vec![z1v, z2],
            alpha: vec![alpha1_v, u],
            alpha_dot: vec![alpha1_dot],
        },
    ))
}

/// Log-form first stabilizing function:
/// `alpha1 = (1/g1)(-f1 - beta kappa1 z1 (k1^2 - z1^2) + y_d')`.
pub fn alpha1_log(
    x1: f64,
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<f64> {
    let b = &cfg.barriers[0];
    let z1 = x1 - rf.eval(t, 0);
    if z1.abs() >= b.k {
        return Err(Error::Domain {
            channel: 1,
            z: z1,
            k: b.k,
        });
    }
    let g1 = check_gain(1, model.g_value(0, &[x1]))?;
    let f1 = model.f_value(0, &[x1]);
    let restoring = b.beta * cfg.kappa[0] * z1 * (b.k * b.k - z1 * z1);
    check_finite("alpha1", (-f1 - restoring + rf.eval(t, 1)) / g1)
}

/// Rational-form first stabilizing function. The restoring term is
/// `kappa1 (D/N) z1`, the reciprocal of the rational gradient factor, so
/// the two-step Lyapunov derivative comes out as `-k1 z1^2 - k2 z2^2`.
pub fn alpha1_rational(
    x1: f64,
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<f64> {
    let b = &cfg.barriers[0];
    let z1 = x1 - rf.eval(t, 0);
    if z1.abs() >= b.k {
        return Err(Error::Domain {
            channel: 1,
            z: z1,
            k: b.k,
        });
    }
    let g1 = check_gain(1, model.g_value(0, &[x1]))?;
    let f1 = model.f_value(0, &[x1]);
    let mu = b.gradient_factor(z1)?;
    let restoring = cfg.kappa[0] * z1 / mu;
    check_finite("alpha1", (-f1 - restoring + rf.eval(t, 1)) / g1)
}

/// Second-order control law (n = 2), log or rational variant.
pub fn control_second_order(
    x: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<(f64, ErrorVector)> {
    if model.order() != 2 || cfg.order() != 2 {
        return Err(Error::Config(
            "control_second_order needs a second-order model and config".into(),
        ));
    }
    if !matches!(
        cfg.design,
        ControlDesign::SecondOrderLog | ControlDesign::SecondOrderRational
    ) {
        return Err(Error::Config(
            "control_second_order drives the second-order designs only".into(),
        ));
    }
    second_order_direct(cfg, model, rf, x, t)
}

/// General-n output-constrained control law.
pub fn control_output_constrained(
    x: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<(f64, ErrorVector)> {
    let xj = state_jets(model, x);
    output_constrained_recursion(cfg, model, rf, &xj, t, model.order())?.into_outputs()
}

/// General-n full-state-constrained control law. A domain violation names
/// the first offending channel.
pub fn control_full_state(
    x: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<(f64, ErrorVector)> {
    let xj = state_jets(model, x);
    full_state_recursion(cfg, model, rf, &xj, t, model.order())?.into_outputs()
}

/// Dispatches on the configured design.
pub fn control(
    x: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<(f64, ErrorVector)> {
    match cfg.design {
        ControlDesign::SecondOrderLog | ControlDesign::SecondOrderRational => {
            control_second_order(x, t, cfg, model, rf)
        }
        ControlDesign::OutputConstrained => {
            let xj = state_jets(model, x);
            output_constrained_recursion(cfg, model, rf, &xj, t, model.order())?.into_outputs()
        }
        ControlDesign::FullState => {
            let xj = state_jets(model, x);
            full_state_recursion(cfg, model, rf, &xj, t, model.order())?.into_outputs()
        }
    }
}

/// Total time derivative of `alpha_{i-1}` along the closed-loop flow
/// (`i` is one-based, `2 <= i <= n`), from the forward-propagated jets.
pub fn alpha_dot(
    i: usize,
    x: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<f64> {
    let n = model.order();
    if i < 2 || i > n {
        return Err(Error::Config(format!(
            "alpha_dot index must satisfy 2 <= i <= n = {n}, got {i}"
        )));
    }
    let (_, ev) = control(x, t, cfg, model, rf)?;
    Ok(ev.alpha_dot[i - 2])
}

/// Reconstructs the state from error coordinates: `x1 = z1 + y_d(t)` and
/// `x_{i+1} = z_{i+1} + alpha_i`. The stabilizing-function values are
/// produced by the same jet recursion the controller uses, extending the
/// state one channel at a time.
pub fn reconstruct_state(
    z: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<Vec<f64>> {
    let n = model.order();
    let mut x = vec![0.0; n];
    x[0] = z[0] + rf.eval(t, 0);
    for i in 1..n {
        // alpha_i depends on x_1..x_i only, so the recursion is cut off at
        // level i; the still-unset tail never participates.
        let xj = state_jets(model, &x);
        let rec = match cfg.design {
            ControlDesign::FullState => full_state_recursion(cfg, model, rf, &xj, t, i)?,
            _ => output_constrained_recursion(cfg, model, rf, &xj, t, i)?,
        };
        x[i] = z[i] + rec.alpha[i - 1].value();
    }
    Ok(x)
}

/// Closed-loop error dynamics in z-coordinates. State-dependent gains are
/// evaluated at the reconstructed state.
pub fn closed_loop_z_rhs(
    z: &[f64],
    t: f64,
    cfg: &ControllerConfig,
    model: &StrictFeedbackModel,
    rf: &ReferenceSignal,
) -> Result<Vec<f64>> {
    let n = model.order();
    if z.len() != n {
        return Err(Error::Config(format!(
            "error vector has {} channels, model has {n}",
            z.len()
        )));
    }
    match cfg.design {
        ControlDesign::FullState => {
            for (i, &zi) in z.iter().enumerate() {
                let b = &cfg.barriers[i];
                if zi.abs() >= b.k {
                    return Err(Error::Domain {
                        channel: i + 1,
                        z: zi,
                        k: b.k,
                    });
                }
            }
        }
        _ => {
            let b = &cfg.barriers[0];
            if z[0].abs() >= b.k {
                return Err(Error::Domain {
                    channel: 1,
                    z: z[0],
                    k: b.k,
                });
            }
        }
    }

    let x = reconstruct_state(z, t, cfg, model, rf)?;
    let gv: Vec<f64> = (0..n).map(|i| model.g_value(i, &x)).collect();

    let mut dz = vec![0.0; n];
    match cfg.design {
        ControlDesign::FullState => {
            let beta = cfg.barriers[0].beta;
            let denom: Vec<f64> = (0..n)
                .map(|i| {
                    let k = cfg.barriers[i].k;
                    k * k - z[i] * z[i]
                })
                .collect();
            for i in 0..n {
                let mut rate = -beta * cfg.kappa[i] * z[i] * denom[i];
                if i > 0 {
                    rate -= gv[i - 1] * z[i - 1] * denom[i] / denom[i - 1];
                }
                if i + 1 < n {
                    rate += gv[i] * z[i + 1];
                }
                dz[i] = rate;
            }
        }
        _ => {
            let b = &cfg.barriers[0];
            let mu = b.gradient_factor(z[0])?;
            let inv_mu = 1.0 / mu;
            dz[0] = -cfg.kappa[0] * z[0] * inv_mu;
            if n > 1 {
                dz[0] += gv[0] * z[1];
                dz[1] = -cfg.kappa[1] * z[1] - gv[0] * mu * z[0];
                if n > 2 {
                    dz[1] += gv[1] * z[2];
                }
            }
            for i in 2..n {
                dz[i] = -cfg.kappa[i] * z[i] - gv[i - 1] * z[i - 1];
                if i + 1 < n {
                    dz[i] += gv[i] * z[i + 1];
                }
            }
        }
    }
    for (i, v) in dz.iter().enumerate() {
        check_finite(&format!("error dynamics channel {}", i + 1), *v)?;
    }
    Ok(dz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{paper_plant, paper_reference, zero_reference, StateFn};
    use approx::assert_relative_eq;

    pub(crate) fn paper_config(design: ControlDesign) -> ControllerConfig {
        let barriers = match design {
            ControlDesign::FullState => vec![
                BarrierParams::log_pblf(0.56, 10.0).unwrap(),
                BarrierParams::log_pblf(2.0, 10.0).unwrap(),
            ],
            ControlDesign::SecondOrderRational => {
                vec![BarrierParams::rational_pblf(0.56, 10.0).unwrap()]
            }
            _ => vec![BarrierParams::log_pblf(0.56, 10.0).unwrap()],
        };
        ControllerConfig::new(design, vec![2.0, 2.0], barriers, vec![Some(0.56), None]).unwrap()
    }

    fn unit_chain(n: usize) -> StrictFeedbackModel {
        let f: Vec<StateFn> = (0..n)
            .map(|_| Box::new(|_: &[Jet]| Jet::constant(0.0)) as StateFn)
            .collect();
        let g: Vec<StateFn> = (0..n)
            .map(|_| Box::new(|_: &[Jet]| Jet::constant(1.0)) as StateFn)
            .collect();
        StrictFeedbackModel::new("unit-chain", f, g, vec![(-10.0, 10.0); n], 1e-6).unwrap()
    }

    #[test]
    fn alpha1_log_spot_value() {
        let cfg = paper_config(ControlDesign::SecondOrderLog);
        let m = paper_plant();
        let r = paper_reference();
        // Hand substitution: -(0.1 * 0.25^2) - 10*2*0.05*(0.56^2 - 0.05^2) + 0.3.
        let expected = -0.00625 - 20.0 * 0.05 * (0.56f64 * 0.56 - 0.0025) + 0.3;
        let a1 = alpha1_log(0.25, 0.0, &cfg, &m, &r).unwrap();
        assert_relative_eq!(a1, expected, epsilon = 1e-12);
        assert_relative_eq!(a1, -0.01735, epsilon = 1e-9);
    }

    #[test]
    fn alpha1_log_degenerate_cases() {
        let cfg = paper_config(ControlDesign::SecondOrderLog);
        let m = unit_chain(2);
        let r = zero_reference();
        // z1 = 0, f1 = 0, dy_d = 0, g1 = 1 -> 0.
        assert_eq!(alpha1_log(0.0, 0.0, &cfg, &m, &r).unwrap(), 0.0);
        // Boundary.
        let err = alpha1_log(0.56, 0.0, &cfg, &m, &r);
        assert!(matches!(err, Err(Error::Domain { channel: 1, .. })));
    }

    #[test]
    fn alpha1_rational_degenerate_cases() {
        let cfg = paper_config(ControlDesign::SecondOrderRational);
        let m = unit_chain(2);
        let r = paper_reference();
        // Barrier term vanishes at z1 = 0, leaving dy_d / g1.
        let x1 = r.eval(0.0, 0);
        assert_relative_eq!(
            alpha1_rational(x1, 0.0, &cfg, &m, &r).unwrap(),
            0.3,
            epsilon = 1e-12
        );
    }

    #[test]
    fn alpha1_rational_scales_with_inverse_gain() {
        let cfg = paper_config(ControlDesign::SecondOrderRational);
        let half: Vec<StateFn> = vec![
            Box::new(|_: &[Jet]| Jet::constant(0.0)),
            Box::new(|_: &[Jet]| Jet::constant(0.0)),
        ];
        let g: Vec<StateFn> = vec![
            Box::new(|_: &[Jet]| Jet::constant(2.0)),
            Box::new(|_: &[Jet]| Jet::constant(1.0)),
        ];
        let m2 =
            StrictFeedbackModel::new("double-gain", half, g, vec![(-10.0, 10.0); 2], 1e-6).unwrap();
        let m1 = unit_chain(2);
        let r = paper_reference();
        let a_g1 = alpha1_rational(0.3, 0.4, &cfg, &m1, &r).unwrap();
        let a_g2 = alpha1_rational(0.3, 0.4, &cfg, &m2, &r).unwrap();
        assert_relative_eq!(a_g2, a_g1 / 2.0, epsilon = 1e-14);
    }

    #[test]
    fn alpha_dot_spot_value() {
        let cfg = paper_config(ControlDesign::SecondOrderLog);
        let m = paper_plant();
        let r = paper_reference();
        let ad = alpha_dot(2, &[0.25, 1.5], 0.0, &cfg, &m, &r).unwrap();
        // Analytic chain rule: (-6.172)(1.50625) + (6.122)(0.3).
        assert_relative_eq!(ad, -7.459975, epsilon = 1e-9);
    }

    #[test]
    fn alpha_dot_constant_alpha_is_zero() {
        // f = 0, g = 1, zero reference: alpha1 = -beta kappa1 x1 (k^2 - x1^2);
        // at x1 = 0 with x2 = 0 the flow direction vanishes, so alpha1' = 0.
        let cfg = paper_config(ControlDesign::SecondOrderLog);
        let m = unit_chain(2);
        let r = zero_reference();
        let ad = alpha_dot(2, &[0.0, 0.0], 1.3, &cfg, &m, &r).unwrap();
        assert_eq!(ad, 0.0);
    }

    #[test]
    fn second_order_log_spot_control() {
        let cfg = paper_config(ControlDesign::SecondOrderLog);
        let m = paper_plant();
        let r = paper_reference();
        let (u, ev) = control_second_order(&[0.25, 1.5], 0.0, &cfg, &m, &r).unwrap();
        assert_relative_eq!(u, -9.8807, epsilon = 1e-3);
        assert_relative_eq!(ev.z[0], 0.05, epsilon = 1e-12);
        assert_relative_eq!(ev.z[1], 1.51735, epsilon = 1e-9);
        assert_relative_eq!(ev.alpha_dot[0], -7.459975, epsilon = 1e-9);
    }

    #[test]
    fn second_order_zero_state_zero_control() {
        let cfg = paper_config(ControlDesign::SecondOrderLog);
        let m = unit_chain(2);
        let r = zero_reference();
        let (u, ev) = control_second_order(&[0.0, 0.0], 0.0, &cfg, &m, &r).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(ev.z, vec![0.0, 0.0]);
    }

    #[test]
    fn doubling_kappa2_shifts_u_by_kappa2_z2_over_g2() {
        let m = paper_plant();
        let r = paper_reference();
        let base = paper_config(ControlDesign::SecondOrderLog);
        let mut hot = base.clone();
        hot.kappa[1] = 4.0;
        let x = [0.25, 1.5];
        let (u2, ev) = control_second_order(&x, 0.0, &base, &m, &r).unwrap();
        let (u4, _) = control_second_order(&x, 0.0, &hot, &m, &r).unwrap();
        let g2 = m.g_value(1, &x);
        assert_relative_eq!(u2 - u4, 2.0 * ev.z[1] / g2, max_relative = 1e-12);
    }

    #[test]
    fn output_constrained_matches_second_order_at_n2() {
        let m = paper_plant();
        let r = paper_reference();
        for (so, kind) in [
            (ControlDesign::SecondOrderLog, BarrierKind::LogPblf),
            (
                ControlDesign::SecondOrderRational,
                BarrierKind::RationalPblf,
            ),
        ] {
            let direct = paper_config(so);
            let general = ControllerConfig::new(
                ControlDesign::OutputConstrained,
                vec![2.0, 2.0],
                vec![BarrierParams::new(kind, 0.56, 10.0).unwrap()],
                vec![Some(0.56), None],
            )
            .unwrap();
            for (x, t) in [
                ([0.25, 1.5], 0.0),
                ([0.1, -0.4], 1.7),
                ([-0.2, 0.9], 3.2),
                ([0.4, 2.2], 10.0),
            ] {
                let (ud, evd) = control_second_order(&x, t, &direct, &m, &r).unwrap();
                let (ug, evg) = control_output_constrained(&x, t, &general, &m, &r).unwrap();
                let rel = (ud - ug).abs() / ud.abs().max(1.0);
                assert!(rel <= 1e-12, "{:?} at {:?}: rel {rel}", kind, x);
                assert_relative_eq!(evd.alpha_dot[0], evg.alpha_dot[0], max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn output_constrained_zero_errors_zero_control() {
        let cfg = ControllerConfig::new(
            ControlDesign::OutputConstrained,
            vec![1.0, 1.0, 1.0],
            vec![BarrierParams::log_pblf(1.0, 1.0).unwrap()],
            vec![Some(1.0), None, None],
        )
        .unwrap();
        let m = unit_chain(3);
        let r = zero_reference();
        let (u, ev) = control_output_constrained(&[0.0, 0.0, 0.0], 0.0, &cfg, &m, &r).unwrap();
        assert_eq!(u, 0.0);
        assert_eq!(ev.z, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn output_constrained_n3_coupling_term() {
        // Unit chain, zero reference, z = (0, 1, 0): u = alpha3 carries the
        // coupling contribution -g2 z2 = -1 on top of alpha2'.
        let cfg = ControllerConfig::new(
            ControlDesign::OutputConstrained,
            vec![1.0, 1.0, 1.0],
            vec![BarrierParams::log_pblf(1.0, 1.0).unwrap()],
            vec![Some(1.0), None, None],
        )
        .unwrap();
        let m = unit_chain(3);
        let r = zero_reference();
        // x giving z = (0, 1, 0): x1 = 0 -> alpha1 = 0 -> x2 = 1;
        // alpha2 = alpha1' - kappa2 z2 - mu g1 z1 = alpha1' - 1; x3 = alpha2.
        let x1 = 0.0;
        let xj = state_jets(&m, &[x1, 1.0, 0.0]);
        let partial = output_constrained_recursion(&cfg, &m, &r, &xj, 0.0, 3).unwrap();
        let x3 = partial.alpha[1].value() + 0.0;
        let (u, ev) = control_output_constrained(&[x1, 1.0, x3], 0.0, &cfg, &m, &r).unwrap();
        assert_relative_eq!(ev.z[1], 1.0, epsilon = 1e-12);
        assert_relative_eq!(ev.z[2], 0.0, epsilon = 1e-12);
        // u = alpha2' - kappa3 z3 - g2 z2 = alpha2' - 1.
        assert_relative_eq!(u - ev.alpha_dot[1], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn full_state_zero_errors_zero_control() {
        let cfg = ControllerConfig::new(
            ControlDesign::FullState,
            vec![1.0, 1.0],
            vec![
                BarrierParams::log_pblf(1.0, 1.0).unwrap(),
                BarrierParams::log_pblf(1.0, 1.0).unwrap(),
            ],
            vec![Some(1.0), None],
        )
        .unwrap();
        let m = unit_chain(2);
        let r = zero_reference();
        let (u, _) = control_full_state(&[0.0, 0.0], 0.0, &cfg, &m, &r).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn full_state_coupling_term_value() {
        // Unit chain, beta = 1, k = (1,1), z = (0.5, 0.2): the coupling in
        // alpha2 is -z1 (k2^2 - z2^2)/(k1^2 - z1^2) = -0.64.
        let cfg = ControllerConfig::new(
            ControlDesign::FullState,
            vec![1.0, 1.0],
            vec![
                BarrierParams::log_pblf(1.0, 1.0).unwrap(),
                BarrierParams::log_pblf(1.0, 1.0).unwrap(),
            ],
            vec![Some(1.0), None],
        )
        .unwrap();
        let m = unit_chain(2);
        let r = zero_reference();
        // x1 = z1 = 0.5 -> alpha1 = -1*1*0.5*(1-0.25) = -0.375; x2 = 0.2 + alpha1.
        let x1 = 0.5;
        let alpha1 = -x1 * (1.0 - x1 * x1);
        let x2 = 0.2 + alpha1;
        let (u, ev) = control_full_state(&[x1, x2], 0.0, &cfg, &m, &r).unwrap();
        assert_relative_eq!(ev.z[1], 0.2, epsilon = 1e-12);
        // u = alpha1' - beta kappa2 z2 (k2^2 - z2^2) - coupling.
        let restoring = 0.2 * (1.0 - 0.04);
        let coupling = 0.5 * (1.0 - 0.04) / (1.0 - 0.25);
        assert_relative_eq!(coupling, 0.64, epsilon = 1e-12);
        assert_relative_eq!(u - ev.alpha_dot[0], -restoring - coupling, epsilon = 1e-10);
    }

    #[test]
    fn full_state_names_offending_channel() {
        let cfg = paper_config(ControlDesign::FullState);
        let m = paper_plant();
        let r = paper_reference();
        // Force z2 = k2 = 2 exactly: x2 = alpha1 + 2.
        let a1 = alpha1_log(0.25, 0.0, &cfg, &m, &r).unwrap();
        let err = control_full_state(&[0.25, a1 + 2.0], 0.0, &cfg, &m, &r);
        assert!(
            matches!(err, Err(Error::Domain { channel: 2, .. })),
            "{err:?}"
        );
    }

    #[test]
    fn closed_loop_z_rhs_examples() {
        let m = paper_plant();
        let r = paper_reference();
        let cfg = ControllerConfig::new(
            ControlDesign::OutputConstrained,
            vec![2.0, 2.0],
            vec![BarrierParams::log_pblf(0.56, 10.0).unwrap()],
            vec![Some(0.56), None],
        )
        .unwrap();
        // Origin is the equilibrium.
        let dz0 = closed_loop_z_rhs(&[0.0, 0.0], 0.0, &cfg, &m, &paper_reference()).unwrap();
        assert!(dz0.iter().all(|v| *v == 0.0));

        // Substitution check at the preset initial errors.
        let dz = closed_loop_z_rhs(&[0.05, 1.51735], 0.0, &cfg, &m, &r).unwrap();
        let expected = -20.0 * 0.05 * (0.56f64 * 0.56 - 0.0025) + 1.51735;
        assert_relative_eq!(dz[0], expected, epsilon = 1e-12);
        assert_relative_eq!(dz[0], 1.20625, epsilon = 1e-9);
    }

    #[test]
    fn closed_loop_full_state_example() {
        let cfg = ControllerConfig::new(
            ControlDesign::FullState,
            vec![1.0, 1.0],
            vec![
                BarrierParams::log_pblf(1.0, 1.0).unwrap(),
                BarrierParams::log_pblf(1.0, 1.0).unwrap(),
            ],
            vec![Some(1.0), None],
        )
        .unwrap();
        let m = unit_chain(2);
        let r = zero_reference();
        let dz = closed_loop_z_rhs(&[0.5, 0.2], 0.0, &cfg, &m, &r).unwrap();
        assert_relative_eq!(dz[1], -0.2 * 0.96 - 0.5 * 0.96 / 0.75, epsilon = 1e-12);
        assert_relative_eq!(dz[1], -0.832, epsilon = 1e-12);
    }

    #[test]
    fn vanishing_gain_is_a_hard_error() {
        // g1 = x1 is safely away from zero on the declared box but the
        // controller can still be asked to evaluate outside it.
        let f: Vec<StateFn> = vec![
            Box::new(|_: &[Jet]| Jet::constant(0.0)),
            Box::new(|_: &[Jet]| Jet::constant(0.0)),
        ];
        let g: Vec<StateFn> = vec![
            Box::new(|x: &[Jet]| x[0]),
            Box::new(|_: &[Jet]| Jet::constant(1.0)),
        ];
        let m = StrictFeedbackModel::new("offset-gain", f, g, vec![(0.5, 1.5), (-2.0, 2.0)], 1e-6)
            .unwrap();
        let cfg = ControllerConfig::new(
            ControlDesign::OutputConstrained,
            vec![1.0, 1.0],
            vec![BarrierParams::log_pblf(2.0, 1.0).unwrap()],
            vec![Some(3.0), None],
        )
        .unwrap();
        let r = zero_reference();
        let err = control_output_constrained(&[1e-12, 0.0], 0.0, &cfg, &m, &r);
        assert!(
            matches!(err, Err(Error::VanishingGain { channel: 1, .. })),
            "{err:?}"
        );
    }

    #[test]
    fn config_validation() {
        let b = vec![BarrierParams::log_pblf(0.56, 10.0).unwrap()];
        assert!(ControllerConfig::new(
            ControlDesign::SecondOrderLog,
            vec![2.0, -1.0],
            b.clone(),
            vec![Some(0.56), None],
        )
        .is_err());
        assert!(ControllerConfig::new(
            ControlDesign::SecondOrderLog,
            vec![2.0, 2.0],
            b.clone(),
            vec![None, None],
        )
        .is_err());
        assert!(ControllerConfig::new(
            ControlDesign::FullState,
            vec![2.0, 2.0],
            b.clone(),
            vec![Some(0.56), None],
        )
        .is_err());
        let zone = vec![BarrierParams::zone_log(0.56, 0.5).unwrap()];
        assert!(ControllerConfig::new(
            ControlDesign::OutputConstrained,
            vec![2.0, 2.0],
            zone,
            vec![Some(0.56), None],
        )
        .is_err());
        assert!(barrier_halfwidth_from_box(0.56, 0.5).unwrap() > 0.0);
        assert!(barrier_halfwidth_from_box(0.5, 0.56).is_err());
    }
}
