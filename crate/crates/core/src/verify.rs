//! Empirical verification of the boundedness, invariance, and convergence
//! claims against recorded trajectories.
//!
//! Every check is independent of the control path it judges: the Lyapunov
//! derivative is obtained by numerically differentiating the recorded `V`
//! series rather than trusting any analytic expression, and the barrier
//! gradients are audited against central finite differences.

use crate::barrier::{BarrierKind, BarrierParams};
use crate::controller::{ControlDesign, ControllerConfig};
use crate::error::{Error, Result};
use crate::plant::{check_reference_bounds, ReferenceSignal};
use crate::sim::{fourth_order_derivative, metrics, TrajectoryRecord};

/// Slack added to the theoretical error bounds before comparing.
pub const BOUND_SLACK: f64 = 1e-9;
/// Default ceiling for the numerical-vs-analytic Lyapunov rate residual,
/// calibrated for fourth-order differencing on millisecond grids.
pub const VDOT_TOLERANCE: f64 = 1e-6;
/// Largest tolerated single-step increase of the Lyapunov value.
pub const MONOTONE_SLACK: f64 = 1e-9;
/// Default tail-window threshold for tracking-error convergence.
pub const CONVERGENCE_THRESHOLD: f64 = 1e-2;

/// Outcome of one check.
#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// The extremal observed value the verdict is based on.
    pub worst: f64,
    pub tolerance: f64,
    /// Time at which the extremal value occurred, when meaningful.
    pub location_t: Option<f64>,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, worst: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            passed,
            worst,
            tolerance,
            location_t: None,
            detail: String::new(),
        }
    }

    fn at(mut self, t: f64) -> Self {
        self.location_t = Some(t);
        self
    }

    fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerificationReport {
    pub checks: Vec<Check>,
    /// Computed invariant-set radii per error channel (one-based).
    pub bounds: Vec<(usize, f64)>,
}

impl VerificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failed(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }
}

/// Invariant-set radius for the barriered tracking error under the
/// log-barrier output design: `k1 sqrt(1 - exp(-2 beta V(0)))`.
///
/// Always in `[0, k1]`, strictly below `k1` until the exponential
/// underflows, and monotone in both `v0` and `beta`.
pub fn output_error_bound(v0: f64, beta: f64, k1: f64) -> f64 {
    k1 * (1.0 - (-2.0 * beta * v0).exp()).max(0.0).sqrt()
}

/// Which published form of the full-state radii to evaluate.
///
/// `Tight` is the radius the Lyapunov-decrease argument yields:
/// `k_i sqrt(1 - prod_j (k_j^2 - z_j(0)^2)/k_j^2)`, which equals
/// `k_i sqrt(1 - exp(-2 beta V(0)))`. `Relaxed` multiplies the product by
/// the same exponential factor once more before subtracting, giving a
/// strictly larger radius; both are reported side by side.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BoundVariant {
    Tight,
    Relaxed,
}

/// Full-state invariant-set radii per channel from the initial errors.
pub fn full_state_error_bounds(
    z0: &[f64],
    k: &[f64],
    beta: f64,
    variant: BoundVariant,
) -> Result<Vec<f64>> {
    if z0.len() != k.len() || z0.is_empty() {
        return Err(Error::Config("z0 and k must share a nonzero length".into()));
    }
    let mut product = 1.0f64;
    for (i, (&z, &ki)) in z0.iter().zip(k).enumerate() {
        if z.abs() >= ki {
            return Err(Error::Domain {
                channel: i + 1,
                z,
                k: ki,
            });
        }
        product *= (ki * ki - z * z) / (ki * ki);
    }
    let inner = match variant {
        BoundVariant::Tight => product,
        BoundVariant::Relaxed => {
            // exp(-2 beta V(0)) equals the product itself; the relaxed
            // form printed alongside the tight one squares it.
            let _ = beta;
            product * product
        }
    };
    Ok(k.iter().map(|ki| ki * (1.0 - inner).sqrt()).collect())
}

/// Verifies `|z_i(t)| <= bound_i + slack` for the given channels
/// (one-based) at every recorded sample.
pub fn check_bounds(rec: &TrajectoryRecord, bounds: &[(usize, f64)]) -> Check {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    let mut pass = true;
    for (row, z) in rec.z.iter().enumerate() {
        for &(channel, d) in bounds {
            let margin = z[channel - 1].abs() - d;
            if margin > worst_margin {
                worst_margin = margin;
                worst_t = rec.t[row];
            }
            if margin > BOUND_SLACK {
                pass = false;
            }
        }
    }
    Check::new("z-bounds-invariant-set", pass, worst_margin, BOUND_SLACK)
        .at(worst_t)
        .with_detail(format!(
            "max over t of |z_i| - D_i across channels {:?}",
            bounds.iter().map(|(c, _)| c).collect::<Vec<_>>()
        ))
}

/// Compares the fourth-order numerical derivative of the recorded `V`
/// against `-sum_i kappa_i z_i^2` recomputed from the recorded errors.
/// Requires a uniform time grid.
pub fn check_vdot(rec: &TrajectoryRecord, kappa: &[f64], tolerance: f64) -> Check {
    let Some(h) = rec.uniform_grid(1e-9) else {
        return Check::new("vdot-identity", false, f64::NAN, tolerance)
            .with_detail("non-uniform time grid: fourth-order differencing not applicable");
    };
    let deriv = fourth_order_derivative(&rec.v, h);
    let mut worst = 0.0f64;
    let mut worst_t = 0.0;
    for (row, d) in deriv.iter().enumerate() {
        let Some(d) = d else { continue };
        let analytic: f64 = -kappa
            .iter()
            .zip(&rec.z[row])
            .map(|(k, z)| k * z * z)
            .sum::<f64>();
        let r = (d - analytic).abs();
        if r > worst {
            worst = r;
            worst_t = rec.t[row];
        }
    }
    Check::new("vdot-identity", worst <= tolerance, worst, tolerance)
        .at(worst_t)
        .with_detail(format!("grid step {h:.3e}"))
}

/// Tail-window convergence: the supremum of each watched error over the
/// final `tail_fraction` of the horizon must be below `threshold` and no
/// larger than over the preceding window of equal length.
pub fn check_convergence(
    rec: &TrajectoryRecord,
    tail_fraction: f64,
    threshold: f64,
    all_channels: bool,
) -> Check {
    let t_end = *rec.t.last().unwrap();
    let tail_start = t_end * (1.0 - tail_fraction);
    let mid_start = t_end * (1.0 - 2.0 * tail_fraction);
    let channels = if all_channels { rec.order() } else { 1 };

    let sup_over = |from: f64, to: f64, ch: usize| -> f64 {
        rec.t
            .iter()
            .zip(rec.z.iter())
            .filter(|(t, _)| **t >= from && **t <= to)
            .map(|(_, z)| z[ch].abs())
            .fold(0.0f64, f64::max)
    };

    // Below this level both windows are integrator roundoff and the
    // monotone-envelope comparison carries no signal.
    const NOISE_FLOOR: f64 = 1e-12;

    let mut worst = 0.0f64;
    let mut pass = true;
    let mut detail = String::new();
    for ch in 0..channels {
        let tail = sup_over(tail_start, t_end, ch);
        let mid = sup_over(mid_start, tail_start, ch);
        worst = worst.max(tail);
        if tail > threshold || (tail > mid && tail > NOISE_FLOOR) {
            pass = false;
        }
        detail.push_str(&format!(
            "z{}: tail sup {:.3e}, previous-window sup {:.3e}; ",
            ch + 1,
            tail,
            mid
        ));
    }
    Check::new("tail-convergence", pass, worst, threshold)
        .at(tail_start)
        .with_detail(detail)
}

/// Strict state-constraint satisfaction `|x_i(t)| < k_xi` for the declared
/// channels (one-based). An empty declaration passes vacuously.
pub fn check_constraints(rec: &TrajectoryRecord, k_x: &[(usize, f64)]) -> Check {
    let mut worst_margin = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    let mut pass = true;
    for (row, x) in rec.x.iter().enumerate() {
        for &(channel, kx) in k_x {
            let margin = x[channel - 1].abs() - kx;
            if margin > worst_margin {
                worst_margin = margin;
                worst_t = rec.t[row];
            }
            if margin >= 0.0 {
                pass = false;
            }
        }
    }
    if k_x.is_empty() {
        worst_margin = f64::NEG_INFINITY;
        worst_t = 0.0;
    }
    Check::new("state-constraints", pass, worst_margin, 0.0)
        .at(worst_t)
        .with_detail(if k_x.is_empty() {
            "no constrained channels declared: vacuous pass".to_string()
        } else {
            format!(
                "strict |x_i| < k_xi on channels {:?}",
                k_x.iter().map(|(c, _)| c).collect::<Vec<_>>()
            )
        })
}

/// Largest single-step increase of the recorded Lyapunov value.
pub fn check_monotone(rec: &TrajectoryRecord) -> Check {
    let mut worst = f64::NEG_INFINITY;
    let mut worst_t = 0.0;
    for (w, pair) in rec.v.windows(2).enumerate() {
        let inc = pair[1] - pair[0];
        if inc > worst {
            worst = inc;
            worst_t = rec.t[w + 1];
        }
    }
    Check::new(
        "lyapunov-monotone",
        worst <= MONOTONE_SLACK,
        worst,
        MONOTONE_SLACK,
    )
    .at(worst_t)
}

fn splitmix64(state: &mut u64) -> f64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

/// Audits each barrier's analytic gradient against a central finite
/// difference of its value at random admissible points. An empty
/// parameter list passes vacuously.
pub fn gradient_audit(params: &[BarrierParams], samples: usize, seed: u64) -> Check {
    gradient_audit_with(params, samples, seed, |p, z| p.gradient(z))
}

/// Audit seam: the gradient under test is injectable so a corrupted
/// implementation demonstrably fails.
pub fn gradient_audit_with(
    params: &[BarrierParams],
    samples: usize,
    seed: u64,
    gradient: impl Fn(&BarrierParams, f64) -> crate::error::Result<f64>,
) -> Check {
    let mut rng = seed;
    let mut worst = 0.0f64;
    let mut detail = String::new();
    for p in params {
        let step = 1e-6 * p.k;
        let mut kind_worst = 0.0f64;
        for _ in 0..samples {
            let z = (2.0 * splitmix64(&mut rng) - 1.0) * 0.9 * p.k;
            let fd = match (p.value(z + step), p.value(z - step)) {
                (Ok(hi), Ok(lo)) => (hi - lo) / (2.0 * step),
                _ => f64::NAN,
            };
            let g = gradient(p, z).unwrap_or(f64::NAN);
            let rel = (g - fd).abs() / g.abs().max(1.0);
            kind_worst = kind_worst.max(rel);
        }
        worst = worst.max(kind_worst);
        detail.push_str(&format!("{}: {:.2e}; ", p.kind.name(), kind_worst));
    }
    Check::new("gradient-audit", worst <= 1e-6, worst, 1e-6).with_detail(detail)
}

/// All four barrier kinds at the given shape, for audits and overlays.
pub fn audit_barrier_set(k: f64, beta: f64) -> Vec<BarrierParams> {
    vec![
        BarrierParams::standard_log(k).expect("valid"),
        BarrierParams::zone_log(k, beta).expect("valid"),
        BarrierParams::log_pblf(k, beta).expect("valid"),
        BarrierParams::rational_pblf(k, beta).expect("valid"),
    ]
}

/// Supremum over recorded rows of the z-distance between two runs
/// (channel-wise max). The records must share their time grid.
pub fn cross_simulation_sup(a: &TrajectoryRecord, b: &TrajectoryRecord) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "records have different lengths: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let mut worst = 0.0f64;
    for row in 0..a.len() {
        for ch in 0..a.order() {
            worst = worst.max((a.z[row][ch] - b.z[row][ch]).abs());
        }
    }
    Ok(worst)
}

/// Runs the full check battery for a pair of matched runs (state-space
/// and error-space) of one configuration.
pub fn run_standard_checks(
    cfg: &ControllerConfig,
    rf: &ReferenceSignal,
    x_rec: &TrajectoryRecord,
    z_rec: Option<&TrajectoryRecord>,
) -> VerificationReport {
    let mut report = VerificationReport::default();
    let n = cfg.order();

    // Reference bounds (sampled, non-strict at the declared suprema).
    match check_reference_bounds(rf, x_rec.metadata.t_final, 3001, n) {
        Ok(rb) => {
            let worst = rb
                .orders
                .iter()
                .map(|(_, m, b, _)| m - b)
                .fold(f64::NEG_INFINITY, f64::max);
            report.checks.push(
                Check::new("reference-bounds", rb.passed(), worst, 0.0).with_detail(format!(
                    "per-order (max, bound): {:?}",
                    rb.orders
                        .iter()
                        .map(|(j, m, b, _)| (*j, *m, *b))
                        .collect::<Vec<_>>()
                )),
            );
        }
        Err(e) => {
            report.checks.push(
                Check::new("reference-bounds", false, f64::NAN, 0.0).with_detail(e.to_string()),
            );
        }
    }

    // Invariant-set bounds from the recorded initial point.
    let v0 = x_rec.v[0];
    match cfg.design {
        ControlDesign::FullState => {
            let k: Vec<f64> = cfg.barriers.iter().map(|b| b.k).collect();
            match full_state_error_bounds(
                &x_rec.z[0],
                &k,
                cfg.barriers[0].beta,
                BoundVariant::Tight,
            ) {
                Ok(tight) => {
                    let pairs: Vec<(usize, f64)> =
                        tight.iter().enumerate().map(|(i, d)| (i + 1, *d)).collect();
                    report.bounds = pairs.clone();
                    let relaxed = full_state_error_bounds(
                        &x_rec.z[0],
                        &k,
                        cfg.barriers[0].beta,
                        BoundVariant::Relaxed,
                    )
                    .expect("same domain as tight bounds");
                    let mut c = check_bounds(x_rec, &pairs);
                    c.detail.push_str(&format!(
                        " tight radii {tight:?}, relaxed radii {relaxed:?}"
                    ));
                    report.checks.push(c);
                }
                Err(e) => report.checks.push(
                    Check::new("z-bounds-invariant-set", false, f64::NAN, BOUND_SLACK)
                        .with_detail(e.to_string()),
                ),
            }
        }
        _ => {
            let b1 = &cfg.barriers[0];
            if b1.kind == BarrierKind::LogPblf || b1.kind == BarrierKind::StandardLog {
                let beta = if b1.kind == BarrierKind::StandardLog {
                    1.0
                } else {
                    b1.beta
                };
                let d1 = output_error_bound(v0, beta, b1.k);
                report.bounds = vec![(1, d1)];
                report.checks.push(check_bounds(x_rec, &[(1, d1)]));

                // Quadratic channels obey sum_i>=2 z_i^2 <= 2 V(0).
                let cap = 2.0 * v0;
                let mut worst = f64::NEG_INFINITY;
                let mut worst_t = 0.0;
                for (row, z) in x_rec.z.iter().enumerate() {
                    let s: f64 = z[1..].iter().map(|v| v * v).sum();
                    if s - cap > worst {
                        worst = s - cap;
                        worst_t = x_rec.t[row];
                    }
                }
                report.checks.push(
                    Check::new(
                        "tail-energy-bound",
                        worst <= BOUND_SLACK,
                        worst,
                        BOUND_SLACK,
                    )
                    .at(worst_t)
                    .with_detail(format!("sum of squares of z2..zn vs 2 V(0) = {cap:.6e}")),
                );
            } else {
                report.checks.push(
                    Check::new(
                        "z-bounds-invariant-set",
                        true,
                        f64::NEG_INFINITY,
                        BOUND_SLACK,
                    )
                    .with_detail(format!(
                        "no closed-form radius for the {} barrier; skipped",
                        b1.kind.name()
                    )),
                );
            }
        }
    }

    report
        .checks
        .push(check_vdot(x_rec, &cfg.kappa, VDOT_TOLERANCE));
    report.checks.push(check_convergence(
        x_rec,
        0.2,
        CONVERGENCE_THRESHOLD,
        cfg.design == ControlDesign::FullState,
    ));

    let declared: Vec<(usize, f64)> = cfg
        .constraint_box
        .iter()
        .enumerate()
        .filter_map(|(i, b)| b.map(|kx| (i + 1, kx)))
        .collect();
    report.checks.push(check_constraints(x_rec, &declared));
    report.checks.push(check_monotone(x_rec));

    if let Some(z_rec) = z_rec {
        let c = match cross_simulation_sup(x_rec, z_rec) {
            Ok(worst) => Check::new("cross-simulation-agreement", worst <= 1e-5, worst, 1e-5)
                .with_detail("sup over rows and channels of |z_x - z_z|"),
            Err(e) => Check::new("cross-simulation-agreement", false, f64::NAN, 1e-5)
                .with_detail(e.to_string()),
        };
        report.checks.push(c);
    }

    let b1 = &cfg.barriers[0];
    report
        .checks
        .push(gradient_audit(&audit_barrier_set(b1.k, b1.beta), 100, 42));

    let met = metrics(x_rec);
    report.checks.push(
        Check::new("finite-run", true, met.max_abs_u, f64::INFINITY).with_detail(format!(
            "max |x| per channel {:?}, max |u| {:.4e}, effort {:.4e}",
            met.max_abs_x, met.max_abs_u, met.control_effort
        )),
    );

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::controller::ControlDesign;
    use crate::plant::{paper_plant, paper_reference};
    use crate::sim::{simulate_x_space, IntegratorConfig};
    use approx::assert_relative_eq;

    fn preset_config() -> ControllerConfig {
        ControllerConfig::new(
            ControlDesign::OutputConstrained,
            vec![2.0, 2.0],
            vec![BarrierParams::log_pblf(0.56, 10.0).unwrap()],
            vec![Some(0.56), None],
        )
        .unwrap()
    }

    fn short_run(t_final: f64) -> TrajectoryRecord {
        let m = paper_plant();
        let r = paper_reference();
        let cfg = preset_config();
        let integ = IntegratorConfig::rk4(1e-3, t_final);
        simulate_x_space(&m, &cfg, &r, &integ, &[0.25, 1.5]).unwrap()
    }

    #[test]
    fn output_bound_examples() {
        assert_eq!(output_error_bound(0.0, 10.0, 0.56), 0.0);
        assert_relative_eq!(
            output_error_bound(0.1, 1.0, 1.0),
            0.4257573,
            max_relative = 1e-6
        );
        // Preset initial energy saturates the radius from below.
        let v0 = 0.00040019 + 1.151176;
        let d = output_error_bound(v0, 10.0, 0.56);
        assert!(d < 0.56 && d > 0.56 * (1.0 - 1e-9));
    }

    #[test]
    fn output_bound_monotonicity() {
        let mut prev = 0.0;
        for i in 1..60 {
            let v0 = 0.05 * i as f64;
            let d = output_error_bound(v0, 2.0, 0.8);
            assert!(d > prev && d < 0.8);
            prev = d;
        }
        assert!(output_error_bound(1.0, 3.0, 0.8) > output_error_bound(1.0, 2.0, 0.8));
    }

    #[test]
    fn full_state_bound_examples() {
        let zero =
            full_state_error_bounds(&[0.0, 0.0], &[1.0, 1.0], 1.0, BoundVariant::Tight).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);

        let tight =
            full_state_error_bounds(&[0.6, 0.6], &[1.0, 1.0], 1.0, BoundVariant::Tight).unwrap();
        let relaxed =
            full_state_error_bounds(&[0.6, 0.6], &[1.0, 1.0], 1.0, BoundVariant::Relaxed).unwrap();
        assert_relative_eq!(tight[0], 0.768375, max_relative = 1e-6);
        assert_relative_eq!(relaxed[0], 0.912266, max_relative = 1e-6);
        for (t, r) in tight.iter().zip(&relaxed) {
            assert!(r >= t);
            assert!(*t < 1.0 && *r < 1.0);
        }

        // The tight product form equals the exponential form.
        let z0 = [0.3, -0.2];
        let k = [0.56, 2.0];
        let beta = 10.0;
        let v0: f64 = z0
            .iter()
            .zip(&k)
            .map(|(z, ki): (&f64, &f64)| (ki * ki / (ki * ki - z * z)).ln() / (2.0 * beta))
            .sum();
        let tight = full_state_error_bounds(&z0, &k, beta, BoundVariant::Tight).unwrap();
        for (i, ki) in k.iter().enumerate() {
            assert_relative_eq!(
                tight[i],
                ki * (1.0 - (-2.0 * beta * v0).exp()).sqrt(),
                max_relative = 1e-12
            );
        }

        assert!(
            full_state_error_bounds(&[1.1, 0.0], &[1.0, 1.0], 1.0, BoundVariant::Tight).is_err()
        );
    }

    #[test]
    fn full_state_bounds_monotone_in_initial_errors() {
        let k = [1.0, 1.5];
        let mut prev = 0.0;
        for i in 0..8 {
            let z = 0.1 * i as f64;
            let d = full_state_error_bounds(&[z, 0.2], &k, 5.0, BoundVariant::Tight).unwrap();
            assert!(d[0] >= prev);
            prev = d[0];
        }
    }

    #[test]
    fn bounds_check_pass_and_injected_spike() {
        let rec = short_run(2.0);
        let d1 = output_error_bound(rec.v[0], 10.0, 0.56);
        let c = check_bounds(&rec, &[(1, d1)]);
        assert!(c.passed, "{c:?}");

        let mut spiked = rec.clone();
        let mid = spiked.len() / 2;
        spiked.z[mid][0] = d1 + 0.01;
        let c = check_bounds(&spiked, &[(1, d1)]);
        assert!(!c.passed);
        assert_relative_eq!(c.location_t.unwrap(), spiked.t[mid]);
    }

    #[test]
    fn vdot_check_pass_and_constant_v_failure() {
        let rec = short_run(2.0);
        let c = check_vdot(&rec, &[2.0, 2.0], VDOT_TOLERANCE);
        assert!(c.passed, "residual {}", c.worst);

        let mut broken = rec.clone();
        broken.v.iter_mut().for_each(|v| *v = 1.0);
        let c = check_vdot(&broken, &[2.0, 2.0], VDOT_TOLERANCE);
        assert!(!c.passed);
    }

    #[test]
    fn convergence_check_cases() {
        let rec = short_run(30.0);
        let c = check_convergence(&rec, 0.2, 1e-2, false);
        assert!(c.passed, "{c:?}");

        // Diverging synthetic series fails.
        let mut diverging = rec.clone();
        for (row, t) in diverging.t.iter().enumerate() {
            diverging.z[row][0] = 1e-3 * t;
        }
        let c = check_convergence(&diverging, 0.2, 1e-2, false);
        assert!(!c.passed);

        // Identically zero passes with zero sup.
        let mut zero = rec.clone();
        for row in zero.z.iter_mut() {
            row[0] = 0.0;
            row[1] = 0.0;
        }
        let c = check_convergence(&zero, 0.2, 1e-2, true);
        assert!(c.passed);
        assert_eq!(c.worst, 0.0);
    }

    #[test]
    fn constraints_check_cases() {
        let rec = short_run(2.0);
        assert!(check_constraints(&rec, &[(1, 0.56)]).passed);
        // Initial condition 0.25 is already outside an artificial 0.2 bound.
        let c = check_constraints(&rec, &[(1, 0.2)]);
        assert!(!c.passed);
        // Vacuous pass with no declared channels.
        assert!(check_constraints(&rec, &[]).passed);
    }

    #[test]
    fn gradient_audit_cases() {
        let c = gradient_audit(&audit_barrier_set(0.56, 10.0), 100, 7);
        assert!(c.passed, "{c:?}");
        assert!(gradient_audit(&[], 0, 7).passed);

        // A gradient corrupted by +1e-3 is caught.
        let corrupted = gradient_audit_with(&audit_barrier_set(0.56, 10.0), 100, 7, |p, z| {
            Ok(p.gradient(z)? + 1e-3)
        });
        assert!(!corrupted.passed);
    }

    #[test]
    fn standard_checks_pass_on_short_preset() {
        let m = paper_plant();
        let r = paper_reference();
        let cfg = preset_config();
        let integ = IntegratorConfig::rk4(1e-3, 30.0);
        let xrec = simulate_x_space(&m, &cfg, &r, &integ, &[0.25, 1.5]).unwrap();
        let zrec = crate::sim::simulate_z_space(&m, &cfg, &r, &integ, &xrec.z[0].clone()).unwrap();
        let report = run_standard_checks(&cfg, &r, &xrec, Some(&zrec));
        for c in &report.checks {
            assert!(
                c.passed,
                "{}: worst {} detail {}",
                c.name, c.worst, c.detail
            );
        }
        assert!(!report.bounds.is_empty());
    }
}
