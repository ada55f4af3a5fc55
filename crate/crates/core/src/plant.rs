//! Strict-feedback system models and reference trajectories.
//!
//! A strict-feedback system of order `n` has the cascade structure
//!
//! ```text
//! x_i' = f_i(x_1..x_i) + g_i(x_1..x_i) x_{i+1}    (i < n)
//! x_n' = f_n(x_1..x_n) + g_n(x_1..x_n) u
//! y    = x_1
//! ```
//!
//! The `f_i`, `g_i` are supplied as closures over [`Jet`] scalars so the
//! controller can propagate exact directional derivatives through them.
//! The structure is enforced by construction: channel `i` closures only
//! ever receive `x_1..x_i`.

use crate::error::{Error, Result};
use crate::jet::{Jet, JET_DIM};

pub type StateFn = Box<dyn Fn(&[Jet]) -> Jet + Send + Sync>;

/// Plant state paired with the simulation clock.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub x: Vec<f64>,
    pub t: f64,
}

impl StateVector {
    pub fn new(x: Vec<f64>, t: f64) -> Result<Self> {
        if !t.is_finite() || x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "state vector".into(),
            });
        }
        Ok(StateVector { x, t })
    }
}

pub struct StrictFeedbackModel {
    name: String,
    n: usize,
    f: Vec<StateFn>,
    g: Vec<StateFn>,
    operating_box: Vec<(f64, f64)>,
    g_min: f64,
}

impl std::fmt::Debug for StrictFeedbackModel {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("StrictFeedbackModel")
            .field("name", &self.name)
            .field("n", &self.n)
            .field("operating_box", &self.operating_box)
            .field("g_min", &self.g_min)
            .finish()
    }
}

fn grid_counts(dim: usize) -> usize {
    match dim {
        1 => 41,
        2 => 17,
        3 => 9,
        4 => 6,
        _ => 4,
    }
}

impl StrictFeedbackModel {
    /// Builds a model and checks `|g_i| >= g_min` on a grid over the
    /// declared operating box, so the control laws may safely divide by
    /// the `g_i`.
    pub fn new(
        name: &str,
        f: Vec<StateFn>,
        g: Vec<StateFn>,
        operating_box: Vec<(f64, f64)>,
        g_min: f64,
    ) -> Result<Self> {
        let n = f.len();
        if n == 0 {
            return Err(Error::Config("system order must be at least 1".into()));
        }
        if n > JET_DIM {
            return Err(Error::Config(format!(
                "system order {n} exceeds the supported maximum {JET_DIM}"
            )));
        }
        if g.len() != n || operating_box.len() != n {
            return Err(Error::Config(format!(
                "expected {n} gain functions and box entries, got {} and {}",
                g.len(),
                operating_box.len()
            )));
        }
        if !(g_min.is_finite() && g_min > 0.0) {
            return Err(Error::Config("g_min must be positive".into()));
        }
        for (lo, hi) in &operating_box {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::Config(format!(
                    "invalid operating box interval [{lo}, {hi}]"
                )));
            }
        }
        let model = StrictFeedbackModel {
            name: name.into(),
            n,
            f,
            g,
            operating_box,
            g_min,
        };
        model.check_gains_nonvanishing()?;
        Ok(model)
    }

    fn check_gains_nonvanishing(&self) -> Result<()> {
        for i in 0..self.n {
            let dims = i + 1;
            let m = grid_counts(dims);
            let total = m.pow(dims as u32);
            let mut point = vec![0.0f64; dims];
            for idx in 0..total {
                let mut rem = idx;
                for (d, p) in point.iter_mut().enumerate() {
                    let j = rem % m;
                    rem /= m;
                    let (lo, hi) = self.operating_box[d];
                    *p = lo + (hi - lo) * j as f64 / (m - 1) as f64;
                }
                let gv = self.g_value(i, &point);
                if !gv.is_finite() || gv.abs() < self.g_min {
                    return Err(Error::Config(format!(
                        "g{} has magnitude {:.3e} < g_min {:.3e} at {:?} in the operating box",
                        i + 1,
                        gv.abs(),
                        self.g_min,
                        point
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn order(&self) -> usize {
        self.n
    }

    pub fn operating_box(&self) -> &[(f64, f64)] {
        &self.operating_box
    }

    /// `f_i` over jets; `i` is zero-based and only `x[..=i]` is passed on.
    pub fn f_jet(&self, i: usize, x: &[Jet]) -> Jet {
        (self.f[i])(&x[..=i])
    }

    pub fn g_jet(&self, i: usize, x: &[Jet]) -> Jet {
        (self.g[i])(&x[..=i])
    }

    pub fn f_value(&self, i: usize, x: &[f64]) -> f64 {
        let args: Vec<Jet> = x[..=i].iter().map(|&v| Jet::scalar(v)).collect();
        (self.f[i])(&args).value()
    }

    pub fn g_value(&self, i: usize, x: &[f64]) -> f64 {
        let args: Vec<Jet> = x[..=i].iter().map(|&v| Jet::scalar(v)).collect();
        (self.g[i])(&args).value()
    }

    /// Open-loop vector field: `x_i' = f_i + g_i x_{i+1}`, `x_n' = f_n + g_n u`.
    pub fn eval_dynamics(&self, s: &StateVector, u: f64) -> Result<Vec<f64>> {
        if !u.is_finite() {
            return Err(Error::NonFinite {
                context: "control input".into(),
            });
        }
        let mut dx = Vec::with_capacity(self.n);
        for i in 0..self.n {
            let drive = if i + 1 < self.n { s.x[i + 1] } else { u };
            let v = self.f_value(i, &s.x) + self.g_value(i, &s.x) * drive;
            if !v.is_finite() {
                return Err(Error::NonFinite {
                    context: format!("dynamics channel {}", i + 1),
                });
            }
            dx.push(v);
        }
        Ok(dx)
    }
}

/// The second-order benchmark plant used by the built-in presets:
/// `x1' = 0.1 x1^2 + x2`, `x2' = 0.1 x1 x2 - 0.2 x1 + (1 + x1^2) u`.
pub fn paper_plant() -> StrictFeedbackModel {
    let theta1 = 0.1;
    let theta2 = 0.1;
    let theta3 = -0.2;
    let f: Vec<StateFn> = vec![
        Box::new(move |x: &[Jet]| x[0] * x[0] * theta1),
        Box::new(move |x: &[Jet]| x[0] * x[1] * theta2 + x[0] * theta3),
    ];
    let g: Vec<StateFn> = vec![
        Box::new(|_: &[Jet]| Jet::constant(1.0)),
        Box::new(|x: &[Jet]| x[0] * x[0] + 1.0),
    ];
    StrictFeedbackModel::new(
        "paper-2nd-order",
        f,
        g,
        vec![(-0.56, 0.56), (-4.0, 4.0)],
        1e-6,
    )
    .expect("benchmark plant is well-posed")
}

/// Reference trajectory with analytic derivatives up to `max_order` and
/// declared bounds per derivative order.
pub struct ReferenceSignal {
    name: String,
    max_order: usize,
    bounds: Vec<f64>,
    eval: Box<dyn Fn(f64, usize) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for ReferenceSignal {
    fn fmt(&self, fm: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        fm.debug_struct("ReferenceSignal")
            .field("name", &self.name)
            .field("max_order", &self.max_order)
            .field("bounds", &self.bounds)
            .finish()
    }
}

impl ReferenceSignal {
    /// `bounds[j]` bounds `|y_d^(j)|`; it must cover orders `0..=max_order`.
    pub fn new(
        name: &str,
        max_order: usize,
        bounds: Vec<f64>,
        eval: Box<dyn Fn(f64, usize) -> f64 + Send + Sync>,
    ) -> Result<Self> {
        if bounds.len() != max_order + 1 {
            return Err(Error::Config(format!(
                "expected {} bounds for orders 0..={max_order}, got {}",
                max_order + 1,
                bounds.len()
            )));
        }
        if bounds.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
            return Err(Error::Config("reference bounds must be nonnegative".into()));
        }
        Ok(ReferenceSignal {
            name: name.into(),
            max_order,
            bounds,
            eval,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// `y_d^(j)(t)`.
    pub fn eval(&self, t: f64, order: usize) -> f64 {
        assert!(
            order <= self.max_order,
            "reference '{}' supports derivatives up to order {}, asked for {}",
            self.name,
            self.max_order,
            order
        );
        (self.eval)(t, order)
    }

    /// Declared bound on `|y_d^(j)|`.
    pub fn bound(&self, order: usize) -> f64 {
        self.bounds[order]
    }
}

/// The preset reference `y_d(t) = 0.2 + 0.3 sin t` with all derivatives.
pub fn paper_reference() -> ReferenceSignal {
    let max_order = JET_DIM;
    let mut bounds = vec![0.3; max_order + 1];
    bounds[0] = 0.5;
    ReferenceSignal::new(
        "paper-sine",
        max_order,
        bounds,
        Box::new(|t, order| {
            if order == 0 {
                0.2 + 0.3 * t.sin()
            } else {
                // Each derivative advances the phase by pi/2.
                match (order - 1) % 4 {
                    0 => 0.3 * t.cos(),
                    1 => -0.3 * t.sin(),
                    2 => -0.3 * t.cos(),
                    _ => 0.3 * t.sin(),
                }
            }
        }),
    )
    .expect("preset reference is well-posed")
}

/// The constant-zero reference, handy for regulation tests.
pub fn zero_reference() -> ReferenceSignal {
    ReferenceSignal::new(
        "zero",
        JET_DIM,
        vec![1e-12; JET_DIM + 1],
        Box::new(|_, _| 0.0),
    )
    .expect("zero reference is well-posed")
}

/// Per-order outcome of sampling a reference against its declared bounds.
#[derive(Clone, Debug)]
pub struct ReferenceBoundsReport {
    pub horizon: f64,
    pub samples: usize,
    /// `(order, max sampled |y_d^(j)|, declared bound, within bound)`.
    pub orders: Vec<(usize, f64, f64, bool)>,
}

impl ReferenceBoundsReport {
    pub fn passed(&self) -> bool {
        self.orders.iter().all(|(_, _, _, ok)| *ok)
    }
}

/// Samples `y_d` and its derivatives on a uniform grid and compares the
/// observed maxima against the declared bounds. The comparison is
/// non-strict: a continuous signal can attain its declared supremum at
/// isolated grid points (the preset reference does so at t = 0 for its
/// first derivative).
pub fn check_reference_bounds(
    rf: &ReferenceSignal,
    horizon: f64,
    samples: usize,
    max_order: usize,
) -> Result<ReferenceBoundsReport> {
    if !(horizon.is_finite() && horizon > 0.0) || samples < 2 {
        return Err(Error::Config(
            "reference bound check needs horizon > 0 and at least 2 samples".into(),
        ));
    }
    let max_order = max_order.min(rf.max_order());
    let mut orders = Vec::with_capacity(max_order + 1);
    for j in 0..=max_order {
        let mut worst = 0.0f64;
        for i in 0..samples {
            let t = horizon * i as f64 / (samples - 1) as f64;
            worst = worst.max(rf.eval(t, j).abs());
        }
        let bound = rf.bound(j);
        orders.push((j, worst, bound, worst <= bound));
    }
    Ok(ReferenceBoundsReport {
        horizon,
        samples,
        orders,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    #[test]
    fn preset_plant_dynamics_examples() {
        let m = paper_plant();
        let s = StateVector::new(vec![0.25, 1.5], 0.0).unwrap();
        let dx = m.eval_dynamics(&s, 0.0).unwrap();
        assert_relative_eq!(dx[0], 1.50625, max_relative = 1e-12);
        assert_relative_eq!(dx[1], -0.0125, max_relative = 1e-12);

        let origin = StateVector::new(vec![0.0, 0.0], 0.0).unwrap();
        let dx0 = m.eval_dynamics(&origin, 0.0).unwrap();
        assert_eq!(dx0, vec![0.0, 0.0]);

        let dxu = m.eval_dynamics(&s, -9.8807).unwrap();
        assert_relative_eq!(dxu[1], -0.0125 + 1.0625 * (-9.8807), max_relative = 1e-12);
    }

    #[test]
    fn preset_plant_pieces() {
        let m = paper_plant();
        assert_relative_eq!(m.f_value(0, &[0.25]), 0.00625, max_relative = 1e-12);
        assert_relative_eq!(m.g_value(1, &[0.25, 0.0]), 1.0625, max_relative = 1e-12);
        assert_eq!(m.f_value(1, &[0.0, 5.0]), 0.0);
    }

    #[test]
    fn rejects_nonfinite_inputs() {
        let m = paper_plant();
        assert!(StateVector::new(vec![f64::NAN, 0.0], 0.0).is_err());
        let s = StateVector::new(vec![0.1, 0.1], 0.0).unwrap();
        assert!(m.eval_dynamics(&s, f64::INFINITY).is_err());
    }

    #[test]
    fn strict_feedback_structure_respected() {
        let m = paper_plant();
        // Perturbing x2 must not move f1 or g1.
        for x2 in [-3.0, 0.0, 2.5] {
            assert_eq!(m.f_value(0, &[0.3, x2]), m.f_value(0, &[0.3, 0.0]));
            assert_eq!(m.g_value(0, &[0.3, x2]), m.g_value(0, &[0.3, 0.0]));
        }
    }

    #[test]
    fn jet_evaluation_matches_finite_differences() {
        let m = paper_plant();
        let pts = [
            [0.25, 1.5],
            [-0.4, 0.7],
            [0.1, -2.0],
            [0.5, 3.0],
            [-0.55, -3.5],
        ];
        let h = 1e-6;
        for p in pts {
            for i in 0..2 {
                for d in 0..=i {
                    // Directional derivative along state d.
                    let mut hi = p;
                    let mut lo = p;
                    hi[d] += h;
                    lo[d] -= h;
                    let fd = (m.f_value(i, &hi) - m.f_value(i, &lo)) / (2.0 * h);
                    let args: Vec<Jet> = p
                        .iter()
                        .enumerate()
                        .map(|(j, &v)| Jet::variable(v, if j == d { 1.0 } else { 0.0 }))
                        .collect();
                    let jet = m.f_jet(i, &args);
                    let rel = (jet.first_derivative() - fd).abs() / fd.abs().max(1.0);
                    assert!(rel <= 1e-6, "f{} d{} at {:?}: rel {rel}", i + 1, d, p);

                    let gfd = (m.g_value(i, &hi) - m.g_value(i, &lo)) / (2.0 * h);
                    let gjet = m.g_jet(i, &args);
                    let grel = (gjet.first_derivative() - gfd).abs() / gfd.abs().max(1.0);
                    assert!(grel <= 1e-6, "g{} d{} at {:?}: rel {grel}", i + 1, d, p);
                }
            }
        }
    }

    #[test]
    fn gain_floor_is_enforced() {
        // g1 crosses zero inside the box.
        let f: Vec<StateFn> = vec![Box::new(|_| Jet::scalar(0.0))];
        let g: Vec<StateFn> = vec![Box::new(|x: &[Jet]| x[0])];
        let err = StrictFeedbackModel::new("degenerate", f, g, vec![(-1.0, 1.0)], 1e-6);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn preset_reference_examples() {
        let r = paper_reference();
        assert_relative_eq!(r.eval(0.0, 0), 0.2);
        assert_relative_eq!(r.eval(0.0, 1), 0.3);
        assert_relative_eq!(r.eval(FRAC_PI_2, 2), -0.3, max_relative = 1e-12);
        assert_relative_eq!(r.eval(1.3, 4), 0.3 * 1.3f64.sin(), max_relative = 1e-12);
        // Derivative pattern closes after four orders.
        assert_relative_eq!(r.eval(0.7, 1), r.eval(0.7, 5), max_relative = 1e-12);
    }

    #[test]
    fn reference_bounds_check() {
        let r = paper_reference();
        let report = check_reference_bounds(&r, 30.0, 3001, 2).unwrap();
        assert!(report.passed());
        let (_, worst, bound, _) = report.orders[0];
        assert!(worst < 0.5 && worst > 0.49, "sampled max |y_d| = {worst}");
        assert_eq!(bound, 0.5);

        let zero = zero_reference();
        let zr = check_reference_bounds(&zero, 10.0, 101, 2).unwrap();
        assert!(zr.passed());
        assert_eq!(zr.orders[0].1, 0.0);

        let wild = ReferenceSignal::new(
            "too-big",
            2,
            vec![1.0, 2.0, 2.0],
            Box::new(|t, order| match order {
                0 => 2.0 * t.sin(),
                1 => 2.0 * t.cos(),
                _ => -2.0 * t.sin(),
            }),
        )
        .unwrap();
        let wr = check_reference_bounds(&wild, 2.0 * PI, 301, 0).unwrap();
        assert!(!wr.passed());
    }
}
