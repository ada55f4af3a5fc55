//! Barrier function families over a symmetric constraint `|z| < k`.
//!
//! All four families blow up as `|z|` approaches the half-width `k`, which
//! is what traps the error inside the open interval. They differ in how
//! much gradient (control effort) they produce away from the boundary:
//!
//! - `StandardLog`: `V = 1/2 ln(k^2 / (k^2 - z^2))` — the classic form.
//! - `ZoneLog`: `V = 1/2 ln(k^2 e^(-2b) / (k^2 - z^2))` — standard form
//!   shifted down by the zone parameter `b`. Kept for comparison only: as
//!   written it is negative near the origin and is rejected by the
//!   controllers.
//! - `LogPblf`: `V = 1/(2β) ln(k^2 / (k^2 - z^2))` — progressive variant;
//!   scales the whole log barrier down by `β`.
//! - `RationalPblf`: `V = z^2 / (2 (k^2 - z^2)(1 + β z^2))` — progressive
//!   variant with a rational mid-range dip.
//!
//! The controllers consume the barriers exclusively through the gradient
//! factor `μ(z) = V'(z) / z` and its reciprocal, both of which have closed
//! forms with no removable singularity at `z = 0`.

use crate::error::{Error, Result};
use crate::jet::Jet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BarrierKind {
    StandardLog,
    ZoneLog,
    LogPblf,
    RationalPblf,
}

impl BarrierKind {
    pub fn name(&self) -> &'static str {
        match self {
            BarrierKind::StandardLog => "standard-log",
            BarrierKind::ZoneLog => "zone-log",
            BarrierKind::LogPblf => "log-pblf",
            BarrierKind::RationalPblf => "rational-pblf",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "standard-log" => Ok(BarrierKind::StandardLog),
            "zone-log" => Ok(BarrierKind::ZoneLog),
            "log-pblf" => Ok(BarrierKind::LogPblf),
            "rational-pblf" => Ok(BarrierKind::RationalPblf),
            other => Err(Error::Config(format!("unknown barrier kind '{other}'"))),
        }
    }
}

/// One barrier instance: family, half-width `k`, and shape parameter.
///
/// `beta` is the progressive shape parameter for the p-BLF kinds, the zone
/// size `b` for `ZoneLog`, and unused for `StandardLog`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierParams {
    pub kind: BarrierKind,
    pub k: f64,
    pub beta: f64,
}

/// Value, gradient, and gradient factor of a barrier at one point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BarrierEval {
    pub value: f64,
    pub gradient: f64,
    /// `μ(z) = V'(z) / z`, continuously extended at `z = 0`.
    pub gradient_factor: f64,
}

impl BarrierParams {
    pub fn new(kind: BarrierKind, k: f64, beta: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Config(format!(
                "barrier half-width must be positive and finite, got {k}"
            )));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::Config(format!(
                "barrier shape parameter must be positive and finite, got {beta}"
            )));
        }
        if matches!(kind, BarrierKind::LogPblf | BarrierKind::RationalPblf) && beta <= 1.0 {
            log::warn!(
                "{} with beta = {beta} <= 1: the progressive near-origin \
                 attenuation is weak or inverted",
                kind.name()
            );
        }
        Ok(BarrierParams { kind, k, beta })
    }

    pub fn standard_log(k: f64) -> Result<Self> {
        Self::new(BarrierKind::StandardLog, k, 1.0)
    }

    pub fn zone_log(k: f64, b: f64) -> Result<Self> {
        Self::new(BarrierKind::ZoneLog, k, b)
    }

    pub fn log_pblf(k: f64, beta: f64) -> Result<Self> {
        Self::new(BarrierKind::LogPblf, k, beta)
    }

    pub fn rational_pblf(k: f64, beta: f64) -> Result<Self> {
        Self::new(BarrierKind::RationalPblf, k, beta)
    }

    /// True iff `z` lies strictly inside the open constraint interval.
    pub fn is_inside(&self, z: f64) -> bool {
        z.is_finite() && z.abs() < self.k
    }

    fn check_domain(&self, channel: usize, z: f64) -> Result<()> {
        if self.is_inside(z) {
            Ok(())
        } else {
            Err(Error::Domain {
                channel,
                z,
                k: self.k,
            })
        }
    }

    /// Barrier value `V(z)`.
    pub fn value(&self, z: f64) -> Result<f64> {
        self.check_domain(1, z)?;
        let k2 = self.k * self.k;
        let d = k2 - z * z;
        let v = match self.kind {
            BarrierKind::StandardLog => 0.5 * (k2 / d).ln(),
            BarrierKind::ZoneLog => 0.5 * (k2 * (-2.0 * self.beta).exp() / d).ln(),
            BarrierKind::LogPblf => (k2 / d).ln() / (2.0 * self.beta),
            BarrierKind::RationalPblf => z * z / (2.0 * d * (1.0 + self.beta * z * z)),
        };
        Ok(v)
    }

    /// Barrier gradient `V'(z)`, computed as `μ(z) · z` so the identity
    /// `gradient == gradient_factor * z` holds exactly.
    pub fn gradient(&self, z: f64) -> Result<f64> {
        Ok(self.gradient_factor(z)? * z)
    }

    /// Gradient factor `μ(z) = V'(z) / z` with its limit value at `z = 0`:
    /// `1/(β k^2)` for the log p-BLF and `1/k^2` for the other kinds.
    pub fn gradient_factor(&self, z: f64) -> Result<f64> {
        self.check_domain(1, z)?;
        let k2 = self.k * self.k;
        let d = k2 - z * z;
        let mu = match self.kind {
            BarrierKind::StandardLog | BarrierKind::ZoneLog => 1.0 / d,
            BarrierKind::LogPblf => 1.0 / (self.beta * d),
            BarrierKind::RationalPblf => {
                let (n, dd) = self.rational_n_d(z);
                n / dd
            }
        };
        Ok(mu)
    }

    /// Numerator and denominator of the rational gradient factor:
    /// `N = β z^4 + k^2`, `D = (k^2 - z^2)^2 (1 + β z^2)^2`.
    fn rational_n_d(&self, z: f64) -> (f64, f64) {
        let k2 = self.k * self.k;
        let z2 = z * z;
        let n = self.beta * z2 * z2 + k2;
        let d = (k2 - z2) * (k2 - z2) * (1.0 + self.beta * z2) * (1.0 + self.beta * z2);
        (n, d)
    }

    /// Value, gradient, and gradient factor bundled.
    pub fn evaluate(&self, z: f64) -> Result<BarrierEval> {
        Ok(BarrierEval {
            value: self.value(z)?,
            gradient: self.gradient(z)?,
            gradient_factor: self.gradient_factor(z)?,
        })
    }

    /// Gradient factor over a jet argument (for derivative propagation
    /// through the control laws). `channel` is used in error reports.
    pub fn gradient_factor_jet(&self, channel: usize, z: Jet) -> Result<Jet> {
        self.check_domain(channel, z.value())?;
        let k2 = self.k * self.k;
        let d = -(z * z) + k2;
        let mu = match self.kind {
            BarrierKind::StandardLog | BarrierKind::ZoneLog => Jet::constant(1.0) / d,
            BarrierKind::LogPblf => Jet::constant(1.0) / (d * self.beta),
            BarrierKind::RationalPblf => {
                let z2 = z * z;
                let n = z2 * z2 * self.beta + k2;
                let dd = (d * d) * ((z2 * self.beta + 1.0) * (z2 * self.beta + 1.0));
                n / dd
            }
        };
        Ok(mu)
    }

    /// Reciprocal gradient factor `1/μ(z)` over a jet argument. For the log
    /// kinds this is the polynomial `β (k^2 - z^2)` (respectively
    /// `k^2 - z^2`), so the control laws never divide near the boundary.
    pub fn inverse_gradient_factor_jet(&self, channel: usize, z: Jet) -> Result<Jet> {
        self.check_domain(channel, z.value())?;
        let k2 = self.k * self.k;
        let d = -(z * z) + k2;
        let inv = match self.kind {
            BarrierKind::StandardLog | BarrierKind::ZoneLog => d,
            BarrierKind::LogPblf => d * self.beta,
            BarrierKind::RationalPblf => {
                let z2 = z * z;
                let n = z2 * z2 * self.beta + k2;
                let dd = (d * d) * ((z2 * self.beta + 1.0) * (z2 * self.beta + 1.0));
                dd / n
            }
        };
        Ok(inv)
    }
}
