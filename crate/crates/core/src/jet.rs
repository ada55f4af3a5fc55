//! Truncated Taylor-series scalars ("jets") for forward-mode differentiation.
//!
//! A [`Jet`] stores the Taylor coefficients `c[m] = q^(m)(t0) / m!` of a
//! quantity along a curve, truncated to a fixed number of terms. Arithmetic
//! on jets propagates exact directional derivatives through arbitrary
//! compositions, which is how the controller evaluates total time
//! derivatives of stabilizing functions without symbolic differentiation.

// Truncated-series recurrences index several coefficient arrays with
// offset arithmetic; plain index loops are the readable form here.
#![allow(clippy::needless_range_loop)]

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Maximum number of Taylor coefficients a jet can carry (value plus seven
/// derivatives). This caps the supported system order at `JET_DIM`.
pub const JET_DIM: usize = 8;

/// A truncated Taylor series with up to [`JET_DIM`] coefficients.
///
/// Binary operations truncate to the shorter operand: coefficients beyond
/// what both sides know are not representable and are dropped.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    len: usize,
    c: [f64; JET_DIM],
}

impl Jet {
    /// A value with no derivative information (single coefficient).
    pub fn scalar(v: f64) -> Self {
        let mut c = [0.0; JET_DIM];
        c[0] = v;
        Jet { len: 1, c }
    }

    /// A constant known to all orders: every derivative is exactly zero,
    /// so it never truncates the other operand.
    pub fn constant(v: f64) -> Self {
        let mut c = [0.0; JET_DIM];
        c[0] = v;
        Jet { len: JET_DIM, c }
    }

    /// A first-order variable: value `v`, first derivative `d`.
    pub fn variable(v: f64, d: f64) -> Self {
        let mut c = [0.0; JET_DIM];
        c[0] = v;
        c[1] = d;
        Jet { len: 2, c }
    }

    /// Builds a jet from explicit Taylor coefficients (`c[m] = q^(m)/m!`).
    pub fn from_taylor(coeffs: &[f64]) -> Self {
        assert!(!coeffs.is_empty() && coeffs.len() <= JET_DIM);
        let mut c = [0.0; JET_DIM];
        c[..coeffs.len()].copy_from_slice(coeffs);
        Jet {
            len: coeffs.len(),
            c,
        }
    }

    /// A jet with `len` coefficients: value `v`, higher coefficients zero
    /// until filled in via [`Jet::set_coeff`].
    pub fn padded(v: f64, len: usize) -> Self {
        assert!((1..=JET_DIM).contains(&len));
        let mut c = [0.0; JET_DIM];
        c[0] = v;
        Jet { len, c }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Highest derivative order carried (len - 1).
    pub fn order(&self) -> usize {
        self.len - 1
    }

    pub fn value(&self) -> f64 {
        self.c[0]
    }

    /// First time derivative (equals the order-1 Taylor coefficient).
    pub fn first_derivative(&self) -> f64 {
        assert!(self.len >= 2, "jet carries no derivative information");
        self.c[1]
    }

    /// Taylor coefficient `m`.
    pub fn coeff(&self, m: usize) -> f64 {
        assert!(m < self.len);
        self.c[m]
    }

    pub fn set_coeff(&mut self, m: usize, v: f64) {
        assert!(m < self.len);
        self.c[m] = v;
    }

    /// Restricts the jet to at most `len` coefficients.
    pub fn truncated(mut self, len: usize) -> Self {
        assert!(len >= 1);
        if len < self.len {
            for m in len..self.len {
                self.c[m] = 0.0;
            }
            self.len = len;
        }
        self
    }

    /// The Taylor series of the time derivative: one order shorter.
    pub fn derivative_series(&self) -> Self {
        assert!(
            self.len >= 2,
            "cannot differentiate a jet with a single coefficient"
        );
        let mut c = [0.0; JET_DIM];
        for m in 0..self.len - 1 {
            c[m] = (m as f64 + 1.0) * self.c[m + 1];
        }
        Jet {
            len: self.len - 1,
            c,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.c[..self.len].iter().all(|v| v.is_finite())
    }

    /// Integer power by repeated multiplication.
    pub fn powi(self, n: i32) -> Self {
        assert!(n >= 0, "negative powers: divide explicitly");
        let mut out = Jet::constant(1.0).truncated(self.len);
        for _ in 0..n {
            out = out * self;
        }
        out
    }

    pub fn exp(self) -> Self {
        let mut r = self;
        r.c = [0.0; JET_DIM];
        r.c[0] = self.c[0].exp();
        for m in 1..self.len {
            let mut acc = 0.0;
            for k in 1..=m {
                acc += (k as f64) * self.c[k] * r.c[m - k];
            }
            r.c[m] = acc / m as f64;
        }
        r
    }

    pub fn ln(self) -> Self {
        let mut r = self;
        r.c = [0.0; JET_DIM];
        r.c[0] = self.c[0].ln();
        for m in 1..self.len {
            let mut acc = 0.0;
            for k in 1..m {
                acc += (k as f64) * r.c[k] * self.c[m - k];
            }
            r.c[m] = (self.c[m] * m as f64 - acc) / (m as f64 * self.c[0]);
        }
        r
    }

    pub fn sqrt(self) -> Self {
        let mut r = self;
        r.c = [0.0; JET_DIM];
        r.c[0] = self.c[0].sqrt();
        for m in 1..self.len {
            let mut acc = 0.0;
            for i in 1..m {
                acc += r.c[i] * r.c[m - i];
            }
            r.c[m] = (self.c[m] - acc) / (2.0 * r.c[0]);
        }
        r
    }

    pub fn sin(self) -> Self {
        self.sin_cos().0
    }

    pub fn cos(self) -> Self {
        self.sin_cos().1
    }

    pub fn sin_cos(self) -> (Self, Self) {
        let mut s = self;
        let mut c = self;
        s.c = [0.0; JET_DIM];
        c.c = [0.0; JET_DIM];
        s.c[0] = self.c[0].sin();
        c.c[0] = self.c[0].cos();
        for m in 1..self.len {
            let mut sa = 0.0;
            let mut ca = 0.0;
            for k in 1..=m {
                sa += (k as f64) * self.c[k] * c.c[m - k];
                ca += (k as f64) * self.c[k] * s.c[m - k];
            }
            s.c[m] = sa / m as f64;
            c.c[m] = -ca / m as f64;
        }
        (s, c)
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let len = self.len.min(rhs.len);
        let mut c = [0.0; JET_DIM];
        for m in 0..len {
            c[m] = self.c[m] + rhs.c[m];
        }
        Jet { len, c }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        let len = self.len.min(rhs.len);
        let mut c = [0.0; JET_DIM];
        for m in 0..len {
            c[m] = self.c[m] - rhs.c[m];
        }
        Jet { len, c }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let len = self.len.min(rhs.len);
        let mut c = [0.0; JET_DIM];
        for m in 0..len {
            let mut acc = 0.0;
            for i in 0..=m {
                acc += self.c[i] * rhs.c[m - i];
            }
            c[m] = acc;
        }
        Jet { len, c }
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        let len = self.len.min(rhs.len);
        let mut c = [0.0; JET_DIM];
        for m in 0..len {
            let mut acc = self.c[m];
            for i in 1..=m {
                acc -= rhs.c[i] * c[m - i];
            }
            c[m] = acc / rhs.c[0];
        }
        Jet { len, c }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(mut self) -> Jet {
        for m in 0..self.len {
            self.c[m] = -self.c[m];
        }
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Sub<f64> for Jet {
    type Output = Jet;
    fn sub(mut self, rhs: f64) -> Jet {
        self.c[0] -= rhs;
        self
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(mut self, rhs: f64) -> Jet {
        for m in 0..self.len {
            self.c[m] *= rhs;
        }
        self
    }
}

impl Div<f64> for Jet {
    type Output = Jet;
    fn div(mut self, rhs: f64) -> Jet {
        for m in 0..self.len {
            self.c[m] /= rhs;
        }
        self
    }
}

impl Add<Jet> for f64 {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        rhs + self
    }
}

impl Sub<Jet> for f64 {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        -rhs + self
    }
}

impl Mul<Jet> for f64 {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        rhs * self
    }
}

impl Div<Jet> for f64 {
    type Output = Jet;
    fn div(self, rhs: Jet) -> Jet {
        Jet::constant(self) / rhs
    }
}
