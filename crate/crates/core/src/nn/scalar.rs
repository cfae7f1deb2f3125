//! Scalar abstraction that lets the forward and reverse passes run either on
//! plain `f64` or on forward-mode dual numbers. Running the reverse pass in
//! dual arithmetic yields directional second derivatives (forward-over-
//! reverse), which is how the gradient-penalty parameter gradient is formed.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn value(self) -> f64;
    fn exp(self) -> Self;
    fn ln_1p(self) -> Self;
    fn tanh(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }

    fn value(self) -> f64 {
        self
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn ln_1p(self) -> Self {
        f64::ln_1p(self)
    }

    fn tanh(self) -> Self {
        f64::tanh(self)
    }
}

/// First-order dual number: value plus tangent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub v: f64,
    pub t: f64,
}

impl Dual {
    pub fn new(v: f64, t: f64) -> Self {
        Dual { v, t }
    }

    pub fn constant(v: f64) -> Self {
        Dual { v, t: 0.0 }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        Dual::new(self.v + rhs.v, self.t + rhs.t)
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        Dual::new(self.v - rhs.v, self.t - rhs.t)
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        Dual::new(self.v * rhs.v, self.t * rhs.v + self.v * rhs.t)
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        Dual::new(
            self.v / rhs.v,
            (self.t * rhs.v - self.v * rhs.t) / (rhs.v * rhs.v),
        )
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual::new(-self.v, -self.t)
    }
}

impl Scalar for Dual {
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }

    fn value(self) -> f64 {
        self.v
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, self.t * e)
    }

    fn ln_1p(self) -> Self {
        Dual::new(self.v.ln_1p(), self.t / (1.0 + self.v))
    }

    fn tanh(self) -> Self {
        let th = self.v.tanh();
        Dual::new(th, self.t * (1.0 - th * th))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dual_propagates_product_rule() {
        let x = Dual::new(3.0, 1.0);
        let y = x * x; // d/dx x^2 = 2x
        assert_eq!(y.v, 9.0);
        assert_eq!(y.t, 6.0);
    }

    #[test]
    fn dual_tanh_derivative() {
        let x = Dual::new(0.7, 1.0);
        let y = x.tanh();
        let expected = 1.0 - 0.7f64.tanh().powi(2);
        assert!((y.t - expected).abs() < 1e-15);
    }

    #[test]
    fn dual_second_derivative_through_nested_use() {
        // d/dx of (1 - tanh(x)^2) at x: -2 tanh(x) (1 - tanh(x)^2).
        let x = Dual::new(0.4, 1.0);
        let th = x.tanh();
        let deriv = Dual::from_f64(1.0) - th * th;
        let expected = -2.0 * 0.4f64.tanh() * (1.0 - 0.4f64.tanh().powi(2));
        assert!((deriv.t - expected).abs() < 1e-15);
    }
}
