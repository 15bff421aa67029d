//! Scalar abstraction shared by the plain and the differentiated filter design.
//!
//! The biquad design formulas are written once, generic over [`Real`]. Running
//! them with `f64` gives the coefficients used for audio processing; running
//! them with [`Dual`] gives the same values plus exact partial derivatives with
//! respect to up to `N` seeded inputs.

use std::ops::{Add, Div, Mul, Neg, Sub};

pub trait Real:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn constant(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn tan(self) -> Self;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;

    fn scale(self, k: f64) -> Self {
        self * Self::constant(k)
    }
}

impl Real for f64 {
    #[inline]
    fn constant(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        f64::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        f64::cos(self)
    }
    #[inline]
    fn tan(self) -> Self {
        f64::tan(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

/// Forward-mode dual number carrying `N` partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<const N: usize> {
    pub re: f64,
    pub eps: [f64; N],
}

impl<const N: usize> Dual<N> {
    /// An independent variable: derivative 1 in slot `slot`.
    pub fn variable(re: f64, slot: usize) -> Self {
        let mut eps = [0.0; N];
        eps[slot] = 1.0;
        Dual { re, eps }
    }

    #[inline]
    fn chain(self, re: f64, d: f64) -> Self {
        let mut eps = self.eps;
        for e in eps.iter_mut() {
            *e *= d;
        }
        Dual { re, eps }
    }
}

impl<const N: usize> Add for Dual<N> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e += r;
        }
        Dual {
            re: self.re + rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Sub for Dual<N> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        let mut eps = self.eps;
        for (e, r) in eps.iter_mut().zip(rhs.eps) {
            *e -= r;
        }
        Dual {
            re: self.re - rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Mul for Dual<N> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut eps = [0.0; N];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = self.eps[i] * rhs.re + self.re * rhs.eps[i];
        }
        Dual {
            re: self.re * rhs.re,
            eps,
        }
    }
}

impl<const N: usize> Div for Dual<N> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let re = self.re / rhs.re;
        let mut eps = [0.0; N];
        for (i, e) in eps.iter_mut().enumerate() {
            *e = (self.eps[i] - re * rhs.eps[i]) / rhs.re;
        }
        Dual { re, eps }
    }
}

impl<const N: usize> Neg for Dual<N> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        self.chain(-self.re, -1.0)
    }
}

impl<const N: usize> Real for Dual<N> {
    #[inline]
    fn constant(v: f64) -> Self {
        Dual {
            re: v,
            eps: [0.0; N],
        }
    }
    #[inline]
    fn value(self) -> f64 {
        self.re
    }
    #[inline]
    fn sin(self) -> Self {
        self.chain(self.re.sin(), self.re.cos())
    }
    #[inline]
    fn cos(self) -> Self {
        self.chain(self.re.cos(), -self.re.sin())
    }
    #[inline]
    fn tan(self) -> Self {
        let t = self.re.tan();
        self.chain(t, 1.0 + t * t)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        // d/dx sqrt(x) is unbounded at 0; report 0 there instead of inf.
        let d = if s > 0.0 { 0.5 / s } else { 0.0 };
        self.chain(s, d)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.re.exp();
        self.chain(e, e)
    }
    #[inline]
    fn abs(self) -> Self {
        let d = if self.re > 0.0 {
            1.0
        } else if self.re < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.chain(self.re.abs(), d)
    }
    #[inline]
    fn scale(self, k: f64) -> Self {
        self.chain(self.re * k, k)
    }
}
