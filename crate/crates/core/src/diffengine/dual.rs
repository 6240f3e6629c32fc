//! Forward-mode dual numbers with a small vector of tangent directions.
//!
//! A [`Dual`] seeded with one tangent per space-time input carries
//! `(u, ∂u/∂x_1, .., ∂u/∂x_d, ∂u/∂t)` through a computation. The tangent
//! scalar type is itself generic, so tangents recorded on a
//! [`Tape`](super::Tape) remain differentiable with respect to parameters.
//!
//! A dual with an empty tangent vector is a constant and broadcasts against
//! duals of any length.

use std::ops::{Add, Div, Mul, Neg, Sub};

use smallvec::SmallVec;

use super::real::{hard_tanh_slope, sign0, Real};

pub type Tangents<T> = SmallVec<[T; 4]>;

#[derive(Clone, Debug, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    pub tangents: Tangents<T>,
}

impl<T: Real> Dual<T> {
    pub fn new(value: T, tangents: impl IntoIterator<Item = T>) -> Self {
        Self {
            value,
            tangents: tangents.into_iter().collect(),
        }
    }

    pub fn constant(value: T) -> Self {
        Self {
            value,
            tangents: SmallVec::new(),
        }
    }

    /// Independent variable number `index` out of `len` seeded directions.
    pub fn variable(value: T, index: usize, len: usize) -> Self {
        let tangents = (0..len)
            .map(|k| T::cst(if k == index { 1.0 } else { 0.0 }))
            .collect();
        Self { value, tangents }
    }

    pub fn tangent(&self, k: usize) -> T {
        self.tangents.get(k).cloned().unwrap_or_else(|| T::cst(0.0))
    }

    /// Applies a unary function given its value and derivative at `self.value`.
    fn chain(&self, value: T, slope: T) -> Self {
        Self {
            value,
            tangents: self
                .tangents
                .iter()
                .map(|t| slope.clone() * t.clone())
                .collect(),
        }
    }

    fn scaled(&self, c: f64) -> Tangents<T> {
        self.tangents.iter().map(|t| t.clone() * c).collect()
    }
}

fn combine<T: Real>(
    a: &Tangents<T>,
    b: &Tangents<T>,
    both: impl Fn(&T, &T) -> T,
    only_a: impl Fn(&T) -> T,
    only_b: impl Fn(&T) -> T,
) -> Tangents<T> {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => SmallVec::new(),
        (false, true) => a.iter().map(only_a).collect(),
        (true, false) => b.iter().map(only_b).collect(),
        (false, false) => {
            assert_eq!(a.len(), b.len(), "tangent length mismatch");
            a.iter().zip(b.iter()).map(|(x, y)| both(x, y)).collect()
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let tangents = combine(
            &self.tangents,
            &rhs.tangents,
            |x, y| x.clone() + y.clone(),
            |x| x.clone(),
            |y| y.clone(),
        );
        Self {
            value: self.value + rhs.value,
            tangents,
        }
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let tangents = combine(
            &self.tangents,
            &rhs.tangents,
            |x, y| x.clone() - y.clone(),
            |x| x.clone(),
            |y| -y.clone(),
        );
        Self {
            value: self.value - rhs.value,
            tangents,
        }
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (a, b) = (&self.value, &rhs.value);
        let tangents = combine(
            &self.tangents,
            &rhs.tangents,
            |x, y| b.clone() * x.clone() + a.clone() * y.clone(),
            |x| b.clone() * x.clone(),
            |y| a.clone() * y.clone(),
        );
        Self {
            value: self.value.clone() * rhs.value.clone(),
            tangents,
        }
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let q = self.value.clone() / rhs.value.clone();
        let inv = T::cst(1.0) / rhs.value.clone();
        let tangents = combine(
            &self.tangents,
            &rhs.tangents,
            |x, y| (x.clone() - q.clone() * y.clone()) * inv.clone(),
            |x| x.clone() * inv.clone(),
            |y| -(q.clone() * y.clone()) * inv.clone(),
        );
        Self { value: q, tangents }
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self {
            value: -self.value,
            tangents: self.tangents.into_iter().map(|t| -t).collect(),
        }
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, rhs: f64) -> Self {
        Self {
            value: self.value + rhs,
            tangents: self.tangents,
        }
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, rhs: f64) -> Self {
        Self {
            value: self.value - rhs,
            tangents: self.tangents,
        }
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, rhs: f64) -> Self {
        let tangents = self.scaled(rhs);
        Self {
            value: self.value * rhs,
            tangents,
        }
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<T: Real> Real for Dual<T> {
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }

    fn value(&self) -> f64 {
        self.value.value()
    }

    fn tanh(&self) -> Self {
        let y = self.value.tanh();
        let slope = T::cst(1.0) - y.square();
        self.chain(y, slope)
    }

    fn sigmoid(&self) -> Self {
        let y = self.value.sigmoid();
        let slope = y.clone() * (T::cst(1.0) - y.clone());
        self.chain(y, slope)
    }

    fn sin(&self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }

    fn cos(&self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }

    fn sqrt(&self) -> Self {
        let y = self.value.sqrt();
        let slope = T::cst(0.5) / y.clone();
        self.chain(y, slope)
    }

    fn abs(&self) -> Self {
        let s = sign0(self.value.value());
        self.chain(self.value.abs(), T::cst(s))
    }

    fn exp(&self) -> Self {
        let y = self.value.exp();
        self.chain(y.clone(), y)
    }

    fn ln(&self) -> Self {
        let slope = T::cst(1.0) / self.value.clone();
        self.chain(self.value.ln(), slope)
    }

    fn clamp(&self, lo: f64, hi: f64) -> Self {
        let slope = hard_tanh_slope(self.value.value(), lo, hi);
        self.chain(self.value.clamp(lo, hi), T::cst(slope))
    }
}
