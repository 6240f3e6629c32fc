use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Scalar type that the network, fluxes and loss heads are written against.
///
/// Implemented by `f64` (plain evaluation), [`Var`](super::Var) (reverse-mode
/// tape recording) and [`Dual`](super::Dual) (forward-mode tangents over any
/// other `Real`). Constants produced by [`Real::cst`] carry no derivative
/// information.
pub trait Real:
    Clone
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;

    /// Primal value, used for branching in piecewise functions.
    fn value(&self) -> f64;

    fn tanh(&self) -> Self;
    fn sigmoid(&self) -> Self;
    fn sin(&self) -> Self;
    fn cos(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;

    /// `HardTanh(x; lo, hi)`.
    fn clamp(&self, lo: f64, hi: f64) -> Self;

    fn square(&self) -> Self {
        self.clone() * self.clone()
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn tanh(&self) -> Self {
        f64::tanh(*self)
    }
    fn sigmoid(&self) -> Self {
        sigmoid(*self)
    }
    fn sin(&self) -> Self {
        f64::sin(*self)
    }
    fn cos(&self) -> Self {
        f64::cos(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn clamp(&self, lo: f64, hi: f64) -> Self {
        hard_tanh(*self, lo, hi)
    }
}

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `c1` below `c1`, identity on `[c1, c2]`, `c2` above `c2`.
pub fn hard_tanh(x: f64, c1: f64, c2: f64) -> f64 {
    if x < c1 {
        c1
    } else if x > c2 {
        c2
    } else {
        x
    }
}

/// Derivative of [`hard_tanh`] with the convention that the kinks take the
/// inner slope.
pub fn hard_tanh_slope(x: f64, c1: f64, c2: f64) -> f64 {
    if x < c1 || x > c2 {
        0.0
    } else {
        1.0
    }
}

/// Sign with `sign(0) = 0`, the subgradient choice used for `abs`.
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

const ROUND_MAGIC: f64 = 6_755_399_441_055_744.0; // 1.5 · 2^52
const LN2_HI: f64 = 6.931_471_803_691_238_164_90e-1;
const LN2_LO: f64 = 1.908_214_929_270_587_700_02e-10;

/// Branch-free `tanh` that the compiler can vectorize across a slice.
///
/// Large arguments go through `(1 − e)/(1 + e)` with `e = exp(−2|x|)`
/// computed by Cody–Waite reduction and a degree-13 Taylor polynomial.
/// Below `|x| = 0.1` an odd Taylor polynomial keeps the relative error at
/// the rounding level. Agrees with `f64::tanh` to within a few ulps.
#[inline(always)]
pub fn tanh_kernel(x: f64) -> f64 {
    let ax = x.abs().min(20.0);
    let y = -2.0 * ax;
    let k = y * std::f64::consts::LOG2_E + ROUND_MAGIC;
    let n = k - ROUND_MAGIC;
    let r = (y - n * LN2_HI) - n * LN2_LO;
    let mut p = 1.0 / 6_227_020_800.0;
    for c in [
        1.0 / 479_001_600.0,
        1.0 / 39_916_800.0,
        1.0 / 3_628_800.0,
        1.0 / 362_880.0,
        1.0 / 40_320.0,
        1.0 / 5_040.0,
        1.0 / 720.0,
        1.0 / 120.0,
        1.0 / 24.0,
        1.0 / 6.0,
        0.5,
        1.0,
        1.0,
    ] {
        p = p * r + c;
    }
    // 2^n assembled from the rounded integer left in the low mantissa bits
    let scale = f64::from_bits(
        k.to_bits()
            .wrapping_sub(ROUND_MAGIC.to_bits())
            .wrapping_add(1023)
            << 52,
    );
    let e = p * scale;
    let large = (1.0 - e) / (1.0 + e);

    let x2 = x * x;
    let mut q = -929_569.0 / 638_512_875.0;
    for c in [
        21_844.0 / 6_081_075.0,
        -1_382.0 / 155_925.0,
        62.0 / 2_835.0,
        -17.0 / 315.0,
        2.0 / 15.0,
        -1.0 / 3.0,
    ] {
        q = q * x2 + c;
    }
    let small = ax + ax * x2 * q;
    let t = if ax < 0.1 { small } else { large };
    if x.is_nan() {
        x
    } else {
        t.copysign(x)
    }
}
