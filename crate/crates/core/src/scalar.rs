//! Scalar abstraction and the few special functions the masses need.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type the analytic pipeline is generic over (`f32` or `f64`).
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn c(x: f64) -> Self {
        Self::from_f64(x).expect("constant representable in the scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in the scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// A tolerance never tighter than what the type can resolve.
    #[inline]
    fn tol(x: f64) -> Self {
        Self::c(x).max(Self::c(64.0) * Self::epsilon())
    }
}

impl<T> Real for T where
    T: Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Debug + Display + Send + Sync + 'static
{
}

/// `ln(n!) - (n + 1/2) ln n + n - ln sqrt(2 pi)`, the Stirling remainder.
pub(crate) fn stirlerr<T: Real>(n: usize) -> T {
    if n <= 15 {
        let nf = n as f64;
        let mut lf = 0.0f64;
        for i in 2..=n {
            lf += (i as f64).ln();
        }
        if n == 0 {
            return T::zero();
        }
        let half_ln_2pi = 0.918_938_533_204_672_8_f64;
        return T::c(lf - (nf + 0.5) * nf.ln() + nf - half_ln_2pi);
    }
    let x = T::from_count(n);
    let x2 = x * x;
    let s0 = T::c(1.0 / 12.0);
    let s1 = T::c(1.0 / 360.0);
    let s2 = T::c(1.0 / 1260.0);
    let s3 = T::c(1.0 / 1680.0);
    let s4 = T::c(1.0 / 1188.0);
    (s0 - (s1 - (s2 - (s3 - s4 / x2) / x2) / x2) / x2) / x
}

/// `x ln(x/np) + np - x`, evaluated without cancellation near `x = np`.
pub(crate) fn bd0<T: Real>(x: T, np: T) -> T {
    if (x - np).abs() < T::c(0.1) * (x + np) {
        let v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = T::c(2.0) * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / T::from_count(2 * j + 1);
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// Binomial probability `C(n, x) p^x (1-p)^(n-x)` with relative accuracy near machine precision.
pub(crate) fn binom_pmf<T: Real>(x: usize, n: usize, p: T) -> T {
    let q = T::one() - p;
    if x > n {
        return T::zero();
    }
    if p == T::zero() {
        return if x == 0 { T::one() } else { T::zero() };
    }
    if q == T::zero() {
        return if x == n { T::one() } else { T::zero() };
    }
    if x == 0 {
        return (T::from_count(n) * (-p).ln_1p()).exp();
    }
    if x == n {
        return (T::from_count(n) * p.ln()).exp();
    }
    let nf = T::from_count(n);
    let xf = T::from_count(x);
    let yf = T::from_count(n - x);
    let lc = stirlerr::<T>(n) - stirlerr::<T>(x) - stirlerr::<T>(n - x) - bd0(xf, nf * p) - bd0(yf, nf * q);
    lc.exp() * (nf / (T::c(2.0) * T::PI() * xf * yf)).sqrt()
}

/// Poisson probability of `x` at mean `lambda`.
pub(crate) fn poisson_pmf<T: Real>(x: usize, lambda: T) -> T {
    if lambda == T::zero() {
        return if x == 0 { T::one() } else { T::zero() };
    }
    if x == 0 {
        return (-lambda).exp();
    }
    let xf = T::from_count(x);
    (-stirlerr::<T>(x) - bd0(xf, lambda)).exp() / (T::c(2.0) * T::PI() * xf).sqrt()
}

/// Fills `n` terms of a unimodal sequence from the value at `mode`, walking
/// outwards with `ratio(m) = term(m+1) / term(m)`.
pub(crate) fn fill_from_mode<T: Real>(n: usize, mode: usize, at_mode: T, ratio: impl Fn(usize) -> T) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    if n == 0 {
        return out;
    }
    let mode = mode.min(n - 1);
    out[mode] = at_mode;
    let mut v = at_mode;
    for m in mode..n - 1 {
        v *= ratio(m);
        if v < T::min_positive_value() {
            break;
        }
        out[m + 1] = v;
    }
    let mut v = at_mode;
    for m in (0..mode).rev() {
        v /= ratio(m);
        if v < T::min_positive_value() {
            break;
        }
        out[m] = v;
    }
    out
}
