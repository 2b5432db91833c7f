//! Truncated products of power series with nonnegative coefficients.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::scalar::Real;

/// Below this length the schoolbook product is faster.
const DIRECT_LEN: usize = 96;

/// First `n` coefficients of `a * b`, schoolbook.
pub(crate) fn mul_trunc<T: Real>(a: &[T], b: &[T], n: usize) -> Vec<T> {
    let mut out = vec![T::zero(); n];
    for (i, &ai) in a.iter().take(n).enumerate() {
        if ai == T::zero() {
            continue;
        }
        for (o, &bj) in out[i..].iter_mut().zip(b) {
            *o += ai * bj;
        }
    }
    out
}

/// Multiplies series modulo `z^n` by fixed operands whose transforms are
/// kept. The transforms run in `f64`; results are clamped at zero, which is
/// exact for nonnegative inputs up to rounding.
type FftPair = (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>);

pub(crate) struct TruncMul {
    n: usize,
    /// Forward and inverse plans, absent for short products.
    fft: Option<FftPair>,
    size: usize,
}

/// A fixed right operand prepared for [`TruncMul::mul`].
pub(crate) enum Operand<T> {
    Direct(Vec<T>),
    Spectrum(Vec<Complex<f64>>),
}

impl TruncMul {
    pub(crate) fn new(n: usize) -> Self {
        if n < DIRECT_LEN {
            return TruncMul { n, fft: None, size: 0 };
        }
        let size = (2 * n - 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(size);
        let inv = planner.plan_fft_inverse(size);
        TruncMul { n, fft: Some((fwd, inv)), size }
    }

    fn spectrum<T: Real>(&self, fwd: &Arc<dyn Fft<f64>>, a: &[T]) -> Vec<Complex<f64>> {
        let mut buf = vec![Complex::new(0.0, 0.0); self.size];
        for (o, &v) in buf.iter_mut().zip(a.iter().take(self.n)) {
            o.re = v.as_f64();
        }
        fwd.process(&mut buf);
        buf
    }

    pub(crate) fn operand<T: Real>(&self, b: &[T]) -> Operand<T> {
        match &self.fft {
            None => Operand::Direct(b.iter().take(self.n).copied().collect()),
            Some((fwd, _)) => Operand::Spectrum(self.spectrum(fwd, b)),
        }
    }

    pub(crate) fn mul<T: Real>(&self, a: &[T], b: &Operand<T>) -> Vec<T> {
        match (b, &self.fft) {
            (Operand::Direct(b), _) => mul_trunc(a, b, self.n),
            (Operand::Spectrum(fb), Some((fwd, inv))) => {
                let mut buf = self.spectrum(fwd, a);
                for (x, y) in buf.iter_mut().zip(fb) {
                    *x *= *y;
                }
                inv.process(&mut buf);
                let scale = 1.0 / self.size as f64;
                buf[..self.n].iter().map(|z| T::c((z.re * scale).max(0.0))).collect()
            }
            (Operand::Spectrum(_), None) => unreachable!("spectrum operands come from an FFT multiplier"),
        }
    }
}
