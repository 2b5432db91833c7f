//! Background M/G/1 busy periods: the Kendall fixed point and the
//! coefficients `b^(i)` of `b(z) = (theta/zeta) z + (lambda_bg/zeta) f_B(theta - theta z)`.

use crate::dist::Distribution;
use crate::error::{AoiError, Result};
use crate::scalar::{binom_pmf, Real};

/// Coefficients of `b(z)` and of the renewal series `1 / (1 - b(z))`.
#[derive(Debug, Clone, PartialEq)]
pub struct BusyCoeffs<T = f64> {
    pub b: Vec<T>,
    /// `1 - sum_i b^(i)`.
    pub residual: T,
    pub renewal: Vec<T>,
    /// Number of busy-period customer counts summed before the stop rule fired.
    pub customers_summed: usize,
}

const KENDALL_CAP: usize = 10_000_000;

/// LST of the background busy period at `s`, by monotone fixed-point iteration from zero.
pub fn kendall_fixed_point<T: Real>(lambda_bg: T, h_bg: &Distribution<T>, mu: T, s: T, tol: T) -> Result<T> {
    if !(s >= T::zero()) {
        return Err(AoiError::InvalidParameter(format!("transform argument must be >= 0, got {s}")));
    }
    if !(lambda_bg * h_bg.mean() / mu < T::one()) {
        return Err(AoiError::Unstable { rho: 0.0, rho_bg: (lambda_bg * h_bg.mean() / mu).as_f64() });
    }
    if s == T::zero() {
        return Ok(T::one());
    }
    let mut y = T::zero();
    for _ in 0..KENDALL_CAP {
        let next = h_bg.lst_unchecked((s + lambda_bg - lambda_bg * y) / mu);
        if (next - y).abs() < tol {
            return Ok(next);
        }
        y = next;
    }
    Err(AoiError::NoConvergence { what: "Kendall fixed point", limit: KENDALL_CAP })
}

/// Table of `y_k^(m)`, the `k`-fold convolution of the background masses at
/// rate `zeta/mu`, for `0 <= k, m <= k_max`. Row 0 is the unit mass at zero.
pub fn ybg_table<T: Real>(h_bg: &Distribution<T>, zeta: T, mu: T, k_max: usize) -> Result<Vec<Vec<T>>> {
    if k_max == 0 {
        return Err(AoiError::InvalidParameter("table needs k_max >= 1".into()));
    }
    let n = k_max + 1;
    let h = h_bg.poisson_mixture_masses(zeta / mu, n)?;
    let mut rows = Vec::with_capacity(n);
    let mut delta = vec![T::zero(); n];
    delta[0] = T::one();
    rows.push(delta);
    for k in 1..=k_max {
        let prev: &Vec<T> = &rows[k - 1];
        let mut row = vec![T::zero(); n];
        for (i, &a) in prev.iter().enumerate() {
            if a == T::zero() {
                continue;
            }
            for (r, &b) in row[i..].iter_mut().zip(&h) {
                *r += a * b;
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Produces the rows `y_j` one at a time. Mixtures of Erlang laws become
/// cascades of first-order recursive filters; deterministic work has a closed
/// Poisson form.
enum RowStepper<T> {
    Poisson { rate_per_customer: T },
    Filters { stage: Stage<T>, row: Vec<T>, scratch: Vec<T>, acc: Vec<T>, span: (usize, usize) },
}

/// One convolution with the masses of a single mixture law, expressed through
/// geometric filters `out_m = a x_m + (1 - a) out_{m-1}`.
enum Stage<T> {
    Geometric { a: T },
    Erlang { k: usize, a: T },
    Mixed { p: T, k: usize, a: T },
    Hyper { parts: Vec<(T, T)> },
}

/// Values below this are flushed to zero so the recursions never run on subnormals.
fn flush_floor<T: Real>() -> T {
    T::min_positive_value() / T::epsilon()
}

/// Filters `x`, whose entries outside `span` are zero, and returns the new span.
fn geometric_filter<T: Real>(x: &mut [T], a: T, span: (usize, usize)) -> (usize, usize) {
    let (lo, hi) = span;
    let b = T::one() - a;
    let floor = flush_floor::<T>();
    let mut prev = T::zero();
    let mut start = lo;
    for (m, v) in x[lo..hi].iter_mut().enumerate() {
        prev = a * *v + b * prev;
        if prev < floor {
            prev = T::zero();
            if start == lo + m {
                start += 1;
            }
        }
        *v = prev;
    }
    let mut m = hi;
    while m < x.len() {
        prev = b * prev;
        if prev < floor {
            break;
        }
        x[m] = prev;
        m += 1;
    }
    (start.min(m), m)
}

impl<T: Real> Stage<T> {
    fn apply(&self, x: &mut [T], scratch: &mut [T], acc: &mut [T], span: (usize, usize)) -> (usize, usize) {
        match self {
            Stage::Geometric { a } => geometric_filter(x, *a, span),
            Stage::Erlang { k, a } => (0..*k).fold(span, |s, _| geometric_filter(x, *a, s)),
            Stage::Mixed { p, k, a } => {
                let (lo, hi) = (0..*k).fold(span, |s, _| geometric_filter(x, *a, s));
                scratch[lo..hi].copy_from_slice(&x[lo..hi]);
                let (_, hi2) = geometric_filter(scratch, *a, (lo, hi));
                let q = T::one() - *p;
                x[hi..hi2].fill(T::zero());
                for (v, &s) in x[lo..hi2].iter_mut().zip(&scratch[lo..hi2]) {
                    *v = *p * *v + q * s;
                }
                (lo, hi2)
            }
            Stage::Hyper { parts } => {
                let (lo, hi) = span;
                let mut out_hi = hi;
                acc[lo..hi].fill(T::zero());
                for &(w, a) in parts {
                    scratch[lo..hi].copy_from_slice(&x[lo..hi]);
                    let (_, h) = geometric_filter(scratch, a, span);
                    if h > out_hi {
                        acc[out_hi..h].fill(T::zero());
                        out_hi = h;
                    }
                    for (o, &s) in acc[lo..h].iter_mut().zip(&scratch[lo..h]) {
                        *o += w * s;
                    }
                }
                x[lo..out_hi].copy_from_slice(&acc[lo..out_hi]);
                let start = lo + x[lo..out_hi].iter().position(|&v| v != T::zero()).unwrap_or(out_hi - lo);
                (start, out_hi)
            }
        }
    }
}

impl<T: Real> RowStepper<T> {
    fn new(h_bg: &Distribution<T>, eta: T, len: usize) -> Self {
        let geo = |r: T| r / (r + eta);
        let stage = match h_bg {
            Distribution::Deterministic { d } => return RowStepper::Poisson { rate_per_customer: eta * *d },
            Distribution::Exponential { rate } => Stage::Geometric { a: geo(*rate) },
            Distribution::Erlang { k, rate } => Stage::Erlang { k: *k, a: geo(*rate) },
            Distribution::MixedErlang { p, k, rate } => Stage::Mixed { p: *p, k: *k, a: geo(*rate) },
            Distribution::Hyperexponential { weights, rates } => Stage::Hyper {
                parts: weights.iter().zip(rates).map(|(&w, &r)| (w, geo(r))).collect(),
            },
        };
        let mut row = vec![T::zero(); len];
        row[0] = T::one();
        let zeros = vec![T::zero(); len];
        RowStepper::Filters { stage, row, scratch: zeros.clone(), acc: zeros, span: (0, 1) }
    }

    /// Advances to row `j` and returns `y_j^(m)` for `m` in `[lo, lo + count)`.
    fn advance(&mut self, j: usize, lo: usize, count: usize, out: &mut Vec<T>) {
        out.clear();
        match self {
            RowStepper::Poisson { rate_per_customer } => {
                let lambda = *rate_per_customer * T::from_count(j);
                if lambda == T::zero() {
                    out.extend((lo..lo + count).map(|m| if m == 0 { T::one() } else { T::zero() }));
                    return;
                }
                let mode = lambda.floor().to_usize().unwrap_or(0).clamp(lo, lo + count - 1);
                let vals = crate::scalar::fill_from_mode(count, mode - lo, crate::scalar::poisson_pmf(mode, lambda), |i| {
                    lambda / T::from_count(lo + i + 1)
                });
                out.extend(vals);
            }
            RowStepper::Filters { stage, row, scratch, acc, span } => {
                *span = stage.apply(row, scratch, acc, *span);
                out.extend_from_slice(&row[lo..lo + count]);
            }
        }
    }

    fn capacity(&self) -> usize {
        match self {
            RowStepper::Poisson { .. } => usize::MAX,
            RowStepper::Filters { row, .. } => row.len(),
        }
    }
}

/// Computes `b^(0..=i_max)` and the renewal coefficients `u_0..=u_{i_max}`.
///
/// The sum over busy-period customer counts stops once, for five consecutive
/// counts, every new contribution is below `eps_tail` times its running sum
/// or below `abs_floor`.
pub fn busy_coeffs<T: Real>(
    theta: T,
    lambda_bg: T,
    h_bg: &Distribution<T>,
    mu: T,
    i_max: usize,
    eps_tail: T,
    abs_floor: T,
) -> Result<BusyCoeffs<T>> {
    if !(theta > T::zero()) {
        return Err(AoiError::InvalidParameter(format!("theta must be > 0, got {theta}")));
    }
    if !(lambda_bg * h_bg.mean() / mu < T::one()) {
        return Err(AoiError::Unstable { rho: 0.0, rho_bg: (lambda_bg * h_bg.mean() / mu).as_f64() });
    }
    let n = i_max + 1;
    let mut b = vec![T::zero(); n];
    let mut customers_summed = 0;
    if lambda_bg == T::zero() {
        if n > 1 {
            b[1] = T::one();
        }
    } else {
        let zeta = theta + lambda_bg;
        let p = theta / zeta;
        let q = lambda_bg / zeta;
        let eta = zeta / mu;
        let mut guess = (4 * n).max(256);
        loop {
            match sum_over_customers(p, eta, h_bg, n, guess, eps_tail, abs_floor) {
                Some((partial, j)) => {
                    for (bi, s) in b.iter_mut().zip(partial) {
                        *bi = q * s;
                    }
                    if n > 1 {
                        b[1] += p;
                    }
                    customers_summed = j;
                    break;
                }
                None => {
                    if guess > 1 << 24 {
                        return Err(AoiError::TruncationCap { what: "busy-period customer sum", cap: guess });
                    }
                    guess *= 2;
                }
            }
        }
    }
    let renewal = renewal_coeffs(&b, i_max)?;
    let total: T = b.iter().copied().sum();
    Ok(BusyCoeffs { b, residual: T::one() - total, renewal, customers_summed })
}

/// Sums `w(i, j) y_j^(i+j-1)` over `j >= 1` for every `i < n`, where
/// `w(i, j) = C(i+j-1, i) p^i q^(j-1) / j`. Returns `None` when more than
/// `j_guess` customers are needed.
fn sum_over_customers<T: Real>(
    p: T,
    eta: T,
    h_bg: &Distribution<T>,
    n: usize,
    j_guess: usize,
    eps_tail: T,
    abs_floor: T,
) -> Option<(Vec<T>, usize)> {
    let len = n + j_guess;
    let mut stepper = RowStepper::new(h_bg, eta, len);
    let mut partial = vec![T::zero(); n];
    let mut y = Vec::with_capacity(n);
    let mut w = vec![T::zero(); n];
    let mut quiet = 0;
    let one = T::one();
    for j in 1.. {
        if j - 1 + n > stepper.capacity() {
            return None;
        }
        stepper.advance(j, j - 1, n, &mut y);
        // Weights in i from the mode outwards; w(i+1)/w(i) = p (i+j)/(i+1).
        let jf = T::from_count(j);
        let mode = if j == 1 {
            0
        } else {
            ((p * T::from_count(j - 1)) / (one - p)).floor().to_usize().unwrap_or(0).min(n - 1)
        };
        let floor = flush_floor::<T>();
        let w_mode = binom_pmf(mode, mode + j - 1, p) / jf;
        w[mode] = w_mode;
        let mut top = mode + 1;
        let mut v = w_mode;
        while top < n {
            v = v * p * T::from_count(top - 1 + j) / T::from_count(top);
            if v < floor {
                break;
            }
            w[top] = v;
            top += 1;
        }
        let mut bottom = mode;
        let mut v = w_mode;
        while bottom > 0 {
            v = v * T::from_count(bottom) / (p * T::from_count(bottom - 1 + j));
            if v < floor {
                break;
            }
            bottom -= 1;
            w[bottom] = v;
        }
        let mut small = true;
        for i in bottom..top {
            let contrib = w[i] * y[i];
            partial[i] += contrib;
            if contrib > abs_floor && contrib > eps_tail * partial[i] {
                small = false;
            }
        }
        if small {
            quiet += 1;
            if quiet >= 5 {
                return Some((partial, j));
            }
        } else {
            quiet = 0;
        }
    }
    unreachable!()
}

/// Coefficients of `1 / (1 - b(z))` up to `z^k_max`.
pub fn renewal_coeffs<T: Real>(b: &[T], k_max: usize) -> Result<Vec<T>> {
    let b0 = b.first().copied().unwrap_or(T::zero());
    if !(b0 < T::one()) {
        return Err(AoiError::InvalidParameter(format!("b^(0) = {b0} must be < 1")));
    }
    let inv = T::one() / (T::one() - b0);
    let mut u = Vec::with_capacity(k_max + 1);
    u.push(inv);
    for k in 1..=k_max {
        let top = k.min(b.len().saturating_sub(1));
        let s: T = (1..=top).map(|i| b[i] * u[k - i]).sum();
        u.push(s * inv);
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kendall_examples() {
        let h = Distribution::Exponential { rate: 1.0 };
        assert_eq!(kendall_fixed_point(0.5, &h, 1.0, 0.0, 1e-14).unwrap(), 1.0);
        let y = kendall_fixed_point(0.0, &h, 1.0, 0.7, 1e-14).unwrap();
        assert_relative_eq!(y, 1.0 / 1.7, max_relative = 1e-14);
        // y (2.5 - 0.5 y) = 1  =>  0.5 y^2 - 2.5 y + 1 = 0.
        let y = kendall_fixed_point(0.5, &h, 1.0, 1.0, 1e-14).unwrap();
        let closed = 2.5 - (2.5f64 * 2.5 - 2.0).sqrt();
        assert_relative_eq!(y, closed, max_relative = 1e-12);
        assert!((y - 0.43845).abs() < 1e-5);
    }

    #[test]
    fn table_base_cases() {
        let h = Distribution::Erlang { k: 3, rate: 2.0 };
        let rows = ybg_table(&h, 1.5, 1.0, 6).unwrap();
        let masses = h.poisson_mixture_masses(1.5, 7).unwrap();
        assert_eq!(rows[1], masses);
        let zero = Distribution::Deterministic { d: 0.0 };
        for row in ybg_table(&zero, 1.5, 1.0, 5).unwrap() {
            assert_eq!(row[0], 1.0);
            assert!(row[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn table_geometric_rows_are_negative_binomial() {
        let eta = 1.3;
        let h = Distribution::Exponential { rate: eta };
        let rows = ybg_table(&h, eta, 1.0, 8).unwrap();
        for (k, row) in rows.iter().enumerate().skip(1) {
            for (m, &v) in row.iter().enumerate() {
                // C(m+k-1, m) 2^{-(m+k)}
                let mut c = 1.0;
                for i in 0..m {
                    c *= (k + i) as f64 / (i + 1) as f64;
                }
                assert_relative_eq!(v, c * 0.5f64.powi((m + k) as i32), max_relative = 1e-13);
            }
        }
    }

    /// Direct evaluation of the coefficient sum against the plain convolution table.
    fn b_direct(theta: f64, lambda_bg: f64, h: &Distribution<f64>, mu: f64, i_max: usize, k_max: usize) -> Vec<f64> {
        let zeta = theta + lambda_bg;
        let (p, q) = (theta / zeta, lambda_bg / zeta);
        let y = ybg_table(h, zeta, mu, k_max + 1).unwrap();
        (0..=i_max)
            .map(|i| {
                let mut s = 0.0;
                let mut c = 1.0; // C(k, i) at k = i
                for k in i..=k_max {
                    if k > i {
                        c *= k as f64 / (k - i) as f64;
                    }
                    s += c * p.powi(i as i32) * q.powi((k - i) as i32) / (k - i + 1) as f64 * y[k - i + 1][k];
                }
                q * s + if i == 1 { p } else { 0.0 }
            })
            .collect()
    }

    #[test]
    fn fast_sum_matches_direct_table() {
        let laws = [
            Distribution::Deterministic { d: 1.0 },
            Distribution::Exponential { rate: 1.0 },
            Distribution::Erlang { k: 3, rate: 3.0 },
            Distribution::from_mean_cv(1.0, 0.5).unwrap(),
            Distribution::from_mean_cv(1.0, 0.6).unwrap(),
            Distribution::from_mean_cv(1.0, 1.5).unwrap(),
        ];
        for h in &laws {
            let fast = busy_coeffs(1.2, 0.6, h, 1.0, 20, 1e-17, 1e-300).unwrap();
            let slow = b_direct(1.2, 0.6, h, 1.0, 20, 400);
            for (i, (&a, &b)) in fast.b.iter().zip(&slow).enumerate() {
                assert_relative_eq!(a, b, max_relative = 1e-11, epsilon = 1e-300);
                assert!(a >= 0.0, "b[{i}] negative");
            }
        }
    }

    #[test]
    fn empty_background_is_identity() {
        let h = Distribution::Deterministic { d: 1.0 };
        let bc = busy_coeffs(1.0, 0.0, &h, 1.0, 10, 1e-16, 1e-300).unwrap();
        assert_eq!(bc.b[1], 1.0);
        assert_eq!(bc.b.iter().sum::<f64>(), 1.0);
        assert!(bc.renewal.iter().all(|&u| u == 1.0));
    }

    #[test]
    fn generating_function_matches_kendall() {
        let h = Distribution::Deterministic { d: 1.0 };
        let (theta, lambda_bg, mu) = (1.155, 0.8, 1.0);
        let zeta = theta + lambda_bg;
        let bc: BusyCoeffs<f64> = busy_coeffs(theta, lambda_bg, &h, mu, 600, 1e-17, 1e-300).unwrap();
        assert!(bc.residual.abs() < 1e-8, "residual {}", bc.residual);
        for z in [0.1, 0.3, 0.5, 0.7, 0.9] {
            let series: f64 = bc.b.iter().rev().fold(0.0, |acc, &c| acc * z + c);
            let kendall = kendall_fixed_point(lambda_bg, &h, mu, theta - theta * z, 1e-15).unwrap();
            let expect = theta * z / zeta + lambda_bg / zeta * kendall;
            assert!((series - expect).abs() < 1e-8, "z={z}: {series} vs {expect}");
        }
    }

    #[test]
    fn renewal_start() {
        let u = renewal_coeffs(&[0.25, 0.5, 0.25], 4).unwrap();
        assert_relative_eq!(u[0], 1.0 / 0.75);
        assert!(u.iter().all(|&v| v >= 0.0));
        assert!(renewal_coeffs(&[1.0], 3).is_err());
    }
}
