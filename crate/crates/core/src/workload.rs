//! The Markov-modulated workload side: the compound MAP `(C, D^(m))`, the
//! matrix `Q`, its stationary vector, the `R^(m)` matrices, the vectors
//! `v^(m)` and the delay coefficients `d^(m)`.

use crate::error::{AoiError, Result};
use crate::linalg::{matrix_poly, Lu, Mat};
use crate::model::ModelSpec;
use crate::scalar::Real;

/// `C = Gamma - lambda_bg I` and `D^(m) = t gamma h^(m) + lambda_bg h_bg^(m) I`,
/// kept in factored form alongside the dense matrices.
#[derive(Debug, Clone)]
pub struct MapMatrices<T = f64> {
    pub c: Mat<T>,
    pub zeta: T,
    pub lambda_bg: T,
    /// `t = -Gamma e`.
    pub exit: Vec<T>,
    pub gamma: Vec<T>,
    /// Tagged work masses at rate `zeta / mu`.
    pub h: Vec<T>,
    /// Background work masses at rate `zeta / mu`.
    pub h_bg: Vec<T>,
}

impl<T: Real> MapMatrices<T> {
    /// Number of retained `D^(m)` terms.
    pub fn len(&self) -> usize {
        self.h.len().max(self.h_bg.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn h_at(&self, m: usize) -> T {
        self.h.get(m).copied().unwrap_or(T::zero())
    }

    fn hbg_at(&self, m: usize) -> T {
        self.h_bg.get(m).copied().unwrap_or(T::zero())
    }

    /// Dense `D^(m)`.
    pub fn dhat(&self, m: usize) -> Mat<T> {
        let mut d = Mat::zeros(self.exit.len());
        d.add_outer(self.h_at(m), &self.exit, &self.gamma);
        d.add_diag(self.lambda_bg * self.hbg_at(m));
        d
    }
}

/// Builds the MAP with `theta` from `G` and the masses truncated once their
/// tail mass is below `eps_tail` (at most `k_cap` terms).
pub fn build_map<T: Real>(model: &ModelSpec<T>, eps_tail: T, k_cap: usize) -> Result<MapMatrices<T>> {
    model.validate()?;
    let theta = model.g.uniformization_rate();
    let zeta = theta + model.lambda_bg;
    let eta = zeta / model.mu;
    let mut c = model.g.generator().clone();
    c.add_diag(-model.lambda_bg);
    let h = model.h.truncated_masses(eta, eps_tail, k_cap)?;
    let h_bg = if model.lambda_bg > T::zero() {
        model.h_bg.truncated_masses(eta, eps_tail, k_cap)?
    } else {
        Vec::new()
    };
    Ok(MapMatrices {
        c,
        zeta,
        lambda_bg: model.lambda_bg,
        exit: model.g.exit_vector(),
        gamma: model.g.gamma().to_vec(),
        h,
        h_bg,
    })
}

#[derive(Debug, Clone)]
pub struct QSolution<T = f64> {
    pub q: Mat<T>,
    pub iterations: usize,
    /// Largest entrywise change in the final step.
    pub last_change: T,
}

/// `Q^(0) = C`, `Q^(n) = C + sum_k D^(k) (I + Q^(n-1)/zeta)^k`, stopped when
/// the largest entrywise change, and the remaining distance extrapolated from
/// the contraction ratio of successive changes, are both below `tol`. Every iterate is checked to be
/// entrywise nondecreasing and to keep `I + Q/zeta` substochastic.
pub fn iterate_q<T: Real>(map: &MapMatrices<T>, tol: T, max_iter: usize) -> Result<QSolution<T>> {
    let m = map.exit.len();
    let zeta = map.zeta;
    let slack = T::c(64.0) * T::epsilon() * zeta;
    let h_len = map.h.len();
    let mut q = map.c.clone();
    let mut prev_change = T::infinity();
    for it in 1..=max_iter {
        let mut x = q.clone();
        x.scale(T::one() / zeta);
        x.add_diag(T::one());
        // gamma * sum_k h^(k) X^k by Horner on the row vector.
        let mut w = vec![T::zero(); m];
        for k in (0..h_len).rev() {
            w = x.left_mul(&w);
            for (wi, &g) in w.iter_mut().zip(&map.gamma) {
                *wi += map.h[k] * g;
            }
        }
        let mut next = map.c.clone();
        next.add_outer(T::one(), &map.exit, &w);
        if !map.h_bg.is_empty() {
            let poly = matrix_poly(&map.h_bg, &x);
            next.add_scaled(map.lambda_bg, &poly);
        }
        let mut change = T::zero();
        let mut worst = T::zero();
        for (a, b) in next.as_slice().iter().zip(q.as_slice()) {
            let d = *a - *b;
            change = change.max(d.abs());
            worst = worst.min(d);
        }
        if worst < -slack {
            return Err(AoiError::NonMonotone { what: "Q iteration", step: it, amount: worst.as_f64() });
        }
        check_substochastic(&next, zeta, it)?;
        q = next;
        let ratio = change / prev_change;
        let remaining = if ratio < T::one() { change * ratio / (T::one() - ratio) } else { T::infinity() };
        if change <= slack || (change < tol && remaining < tol) {
            return Ok(QSolution { q, iterations: it, last_change: change });
        }
        prev_change = change;
    }
    Err(AoiError::NoConvergence { what: "Q iteration", limit: max_iter })
}

fn check_substochastic<T: Real>(q: &Mat<T>, zeta: T, step: usize) -> Result<()> {
    let n = q.dim();
    let slack = T::c(64.0) * T::epsilon();
    for i in 0..n {
        let mut row = T::zero();
        for j in 0..n {
            let v = q[(i, j)] / zeta + if i == j { T::one() } else { T::zero() };
            if v < -slack {
                return Err(AoiError::NotSubstochastic { what: "uniformized Q", step, amount: v.as_f64() });
            }
            row += v;
        }
        if row > T::one() + T::tol(1e-12) {
            return Err(AoiError::NotSubstochastic { what: "uniformized Q", step, amount: (row - T::one()).as_f64() });
        }
    }
    Ok(())
}

/// Solves `kappa Q = 0`, `kappa e = 1`.
pub fn stationary_kappa<T: Real>(q: &Mat<T>) -> Result<Vec<T>> {
    let n = q.dim();
    let mut a = q.clone();
    // Replace the last column by ones: kappa A = e_n^T.
    for i in 0..n {
        a[(i, n - 1)] = T::one();
    }
    let lu = Lu::new(&a).map_err(|_| AoiError::Singular("stationary vector of Q"))?;
    let mut rhs = vec![T::zero(); n];
    rhs[n - 1] = T::one();
    let mut kappa = lu.solve_left(&rhs);
    for (i, k) in kappa.iter_mut().enumerate() {
        if *k < -T::tol(1e-10) {
            return Err(AoiError::Negative { what: "stationary vector", index: i, value: k.as_f64() });
        }
        *k = k.max(T::zero());
    }
    Ok(kappa)
}

/// The matrices `R^(m) = zeta^{-1} sum_k D^(m+k+1) (I + Q/zeta)^k` with the
/// `LU` factors of `I - R^(0)`.
#[derive(Debug, Clone)]
pub struct RMatrices<T = f64> {
    pub r: Vec<Mat<T>>,
    lu: Lu<T>,
}

impl<T: Real> RMatrices<T> {
    /// Solves `x (I - R^(0)) = b`.
    pub fn solve_left(&self, b: &[T]) -> Vec<T> {
        self.lu.solve_left(b)
    }
}

pub fn r_matrices<T: Real>(map: &MapMatrices<T>, q: &Mat<T>) -> Result<RMatrices<T>> {
    let n = q.dim();
    let len = map.len();
    let zeta = map.zeta;
    let mut x = q.clone();
    x.scale(T::one() / zeta);
    x.add_diag(T::one());
    // Powers X^k and gamma X^k for k < len - 1.
    let kmax = len.saturating_sub(1);
    let mut pows: Vec<Mat<T>> = Vec::with_capacity(kmax);
    let mut gpows: Vec<Vec<T>> = Vec::with_capacity(kmax);
    if kmax > 0 {
        pows.push(Mat::identity(n));
        gpows.push(map.gamma.clone());
        for k in 1..kmax {
            let p = pows[k - 1].matmul(&x);
            gpows.push(x.left_mul(&gpows[k - 1]));
            pows.push(p);
        }
    }
    let inv_zeta = T::one() / zeta;
    let mut r = Vec::with_capacity(kmax.max(1));
    for m in 0..kmax.max(1) {
        let mut rm = Mat::zeros(n);
        let mut a = vec![T::zero(); n];
        for k in 0..kmax.saturating_sub(m) {
            let j = m + k + 1;
            let hj = map.h_at(j);
            if hj != T::zero() {
                for (ai, &g) in a.iter_mut().zip(&gpows[k]) {
                    *ai += hj * g;
                }
            }
            let hb = map.hbg_at(j);
            if hb != T::zero() {
                rm.add_scaled(map.lambda_bg * hb, &pows[k]);
            }
        }
        rm.add_outer(T::one(), &map.exit, &a);
        rm.scale(inv_zeta);
        let low = rm.min_entry();
        if low < -T::tol(1e-14) {
            return Err(AoiError::Negative { what: "R matrix", index: m, value: low.as_f64() });
        }
        r.push(rm);
    }
    check_neumann(&r[0])?;
    let mut i_minus = r[0].clone();
    i_minus.scale(-T::one());
    i_minus.add_diag(T::one());
    let lu = Lu::new(&i_minus).map_err(|_| AoiError::Singular("I - R^(0)"))?;
    Ok(RMatrices { r, lu })
}

/// Confirms the Neumann series of `R` converges by repeated squaring.
fn check_neumann<T: Real>(r: &Mat<T>) -> Result<()> {
    let mut p = r.clone();
    for _ in 0..64 {
        if p.norm_inf() < T::c(0.5) {
            return Ok(());
        }
        p = p.matmul(&p);
    }
    Err(AoiError::Singular("I - R^(0): spectral radius of R^(0) is not below one"))
}

/// `v^(0) = (1 - rho - rho_bg) kappa (I - R^(0))^{-1}` and
/// `v^(m) = (sum_{k<m} v^(k) R^(m-k)) (I - R^(0))^{-1}` for `m <= k_max`.
pub fn vhat_coeffs<T: Real>(kappa: &[T], r: &RMatrices<T>, rho: T, rho_bg: T, k_max: usize) -> Result<Vec<Vec<T>>> {
    let mut v = Vec::new();
    extend_vhat(&mut v, kappa, r, rho, rho_bg, k_max)?;
    Ok(v)
}

/// Extends an existing prefix of `v^(m)` through index `k_max`.
pub fn extend_vhat<T: Real>(
    v: &mut Vec<Vec<T>>,
    kappa: &[T],
    r: &RMatrices<T>,
    rho: T,
    rho_bg: T,
    k_max: usize,
) -> Result<()> {
    let n = kappa.len();
    if v.is_empty() {
        let idle = T::one() - rho - rho_bg;
        let b: Vec<T> = kappa.iter().map(|&k| idle * k).collect();
        v.push(clamp_nonneg(r.solve_left(&b), 0)?);
    }
    let rl = r.r.len();
    while v.len() <= k_max {
        let m = v.len();
        let mut s = vec![T::zero(); n];
        let lo = m.saturating_sub(rl - 1);
        for k in lo..m {
            let prod = r.r[m - k].left_mul(&v[k]);
            for (a, b) in s.iter_mut().zip(prod) {
                *a += b;
            }
        }
        v.push(clamp_nonneg(r.solve_left(&s), m)?);
    }
    Ok(())
}

fn clamp_nonneg<T: Real>(mut x: Vec<T>, index: usize) -> Result<Vec<T>> {
    let scale = x.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    for v in x.iter_mut() {
        if *v < T::zero() {
            if *v < -T::tol(1e-10) * scale.max(T::min_positive_value()) {
                return Err(AoiError::Negative { what: "v vector", index, value: v.as_f64() });
            }
            *v = T::zero();
        }
    }
    Ok(x)
}

/// `d^(m) = lambda^{-1} sum_{k<=m} v^(k) t h^(m-k)` for `m < vhat.len()`.
pub fn delay_coeffs<T: Real>(vhat: &[Vec<T>], exit: &[T], h: &[T], lambda: T) -> Vec<T> {
    let vt: Vec<T> = vhat
        .iter()
        .map(|v| v.iter().zip(exit).map(|(&a, &b)| a * b).sum())
        .collect();
    let n = vt.len();
    let mut d = vec![T::zero(); n];
    for (k, &a) in vt.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (dm, &hh) in d[k..].iter_mut().zip(h) {
            *dm += a * hh;
        }
    }
    let inv = T::one() / lambda;
    for x in d.iter_mut() {
        *x *= inv;
    }
    d
}

/// `E[D] = zeta^{-1} sum_m m d^(m)`.
pub fn mean_delay<T: Real>(d: &[T], zeta: T) -> T {
    d.iter().enumerate().map(|(m, &x)| T::from_count(m) * x).sum::<T>() / zeta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::Distribution;
    use crate::phtype::PhaseType;
    use approx::assert_relative_eq;

    fn mm1(lambda: f64, lambda_bg: f64) -> ModelSpec<f64> {
        let g = PhaseType::exponential(lambda).unwrap();
        let h = Distribution::Exponential { rate: 1.0 };
        ModelSpec::new(g, h.clone(), lambda_bg, h, 1.0).unwrap()
    }

    #[test]
    fn scalar_map_case() {
        let map = build_map(&mm1(0.4, 0.3), 1e-17, 10_000).unwrap();
        assert_relative_eq!(map.c[(0, 0)], -0.7);
        assert_relative_eq!(map.zeta, 0.7);
        let q = iterate_q(&map, 1e-14, 100_000).unwrap().q;
        assert!(q[(0, 0)].abs() < 1e-10);
        assert_eq!(stationary_kappa(&q).unwrap(), vec![1.0]);
    }

    #[test]
    fn kappa_of_symmetric_generator() {
        let q = Mat::from_rows(&[vec![-2.0, 2.0], vec![2.0, -2.0]]).unwrap();
        let k = stationary_kappa(&q).unwrap();
        assert_relative_eq!(k[0], 0.5, max_relative = 1e-14);
        assert_relative_eq!(k[1], 0.5, max_relative = 1e-14);
    }

    #[test]
    fn no_arrivals_gives_zero_r() {
        let map = MapMatrices {
            c: Mat::from_rows(&[vec![-1.0]]).unwrap(),
            zeta: 1.0,
            lambda_bg: 0.0,
            exit: vec![1.0],
            gamma: vec![1.0],
            h: vec![1.0],
            h_bg: vec![],
        };
        let r = r_matrices(&map, &Mat::from_rows(&[vec![0.0]]).unwrap()).unwrap();
        assert!(r.r.iter().all(|m| m[(0, 0)] == 0.0));
        let v = vhat_coeffs(&[1.0], &r, 0.5, 0.0, 4).unwrap();
        assert_relative_eq!(v[0][0], 0.5);
        assert!(v[1..].iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn mm1_sojourn_time() {
        // Poisson(0.5) tagged arrivals, unit-mean exponential work: E[D] = 1/(1 - 0.5).
        let model = mm1(0.5, 0.0);
        let map = build_map(&model, 1e-17, 10_000).unwrap();
        let q = iterate_q(&map, 1e-14, 100_000).unwrap().q;
        let kappa = stationary_kappa(&q).unwrap();
        let r = r_matrices(&map, &q).unwrap();
        let v = vhat_coeffs(&kappa, &r, 0.5, 0.0, 400).unwrap();
        let d = delay_coeffs(&v, &map.exit, &map.h, 0.5);
        let total: f64 = d.iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
        assert_relative_eq!(mean_delay(&d, map.zeta), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn pollaczek_khinchine_delay() {
        // Poisson tagged stream, deterministic unit work, no background.
        let g = PhaseType::exponential(0.6).unwrap();
        let h = Distribution::Deterministic { d: 1.0 };
        let model = ModelSpec::new(g, h.clone(), 0.0, h, 1.0).unwrap();
        let map = build_map(&model, 1e-17, 10_000).unwrap();
        let q = iterate_q(&map, 1e-14, 100_000).unwrap().q;
        let kappa = stationary_kappa(&q).unwrap();
        let r = r_matrices(&map, &q).unwrap();
        let v = vhat_coeffs(&kappa, &r, 0.6, 0.0, 600).unwrap();
        let d = delay_coeffs(&v, &map.exit, &map.h, 0.6);
        let pk = 0.6 * 1.0 / (2.0 * 0.4) + 1.0;
        assert_relative_eq!(mean_delay(&d, map.zeta), pk, max_relative = 1e-9);
    }
}
