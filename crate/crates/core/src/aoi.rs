//! Mean-AoI assembly: powers of `b(z)`, the `q_k` recursion and the final
//! series, with adaptive series length and a residual gate on the `q_k` tail.

use crate::bounds::{general_bounds_daley, nbue_bounds};
use crate::busy::{busy_coeffs, BusyCoeffs};
use crate::error::{AoiError, Result};
use crate::model::ModelSpec;
use crate::phtype::UNIFORMIZATION_CAP;
use crate::scalar::Real;
use crate::series::{mul_trunc, TruncMul};
use crate::workload::{build_map, delay_coeffs, extend_vhat, iterate_q, mean_delay, r_matrices, stationary_kappa};

/// Cutoffs and tolerances of every truncated series and iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationPolicy {
    /// Stop the `c_k` series once `1 - sum c_k / theta` is below this.
    pub eps_ck_mass: f64,
    /// Drop Poisson-mixture masses once their tail is below this.
    pub eps_dh_tail: f64,
    /// Gate on `|theta q_K - limit| / (limit + 1)`.
    pub q_residual_tol: f64,
    /// Required `1 - sum_m d^(m)` at the final series length.
    pub d_tail_tol: f64,
    pub k_init: usize,
    pub k_cap: usize,
    /// Cap on the number of `b(z)` powers in the `q_k` correction sum.
    pub l_cap: usize,
    /// Stop the `Q` iteration when the entrywise change is below `q_tol * zeta`.
    pub q_tol: f64,
    pub q_iter_cap: usize,
    pub kendall_tol: f64,
    /// Relative stop rule of the busy-period customer sum.
    pub b_tail: f64,
    /// Absolute negligibility floor of the busy-period customer sum.
    pub b_floor: f64,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        TruncationPolicy {
            eps_ck_mass: 1e-14,
            eps_dh_tail: 1e-17,
            q_residual_tol: 1e-6,
            d_tail_tol: 1e-8,
            k_init: 256,
            k_cap: 1 << 15,
            l_cap: 1 << 16,
            q_tol: 1e-12,
            q_iter_cap: 2_000_000,
            kendall_tol: 1e-14,
            b_tail: 1e-17,
            b_floor: 1e-32,
        }
    }
}

impl TruncationPolicy {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("eps_ck_mass", self.eps_ck_mass),
            ("eps_dh_tail", self.eps_dh_tail),
            ("q_residual_tol", self.q_residual_tol),
            ("d_tail_tol", self.d_tail_tol),
            ("q_tol", self.q_tol),
            ("kendall_tol", self.kendall_tol),
            ("b_tail", self.b_tail),
            ("b_floor", self.b_floor),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(AoiError::InvalidParameter(format!("policy {name} must lie in (0,1), got {v}")));
            }
        }
        if self.k_init == 0 || self.k_init > self.k_cap {
            return Err(AoiError::InvalidParameter(format!(
                "policy needs 0 < k_init <= k_cap, got {} and {}",
                self.k_init, self.k_cap
            )));
        }
        if self.l_cap == 0 || self.q_iter_cap == 0 {
            return Err(AoiError::InvalidParameter("policy caps must be positive".into()));
        }
        Ok(())
    }
}

/// Analytic mean AoI with its diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct AoiReport<T = f64> {
    pub mean_aoi: T,
    pub mean_delay: T,
    pub lower_bound: T,
    /// NBUE upper bound, present when `G` is NBUE.
    pub upper_bound: Option<T>,
    /// Upper bound from Daley's inequality; needs no NBUE assumption.
    pub daley_upper_bound: T,
    /// `theta q_K - lambda_bg E[Hbg^2] / (2 (1 - rho_bg) mu^2)`.
    pub q_residual: T,
    pub q_limit: T,
    pub series_length_used: usize,
    pub nbue_applicable: bool,
    /// Residual, delay-tail and monotonicity checks all passed.
    pub gate_passed: bool,
    pub d_tail: T,
    pub q_monotone: bool,
    pub q_iterations: usize,
    pub b_residual: T,
}

/// Table of `b_l^(k)`, the coefficients of `b(z)^l`, for `l <= l_max`, `k <= k_max`.
pub fn b_ell_table<T: Real>(b: &BusyCoeffs<T>, k_max: usize, l_max: usize) -> Vec<Vec<T>> {
    let n = k_max + 1;
    let mut rows = Vec::with_capacity(l_max + 1);
    let mut row = vec![T::zero(); n];
    row[0] = T::one();
    rows.push(row);
    for l in 1..=l_max {
        let next = mul_trunc(&rows[l - 1], &b.b, n);
        rows.push(next);
    }
    rows
}

/// `sum_l t_l b(z)^l` modulo `z^n`, by Paterson-Stockmeyer. All terms are
/// nonnegative so no cancellation occurs.
fn compose<T: Real>(t: &[T], b: &[T], n: usize) -> Vec<T> {
    let len = t.len();
    if len == 0 {
        return vec![T::zero(); n];
    }
    let s = ((len as f64).sqrt().ceil() as usize).max(1);
    let mul = TruncMul::new(n);
    let base = mul.operand(b);
    let mut pows: Vec<Vec<T>> = Vec::with_capacity(s + 1);
    let mut one = vec![T::zero(); n];
    one[0] = T::one();
    pows.push(one);
    for i in 1..=s {
        let next = mul.mul(&pows[i - 1], &base);
        pows.push(next);
    }
    let giant = mul.operand(&pows[s]);
    let blocks = len.div_ceil(s);
    let mut acc = vec![T::zero(); n];
    for blk in (0..blocks).rev() {
        if blk + 1 < blocks {
            acc = mul.mul(&acc, &giant);
        }
        for (i, pw) in pows.iter().take(s).enumerate() {
            let l = blk * s + i;
            if l < len && t[l] != T::zero() {
                for (a, &p) in acc.iter_mut().zip(pw) {
                    *a += t[l] * p;
                }
            }
        }
    }
    acc
}

/// The `q_k` series from the delay pmf `d`, the table `b_l^(k)` and the
/// renewal coefficients `u`, using
/// `sum_l b_l^(k) S_l = u_k - sum_l b_l^(k) (1 - S_l)`.
pub fn qk_series<T: Real>(d: &[T], b_ell: &[Vec<T>], u: &[T], e_d: T, theta: T, zeta: T, rho_bg: T) -> Vec<T> {
    let tails = tail_masses(d);
    let k_len = u.len();
    let mut corr = vec![T::zero(); k_len];
    for (row, &t) in b_ell.iter().zip(&tails) {
        for (c, &v) in corr.iter_mut().zip(row) {
            *c += v * t;
        }
    }
    q_from_correction(&corr, u, e_d, theta, zeta, rho_bg)
}

fn q_from_correction<T: Real>(corr: &[T], u: &[T], e_d: T, theta: T, zeta: T, rho_bg: T) -> Vec<T> {
    let drift = (T::one() - rho_bg) / (theta * theta);
    let scale = T::one() / (theta * zeta);
    let mut q = Vec::with_capacity(u.len());
    let mut prev = e_d / theta;
    for (&uk, &ck) in u.iter().zip(corr) {
        let next = prev - drift + scale * (uk - ck);
        q.push(next);
        prev = next;
    }
    q
}

/// `1 - S_l` as back-sums of the computed pmf. The rounding-level deficit
/// `1 - sum d` is left out: spreading it over every entry would add it `K`
/// times to the `q_k` drift.
fn tail_masses<T: Real>(d: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); d.len()];
    let mut acc = T::zero();
    for l in (0..d.len()).rev() {
        out[l] = acc;
        acc += d[l];
    }
    out
}

/// Computes the mean AoI of `model`, doubling the shared series length until
/// the delay tail, the `q_k` monotonicity and the residual gate all pass or
/// `k_cap` is reached. A run that exhausts the cap is returned with
/// `gate_passed = false`.
pub fn mean_aoi<T: Real>(model: &ModelSpec<T>, policy: &TruncationPolicy) -> Result<AoiReport<T>> {
    policy.validate()?;
    model.validate()?;
    let g = &model.g;
    let theta = g.uniformization_rate();
    let eg = g.mean()?;
    let lambda = T::one() / eg;
    let rho = model.rho()?;
    let rho_bg = model.rho_bg();
    let moments = model.moment_set()?;
    let queue = moments.queue;
    let limit = queue.background_wait();

    let c = g.uniformization_coeffs(T::tol(policy.eps_ck_mass), UNIFORMIZATION_CAP)?;
    let map = build_map(model, T::tol(policy.eps_dh_tail), policy.k_cap.max(1 << 16))?;
    let zeta = map.zeta;
    let qsol = iterate_q(&map, T::tol(policy.q_tol) * zeta, policy.q_iter_cap)?;
    let kappa = stationary_kappa(&qsol.q)?;
    let rm = r_matrices(&map, &qsol.q)?;

    let gate_tol = T::tol(policy.q_residual_tol) * (limit + T::one());
    let d_tol = T::tol(policy.d_tail_tol);
    let mut k = policy.k_init.max(c.len() + 1).min(policy.k_cap.max(c.len() + 1));
    let mut vhat = Vec::new();
    loop {
        extend_vhat(&mut vhat, &kappa, &rm, rho, rho_bg, k)?;
        let d = delay_coeffs(&vhat[..=k], &map.exit, &map.h, lambda);
        let d_sum: T = d.iter().copied().sum();
        let d_tail = T::one() - d_sum;
        let e_d = mean_delay(&d, zeta);
        let busy = busy_coeffs(theta, model.lambda_bg, &model.h_bg, model.mu, k, T::tol(policy.b_tail), T::c(policy.b_floor))?;
        let mut tails = tail_masses(&d);
        let negligible = T::min_positive_value() / T::epsilon();
        let l_len = tails.iter().position(|&t| t <= negligible).unwrap_or(tails.len()).min(policy.l_cap);
        tails.truncate(l_len);
        let corr = compose(&tails, &busy.b, k + 1);
        let q = q_from_correction(&corr, &busy.renewal, e_d, theta, zeta, rho_bg);

        let slack = T::tol(1e-9) * (T::one() + q[0].abs());
        let q_monotone = q.windows(2).all(|w| w[1] <= w[0] + slack) && q.iter().all(|&v| v >= -T::tol(1e-10));
        let residual = theta * q[k] - limit;
        let passed = residual.abs() < gate_tol && d_tail.abs() < d_tol && q_monotone;
        if passed || k >= policy.k_cap {
            let mut series = T::zero();
            for (j, &cj) in c.iter().enumerate() {
                if cj == T::zero() {
                    continue;
                }
                let kf = T::from_count(j + 1);
                series += cj * (kf * (kf + T::one()) / (T::c(2.0) * theta * theta) + kf * q[j + 1]);
            }
            let mean = queue.eh / queue.mu + series / (theta * eg);
            let nbue = g.is_nbue();
            let (lower, upper) = nbue_bounds(&moments)?;
            let (_, daley) = general_bounds_daley(&moments, model.h.variance(), (moments.eg2 - eg * eg).max(T::zero()))?;
            return Ok(AoiReport {
                mean_aoi: mean,
                mean_delay: e_d,
                lower_bound: lower,
                upper_bound: nbue.then_some(upper),
                daley_upper_bound: daley,
                q_residual: residual,
                q_limit: limit,
                series_length_used: k,
                nbue_applicable: nbue,
                gate_passed: passed,
                d_tail,
                q_monotone,
                q_iterations: qsol.iterations,
                b_residual: busy.residual,
            });
        }
        k = (2 * k).min(policy.k_cap);
    }
}

/// The `q_k` series at a fixed series length, for inspection and tests.
pub fn q_series<T: Real>(model: &ModelSpec<T>, policy: &TruncationPolicy, k: usize) -> Result<Vec<T>> {
    let theta = model.g.uniformization_rate();
    let lambda = model.lambda()?;
    let map = build_map(model, T::tol(policy.eps_dh_tail), policy.k_cap.max(1 << 16))?;
    let qsol = iterate_q(&map, T::tol(policy.q_tol) * map.zeta, policy.q_iter_cap)?;
    let kappa = stationary_kappa(&qsol.q)?;
    let rm = r_matrices(&map, &qsol.q)?;
    let mut vhat = Vec::new();
    extend_vhat(&mut vhat, &kappa, &rm, model.rho()?, model.rho_bg(), k)?;
    let d = delay_coeffs(&vhat, &map.exit, &map.h, lambda);
    let busy = busy_coeffs(theta, model.lambda_bg, &model.h_bg, model.mu, k, T::tol(policy.b_tail), T::c(policy.b_floor))?;
    let tails = tail_masses(&d);
    let corr = compose(&tails, &busy.b, k + 1);
    Ok(q_from_correction(&corr, &busy.renewal, mean_delay(&d, map.zeta), theta, map.zeta, model.rho_bg()))
}
