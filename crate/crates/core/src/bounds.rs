//! Closed-form mean-AoI bounds, the bound-optimal generation rate, and a
//! golden-section search for the exact optimum.

use crate::aoi::{mean_aoi, TruncationPolicy};
use crate::error::{AoiError, Result};
use crate::model::ModelSpec;
use crate::scalar::Real;

/// Moments that do not depend on the tagged generation process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueueMoments<T = f64> {
    pub mu: T,
    pub eh: T,
    pub eh2: T,
    pub lambda_bg: T,
    pub ehbg: T,
    pub ehbg2: T,
}

/// All moments entering the bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentSet<T = f64> {
    pub lambda: T,
    pub eg: T,
    pub eg2: T,
    pub queue: QueueMoments<T>,
}

impl<T: Real> QueueMoments<T> {
    pub fn rho_bg(&self) -> T {
        self.lambda_bg * self.ehbg / self.mu
    }

    /// `Omega = sqrt(E[H^2] + (E[H] E[Hbg^2] - E[H^2] E[Hbg]) lambda_bg / mu)`.
    pub fn omega(&self) -> Result<T> {
        let o2 = self.eh2 + (self.eh * self.ehbg2 - self.eh2 * self.ehbg) * self.lambda_bg / self.mu;
        if !(o2 > T::zero()) {
            return Err(AoiError::InvalidParameter(format!("Omega^2 = {o2} must be positive")));
        }
        Ok(o2.sqrt())
    }

    /// Background waiting-time term `lambda_bg E[Hbg^2] / (2 (1 - rho_bg) mu^2)`.
    pub fn background_wait(&self) -> T {
        self.lambda_bg * self.ehbg2 / (T::c(2.0) * (T::one() - self.rho_bg()) * self.mu * self.mu)
    }

    /// Largest stable tagged rate `(mu - lambda_bg E[Hbg]) / E[H]`.
    pub fn capacity(&self) -> T {
        (self.mu - self.lambda_bg * self.ehbg) / self.eh
    }
}

impl<T: Real> MomentSet<T> {
    pub fn rho(&self) -> T {
        self.lambda * self.queue.eh / self.queue.mu
    }

    pub fn rho_bg(&self) -> T {
        self.queue.rho_bg()
    }

    pub fn scv_g(&self) -> T {
        (self.eg2 / (self.eg * self.eg) - T::one()).max(T::zero())
    }

    /// `sigma_G = sqrt(s_G^2 + 1)`.
    pub fn sigma_g(&self) -> T {
        (self.scv_g() + T::one()).sqrt()
    }

    fn check_stable(&self) -> Result<()> {
        if !(self.rho() + self.rho_bg() < T::one()) {
            return Err(AoiError::Unstable { rho: self.rho().as_f64(), rho_bg: self.rho_bg().as_f64() });
        }
        Ok(())
    }

    /// Lower bound; it holds for any inter-generation law.
    pub fn lower_bound(&self) -> Result<T> {
        self.check_stable()?;
        let q = &self.queue;
        Ok(q.background_wait() + q.eh / q.mu + self.eg2 / (T::c(2.0) * self.eg))
    }
}

/// Lower and upper bound on the mean AoI, valid when `G` is NBUE.
pub fn nbue_bounds<T: Real>(m: &MomentSet<T>) -> Result<(T, T)> {
    let lower = m.lower_bound()?;
    let q = &m.queue;
    let two = T::c(2.0);
    let upper = (m.lambda * q.eh2 + q.lambda_bg * q.ehbg2) / (two * (T::one() - m.rho() - m.rho_bg()) * q.mu * q.mu)
        + q.eh / q.mu
        + m.eg2 / (two * m.eg);
    Ok((lower, upper))
}

/// Lower bound and a general upper bound that replaces the exact waiting
/// time of the tagged-only queue by Daley's inequality.
pub fn general_bounds_daley<T: Real>(m: &MomentSet<T>, var_h: T, var_g: T) -> Result<(T, T)> {
    let lower = m.lower_bound()?;
    let q = &m.queue;
    let one = T::one();
    let two = T::c(2.0);
    let rho_bg = m.rho_bg();
    let rho_star = m.rho() / (one - rho_bg);
    if !(rho_star < one) {
        return Err(AoiError::Unstable { rho: m.rho().as_f64(), rho_bg: rho_bg.as_f64() });
    }
    let mu2 = q.mu * q.mu;
    let free = one - rho_bg;
    // Variance of a tagged service stretched by the background busy periods it
    // triggers: Var[H]/(mu^2 (1-rho_bg)^2) + (E[H]/mu) lambda_bg E[Hbg^2]/(mu^2 (1-rho_bg)^3).
    let var_hstar = var_h / (mu2 * free * free) + (q.eh / q.mu) * q.lambda_bg * q.ehbg2 / (mu2 * free * free * free);
    let w_bar = (var_hstar + rho_star * (two - rho_star) * var_g) / (two * (one - rho_star) * m.eg);
    let upper = q.background_wait() + q.eh / q.mu + m.eg2 / (two * m.eg) + free * w_bar;
    Ok((lower, upper))
}

/// Generation rate minimizing the NBUE upper bound:
/// `mu (1 - rho_bg) sigma_G / (Omega + E[H] sigma_G)`.
pub fn optimal_rate<T: Real>(q: &QueueMoments<T>, s_g: T) -> Result<T> {
    if !(q.rho_bg() < T::one()) {
        return Err(AoiError::Unstable { rho: 0.0, rho_bg: q.rho_bg().as_f64() });
    }
    let sigma = (s_g * s_g + T::one()).sqrt();
    let lambda = q.mu * (T::one() - q.rho_bg()) * sigma / (q.omega()? + q.eh * sigma);
    debug_assert!(lambda * q.eh / q.mu + q.rho_bg() < T::one());
    Ok(lambda)
}

/// NBUE upper bound at the bound-optimal rate, in closed form.
pub fn optimal_bound_value<T: Real>(q: &QueueMoments<T>, s_g: T) -> Result<T> {
    let two = T::c(2.0);
    let sigma = (s_g * s_g + T::one()).sqrt();
    let free = q.mu - q.lambda_bg * q.ehbg;
    if !(free > T::zero()) {
        return Err(AoiError::Unstable { rho: 0.0, rho_bg: q.rho_bg().as_f64() });
    }
    let omega = q.omega()?;
    Ok((two * q.mu * omega * sigma + two * free * q.eh + q.lambda_bg * q.ehbg2 + q.mu * q.eh * sigma * sigma)
        / (two * q.mu * free))
}

/// NBUE upper bound as a function of the generation rate, for fixed `s_G`.
pub fn upper_bound_at<T: Real>(q: &QueueMoments<T>, s_g: T, lambda: T) -> Result<T> {
    let eg = T::one() / lambda;
    let m = MomentSet { lambda, eg, eg2: (s_g * s_g + T::one()) * eg * eg, queue: *q };
    Ok(nbue_bounds(&m)?.1)
}

/// Result of a golden-section search over the generation rate.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum<T = f64> {
    pub lambda: T,
    pub value: T,
    pub evaluations: usize,
}

/// Golden-section search of `f` over `[lo, hi]` in log-space, to absolute
/// tolerance `tol` on the argument. Fails when the minimizer sits at an edge.
pub fn golden_section_log<T: Real>(
    mut f: impl FnMut(T) -> Result<T>,
    lo: T,
    hi: T,
    tol: T,
) -> Result<Optimum<T>> {
    if !(lo > T::zero() && hi > lo) {
        return Err(AoiError::InvalidParameter(format!("bad bracket [{lo}, {hi}]")));
    }
    let inv_phi = (T::c(5.0).sqrt() - T::one()) / T::c(2.0);
    let (mut a, mut b) = (lo.ln(), hi.ln());
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1.exp())?;
    let mut f2 = f(x2.exp())?;
    let mut evaluations = 2;
    let (mut touched_lo, mut touched_hi) = (true, true);
    while b.exp() - a.exp() > tol {
        if f1 <= f2 {
            b = x2;
            touched_hi = false;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1.exp())?;
        } else {
            a = x1;
            touched_lo = false;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2.exp())?;
        }
        evaluations += 1;
    }
    if touched_lo || touched_hi {
        return Err(AoiError::NoInteriorMinimum { lo: lo.as_f64(), hi: hi.as_f64() });
    }
    let (x, v) = if f1 <= f2 { (x1, f1) } else { (x2, f2) };
    Ok(Optimum { lambda: x.exp(), value: v, evaluations })
}

/// Minimizes the exact mean AoI over the generation rate. `family` maps a
/// rate to its model; the search runs in log-space over `bracket` to absolute
/// tolerance `tol`. Each evaluation starts at the series length the previous
/// one ended with.
pub fn minimize_mean_aoi<T: Real>(
    family: impl Fn(T) -> Result<ModelSpec<T>>,
    policy: &TruncationPolicy,
    bracket: (T, T),
    tol: T,
) -> Result<Optimum<T>> {
    let mut pol = policy.clone();
    golden_section_log(
        |lambda| {
            let rep = mean_aoi(&family(lambda)?, &pol)?;
            pol.k_init = rep.series_length_used.clamp(policy.k_init, policy.k_cap);
            Ok(rep.mean_aoi)
        },
        bracket.0,
        bracket.1,
        tol,
    )
}
