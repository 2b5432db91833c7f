//! Service-time and inter-generation-time laws with closed-form moments,
//! Laplace-Stieltjes transforms and Poisson-mixture masses.

use rand::Rng;
use rand_distr::{Distribution as _, Exp, Gamma};

use crate::error::{AoiError, Result};
use crate::scalar::{binom_pmf, fill_from_mode, poisson_pmf, Real};

/// A nonnegative random time.
///
/// `MixedErlang { p, k, rate }` is Erlang(k, rate) with probability `p` and
/// Erlang(k + 1, rate) otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum Distribution<T = f64> {
    Deterministic { d: T },
    Exponential { rate: T },
    Erlang { k: usize, rate: T },
    Hyperexponential { weights: Vec<T>, rates: Vec<T> },
    MixedErlang { p: T, k: usize, rate: T },
}

/// Smallest `k` with `1/k <= scv`, the Erlang order bracketing a squared CV below one.
pub(crate) fn erlang_order_for<T: Real>(scv: T) -> usize {
    let k = (T::one() / scv).ceil().to_usize().unwrap_or(usize::MAX).max(1);
    // Guard against the ceiling landing one too high through rounding.
    if k > 1 && T::one() / T::from_count(k - 1) <= scv {
        k - 1
    } else {
        k
    }
}

/// Two-moment mixing probability of Erlang(k-1) in the Erlang(k-1)/Erlang(k) fit.
pub(crate) fn tijms_p<T: Real>(k: usize, scv: T) -> T {
    let kf = T::from_count(k);
    let disc = (kf * (T::one() + scv) - kf * kf * scv).max(T::zero());
    ((kf * scv - disc.sqrt()) / (T::one() + scv)).max(T::zero())
}

/// Balanced-means hyperexponential branch probability for a squared CV above one.
pub(crate) fn balanced_p1<T: Real>(scv: T) -> T {
    T::c(0.5) * (T::one() + ((scv - T::one()) / (scv + T::one())).sqrt())
}

fn nb_masses<T: Real>(k: usize, a: T, n: usize) -> Vec<T> {
    // C(m+k-1, m) a^k b^m with b = 1 - a.
    let b = T::one() - a;
    if b <= T::zero() {
        let mut out = vec![T::zero(); n];
        if n > 0 {
            out[0] = T::one();
        }
        return out;
    }
    let mode = if k > 1 {
        (T::from_count(k - 1) * b / a).floor().to_usize().unwrap_or(0)
    } else {
        0
    };
    let mode = mode.min(n.saturating_sub(1));
    // C(m+k-1, m) a^k b^m = k/(m+k) * C(m+k, k) a^k b^m.
    let at_mode = T::from_count(k) / T::from_count(mode + k) * binom_pmf(k, mode + k, a);
    fill_from_mode(n, mode, at_mode, |m| b * T::from_count(m + k) / T::from_count(m + 1))
}

fn poisson_masses<T: Real>(lambda: T, n: usize) -> Vec<T> {
    if lambda == T::zero() {
        let mut out = vec![T::zero(); n];
        if n > 0 {
            out[0] = T::one();
        }
        return out;
    }
    let mode = lambda.floor().to_usize().unwrap_or(0).min(n.saturating_sub(1));
    fill_from_mode(n, mode, poisson_pmf(mode, lambda), |m| lambda / T::from_count(m + 1))
}

impl<T: Real> Distribution<T> {
    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(AoiError::InvalidParameter(msg));
        let pos = |x: T| x > T::zero() && x.is_finite();
        match self {
            Distribution::Deterministic { d } => {
                if !(*d >= T::zero() && d.is_finite()) {
                    return bad(format!("deterministic length must be finite and >= 0, got {d}"));
                }
            }
            Distribution::Exponential { rate } => {
                if !pos(*rate) {
                    return bad(format!("exponential rate must be > 0, got {rate}"));
                }
            }
            Distribution::Erlang { k, rate } => {
                if *k == 0 || !pos(*rate) {
                    return bad(format!("Erlang needs k >= 1 and rate > 0, got k={k}, rate={rate}"));
                }
            }
            Distribution::MixedErlang { p, k, rate } => {
                if *k == 0 || !pos(*rate) || !(*p >= T::zero() && *p <= T::one()) {
                    return bad(format!(
                        "mixed Erlang needs p in [0,1], k >= 1, rate > 0, got p={p}, k={k}, rate={rate}"
                    ));
                }
            }
            Distribution::Hyperexponential { weights, rates } => {
                if weights.is_empty() || weights.len() != rates.len() {
                    return bad("hyperexponential needs equally long, nonempty weights and rates".into());
                }
                if weights.iter().any(|w| !(*w >= T::zero() && *w <= T::one())) || rates.iter().any(|r| !pos(*r)) {
                    return bad("hyperexponential weights must lie in [0,1] and rates be > 0".into());
                }
                let s: T = weights.iter().copied().sum();
                if (s - T::one()).abs() > T::tol(1e-12) {
                    return bad(format!("hyperexponential weights sum to {s}, not 1"));
                }
            }
        }
        Ok(())
    }

    /// First and second raw moments.
    pub fn moments(&self) -> (T, T) {
        let two = T::c(2.0);
        match self {
            Distribution::Deterministic { d } => (*d, *d * *d),
            Distribution::Exponential { rate } => (T::one() / *rate, two / (*rate * *rate)),
            Distribution::Erlang { k, rate } => {
                let kf = T::from_count(*k);
                (kf / *rate, kf * (kf + T::one()) / (*rate * *rate))
            }
            Distribution::MixedErlang { p, k, rate } => {
                let kf = T::from_count(*k);
                let k1 = kf + T::one();
                let r2 = *rate * *rate;
                let m1 = *p * kf / *rate + (T::one() - *p) * k1 / *rate;
                let m2 = *p * kf * k1 / r2 + (T::one() - *p) * k1 * (k1 + T::one()) / r2;
                (m1, m2)
            }
            Distribution::Hyperexponential { weights, rates } => weights
                .iter()
                .zip(rates)
                .fold((T::zero(), T::zero()), |(a, b), (&w, &r)| (a + w / r, b + two * w / (r * r))),
        }
    }

    pub fn mean(&self) -> T {
        self.moments().0
    }

    pub fn variance(&self) -> T {
        let (m1, m2) = self.moments();
        (m2 - m1 * m1).max(T::zero())
    }

    /// Coefficient of variation.
    pub fn cv(&self) -> T {
        let (m1, _) = self.moments();
        if m1 == T::zero() {
            T::zero()
        } else {
            self.variance().sqrt() / m1
        }
    }

    /// `E[exp(-s X)]`.
    pub fn lst(&self, s: T) -> Result<T> {
        if !(s >= T::zero()) {
            return Err(AoiError::InvalidParameter(format!("transform argument must be >= 0, got {s}")));
        }
        Ok(self.lst_unchecked(s))
    }

    pub(crate) fn lst_unchecked(&self, s: T) -> T {
        let geo = |r: T| r / (r + s);
        match self {
            Distribution::Deterministic { d } => (-s * *d).exp(),
            Distribution::Exponential { rate } => geo(*rate),
            Distribution::Erlang { k, rate } => geo(*rate).powi(*k as i32),
            Distribution::MixedErlang { p, k, rate } => {
                let a = geo(*rate).powi(*k as i32);
                *p * a + (T::one() - *p) * a * geo(*rate)
            }
            Distribution::Hyperexponential { weights, rates } => {
                weights.iter().zip(rates).map(|(&w, &r)| w * geo(r)).sum()
            }
        }
    }

    /// `P(N = m)` where `N` counts Poisson(eta) events during one draw of this law.
    pub fn poisson_mixture_mass(&self, eta: T, m: usize) -> Result<T> {
        Ok(self.poisson_mixture_masses(eta, m + 1)?[m])
    }

    /// The first `n` Poisson-mixture masses at rate `eta`.
    pub fn poisson_mixture_masses(&self, eta: T, n: usize) -> Result<Vec<T>> {
        if !(eta > T::zero()) {
            return Err(AoiError::InvalidParameter(format!("Poisson rate must be > 0, got {eta}")));
        }
        Ok(match self {
            Distribution::Deterministic { d } => poisson_masses(eta * *d, n),
            Distribution::Exponential { rate } => nb_masses(1, *rate / (*rate + eta), n),
            Distribution::Erlang { k, rate } => nb_masses(*k, *rate / (*rate + eta), n),
            Distribution::MixedErlang { p, k, rate } => {
                let a = *rate / (*rate + eta);
                let lo = nb_masses(*k, a, n);
                let hi = nb_masses(*k + 1, a, n);
                lo.iter().zip(&hi).map(|(&x, &y)| *p * x + (T::one() - *p) * y).collect()
            }
            Distribution::Hyperexponential { weights, rates } => {
                let mut out = vec![T::zero(); n];
                for (&w, &r) in weights.iter().zip(rates) {
                    for (o, v) in out.iter_mut().zip(nb_masses(1, r / (r + eta), n)) {
                        *o += w * v;
                    }
                }
                out
            }
        })
    }

    /// Masses up to the first index where the remaining tail mass falls below
    /// `eps_tail`, capped at `cap` entries. Tails are back-sums over a window
    /// at least twice as long as the kept part, so they stay accurate far
    /// below rounding level.
    pub fn truncated_masses(&self, eta: T, eps_tail: T, cap: usize) -> Result<Vec<T>> {
        let mut n = 64usize.min(cap.max(1));
        loop {
            let h = self.poisson_mixture_masses(eta, n)?;
            let mut tails = vec![T::zero(); n];
            let mut acc = T::zero();
            for m in (0..n).rev() {
                tails[m] = acc;
                acc += h[m];
            }
            let mean_index = (self.mean() * eta).to_usize().unwrap_or(usize::MAX);
            let hit = (mean_index.min(n)..=n / 2).find(|&m| m < n && tails[m] < eps_tail);
            if let Some(m) = hit {
                let mut out = h;
                out.truncate(m + 1);
                return Ok(out);
            }
            if n >= cap {
                return Ok(h);
            }
            n = (2 * n).min(cap);
        }
    }

    /// The law with mean `mean` and coefficient of variation `cv` from the
    /// two-moment family: deterministic, Erlang, mixed Erlang, exponential
    /// or balanced-means hyperexponential.
    pub fn from_mean_cv(mean: T, cv: T) -> Result<Self> {
        if !(mean > T::zero() && mean.is_finite()) || !(cv >= T::zero() && cv.is_finite()) {
            return Err(AoiError::InvalidParameter(format!(
                "need mean > 0 and cv >= 0, got mean={mean}, cv={cv}"
            )));
        }
        let scv = cv * cv;
        let near = |a: T, b: T| (a - b).abs() <= T::tol(1e-12) * b.max(T::one());
        if cv == T::zero() {
            return Ok(Distribution::Deterministic { d: mean });
        }
        if near(scv, T::one()) {
            return Ok(Distribution::Exponential { rate: T::one() / mean });
        }
        if scv < T::one() {
            let k = erlang_order_for(scv);
            if near(T::one() / T::from_count(k), scv) {
                return Ok(Distribution::Erlang { k, rate: T::from_count(k) / mean });
            }
            let p = tijms_p(k, scv);
            return Ok(Distribution::MixedErlang {
                p,
                k: k - 1,
                rate: (T::from_count(k) - p) / mean,
            });
        }
        let p1 = balanced_p1(scv);
        Ok(Distribution::Hyperexponential {
            weights: vec![p1, T::one() - p1],
            rates: vec![T::c(2.0) * p1 / mean, T::c(2.0) * (T::one() - p1) / mean],
        })
    }

    /// Whether the law is new-better-than-used-in-expectation, decided by family.
    pub fn is_nbue(&self) -> bool {
        match self {
            Distribution::Hyperexponential { weights, rates } => {
                let active: Vec<T> = weights.iter().zip(rates).filter(|(w, _)| **w > T::zero()).map(|(_, &r)| r).collect();
                active.windows(2).all(|w| w[0] == w[1])
            }
            _ => true,
        }
    }

    /// Same family rescaled to a new mean.
    pub fn with_mean(&self, mean: T) -> Self {
        let f = self.mean() / mean;
        match self {
            Distribution::Deterministic { .. } => Distribution::Deterministic { d: mean },
            Distribution::Exponential { rate } => Distribution::Exponential { rate: *rate * f },
            Distribution::Erlang { k, rate } => Distribution::Erlang { k: *k, rate: *rate * f },
            Distribution::MixedErlang { p, k, rate } => Distribution::MixedErlang { p: *p, k: *k, rate: *rate * f },
            Distribution::Hyperexponential { weights, rates } => Distribution::Hyperexponential {
                weights: weights.clone(),
                rates: rates.iter().map(|&r| r * f).collect(),
            },
        }
    }
}

impl Distribution<f64> {
    /// Draws one variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Deterministic { d } => *d,
            Distribution::Exponential { rate } => Exp::new(*rate).expect("validated rate").sample(rng),
            Distribution::Erlang { k, rate } => erlang(*k, *rate, rng),
            Distribution::MixedErlang { p, k, rate } => {
                let k = if rng.random::<f64>() < *p { *k } else { *k + 1 };
                erlang(k, *rate, rng)
            }
            Distribution::Hyperexponential { weights, rates } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = rates.len() - 1;
                for (i, w) in weights.iter().enumerate() {
                    acc += w;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Exp::new(rates[pick]).expect("validated rate").sample(rng)
            }
        }
    }
}

fn erlang<R: Rng + ?Sized>(k: usize, rate: f64, rng: &mut R) -> f64 {
    if k == 1 {
        Exp::new(rate).expect("validated rate").sample(rng)
    } else {
        Gamma::new(k as f64, 1.0 / rate).expect("validated shape").sample(rng)
    }
}
