//! Phase-type inter-generation times `(gamma, Gamma)`.

use rand::Rng;

use crate::dist::{balanced_p1, erlang_order_for, tijms_p};
use crate::error::{AoiError, Result};
use crate::linalg::{Lu, Mat};
use crate::scalar::{poisson_pmf, Real};

/// Absorption time of a CTMC with initial law `gamma` and subgenerator `generator`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseType<T = f64> {
    gamma: Vec<T>,
    generator: Mat<T>,
}

/// Hard cap on the number of uniformization coefficients.
pub const UNIFORMIZATION_CAP: usize = 1 << 20;

impl<T: Real> PhaseType<T> {
    /// Validates and builds a representation.
    pub fn new(gamma: Vec<T>, generator: Mat<T>) -> Result<Self> {
        let ph = PhaseType { gamma, generator };
        ph.validate()?;
        Ok(ph)
    }

    pub fn from_rows(gamma: Vec<T>, rows: &[Vec<T>]) -> Result<Self> {
        Self::new(gamma, Mat::from_rows(rows)?)
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AoiError::InvalidParameter(m));
        let m = self.gamma.len();
        if m == 0 || self.generator.dim() != m {
            return bad(format!(
                "initial vector has {m} phases but the subgenerator is {0}x{0}",
                self.generator.dim()
            ));
        }
        let tol = T::tol(1e-12);
        if self.gamma.iter().any(|g| !(*g >= T::zero())) {
            return bad("initial vector must be nonnegative".into());
        }
        let s: T = self.gamma.iter().copied().sum();
        if (s - T::one()).abs() > tol {
            return bad(format!("initial vector sums to {s}, not 1"));
        }
        let mut any_exit = false;
        for i in 0..m {
            for j in 0..m {
                let v = self.generator[(i, j)];
                if !v.is_finite() || (i == j && !(v < T::zero())) || (i != j && v < T::zero()) {
                    return bad(format!("subgenerator entry ({i},{j}) = {v} has the wrong sign"));
                }
            }
            let rs: T = self.generator.row(i).iter().copied().sum();
            let scale = self.generator[(i, i)].abs();
            if rs > tol * scale {
                return bad(format!("subgenerator row {i} sums to {rs} > 0"));
            }
            if rs < -tol * scale {
                any_exit = true;
            }
        }
        if !any_exit {
            return bad("subgenerator has no exit rate; absorption never happens".into());
        }
        if !self.is_irreducible() {
            return bad("Gamma + (-Gamma e) gamma is not irreducible".into());
        }
        Ok(())
    }

    /// Reachability on the nonzero pattern of `Gamma + t gamma`.
    fn is_irreducible(&self) -> bool {
        let m = self.order();
        let t = self.exit_vector();
        let tol = T::tol(1e-12);
        let edge = |i: usize, j: usize| {
            i != j && (self.generator[(i, j)] > T::zero() || (t[i] > tol * self.generator[(i, i)].abs() && self.gamma[j] > T::zero()))
        };
        let reach = |forward: bool| {
            let mut seen = vec![false; m];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(i) = stack.pop() {
                for j in 0..m {
                    let e = if forward { edge(i, j) } else { edge(j, i) };
                    if e && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
            seen.into_iter().all(|s| s)
        };
        reach(true) && reach(false)
    }

    pub fn exponential(rate: T) -> Result<Self> {
        Self::from_rows(vec![T::one()], &[vec![-rate]])
    }

    /// Erlang(k, rate) as a chain of `k` phases.
    pub fn erlang(k: usize, rate: T) -> Result<Self> {
        Self::mixed_erlang_chain(k, T::zero(), rate)
    }

    /// `k`-phase chain entered at phase 0 w.p. `1 - p` and at phase 1 w.p. `p`,
    /// i.e. Erlang(k-1) w.p. `p` and Erlang(k) otherwise.
    fn mixed_erlang_chain(k: usize, p: T, rate: T) -> Result<Self> {
        if k == 0 || !(rate > T::zero()) {
            return Err(AoiError::InvalidParameter(format!("Erlang chain needs k >= 1 and rate > 0, got k={k}, rate={rate}")));
        }
        let mut g = Mat::zeros(k);
        for i in 0..k {
            g[(i, i)] = -rate;
            if i + 1 < k {
                g[(i, i + 1)] = rate;
            }
        }
        let mut gamma = vec![T::zero(); k];
        gamma[0] = T::one() - p;
        if k > 1 {
            gamma[1] = p;
        }
        Self::new(gamma, g)
    }

    pub fn hyperexponential(weights: &[T], rates: &[T]) -> Result<Self> {
        if weights.len() != rates.len() || weights.is_empty() {
            return Err(AoiError::InvalidParameter("weights and rates differ in length".into()));
        }
        let mut g = Mat::zeros(rates.len());
        for (i, &r) in rates.iter().enumerate() {
            g[(i, i)] = -r;
        }
        Self::new(weights.to_vec(), g)
    }

    /// Two-moment fit: mixed Erlang for `cv < 1`, exponential at `cv = 1`,
    /// balanced-means hyperexponential for `cv > 1`.
    pub fn fit_two_moment(mean: T, cv: T) -> Result<Self> {
        if !(mean > T::zero() && mean.is_finite()) || !(cv > T::zero() && cv.is_finite()) {
            return Err(AoiError::InvalidParameter(format!(
                "two-moment fit needs mean > 0 and cv > 0, got mean={mean}, cv={cv}"
            )));
        }
        let scv = cv * cv;
        if (scv - T::one()).abs() <= T::tol(1e-12) {
            return Self::exponential(T::one() / mean);
        }
        if scv < T::one() {
            let k = erlang_order_for(scv).max(2);
            let p = tijms_p(k, scv);
            let nu = (T::from_count(k) - p) / mean;
            return Self::mixed_erlang_chain(k, p, nu);
        }
        let p1 = balanced_p1(scv);
        let two = T::c(2.0);
        Self::hyperexponential(&[p1, T::one() - p1], &[two * p1 / mean, two * (T::one() - p1) / mean])
    }

    /// The two-moment law of the given CV, with a `k0`-phase Erlang standing in for `cv = 0`.
    pub fn from_mean_cv(mean: T, cv: T, k0: usize) -> Result<Self> {
        if cv == T::zero() {
            if !(mean > T::zero() && mean.is_finite()) {
                return Err(AoiError::InvalidParameter(format!("mean must be > 0, got {mean}")));
            }
            return Self::erlang(k0, T::from_count(k0) / mean);
        }
        Self::fit_two_moment(mean, cv)
    }

    pub fn order(&self) -> usize {
        self.gamma.len()
    }

    pub fn gamma(&self) -> &[T] {
        &self.gamma
    }

    pub fn generator(&self) -> &Mat<T> {
        &self.generator
    }

    /// `-Gamma e`.
    pub fn exit_vector(&self) -> Vec<T> {
        self.generator.row_sums().into_iter().map(|s| (-s).max(T::zero())).collect()
    }

    /// `gamma (-Gamma)^{-1} e`.
    pub fn mean(&self) -> Result<T> {
        let y = self.neg_solve(&vec![T::one(); self.order()])?;
        Ok(self.gamma.iter().zip(&y).map(|(&a, &b)| a * b).sum())
    }

    /// `2 gamma (-Gamma)^{-2} e`.
    pub fn second_moment(&self) -> Result<T> {
        let y = self.neg_solve(&vec![T::one(); self.order()])?;
        let z = self.neg_solve(&y)?;
        Ok(T::c(2.0) * self.gamma.iter().zip(&z).map(|(&a, &b)| a * b).sum())
    }

    pub fn cv(&self) -> Result<T> {
        let m1 = self.mean()?;
        let m2 = self.second_moment()?;
        Ok((m2 - m1 * m1).max(T::zero()).sqrt() / m1)
    }

    fn neg_solve(&self, b: &[T]) -> Result<Vec<T>> {
        let mut a = self.generator.clone();
        a.scale(-T::one());
        let lu = Lu::new(&a).map_err(|_| AoiError::InvalidParameter("singular subgenerator".into()))?;
        Ok(lu.solve(b))
    }

    /// `theta = max_i |Gamma_ii|`.
    pub fn uniformization_rate(&self) -> T {
        (0..self.order()).map(|i| self.generator[(i, i)].abs()).fold(T::zero(), T::max)
    }

    /// `I + Gamma / theta`.
    pub fn uniformized(&self) -> Mat<T> {
        let theta = self.uniformization_rate();
        let mut p = self.generator.clone();
        p.scale(T::one() / theta);
        p.add_diag(T::one());
        p
    }

    /// `c_k = gamma (I + Gamma/theta)^k (-Gamma e)` until the captured mass
    /// `sum c_k / theta` is within `eps_mass` of one.
    pub fn uniformization_coeffs(&self, eps_mass: T, cap: usize) -> Result<Vec<T>> {
        if !(eps_mass > T::zero() && eps_mass < T::one()) {
            return Err(AoiError::InvalidParameter(format!("mass tolerance must lie in (0,1), got {eps_mass}")));
        }
        let theta = self.uniformization_rate();
        let p = self.uniformized();
        let t = self.exit_vector();
        let mut v = self.gamma.clone();
        let mut out = Vec::new();
        let mut mass = T::zero();
        let nilpotent_floor = T::min_positive_value();
        loop {
            let c: T = v.iter().zip(&t).map(|(&a, &b)| a * b).sum();
            let c = if c < T::zero() { T::zero() } else { c };
            out.push(c);
            mass += c / theta;
            let remaining: T = v.iter().copied().sum();
            if T::one() - mass < eps_mass || remaining <= nilpotent_floor {
                break;
            }
            if out.len() >= cap {
                return Err(AoiError::TruncationCap { what: "uniformization coefficients", cap });
            }
            v = p.left_mul(&v);
        }
        // Trailing exact zeros carry no information.
        while out.len() > 1 && *out.last().unwrap() == T::zero() {
            out.pop();
        }
        Ok(out)
    }

    /// Density at `x` by the uniformized series.
    pub fn density(&self, x: T) -> Result<T> {
        let theta = self.uniformization_rate();
        let c = self.uniformization_coeffs(T::tol(1e-15), UNIFORMIZATION_CAP)?;
        Ok(c.iter().enumerate().map(|(k, &ck)| ck * poisson_pmf(k, theta * x)).sum())
    }

    /// Structural NBUE test: exponential, or a single-rate chain entered in
    /// one of its first two phases (the Erlang and mixed-Erlang fits).
    pub fn is_nbue(&self) -> bool {
        let m = self.order();
        if m == 1 {
            return true;
        }
        let rate = self.generator[(0, 0)];
        for i in 0..m {
            for j in 0..m {
                let v = self.generator[(i, j)];
                let expect = if i == j {
                    rate
                } else if j == i + 1 {
                    -rate
                } else {
                    T::zero()
                };
                if v != expect {
                    return false;
                }
            }
        }
        self.gamma.iter().skip(2).all(|&g| g == T::zero())
    }
}

impl PhaseType<f64> {
    /// Draws an absorption time by walking the chain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m = self.order();
        let pick = |rng: &mut R, probs: &mut dyn Iterator<Item = f64>, total: f64| -> Option<usize> {
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut last = None;
            for (i, p) in probs.enumerate() {
                if p > 0.0 {
                    acc += p;
                    last = Some(i);
                    if u < acc {
                        return Some(i);
                    }
                }
            }
            last
        };
        let mut phase = if m == 1 {
            0
        } else {
            pick(rng, &mut self.gamma.iter().copied(), 1.0).unwrap_or(0)
        };
        let t = self.exit_vector();
        let mut time = 0.0;
        loop {
            let rate = -self.generator[(phase, phase)];
            let u: f64 = rng.random();
            time += -(1.0 - u).ln() / rate;
            if t[phase] >= rate {
                return time;
            }
            let row = self.generator.row(phase);
            let mut it = (0..=m).map(|j| {
                if j == m {
                    t[phase]
                } else if j == phase {
                    0.0
                } else {
                    row[j]
                }
            });
            match pick(rng, &mut it, rate) {
                Some(j) if j < m => phase = j,
                _ => return time,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exponential_fit() {
        let ph = PhaseType::<f64>::fit_two_moment(1.0, 1.0).unwrap();
        assert_eq!(ph.order(), 1);
        assert_eq!(ph.gamma(), &[1.0]);
        assert_eq!(ph.generator()[(0, 0)], -1.0);
    }

    #[test]
    fn mixed_erlang_fit_parameters() {
        let ph = PhaseType::<f64>::fit_two_moment(20.0, 0.3).unwrap();
        assert_eq!(ph.order(), 12);
        assert_relative_eq!(ph.gamma()[1], 0.67302, epsilon = 5e-6);
        assert_relative_eq!(-ph.generator()[(0, 0)], 0.566349, epsilon = 5e-7);
        assert_relative_eq!(ph.mean().unwrap(), 20.0, max_relative = 1e-10);
        assert_relative_eq!(ph.cv().unwrap(), 0.3, max_relative = 1e-10);
    }

    #[test]
    fn hyperexponential_fit_parameters() {
        let ph = PhaseType::<f64>::fit_two_moment(1.0, 2.0).unwrap();
        assert_relative_eq!(ph.gamma()[0], 0.887298, epsilon = 1e-6);
        assert_relative_eq!(-ph.generator()[(0, 0)], 1.774597, epsilon = 1e-6);
        assert_relative_eq!(-ph.generator()[(1, 1)], 0.225403, epsilon = 1e-6);
        assert_relative_eq!(ph.cv().unwrap(), 2.0, max_relative = 1e-10);
        assert!(!ph.is_nbue());
    }

    #[test]
    fn fit_rejects_degenerate_inputs() {
        assert!(PhaseType::<f64>::fit_two_moment(1.0, 0.0).is_err());
        assert!(PhaseType::<f64>::fit_two_moment(-1.0, 0.5).is_err());
    }

    #[test]
    fn means_and_rates() {
        let e = PhaseType::<f64>::exponential(1.0).unwrap();
        assert_relative_eq!(e.mean().unwrap(), 1.0);
        let erl = PhaseType::<f64>::erlang(2, 4.0).unwrap();
        assert_relative_eq!(erl.mean().unwrap(), 0.5);
        assert_eq!(erl.uniformization_rate(), 4.0);
        let h = PhaseType::<f64>::hyperexponential(&[0.5, 0.5], &[2.0, 0.5]).unwrap();
        assert_eq!(h.uniformization_rate(), 2.0);
    }

    #[test]
    fn coefficient_examples() {
        let e = PhaseType::<f64>::exponential(0.7).unwrap();
        assert_eq!(e.uniformization_coeffs(1e-12, 100).unwrap(), vec![0.7]);
        let erl = PhaseType::<f64>::erlang(2, 3.0).unwrap();
        assert_eq!(erl.uniformization_coeffs(1e-12, 100).unwrap(), vec![0.0, 3.0]);
        let (p, n1, n2) = (0.3, 2.0, 0.5);
        let h = PhaseType::<f64>::hyperexponential(&[p, 1.0 - p], &[n1, n2]).unwrap();
        let c = h.uniformization_coeffs(1e-12, 10_000).unwrap();
        for (k, &ck) in c.iter().enumerate() {
            let expect = if k == 0 { p * n1 } else { 0.0 } + (1.0 - p) * (1.0 - n2 / n1).powi(k as i32) * n2;
            assert_relative_eq!(ck, expect, max_relative = 1e-12, epsilon = 1e-300);
        }
        assert!(h.uniformization_coeffs(1e-12, 5).is_err());
    }

    #[test]
    fn irreducibility_is_checked() {
        // Phase 1 is never entered.
        let bad = PhaseType::<f64>::from_rows(vec![1.0, 0.0], &[vec![-1.0, 0.0], vec![0.0, -1.0]]);
        assert!(bad.is_err());
    }

    #[test]
    fn mixed_erlang_is_nbue() {
        assert!(PhaseType::<f64>::fit_two_moment(5.0, 0.3).unwrap().is_nbue());
        assert!(PhaseType::<f64>::erlang(100, 3.0).unwrap().is_nbue());
    }
}
