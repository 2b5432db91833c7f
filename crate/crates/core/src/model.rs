//! The full queueing instance: a phase-type tagged stream and a Poisson
//! background stream sharing one FCFS server.

use crate::bounds::{MomentSet, QueueMoments};
use crate::dist::Distribution;
use crate::error::{AoiError, Result};
use crate::phtype::PhaseType;
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec<T = f64> {
    /// Inter-generation time of the tagged stream.
    pub g: PhaseType<T>,
    /// Work brought by a tagged packet.
    pub h: Distribution<T>,
    /// Background Poisson rate.
    pub lambda_bg: T,
    /// Work brought by a background packet.
    pub h_bg: Distribution<T>,
    /// Server speed (work per unit time).
    pub mu: T,
}

impl<T: Real> ModelSpec<T> {
    /// Builds and checks parameters and stability.
    pub fn new(g: PhaseType<T>, h: Distribution<T>, lambda_bg: T, h_bg: Distribution<T>, mu: T) -> Result<Self> {
        let m = ModelSpec { g, h, lambda_bg, h_bg, mu };
        m.validate()?;
        Ok(m)
    }

    /// Inter-generation times fitted to mean `1/lambda` and CV `cv_g` (a
    /// `k0`-phase Erlang when `cv_g = 0`), tagged and background work both
    /// fitted to mean 1 and CV `cv_h`.
    pub fn two_moment(lambda: T, cv_g: T, k0: usize, cv_h: T, lambda_bg: T, mu: T) -> Result<Self> {
        if !(lambda > T::zero()) {
            return Err(AoiError::InvalidParameter(format!("generation rate must be > 0, got {lambda}")));
        }
        let g = PhaseType::from_mean_cv(T::one() / lambda, cv_g, k0)?;
        let h = Distribution::from_mean_cv(T::one(), cv_h)?;
        Self::new(g, h.clone(), lambda_bg, h, mu)
    }

    pub fn validate(&self) -> Result<()> {
        self.h.validate()?;
        self.h_bg.validate()?;
        if !(self.mu > T::zero() && self.mu.is_finite()) {
            return Err(AoiError::InvalidParameter(format!("server rate mu must be > 0, got {}", self.mu)));
        }
        if !(self.lambda_bg >= T::zero() && self.lambda_bg.is_finite()) {
            return Err(AoiError::InvalidParameter(format!("background rate must be >= 0, got {}", self.lambda_bg)));
        }
        if !(self.h.mean() > T::zero()) {
            return Err(AoiError::InvalidParameter("tagged work must have a positive mean".into()));
        }
        if self.lambda_bg > T::zero() && !(self.h_bg.mean() > T::zero()) {
            return Err(AoiError::InvalidParameter("background work must have a positive mean".into()));
        }
        let (rho, rho_bg) = (self.rho()?, self.rho_bg());
        if !(rho + rho_bg < T::one()) {
            return Err(AoiError::Unstable { rho: rho.as_f64(), rho_bg: rho_bg.as_f64() });
        }
        Ok(())
    }

    /// Tagged generation rate `1 / E[G]`.
    pub fn lambda(&self) -> Result<T> {
        Ok(T::one() / self.g.mean()?)
    }

    pub fn rho(&self) -> Result<T> {
        Ok(self.lambda()? * self.h.mean() / self.mu)
    }

    pub fn rho_bg(&self) -> T {
        self.lambda_bg * self.h_bg.mean() / self.mu
    }

    /// The first two moments the closed-form bounds use.
    pub fn moment_set(&self) -> Result<MomentSet<T>> {
        let eg = self.g.mean()?;
        Ok(MomentSet {
            lambda: T::one() / eg,
            eg,
            eg2: self.g.second_moment()?,
            queue: self.queue_moments(),
        })
    }

    pub fn queue_moments(&self) -> QueueMoments<T> {
        let (eh, eh2) = self.h.moments();
        let (ehbg, ehbg2) = self.h_bg.moments();
        QueueMoments { mu: self.mu, eh, eh2, lambda_bg: self.lambda_bg, ehbg, ehbg2 }
    }
}
