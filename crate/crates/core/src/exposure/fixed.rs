//! Constant down-weighting of unobserved pairs. Plugged into the EM engine
//! this is weighted matrix factorization: the posterior is never inferred.

use alloc::format;

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::rating::PosteriorSource;

use super::ExposurePrior;

/// `1` for a click, `mu_unobserved` otherwise.
#[inline]
pub fn fixed_exposure_p(observed: bool, mu_unobserved: f64) -> f64 {
    if observed {
        1.0
    } else {
        mu_unobserved
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedExposure {
    n_users: usize,
    n_items: usize,
    mu_unobserved: f64,
}

impl FixedExposure {
    pub fn new(n_users: usize, n_items: usize, mu_unobserved: f64) -> Result<Self> {
        if !(mu_unobserved > 0.0 && mu_unobserved <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "mu_unobserved must lie in (0, 1], got {mu_unobserved}"
            )));
        }
        Ok(FixedExposure {
            n_users,
            n_items,
            mu_unobserved,
        })
    }

    pub fn mu_unobserved(&self) -> f64 {
        self.mu_unobserved
    }
}

impl ExposurePrior for FixedExposure {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    /// The unobserved weight for every pair; clicks are pinned to 1 by the
    /// rating component regardless.
    fn mu(&self, _user: usize, _item: usize) -> f64 {
        self.mu_unobserved
    }

    fn fixed_unobserved_weight(&self) -> Option<f64> {
        Some(self.mu_unobserved)
    }

    fn update(&mut self, _: &InteractionMatrix, _: &dyn PosteriorSource, _: usize) -> Result<()> {
        Ok(())
    }
}
