//! Exposure priors `mu_ui` consumed by the rating component.

pub mod boost;
pub mod fixed;
pub mod popularity;
pub mod regular;

use crate::data::InteractionMatrix;
use crate::error::Result;
use crate::rating::PosteriorSource;

/// Smallest prior the rating component will use.
pub const MU_FLOOR: f64 = 1e-6;
/// Largest prior the rating component will use.
pub const MU_CEIL: f64 = 1.0 - 1e-6;

#[inline]
pub fn clamp_mu(mu: f64) -> f64 {
    mu.clamp(MU_FLOOR, MU_CEIL)
}

/// Source of the exposure prior `mu_ui`.
///
/// `mu` must stay within `[0, 1]`; the rating component rejects anything
/// else. `update` is the prior's M-step and sees the posterior of the
/// iteration that just ran.
pub trait ExposurePrior: Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn mu(&self, user: usize, item: usize) -> f64;

    fn mu_row(&self, user: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.mu(user, i);
        }
    }

    /// `Some(w)` when the posterior is not inferred at all: clicks weigh 1
    /// and every other pair weighs `w`.
    fn fixed_unobserved_weight(&self) -> Option<f64> {
        None
    }

    fn update(
        &mut self,
        train: &InteractionMatrix,
        posterior: &dyn PosteriorSource,
        iteration: usize,
    ) -> Result<()>;
}
