//! Per-item exposure prior shared by every user, updated as the mode of its
//! Beta complete conditional.

use alloc::format;
use alloc::vec::Vec;

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::rating::{FixedPosterior, PosteriorSource};

use super::{clamp_mu, ExposurePrior};

/// Mode of `Beta(alpha1 + mass + social, alpha2 + n_users - mass)`, where
/// the social term appears in the denominator too. With `social = 0` this
/// is the plain popularity prior.
#[inline]
pub fn beta_mode(alpha1: f64, alpha2: f64, mass: f64, social: f64, n_users: f64) -> Result<f64> {
    let denom = alpha1 + alpha2 + n_users + social - 2.0;
    if !(denom > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Beta mode denominator {denom} is not positive"
        )));
    }
    Ok((alpha1 + mass + social - 1.0) / denom)
}

/// `mu_i = (alpha1 + sum_u p_ui - 1) / (alpha1 + alpha2 + U - 2)`, clamped.
pub fn popularity_update_mu(
    column_sums: &[f64],
    n_users: usize,
    alpha1: f64,
    alpha2: f64,
) -> Result<Vec<f64>> {
    column_sums
        .iter()
        .map(|&mass| beta_mode(alpha1, alpha2, mass, 0.0, n_users as f64).map(clamp_mu))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopularityExposure {
    n_users: usize,
    mu_items: Vec<f64>,
    alpha1: f64,
    alpha2: f64,
}

impl PopularityExposure {
    /// Starts from the update with the click matrix standing in for the
    /// posterior, i.e. click counts as exposure mass.
    pub fn from_counts(train: &InteractionMatrix, alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 > 0.0 && alpha2 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "Beta parameters must be positive, got ({alpha1}, {alpha2})"
            )));
        }
        let counts = FixedPosterior { train, weight: 0.0 }.column_sums();
        let mu_items = popularity_update_mu(&counts, train.n_users(), alpha1, alpha2)?;
        Ok(PopularityExposure {
            n_users: train.n_users(),
            mu_items,
            alpha1,
            alpha2,
        })
    }

    pub fn from_mu(n_users: usize, mu_items: Vec<f64>, alpha1: f64, alpha2: f64) -> Result<Self> {
        if let Some(m) = mu_items.iter().find(|m| !(**m > 0.0 && **m < 1.0)) {
            return Err(Error::InvalidArgument(format!("item prior {m} outside (0, 1)")));
        }
        Ok(PopularityExposure {
            n_users,
            mu_items,
            alpha1,
            alpha2,
        })
    }

    pub fn mu_items(&self) -> &[f64] {
        &self.mu_items
    }

    pub fn alphas(&self) -> (f64, f64) {
        (self.alpha1, self.alpha2)
    }
}

impl ExposurePrior for PopularityExposure {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.mu_items.len()
    }

    fn mu(&self, _user: usize, item: usize) -> f64 {
        self.mu_items[item]
    }

    fn mu_row(&self, _user: usize, out: &mut [f64]) {
        out.copy_from_slice(&self.mu_items);
    }

    fn update(&mut self, _: &InteractionMatrix, posterior: &dyn PosteriorSource, _: usize) -> Result<()> {
        let sums = posterior.column_sums();
        self.mu_items = popularity_update_mu(&sums, self.n_users, self.alpha1, self.alpha2)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::MU_FLOOR;
    use alloc::vec;
    use approx::assert_relative_eq;

    #[test]
    fn uniform_prior_is_the_mean() {
        assert_eq!(popularity_update_mu(&[4.0], 10, 1.0, 1.0).unwrap(), vec![0.4]);
    }

    #[test]
    fn zero_mass_clamps_to_floor() {
        assert_eq!(popularity_update_mu(&[0.0], 10, 1.0, 1.0).unwrap(), vec![MU_FLOOR]);
    }

    #[test]
    fn informative_prior() {
        let mu = popularity_update_mu(&[4.0], 10, 3.0, 2.0).unwrap()[0];
        assert_relative_eq!(mu, 6.0 / 13.0, epsilon = 1e-15);
    }

    #[test]
    fn degenerate_denominator() {
        assert!(popularity_update_mu(&[0.0], 0, 1.0, 1.0).is_err());
        assert!(popularity_update_mu(&[0.0], 1, 0.5, 0.5).is_err());
    }

    #[test]
    fn monotone_in_mass() {
        let sums: Vec<f64> = (0..=40).map(|m| m as f64 * 0.25).collect();
        let mu = popularity_update_mu(&sums, 10, 2.0, 3.0).unwrap();
        assert!(mu.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn init_uses_click_counts() {
        let y = InteractionMatrix::from_pairs(4, 2, &[(0, 0), (1, 0), (2, 0)]).unwrap();
        let p = PopularityExposure::from_counts(&y, 1.0, 1.0).unwrap();
        assert_eq!(p.mu_items(), &[0.75, MU_FLOOR]);
    }
}
