//! Social boosting: a user's prior for an item is the popularity Beta mode
//! with the friends' exposure mass added on the success side.
//!
//! The friend term is pluggable through [`SocialExposureFn`]; the default
//! [`FriendSum`] sums friends' posterior exposures.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{InteractionMatrix, SocialGraph};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::par;
use crate::rating::{e_step, FactorModel, FixedPosterior, PosteriorSource};

use super::popularity::{beta_mode, popularity_update_mu};
use super::{clamp_mu, ExposurePrior};

/// Social exposure hook: per-item exposure mass that `user` receives from
/// the graph, before scaling by the social coefficient.
pub trait SocialExposureFn: Sync + Send {
    fn friend_mass(
        &self,
        graph: &SocialGraph,
        posterior: &dyn PosteriorSource,
        user: usize,
        out: &mut [f64],
    );
}

/// `sum_{f in Friends(u)} p_fi`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FriendSum;

impl SocialExposureFn for FriendSum {
    fn friend_mass(
        &self,
        graph: &SocialGraph,
        posterior: &dyn PosteriorSource,
        user: usize,
        out: &mut [f64],
    ) {
        out.fill(0.0);
        let mut buf = vec![0.0; out.len()];
        for &f in graph.friends(user) {
            posterior.row(f, &mut buf);
            for (o, p) in out.iter_mut().zip(&buf) {
                *o += p;
            }
        }
    }
}

/// `sum_{f in Friends(u)} s * p_fi`.
pub fn phi_social(
    graph: &SocialGraph,
    p: &dyn PosteriorSource,
    user: usize,
    item: usize,
    s_coeff: f64,
) -> f64 {
    graph
        .friends(user)
        .iter()
        .map(|&f| s_coeff * p.get(f, item))
        .sum()
}

fn check_params(s_coeff: f64, alpha1: f64, alpha2: f64) -> Result<()> {
    if !(s_coeff >= 1.0 && s_coeff.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "social coefficient must be >= 1, got {s_coeff}"
        )));
    }
    if !(alpha1 > 0.0 && alpha2 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "Beta parameters must be positive, got ({alpha1}, {alpha2})"
        )));
    }
    Ok(())
}

#[inline]
fn boost_row(
    column_sums: &[f64],
    friend_mass: &[f64],
    s_coeff: f64,
    alpha1: f64,
    alpha2: f64,
    n_users: f64,
    out: &mut [f64],
) -> Result<()> {
    for ((slot, &mass), &friends) in out.iter_mut().zip(column_sums).zip(friend_mass) {
        *slot = clamp_mu(beta_mode(alpha1, alpha2, mass, (s_coeff - 1.0) * friends, n_users)?);
    }
    Ok(())
}

/// Dense boosted prior for every pair:
/// `mu_ui = (a1 + sum_u' p_u'i + (s-1) F_ui - 1) / (a1 + a2 + U + (s-1) F_ui - 2)`
/// with `F_ui = sum_{f in Friends(u)} p_fi`, clamped.
pub fn boost_update_mu(
    p: &dyn PosteriorSource,
    graph: &SocialGraph,
    s_coeff: f64,
    alpha1: f64,
    alpha2: f64,
) -> Result<Matrix> {
    check_params(s_coeff, alpha1, alpha2)?;
    let (nu, ni) = (p.n_users(), p.n_items());
    if graph.n_users() != nu {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} users, posterior has {nu}",
            graph.n_users()
        )));
    }
    let sums = p.column_sums();
    let mut mu = Matrix::zeros(nu, ni);
    let mut mass = vec![0.0; ni];
    for u in 0..nu {
        FriendSum.friend_mass(graph, p, u, &mut mass);
        boost_row(&sums, &mass, s_coeff, alpha1, alpha2, nu as f64, mu.row_mut(u))?;
    }
    Ok(mu)
}

const NO_ROW: usize = usize::MAX;

/// Boosted exposure prior. Users without friends share the popularity
/// vector; users with friends own a dense row.
#[derive(Debug, Clone)]
pub struct BoostExposure<F = FriendSum> {
    n_items: usize,
    s_coeff: f64,
    alpha1: f64,
    alpha2: f64,
    graph: SocialGraph,
    phi: F,
    pop_mu: Vec<f64>,
    row_of: Vec<usize>,
    social_users: Vec<usize>,
    social_mu: Vec<f64>,
}

impl BoostExposure<FriendSum> {
    /// Initial prior from the update with clicks standing in for the
    /// posterior.
    pub fn from_counts(
        train: &InteractionMatrix,
        graph: SocialGraph,
        s_coeff: f64,
        alpha1: f64,
        alpha2: f64,
    ) -> Result<Self> {
        Self::with_phi(train, graph, s_coeff, alpha1, alpha2, FriendSum)
    }
}

impl<F: SocialExposureFn + Clone> BoostExposure<F> {
    pub fn with_phi(
        train: &InteractionMatrix,
        graph: SocialGraph,
        s_coeff: f64,
        alpha1: f64,
        alpha2: f64,
        phi: F,
    ) -> Result<Self> {
        check_params(s_coeff, alpha1, alpha2)?;
        if graph.n_users() != train.n_users() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} users, interactions have {}",
                graph.n_users(),
                train.n_users()
            )));
        }
        let mut row_of = vec![NO_ROW; graph.n_users()];
        let mut social_users = Vec::new();
        for u in 0..graph.n_users() {
            if graph.out_degree(u) > 0 {
                row_of[u] = social_users.len();
                social_users.push(u);
            }
        }
        let n_items = train.n_items();
        let mut this = BoostExposure {
            n_items,
            s_coeff,
            alpha1,
            alpha2,
            graph,
            phi,
            pop_mu: vec![0.0; n_items],
            row_of,
            social_mu: vec![0.0; social_users.len() * n_items],
            social_users,
        };
        this.recompute(&FixedPosterior { train, weight: 0.0 })?;
        Ok(this)
    }

    fn recompute(&mut self, posterior: &dyn PosteriorSource) -> Result<()> {
        let nu = self.graph.n_users();
        let sums = posterior.column_sums();
        self.pop_mu = popularity_update_mu(&sums, nu, self.alpha1, self.alpha2)?;
        let failed = core::sync::atomic::AtomicBool::new(false);
        let (graph, phi, users) = (&self.graph, &self.phi, &self.social_users);
        let (s, a1, a2) = (self.s_coeff, self.alpha1, self.alpha2);
        par::for_each_row(&mut self.social_mu, self.n_items, |r, row| {
            let mut mass = vec![0.0; row.len()];
            phi.friend_mass(graph, posterior, users[r], &mut mass);
            if boost_row(&sums, &mass, s, a1, a2, nu as f64, row).is_err() {
                failed.store(true, core::sync::atomic::Ordering::Relaxed);
            }
        });
        if failed.into_inner() {
            return Err(Error::InvalidArgument(
                "boosted Beta mode denominator is not positive".into(),
            ));
        }
        Ok(())
    }

    /// Rebuilds the prior of a trained model by iterating
    /// `mu <- boost(E-step(model, mu))` from the count-based start until the
    /// largest change drops below `tol` or `max_rounds` is hit.
    pub fn reconstruct(
        &mut self,
        train: &InteractionMatrix,
        model: &FactorModel,
        max_rounds: usize,
        tol: f64,
    ) -> Result<usize> {
        for round in 0..max_rounds {
            let before = (self.pop_mu.clone(), self.social_mu.clone());
            let p = e_step(train, model, &*self)?;
            self.recompute(&p)?;
            let delta = before
                .0
                .iter()
                .zip(&self.pop_mu)
                .chain(before.1.iter().zip(&self.social_mu))
                .map(|(a, b)| libm::fabs(a - b))
                .fold(0.0, f64::max);
            if delta < tol {
                return Ok(round + 1);
            }
        }
        Ok(max_rounds)
    }

    pub fn s_coeff(&self) -> f64 {
        self.s_coeff
    }

    pub fn alphas(&self) -> (f64, f64) {
        (self.alpha1, self.alpha2)
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    /// Prior of a user without friends.
    pub fn popularity_mu(&self) -> &[f64] {
        &self.pop_mu
    }
}

impl<F: SocialExposureFn + Clone> ExposurePrior for BoostExposure<F> {
    fn n_users(&self) -> usize {
        self.graph.n_users()
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    fn mu(&self, user: usize, item: usize) -> f64 {
        match self.row_of[user] {
            NO_ROW => self.pop_mu[item],
            r => self.social_mu[r * self.n_items + item],
        }
    }

    fn mu_row(&self, user: usize, out: &mut [f64]) {
        match self.row_of[user] {
            NO_ROW => out.copy_from_slice(&self.pop_mu),
            r => out.copy_from_slice(&self.social_mu[r * self.n_items..(r + 1) * self.n_items]),
        }
    }

    fn update(&mut self, _: &InteractionMatrix, posterior: &dyn PosteriorSource, _: usize) -> Result<()> {
        self.recompute(posterior)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exposure::popularity::PopularityExposure;
    use crate::rating::Posterior;
    use approx::assert_relative_eq;

    fn posterior(nu: usize, ni: usize, values: Vec<f64>) -> Posterior {
        Posterior::from_values(nu, ni, values)
    }

    #[test]
    fn worked_example() {
        // 10 users, column mass 4, one friend with p = 1, s = 5 -> 8 / 14.
        let mut values = vec![0.0; 10];
        values[0] = 1.0;
        values[2] = 1.0;
        values[3] = 1.0;
        values[4] = 1.0;
        let p = posterior(10, 1, values);
        let (g, _) = SocialGraph::from_edges(10, &[(1, 0)]).unwrap();
        let mu = boost_update_mu(&p, &g, 5.0, 1.0, 1.0).unwrap();
        assert_relative_eq!(mu.get(1, 0), 8.0 / 14.0, epsilon = 1e-15);
        // friendless users get the popularity mode 4 / 10
        assert_relative_eq!(mu.get(5, 0), 0.4, epsilon = 1e-15);
    }

    #[test]
    fn s_one_is_popularity() {
        let p = posterior(3, 2, vec![0.2, 0.9, 0.5, 0.1, 1.0, 0.3]);
        let (g, _) = SocialGraph::from_edges(3, &[(0, 1), (0, 2), (2, 1)]).unwrap();
        let boosted = boost_update_mu(&p, &g, 1.0, 1.0, 1.0).unwrap();
        let pop = popularity_update_mu(&p.column_sums(), 3, 1.0, 1.0).unwrap();
        for u in 0..3 {
            assert_eq!(boosted.row(u), pop.as_slice());
        }
    }

    #[test]
    fn unbounded_friend_mass_pushes_towards_one() {
        let sums = [4.0];
        let mut prev = 0.0;
        for f in 0..=50 {
            let mut out = [0.0];
            boost_row(&sums, &[f as f64], 5.0, 1.0, 1.0, 10.0, &mut out).unwrap();
            assert!(out[0] >= prev);
            assert!(out[0] < 1.0);
            prev = out[0];
        }
        assert!(prev > 0.95);
    }

    #[test]
    fn phi_is_a_linear_sum() {
        let p = posterior(3, 1, vec![0.0, 0.2, 0.3]);
        let (g, _) = SocialGraph::from_edges(3, &[(0, 1), (0, 2)]).unwrap();
        assert_relative_eq!(phi_social(&g, &p, 0, 0, 5.0), 2.5, epsilon = 1e-15);
        assert_eq!(phi_social(&g, &p, 1, 0, 5.0), 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        let y = InteractionMatrix::from_pairs(2, 2, &[(0, 0)]).unwrap();
        let g = SocialGraph::empty(2);
        assert!(BoostExposure::from_counts(&y, g.clone(), 0.5, 1.0, 1.0).is_err());
        assert!(BoostExposure::from_counts(&y, g.clone(), 5.0, 0.0, 1.0).is_err());
        assert!(BoostExposure::from_counts(&y, SocialGraph::empty(3), 5.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn friendless_users_match_popularity_prior() {
        let y = InteractionMatrix::from_pairs(4, 3, &[(0, 0), (1, 0), (2, 1), (3, 2)]).unwrap();
        let (g, _) = SocialGraph::from_edges(4, &[(0, 1)]).unwrap();
        let boost = BoostExposure::from_counts(&y, g, 5.0, 1.0, 1.0).unwrap();
        let pop = PopularityExposure::from_counts(&y, 1.0, 1.0).unwrap();
        for u in 1..4 {
            for i in 0..3 {
                assert_eq!(boost.mu(u, i), pop.mu(u, i));
            }
        }
        // user 0's friend clicked item 0
        assert!(boost.mu(0, 0) > pop.mu(0, 0));
    }

    #[test]
    fn store_matches_dense_update() {
        let p = posterior(3, 2, vec![0.2, 0.9, 0.5, 0.1, 1.0, 0.3]);
        let (g, _) = SocialGraph::from_edges(3, &[(0, 1), (0, 2), (2, 1)]).unwrap();
        let y = InteractionMatrix::from_pairs(3, 2, &[(0, 1), (2, 0)]).unwrap();
        let mut boost = BoostExposure::from_counts(&y, g.clone(), 3.0, 1.0, 1.0).unwrap();
        boost.update(&y, &p, 0).unwrap();
        let dense = boost_update_mu(&p, &g, 3.0, 1.0, 1.0).unwrap();
        for u in 0..3 {
            for i in 0..2 {
                assert_eq!(boost.mu(u, i), dense.get(u, i));
            }
        }
    }
}
