use alloc::vec;
use alloc::vec::Vec;

use crate::data::InteractionMatrix;
use crate::exposure::{clamp_mu, ExposurePrior};
use crate::linalg::{dot, Matrix};

use super::e_step_pair;

/// Read access to `p_ui = E[alpha_ui | y_ui]`.
///
/// Implementations must return exactly `1.0` on observed pairs.
pub trait PosteriorSource: Sync {
    fn n_users(&self) -> usize;
    fn n_items(&self) -> usize;
    fn get(&self, user: usize, item: usize) -> f64;

    fn row(&self, user: usize, out: &mut [f64]) {
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = self.get(user, i);
        }
    }

    fn col(&self, item: usize, out: &mut [f64]) {
        for (u, slot) in out.iter_mut().enumerate() {
            *slot = self.get(u, item);
        }
    }

    /// `sum_u p_ui` for every item.
    fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_items()];
        let mut buf = vec![0.0; self.n_items()];
        for u in 0..self.n_users() {
            self.row(u, &mut buf);
            for (s, p) in sums.iter_mut().zip(&buf) {
                *s += p;
            }
        }
        sums
    }

    /// Shared weight of every unobserved pair, when there is one.
    fn uniform_unobserved(&self) -> Option<f64> {
        None
    }
}

/// Materialized `U x V` posterior, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    n_users: usize,
    n_items: usize,
    values: Vec<f64>,
}

impl Posterior {
    pub(crate) fn from_values(n_users: usize, n_items: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), n_users * n_items);
        Posterior {
            n_users,
            n_items,
            values,
        }
    }

    pub fn row_slice(&self, user: usize) -> &[f64] {
        &self.values[user * self.n_items..(user + 1) * self.n_items]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl PosteriorSource for Posterior {
    fn n_users(&self) -> usize {
        self.n_users
    }

    fn n_items(&self) -> usize {
        self.n_items
    }

    #[inline]
    fn get(&self, user: usize, item: usize) -> f64 {
        self.values[user * self.n_items + item]
    }

    fn row(&self, user: usize, out: &mut [f64]) {
        out.copy_from_slice(self.row_slice(user));
    }

    fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_items];
        for u in 0..self.n_users {
            for (s, p) in sums.iter_mut().zip(self.row_slice(u)) {
                *s += p;
            }
        }
        sums
    }
}

/// Weighted-MF posterior: `1` on clicks, a constant weight elsewhere.
#[derive(Debug, Clone, Copy)]
pub struct FixedPosterior<'a> {
    pub train: &'a InteractionMatrix,
    pub weight: f64,
}

impl PosteriorSource for FixedPosterior<'_> {
    fn n_users(&self) -> usize {
        self.train.n_users()
    }

    fn n_items(&self) -> usize {
        self.train.n_items()
    }

    fn get(&self, user: usize, item: usize) -> f64 {
        if self.train.contains(user, item) {
            1.0
        } else {
            self.weight
        }
    }

    fn row(&self, user: usize, out: &mut [f64]) {
        out.fill(self.weight);
        for &i in self.train.items_of(user) {
            out[i] = 1.0;
        }
    }

    fn col(&self, item: usize, out: &mut [f64]) {
        out.fill(self.weight);
        for &u in self.train.users_of(item) {
            out[u] = 1.0;
        }
    }

    fn column_sums(&self) -> Vec<f64> {
        let rest = self.train.n_users() as f64;
        (0..self.train.n_items())
            .map(|i| {
                let n = self.train.item_count(i) as f64;
                n + (rest - n) * self.weight
            })
            .collect()
    }

    fn uniform_unobserved(&self) -> Option<f64> {
        Some(self.weight)
    }
}

/// Posterior recomputed on demand from a frozen snapshot of the factors and
/// the exposure prior, for shapes too large to materialize.
pub struct StreamedPosterior<'a, P: ?Sized> {
    pub train: &'a InteractionMatrix,
    pub theta: Matrix,
    pub beta: Matrix,
    pub prior: &'a P,
    pub lambda_y: f64,
}

impl<P: ExposurePrior + ?Sized> PosteriorSource for StreamedPosterior<'_, P> {
    fn n_users(&self) -> usize {
        self.train.n_users()
    }

    fn n_items(&self) -> usize {
        self.train.n_items()
    }

    fn get(&self, user: usize, item: usize) -> f64 {
        if self.train.contains(user, item) {
            return 1.0;
        }
        let score = dot(self.theta.row(user), self.beta.row(item));
        e_step_pair(clamp_mu(self.prior.mu(user, item)), score, self.lambda_y)
    }

    fn row(&self, user: usize, out: &mut [f64]) {
        self.prior.mu_row(user, out);
        let theta_u = self.theta.row(user);
        for (i, slot) in out.iter_mut().enumerate() {
            let score = dot(theta_u, self.beta.row(i));
            *slot = e_step_pair(clamp_mu(*slot), score, self.lambda_y);
        }
        for &i in self.train.items_of(user) {
            out[i] = 1.0;
        }
    }
}
