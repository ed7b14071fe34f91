//! Seeded sampler for the exposure-then-click generative process, plus the
//! brute-force references the tests check the fast paths against.
//!
//! Sampling runs in two stages so that friends' exposure is item specific:
//!
//! 1. every user discovers each item on their own with probability
//!    `e = base_exposure` (`alpha0`);
//! 2. the prior is boosted by friends who discovered the item,
//!    `mu_ui = min(1, e + sum_{f in Friends(u)} s * e * alpha0_fi)`, and
//!    `alpha_ui ~ Bernoulli(mu_ui)` coupled so that `alpha0_ui = 1` implies
//!    `alpha_ui = 1`.
//!
//! An exposed user clicks with probability `logistic(theta_u^T beta_i)`; an
//! unexposed user never clicks.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, SocialGraph};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub k: usize,
    pub lambda_theta: f64,
    pub lambda_beta: f64,
    pub lambda_y: f64,
    pub social_density: f64,
    pub base_exposure: f64,
    pub s_coeff: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 200,
            n_items: 200,
            k: 5,
            lambda_theta: 1.0,
            lambda_beta: 1.0,
            lambda_y: 1.0,
            social_density: 0.05,
            base_exposure: 0.05,
            s_coeff: 5.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_theta", self.lambda_theta),
            ("lambda_beta", self.lambda_beta),
            ("lambda_y", self.lambda_y),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        let unit = [
            ("social_density", self.social_density),
            ("base_exposure", self.base_exposure),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if self.n_users == 0 || self.n_items == 0 || self.k == 0 {
            return Err(Error::InvalidArgument("sizes must be positive".into()));
        }
        if !(self.s_coeff >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "s_coeff must be >= 0, got {}",
                self.s_coeff
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub interactions: InteractionMatrix,
    pub social: SocialGraph,
    pub theta: Matrix,
    pub beta: Matrix,
    /// Ground-truth prior, `U x V`.
    pub mu: Matrix,
    /// Ground-truth exposure, row-major `U x V`.
    pub alpha: Vec<bool>,
}

#[inline]
fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (nu, ni) = (spec.n_users, spec.n_items);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let theta = Matrix::gaussian(nu, spec.k, 1.0 / libm::sqrt(spec.lambda_theta), &mut rng);
    let beta = Matrix::gaussian(ni, spec.k, 1.0 / libm::sqrt(spec.lambda_beta), &mut rng);

    let mut edges = Vec::new();
    for u in 0..nu {
        for k in 0..nu {
            if u != k && rng.random_bool(spec.social_density) {
                edges.push((u, k));
            }
        }
    }
    let (social, _) = SocialGraph::from_edges(nu, &edges)?;

    let e = spec.base_exposure;
    let own: Vec<bool> = (0..nu * ni).map(|_| rng.random_bool(e)).collect();

    let mut mu = Matrix::zeros(nu, ni);
    let mut alpha = vec![false; nu * ni];
    let mut pairs = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            let informed = social.friends(u).iter().filter(|&&f| own[f * ni + i]).count();
            let m = (e + spec.s_coeff * e * informed as f64).min(1.0);
            mu.set(u, i, m);
            let exposed = own[u * ni + i] || (e < 1.0 && rng.random_bool((m - e) / (1.0 - e)));
            alpha[u * ni + i] = exposed;
            if exposed && rng.random_bool(logistic(dot(theta.row(u), beta.row(i)))) {
                pairs.push((u, i));
            }
        }
    }
    let interactions = InteractionMatrix::from_pairs(nu, ni, &pairs)?;
    Ok(SyntheticData {
        interactions,
        social,
        theta,
        beta,
        mu,
        alpha,
    })
}

/// `P(alpha = 1 | y = 0)` by explicit enumeration of both exposure states.
pub fn brute_force_posterior(mu: f64, score: f64, lambda_y: f64) -> f64 {
    let prior = [1.0 - mu, mu];
    let sd = 1.0 / libm::sqrt(lambda_y);
    let z = (0.0 - score) / sd;
    let normal = libm::exp(-0.5 * z * z) / (sd * libm::sqrt(2.0 * core::f64::consts::PI));
    // p(y = 0 | alpha): certain when unexposed, Gaussian when exposed.
    let likelihood = [1.0, normal];
    let joint: Vec<f64> = prior.iter().zip(likelihood).map(|(p, l)| p * l).collect();
    let evidence: f64 = joint.iter().sum();
    if evidence == 0.0 {
        return 0.0;
    }
    joint[1] / evidence
}

/// Central differences `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn finite_difference<F>(f: F, point: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut x = point.to_vec();
    let mut grad = Vec::with_capacity(point.len());
    for j in 0..point.len() {
        let orig = x[j];
        x[j] = orig + h;
        let up = f(&x);
        x[j] = orig - h;
        let down = f(&x);
        x[j] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "loss is not finite around coordinate {j}"
            )));
        }
        grad.push((up - down) / (2.0 * h));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rating::e_step_pair;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn spec(seed: u64) -> SyntheticSpec {
        SyntheticSpec {
            seed,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn no_exposure_no_clicks() {
        let d = generate(&SyntheticSpec {
            base_exposure: 0.0,
            social_density: 0.0,
            n_users: 30,
            n_items: 30,
            ..spec(1)
        })
        .unwrap();
        assert_eq!(d.interactions.nnz(), 0);
    }

    #[test]
    fn full_exposure() {
        let d = generate(&SyntheticSpec {
            base_exposure: 1.0,
            n_users: 30,
            n_items: 30,
            ..spec(2)
        })
        .unwrap();
        assert!(d.alpha.iter().all(|&a| a));
        // with everyone exposed, clicks follow the preference term alone
        let expected: f64 = (0..30)
            .flat_map(|u| (0..30).map(move |i| (u, i)))
            .map(|(u, i)| logistic(dot(d.theta.row(u), d.beta.row(i))))
            .sum();
        let got = d.interactions.nnz() as f64;
        assert!((got - expected).abs() < 4.0 * expected.sqrt(), "{got} vs {expected}");
    }

    #[test]
    fn clicks_only_where_exposed() {
        for seed in 0..3 {
            let d = generate(&spec(seed)).unwrap();
            let ni = d.interactions.n_items();
            for (u, i) in d.interactions.pairs() {
                assert!(d.alpha[u * ni + i]);
            }
        }
    }

    /// Expected prior under the two-stage sampler, by enumerating how many
    /// of each user's friends discover the item.
    fn expected_mu(spec: &SyntheticSpec, g: &SocialGraph) -> f64 {
        let e = spec.base_exposure;
        let mut total = 0.0;
        for u in 0..g.n_users() {
            let n = g.out_degree(u);
            let mut binom = 1.0;
            let mut acc = 0.0;
            for m in 0..=n {
                if m > 0 {
                    binom = binom * (n - m + 1) as f64 / m as f64;
                }
                let pm = binom * e.powi(m as i32) * (1.0 - e).powi((n - m) as i32);
                acc += pm * (e + spec.s_coeff * e * m as f64).min(1.0);
            }
            total += acc;
        }
        total / g.n_users() as f64
    }

    #[test]
    fn empirical_prior_mean_matches_enumeration() {
        let s = spec(11);
        let d = generate(&s).unwrap();
        let empirical = d.mu.as_slice().iter().sum::<f64>() / d.mu.as_slice().len() as f64;
        let expected = expected_mu(&s, &d.social);
        assert!((empirical - expected).abs() < 0.02, "{empirical} vs {expected}");
        let alpha_rate = d.alpha.iter().filter(|&&a| a).count() as f64 / d.alpha.len() as f64;
        assert!((alpha_rate - empirical).abs() < 0.02, "{alpha_rate} vs {empirical}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&spec(5)).unwrap();
        let b = generate(&spec(5)).unwrap();
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.social, b.social);
    }

    #[test]
    fn brute_force_matches_closed_form() {
        // 0.5 * 0.398942 / (0.5 * 0.398942 + 0.5)
        let half = 0.5 / (2.0 * core::f64::consts::PI).sqrt();
        assert_relative_eq!(brute_force_posterior(0.5, 0.0, 1.0), half / (half + 0.5), epsilon = 1e-15);
        assert!((brute_force_posterior(0.5, 0.0, 1.0) - 0.285_17).abs() < 1e-5);
        assert_eq!(brute_force_posterior(0.0, 1.3, 1.0), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let mu: f64 = rng.random();
            let score = rng.random_range(-5.0..5.0);
            let lam = rng.random_range(0.01..10.0);
            worst = worst.max((brute_force_posterior(mu, score, lam) - e_step_pair(mu, score, lam)).abs());
        }
        assert!(worst < 1e-12, "{worst}");
    }

    #[test]
    fn finite_difference_basics() {
        let g = finite_difference(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        let g = finite_difference(|_| 4.2, &[1.0, -2.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
        assert!(finite_difference(|x| 1.0 / x[0], &[0.0], 1e-5).is_ok());
        assert!(finite_difference(|x| (x[0] - 1e-5).ln(), &[0.0], 1e-5).is_err());
    }
}
