//! Social regularization: the exposure prior is a low-rank factorization
//! `mu_ui = X_u^T T_i + gamma_i`, and the trust matrix is factorized as
//! `S_uk ~ X_u^T B_k` with the truster vectors `X` shared between the two.
//! Parameters are fitted by SGD over sampled `(item, user, trustee)`
//! triplets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, SocialGraph};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::rating::PosteriorSource;

use super::{clamp_mu, ExposurePrior};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularHyper {
    pub k_sr: usize,
    pub lambda_sr: f64,
    pub lambda_x: f64,
    pub lambda_t: f64,
    pub lambda_b: f64,
    pub lambda_gamma: f64,
    pub learning_rate: f64,
    pub n_sgd_epochs: usize,
    pub init_scale: f64,
}

impl Default for RegularHyper {
    fn default() -> Self {
        RegularHyper {
            k_sr: 30,
            lambda_sr: 5.0,
            lambda_x: 1.0,
            lambda_t: 1.0,
            lambda_b: 1.0,
            lambda_gamma: 1.0,
            learning_rate: 0.01,
            n_sgd_epochs: 10,
            init_scale: 0.01,
        }
    }
}

impl RegularHyper {
    fn validate(&self) -> Result<()> {
        let nonneg = [
            ("lambda_sr", self.lambda_sr),
            ("lambda_x", self.lambda_x),
            ("lambda_t", self.lambda_t),
            ("lambda_b", self.lambda_b),
            ("lambda_gamma", self.lambda_gamma),
            ("init_scale", self.init_scale),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.learning_rate > 0.0) || self.k_sr == 0 {
            return Err(Error::InvalidArgument(format!(
                "need learning_rate > 0 and k_sr >= 1, got {} and {}",
                self.learning_rate, self.k_sr
            )));
        }
        Ok(())
    }
}

/// When the exposure factors are refitted during EM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RefitPolicy {
    /// Only after the first E-step.
    #[default]
    Once,
    /// After every E-step.
    Every,
    /// After E-steps `0, n, 2n, ...`.
    EveryN(usize),
}

impl RefitPolicy {
    fn due(self, iteration: usize) -> bool {
        match self {
            RefitPolicy::Once => iteration == 0,
            RefitPolicy::Every => true,
            RefitPolicy::EveryN(n) => n > 0 && iteration.is_multiple_of(n),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Triplet {
    pub item: usize,
    pub user: usize,
    pub trustee: usize,
}

/// Regression target for one user-item pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    pub user: usize,
    pub item: usize,
    pub value: f64,
}

/// Half-gradients of the sampled triplet loss.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfGradients {
    pub t: Vec<f64>,
    pub x: Vec<f64>,
    pub b: Vec<f64>,
    pub gamma: f64,
}

/// Targets for all clicked pairs (`n_i / U`) followed by the given
/// unobserved pairs (their posterior `p_ui`), clamped into the prior range.
pub fn build_targets(
    y: &InteractionMatrix,
    p: &dyn PosteriorSource,
    unobserved: &[(usize, usize)],
) -> Vec<Target> {
    let n_users = y.n_users() as f64;
    let mut out: Vec<Target> = y
        .pairs()
        .map(|(user, item)| Target {
            user,
            item,
            value: clamp_mu(y.item_count(item) as f64 / n_users),
        })
        .collect();
    out.extend(unobserved.iter().map(|&(user, item)| Target {
        user,
        item,
        value: clamp_mu(p.get(user, item)),
    }));
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularExposure {
    pub x: Matrix,
    pub t: Matrix,
    pub b: Matrix,
    pub gamma: Vec<f64>,
    pub hyper: RegularHyper,
    graph: SocialGraph,
    refit: RefitPolicy,
    seed: u64,
    fits_done: usize,
    last_objectives: Vec<f64>,
}

impl RegularExposure {
    /// Gaussian `X`, `T`, `B` at `hyper.init_scale`; `gamma_i = n_i / U` so
    /// the untrained prior sits at item popularity.
    pub fn new(
        train: &InteractionMatrix,
        graph: SocialGraph,
        hyper: RegularHyper,
        refit: RefitPolicy,
        seed: u64,
    ) -> Result<Self> {
        hyper.validate()?;
        if graph.n_users() != train.n_users() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} users, interactions have {}",
                graph.n_users(),
                train.n_users()
            )));
        }
        let (nu, ni) = (train.n_users(), train.n_items());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Matrix::gaussian(nu, hyper.k_sr, hyper.init_scale, &mut rng);
        let t = Matrix::gaussian(ni, hyper.k_sr, hyper.init_scale, &mut rng);
        let b = Matrix::gaussian(nu, hyper.k_sr, hyper.init_scale, &mut rng);
        let gamma = (0..ni)
            .map(|i| train.item_count(i) as f64 / nu.max(1) as f64)
            .collect();
        Ok(RegularExposure {
            x,
            t,
            b,
            gamma,
            hyper,
            graph,
            refit,
            seed,
            fits_done: 0,
            last_objectives: Vec::new(),
        })
    }

    /// Reassembles a fitted state.
    pub fn from_parts(
        x: Matrix,
        t: Matrix,
        b: Matrix,
        gamma: Vec<f64>,
        hyper: RegularHyper,
        graph: SocialGraph,
    ) -> Result<Self> {
        let k = x.cols();
        if t.cols() != k || b.cols() != k || b.rows() != x.rows() || gamma.len() != t.rows() {
            return Err(Error::DimensionMismatch(format!(
                "X {}x{}, T {}x{}, B {}x{}, gamma {}",
                x.rows(),
                x.cols(),
                t.rows(),
                t.cols(),
                b.rows(),
                b.cols(),
                gamma.len()
            )));
        }
        if graph.n_users() != x.rows() {
            return Err(Error::DimensionMismatch("graph and X disagree on users".into()));
        }
        Ok(RegularExposure {
            x,
            t,
            b,
            gamma,
            hyper: RegularHyper { k_sr: k, ..hyper },
            graph,
            refit: RefitPolicy::Once,
            seed: 0,
            fits_done: 0,
            last_objectives: Vec::new(),
        })
    }

    pub fn graph(&self) -> &SocialGraph {
        &self.graph
    }

    /// Sampled objective after each epoch of the most recent refit, with the
    /// starting value first.
    pub fn last_objectives(&self) -> &[f64] {
        &self.last_objectives
    }

    #[inline]
    fn exposure_residual(&self, user: usize, item: usize, target: f64) -> f64 {
        dot(self.x.row(user), self.t.row(item)) + self.gamma[item] - target
    }

    #[inline]
    fn trust_residual(&self, user: usize, trustee: usize, s_uk: f64) -> f64 {
        dot(self.x.row(user), self.b.row(trustee)) - s_uk
    }

    /// Loss of one triplet: both squared residuals plus the ridge terms of
    /// the parameters it touches.
    pub fn triplet_loss(&self, tr: Triplet, target: f64, s_uk: f64) -> f64 {
        let h = &self.hyper;
        let e = self.exposure_residual(tr.user, tr.item, target);
        let s = self.trust_residual(tr.user, tr.trustee, s_uk);
        let g = self.gamma[tr.item];
        e * e
            + h.lambda_sr * s * s
            + h.lambda_x * dot(self.x.row(tr.user), self.x.row(tr.user))
            + h.lambda_t * dot(self.t.row(tr.item), self.t.row(tr.item))
            + h.lambda_b * dot(self.b.row(tr.trustee), self.b.row(tr.trustee))
            + h.lambda_gamma * g * g
    }

    pub fn half_gradients(&self, tr: Triplet, target: f64, s_uk: f64) -> HalfGradients {
        let h = &self.hyper;
        let e = self.exposure_residual(tr.user, tr.item, target);
        let s = self.trust_residual(tr.user, tr.trustee, s_uk);
        let (xu, ti, bk) = (self.x.row(tr.user), self.t.row(tr.item), self.b.row(tr.trustee));
        let t = xu.iter().zip(ti).map(|(x, t)| e * x + h.lambda_t * t).collect();
        let x = xu
            .iter()
            .zip(ti)
            .zip(bk)
            .map(|((x, t), b)| e * t + h.lambda_sr * s * b + h.lambda_x * x)
            .collect();
        let b = xu
            .iter()
            .zip(bk)
            .map(|(x, b)| h.lambda_sr * s * x + h.lambda_b * b)
            .collect();
        HalfGradients {
            t,
            x,
            b,
            gamma: e + h.lambda_gamma * self.gamma[tr.item],
        }
    }

    /// One simultaneous step of all four parameter blocks.
    pub fn sgd_triplet_step(&mut self, tr: Triplet, target: f64, s_uk: f64, lr: f64) -> Result<()> {
        let g = self.half_gradients(tr, target, s_uk);
        let finite = g.gamma.is_finite()
            && g.t.iter().chain(&g.x).chain(&g.b).all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFinite {
                stage: "exposure SGD gradient",
                iteration: self.fits_done,
            });
        }
        for (p, d) in self.t.row_mut(tr.item).iter_mut().zip(&g.t) {
            *p -= lr * d;
        }
        for (p, d) in self.x.row_mut(tr.user).iter_mut().zip(&g.x) {
            *p -= lr * d;
        }
        for (p, d) in self.b.row_mut(tr.trustee).iter_mut().zip(&g.b) {
            *p -= lr * d;
        }
        self.gamma[tr.item] -= lr * g.gamma;
        Ok(())
    }

    fn sample_epoch(
        &self,
        y: &InteractionMatrix,
        p: &dyn PosteriorSource,
        rng: &mut ChaCha8Rng,
    ) -> Vec<(Triplet, f64, f64)> {
        let (nu, ni) = (y.n_users(), y.n_items());
        let free = nu * ni - y.nnz();
        let mut unobserved = Vec::with_capacity(y.nnz().min(free));
        while unobserved.len() < y.nnz().min(free) {
            let (u, i) = (rng.random_range(0..nu), rng.random_range(0..ni));
            if !y.contains(u, i) {
                unobserved.push((u, i));
            }
        }
        let mut samples: Vec<(Triplet, f64, f64)> = build_targets(y, p, &unobserved)
            .into_iter()
            .map(|tg| {
                let friends = self.graph.friends(tg.user);
                let (trustee, s_uk) = if friends.is_empty() {
                    (rng.random_range(0..nu), 0.0)
                } else {
                    (friends[rng.random_range(0..friends.len())], 1.0)
                };
                let tr = Triplet {
                    item: tg.item,
                    user: tg.user,
                    trustee,
                };
                (tr, tg.value, s_uk)
            })
            .collect();
        samples.shuffle(rng);
        samples
    }

    fn sampled_objective(&self, samples: &[(Triplet, f64, f64)]) -> f64 {
        samples
            .iter()
            .map(|&(tr, target, s)| self.triplet_loss(tr, target, s))
            .sum()
    }

    /// Runs `n_sgd_epochs` passes, each over every click plus an equal-size
    /// fresh sample of unobserved pairs. Returns the objective on the first
    /// epoch's sample, before training and after every epoch.
    pub fn fit_exposure(
        &mut self,
        y: &InteractionMatrix,
        p: &dyn PosteriorSource,
        seed: u64,
    ) -> Result<Vec<f64>> {
        if y.n_users() != self.x.rows() || y.n_items() != self.t.rows() {
            return Err(Error::DimensionMismatch(format!(
                "exposure factors are {}x{}, interactions are {}x{}",
                self.x.rows(),
                self.t.rows(),
                y.n_users(),
                y.n_items()
            )));
        }
        let lr = self.hyper.learning_rate;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eval = self.sample_epoch(y, p, &mut rng);
        let initial = self.sampled_objective(&eval);
        let mut objectives = vec![initial];
        for epoch in 0..self.hyper.n_sgd_epochs {
            let samples = if epoch == 0 {
                eval.clone()
            } else {
                self.sample_epoch(y, p, &mut rng)
            };
            for &(tr, target, s) in &samples {
                self.sgd_triplet_step(tr, target, s, lr)?;
            }
            let obj = self.sampled_objective(&eval);
            if !obj.is_finite() || (initial > 0.0 && obj > 10.0 * initial) {
                return Err(Error::Diverged {
                    epoch,
                    objective: obj,
                    initial,
                });
            }
            objectives.push(obj);
        }
        Ok(objectives)
    }

    pub fn raw_mu(&self, user: usize, item: usize) -> f64 {
        dot(self.x.row(user), self.t.row(item)) + self.gamma[item]
    }
}

/// `clamp(X_u^T T_i + gamma_i)`.
pub fn regular_mu(state: &RegularExposure, user: usize, item: usize) -> f64 {
    clamp_mu(state.raw_mu(user, item))
}

impl ExposurePrior for RegularExposure {
    fn n_users(&self) -> usize {
        self.x.rows()
    }

    fn n_items(&self) -> usize {
        self.t.rows()
    }

    fn mu(&self, user: usize, item: usize) -> f64 {
        regular_mu(self, user, item)
    }

    fn update(
        &mut self,
        train: &InteractionMatrix,
        posterior: &dyn PosteriorSource,
        iteration: usize,
    ) -> Result<()> {
        if !self.refit.due(iteration) {
            return Ok(());
        }
        let seed = self
            .seed
            .wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(self.fits_done as u64 + 1));
        self.last_objectives = self.fit_exposure(train, posterior, seed)?;
        self.fits_done += 1;
        log::debug!(
            "exposure refit {}: sampled objective {:?} -> {:?}",
            self.fits_done,
            self.last_objectives.first(),
            self.last_objectives.last()
        );
        Ok(())
    }
}
