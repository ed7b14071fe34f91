//! The rating component: Gaussian matrix factorization over clicks,
//! conditional on latent exposure, fitted by EM.

mod mstep;
mod posterior;

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::exposure::{clamp_mu, ExposurePrior};
use crate::linalg::{dot, Matrix};
use crate::par;

pub use mstep::{update_item_factors, update_user_factors};
pub use posterior::{FixedPosterior, Posterior, PosteriorSource, StreamedPosterior};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian density `N(x | mean, precision^-1)`.
#[inline]
pub fn gaussian_density(x: f64, mean: f64, precision: f64) -> f64 {
    libm::exp(log_gaussian_density(x, mean, precision))
}

#[inline]
pub fn log_gaussian_density(x: f64, mean: f64, precision: f64) -> f64 {
    let d = x - mean;
    0.5 * (libm::log(precision) - LN_2PI) - 0.5 * precision * d * d
}

/// Posterior exposure `E[alpha | y = 0]` for a single unobserved pair.
#[inline]
pub fn e_step_pair(mu: f64, score: f64, lambda_y: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    if mu >= 1.0 {
        return 1.0;
    }
    let exposed = mu * gaussian_density(0.0, score, lambda_y);
    exposed / (exposed + (1.0 - mu))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub k: usize,
    pub lambda_theta: f64,
    pub lambda_beta: f64,
    pub lambda_y: f64,
    pub max_em_iters: usize,
    /// Stop once `|dLL| / |LL|` falls below this.
    pub convergence_tol: f64,
    pub seed: u64,
    pub init_scale: f64,
    /// Largest `U * V` for which the posterior is materialized.
    pub dense_budget: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 20,
            lambda_theta: 0.01,
            lambda_beta: 0.01,
            lambda_y: 0.01,
            max_em_iters: 50,
            convergence_tol: 1e-5,
            seed: 0,
            init_scale: 0.01,
            dense_budget: 200_000_000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_theta", self.lambda_theta),
            ("lambda_beta", self.lambda_beta),
            ("lambda_y", self.lambda_y),
            ("convergence_tol", self.convergence_tol),
            ("init_scale", self.init_scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// User preference and item attribute factors with their precisions.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub theta: Matrix,
    pub beta: Matrix,
    pub lambda_theta: f64,
    pub lambda_beta: f64,
    pub lambda_y: f64,
}

impl FactorModel {
    /// Seeded zero-mean Gaussian initialization with `cfg.init_scale`.
    pub fn init(n_users: usize, n_items: usize, cfg: &TrainConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let theta = Matrix::gaussian(n_users, cfg.k, cfg.init_scale, &mut rng);
        let beta = Matrix::gaussian(n_items, cfg.k, cfg.init_scale, &mut rng);
        FactorModel {
            theta,
            beta,
            lambda_theta: cfg.lambda_theta,
            lambda_beta: cfg.lambda_beta,
            lambda_y: cfg.lambda_y,
        }
    }

    pub fn k(&self) -> usize {
        self.theta.cols()
    }

    pub fn n_users(&self) -> usize {
        self.theta.rows()
    }

    pub fn n_items(&self) -> usize {
        self.beta.rows()
    }

    #[inline]
    pub fn score(&self, user: usize, item: usize) -> f64 {
        dot(self.theta.row(user), self.beta.row(item))
    }

    /// `theta_u^T beta_i` for every item.
    pub fn predict_scores(&self, user: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_items()];
        self.predict_scores_into(user, &mut out);
        out
    }

    pub fn predict_scores_into(&self, user: usize, out: &mut [f64]) {
        let theta_u = self.theta.row(user);
        for (i, slot) in out.iter_mut().enumerate() {
            *slot = dot(theta_u, self.beta.row(i));
        }
    }

    fn check_shape(&self, y: &InteractionMatrix) -> Result<()> {
        if self.n_users() != y.n_users() || self.n_items() != y.n_items() {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{}, interactions are {}x{}",
                self.n_users(),
                self.n_items(),
                y.n_users(),
                y.n_items()
            )));
        }
        Ok(())
    }
}

fn check_prior<P: ExposurePrior + ?Sized>(y: &InteractionMatrix, prior: &P) -> Result<()> {
    if prior.n_users() != y.n_users() || prior.n_items() != y.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "exposure prior is {}x{}, interactions are {}x{}",
            prior.n_users(),
            prior.n_items(),
            y.n_users(),
            y.n_items()
        )));
    }
    Ok(())
}

fn out_of_range<P: ExposurePrior + ?Sized>(prior: &P, user: usize, n_items: usize) -> Option<Error> {
    let mut mu = vec![0.0; n_items];
    prior.mu_row(user, &mut mu);
    mu.iter()
        .position(|m| !(0.0..=1.0).contains(m))
        .map(|item| Error::PriorOutOfRange {
            user,
            item,
            value: mu[item],
        })
}

/// Materializes `p_ui` for every pair.
///
/// Observed pairs get exactly `1`. For a fixed-weight prior the unobserved
/// pairs get that weight; otherwise the Bayes posterior of the (clamped)
/// prior under the current scores.
pub fn e_step<P: ExposurePrior + ?Sized>(
    y: &InteractionMatrix,
    model: &FactorModel,
    prior: &P,
) -> Result<Posterior> {
    model.check_shape(y)?;
    check_prior(y, prior)?;
    let (nu, ni) = (y.n_users(), y.n_items());
    let mut values = vec![0.0; nu * ni];
    if let Some(w) = prior.fixed_unobserved_weight() {
        let fixed = FixedPosterior { train: y, weight: w };
        par::for_each_row(&mut values, ni, |u, row| fixed.row(u, row));
        return Ok(Posterior::from_values(nu, ni, values));
    }
    par::for_each_row(&mut values, ni, |u, row| {
        prior.mu_row(u, row);
        let theta_u = model.theta.row(u);
        for (i, slot) in row.iter_mut().enumerate() {
            let mu = *slot;
            *slot = if (0.0..=1.0).contains(&mu) {
                e_step_pair(clamp_mu(mu), dot(theta_u, model.beta.row(i)), model.lambda_y)
            } else {
                f64::NAN
            };
        }
        for &i in y.items_of(u) {
            if !row[i].is_nan() {
                row[i] = 1.0;
            }
        }
    });
    if let Some(pos) = values.iter().position(|v| v.is_nan()) {
        let err = out_of_range(prior, pos / ni.max(1), ni);
        return Err(err.unwrap_or(Error::NonFinite {
            stage: "e-step",
            iteration: 0,
        }));
    }
    Ok(Posterior::from_values(nu, ni, values))
}

#[inline]
fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + libm::log1p(libm::exp(lo - hi))
}

fn ridge_penalty(model: &FactorModel) -> f64 {
    0.5 * model.lambda_theta * model.theta.frobenius_sq()
        + 0.5 * model.lambda_beta * model.beta.frobenius_sq()
}

/// Marginal log-likelihood of the clicks with exposure summed out, minus the
/// Gaussian penalties on the factors.
///
/// A raw prior of exactly zero on an observed pair is an error; otherwise
/// priors are clamped to `[MU_FLOOR, MU_CEIL]` before use.
pub fn log_likelihood<P: ExposurePrior + ?Sized>(
    y: &InteractionMatrix,
    model: &FactorModel,
    prior: &P,
) -> Result<f64> {
    model.check_shape(y)?;
    check_prior(y, prior)?;
    let ni = y.n_items();
    let per_user: Vec<Result<f64>> = par::map_indices(y.n_users(), |u| {
        let mut mu = vec![0.0; ni];
        prior.mu_row(u, &mut mu);
        let theta_u = model.theta.row(u);
        let clicked = y.items_of(u);
        let mut next_click = 0;
        let mut total = 0.0;
        for (i, &m) in mu.iter().enumerate() {
            if !(0.0..=1.0).contains(&m) {
                return Err(Error::PriorOutOfRange { user: u, item: i, value: m });
            }
            let observed = clicked.get(next_click) == Some(&i);
            let score = dot(theta_u, model.beta.row(i));
            let m = if observed {
                next_click += 1;
                if m == 0.0 {
                    return Err(Error::ZeroExposureObserved { user: u, item: i });
                }
                clamp_mu(m)
            } else {
                clamp_mu(m)
            };
            total += if observed {
                libm::log(m) + log_gaussian_density(1.0, score, model.lambda_y)
            } else {
                log_add_exp(
                    libm::log(m) + log_gaussian_density(0.0, score, model.lambda_y),
                    libm::log(1.0 - m),
                )
            };
        }
        Ok(total)
    });
    let mut ll = 0.0;
    for part in per_user {
        ll += part?;
    }
    Ok(ll - ridge_penalty(model))
}

/// Weighted least-squares objective (negated) used when the exposure weights
/// are fixed: `-lambda_y/2 sum w_ui (y_ui - theta_u^T beta_i)^2` minus the
/// factor penalties.
pub fn weighted_objective(y: &InteractionMatrix, model: &FactorModel, weight: f64) -> Result<f64> {
    model.check_shape(y)?;
    let per_user = par::map_indices(y.n_users(), |u| {
        let theta_u = model.theta.row(u);
        let clicked = y.items_of(u);
        let mut next_click = 0;
        let mut total = 0.0;
        for i in 0..y.n_items() {
            let s = dot(theta_u, model.beta.row(i));
            if clicked.get(next_click) == Some(&i) {
                next_click += 1;
                total += (1.0 - s) * (1.0 - s);
            } else {
                total += weight * s * s;
            }
        }
        total
    });
    let sq: f64 = per_user.iter().sum();
    Ok(-0.5 * model.lambda_y * sq - ridge_penalty(model))
}

fn objective<P: ExposurePrior + ?Sized>(
    y: &InteractionMatrix,
    model: &FactorModel,
    prior: &P,
) -> Result<f64> {
    match prior.fixed_unobserved_weight() {
        Some(w) => weighted_objective(y, model, w),
        None => log_likelihood(y, model, prior),
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: FactorModel,
    /// Objective at the initialization.
    pub initial_objective: f64,
    /// Objective after each completed EM iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
}

impl FitResult {
    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn final_objective(&self) -> f64 {
        self.trace.last().copied().unwrap_or(self.initial_objective)
    }
}

/// Runs EM from the seeded initialization in `cfg`.
pub fn fit<P>(train: &InteractionMatrix, prior: &mut P, cfg: &TrainConfig) -> Result<FitResult>
where
    P: ExposurePrior + Clone,
{
    cfg.validate()?;
    let model = FactorModel::init(train.n_users(), train.n_items(), cfg);
    fit_from(train, prior, cfg, model)
}

/// Runs EM from a caller-supplied starting model.
///
/// Each iteration computes the posterior under the current parameters,
/// solves for `theta` then `beta`, and hands the same posterior to the
/// prior's update. The objective is the marginal log-likelihood, or the
/// weighted squared loss when the prior has fixed weights.
pub fn fit_from<P>(
    train: &InteractionMatrix,
    prior: &mut P,
    cfg: &TrainConfig,
    mut model: FactorModel,
) -> Result<FitResult>
where
    P: ExposurePrior + Clone,
{
    cfg.validate()?;
    model.check_shape(train)?;
    check_prior(train, prior)?;
    if model.k() != cfg.k {
        return Err(Error::DimensionMismatch(format!(
            "model has k = {}, config has k = {}",
            model.k(),
            cfg.k
        )));
    }
    let initial_objective = objective(train, &model, prior)?;
    let mut prev = initial_objective;
    let mut trace = Vec::new();
    let mut converged = false;
    let dense = (train.n_users() as u64).saturating_mul(train.n_items() as u64) <= cfg.dense_budget;

    for iteration in 0..cfg.max_em_iters {
        let snapshot;
        let dense_p;
        let streamed;
        let fixed;
        let posterior: &dyn PosteriorSource = if let Some(w) = prior.fixed_unobserved_weight() {
            fixed = FixedPosterior { train, weight: w };
            &fixed
        } else if dense {
            dense_p = e_step(train, &model, prior)?;
            &dense_p
        } else {
            snapshot = prior.clone();
            streamed = StreamedPosterior {
                train,
                theta: model.theta.clone(),
                beta: model.beta.clone(),
                prior: &snapshot,
                lambda_y: model.lambda_y,
            };
            &streamed
        };

        let non_finite = |stage| Error::NonFinite { stage, iteration };
        let theta = update_user_factors(train, posterior, &model)
            .map_err(|_| non_finite("user factor update"))?;
        if !theta.is_finite() {
            return Err(non_finite("user factor update"));
        }
        model.theta = theta;
        let beta = update_item_factors(train, posterior, &model)
            .map_err(|_| non_finite("item factor update"))?;
        if !beta.is_finite() {
            return Err(non_finite("item factor update"));
        }
        model.beta = beta;

        prior.update(train, posterior, iteration)?;

        let ll = objective(train, &model, prior)?;
        if !ll.is_finite() {
            return Err(Error::NonFinite {
                stage: "objective",
                iteration,
            });
        }
        log::debug!("em iteration {iteration}: objective {ll:.6}");
        trace.push(ll);
        let rel = libm::fabs(ll - prev) / libm::fabs(prev).max(f64::MIN_POSITIVE);
        prev = ll;
        if rel < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model,
        initial_objective,
        trace,
        converged,
    })
}
