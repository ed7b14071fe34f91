//! Model kinds, training dispatch and the on-disk model directory.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serec_core::exposure::boost::BoostExposure;
use serec_core::exposure::fixed::FixedExposure;
use serec_core::exposure::popularity::PopularityExposure;
use serec_core::exposure::regular::{RefitPolicy, RegularExposure, RegularHyper};
use serec_core::rating::PosteriorSource;
use serec_core::{
    fit, ExposurePrior, FactorModel, FitResult, IdMap, InteractionMatrix, SocialGraph, TrainConfig,
};

use crate::io;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Wmf,
    Expomf,
    SerecRegular,
    SerecBoost,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Wmf => "wmf",
            ModelKind::Expomf => "expomf",
            ModelKind::SerecRegular => "serec-regular",
            ModelKind::SerecBoost => "serec-boost",
        }
    }

    pub fn uses_social(self) -> bool {
        matches!(self, ModelKind::SerecRegular | ModelKind::SerecBoost)
    }
}

/// Everything that determines a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub train: TrainConfig,
    /// Weight of unobserved pairs for `wmf`.
    pub wmf_alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub s_coeff: f64,
    pub regular: RegularHyper,
    pub refit: RefitPolicy,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            kind: ModelKind::SerecBoost,
            train: TrainConfig::default(),
            wmf_alpha: 0.4,
            alpha1: 1.0,
            alpha2: 1.0,
            s_coeff: 5.0,
            regular: RegularHyper::default(),
            refit: RefitPolicy::Once,
        }
    }
}

/// The exposure prior of any model kind.
#[derive(Debug, Clone)]
pub enum Exposure {
    Fixed(FixedExposure),
    Popularity(PopularityExposure),
    Regular(RegularExposure),
    Boost(BoostExposure),
}

impl Exposure {
    /// Untrained prior for `cfg.kind`. Social kinds use an empty graph when
    /// none is given.
    pub fn init(cfg: &ModelConfig, train: &InteractionMatrix, graph: Option<&SocialGraph>) -> Result<Self> {
        let graph = || graph.cloned().unwrap_or_else(|| SocialGraph::empty(train.n_users()));
        Ok(match cfg.kind {
            ModelKind::Wmf => Exposure::Fixed(FixedExposure::new(train.n_users(), train.n_items(), cfg.wmf_alpha)?),
            ModelKind::Expomf => Exposure::Popularity(PopularityExposure::from_counts(train, cfg.alpha1, cfg.alpha2)?),
            ModelKind::SerecRegular => Exposure::Regular(RegularExposure::new(
                train,
                graph(),
                cfg.regular.clone(),
                cfg.refit,
                cfg.train.seed,
            )?),
            ModelKind::SerecBoost => {
                Exposure::Boost(BoostExposure::from_counts(train, graph(), cfg.s_coeff, cfg.alpha1, cfg.alpha2)?)
            }
        })
    }

    fn inner(&self) -> &dyn ExposurePrior {
        match self {
            Exposure::Fixed(p) => p,
            Exposure::Popularity(p) => p,
            Exposure::Regular(p) => p,
            Exposure::Boost(p) => p,
        }
    }
}

impl ExposurePrior for Exposure {
    fn n_users(&self) -> usize {
        self.inner().n_users()
    }

    fn n_items(&self) -> usize {
        self.inner().n_items()
    }

    fn mu(&self, user: usize, item: usize) -> f64 {
        self.inner().mu(user, item)
    }

    fn mu_row(&self, user: usize, out: &mut [f64]) {
        self.inner().mu_row(user, out)
    }

    fn fixed_unobserved_weight(&self) -> Option<f64> {
        self.inner().fixed_unobserved_weight()
    }

    fn update(
        &mut self,
        train: &InteractionMatrix,
        posterior: &dyn PosteriorSource,
        iteration: usize,
    ) -> serec_core::Result<()> {
        match self {
            Exposure::Fixed(p) => p.update(train, posterior, iteration),
            Exposure::Popularity(p) => p.update(train, posterior, iteration),
            Exposure::Regular(p) => p.update(train, posterior, iteration),
            Exposure::Boost(p) => p.update(train, posterior, iteration),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub config: ModelConfig,
    pub fit: FitResult,
    pub exposure: Exposure,
}

pub fn train_model(
    cfg: &ModelConfig,
    train: &InteractionMatrix,
    graph: Option<&SocialGraph>,
) -> Result<Trained> {
    let mut exposure = Exposure::init(cfg, train, graph)?;
    let result = fit(train, &mut exposure, &cfg.train).context("training failed")?;
    Ok(Trained {
        config: cfg.clone(),
        fit: result,
        exposure,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub kind: ModelKind,
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    pub converged: bool,
    /// `log-likelihood`, or `weighted-squared-loss` for `wmf`.
    pub objective: String,
    pub initial_objective: f64,
    pub final_objective: f64,
    pub n_users: usize,
    pub n_items: usize,
    pub config: ModelConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BoostParams {
    s_coeff: f64,
    alpha1: f64,
    alpha2: f64,
}

/// Stored exposure parameters, before any reconstruction.
#[derive(Debug, Clone)]
pub enum StoredExposure {
    Fixed(f64),
    Popularity(Vec<f64>),
    Regular(RegularExposure),
    Boost { s_coeff: f64, alpha1: f64, alpha2: f64 },
}

#[derive(Debug, Clone)]
pub struct SavedModel {
    pub meta: ModelMeta,
    pub factors: FactorModel,
    pub users: IdMap,
    pub items: IdMap,
    pub graph: Option<SocialGraph>,
    pub exposure: StoredExposure,
}

impl SavedModel {
    /// The exposure prior the model was trained with. The boosted prior is
    /// not stored; it is rebuilt by iterating the E-step and the boost
    /// update to a fixed point under the saved factors.
    pub fn prior(&self, train: &InteractionMatrix) -> Result<Exposure> {
        let (nu, ni) = (self.meta.n_users, self.meta.n_items);
        if train.n_users() != nu || train.n_items() != ni {
            bail!("model is {nu}x{ni}, training interactions are {}x{}", train.n_users(), train.n_items());
        }
        Ok(match &self.exposure {
            StoredExposure::Fixed(a) => Exposure::Fixed(FixedExposure::new(nu, ni, *a)?),
            StoredExposure::Popularity(mu) => {
                let c = &self.meta.config;
                Exposure::Popularity(PopularityExposure::from_mu(nu, mu.clone(), c.alpha1, c.alpha2)?)
            }
            StoredExposure::Regular(r) => Exposure::Regular(r.clone()),
            StoredExposure::Boost { s_coeff, alpha1, alpha2 } => {
                let graph = self.graph.clone().unwrap_or_else(|| SocialGraph::empty(nu));
                let mut prior = BoostExposure::from_counts(train, graph, *s_coeff, *alpha1, *alpha2)?;
                let rounds = prior.reconstruct(train, &self.factors, 50, 1e-10)?;
                log::debug!("boosted prior rebuilt in {rounds} rounds");
                Exposure::Boost(prior)
            }
        })
    }
}

pub fn save_model(dir: &Path, trained: &Trained, users: &IdMap, items: &IdMap) -> Result<ModelMeta> {
    let model = &trained.fit.model;
    let cfg = &trained.config;
    let meta = ModelMeta {
        kind: cfg.kind,
        k: model.k(),
        seed: cfg.train.seed,
        iterations: trained.fit.iterations(),
        converged: trained.fit.converged,
        objective: match cfg.kind {
            ModelKind::Wmf => "weighted-squared-loss".into(),
            _ => "log-likelihood".into(),
        },
        initial_objective: trained.fit.initial_objective,
        final_objective: trained.fit.final_objective(),
        n_users: model.n_users(),
        n_items: model.n_items(),
        config: cfg.clone(),
    };
    io::write_json(&dir.join("meta.json"), &meta)?;
    io::write_matrix(&dir.join("theta.tsv"), &model.theta)?;
    io::write_matrix(&dir.join("beta.tsv"), &model.beta)?;
    io::write_text(&dir.join("users.tsv"), &io::format_id_map(users))?;
    io::write_text(&dir.join("items.tsv"), &io::format_id_map(items))?;
    match &trained.exposure {
        Exposure::Fixed(_) => {}
        Exposure::Popularity(p) => io::write_vector(&dir.join("mu_items.tsv"), p.mu_items())?,
        Exposure::Regular(r) => {
            io::write_matrix(&dir.join("X.tsv"), &r.x)?;
            io::write_matrix(&dir.join("T.tsv"), &r.t)?;
            io::write_matrix(&dir.join("B.tsv"), &r.b)?;
            io::write_vector(&dir.join("gamma.tsv"), &r.gamma)?;
            io::write_text(&dir.join("social.tsv"), &io::format_social(r.graph(), users))?;
        }
        Exposure::Boost(b) => {
            let (alpha1, alpha2) = b.alphas();
            let params = BoostParams {
                s_coeff: b.s_coeff(),
                alpha1,
                alpha2,
            };
            io::write_json(&dir.join("boost.json"), &params)?;
            io::write_text(&dir.join("social.tsv"), &io::format_social(b.graph(), users))?;
        }
    }
    Ok(meta)
}

pub fn load_model(dir: &Path) -> Result<SavedModel> {
    let meta: ModelMeta = io::read_json(&dir.join("meta.json"))?;
    let theta = io::read_matrix(&dir.join("theta.tsv"))?;
    let beta = io::read_matrix(&dir.join("beta.tsv"))?;
    if theta.rows() != meta.n_users || beta.rows() != meta.n_items || theta.cols() != meta.k || beta.cols() != meta.k {
        bail!(
            "{}: factor shapes {}x{} and {}x{} disagree with meta.json",
            dir.display(),
            theta.rows(),
            theta.cols(),
            beta.rows(),
            beta.cols()
        );
    }
    let users = io::parse_id_map(&io::read_text(&dir.join("users.tsv"))?)?;
    let items = io::parse_id_map(&io::read_text(&dir.join("items.tsv"))?)?;
    let graph = if meta.kind.uses_social() {
        Some(io::load_social(&dir.join("social.tsv"), &users)?.0)
    } else {
        None
    };
    let cfg = &meta.config;
    let exposure = match meta.kind {
        ModelKind::Wmf => StoredExposure::Fixed(cfg.wmf_alpha),
        ModelKind::Expomf => StoredExposure::Popularity(io::read_vector(&dir.join("mu_items.tsv"))?),
        ModelKind::SerecRegular => StoredExposure::Regular(RegularExposure::from_parts(
            io::read_matrix(&dir.join("X.tsv"))?,
            io::read_matrix(&dir.join("T.tsv"))?,
            io::read_matrix(&dir.join("B.tsv"))?,
            io::read_vector(&dir.join("gamma.tsv"))?,
            cfg.regular.clone(),
            graph.clone().unwrap_or_else(|| SocialGraph::empty(meta.n_users)),
        )?),
        ModelKind::SerecBoost => {
            let p: BoostParams = io::read_json(&dir.join("boost.json"))?;
            StoredExposure::Boost {
                s_coeff: p.s_coeff,
                alpha1: p.alpha1,
                alpha2: p.alpha2,
            }
        }
    };
    let factors = FactorModel {
        theta,
        beta,
        lambda_theta: cfg.train.lambda_theta,
        lambda_beta: cfg.train.lambda_beta,
        lambda_y: cfg.train.lambda_y,
    };
    Ok(SavedModel {
        meta,
        factors,
        users,
        items,
        graph,
        exposure,
    })
}
