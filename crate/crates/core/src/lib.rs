//! Exposure-aware collaborative filtering for implicit feedback.
//!
//! Clicks are modeled as the product of two events: a user has to be
//! *exposed* to an item before any preference can show up as a click.
//! The rating side is a Gaussian matrix factorization fitted by EM over
//! the latent exposure indicators; the exposure side is pluggable through
//! [`ExposurePrior`] and comes in four flavours:
//!
//! * [`FixedExposure`]: constant down-weight on unobserved pairs (WMF).
//! * [`PopularityExposure`]: per-item Beta-mode prior (ExpoMF).
//! * [`RegularExposure`]: low-rank exposure factorization tied to the trust
//!   graph through a shared truster vector.
//! * [`BoostExposure`]: per-pair prior lifted by friends' exposure mass.
//!
//! The crate is `no_std` + `alloc`. The `std` feature (default) pulls in
//! std-backed float math, and `parallel` (default) runs per-row phases on
//! the current rayon pool.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod data;
pub mod error;
pub mod exposure;
pub mod linalg;
pub mod metrics;
pub mod rating;
pub mod synthetic;

mod par;

pub use data::{
    dataset_stats, parse_interactions, parse_interactions_with, parse_social, prune_social, split,
    DatasetSplit, IdMap, InteractionMatrix, LoadedInteractions, SocialGraph, SocialLoadReport,
    SplitRatios, StatsReport,
};
pub use error::{Error, Result};
pub use exposure::{
    boost::BoostExposure, fixed::FixedExposure, popularity::PopularityExposure,
    regular::RegularExposure, ExposurePrior, MU_CEIL, MU_FLOOR,
};
pub use linalg::Matrix;
pub use metrics::{evaluate, EvalReport, EvalTarget, RankedList};
pub use rating::{
    e_step, e_step_pair, fit, log_likelihood, FactorModel, FitResult, Posterior, PosteriorSource,
    TrainConfig,
};
