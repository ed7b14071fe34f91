//! File formats, configuration and experiment commands around
//! [`serec_core`].

pub mod cli;
pub mod commands;
pub mod config;
pub mod io;
pub mod model;

pub use config::RunConfig;
pub use model::{load_model, save_model, train_model, Exposure, ModelConfig, ModelKind, Trained};
