//! Run configuration: defaults, then a JSON file, then `--set key=value`
//! overrides, later sources winning.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use serec_core::exposure::regular::{RefitPolicy, RegularHyper};
use serec_core::synthetic::SyntheticSpec;
use serec_core::{EvalTarget, SplitRatios, TrainConfig};

use crate::model::{ModelConfig, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub interactions: Option<PathBuf>,
    pub social: Option<PathBuf>,
    /// Ratings below this are not clicks; off by default.
    pub min_rating: Option<f64>,
    pub split_dir: Option<PathBuf>,
    pub model_dir: Option<PathBuf>,
    pub output: Option<PathBuf>,

    pub model: ModelKind,
    pub train: TrainConfig,
    pub wmf_alpha: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub s_coeff: f64,
    pub regular: RegularHyper,
    pub refit: RefitPolicy,

    pub split: SplitRatios,
    pub split_seed: u64,
    pub cutoffs: Vec<usize>,
    pub eval_target: EvalTarget,
    pub repeats: usize,
    /// Worker threads; all available cores when unset.
    pub threads: Option<usize>,

    pub keep_probs: Vec<f64>,
    pub prune_seed: u64,
    pub bin_width: usize,
    pub synthetic: SyntheticSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        RunConfig {
            interactions: None,
            social: None,
            min_rating: None,
            split_dir: None,
            model_dir: None,
            output: None,
            model: m.kind,
            train: m.train,
            wmf_alpha: m.wmf_alpha,
            alpha1: m.alpha1,
            alpha2: m.alpha2,
            s_coeff: m.s_coeff,
            regular: m.regular,
            refit: m.refit,
            split: SplitRatios::default(),
            split_seed: 0,
            cutoffs: vec![10, 50, 100],
            eval_target: EvalTarget::Test,
            repeats: 1,
            threads: None,
            keep_probs: vec![1.0, 0.6, 0.2],
            prune_seed: 0,
            bin_width: 10,
            synthetic: SyntheticSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            train: self.train.clone(),
            wmf_alpha: self.wmf_alpha,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            s_coeff: self.s_coeff,
            regular: self.regular.clone(),
            refit: self.refit,
        }
    }

    /// Builds a config from defaults, an optional JSON file and overrides.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let defaults = serde_json::to_value(RunConfig::default())?;
        let mut value = defaults.clone();
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file_value: Value =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            check_keys(&defaults, &file_value, "")?;
            merge(&mut value, file_value);
        }
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .with_context(|| format!("override {item:?} is not key=value"))?;
            set_path(&defaults, &mut value, key.trim(), parse_scalar(raw.trim()))?;
        }
        let cfg: RunConfig = serde_json::from_value(value).context("invalid configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.split.validate()?;
        if self.cutoffs.is_empty() || self.cutoffs.contains(&0) {
            bail!("cutoffs must be positive, got {:?}", self.cutoffs);
        }
        if self.threads == Some(0) {
            bail!("threads must be at least 1");
        }
        if self.repeats == 0 {
            bail!("repeats must be at least 1");
        }
        if self.bin_width == 0 {
            bail!("bin_width must be at least 1");
        }
        Ok(())
    }
}

/// JSON when it parses, a bare string otherwise (`model=wmf`).
fn parse_scalar(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

/// Rejects keys that the defaults do not have. Only objects in the defaults
/// are descended into; anything else is a leaf that may take any shape.
fn check_keys(defaults: &Value, given: &Value, prefix: &str) -> Result<()> {
    if let (Value::Object(d), Value::Object(g)) = (defaults, given) {
        for (k, v) in g {
            let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
            match d.get(k) {
                Some(dv) => check_keys(dv, v, &path)?,
                None => bail!("unknown configuration key {path:?}"),
            }
        }
    }
    Ok(())
}

fn set_path(defaults: &Value, value: &mut Value, key: &str, new: Value) -> Result<()> {
    let mut d = defaults;
    let mut v = value;
    let parts: Vec<&str> = key.split('.').collect();
    for (n, part) in parts.iter().enumerate() {
        let Some(next_d) = d.get(part) else {
            bail!("unknown configuration key {key:?}");
        };
        let Some(obj) = v.as_object_mut() else {
            bail!("{key:?}: {} is not an object", parts[..n].join("."));
        };
        if n + 1 == parts.len() {
            obj.insert(part.to_string(), new);
            return Ok(());
        }
        d = next_d;
        v = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    unreachable!("split always yields at least one part")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = RunConfig::default();
        assert_eq!(c.train.k, 20);
        assert_eq!((c.train.lambda_theta, c.train.lambda_beta, c.train.lambda_y), (0.01, 0.01, 0.01));
        assert_eq!(c.regular.k_sr, 30);
        assert_eq!(c.regular.lambda_sr, 5.0);
        assert_eq!((c.regular.lambda_x, c.regular.lambda_t, c.regular.lambda_b), (1.0, 1.0, 1.0));
        assert_eq!((c.s_coeff, c.wmf_alpha, c.alpha1, c.alpha2), (5.0, 0.4, 1.0, 1.0));
        assert_eq!(c.cutoffs, vec![10, 50, 100]);
    }

    #[test]
    fn precedence_cli_over_file_over_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"model": "wmf", "train": {"k": 7, "seed": 3}, "s_coeff": 2}"#).unwrap();
        let c = RunConfig::load(Some(&path), &["train.k=9".into(), "model=expomf".into()]).unwrap();
        assert_eq!(c.train.k, 9);
        assert_eq!(c.train.seed, 3);
        assert_eq!(c.model, ModelKind::Expomf);
        assert_eq!(c.s_coeff, 2.0);
        assert_eq!(c.train.lambda_y, 0.01);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::load(None, &["train.kk=3".into()]).is_err());
        assert!(RunConfig::load(None, &["nope=3".into()]).is_err());
        assert!(RunConfig::load(None, &["model".into()]).is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"regular": {"lambda_q": 1}}"#).unwrap();
        assert!(RunConfig::load(Some(&path), &[]).is_err());
    }

    #[test]
    fn optional_and_structured_values() {
        let c = RunConfig::load(
            None,
            &[
                "threads=2".into(),
                "cutoffs=[5,20]".into(),
                "refit={\"every-n\":3}".into(),
                "interactions=data/x.tsv".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.threads, Some(2));
        assert_eq!(c.cutoffs, vec![5, 20]);
        assert_eq!(c.refit, RefitPolicy::EveryN(3));
        assert_eq!(c.interactions.as_deref(), Some(Path::new("data/x.tsv")));
        assert!(RunConfig::load(None, &["cutoffs=[0]".into()]).is_err());
    }
}
