//! One function per subcommand. Each reads what it needs from the
//! [`RunConfig`], writes its files and returns the data it reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Result};
use serde::{Deserialize, Serialize};
use serec_core::metrics::{default_buckets, evaluate_grouped, group_by_friends, metric_order};
use serec_core::synthetic::generate as generate_synthetic;
use serec_core::{
    dataset_stats, e_step, evaluate as evaluate_model, prune_social, split as split_data, EvalReport,
    ExposurePrior, IdMap, InteractionMatrix, Matrix, SocialGraph, StatsReport,
};

use crate::config::RunConfig;
use crate::io::{self, SplitData, SplitMeta};
use crate::model::{load_model, save_model, train_model, ModelMeta};

fn require<'a>(value: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| anyhow!(UsageError(format!("missing `{key}` (set it in the config or with --set {key}=...)"))))
}

/// An error in how the program was invoked rather than in what it ran on.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn social_for(cfg: &RunConfig, users: &IdMap) -> Result<Option<SocialGraph>> {
    cfg.social
        .as_deref()
        .map(|p| io::load_social(p, users).map(|(g, _)| g))
        .transpose()
}

pub fn stats(cfg: &RunConfig) -> Result<StatsReport> {
    let loaded = io::load_interactions(require(&cfg.interactions, "interactions")?, cfg.min_rating)?;
    let graph = match social_for(cfg, &loaded.users)? {
        Some(g) => g,
        None => SocialGraph::empty(loaded.matrix.n_users()),
    };
    let report = dataset_stats(&loaded.matrix, &graph)?;
    if let Some(out) = &cfg.output {
        io::write_json(out, &report)?;
    }
    Ok(report)
}

pub fn split(cfg: &RunConfig) -> Result<SplitMeta> {
    let source = require(&cfg.interactions, "interactions")?;
    let out = require(&cfg.output, "output")?;
    let loaded = io::load_interactions(source, cfg.min_rating)?;
    let s = split_data(&loaded.matrix, cfg.split, cfg.split_seed)?;
    let meta = SplitMeta {
        seed: cfg.split_seed,
        ratios: cfg.split,
        n_users: loaded.matrix.n_users(),
        n_items: loaded.matrix.n_items(),
        n_train: s.train.nnz(),
        n_validation: s.validation.nnz(),
        n_test: s.test.nnz(),
        source: Some(source.to_path_buf()),
    };
    let data = SplitData {
        split: s,
        users: loaded.users,
        items: loaded.items,
        meta: meta.clone(),
    };
    io::write_split(out, &data)?;
    Ok(meta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    /// Wall-clock seconds per repeat.
    pub samples: Vec<f64>,
    pub mean: f64,
    /// Largest absolute distance of a sample from the mean.
    pub max_deviation: f64,
    pub threads: usize,
}

impl Timing {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let mean = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
        let max_deviation = samples.iter().map(|s| (s - mean).abs()).fold(0.0, f64::max);
        Timing {
            samples,
            mean,
            max_deviation,
            threads: rayon::current_num_threads(),
        }
    }
}

pub fn format_trace(initial: f64, trace: &[f64]) -> String {
    let mut out = String::from("iteration\tobjective\n");
    for (n, v) in std::iter::once(&initial).chain(trace).enumerate() {
        let _ = writeln!(out, "{n}\t{v:?}");
    }
    out
}

pub fn train(cfg: &RunConfig) -> Result<ModelMeta> {
    let data = io::read_split(require(&cfg.split_dir, "split_dir")?)?;
    let out = require(&cfg.output, "output")?;
    let graph = social_for(cfg, &data.users)?;
    if graph.is_none() && cfg.model.uses_social() {
        log::warn!("{} without a social file: training on an empty graph", cfg.model.name());
    }
    let mcfg = cfg.model_config();
    let mut samples = Vec::with_capacity(cfg.repeats);
    let mut last = None;
    for r in 0..cfg.repeats {
        let start = Instant::now();
        let trained = train_model(&mcfg, &data.split.train, graph.as_ref())?;
        let secs = start.elapsed().as_secs_f64();
        log::info!(
            "repeat {r}: {} iterations, objective {:.6}, {secs:.3}s",
            trained.fit.iterations(),
            trained.fit.final_objective()
        );
        samples.push(secs);
        last = Some(trained);
    }
    let trained = last.ok_or_else(|| anyhow!("repeats must be at least 1"))?;
    let meta = save_model(out, &trained, &data.users, &data.items)?;
    io::write_text(&out.join("trace.tsv"), &format_trace(trained.fit.initial_objective, &trained.fit.trace))?;
    io::write_json(&out.join("timing.json"), &Timing::from_samples(samples))?;
    Ok(meta)
}

fn check_same_ids(model: &IdMap, split: &IdMap, what: &str) -> Result<()> {
    if model.ids() != split.ids() {
        bail!("model and split disagree on {what} ids ({} vs {})", model.len(), split.len());
    }
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<EvalReport> {
    let model = load_model(require(&cfg.model_dir, "model_dir")?)?;
    let data = io::read_split(require(&cfg.split_dir, "split_dir")?)?;
    check_same_ids(&model.users, &data.users, "user")?;
    check_same_ids(&model.items, &data.items, "item")?;
    let report = evaluate_model(&model.factors, &data.split, cfg.eval_target, &cfg.cutoffs)?;
    if let Some(out) = &cfg.output {
        io::write_json(out, &report)?;
    }
    Ok(report)
}

/// Two-column TSV: metric name, value.
pub fn format_report(label: &str, report: &EvalReport) -> String {
    let mut out = format!("metric\t{label}\n");
    for k in metric_order(report.metrics.keys()) {
        let _ = writeln!(out, "{k}\t{:.6}", report.metrics[&k]);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub bucket: String,
    pub n_users_evaluated: usize,
    pub metrics: BTreeMap<String, f64>,
}

/// Recall per friend-count bucket. Buckets without evaluable users are
/// left out.
pub fn friend_groups(cfg: &RunConfig) -> Result<Vec<GroupRow>> {
    let model = load_model(require(&cfg.model_dir, "model_dir")?)?;
    let data = io::read_split(require(&cfg.split_dir, "split_dir")?)?;
    check_same_ids(&model.users, &data.users, "user")?;
    let graph = match social_for(cfg, &data.users)? {
        Some(g) => g,
        None => model.graph.clone().unwrap_or_else(|| SocialGraph::empty(data.users.len())),
    };
    let groups = group_by_friends(&graph, &default_buckets())?;
    let report = evaluate_grouped(&model.factors, &data.split, cfg.eval_target, &cfg.cutoffs, &groups)?;
    let rows: Vec<GroupRow> = report
        .groups
        .into_iter()
        .map(|g| GroupRow {
            bucket: g.label,
            n_users_evaluated: g.n_users_evaluated,
            metrics: g.metrics.into_iter().filter(|(k, _)| k.starts_with("recall@")).collect(),
        })
        .collect();
    if let Some(out) = &cfg.output {
        io::write_text(out, &format_groups(&rows))?;
    }
    Ok(rows)
}

pub fn format_groups(rows: &[GroupRow]) -> String {
    let keys = metric_order(rows.iter().flat_map(|r| r.metrics.keys()));
    let mut out = String::from("bucket\tn_users");
    for k in &keys {
        let _ = write!(out, "\t{k}");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(out, "{}\t{}", r.bucket, r.n_users_evaluated);
        for k in &keys {
            let _ = write!(out, "\t{:.6}", r.metrics.get(k).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBin {
    /// Inclusive popularity range of the bin.
    pub popularity_min: usize,
    pub popularity_max: usize,
    pub n_items: usize,
    pub mean_popularity: f64,
    pub mean_prior: f64,
    pub mean_posterior: f64,
}

/// Bins items by training popularity and averages the user's prior and
/// posterior exposure within each bin.
pub fn exposure_curve_from(
    train: &InteractionMatrix,
    popularity: &[usize],
    prior_row: &[f64],
    posterior_row: &[f64],
    bin_width: usize,
) -> Vec<CurveBin> {
    let mut bins: BTreeMap<usize, (usize, f64, f64, f64)> = BTreeMap::new();
    for i in 0..train.n_items() {
        let b = popularity[i] / bin_width;
        let e = bins.entry(b).or_default();
        e.0 += 1;
        e.1 += popularity[i] as f64;
        e.2 += prior_row[i];
        e.3 += posterior_row[i];
    }
    bins.into_iter()
        .map(|(b, (n, pop, mu, p))| CurveBin {
            popularity_min: b * bin_width,
            popularity_max: b * bin_width + bin_width - 1,
            n_items: n,
            mean_popularity: pop / n as f64,
            mean_prior: mu / n as f64,
            mean_posterior: p / n as f64,
        })
        .collect()
}

pub fn exposure_curve(cfg: &RunConfig, user_id: &str) -> Result<Vec<CurveBin>> {
    let model = load_model(require(&cfg.model_dir, "model_dir")?)?;
    let data = io::read_split(require(&cfg.split_dir, "split_dir")?)?;
    check_same_ids(&model.users, &data.users, "user")?;
    let user = model
        .users
        .get(user_id)
        .ok_or_else(|| anyhow!(UsageError(format!("unknown user id {user_id:?}"))))?;
    let train = &data.split.train;
    let prior = model.prior(train)?;
    let mut mu = vec![0.0; train.n_items()];
    prior.mu_row(user, &mut mu);
    let posterior = e_step(train, &model.factors, &prior)?;
    let popularity: Vec<usize> = (0..train.n_items()).map(|i| train.item_count(i)).collect();
    let bins = exposure_curve_from(train, &popularity, &mu, posterior.row_slice(user), cfg.bin_width);
    if let Some(out) = &cfg.output {
        io::write_text(out, &format_curve(&bins))?;
    }
    Ok(bins)
}

pub fn format_curve(bins: &[CurveBin]) -> String {
    let mut out = String::from("popularity_min\tpopularity_max\tn_items\tmean_popularity\tmean_prior\tmean_posterior\n");
    for b in bins {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}\t{:.8}\t{:.8}",
            b.popularity_min, b.popularity_max, b.n_items, b.mean_popularity, b.mean_prior, b.mean_posterior
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub keep_prob: f64,
    pub n_edges: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub model: String,
    pub rows: Vec<RobustnessRow>,
    /// `(m(full) - m(least)) / m(full)` per metric, between the largest and
    /// smallest keep probability.
    pub decay_ratio: BTreeMap<String, f64>,
}

pub fn decay_ratios(rows: &[RobustnessRow]) -> BTreeMap<String, f64> {
    let by_prob = |best: bool| {
        rows.iter().fold(None::<&RobustnessRow>, |acc, r| match acc {
            Some(a) if (best && a.keep_prob >= r.keep_prob) || (!best && a.keep_prob <= r.keep_prob) => Some(a),
            _ => Some(r),
        })
    };
    let (Some(full), Some(least)) = (by_prob(true), by_prob(false)) else {
        return BTreeMap::new();
    };
    full.metrics
        .iter()
        .map(|(k, &top)| {
            let low = least.metrics.get(k).copied().unwrap_or(top);
            let ratio = if top == 0.0 { 0.0 } else { (top - low) / top };
            (k.clone(), ratio)
        })
        .collect()
}

pub fn robustness(cfg: &RunConfig) -> Result<RobustnessReport> {
    if cfg.keep_probs.is_empty() {
        return Err(anyhow!(UsageError("keep_probs must not be empty".into())));
    }
    let data = io::read_split(require(&cfg.split_dir, "split_dir")?)?;
    let graph = social_for(cfg, &data.users)?
        .ok_or_else(|| anyhow!(UsageError("robustness needs a `social` file".into())))?;
    let mcfg = cfg.model_config();
    let mut rows = Vec::with_capacity(cfg.keep_probs.len());
    for &p in &cfg.keep_probs {
        let pruned = prune_social(&graph, p, cfg.prune_seed)?;
        let trained = train_model(&mcfg, &data.split.train, Some(&pruned))?;
        let report = evaluate_model(&trained.fit.model, &data.split, cfg.eval_target, &cfg.cutoffs)?;
        log::info!("keep {p}: {} edges, {:?}", pruned.n_edges(), report.metrics);
        rows.push(RobustnessRow {
            keep_prob: p,
            n_edges: pruned.n_edges(),
            metrics: report.metrics,
        });
    }
    let report = RobustnessReport {
        model: cfg.model.name().into(),
        decay_ratio: decay_ratios(&rows),
        rows,
    };
    if let Some(out) = &cfg.output {
        io::write_json(out, &report)?;
    }
    Ok(report)
}

pub fn format_robustness(report: &RobustnessReport) -> String {
    let keys = metric_order(report.decay_ratio.keys());
    let mut out = String::from("keep_prob\tn_edges");
    for k in &keys {
        let _ = write!(out, "\t{k}");
    }
    out.push('\n');
    for r in &report.rows {
        let _ = write!(out, "{}\t{}", r.keep_prob, r.n_edges);
        for k in &keys {
            let _ = write!(out, "\t{:.6}", r.metrics.get(k).copied().unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out.push_str("decay_ratio\t");
    for k in &keys {
        let _ = write!(out, "\t{:.6}", report.decay_ratio[k]);
    }
    out.push('\n');
    out
}

/// Writes a synthetic dataset: `interactions.tsv`, `social.tsv`, and the
/// generating parameters under `truth/`. Users and items are named `u<n>`
/// and `i<n>` after their generator index, which is also the row index of
/// every `truth/` file.
pub fn generate(cfg: &RunConfig) -> Result<(usize, usize)> {
    let out = require(&cfg.output, "output")?;
    let spec = &cfg.synthetic;
    let data = generate_synthetic(spec)?;
    let users = IdMap::from_ids((0..spec.n_users).map(|u| format!("u{u}")))?;
    let items = IdMap::from_ids((0..spec.n_items).map(|i| format!("i{i}")))?;
    io::write_text(&out.join("interactions.tsv"), &io::format_interactions(&data.interactions, &users, &items))?;
    io::write_text(&out.join("social.tsv"), &io::format_social(&data.social, &users))?;
    let truth = out.join("truth");
    io::write_matrix(&truth.join("theta.tsv"), &data.theta)?;
    io::write_matrix(&truth.join("beta.tsv"), &data.beta)?;
    io::write_matrix(&truth.join("mu.tsv"), &data.mu)?;
    let alpha = Matrix::from_vec(
        spec.n_users,
        spec.n_items,
        data.alpha.iter().map(|&a| if a { 1.0 } else { 0.0 }).collect(),
    )?;
    io::write_matrix(&truth.join("alpha.tsv"), &alpha)?;
    io::write_json(&truth.join("spec.json"), spec)?;
    Ok((data.interactions.nnz(), data.social.n_edges()))
}

/// Worker threads for a run: one when deterministic, else the configured
/// count or every available core.
pub fn thread_count(cfg: &RunConfig, deterministic: bool) -> usize {
    if deterministic {
        1
    } else {
        cfg.threads
            .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}
