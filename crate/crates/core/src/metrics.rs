//! Top-N ranking metrics with binary relevance, and user grouping by
//! number of friends.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::data::{DatasetSplit, InteractionMatrix, SocialGraph};
use crate::error::{Error, Result};
use crate::par;
use crate::rating::FactorModel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedList {
    pub user: usize,
    pub items: Vec<usize>,
}

/// Descending score, ties broken by ascending index. Adding `0.0` maps
/// `-0.0` to `0.0` so the two compare equal under `total_cmp`.
#[inline]
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    (scores[b] + 0.0)
        .total_cmp(&(scores[a] + 0.0))
        .then(a.cmp(&b))
}

/// Top `n` items by score, skipping `excluded`.
pub fn rank_items(user: usize, scores: &[f64], excluded: &[usize], n: usize) -> RankedList {
    let mut mask = vec![false; scores.len()];
    for &i in excluded {
        if i < mask.len() {
            mask[i] = true;
        }
    }
    RankedList {
        user,
        items: top_n(scores, &mask, n),
    }
}

fn top_n(scores: &[f64], excluded: &[bool], n: usize) -> Vec<usize> {
    let mut cand: Vec<usize> = (0..scores.len()).filter(|&i| !excluded[i]).collect();
    let n = n.min(cand.len());
    if n == 0 {
        return Vec::new();
    }
    if n < cand.len() {
        cand.select_nth_unstable_by(n - 1, |&a, &b| rank_order(scores, a, b));
        cand.truncate(n);
    }
    cand.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    cand
}

#[inline]
fn is_relevant(relevant: &[usize], item: usize) -> bool {
    relevant.binary_search(&item).is_ok()
}

/// `|top-k ∩ relevant| / min(k, |relevant|)`; `None` for an empty
/// relevant set. `relevant` must be sorted.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let hits = ranked.iter().take(k).filter(|&&i| is_relevant(relevant, i)).count();
    Some(hits as f64 / k.min(relevant.len()) as f64)
}

/// Average precision truncated at `k`, normalized by `min(k, |relevant|)`.
pub fn map_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (r, &item) in ranked.iter().take(k).enumerate() {
        if is_relevant(relevant, item) {
            hits += 1;
            sum += hits as f64 / (r + 1) as f64;
        }
    }
    Some(sum / k.min(relevant.len()) as f64)
}

/// Binary-gain NDCG at `k`.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
    if relevant.is_empty() || k == 0 {
        return None;
    }
    let discount = |r: usize| 1.0 / libm::log2(r as f64 + 2.0);
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, &i)| is_relevant(relevant, i))
        .map(|(r, _)| discount(r))
        .sum();
    let idcg: f64 = (0..k.min(relevant.len())).map(discount).sum();
    Some(dcg / idcg)
}

/// Which held-out set to score against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum EvalTarget {
    /// Test items; train and validation items are excluded from ranking.
    #[default]
    Test,
    /// Validation items; train items are excluded.
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Recall,
    Map,
    Ndcg,
}

impl MetricKind {
    pub const ALL: [MetricKind; 3] = [MetricKind::Recall, MetricKind::Map, MetricKind::Ndcg];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Recall => "recall",
            MetricKind::Map => "map",
            MetricKind::Ndcg => "ndcg",
        }
    }

    pub fn key(self, k: usize) -> String {
        format!("{}@{}", self.name(), k)
    }

    fn compute(self, ranked: &[usize], relevant: &[usize], k: usize) -> Option<f64> {
        match self {
            MetricKind::Recall => recall_at_k(ranked, relevant, k),
            MetricKind::Map => map_at_k(ranked, relevant, k),
            MetricKind::Ndcg => ndcg_at_k(ranked, relevant, k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: String,
    pub n_users_evaluated: usize,
    pub metrics: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean over evaluated users, keyed `recall@10`, `map@100`, ...
    pub metrics: BTreeMap<String, f64>,
    pub n_users_evaluated: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupReport>,
}

impl EvalReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }
}

fn metric_keys(cutoffs: &[usize]) -> Vec<(MetricKind, usize)> {
    MetricKind::ALL
        .iter()
        .flat_map(|&m| cutoffs.iter().map(move |&k| (m, k)))
        .collect()
}

fn validate_cutoffs(cutoffs: &[usize]) -> Result<()> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::InvalidArgument(format!(
            "cutoffs must be a non-empty list of positive integers, got {cutoffs:?}"
        )));
    }
    Ok(())
}

/// Per-user metric values in `metric_keys` order, or `None` when the user
/// has nothing relevant.
pub fn user_metrics<S>(
    user: usize,
    score: &S,
    n_items: usize,
    relevant: &InteractionMatrix,
    exclude: &[&InteractionMatrix],
    cutoffs: &[usize],
) -> Option<Vec<f64>>
where
    S: Fn(usize, &mut [f64]) + ?Sized,
{
    let rel = relevant.items_of(user);
    if rel.is_empty() {
        return None;
    }
    let mut scores = vec![0.0; n_items];
    score(user, &mut scores);
    let mut mask = vec![false; n_items];
    for m in exclude {
        for &i in m.items_of(user) {
            mask[i] = true;
        }
    }
    let depth = cutoffs.iter().copied().max().unwrap_or(0);
    let ranked = top_n(&scores, &mask, depth);
    Some(
        metric_keys(cutoffs)
            .into_iter()
            .map(|(m, k)| m.compute(&ranked, rel, k).unwrap_or(0.0))
            .collect(),
    )
}

/// Mean metrics over `users` (all users when `None`) with at least one
/// relevant item. Ranking depends on `score` alone.
pub fn evaluate_scores<S>(
    score: &S,
    n_users: usize,
    n_items: usize,
    relevant: &InteractionMatrix,
    exclude: &[&InteractionMatrix],
    cutoffs: &[usize],
    users: Option<&[usize]>,
) -> Result<EvalReport>
where
    S: Fn(usize, &mut [f64]) + Sync + ?Sized,
{
    validate_cutoffs(cutoffs)?;
    for m in core::iter::once(relevant).chain(exclude.iter().copied()) {
        if m.n_users() != n_users || m.n_items() != n_items {
            return Err(Error::DimensionMismatch(format!(
                "scorer is {n_users}x{n_items}, interactions are {}x{}",
                m.n_users(),
                m.n_items()
            )));
        }
    }
    let all: Vec<usize>;
    let users = match users {
        Some(u) => u,
        None => {
            all = (0..n_users).collect();
            &all
        }
    };
    let per_user = par::map_indices(users.len(), |j| {
        user_metrics(users[j], score, n_items, relevant, exclude, cutoffs)
    });
    let keys = metric_keys(cutoffs);
    let mut sums = vec![0.0; keys.len()];
    let mut n = 0usize;
    for values in per_user.into_iter().flatten() {
        n += 1;
        for (s, v) in sums.iter_mut().zip(values) {
            *s += v;
        }
    }
    if n == 0 {
        return Err(Error::NoEvaluableUsers);
    }
    let metrics = keys
        .iter()
        .zip(sums)
        .map(|(&(m, k), s)| (m.key(k), s / n as f64))
        .collect();
    Ok(EvalReport {
        metrics,
        n_users_evaluated: n,
        groups: Vec::new(),
    })
}

fn target_sets(split: &DatasetSplit, target: EvalTarget) -> (&InteractionMatrix, Vec<&InteractionMatrix>) {
    match target {
        EvalTarget::Test => (&split.test, vec![&split.train, &split.validation]),
        EvalTarget::Validation => (&split.validation, vec![&split.train]),
    }
}

fn check_model(model: &FactorModel, split: &DatasetSplit) -> Result<()> {
    if model.n_users() != split.train.n_users() || model.n_items() != split.train.n_items() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}, split is {}x{}",
            model.n_users(),
            model.n_items(),
            split.train.n_users(),
            split.train.n_items()
        )));
    }
    Ok(())
}

/// Scores every user with `theta_u^T beta` and averages the metrics over
/// users that have held-out items in `target`.
pub fn evaluate(
    model: &FactorModel,
    split: &DatasetSplit,
    target: EvalTarget,
    cutoffs: &[usize],
) -> Result<EvalReport> {
    check_model(model, split)?;
    let (relevant, exclude) = target_sets(split, target);
    let score = |u: usize, out: &mut [f64]| model.predict_scores_into(u, out);
    evaluate_scores(
        &score,
        model.n_users(),
        model.n_items(),
        relevant,
        &exclude,
        cutoffs,
        None,
    )
}

/// [`evaluate`] plus a breakdown over user groups. Groups without any
/// evaluable user are left out of the breakdown.
pub fn evaluate_grouped(
    model: &FactorModel,
    split: &DatasetSplit,
    target: EvalTarget,
    cutoffs: &[usize],
    groups: &[(String, Vec<usize>)],
) -> Result<EvalReport> {
    let mut report = evaluate(model, split, target, cutoffs)?;
    let (relevant, exclude) = target_sets(split, target);
    let score = |u: usize, out: &mut [f64]| model.predict_scores_into(u, out);
    for (label, users) in groups {
        match evaluate_scores(
            &score,
            model.n_users(),
            model.n_items(),
            relevant,
            &exclude,
            cutoffs,
            Some(users),
        ) {
            Ok(r) => report.groups.push(GroupReport {
                label: label.clone(),
                n_users_evaluated: r.n_users_evaluated,
                metrics: r.metrics,
            }),
            Err(Error::NoEvaluableUsers) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(report)
}

/// Inclusive out-degree range; `max = None` is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FriendBucket {
    pub label: String,
    pub min: usize,
    pub max: Option<usize>,
}

impl FriendBucket {
    pub fn new(label: &str, min: usize, max: Option<usize>) -> Self {
        FriendBucket {
            label: label.into(),
            min,
            max,
        }
    }

    fn contains(&self, degree: usize) -> bool {
        degree >= self.min && self.max.is_none_or(|m| degree <= m)
    }
}

/// `0`, `1-5`, `6-15`, `15+` (the last meaning 16 or more).
pub fn default_buckets() -> Vec<FriendBucket> {
    vec![
        FriendBucket::new("0", 0, Some(0)),
        FriendBucket::new("1-5", 1, Some(5)),
        FriendBucket::new("6-15", 6, Some(15)),
        FriendBucket::new("15+", 16, None),
    ]
}

/// Partitions users by out-degree. Overlapping buckets, or a degree that
/// no bucket covers, are errors.
pub fn group_by_friends(
    graph: &SocialGraph,
    buckets: &[FriendBucket],
) -> Result<Vec<(String, Vec<usize>)>> {
    for (a, ba) in buckets.iter().enumerate() {
        if ba.max.is_some_and(|m| m < ba.min) {
            return Err(Error::InvalidArgument(format!("bucket {} is empty", ba.label)));
        }
        for bb in &buckets[a + 1..] {
            let a_hi = ba.max.unwrap_or(usize::MAX);
            let b_hi = bb.max.unwrap_or(usize::MAX);
            if ba.min <= b_hi && bb.min <= a_hi {
                return Err(Error::InvalidArgument(format!(
                    "buckets {} and {} overlap",
                    ba.label, bb.label
                )));
            }
        }
    }
    let mut out: Vec<(String, Vec<usize>)> =
        buckets.iter().map(|b| (b.label.clone(), Vec::new())).collect();
    for u in 0..graph.n_users() {
        let d = graph.out_degree(u);
        let slot = buckets.iter().position(|b| b.contains(d)).ok_or_else(|| {
            Error::InvalidArgument(format!("no bucket covers out-degree {d} (user {u})"))
        })?;
        out[slot].1.push(u);
    }
    Ok(out)
}

/// Metric keys in display order: recall, MAP, NDCG, each by ascending
/// cutoff. Unrecognized keys go last in name order.
pub fn metric_order<'a, I>(keys: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a String>,
{
    let mut sorted: Vec<(usize, usize, String)> = Vec::new();
    for key in keys {
        if sorted.iter().any(|(_, _, k)| k == key) {
            continue;
        }
        let (name, cut) = key.split_once('@').unwrap_or((key.as_str(), ""));
        let rank = MetricKind::ALL
            .iter()
            .position(|m| m.name() == name)
            .unwrap_or(MetricKind::ALL.len());
        sorted.push((rank, cut.parse().unwrap_or(usize::MAX), key.clone()));
    }
    sorted.sort();
    sorted.into_iter().map(|(_, _, k)| k).collect()
}

/// Aligned text table, one row per metric and one column per model.
pub fn format_table(columns: &[(&str, &EvalReport)]) -> String {
    let keys = metric_order(columns.iter().flat_map(|(_, r)| r.metrics.keys()));
    let width = columns.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(8);
    let key_width = keys.iter().map(|k| k.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = write!(out, "{:<key_width$}", "metric");
    for (name, _) in columns {
        let _ = write!(out, "  {name:>width$}");
    }
    out.push('\n');
    for key in &keys {
        let _ = write!(out, "{key:<key_width$}");
        for (_, r) in columns {
            match r.get(key) {
                Some(v) => {
                    let _ = write!(out, "  {v:>width$.4}");
                }
                None => {
                    let _ = write!(out, "  {:>width$}", "-");
                }
            }
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests;
