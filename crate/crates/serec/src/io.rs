//! File formats: interaction and trust lists, id maps, dense TSV matrices
//! and JSON documents.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serec_core::{
    parse_interactions, parse_interactions_with, parse_social, DatasetSplit, IdMap,
    InteractionMatrix, LoadedInteractions, Matrix, SocialGraph, SocialLoadReport, SplitRatios,
};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_interactions(path: &Path, min_rating: Option<f64>) -> Result<LoadedInteractions> {
    let text = read_text(path)?;
    parse_interactions(&text, min_rating).with_context(|| format!("in {}", path.display()))
}

pub fn load_social(path: &Path, users: &IdMap) -> Result<(SocialGraph, SocialLoadReport)> {
    let text = read_text(path)?;
    let (graph, report) = parse_social(&text, users).with_context(|| format!("in {}", path.display()))?;
    if report.dropped_self_loops + report.dropped_duplicates + report.dropped_unknown_users > 0 {
        log::info!(
            "{}: dropped {} self-loops, {} duplicates, {} edges with unknown users",
            path.display(),
            report.dropped_self_loops,
            report.dropped_duplicates,
            report.dropped_unknown_users
        );
    }
    Ok((graph, report))
}

/// `user<TAB>item` per click, using the original ids.
pub fn format_interactions(m: &InteractionMatrix, users: &IdMap, items: &IdMap) -> String {
    let mut out = String::new();
    for (u, i) in m.pairs() {
        let _ = writeln!(out, "{}\t{}", users.ids()[u], items.ids()[i]);
    }
    out
}

pub fn format_social(g: &SocialGraph, users: &IdMap) -> String {
    let mut out = String::new();
    for (a, b) in g.edges() {
        let _ = writeln!(out, "{}\t{}", users.ids()[a], users.ids()[b]);
    }
    out
}

/// `index<TAB>id`, one line per entity in index order.
pub fn format_id_map(map: &IdMap) -> String {
    let mut out = String::new();
    for (i, id) in map.ids().iter().enumerate() {
        let _ = writeln!(out, "{i}\t{id}");
    }
    out
}

pub fn parse_id_map(text: &str) -> Result<IdMap> {
    let mut ids = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (idx, id) = line
            .split_once('\t')
            .with_context(|| format!("id map line {}: expected `index<TAB>id`", n + 1))?;
        let idx: usize = idx.parse().with_context(|| format!("id map line {}: bad index", n + 1))?;
        if idx != ids.len() {
            bail!("id map line {}: index {idx} out of order", n + 1);
        }
        ids.push(id.to_string());
    }
    Ok(IdMap::from_ids(ids)?)
}

/// Row-per-entity, tab-separated, shortest round-trip formatting.
pub fn format_matrix(m: &Matrix) -> String {
    let mut out = String::new();
    for row in m.iter_rows() {
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                out.push('\t');
            }
            let _ = write!(out, "{v:?}");
        }
        out.push('\n');
    }
    out
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let mut data = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let before = data.len();
        for field in line.split('\t') {
            let v: f64 = field
                .trim()
                .parse()
                .with_context(|| format!("line {}: {field:?} is not a number", n + 1))?;
            data.push(v);
        }
        let width = data.len() - before;
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => bail!("line {}: {width} columns, expected {c}", n + 1),
            _ => {}
        }
        rows += 1;
    }
    Ok(Matrix::from_vec(rows, cols.unwrap_or(0), data)?)
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    write_text(path, &format_matrix(m))
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    parse_matrix(&read_text(path)?).with_context(|| format!("in {}", path.display()))
}

pub fn write_vector(path: &Path, v: &[f64]) -> Result<()> {
    let mut out = String::with_capacity(v.len() * 20);
    for x in v {
        let _ = writeln!(out, "{x:?}");
    }
    write_text(path, &out)
}

pub fn read_vector(path: &Path) -> Result<Vec<f64>> {
    let m = read_matrix(path)?;
    if m.cols() > 1 {
        bail!("{}: expected one value per line", path.display());
    }
    Ok(m.into_vec())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMeta {
    pub seed: u64,
    pub ratios: SplitRatios,
    pub n_users: usize,
    pub n_items: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub source: Option<PathBuf>,
}

/// A split on disk together with the id maps that index it.
#[derive(Debug, Clone)]
pub struct SplitData {
    pub split: DatasetSplit,
    pub users: IdMap,
    pub items: IdMap,
    pub meta: SplitMeta,
}

pub const SPLIT_FILES: [&str; 3] = ["train.tsv", "validation.tsv", "test.tsv"];

pub fn write_split(dir: &Path, data: &SplitData) -> Result<()> {
    let parts = [&data.split.train, &data.split.validation, &data.split.test];
    for (name, m) in SPLIT_FILES.iter().zip(parts) {
        write_text(&dir.join(name), &format_interactions(m, &data.users, &data.items))?;
    }
    write_text(&dir.join("users.tsv"), &format_id_map(&data.users))?;
    write_text(&dir.join("items.tsv"), &format_id_map(&data.items))?;
    write_json(&dir.join("split-meta.json"), &data.meta)
}

pub fn read_split(dir: &Path) -> Result<SplitData> {
    let meta: SplitMeta = read_json(&dir.join("split-meta.json"))?;
    let users = parse_id_map(&read_text(&dir.join("users.tsv"))?).context("users.tsv")?;
    let items = parse_id_map(&read_text(&dir.join("items.tsv"))?).context("items.tsv")?;
    let mut parts = Vec::with_capacity(3);
    for name in SPLIT_FILES {
        let path = dir.join(name);
        let m = parse_interactions_with(&read_text(&path)?, &users, &items)
            .with_context(|| format!("in {}", path.display()))?;
        parts.push(m);
    }
    let test = parts.pop().unwrap_or_else(|| unreachable!());
    let validation = parts.pop().unwrap_or_else(|| unreachable!());
    let train = parts.pop().unwrap_or_else(|| unreachable!());
    Ok(SplitData {
        split: DatasetSplit {
            train,
            validation,
            test,
            seed: meta.seed,
            ratios: meta.ratios,
        },
        users,
        items,
        meta,
    })
}
