//! Interaction and trust data: binarized click matrices, directed trust
//! graphs, id mappings, random splits and dataset statistics.
//!
//! Nothing in here touches the filesystem. Text parsing works on `&str`
//! so the std companion can decide where the bytes come from.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed adjacency in both directions for a binary user x item matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    n_users: usize,
    n_items: usize,
    user_ptr: Vec<usize>,
    user_items: Vec<usize>,
    item_ptr: Vec<usize>,
    item_users: Vec<usize>,
}

fn compress(n_rows: usize, pairs: &[(usize, usize)]) -> (Vec<usize>, Vec<usize>) {
    let mut ptr = vec![0usize; n_rows + 1];
    for &(r, _) in pairs {
        ptr[r + 1] += 1;
    }
    for r in 0..n_rows {
        ptr[r + 1] += ptr[r];
    }
    let mut fill = ptr.clone();
    let mut idx = vec![0usize; pairs.len()];
    for &(r, c) in pairs {
        idx[fill[r]] = c;
        fill[r] += 1;
    }
    for r in 0..n_rows {
        idx[ptr[r]..ptr[r + 1]].sort_unstable();
    }
    (ptr, idx)
}

impl InteractionMatrix {
    /// Builds the matrix from `(user, item)` pairs. Duplicates collapse;
    /// out-of-range indices are rejected.
    pub fn from_pairs(n_users: usize, n_items: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut uniq: Vec<(usize, usize)> = Vec::with_capacity(pairs.len());
        for &(u, i) in pairs {
            if u >= n_users || i >= n_items {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {i}) outside {n_users} x {n_items}"
                )));
            }
            uniq.push((u, i));
        }
        uniq.sort_unstable();
        uniq.dedup();
        let (user_ptr, user_items) = compress(n_users, &uniq);
        let flipped: Vec<(usize, usize)> = uniq.iter().map(|&(u, i)| (i, u)).collect();
        let (item_ptr, item_users) = compress(n_items, &flipped);
        Ok(InteractionMatrix {
            n_users,
            n_items,
            user_ptr,
            user_items,
            item_ptr,
            item_users,
        })
    }

    pub fn empty(n_users: usize, n_items: usize) -> Self {
        Self::from_pairs(n_users, n_items, &[]).expect("empty matrix is always valid")
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    /// Number of stored clicks.
    pub fn nnz(&self) -> usize {
        self.user_items.len()
    }

    /// Items clicked by `user`, ascending.
    #[inline]
    pub fn items_of(&self, user: usize) -> &[usize] {
        &self.user_items[self.user_ptr[user]..self.user_ptr[user + 1]]
    }

    /// Users who clicked `item`, ascending.
    #[inline]
    pub fn users_of(&self, item: usize) -> &[usize] {
        &self.item_users[self.item_ptr[item]..self.item_ptr[item + 1]]
    }

    /// Click count `n_i` of an item.
    pub fn item_count(&self, item: usize) -> usize {
        self.item_ptr[item + 1] - self.item_ptr[item]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        user < self.n_users && self.items_of(user).binary_search(&item).is_ok()
    }

    /// All pairs in user-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_users).flat_map(move |u| self.items_of(u).iter().map(move |&i| (u, i)))
    }

    pub fn to_pairs(&self) -> Vec<(usize, usize)> {
        self.pairs().collect()
    }

    /// Union with another matrix of the same shape.
    pub fn union(&self, other: &InteractionMatrix) -> Result<InteractionMatrix> {
        self.check_same_shape(other)?;
        let mut pairs = self.to_pairs();
        pairs.extend(other.pairs());
        InteractionMatrix::from_pairs(self.n_users, self.n_items, &pairs)
    }

    pub(crate) fn check_same_shape(&self, other: &InteractionMatrix) -> Result<()> {
        if self.n_users != other.n_users || self.n_items != other.n_items {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} vs {}x{}",
                self.n_users, self.n_items, other.n_users, other.n_items
            )));
        }
        Ok(())
    }
}

/// Directed trust graph, `Friends(u)` being the out-neighbours of `u`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SocialGraph {
    n_users: usize,
    ptr: Vec<usize>,
    targets: Vec<usize>,
}

/// What was thrown away while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SocialLoadReport {
    pub dropped_self_loops: usize,
    pub dropped_duplicates: usize,
    pub dropped_unknown_users: usize,
}

impl SocialGraph {
    /// Builds a graph from `(truster, trustee)` edges, dropping self-loops
    /// and duplicates.
    pub fn from_edges(n_users: usize, edges: &[(usize, usize)]) -> Result<(Self, SocialLoadReport)> {
        let mut report = SocialLoadReport::default();
        let mut kept = Vec::with_capacity(edges.len());
        for &(a, b) in edges {
            if a >= n_users || b >= n_users {
                return Err(Error::InvalidArgument(format!(
                    "edge ({a}, {b}) outside {n_users} users"
                )));
            }
            if a == b {
                report.dropped_self_loops += 1;
                continue;
            }
            kept.push((a, b));
        }
        kept.sort_unstable();
        let before = kept.len();
        kept.dedup();
        report.dropped_duplicates = before - kept.len();
        let (ptr, targets) = compress(n_users, &kept);
        Ok((SocialGraph { n_users, ptr, targets }, report))
    }

    pub fn empty(n_users: usize) -> Self {
        SocialGraph {
            n_users,
            ptr: vec![0; n_users + 1],
            targets: Vec::new(),
        }
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_edges(&self) -> usize {
        self.targets.len()
    }

    #[inline]
    pub fn friends(&self, user: usize) -> &[usize] {
        &self.targets[self.ptr[user]..self.ptr[user + 1]]
    }

    pub fn out_degree(&self, user: usize) -> usize {
        self.ptr[user + 1] - self.ptr[user]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.friends(from).binary_search(&to).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.n_users).flat_map(move |u| self.friends(u).iter().map(move |&k| (u, k)))
    }
}

/// Dense first-seen indexing of external string ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    ids: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Index of `id`, assigning the next free one if unseen.
    pub fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn get(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Rebuilds a map from ids listed in index order. Duplicates are an error.
    pub fn from_ids<I, S>(ids: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut map = IdMap::new();
        for (n, id) in ids.into_iter().enumerate() {
            let id = id.as_ref();
            if map.get(id).is_some() {
                return Err(Error::Parse {
                    line: n + 1,
                    reason: format!("duplicate id {id:?}"),
                });
            }
            map.intern(id);
        }
        Ok(map)
    }
}

/// Parsed interaction file together with its id mappings.
#[derive(Debug, Clone)]
pub struct LoadedInteractions {
    pub matrix: InteractionMatrix,
    pub users: IdMap,
    pub items: IdMap,
    /// Well-formed records read, including ones filtered by `min_rating`.
    pub records: usize,
}

fn record_fields(line: &str) -> Option<Vec<&str>> {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with('#') {
        return None;
    }
    Some(trimmed.split_whitespace().collect())
}

fn parse_rating(field: &str, line: usize) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        reason: format!("rating {field:?} is not a number"),
    })
}

/// Parses `user item [rating]` records. Ids are interned in first-seen
/// order for every well-formed record; a record becomes a click when it has
/// no rating or its rating is at least `min_rating`.
pub fn parse_interactions(text: &str, min_rating: Option<f64>) -> Result<LoadedInteractions> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut pairs = Vec::new();
    let mut records = 0;
    for (n, line) in text.lines().enumerate() {
        let Some(fields) = record_fields(line) else {
            continue;
        };
        let line_no = n + 1;
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected `user item [rating]`, got {} fields", fields.len()),
            });
        }
        let keep = match (fields.get(2), min_rating) {
            (Some(r), threshold) => {
                let r = parse_rating(r, line_no)?;
                threshold.is_none_or(|t| r >= t)
            }
            (None, _) => true,
        };
        let u = users.intern(fields[0]);
        let i = items.intern(fields[1]);
        records += 1;
        if keep {
            pairs.push((u, i));
        }
    }
    if records == 0 {
        return Err(Error::Empty);
    }
    let matrix = InteractionMatrix::from_pairs(users.len(), items.len(), &pairs)?;
    Ok(LoadedInteractions {
        matrix,
        users,
        items,
        records,
    })
}

/// Parses interaction records against fixed id maps; unknown ids are a
/// parse error. Used to reload split files with stable indices.
pub fn parse_interactions_with(text: &str, users: &IdMap, items: &IdMap) -> Result<InteractionMatrix> {
    let mut pairs = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let Some(fields) = record_fields(line) else {
            continue;
        };
        let line_no = n + 1;
        if fields.len() < 2 || fields.len() > 3 {
            return Err(Error::Parse {
                line: line_no,
                reason: format!("expected `user item [rating]`, got {} fields", fields.len()),
            });
        }
        if let Some(r) = fields.get(2) {
            parse_rating(r, line_no)?;
        }
        let u = users.get(fields[0]).ok_or_else(|| Error::Parse {
            line: line_no,
            reason: format!("unknown user id {:?}", fields[0]),
        })?;
        let i = items.get(fields[1]).ok_or_else(|| Error::Parse {
            line: line_no,
            reason: format!("unknown item id {:?}", fields[1]),
        })?;
        pairs.push((u, i));
    }
    InteractionMatrix::from_pairs(users.len(), items.len(), &pairs)
}

/// Parses `truster trustee` records. Edges naming users absent from
/// `users` are dropped and counted, as are self-loops and duplicates.
pub fn parse_social(text: &str, users: &IdMap) -> Result<(SocialGraph, SocialLoadReport)> {
    let mut edges = Vec::new();
    let mut unknown = 0;
    for (n, line) in text.lines().enumerate() {
        let Some(fields) = record_fields(line) else {
            continue;
        };
        if fields.len() != 2 {
            return Err(Error::Parse {
                line: n + 1,
                reason: format!("expected `truster trustee`, got {} fields", fields.len()),
            });
        }
        match (users.get(fields[0]), users.get(fields[1])) {
            (Some(a), Some(b)) => edges.push((a, b)),
            _ => unknown += 1,
        }
    }
    let (graph, mut report) = SocialGraph::from_edges(users.len(), &edges)?;
    report.dropped_unknown_users = unknown;
    Ok((graph, report))
}

/// Train / validation fractions; the remainder is the test set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.7,
            validation: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let ok = self.train > 0.0
            && self.validation > 0.0
            && self.train + self.validation < 1.0
            && self.train.is_finite()
            && self.validation.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "split ratios must be positive with sum < 1, got ({}, {})",
                self.train, self.validation
            )))
        }
    }

    /// `(train, validation, test)` sizes for `n` entries.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        // The epsilon keeps products like 0.7 * 10 from flooring to 6.
        let floor = |r: f64| libm::floor(r * n as f64 + 1e-9) as usize;
        let train = floor(self.train).min(n);
        let validation = floor(self.validation).min(n - train);
        (train, validation, n - train - validation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: InteractionMatrix,
    pub validation: InteractionMatrix,
    pub test: InteractionMatrix,
    pub seed: u64,
    pub ratios: SplitRatios,
}

/// Random per-interaction split driven by a seeded permutation.
pub fn split(src: &InteractionMatrix, ratios: SplitRatios, seed: u64) -> Result<DatasetSplit> {
    ratios.validate()?;
    let mut pairs = src.to_pairs();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);
    let (n_train, n_val, _) = ratios.sizes(pairs.len());
    let (nu, ni) = (src.n_users(), src.n_items());
    let train = InteractionMatrix::from_pairs(nu, ni, &pairs[..n_train])?;
    let validation = InteractionMatrix::from_pairs(nu, ni, &pairs[n_train..n_train + n_val])?;
    let test = InteractionMatrix::from_pairs(nu, ni, &pairs[n_train + n_val..])?;
    Ok(DatasetSplit {
        train,
        validation,
        test,
        seed,
        ratios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub n_users: usize,
    pub n_items: usize,
    pub n_ratings: usize,
    pub n_social_links: usize,
    pub rating_density: f64,
    pub social_density: f64,
    pub avg_social_links: f64,
    pub s_impact: f64,
}

pub fn dataset_stats(y: &InteractionMatrix, s: &SocialGraph) -> Result<StatsReport> {
    if y.n_users() == 0 {
        return Err(Error::InvalidArgument("dataset has no users".into()));
    }
    if y.n_users() != s.n_users() {
        return Err(Error::DimensionMismatch(format!(
            "{} users in interactions vs {} in social graph",
            y.n_users(),
            s.n_users()
        )));
    }
    let u = y.n_users() as f64;
    let v = y.n_items() as f64;
    let r = y.nnz() as f64;
    let links = s.n_edges() as f64;
    let rating_density = if v > 0.0 { r / (u * v) } else { 0.0 };
    let avg_social_links = links / u;
    Ok(StatsReport {
        n_users: y.n_users(),
        n_items: y.n_items(),
        n_ratings: y.nnz(),
        n_social_links: s.n_edges(),
        rating_density,
        social_density: links / (u * u),
        avg_social_links,
        s_impact: avg_social_links * rating_density,
    })
}

/// Keeps each edge independently with probability `keep_prob`.
pub fn prune_social(s: &SocialGraph, keep_prob: f64, seed: u64) -> Result<SocialGraph> {
    if !(0.0..=1.0).contains(&keep_prob) {
        return Err(Error::InvalidArgument(format!(
            "keep_prob must lie in [0, 1], got {keep_prob}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kept: Vec<(usize, usize)> = s.edges().filter(|_| rng.random_bool(keep_prob)).collect();
    Ok(SocialGraph::from_edges(s.n_users(), &kept)?.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_lines_two_users_two_items() {
        let loaded = parse_interactions("a x\na y\nb x\n", None).unwrap();
        assert_eq!(loaded.matrix.n_users(), 2);
        assert_eq!(loaded.matrix.n_items(), 2);
        assert_eq!(loaded.matrix.nnz(), 3);
        assert_eq!(loaded.users.id(1), Some("b"));
        assert_eq!(loaded.items.get("y"), Some(1));
    }

    #[test]
    fn duplicate_lines_collapse() {
        let loaded = parse_interactions("a x\na x\n", None).unwrap();
        assert_eq!(loaded.matrix.nnz(), 1);
        assert!(loaded.matrix.contains(0, 0));
    }

    #[test]
    fn min_rating_filters_but_keeps_ids() {
        let loaded = parse_interactions("# header\na x 5\nb y 1\tjunk\n", Some(3.0));
        assert!(matches!(loaded, Err(Error::Parse { line: 3, .. })));
        let loaded = parse_interactions("a x 5\nb y 1\n", Some(3.0)).unwrap();
        assert_eq!(loaded.matrix.nnz(), 1);
        assert_eq!(loaded.matrix.n_users(), 2);
        assert_eq!(loaded.records, 2);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = parse_interactions("a x\nlonely\n", None).unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                reason: "expected `user item [rating]`, got 1 fields".into()
            }
        );
        let err = parse_interactions("a x notanumber\n", None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(parse_interactions("", None).unwrap_err(), Error::Empty);
        assert_eq!(parse_interactions("# only\n\n", None).unwrap_err(), Error::Empty);
    }

    #[test]
    fn social_edges_and_drops() {
        let users = IdMap::from_ids(["a", "b"]).unwrap();
        let (g, rep) = parse_social("a b\nb a\n", &users).unwrap();
        assert_eq!(g.n_edges(), 2);
        assert_eq!(rep, SocialLoadReport::default());

        let (g, rep) = parse_social("a a\n", &users).unwrap();
        assert_eq!(g.n_edges(), 0);
        assert_eq!(rep.dropped_self_loops, 1);

        let (g, rep) = parse_social("a b\na b\na zed\n", &users).unwrap();
        assert_eq!(g.n_edges(), 1);
        assert_eq!(rep.dropped_duplicates, 1);
        assert_eq!(rep.dropped_unknown_users, 1);

        assert!(matches!(
            parse_social("a b c\n", &users),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn reload_with_fixed_maps() {
        let loaded = parse_interactions("a x\nb y\n", None).unwrap();
        let m = parse_interactions_with("b y\n", &loaded.users, &loaded.items).unwrap();
        assert_eq!(m.to_pairs(), vec![(1, 1)]);
        assert!(parse_interactions_with("c y\n", &loaded.users, &loaded.items).is_err());
    }

    #[test]
    fn split_sizes_floor() {
        let r = SplitRatios::default();
        assert_eq!(r.sizes(10), (7, 2, 1));
        // floor(0.7 n), floor(0.2 n), remainder
        assert_eq!(r.sizes(92_834), (64_983, 18_566, 9_285));
        let pairs: Vec<_> = (0..10).map(|i| (i % 3, i)).collect();
        let m = InteractionMatrix::from_pairs(3, 10, &pairs).unwrap();
        let s = split(&m, r, 7).unwrap();
        assert_eq!((s.train.nnz(), s.validation.nnz(), s.test.nnz()), (7, 2, 1));
        assert_eq!(s, split(&m, r, 7).unwrap());
    }

    #[test]
    fn split_rejects_bad_ratios() {
        let m = InteractionMatrix::from_pairs(1, 1, &[(0, 0)]).unwrap();
        for (t, v) in [(0.0, 0.2), (0.7, 0.3), (0.9, 0.2), (-0.1, 0.5), (0.5, 0.0)] {
            let ratios = SplitRatios { train: t, validation: v };
            assert!(split(&m, ratios, 0).is_err(), "{t} {v}");
        }
    }

    #[test]
    fn stats_formulas() {
        let y = InteractionMatrix::from_pairs(2, 4, &[(0, 0), (0, 1), (1, 3)]).unwrap();
        let (s, _) = SocialGraph::from_edges(2, &[(0, 1)]).unwrap();
        let st = dataset_stats(&y, &s).unwrap();
        assert_eq!(st.rating_density, 3.0 / 8.0);
        assert_eq!(st.social_density, 0.25);
        assert_eq!(st.avg_social_links, 0.5);
        assert_eq!(st.s_impact, 0.5 * 3.0 / 8.0);
        assert!(dataset_stats(&InteractionMatrix::empty(0, 3), &SocialGraph::empty(0)).is_err());
    }

    #[test]
    fn prune_extremes_and_range() {
        let edges: Vec<_> = (0..50).map(|i| (i, (i + 1) % 50)).collect();
        let (g, _) = SocialGraph::from_edges(50, &edges).unwrap();
        assert_eq!(prune_social(&g, 1.0, 3).unwrap(), g);
        assert_eq!(prune_social(&g, 0.0, 3).unwrap().n_edges(), 0);
        assert!(prune_social(&g, 1.5, 3).is_err());
        assert_eq!(prune_social(&g, 0.5, 9).unwrap(), prune_social(&g, 0.5, 9).unwrap());
    }

    #[test]
    fn prune_binomial_window() {
        // 10,000 edges at p = 0.6: sd = 49, so [5700, 6300] is a > 6 sigma window.
        let edges: Vec<_> = (0..10_000).map(|e| (e / 100, 100 + e % 100)).collect();
        let (g, _) = SocialGraph::from_edges(200, &edges).unwrap();
        assert_eq!(g.n_edges(), 10_000);
        for seed in 0..5 {
            let kept = prune_social(&g, 0.6, seed).unwrap().n_edges();
            assert!((5_700..=6_300).contains(&kept), "seed {seed}: {kept}");
        }
    }

    proptest! {
        #[test]
        fn split_partitions_source(
            pairs in proptest::collection::vec((0usize..12, 0usize..15), 0..120),
            seed in any::<u64>(),
        ) {
            let src = InteractionMatrix::from_pairs(12, 15, &pairs).unwrap();
            let s = split(&src, SplitRatios::default(), seed).unwrap();
            let mut all: Vec<_> = s.train.pairs()
                .chain(s.validation.pairs())
                .chain(s.test.pairs())
                .collect();
            let total = all.len();
            all.sort_unstable();
            all.dedup();
            prop_assert_eq!(all.len(), total);
            prop_assert_eq!(all, src.to_pairs());
        }

        #[test]
        fn item_counts_match_pairs(pairs in proptest::collection::vec((0usize..8, 0usize..8), 0..64)) {
            let m = InteractionMatrix::from_pairs(8, 8, &pairs).unwrap();
            for i in 0..8 {
                let n = m.pairs().filter(|&(_, j)| j == i).count();
                prop_assert_eq!(m.item_count(i), n);
                prop_assert_eq!(m.users_of(i).len(), n);
            }
        }
    }
}
