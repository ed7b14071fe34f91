use super::*;
use crate::data::{split, SplitRatios};
use crate::linalg::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn rank_examples() {
    let s = [0.1, 0.9, 0.5];
    assert_eq!(rank_items(0, &s, &[], 2).items, vec![1, 2]);
    assert_eq!(rank_items(0, &s, &[1], 2).items, vec![2, 0]);
    assert_eq!(rank_items(0, &[0.3; 5], &[], 5).items, vec![0, 1, 2, 3, 4]);
    assert_eq!(rank_items(0, &s, &[0, 1, 2], 2).items, Vec::<usize>::new());
    assert_eq!(rank_items(0, &[0.0, -0.0, 0.0], &[], 3).items, vec![0, 1, 2]);
    assert_eq!(rank_items(0, &[-0.0, 0.0], &[], 2).items, vec![0, 1]);
}

#[test]
fn recall_examples() {
    let top: Vec<usize> = (10..20).collect();
    assert_eq!(recall_at_k(&top, &[3, 12], 10), Some(0.5));
    assert_eq!(recall_at_k(&top, &[12, 15], 10), Some(1.0));
    let mut long: Vec<usize> = (10..21).collect();
    long.swap(0, 10);
    assert_eq!(recall_at_k(&long, &[10], 10), Some(0.0));
    assert_eq!(recall_at_k(&top, &[], 10), None);
}

#[test]
fn map_examples() {
    let ranked = [7, 1, 8, 2];
    let m = map_at_k(&ranked, &[7, 8], 100).unwrap();
    assert!((m - 0.5 * (1.0 + 2.0 / 3.0)).abs() < 1e-15);
    assert!((m - 0.8333).abs() < 1e-4);
    assert_eq!(map_at_k(&ranked, &[7], 100), Some(1.0));
    assert_eq!(map_at_k(&ranked, &[99], 100), Some(0.0));
}

#[test]
fn ndcg_examples() {
    assert_eq!(ndcg_at_k(&[4, 5], &[4], 100), Some(1.0));
    let second = ndcg_at_k(&[5, 4], &[4], 100).unwrap();
    assert!((second - 1.0 / 3f64.log2()).abs() < 1e-15);
    assert!((second - 0.6309).abs() < 1e-4);
    assert_eq!(ndcg_at_k(&[1, 2, 3, 9], &[1, 2, 3], 100), Some(1.0));
}

/// Sorts the full candidate list and applies each definition directly.
fn oracle_user(scores: &[f64], excluded: &[usize], relevant: &[usize], cutoffs: &[usize]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).filter(|i| !excluded.contains(i)).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    let mut out = Vec::new();
    for kind in ["recall", "map", "ndcg"] {
        for &k in cutoffs {
            let top: Vec<usize> = order.iter().copied().take(k).collect();
            let norm = k.min(relevant.len()) as f64;
            let v = match kind {
                "recall" => top.iter().filter(|i| relevant.contains(i)).count() as f64 / norm,
                "map" => {
                    let mut hits = 0;
                    let mut sum = 0.0;
                    for (r, i) in top.iter().enumerate() {
                        if relevant.contains(i) {
                            hits += 1;
                            sum += hits as f64 / (r + 1) as f64;
                        }
                    }
                    sum / norm
                }
                _ => {
                    let mut dcg = 0.0;
                    for (r, i) in top.iter().enumerate() {
                        if relevant.contains(i) {
                            dcg += 1.0 / ((r + 2) as f64).log2();
                        }
                    }
                    let mut idcg = 0.0;
                    for r in 0..k.min(relevant.len()) {
                        idcg += 1.0 / ((r + 2) as f64).log2();
                    }
                    dcg / idcg
                }
            };
            out.push(v);
        }
    }
    out
}

fn toy_split(seed: u64, nu: usize, ni: usize) -> DatasetSplit {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for u in 0..nu {
        for i in 0..ni {
            if rng.random_bool(0.35) {
                pairs.push((u, i));
            }
        }
    }
    let y = InteractionMatrix::from_pairs(nu, ni, &pairs).unwrap();
    split(&y, SplitRatios::default(), seed).unwrap()
}

fn toy_model(seed: u64, nu: usize, ni: usize, k: usize) -> FactorModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    FactorModel {
        // rounded so that ties actually occur
        theta: Matrix::from_vec(nu, k, (0..nu * k).map(|_| rng.random_range(-2i32..=2) as f64).collect()).unwrap(),
        beta: Matrix::from_vec(ni, k, (0..ni * k).map(|_| rng.random_range(-2i32..=2) as f64).collect()).unwrap(),
        lambda_theta: 1.0,
        lambda_beta: 1.0,
        lambda_y: 1.0,
    }
}

#[test]
fn evaluate_matches_brute_force() {
    let cutoffs = [1, 3, 5, 10];
    for seed in 0..30 {
        let nu = 5 + (seed as usize % 16);
        let ni = 20 - (seed as usize % 7);
        let sp = toy_split(seed, nu, ni);
        let model = toy_model(seed, nu, ni, 2);
        for target in [EvalTarget::Test, EvalTarget::Validation] {
            let (relevant, exclude) = match target {
                EvalTarget::Test => (&sp.test, vec![&sp.train, &sp.validation]),
                EvalTarget::Validation => (&sp.validation, vec![&sp.train]),
            };
            let mut sums = vec![0.0; 3 * cutoffs.len()];
            let mut n = 0;
            for u in 0..nu {
                let rel = relevant.items_of(u);
                if rel.is_empty() {
                    continue;
                }
                let excluded: Vec<usize> = exclude.iter().flat_map(|m| m.items_of(u).iter().copied()).collect();
                let vals = oracle_user(&model.predict_scores(u), &excluded, rel, &cutoffs);
                for (s, v) in sums.iter_mut().zip(vals) {
                    *s += v;
                }
                n += 1;
            }
            let got = match evaluate(&model, &sp, target, &cutoffs) {
                Ok(r) => r,
                Err(Error::NoEvaluableUsers) => {
                    assert_eq!(n, 0);
                    continue;
                }
                Err(e) => panic!("{e}"),
            };
            assert_eq!(got.n_users_evaluated, n);
            let mut idx = 0;
            for kind in MetricKind::ALL {
                for &k in &cutoffs {
                    assert_eq!(got.get(&kind.key(k)), Some(sums[idx] / n as f64), "{}", kind.key(k));
                    idx += 1;
                }
            }
        }
    }
}

#[test]
fn perfect_scorer_gets_ones() {
    let sp = toy_split(3, 15, 20);
    let score = |u: usize, out: &mut [f64]| {
        out.fill(0.0);
        for &i in sp.test.items_of(u) {
            out[i] = 1.0;
        }
    };
    let r = evaluate_scores(&score, 15, 20, &sp.test, &[&sp.train, &sp.validation], &[10, 50, 100], None).unwrap();
    assert!(r.metrics.values().all(|&v| v == 1.0), "{r:?}");
    let keys: Vec<&str> = r.metrics.keys().map(String::as_str).collect();
    for key in ["recall@10", "recall@50", "map@100", "ndcg@100"] {
        assert!(keys.contains(&key));
    }
}

#[test]
fn no_evaluable_users_is_an_error() {
    let y = InteractionMatrix::from_pairs(2, 2, &[(0, 0)]).unwrap();
    let empty = InteractionMatrix::empty(2, 2);
    let score = |_: usize, out: &mut [f64]| out.fill(0.0);
    assert!(matches!(
        evaluate_scores(&score, 2, 2, &empty, &[&y], &[10], None),
        Err(Error::NoEvaluableUsers)
    ));
    assert!(evaluate_scores(&score, 2, 2, &y, &[], &[], None).is_err());
}

#[test]
fn random_scores_hit_chance_level() {
    let (nu, ni, rel_n) = (2000, 200, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut pairs = Vec::new();
    for u in 0..nu {
        let mut items: Vec<usize> = (0..ni).collect();
        rand::seq::SliceRandom::shuffle(items.as_mut_slice(), &mut rng);
        pairs.extend(items[..rel_n].iter().map(|&i| (u, i)));
    }
    let relevant = InteractionMatrix::from_pairs(nu, ni, &pairs).unwrap();
    let scores = Matrix::gaussian(nu, ni, 1.0, &mut rng);
    let score = |u: usize, out: &mut [f64]| out.copy_from_slice(scores.row(u));
    let r = evaluate_scores(&score, nu, ni, &relevant, &[], &[10], None).unwrap();
    // E[hits] = 10 * 5 / 200, normalized by min(10, 5)
    let chance = 10.0 / ni as f64;
    assert!((r.get("recall@10").unwrap() - chance).abs() < 0.01);
}

#[test]
fn friend_buckets() {
    let mut edges = Vec::new();
    let degrees = [0usize, 3, 8, 20, 15, 16];
    for (u, &d) in degrees.iter().enumerate() {
        for k in 0..d {
            edges.push((u, 6 + k));
        }
    }
    let (g, _) = SocialGraph::from_edges(40, &edges).unwrap();
    let groups = group_by_friends(&g, &default_buckets()).unwrap();
    let find = |label: &str| &groups.iter().find(|(l, _)| l == label).unwrap().1;
    assert!(find("0").contains(&0));
    assert_eq!(find("1-5"), &vec![1]);
    assert_eq!(find("6-15"), &vec![2, 4]);
    assert_eq!(find("15+"), &vec![3, 5]);

    let overlapping = [FriendBucket::new("a", 0, Some(5)), FriendBucket::new("b", 5, None)];
    assert!(group_by_friends(&g, &overlapping).is_err());
    let gap = [FriendBucket::new("a", 0, Some(5))];
    assert!(group_by_friends(&g, &gap).is_err());
}

#[test]
fn grouped_report_skips_empty_groups() {
    let sp = toy_split(5, 12, 15);
    let model = toy_model(5, 12, 15, 2);
    let groups = vec![("all".to_string(), (0..12).collect()), ("none".to_string(), vec![])];
    let r = evaluate_grouped(&model, &sp, EvalTarget::Test, &[5], &groups).unwrap();
    assert_eq!(r.groups.len(), 1);
    assert_eq!(r.groups[0].metrics, r.metrics);
}

#[test]
fn table_layout() {
    let mut m = BTreeMap::new();
    m.insert("recall@50".to_string(), 0.5);
    m.insert("recall@10".to_string(), 0.25);
    let r = EvalReport {
        metrics: m,
        n_users_evaluated: 3,
        groups: Vec::new(),
    };
    let t = format_table(&[("wmf", &r)]);
    let lines: Vec<&str> = t.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("recall@10") && lines[1].ends_with("0.2500"));
    assert!(lines[2].starts_with("recall@50"));
}

proptest! {
    #[test]
    fn metrics_are_bounded(
        scores in prop::collection::vec(-5.0f64..5.0, 1..40),
        rel_mask in prop::collection::vec(any::<bool>(), 40),
        k in 1usize..50,
    ) {
        let n = scores.len();
        let relevant: Vec<usize> = (0..n).filter(|&i| rel_mask[i]).collect();
        let ranked = rank_items(0, &scores, &[], n).items;
        prop_assert_eq!(ranked.len(), n);
        for w in ranked.windows(2) {
            prop_assert!(scores[w[0]] > scores[w[1]] || (scores[w[0]] == scores[w[1]] && w[0] < w[1]));
        }
        for f in [recall_at_k, map_at_k, ndcg_at_k] {
            match f(&ranked, &relevant, k) {
                Some(v) => prop_assert!((0.0..=1.0 + 1e-12).contains(&v)),
                None => prop_assert!(relevant.is_empty()),
            }
        }
    }

    #[test]
    fn top_n_is_a_prefix_of_the_full_ranking(
        scores in prop::collection::vec(-3i32..3, 1..60),
        n in 0usize..70,
    ) {
        let s: Vec<f64> = scores.iter().map(|&v| v as f64).collect();
        let full = rank_items(0, &s, &[], s.len()).items;
        let top = rank_items(0, &s, &[], n).items;
        prop_assert_eq!(&full[..n.min(s.len())], &top[..]);
    }
}
