use proptest::prelude::*;
use serec_core::metrics::rank_items;
use serec_core::synthetic::brute_force_posterior;
use serec_core::{e_step_pair, prune_social, split, InteractionMatrix, SocialGraph, SplitRatios};

fn matrix() -> impl Strategy<Value = InteractionMatrix> {
    (1usize..12, 1usize..12).prop_flat_map(|(nu, ni)| {
        proptest::collection::vec((0..nu, 0..ni), 0..60)
            .prop_map(move |pairs| InteractionMatrix::from_pairs(nu, ni, &pairs).unwrap())
    })
}

fn graph() -> impl Strategy<Value = SocialGraph> {
    (2usize..15).prop_flat_map(|n| {
        proptest::collection::vec((0..n, 0..n), 0..80)
            .prop_map(move |edges| SocialGraph::from_edges(n, &edges).unwrap().0)
    })
}

proptest! {
    #[test]
    fn posterior_matches_enumeration(mu in 0.001f64..0.999, score in -3.0f64..3.0, lambda_y in 0.1f64..10.0) {
        let p = e_step_pair(mu, score, lambda_y);
        prop_assert!((0.0..=1.0).contains(&p));
        prop_assert!((p - brute_force_posterior(mu, score, lambda_y)).abs() < 1e-12);
    }

    #[test]
    fn posterior_never_exceeds_prior(mu in 0.001f64..0.999, score in -3.0f64..3.0, lambda_y in 0.1f64..10.0) {
        // Observing no click can only lower the belief in exposure when the
        // Gaussian density at zero is below one.
        prop_assume!(lambda_y < 2.0 * core::f64::consts::PI);
        prop_assert!(e_step_pair(mu, score, lambda_y) <= mu + 1e-12);
    }

    #[test]
    fn split_is_a_seeded_partition(y in matrix(), seed in any::<u64>()) {
        let ratios = SplitRatios::default();
        let s = split(&y, ratios, seed).unwrap();
        let (a, b, c) = ratios.sizes(y.nnz());
        prop_assert_eq!((s.train.nnz(), s.validation.nnz(), s.test.nnz()), (a, b, c));
        let joined = s.train.union(&s.validation).unwrap().union(&s.test).unwrap();
        prop_assert_eq!(joined.to_pairs(), y.to_pairs());
        prop_assert_eq!(split(&y, ratios, seed).unwrap(), s);
    }

    #[test]
    fn pruning_keeps_a_subgraph(s in graph(), keep in 0.0f64..=1.0, seed in any::<u64>()) {
        let pruned = prune_social(&s, keep, seed).unwrap();
        prop_assert!(pruned.edges().all(|(a, b)| s.has_edge(a, b)));
        prop_assert_eq!(prune_social(&s, 1.0, seed).unwrap(), s.clone());
        prop_assert_eq!(prune_social(&s, 0.0, seed).unwrap().n_edges(), 0);
    }

    #[test]
    fn ranking_skips_excluded_and_is_sorted(
        scores in proptest::collection::vec(-5.0f64..5.0, 1..40),
        excluded in proptest::collection::vec(0usize..40, 0..10),
        n in 1usize..50,
    ) {
        let ranked = rank_items(0, &scores, &excluded, n);
        let eligible = (0..scores.len()).filter(|i| !excluded.contains(i)).count();
        prop_assert_eq!(ranked.items.len(), n.min(eligible));
        prop_assert!(ranked.items.iter().all(|i| !excluded.contains(i)));
        prop_assert!(ranked.items.windows(2).all(|w| scores[w[0]] >= scores[w[1]]));
    }
}
