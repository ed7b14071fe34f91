use serec::io::{read_split, write_split, SplitData, SplitMeta};
use serec::model::{load_model, save_model, train_model, Exposure, ModelConfig, ModelKind};
use serec_core::exposure::MU_FLOOR;
use serec_core::synthetic::{generate, SyntheticSpec};
use serec_core::{evaluate, split, EvalTarget, ExposurePrior, IdMap, SocialGraph, SplitRatios};

struct Data {
    split: serec_core::DatasetSplit,
    social: SocialGraph,
    users: IdMap,
    items: IdMap,
}

fn data(seed: u64) -> Data {
    let spec = SyntheticSpec {
        n_users: 50,
        n_items: 40,
        base_exposure: 0.1,
        social_density: 0.1,
        seed,
        ..SyntheticSpec::default()
    };
    let d = generate(&spec).unwrap();
    Data {
        split: split(&d.interactions, SplitRatios::default(), seed).unwrap(),
        social: d.social,
        users: IdMap::from_ids((0..50).map(|u| format!("u{u}"))).unwrap(),
        items: IdMap::from_ids((0..40).map(|i| format!("i{i}"))).unwrap(),
    }
}

fn config(kind: ModelKind) -> ModelConfig {
    let mut cfg = ModelConfig {
        kind,
        ..ModelConfig::default()
    };
    cfg.train.k = 3;
    cfg.train.lambda_y = 1.0;
    cfg.train.max_em_iters = 6;
    cfg.regular.n_sgd_epochs = 3;
    cfg
}

#[test]
fn saved_models_reload_with_identical_factors_and_metrics() {
    let d = data(1);
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Wmf, ModelKind::Expomf, ModelKind::SerecRegular, ModelKind::SerecBoost] {
        let trained = train_model(&config(kind), &d.split.train, Some(&d.social)).unwrap();
        let path = dir.path().join(kind.name());
        save_model(&path, &trained, &d.users, &d.items).unwrap();
        let saved = load_model(&path).unwrap();
        assert_eq!(saved.factors.theta, trained.fit.model.theta, "{kind:?}");
        assert_eq!(saved.factors.beta, trained.fit.model.beta, "{kind:?}");
        assert_eq!(saved.meta.kind, kind);
        assert_eq!(saved.meta.final_objective, trained.fit.final_objective());
        let before = evaluate(&trained.fit.model, &d.split, EvalTarget::Test, &[5, 10]).unwrap();
        let after = evaluate(&saved.factors, &d.split, EvalTarget::Test, &[5, 10]).unwrap();
        assert_eq!(before, after);
        if kind.uses_social() {
            assert_eq!(saved.graph.as_ref().unwrap().n_edges(), d.social.n_edges());
        }
    }
}

#[test]
fn stored_priors_round_trip_exactly() {
    let d = data(2);
    let dir = tempfile::tempdir().unwrap();
    for kind in [ModelKind::Wmf, ModelKind::Expomf, ModelKind::SerecRegular] {
        let trained = train_model(&config(kind), &d.split.train, Some(&d.social)).unwrap();
        let path = dir.path().join(kind.name());
        save_model(&path, &trained, &d.users, &d.items).unwrap();
        let prior = load_model(&path).unwrap().prior(&d.split.train).unwrap();
        for u in 0..50 {
            for i in 0..40 {
                assert_eq!(prior.mu(u, i).to_bits(), trained.exposure.mu(u, i).to_bits(), "{kind:?} ({u}, {i})");
            }
        }
    }
}

#[test]
fn rebuilt_boost_prior_is_a_valid_fixed_point() {
    let d = data(3);
    let dir = tempfile::tempdir().unwrap();
    let trained = train_model(&config(ModelKind::SerecBoost), &d.split.train, Some(&d.social)).unwrap();
    save_model(dir.path(), &trained, &d.users, &d.items).unwrap();
    let saved = load_model(dir.path()).unwrap();
    let a = saved.prior(&d.split.train).unwrap();
    let b = saved.prior(&d.split.train).unwrap();
    let Exposure::Boost(boost) = &a else { panic!("not a boost prior") };
    for u in 0..50 {
        for i in 0..40 {
            let m = a.mu(u, i);
            assert!((MU_FLOOR..1.0).contains(&m));
            assert_eq!(m.to_bits(), b.mu(u, i).to_bits());
            if d.social.friends(u).is_empty() {
                assert_eq!(m, boost.popularity_mu()[i]);
            } else {
                // Friends only ever add exposure mass.
                assert!(m >= boost.popularity_mu()[i] - 1e-15);
            }
        }
    }
}

#[test]
fn boost_without_social_signal_is_expomf() {
    let d = data(4);
    let expomf = train_model(&config(ModelKind::Expomf), &d.split.train, None).unwrap();
    let mut s_one = config(ModelKind::SerecBoost);
    s_one.s_coeff = 1.0;
    let cases = [
        train_model(&s_one, &d.split.train, Some(&d.social)).unwrap(),
        train_model(&config(ModelKind::SerecBoost), &d.split.train, None).unwrap(),
    ];
    let reference = evaluate(&expomf.fit.model, &d.split, EvalTarget::Test, &[5, 10, 20]).unwrap();
    for t in &cases {
        assert_eq!(t.fit.model.theta, expomf.fit.model.theta);
        assert_eq!(t.fit.trace, expomf.fit.trace);
        assert_eq!(evaluate(&t.fit.model, &d.split, EvalTarget::Test, &[5, 10, 20]).unwrap(), reference);
    }
}

#[test]
fn split_round_trips_through_files() {
    let d = data(5);
    let dir = tempfile::tempdir().unwrap();
    let meta = SplitMeta {
        seed: 5,
        ratios: SplitRatios::default(),
        n_users: 50,
        n_items: 40,
        n_train: d.split.train.nnz(),
        n_validation: d.split.validation.nnz(),
        n_test: d.split.test.nnz(),
        source: None,
    };
    let written = SplitData {
        split: d.split.clone(),
        users: d.users.clone(),
        items: d.items.clone(),
        meta: meta.clone(),
    };
    write_split(dir.path(), &written).unwrap();
    let back = read_split(dir.path()).unwrap();
    assert_eq!(back.meta, meta);
    assert_eq!(back.split.train.to_pairs(), d.split.train.to_pairs());
    assert_eq!(back.split.validation.to_pairs(), d.split.validation.to_pairs());
    assert_eq!(back.split.test.to_pairs(), d.split.test.to_pairs());
    assert_eq!(back.users.ids(), d.users.ids());
}
