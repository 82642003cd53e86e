mod common;

use std::fs;

use mrvcg::datasets::{
    build_dataset, client_file, draw_max_value, gen_component, is_concave_along_axes, read_cost_csv, read_dataset,
    validate_component, write_dataset, CostSource, DatasetKind, DatasetSpec,
};
use mrvcg::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn components_respect_their_kind(k in common::kind(), len in 2usize..40, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = gen_component(k, len, &mut rng);
        prop_assert_eq!(c.len(), len);
        prop_assert!(validate_component(k, &c).is_ok(), "{:?}", c);
        prop_assert_eq!(c[0], 0.0);
        prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert!(c.contains(&1.0));
    }

    #[test]
    fn generated_tensors_are_valid(k in common::kind(), r in 1usize..=3, m in 1u32..=6, seed in any::<u64>()) {
        let spec = DatasetSpec::new(k, 3, vec![m; r], seed);
        for c in build_dataset(&spec).unwrap() {
            prop_assert!(c.max_value > c.bundle_cost);
            prop_assert_eq!(c.valuation.values()[0], 0.0);
            prop_assert!(c.valuation.values().iter().all(|v| v.is_finite() && *v >= 0.0));
            prop_assert_eq!(c.valuation.max_value(), c.max_value);
            if k == DatasetKind::Concave {
                prop_assert!(is_concave_along_axes(&c.valuation));
            }
        }
    }

    #[test]
    fn projection_reuses_leading_components(k in common::kind(), seed in any::<u64>()) {
        let spec = DatasetSpec::new(k, 4, vec![5, 4, 3, 6], seed);
        let full = build_dataset(&spec).unwrap();
        for r in 1..=3 {
            let part = build_dataset(&spec.projected(r)).unwrap();
            for (a, b) in full.iter().zip(&part) {
                prop_assert_eq!(&a.components[..r], &b.components[..]);
                prop_assert_eq!(a.max_value, b.max_value);
                prop_assert_eq!(a.bundle_cost, b.bundle_cost);
            }
        }
    }
}

#[test]
fn same_seed_writes_identical_files() {
    let spec = DatasetSpec::new(DatasetKind::Concave, 4, vec![8], 7);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_dataset(a.path(), &spec, &build_dataset(&spec).unwrap()).unwrap();
    write_dataset(b.path(), &spec, &build_dataset(&spec).unwrap()).unwrap();
    for k in 0..4 {
        let x = fs::read(a.path().join(client_file(k))).unwrap();
        let y = fs::read(b.path().join(client_file(k))).unwrap();
        assert_eq!(x, y, "client {k}");
    }
    assert_eq!(
        fs::read(a.path().join("meta.csv")).unwrap(),
        fs::read(b.path().join("meta.csv")).unwrap()
    );
}

#[test]
fn dataset_directory_round_trip() {
    let spec = DatasetSpec::new(DatasetKind::MostlyIncreasing, 3, vec![4, 2], 11);
    let clients = build_dataset(&spec).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &spec, &clients).unwrap();
    let loaded = read_dataset(dir.path()).unwrap();
    assert_eq!(loaded.spec.as_ref(), Some(&spec));
    assert_eq!(loaded.bids.len(), 3);
    for (c, b) in clients.iter().zip(&loaded.bids) {
        assert_eq!(c.agent_id, b.agent_id);
        assert_eq!(&c.valuation, &b.valuation);
    }
}

#[test]
fn pareto_tail_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let draws = 1_000_000;
    let hits = (0..draws).filter(|_| draw_max_value(&mut rng, 1.1, 1.0) > 5.0).count();
    let p = 5f64.powf(-1.1);
    let se = (p * (1.0 - p) / draws as f64).sqrt();
    let observed = hits as f64 / draws as f64;
    assert!((observed - p).abs() <= 3.0 * se, "observed {observed}, expected {p} +- {}", 3.0 * se);
}

#[test]
fn mostly_increasing_dips_sometimes() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut neg, mut total) = (0usize, 0usize);
    for _ in 0..10_000 {
        let c = gen_component(DatasetKind::MostlyIncreasing, 16, &mut rng);
        for w in c.windows(2) {
            total += 1;
            if w[1] < w[0] {
                neg += 1;
            }
        }
    }
    let frac = neg as f64 / total as f64;
    assert!(frac > 0.0 && frac < 0.30, "negative fraction {frac}");
}

#[test]
fn cost_csv_is_used_and_checked() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.csv");
    fs::write(&good, "agent_id,cost\nclient_1,2.5\nclient_0,0.5\n").unwrap();
    assert_eq!(read_cost_csv(&good, 2).unwrap(), vec![0.5, 2.5]);

    let mut spec = DatasetSpec::new(DatasetKind::Increasing, 2, vec![3], 1);
    spec.cost_source = CostSource::Csv(good.clone());
    let clients = build_dataset(&spec).unwrap();
    assert_eq!(clients[0].bundle_cost, 0.5);
    assert_eq!(clients[1].bundle_cost, 2.5);
    assert!(clients.iter().all(|c| c.max_value > c.bundle_cost));

    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "agent_id,cost\nclient_0,-1\nclient_7,1\nclient_0,x\n").unwrap();
    match read_cost_csv(&bad, 2) {
        Err(Error::CostFile(msg)) => {
            assert!(msg.contains("line 2"), "{msg}");
            assert!(msg.contains("line 3"), "{msg}");
            assert!(msg.contains("line 4"), "{msg}");
            assert!(msg.contains("client_1"), "{msg}");
        }
        other => panic!("unexpected {other:?}"),
    }

    let header = dir.path().join("header.csv");
    fs::write(&header, "id,price\nclient_0,1\n").unwrap();
    assert!(read_cost_csv(&header, 1).is_err());
    assert!(read_cost_csv(&dir.path().join("missing.csv"), 1).is_err());
}
