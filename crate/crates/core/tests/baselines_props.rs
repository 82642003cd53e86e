mod common;

use common::close;
use mrvcg::baselines::{concave_auction, separate_auctions, SingleResourceBid};
use mrvcg::datasets::{build_dataset, gen_component, DatasetKind, DatasetSpec};
use mrvcg::{run_vcg_auction, JoinOptions};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn concave_bids(n: usize, m: u32, seed: u64) -> Vec<SingleResourceBid> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let scale = 1.0 + i as f64;
            let values = gen_component(DatasetKind::Concave, m as usize + 1, &mut rng)
                .into_iter()
                .map(|v| v * scale)
                .collect();
            SingleResourceBid::new(format!("b{i}"), values).unwrap()
        })
        .collect()
}

fn brute_force(bids: &[SingleResourceBid], m: u32) -> f64 {
    fn go(bids: &[SingleResourceBid], left: u32) -> f64 {
        match bids.split_first() {
            None => 0.0,
            Some((b, rest)) => (0..=left)
                .map(|x| b.values()[x as usize] + go(rest, left - x))
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }
    go(bids, m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn greedy_is_optimal_on_small_cases(n in 1usize..=4, m in 1u32..=8, seed in any::<u64>()) {
        let bids = concave_bids(n, m, seed);
        let r = concave_auction(&bids, m).unwrap();
        let best = brute_force(&bids, m);
        prop_assert!(close(r.social_welfare, best, 1e-12), "{} vs {best}", r.social_welfare);
        let used: u32 = r.agents.iter().map(|a| a.allocation.counts()[0]).sum();
        prop_assert!(used <= m);
    }

    #[test]
    fn greedy_agrees_with_joint_auction(n in 1usize..=8, m in 1u32..=15, seed in any::<u64>()) {
        let spec = DatasetSpec::new(DatasetKind::Concave, n, vec![m], seed);
        let clients = build_dataset(&spec).unwrap();
        let bids: Vec<_> = clients.iter().map(|c| c.bid()).collect();
        let single: Vec<_> = bids.iter().map(|b| SingleResourceBid::from_bid(b).unwrap()).collect();
        let g = concave_auction(&single, m).unwrap();
        let cap = spec.capacity().unwrap();
        let v = run_vcg_auction(&bids, &cap, &JoinOptions::default()).unwrap();
        prop_assert!(close(g.social_welfare, v.social_welfare, 1e-9));
        for (a, b) in g.agents.iter().zip(&v.agents) {
            prop_assert!(close(a.payment, b.payment, 1e-9), "{}: {} vs {}", a.agent_id, a.payment, b.payment);
            prop_assert!(close(a.value, b.value, 1e-9));
        }
    }

    #[test]
    fn separate_auctions_never_beat_the_optimum(r in 1usize..=3, n in 2usize..=6, seed in any::<u64>()) {
        let spec = DatasetSpec::new(DatasetKind::Concave, n, vec![4; r], seed);
        let clients = build_dataset(&spec).unwrap();
        let s = separate_auctions(&clients, &spec.capacity().unwrap(), &JoinOptions::default()).unwrap();
        prop_assert!(s.achieved <= s.optimal * (1.0 + 1e-12));
        prop_assert_eq!(s.per_resource.len(), r);
    }
}

#[test]
fn one_resource_ratio_is_exactly_one() {
    for seed in 0..5 {
        let spec = DatasetSpec::new(DatasetKind::Concave, 6, vec![10], seed);
        let clients = build_dataset(&spec).unwrap();
        let s = separate_auctions(&clients, &spec.capacity().unwrap(), &JoinOptions::default()).unwrap();
        assert_eq!(s.ratio(), 1.0, "seed {seed}: {} vs {}", s.achieved, s.optimal);
    }
}

#[test]
fn rejects_non_concave_dataset() {
    let spec = DatasetSpec::new(DatasetKind::MostlyIncreasing, 30, vec![12], 3);
    let bids: Vec<_> = build_dataset(&spec).unwrap().iter().map(|c| c.bid()).collect();
    assert!(bids.iter().any(|b| SingleResourceBid::from_bid(b).is_err()));
}
