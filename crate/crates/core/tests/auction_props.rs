mod common;

use common::{bids_of, close, generated, kind, tensors};
use mrvcg::datasets::DatasetKind;
use mrvcg::oracle::{optimal_welfare, vcg_payments};
use mrvcg::{run_vcg_auction, Allocation, AuctionResult, Bid, DsKind, JoinOptions, ValuationTensor};
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn auction(bids: &[Bid]) -> AuctionResult {
    let cap = bids[0].valuation.capacity().clone();
    run_vcg_auction(bids, &cap, &JoinOptions::default()).unwrap()
}

fn check_invariants(bids: &[Bid], r: &AuctionResult) {
    let cap = &r.capacity;
    for (used, &m) in r.units_allocated().iter().zip(cap.units()) {
        assert!(*used <= m as u64, "over-allocated: {used} > {m}");
    }
    let sum: f64 = bids
        .iter()
        .zip(&r.agents)
        .map(|(b, a)| b.valuation.value(&a.allocation).unwrap())
        .sum();
    assert!(close(sum, r.social_welfare, TOL), "{sum} vs {}", r.social_welfare);
    for a in &r.agents {
        assert!(a.payment >= 0.0, "{}: negative payment {}", a.agent_id, a.payment);
        assert!(a.payment <= a.value, "{}: pays {} above value {}", a.agent_id, a.payment, a.value);
        if !a.is_winner() {
            assert_eq!(a.payment, 0.0);
        }
    }
}

/// Re-solves the winners in `subset` alone over the units they hold.
fn check_subset(bids: &[Bid], r: &AuctionResult, subset: &[usize]) {
    let res = r.capacity.resources();
    let mut units = vec![0u32; res];
    for &i in subset {
        for (u, &x) in units.iter_mut().zip(r.agents[i].allocation.counts()) {
            *u += x;
        }
    }
    if units.iter().all(|&u| u == 0) {
        return;
    }
    // Resources the group holds none of drop out of the grid.
    let upper = Allocation::new(units);
    let restricted: Vec<ValuationTensor> = subset
        .iter()
        .map(|&i| bids[i].valuation.restrict(&upper).unwrap().unwrap())
        .collect();
    let refs: Vec<&ValuationTensor> = restricted.iter().collect();
    let best = optimal_welfare(&refs, restricted[0].capacity()).unwrap().welfare;
    let held: f64 = subset.iter().map(|&i| r.agents[i].value).sum();
    assert!(close(best, held, TOL), "group {subset:?}: optimum {best} vs held {held}");
}

fn check_oracle(bids: &[Bid], r: &AuctionResult) {
    let refs: Vec<&ValuationTensor> = bids.iter().map(|b| &b.valuation).collect();
    let best = optimal_welfare(&refs, &r.capacity).unwrap().welfare;
    assert!(close(best, r.social_welfare, TOL), "oracle {best} vs {}", r.social_welfare);
    let allocs: Vec<_> = r.agents.iter().map(|a| a.allocation.clone()).collect();
    let expected = vcg_payments(bids, &r.capacity, &allocs).unwrap();
    for (a, p) in r.agents.iter().zip(expected) {
        assert!(close(a.payment, p, TOL), "{}: payment {} vs oracle {p}", a.agent_id, a.payment);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn matches_oracle_on_random_tensors(ts in tensors(1..=4)) {
        let bids = bids_of(&ts);
        let r = auction(&bids);
        check_oracle(&bids, &r);
        check_invariants(&bids, &r);
    }

    #[test]
    fn winner_groups_keep_their_optimum(ts in tensors(2..=4), pick in prop::collection::vec(any::<bool>(), 4)) {
        let bids = bids_of(&ts);
        let r = auction(&bids);
        let winners: Vec<usize> = (0..bids.len()).filter(|&i| r.agents[i].is_winner()).collect();
        let subset: Vec<usize> = winners.iter().copied().filter(|&i| pick[i]).collect();
        if !subset.is_empty() {
            check_subset(&bids, &r, &subset);
        }
    }

    #[test]
    fn bid_order_does_not_change_outcome(ts in tensors(2..=4), seed in any::<u64>()) {
        let bids = bids_of(&ts);
        let r = auction(&bids);
        let mut perm: Vec<usize> = (0..bids.len()).collect();
        let mut s = seed;
        for i in (1..perm.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let shuffled: Vec<Bid> = perm.iter().map(|&i| bids[i].clone()).collect();
        let q = auction(&shuffled);
        prop_assert!(close(r.social_welfare, q.social_welfare, TOL));
        for a in &r.agents {
            let b = q.agent(&a.agent_id).unwrap();
            prop_assert!(close(a.payment, b.payment, TOL), "{}: {} vs {}", a.agent_id, a.payment, b.payment);
        }
    }

    #[test]
    fn adding_a_bid_never_lowers_welfare(ts in tensors(2..=4)) {
        let bids = bids_of(&ts);
        let fewer = auction(&bids[..bids.len() - 1]);
        let all = auction(&bids);
        prop_assert!(all.social_welfare >= fewer.social_welfare - TOL * fewer.social_welfare.max(1.0));
    }

    #[test]
    fn generated_datasets_satisfy_invariants(k in kind(), n in 2usize..=5, r in 1usize..=3, seed in any::<u64>()) {
        let units = vec![3u32; r];
        let bids = generated(k, n, units, seed);
        let res = auction(&bids);
        check_oracle(&bids, &res);
        check_invariants(&bids, &res);
    }
}

#[test]
fn data_structure_choice_does_not_matter() {
    for (seed, k) in DatasetKind::ALL.iter().enumerate() {
        let bids = generated(*k, 5, vec![4, 3], seed as u64);
        let cap = bids[0].valuation.capacity().clone();
        let base = run_vcg_auction(&bids, &cap, &JoinOptions::new(DsKind::LinearScan)).unwrap();
        for ds in DsKind::ALL {
            let r = run_vcg_auction(&bids, &cap, &JoinOptions::new(ds)).unwrap();
            assert!(close(r.social_welfare, base.social_welfare, TOL), "{ds}");
            for (a, b) in r.agents.iter().zip(&base.agents) {
                assert!(close(a.payment, b.payment, TOL), "{ds}: {}", a.agent_id);
            }
        }
    }
}

#[test]
fn single_bidder_pays_nothing() {
    let bids = generated(DatasetKind::Concave, 1, vec![5], 3);
    let r = auction(&bids);
    assert!(r.agents[0].is_winner());
    assert_eq!(r.agents[0].payment, 0.0);
    assert_eq!(r.agents[0].welfare_without, Some(0.0));
}

#[test]
fn rejects_mismatched_capacity() {
    let a = generated(DatasetKind::Concave, 1, vec![3], 1);
    let b = generated(DatasetKind::Concave, 1, vec![4], 1);
    let bids = vec![a[0].clone(), b[0].clone()];
    let cap = a[0].valuation.capacity().clone();
    assert!(run_vcg_auction(&bids, &cap, &JoinOptions::default()).is_err());
    assert!(run_vcg_auction(&[], &cap, &JoinOptions::default()).is_err());
}
