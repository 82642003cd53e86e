#![allow(dead_code)]

use mrvcg::datasets::{build_dataset, DatasetKind, DatasetSpec};
use mrvcg::{Bid, ResourceCapacity, ValuationTensor};
use proptest::prelude::*;

pub fn capacity() -> impl Strategy<Value = ResourceCapacity> {
    prop::collection::vec(1u32..=4, 1..=3).prop_map(|u| ResourceCapacity::new(u).unwrap())
}

/// Arbitrary valuation on `cap`: nonnegative, zero at the origin, often
/// non-monotone, with a share of exact zeros and repeated values.
pub fn tensor_on(cap: ResourceCapacity) -> impl Strategy<Value = ValuationTensor> {
    let cells = cap.cells();
    prop::collection::vec(prop_oneof![3 => 0.0..10.0f64, 1 => Just(0.0), 1 => (0u8..4).prop_map(f64::from)], cells)
        .prop_map(move |mut v| {
            v[0] = 0.0;
            ValuationTensor::new(cap.clone(), v).unwrap()
        })
}

pub fn tensor_pair() -> impl Strategy<Value = (ValuationTensor, ValuationTensor)> {
    capacity().prop_flat_map(|cap| (tensor_on(cap.clone()), tensor_on(cap)))
}

pub fn tensors(agents: std::ops::RangeInclusive<usize>) -> impl Strategy<Value = Vec<ValuationTensor>> {
    capacity().prop_flat_map(move |cap| prop::collection::vec(tensor_on(cap), agents.clone()))
}

pub fn kind() -> impl Strategy<Value = DatasetKind> {
    prop::sample::select(DatasetKind::ALL.to_vec())
}

pub fn generated(kind: DatasetKind, clients: usize, units: Vec<u32>, seed: u64) -> Vec<Bid> {
    build_dataset(&DatasetSpec::new(kind, clients, units, seed))
        .unwrap()
        .iter()
        .map(|c| c.bid())
        .collect()
}

pub fn bids_of(tensors: &[ValuationTensor]) -> Vec<Bid> {
    tensors
        .iter()
        .enumerate()
        .map(|(i, t)| Bid::new(format!("agent_{i}"), t.clone()))
        .collect()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}
