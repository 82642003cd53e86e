mod common;

use common::*;
use mrvcg::ubds::{dimension_minima, classify_boundary};
use mrvcg::{DsKind, ExtReal, QueryBound, UbVector, UpperBoundIndex, ValuationTensor};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    prop_oneof![
        6 => (0u8..6).prop_map(f64::from),
        3 => -5.0..5.0f64,
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
    ]
}

/// Random vectors with `dims` a multiple of 3 and many ties.
fn point_set() -> impl Strategy<Value = (usize, Vec<f64>, Vec<Vec<f64>>)> {
    (1usize..=3, 0usize..60).prop_flat_map(|(r, n)| {
        let dims = 3 * r;
        (
            Just(dims),
            prop::collection::vec(coord(), n * dims),
            prop::collection::vec(prop::collection::vec(coord(), dims), 1..20),
        )
    })
}

fn check_against_scan(dims: usize, coords: &[f64], queries: &[Vec<f64>]) -> Result<(), TestCaseError> {
    let n = coords.len() / dims.max(1);
    let scan = |q: &[f64]| -> Vec<u32> {
        (0..n as u32)
            .filter(|&i| coords[i as usize * dims..(i as usize + 1) * dims].iter().zip(q).all(|(c, b)| c <= b))
            .collect()
    };
    for kind in DsKind::ALL {
        if !kind.supports(n, dims) {
            continue;
        }
        let idx = UpperBoundIndex::from_flat(dims, coords.to_vec(), kind).unwrap();
        for q in queries {
            let bound = QueryBound::new(q.iter().map(|&x| to_ext(x)).collect());
            let fetched = idx.fetch(&idx.query(&bound).unwrap()).unwrap();
            let mut unique = fetched.clone();
            unique.sort_unstable();
            unique.dedup();
            prop_assert_eq!(unique.len(), fetched.len(), "{} returned duplicates", kind);
            let mut exact: Vec<u32> = fetched.iter().copied().filter(|&i| idx.matches(i, q)).collect();
            exact.sort_unstable();
            let expected = scan(q);
            prop_assert_eq!(&exact, &expected, "{} lost matches", kind);
            if kind.is_exact() {
                prop_assert_eq!(unique, expected, "{} returned false positives", kind);
            }
        }
    }
    Ok(())
}

fn to_ext(x: f64) -> ExtReal {
    if x == f64::INFINITY {
        ExtReal::POS_INF
    } else if x == f64::NEG_INFINITY {
        ExtReal::NEG_INF
    } else {
        ExtReal::finite(x)
    }
}

fn tensor_vectors(v: &ValuationTensor) -> (Vec<UbVector>, Vec<QueryBound>) {
    let cap = v.capacity();
    let vs = cap.allocations().map(|a| UbVector::from_tensor(v, &a).unwrap()).collect();
    let qs = cap.allocations().map(|a| QueryBound::for_allocation(v, &a).unwrap()).collect();
    (vs, qs)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_points_match_linear_scan((dims, coords, queries) in point_set()) {
        check_against_scan(dims, &coords, &queries)?;
    }

    #[test]
    fn tensor_vectors_match_linear_scan((a, b) in tensor_pair()) {
        let (vs, _) = tensor_vectors(&b);
        let (_, qs) = tensor_vectors(&a);
        let dims = vs[0].coords().len();
        let coords: Vec<f64> = vs.iter().flat_map(|v| v.coords().iter().map(|c| c.key())).collect();
        let queries: Vec<Vec<f64>> = qs.iter().map(|q| q.coords().iter().map(|c| c.key()).collect()).collect();
        check_against_scan(dims, &coords, &queries)?;
    }

    #[test]
    fn construction_is_deterministic((dims, coords, queries) in point_set()) {
        let n = coords.len() / dims;
        for kind in DsKind::ALL {
            if !kind.supports(n, dims) {
                continue;
            }
            let a = UpperBoundIndex::from_flat(dims, coords.clone(), kind).unwrap();
            let b = UpperBoundIndex::from_flat(dims, coords.clone(), kind).unwrap();
            for q in &queries {
                let bound = QueryBound::new(q.iter().map(|&x| to_ext(x)).collect());
                prop_assert_eq!(a.fetch(&a.query(&bound).unwrap()).unwrap(), b.fetch(&b.query(&bound).unwrap()).unwrap());
            }
        }
    }

    #[test]
    fn non_vital_dimensions_never_filter(v in capacity().prop_flat_map(tensor_on)) {
        let (vs, qs) = tensor_vectors(&v);
        let minima = dimension_minima(&vs);
        for u in &vs {
            let mask = classify_boundary(u, v.capacity(), &minima).unwrap();
            for q in &qs {
                for (d, &lo) in minima.iter().enumerate().take(u.coords().len()) {
                    if !mask.is_vital(d) && lo <= q.coords()[d] {
                        prop_assert!(u.coords()[d] <= q.coords()[d]);
                    }
                }
            }
        }
    }
}

#[test]
fn large_random_configurations() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for &(dims, n) in &[(3usize, 2000usize), (6, 1000), (9, 1500), (12, 800)] {
        let coords: Vec<f64> = (0..n * dims).map(|_| rng.gen_range(0..40) as f64).collect();
        let queries: Vec<Vec<f64>> = (0..1000)
            .map(|_| (0..dims).map(|_| rng.gen_range(0..48) as f64).collect())
            .collect();
        check_against_scan(dims, &coords, &queries).unwrap();
    }
}
