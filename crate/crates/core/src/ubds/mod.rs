//! Upper-bound data structures.
//!
//! Every structure stores `k`-dimensional vectors and answers "all vectors
//! element-wise `<=` this bound" through a `query` / `fetch` pair. Some kinds
//! trade accuracy for speed and return false positives; callers re-filter
//! with [`UpperBoundIndex::matches`].
//!
//! | kind           | exact | notes                                              |
//! |----------------|-------|----------------------------------------------------|
//! | `linear_scan`  | yes   | checks every vector                                |
//! | `sim_1d`       | no    | prefix of the single best-filtering sorted array   |
//! | `sim_2d_trees` | no    | per-resource pairs of dimensions                   |
//! | `combination`  | no    | classes by vital dimensions, each filtered apart   |
//! | `kd_tree`      | yes   | layered range tree, small inputs only              |

mod arena;
mod combination;
mod kdtree;
mod layered;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use crate::tensor::{Allocation, ExtReal, ResourceCapacity, ValuationTensor};

use arena::Arena;
use combination::Combination;
use kdtree::KdTree;
use layered::Layered;

/// Most entries the layered k-d tree may store over all its levels.
pub const KD_TREE_MAX_ENTRIES: usize = 1 << 22;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DsKind {
    LinearScan,
    Sim1d,
    Sim2dTrees,
    Combination,
    KdTree,
}

impl DsKind {
    pub const ALL: [DsKind; 5] = [
        DsKind::LinearScan,
        DsKind::Sim1d,
        DsKind::Sim2dTrees,
        DsKind::Combination,
        DsKind::KdTree,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DsKind::LinearScan => "linear_scan",
            DsKind::Sim1d => "sim_1d",
            DsKind::Sim2dTrees => "sim_2d_trees",
            DsKind::Combination => "combination",
            DsKind::KdTree => "kd_tree",
        }
    }

    /// Whether fetched candidates are always exact matches.
    pub fn is_exact(self) -> bool {
        matches!(self, DsKind::LinearScan | DsKind::KdTree)
    }

    /// Whether the kind can index `vectors` vectors of `dims` dimensions.
    pub fn supports(self, vectors: usize, dims: usize) -> bool {
        match self {
            DsKind::KdTree => kdtree::estimated_entries(vectors, dims) <= KD_TREE_MAX_ENTRIES,
            DsKind::Sim2dTrees | DsKind::Combination => dims.is_multiple_of(3),
            DsKind::LinearScan | DsKind::Sim1d => true,
        }
    }
}

impl fmt::Display for DsKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DsKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        DsKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                Error::Validation(format!(
                    "unknown data structure `{s}` (expected one of linear_scan, sim_1d, sim_2d_trees, combination, kd_tree)"
                ))
            })
    }
}

/// Stored vector `(grad+ V(a), -grad- V(a), a)` of one allocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UbVector {
    coords: Vec<ExtReal>,
    allocation: Allocation,
}

impl UbVector {
    pub fn from_tensor(tensor: &ValuationTensor, a: &Allocation) -> Result<Self> {
        let g = tensor.gradients(a)?;
        let mut coords = g.right;
        coords.extend(g.left.into_iter().map(|l| -l));
        coords.extend(a.counts().iter().map(|&x| ExtReal::finite(x as f64)));
        Ok(Self {
            coords,
            allocation: a.clone(),
        })
    }

    /// Arbitrary coordinates, used by tests and custom callers. The last
    /// `R` coordinates must equal the allocation.
    pub fn new(coords: Vec<ExtReal>, allocation: Allocation) -> Result<Self> {
        let r = allocation.resources();
        if coords.len() != 3 * r {
            return Err(Error::DimensionMismatch {
                expected: 3 * r,
                found: coords.len(),
            });
        }
        let alloc_ok = coords[2 * r..]
            .iter()
            .zip(allocation.counts())
            .all(|(c, &x)| *c == ExtReal::finite(x as f64));
        if !alloc_ok {
            return Err(Error::Validation(
                "allocation block does not match the payload allocation".into(),
            ));
        }
        Ok(Self { coords, allocation })
    }

    pub fn coords(&self) -> &[ExtReal] {
        &self.coords
    }

    pub fn allocation(&self) -> &Allocation {
        &self.allocation
    }

    /// Plain floats, as taken by [`UpperBoundIndex::from_flat`].
    pub fn keys(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.key()).collect()
    }

    /// Element-wise `self <= q`.
    pub fn is_below(&self, q: &QueryBound) -> bool {
        self.coords.len() == q.coords.len() && self.coords.iter().zip(&q.coords).all(|(a, b)| a <= b)
    }
}

/// Bound `(grad- V(a), -grad+ V(a), m - a)` queried for one allocation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QueryBound {
    coords: Vec<ExtReal>,
}

impl QueryBound {
    pub fn for_allocation(tensor: &ValuationTensor, a: &Allocation) -> Result<Self> {
        let g = tensor.gradients(a)?;
        let room = tensor
            .capacity()
            .full()
            .checked_sub(a)
            .expect("allocation validated by gradients");
        let mut coords = g.left;
        coords.extend(g.right.into_iter().map(|r| -r));
        coords.extend(room.counts().iter().map(|&x| ExtReal::finite(x as f64)));
        Ok(Self { coords })
    }

    pub fn new(coords: Vec<ExtReal>) -> Self {
        Self { coords }
    }

    pub fn unbounded(dims: usize) -> Self {
        Self {
            coords: vec![ExtReal::POS_INF; dims],
        }
    }

    pub fn coords(&self) -> &[ExtReal] {
        &self.coords
    }

    /// Plain floats, as taken by [`UpperBoundIndex::query_keys_into`].
    pub fn keys(&self) -> Vec<f64> {
        self.coords.iter().map(|c| c.key()).collect()
    }
}

/// Bitmask over dimensions; a set bit marks a vital dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VitalMask(pub u64);

impl VitalMask {
    pub fn is_vital(self, dim: usize) -> bool {
        self.0 >> dim & 1 == 1
    }

    pub fn count(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn vital_dims(self, dims: usize) -> Vec<usize> {
        (0..dims).filter(|&d| self.is_vital(d)).collect()
    }
}

/// Per-dimension minimum over a set of vectors.
pub fn dimension_minima(vectors: &[UbVector]) -> Vec<ExtReal> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let mut minima = first.coords.clone();
    for v in &vectors[1..] {
        for (m, c) in minima.iter_mut().zip(&v.coords) {
            if c < m {
                *m = *c;
            }
        }
    }
    minima
}

/// Marks which dimensions of `v` can filter anything.
///
/// A dimension is non-vital when the coordinate sits at the minimum of the
/// stored set: every bound admitting that minimum admits the vector. Boundary
/// allocations are the usual source: `-left = -inf` at `a_r = 0`, `right = 0`
/// at `a_r = m_r` (when no right derivative is negative), and `a_r = 0` in the
/// allocation block.
pub fn classify_boundary(
    v: &UbVector,
    cap: &ResourceCapacity,
    minima: &[ExtReal],
) -> Result<VitalMask> {
    if !cap.contains(&v.allocation) {
        return Err(Error::AllocationOutOfRange {
            allocation: v.allocation.to_string(),
            capacity: cap.to_string(),
        });
    }
    if minima.len() != v.coords.len() {
        return Err(Error::DimensionMismatch {
            expected: v.coords.len(),
            found: minima.len(),
        });
    }
    let keys: Vec<f64> = v.coords.iter().map(|c| c.key()).collect();
    let mins: Vec<f64> = minima.iter().map(|c| c.key()).collect();
    Ok(vital_mask(&keys, &mins))
}

pub(crate) fn vital_mask(coords: &[f64], minima: &[f64]) -> VitalMask {
    let mut mask = 0u64;
    for (d, (&c, &m)) in coords.iter().zip(minima).enumerate() {
        if c > m {
            mask |= 1 << d;
        }
    }
    VitalMask(mask)
}

/// Caller-owned result of one query. Feed it back to
/// [`UpperBoundIndex::fetch`] on the same index.
#[derive(Clone, Debug, Default)]
pub struct Candidates {
    index_uid: u64,
    segments: Vec<(usize, usize)>,
    explicit: Vec<u32>,
}

impl Candidates {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of vectors a fetch will return.
    pub fn len(&self) -> usize {
        self.explicit.len() + self.segments.iter().map(|(s, e)| e - s).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn reset(&mut self, uid: u64) {
        self.index_uid = uid;
        self.segments.clear();
        self.explicit.clear();
    }
}

enum Body {
    Empty,
    Linear,
    Sim(Layered),
    Combination(Combination),
    KdTree(KdTree),
}

static NEXT_UID: AtomicU64 = AtomicU64::new(1);

/// Immutable upper-bound index over a fixed set of vectors.
///
/// Vector ids are positions in the construction input. Queries write into
/// caller-owned [`Candidates`], so one index can serve many threads.
pub struct UpperBoundIndex {
    uid: u64,
    kind: DsKind,
    dims: usize,
    coords: Vec<f64>,
    arena: Arena,
    body: Body,
}

impl fmt::Debug for UpperBoundIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("UpperBoundIndex")
            .field("kind", &self.kind)
            .field("dims", &self.dims)
            .field("len", &self.len())
            .finish()
    }
}

impl UpperBoundIndex {
    pub fn construct(vectors: &[UbVector], kind: DsKind) -> Result<Self> {
        let Some(first) = vectors.first() else {
            return Ok(Self::empty(kind));
        };
        let dims = first.coords.len();
        let mut coords = Vec::with_capacity(dims * vectors.len());
        for v in vectors {
            if v.coords.len() != dims {
                return Err(Error::DimensionMismatch {
                    expected: dims,
                    found: v.coords.len(),
                });
            }
            coords.extend(v.coords.iter().map(|c| c.key()));
        }
        Self::from_flat(dims, coords, kind)
    }

    /// Index with no vectors; every query fetches nothing.
    pub fn empty(kind: DsKind) -> Self {
        Self {
            uid: NEXT_UID.fetch_add(1, Ordering::Relaxed),
            kind,
            dims: 0,
            coords: Vec::new(),
            arena: Arena::default(),
            body: Body::Empty,
        }
    }

    /// Builds from row-major coordinate keys (`coords.len() = n * dims`).
    /// Infinite coordinates use the IEEE infinities; NaN is rejected.
    pub fn from_flat(dims: usize, coords: Vec<f64>, kind: DsKind) -> Result<Self> {
        if dims == 0 || coords.is_empty() {
            return Ok(Self::empty(kind));
        }
        if dims > 64 {
            return Err(Error::DimensionMismatch {
                expected: 64,
                found: dims,
            });
        }
        if !coords.len().is_multiple_of(dims) {
            return Err(Error::DimensionMismatch {
                expected: dims,
                found: coords.len() % dims,
            });
        }
        if coords.iter().any(|c| c.is_nan()) {
            return Err(Error::Validation("NaN coordinate".into()));
        }
        let n = coords.len() / dims;
        if n > u32::MAX as usize {
            return Err(Error::Validation("too many vectors".into()));
        }
        if !kind.supports(n, dims) {
            if kind == DsKind::KdTree {
                return Err(Error::KdTreeTooLarge {
                    vectors: n,
                    dims,
                    entries: kdtree::estimated_entries(n, dims),
                    max_entries: KD_TREE_MAX_ENTRIES,
                });
            }
            return Err(Error::Validation(format!(
                "{kind} needs a multiple of 3 dimensions, got {dims}"
            )));
        }
        let coords: Vec<f64> = coords.into_iter().map(|c| c + 0.0).collect();
        let mut arena = Arena::default();
        let all: Vec<u32> = (0..n as u32).collect();
        let body = match kind {
            DsKind::LinearScan => Body::Linear,
            DsKind::Sim1d => {
                let mains: Vec<(usize, Vec<usize>)> = (0..dims).map(|d| (d, Vec::new())).collect();
                arena.reserve_exact(Layered::arena_need(n, &mains));
                Body::Sim(Layered::build(&all, &mains, &coords, dims, &mut arena))
            }
            DsKind::Sim2dTrees => {
                let dims_list: Vec<usize> = (0..dims).collect();
                let mains = same_resource_partners(&dims_list, dims / 3);
                arena.reserve_exact(Layered::arena_need(n, &mains));
                Body::Sim(Layered::build(&all, &mains, &coords, dims, &mut arena))
            }
            DsKind::Combination => {
                Body::Combination(Combination::build(&all, &coords, dims, &mut arena))
            }
            DsKind::KdTree => Body::KdTree(KdTree::build(&all, &coords, dims, &mut arena)),
        };
        Ok(Self {
            uid: NEXT_UID.fetch_add(1, Ordering::Relaxed),
            kind,
            dims,
            coords,
            arena,
            body,
        })
    }

    pub fn kind(&self) -> DsKind {
        self.kind
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.coords.len().checked_div(self.dims).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lengths of the top-level sorted arrays (`sim_1d` and `sim_2d_trees`).
    pub fn array_lengths(&self) -> Vec<usize> {
        match &self.body {
            Body::Sim(l) => l.main_lengths(),
            _ => Vec::new(),
        }
    }

    /// Number of boundary classes (`combination` only).
    pub fn class_count(&self) -> usize {
        match &self.body {
            Body::Combination(c) => c.class_count(),
            _ => 0,
        }
    }

    pub fn coords_of(&self, id: u32) -> &[f64] {
        let s = id as usize * self.dims;
        &self.coords[s..s + self.dims]
    }

    /// Exact element-wise check of stored vector `id` against `q`.
    #[inline]
    pub fn matches(&self, id: u32, q: &[f64]) -> bool {
        self.coords_of(id).iter().zip(q).all(|(c, b)| c <= b)
    }

    pub fn query(&self, q: &QueryBound) -> Result<Candidates> {
        if !self.is_empty() && q.coords.len() != self.dims {
            return Err(Error::DimensionMismatch {
                expected: self.dims,
                found: q.coords.len(),
            });
        }
        let mut out = Candidates::new();
        self.query_keys_into(&q.keys(), &mut out);
        Ok(out)
    }

    /// Query with raw keys; `q.len()` must equal `dims()` unless the index
    /// is empty.
    pub fn query_keys_into(&self, q: &[f64], out: &mut Candidates) {
        out.reset(self.uid);
        match &self.body {
            Body::Empty => {}
            Body::Linear => {
                debug_assert_eq!(q.len(), self.dims);
                let n = self.len() as u32;
                out.explicit.extend((0..n).filter(|&id| self.matches(id, q)));
            }
            Body::Sim(l) => l.query(&self.arena, q, &mut out.segments),
            Body::Combination(c) => c.query(&self.arena, q, &mut out.segments),
            Body::KdTree(t) => t.query(&self.arena, &self.coords, q, &mut out.segments, &mut out.explicit),
        }
    }

    pub fn fetch(&self, c: &Candidates) -> Result<Vec<u32>> {
        let mut out = Vec::with_capacity(c.len());
        self.fetch_into(c, &mut out)?;
        Ok(out)
    }

    /// Appends the candidate ids (false positives included) to `out`.
    pub fn fetch_into(&self, c: &Candidates, out: &mut Vec<u32>) -> Result<()> {
        if c.index_uid != self.uid {
            return Err(Error::StaleHandle);
        }
        out.extend_from_slice(&c.explicit);
        for &(s, e) in &c.segments {
            out.extend_from_slice(&self.arena.ids[s..e]);
        }
        Ok(())
    }
}

/// For each dimension in `dims`, the other dimensions of `dims` that belong to
/// the same resource. Layout is `(right block, negated-left block, allocation
/// block)`, so dimension `d` belongs to resource `d % resources`.
pub(crate) fn same_resource_partners(dims: &[usize], resources: usize) -> Vec<(usize, Vec<usize>)> {
    dims.iter()
        .map(|&d| {
            let partners = dims
                .iter()
                .copied()
                .filter(|&p| p != d && p % resources == d % resources)
                .collect();
            (d, partners)
        })
        .collect()
}
