//! Simultaneous binary search over several sorted arrays.
//!
//! One sorted array per main dimension. All arrays are searched in lock-step
//! on the same index; an array drops out as soon as its key at the probe
//! exceeds the bound, until only the tightest prefix remains. Ties keep the
//! first array. Optionally, each main dimension carries partner partitions:
//! for every "go upper" step at probe `mid`, the partition `[lo, mid]` of the
//! main array re-sorted by a partner dimension, so the prefix can be cut a
//! second time with a binary search.

use super::arena::{sorted_by_dim, Arena, SortedArray};

pub(crate) struct Layered {
    len: usize,
    mains: Vec<Main>,
}

struct Main {
    dim: usize,
    array: SortedArray,
    partners: Vec<Partner>,
}

struct Partner {
    dim: usize,
    /// Indexed by probe position in the main array.
    parts: Vec<SortedArray>,
}

impl Layered {
    /// `mains` lists each main dimension with its partner dimensions.
    pub fn build(
        ids: &[u32],
        mains: &[(usize, Vec<usize>)],
        coords: &[f64],
        dims: usize,
        arena: &mut Arena,
    ) -> Self {
        let n = ids.len();
        let mut builder = PartitionBuilder::new(coords.len() / dims, n);
        let mains = mains
            .iter()
            .map(|(dim, partner_dims)| {
                let sorted = sorted_by_dim(ids, coords, dims, *dim);
                let array = arena.push(&sorted, coords, dims, *dim);
                for (pos, &id) in sorted.iter().enumerate() {
                    builder.rank[id as usize] = pos as u32;
                }
                let partners = partner_dims
                    .iter()
                    .map(|&p| Partner {
                        dim: p,
                        parts: builder.build(&sorted, coords, dims, p, arena),
                    })
                    .collect();
                Main {
                    dim: *dim,
                    array,
                    partners,
                }
            })
            .collect();
        Self { len: n, mains }
    }

    /// Arena entries that [`Layered::build`] appends for `n` vectors.
    pub fn arena_need(n: usize, mains: &[(usize, Vec<usize>)]) -> usize {
        mains.iter().map(|(_, p)| n + p.len() * partition_total(0, n)).sum()
    }

    pub fn main_lengths(&self) -> Vec<usize> {
        self.mains.iter().map(|m| m.array.len).collect()
    }

    pub fn query(&self, arena: &Arena, q: &[f64], out: &mut Vec<(usize, usize)>) {
        if self.len == 0 || self.mains.is_empty() {
            return;
        }
        let mut active = [0u8; 64];
        let mut n_active = self.mains.len();
        for (i, a) in active.iter_mut().enumerate().take(n_active) {
            *a = i as u8;
        }
        let mut upper_steps = [0usize; 64];
        let mut n_steps = 0;
        let (mut lo, mut hi) = (0, self.len);
        while lo < hi {
            let mid = lo + (hi - lo) / 2;
            let mut kept = 0;
            for i in 0..n_active {
                let m = &self.mains[active[i] as usize];
                if arena.keys[m.array.start + mid] > q[m.dim] {
                    active[kept] = active[i];
                    kept += 1;
                }
            }
            if kept > 0 {
                n_active = kept;
                hi = mid;
            } else {
                upper_steps[n_steps] = mid;
                n_steps += 1;
                lo = mid + 1;
            }
        }
        let winner = &self.mains[active[0] as usize];
        if winner.partners.is_empty() {
            if lo > 0 {
                out.push((winner.array.start, winner.array.start + lo));
            }
            return;
        }
        for &mid in &upper_steps[..n_steps] {
            let mut best: Option<(usize, usize)> = None;
            for p in &winner.partners {
                let part = p.parts[mid];
                let count = arena.count_at_most(part, q[p.dim]);
                if best.is_none_or(|(c, _)| count < c) {
                    best = Some((count, part.start));
                }
            }
            if let Some((count, start)) = best {
                if count > 0 {
                    out.push((start, start + count));
                }
            }
        }
    }
}

/// Builds the partner partitions of one main array level by level.
///
/// At each level, the buffer holds for every tree node `[lo, hi)` its vectors
/// sorted by the partner dimension, at positions `lo..hi`. One stable pass per
/// node emits the partition `[lo, mid]` and splits the rest between the
/// children.
struct PartitionBuilder {
    /// Position of each vector id in the current main array.
    rank: Vec<u32>,
    cur: Vec<(f64, u32)>,
    next: Vec<(f64, u32)>,
}

impl PartitionBuilder {
    fn new(universe: usize, n: usize) -> Self {
        Self {
            rank: vec![0; universe],
            cur: Vec::with_capacity(n),
            next: vec![(0.0, 0); n + 1],
        }
    }

    fn build(
        &mut self,
        main: &[u32],
        coords: &[f64],
        dims: usize,
        dim: usize,
        arena: &mut Arena,
    ) -> Vec<SortedArray> {
        let n = main.len();
        let mut parts = vec![SortedArray::default(); n];
        self.cur.clear();
        self.cur
            .extend(main.iter().map(|&id| (coords[id as usize * dims + dim], id)));
        self.cur
            .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        self.cur.push((0.0, 0));
        self.next.resize(n + 1, (0.0, 0));
        let total = partition_total(0, n);
        let base = arena.ids.len();
        // One spare slot absorbs the discarded writes of the branch-free split.
        arena.ids.resize(base + total + 1, 0);
        arena.keys.resize(base + total + 1, 0.0);
        let ids = &mut arena.ids[..];
        let keys = &mut arena.keys[..];
        let rank = &self.rank[..];
        let mut off = base;
        let mut nodes = vec![(0usize, n)];
        let mut children = Vec::new();
        while !nodes.is_empty() {
            let cur = &self.cur[..];
            let next = &mut self.next[..];
            for &(lo, hi) in &nodes {
                let mid = lo + (hi - lo) / 2;
                let (mut out, mut left, mut right) = (off, lo, mid + 1);
                for &(key, id) in &cur[lo..hi] {
                    let r = rank[id as usize] as usize;
                    ids[out] = id;
                    keys[out] = key;
                    out += (r <= mid) as usize;
                    next[left] = (key, id);
                    left += (r < mid) as usize;
                    next[right] = (key, id);
                    right += (r > mid) as usize;
                }
                parts[mid] = SortedArray {
                    start: off,
                    len: mid + 1 - lo,
                };
                off += mid + 1 - lo;
                if lo < mid {
                    children.push((lo, mid));
                }
                if mid + 1 < hi {
                    children.push((mid + 1, hi));
                }
            }
            std::mem::swap(&mut self.cur, &mut self.next);
            std::mem::swap(&mut nodes, &mut children);
            children.clear();
        }
        arena.ids.truncate(base + total);
        arena.keys.truncate(base + total);
        parts
    }
}

/// Total size of the partitions of the tree over `[lo, hi)`.
fn partition_total(lo: usize, hi: usize) -> usize {
    if lo >= hi {
        return 0;
    }
    let mid = lo + (hi - lo) / 2;
    mid + 1 - lo + partition_total(lo, mid) + partition_total(mid + 1, hi)
}
