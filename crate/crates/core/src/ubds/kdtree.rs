//! Layered range tree over all dimensions.
//!
//! Level `d` is the input sorted by dimension `d`. Each node `[lo, mid]` of
//! the implicit binary search tree over that array owns a child built from
//! the same vectors one dimension further. Children of at most two vectors are
//! checked directly. Answers are exact.

use std::collections::HashMap;

use super::arena::{sorted_by_dim, Arena, SortedArray};

pub(crate) struct KdTree {
    root: Option<Level>,
}

struct Level {
    dim: usize,
    array: SortedArray,
    /// Indexed by probe position; empty on the last dimension.
    children: Vec<Child>,
}

enum Child {
    Small(SortedArray),
    Tree(Box<Level>),
}

const SMALL: usize = 2;

impl KdTree {
    pub fn build(ids: &[u32], coords: &[f64], dims: usize, arena: &mut Arena) -> Self {
        if ids.is_empty() {
            return Self { root: None };
        }
        let sorted = sorted_by_dim(ids, coords, dims, 0);
        Self {
            root: Some(build_level(sorted, 0, coords, dims, arena)),
        }
    }

    pub fn query(
        &self,
        arena: &Arena,
        coords: &[f64],
        q: &[f64],
        segments: &mut Vec<(usize, usize)>,
        explicit: &mut Vec<u32>,
    ) {
        if let Some(root) = &self.root {
            query_level(root, arena, coords, q.len(), q, segments, explicit);
        }
    }
}

fn build_level(sorted: Vec<u32>, dim: usize, coords: &[f64], dims: usize, arena: &mut Arena) -> Level {
    let array = arena.push(&sorted, coords, dims, dim);
    let mut children = Vec::new();
    if dim + 1 < dims {
        let mut slots: Vec<Option<Child>> = (0..sorted.len()).map(|_| None).collect();
        build_children(&sorted, 0, sorted.len(), dim + 1, coords, dims, arena, &mut slots);
        children = slots.into_iter().map(|c| c.expect("every probe has a child")).collect();
    }
    Level {
        dim,
        array,
        children,
    }
}

#[allow(clippy::too_many_arguments)]
fn build_children(
    sorted: &[u32],
    lo: usize,
    hi: usize,
    next_dim: usize,
    coords: &[f64],
    dims: usize,
    arena: &mut Arena,
    slots: &mut [Option<Child>],
) {
    if lo >= hi {
        return;
    }
    let mid = lo + (hi - lo) / 2;
    let part = &sorted[lo..=mid];
    slots[mid] = Some(if part.len() <= SMALL {
        Child::Small(arena.push(part, coords, dims, next_dim))
    } else {
        let next = sorted_by_dim(part, coords, dims, next_dim);
        Child::Tree(Box::new(build_level(next, next_dim, coords, dims, arena)))
    });
    build_children(sorted, lo, mid, next_dim, coords, dims, arena, slots);
    build_children(sorted, mid + 1, hi, next_dim, coords, dims, arena, slots);
}

fn query_level(
    level: &Level,
    arena: &Arena,
    coords: &[f64],
    dims: usize,
    q: &[f64],
    segments: &mut Vec<(usize, usize)>,
    explicit: &mut Vec<u32>,
) {
    let bound = q[level.dim];
    let keys = &arena.keys[level.array.start..level.array.end()];
    let last = level.children.is_empty();
    let (mut lo, mut hi) = (0, keys.len());
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if keys[mid] <= bound {
            if !last {
                match &level.children[mid] {
                    Child::Small(a) => {
                        for &id in &arena.ids[a.start..a.end()] {
                            let row = &coords[id as usize * dims..(id as usize + 1) * dims];
                            if row.iter().zip(q).all(|(c, b)| c <= b) {
                                explicit.push(id);
                            }
                        }
                    }
                    Child::Tree(t) => query_level(t, arena, coords, dims, q, segments, explicit),
                }
            }
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    if last && lo > 0 {
        segments.push((level.array.start, level.array.start + lo));
    }
}

/// Entries stored by a tree over `n` vectors of `dims` dimensions.
pub(crate) fn estimated_entries(n: usize, dims: usize) -> usize {
    fn level(len: usize, levels: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if levels <= 1 {
            return len;
        }
        len.saturating_add(children(len, levels, memo))
    }
    fn children(len: usize, levels: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if len == 0 {
            return 0;
        }
        if let Some(&v) = memo.get(&(len, levels)) {
            return v;
        }
        let half = len / 2;
        let part = half + 1;
        let own = if part <= SMALL { part } else { level(part, levels - 1, memo) };
        let v = own
            .saturating_add(children(half, levels, memo))
            .saturating_add(children(len - half - 1, levels, memo));
        memo.insert((len, levels), v);
        v
    }
    level(n, dims, &mut HashMap::new())
}
