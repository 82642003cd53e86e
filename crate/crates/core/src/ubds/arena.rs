//! Flat storage shared by all sorted arrays of one index.

/// Vector ids alongside the sort key of the array they live in.
#[derive(Default)]
pub(crate) struct Arena {
    pub ids: Vec<u32>,
    pub keys: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct SortedArray {
    pub start: usize,
    pub len: usize,
}

impl SortedArray {
    pub fn end(self) -> usize {
        self.start + self.len
    }
}

impl Arena {
    /// Room for `extra` more entries, so large builds never copy on growth.
    /// One more slot covers the scratch entry of the partition builder.
    pub fn reserve_exact(&mut self, extra: usize) {
        self.ids.reserve_exact(extra + 1);
        self.keys.reserve_exact(extra + 1);
    }

    /// Appends `ids` (already sorted by `dim`) and their keys.
    pub fn push(&mut self, ids: &[u32], coords: &[f64], dims: usize, dim: usize) -> SortedArray {
        let start = self.ids.len();
        self.ids.extend_from_slice(ids);
        self.keys
            .extend(ids.iter().map(|&id| coords[id as usize * dims + dim]));
        SortedArray {
            start,
            len: ids.len(),
        }
    }

    /// Number of leading entries of `a` with key `<= bound`.
    #[inline]
    pub fn count_at_most(&self, a: SortedArray, bound: f64) -> usize {
        self.keys[a.start..a.end()].partition_point(|&k| k <= bound)
    }
}

/// `ids` ordered by `(coordinate in dim, id)`.
pub(crate) fn sorted_by_dim(ids: &[u32], coords: &[f64], dims: usize, dim: usize) -> Vec<u32> {
    let mut keyed: Vec<(f64, u32)> = ids
        .iter()
        .map(|&id| (coords[id as usize * dims + dim], id))
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().map(|(_, id)| id).collect()
}
