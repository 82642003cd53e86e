//! Boundary classes, each filtered only on its vital dimensions.
//!
//! A dimension of a vector is vital when its coordinate exceeds the minimum of
//! that dimension over the whole set. Vectors sharing a vital mask form a
//! class. A class is skipped outright when a bound falls below the minimum of
//! one of its non-vital dimensions; otherwise only the vital dimensions are
//! searched.

use std::collections::BTreeMap;

use super::arena::{sorted_by_dim, Arena, SortedArray};
use super::layered::Layered;
use super::{same_resource_partners, vital_mask};

pub(crate) struct Combination {
    minima: Vec<f64>,
    classes: Vec<Class>,
}

struct Class {
    nonvital: Vec<usize>,
    body: ClassBody,
}

enum ClassBody {
    /// No vital dimension: the whole class passes.
    All(SortedArray),
    /// One vital dimension: an exact prefix.
    Sorted { dim: usize, array: SortedArray },
    /// Two or more vital dimensions.
    Layered(Layered),
}

impl Combination {
    pub fn build(ids: &[u32], coords: &[f64], dims: usize, arena: &mut Arena) -> Self {
        let resources = dims / 3;
        let mut minima = vec![f64::INFINITY; dims];
        for &id in ids {
            let row = &coords[id as usize * dims..(id as usize + 1) * dims];
            for (m, &c) in minima.iter_mut().zip(row) {
                if c < *m {
                    *m = c;
                }
            }
        }
        let mut groups: BTreeMap<u64, Vec<u32>> = BTreeMap::new();
        for &id in ids {
            let row = &coords[id as usize * dims..(id as usize + 1) * dims];
            groups.entry(vital_mask(row, &minima).0).or_default().push(id);
        }
        let need: usize = groups
            .iter()
            .map(|(&mask, members)| {
                let vital: Vec<usize> = (0..dims).filter(|d| mask >> d & 1 == 1).collect();
                match vital.len() {
                    0 | 1 => members.len(),
                    _ => Layered::arena_need(members.len(), &same_resource_partners(&vital, resources)),
                }
            })
            .sum();
        arena.reserve_exact(need);
        let classes = groups
            .into_iter()
            .map(|(mask, members)| {
                let vital: Vec<usize> = (0..dims).filter(|d| mask >> d & 1 == 1).collect();
                let nonvital = (0..dims).filter(|d| mask >> d & 1 == 0).collect();
                let body = match vital.len() {
                    0 => ClassBody::All(arena.push(&members, coords, dims, 0)),
                    1 => {
                        let sorted = sorted_by_dim(&members, coords, dims, vital[0]);
                        ClassBody::Sorted {
                            dim: vital[0],
                            array: arena.push(&sorted, coords, dims, vital[0]),
                        }
                    }
                    _ => {
                        let mains = same_resource_partners(&vital, resources);
                        ClassBody::Layered(Layered::build(&members, &mains, coords, dims, arena))
                    }
                };
                Class { nonvital, body }
            })
            .collect();
        Self { minima, classes }
    }

    pub fn class_count(&self) -> usize {
        self.classes.len()
    }

    pub fn query(&self, arena: &Arena, q: &[f64], out: &mut Vec<(usize, usize)>) {
        for class in &self.classes {
            if class.nonvital.iter().any(|&d| self.minima[d] > q[d]) {
                continue;
            }
            match &class.body {
                ClassBody::All(a) => out.push((a.start, a.end())),
                ClassBody::Sorted { dim, array } => {
                    let n = arena.count_at_most(*array, q[*dim]);
                    if n > 0 {
                        out.push((array.start, array.start + n));
                    }
                }
                ClassBody::Layered(l) => l.query(arena, q, out),
            }
        }
    }
}
