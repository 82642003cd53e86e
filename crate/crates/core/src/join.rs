//! Joining two valuations into the valuation of the pair.
//!
//! [`join`] only compares splits `(a_i, a_j)` that can be optimal: both sides
//! Pareto-efficient (every left derivative positive) and locally optimal
//! (`grad+ V_i(a_i) <= grad- V_j(a_j)` and vice versa for every resource).
//! The second condition is answered by an [`UpperBoundIndex`] over one side,
//! queried once per surviving allocation of the other.
//!
//! [`naive_join`] compares every split and serves as the oracle.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::tensor::{Allocation, ResourceCapacity, ValuationTensor};
use crate::ubds::{Candidates, DsKind, UpperBoundIndex};

const NO_DIVISION: u32 = u32::MAX;

/// Relative tolerance added to the derivative part of each query bound, so
/// that rounding in the finite differences cannot drop an equality case.
pub const DERIVATIVE_SLACK: f64 = 1e-12;

/// Per cell of a joint valuation, the left-hand allocation of the best split
/// found. The right-hand allocation is the cell minus the left one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DivisionMap {
    capacity: ResourceCapacity,
    left: Vec<u32>,
}

impl DivisionMap {
    pub fn capacity(&self) -> &ResourceCapacity {
        &self.capacity
    }

    /// `(left cell, right cell)` of the split stored at `cell`. `None` means
    /// no split beat zero there: both sides take nothing.
    #[inline]
    pub fn cell(&self, cell: usize) -> Option<(usize, usize)> {
        match self.left[cell] {
            NO_DIVISION => None,
            l => Some((l as usize, cell - l as usize)),
        }
    }

    pub fn get(&self, c: &Allocation) -> Result<Option<(Allocation, Allocation)>> {
        let cell = self.capacity.linear_index(c)?;
        Ok(self.cell(cell).map(|(l, r)| {
            (
                self.capacity.allocation_at(l).expect("stored cell in range"),
                self.capacity.allocation_at(r).expect("stored cell in range"),
            )
        }))
    }

    /// Number of cells holding a split.
    pub fn filled(&self) -> usize {
        self.left.iter().filter(|&&l| l != NO_DIVISION).count()
    }
}

/// Joint tensor plus the split behind every filled cell.
#[derive(Clone, Debug, PartialEq)]
pub struct JointValuation {
    tensor: ValuationTensor,
    divisions: DivisionMap,
}

impl JointValuation {
    pub fn tensor(&self) -> &ValuationTensor {
        &self.tensor
    }

    pub fn divisions(&self) -> &DivisionMap {
        &self.divisions
    }

    pub fn into_tensor(self) -> ValuationTensor {
        self.tensor
    }

    /// Joint of a single valuation with the empty group: every cell with
    /// positive value is taken entirely by `v`.
    pub fn single(v: &ValuationTensor) -> Self {
        let mut left: Vec<u32> = v
            .values()
            .iter()
            .map(|&x| if x > 0.0 { 0 } else { NO_DIVISION })
            .collect();
        left[0] = 0;
        Self {
            tensor: v.clone(),
            divisions: DivisionMap {
                capacity: v.capacity().clone(),
                left,
            },
        }
    }
}

/// Deliberate defects for mutation testing of the verification suites.
#[doc(hidden)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Index every allocation instead of only Pareto-efficient ones.
    SkipParetoFilter,
    /// Take the left derivative at `a_r = 0` as 0 instead of `+inf`.
    DropLeftInfinity,
}

#[derive(Clone, Copy, Debug)]
pub struct JoinOptions {
    pub ds: DsKind,
    /// Record per-phase wall times.
    pub timings: bool,
    #[doc(hidden)]
    pub fault: Option<Fault>,
}

impl JoinOptions {
    pub fn new(ds: DsKind) -> Self {
        Self {
            ds,
            timings: false,
            fault: None,
        }
    }

    pub fn with_timings(mut self) -> Self {
        self.timings = true;
        self
    }
}

impl Default for JoinOptions {
    fn default() -> Self {
        Self::new(DsKind::Combination)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct JoinMetrics {
    pub cells: usize,
    pub left_survivors: usize,
    pub right_survivors: usize,
    pub queries: u64,
    pub candidates: u64,
    pub exact_matches: u64,
    pub comparisons: u64,
    pub construct_ns: u64,
    pub query_ns: u64,
    pub fetch_ns: u64,
    pub compare_ns: u64,
}

impl JoinMetrics {
    /// Share of fetched candidates that failed the exact check.
    pub fn false_positive_ratio(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            (self.candidates - self.exact_matches) as f64 / self.candidates as f64
        }
    }

    pub fn matches_per_query(&self) -> f64 {
        if self.queries == 0 {
            0.0
        } else {
            self.exact_matches as f64 / self.queries as f64
        }
    }

    pub fn total_ns(&self) -> u64 {
        self.construct_ns + self.query_ns + self.fetch_ns + self.compare_ns
    }

    pub fn accumulate(&mut self, other: &JoinMetrics) {
        self.cells = self.cells.max(other.cells);
        self.left_survivors += other.left_survivors;
        self.right_survivors += other.right_survivors;
        self.queries += other.queries;
        self.candidates += other.candidates;
        self.exact_matches += other.exact_matches;
        self.comparisons += other.comparisons;
        self.construct_ns += other.construct_ns;
        self.query_ns += other.query_ns;
        self.fetch_ns += other.fetch_ns;
        self.compare_ns += other.compare_ns;
    }
}

pub fn join(v1: &ValuationTensor, v2: &ValuationTensor, ds: DsKind) -> Result<JointValuation> {
    join_with(v1, v2, &JoinOptions::new(ds)).map(|(j, _)| j)
}

fn check_capacity(v1: &ValuationTensor, v2: &ValuationTensor) -> Result<()> {
    if v1.capacity() != v2.capacity() {
        return Err(Error::CapacityMismatch {
            expected: v1.capacity().to_string(),
            found: v2.capacity().to_string(),
        });
    }
    Ok(())
}

struct Clock(Option<Instant>);

impl Clock {
    fn start(enabled: bool) -> Self {
        Clock(enabled.then(Instant::now))
    }

    /// Nanoseconds since the last lap, restarting the clock.
    fn lap(&mut self) -> u64 {
        match &mut self.0 {
            Some(t) => {
                let now = Instant::now();
                let ns = now.duration_since(*t).as_nanos() as u64;
                *t = now;
                ns
            }
            None => 0,
        }
    }
}

#[inline]
fn derivatives(v: &ValuationTensor, cell: usize, coord: u32, r: usize, fault: Option<Fault>) -> (f64, f64) {
    let (l, rt) = v.one_sided(cell, coord, r);
    if coord == 0 && fault == Some(Fault::DropLeftInfinity) {
        (0.0, rt)
    } else {
        (l, rt)
    }
}

fn survivors(v: &ValuationTensor, fault: Option<Fault>) -> Vec<usize> {
    if fault == Some(Fault::SkipParetoFilter) {
        (0..v.capacity().cells()).collect()
    } else {
        v.pareto_survivor_cells()
    }
}

pub fn join_with(
    v1: &ValuationTensor,
    v2: &ValuationTensor,
    opts: &JoinOptions,
) -> Result<(JointValuation, JoinMetrics)> {
    check_capacity(v1, v2)?;
    let cap = v1.capacity();
    let units = cap.units();
    let res = cap.resources();
    let dims = 3 * res;
    let mut clock = Clock::start(opts.timings);
    let mut metrics = JoinMetrics {
        cells: cap.cells(),
        ..JoinMetrics::default()
    };

    let surv1 = survivors(v1, opts.fault);
    let surv2 = survivors(v2, opts.fault);
    metrics.left_survivors = surv1.len();
    metrics.right_survivors = surv2.len();
    // Index the side with more survivors, query with the other.
    let swap = surv1.len() > surv2.len();
    let (qv, qcells, sv, scells) = if swap {
        (v2, &surv2, v1, &surv1)
    } else {
        (v1, &surv1, v2, &surv2)
    };
    let slack = DERIVATIVE_SLACK * v1.max_value().max(v2.max_value());

    let mut coords = Vec::with_capacity(scells.len() * dims);
    let mut buf = vec![0u32; res];
    let mut row = vec![0f64; dims];
    for &cell in scells {
        cap.write_coords(cell, &mut buf);
        for r in 0..res {
            let (l, rt) = derivatives(sv, cell, buf[r], r, opts.fault);
            row[r] = rt;
            row[res + r] = -l;
            row[2 * res + r] = buf[r] as f64;
        }
        coords.extend_from_slice(&row);
    }
    let index = UpperBoundIndex::from_flat(dims, coords, opts.ds)?;
    metrics.construct_ns = clock.lap();

    let mut values = vec![0.0f64; cap.cells()];
    let mut left = vec![NO_DIVISION; cap.cells()];
    left[0] = 0;
    let mut cands = Candidates::new();
    let mut fetched: Vec<u32> = Vec::new();
    let mut q = vec![0f64; dims];
    for &ci in qcells {
        cap.write_coords(ci, &mut buf);
        for r in 0..res {
            let (l, rt) = derivatives(qv, ci, buf[r], r, opts.fault);
            q[r] = l + slack;
            q[res + r] = -rt + slack;
            q[2 * res + r] = (units[r] - buf[r]) as f64;
        }
        index.query_keys_into(&q, &mut cands);
        metrics.queries += 1;
        metrics.query_ns += clock.lap();

        fetched.clear();
        index.fetch_into(&cands, &mut fetched)?;
        metrics.candidates += fetched.len() as u64;
        metrics.fetch_ns += clock.lap();

        let vi = qv.value_at(ci);
        for &id in &fetched {
            if !index.matches(id, &q) {
                continue;
            }
            metrics.exact_matches += 1;
            let cj = scells[id as usize];
            let cell = ci + cj;
            let v = vi + sv.value_at(cj);
            metrics.comparisons += 1;
            if values[cell] < v {
                values[cell] = v;
                left[cell] = if swap { cj } else { ci } as u32;
            }
        }
        metrics.compare_ns += clock.lap();
    }

    let joint = JointValuation {
        tensor: ValuationTensor::from_parts_unchecked(cap.clone(), values),
        divisions: DivisionMap {
            capacity: cap.clone(),
            left,
        },
    };
    Ok((joint, metrics))
}

/// Exact join over every split `a_i + a_j = c` of every cell. Also returns the
/// number of splits compared, `prod_r (m_r + 1)(m_r + 2) / 2`.
pub fn naive_join(v1: &ValuationTensor, v2: &ValuationTensor) -> Result<(JointValuation, u64)> {
    check_capacity(v1, v2)?;
    let cap = v1.capacity();
    let strides = cap.strides();
    let res = cap.resources();
    let mut values = vec![0.0f64; cap.cells()];
    let mut left = vec![NO_DIVISION; cap.cells()];
    left[0] = 0;
    let mut comparisons = 0u64;
    let mut c = vec![0u32; res];
    let mut a = vec![0u32; res];
    for cell in 0..cap.cells() {
        cap.write_coords(cell, &mut c);
        a.iter_mut().for_each(|x| *x = 0);
        let mut ai = 0usize;
        'box_walk: loop {
            let v = v1.value_at(ai) + v2.value_at(cell - ai);
            comparisons += 1;
            if values[cell] < v {
                values[cell] = v;
                left[cell] = ai as u32;
            }
            for r in (0..res).rev() {
                if a[r] < c[r] {
                    a[r] += 1;
                    ai += strides[r];
                    continue 'box_walk;
                }
                ai -= a[r] as usize * strides[r];
                a[r] = 0;
            }
            break;
        }
    }
    let joint = JointValuation {
        tensor: ValuationTensor::from_parts_unchecked(cap.clone(), values),
        divisions: DivisionMap {
            capacity: cap.clone(),
            left,
        },
    };
    Ok((joint, comparisons))
}
