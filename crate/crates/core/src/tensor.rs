//! Resource grids, valuation tensors and one-sided discrete gradients.
//!
//! A valuation is a dense row-major grid over every allocation `a <= m`. The
//! last resource varies fastest, so the linear index of `a + b` equals the sum
//! of the linear indices of `a` and `b` whenever `a + b <= m`; the join engine
//! relies on that.

use std::cmp::Ordering;
use std::fmt;
use std::ops::Add;

use crate::error::{Error, Result};

/// Extended real used for one-sided derivatives.
///
/// Holds a finite value or one of the two infinities. It is ordered totally
/// and deliberately has no arithmetic.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtReal(f64);

impl ExtReal {
    pub const POS_INF: ExtReal = ExtReal(f64::INFINITY);
    pub const NEG_INF: ExtReal = ExtReal(f64::NEG_INFINITY);
    pub const ZERO: ExtReal = ExtReal(0.0);

    /// Wraps a finite value. Panics on NaN or infinity.
    pub fn finite(value: f64) -> Self {
        assert!(value.is_finite(), "ExtReal::finite got {value}");
        // -0.0 + 0.0 == +0.0, which keeps the total order consistent with `<=`.
        ExtReal(value + 0.0)
    }

    pub fn is_pos_inf(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn is_neg_inf(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }

    /// The finite value, if any.
    pub fn value(self) -> Option<f64> {
        self.0.is_finite().then_some(self.0)
    }

    /// Sort key. Infinities map onto the IEEE infinities so that plain `<=`
    /// on keys agrees with the order of `ExtReal`.
    pub fn key(self) -> f64 {
        self.0
    }

    pub(crate) fn from_key(key: f64) -> Self {
        debug_assert!(!key.is_nan());
        ExtReal(key + 0.0)
    }
}

impl std::ops::Neg for ExtReal {
    type Output = ExtReal;
    fn neg(self) -> ExtReal {
        ExtReal(-self.0 + 0.0)
    }
}

impl Eq for ExtReal {}

impl PartialOrd for ExtReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ExtReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_pos_inf() {
            f.write_str("+inf")
        } else if self.is_neg_inf() {
            f.write_str("-inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

/// Units available of each resource, `(m_1, ..., m_R)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ResourceCapacity {
    units: Vec<u32>,
    strides: Vec<usize>,
    cells: usize,
}

/// Largest grid we index with `u32` cell ids (one value is reserved as a sentinel).
pub const MAX_CELLS: usize = u32::MAX as usize - 1;

impl ResourceCapacity {
    pub fn new(units: Vec<u32>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidCapacity(
                "at least one resource is required".into(),
            ));
        }
        if let Some(r) = units.iter().position(|&m| m == 0) {
            return Err(Error::InvalidCapacity(format!(
                "resource {r} has zero units"
            )));
        }
        let mut strides = vec![0; units.len()];
        let mut acc: usize = 1;
        for r in (0..units.len()).rev() {
            strides[r] = acc;
            acc = acc
                .checked_mul(units[r] as usize + 1)
                .filter(|&n| n <= MAX_CELLS)
                .ok_or_else(|| {
                    Error::InvalidCapacity(format!("grid {units:?} has too many cells"))
                })?;
        }
        Ok(Self {
            units,
            strides,
            cells: acc,
        })
    }

    pub fn units(&self) -> &[u32] {
        &self.units
    }

    pub fn resources(&self) -> usize {
        self.units.len()
    }

    /// `N = prod(m_r + 1)`.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn contains(&self, a: &Allocation) -> bool {
        a.0.len() == self.units.len() && a.0.iter().zip(&self.units).all(|(x, m)| x <= m)
    }

    pub fn linear_index(&self, a: &Allocation) -> Result<usize> {
        if !self.contains(a) {
            return Err(Error::AllocationOutOfRange {
                allocation: a.to_string(),
                capacity: self.to_string(),
            });
        }
        Ok(a.0.iter().zip(&self.strides).map(|(&x, &s)| x as usize * s).sum())
    }

    pub fn allocation_at(&self, index: usize) -> Result<Allocation> {
        if index >= self.cells {
            return Err(Error::CellOutOfRange {
                index,
                cells: self.cells,
            });
        }
        let mut counts = vec![0; self.units.len()];
        self.write_coords(index, &mut counts);
        Ok(Allocation(counts))
    }

    pub(crate) fn write_coords(&self, mut index: usize, out: &mut [u32]) {
        for (slot, &stride) in out.iter_mut().zip(&self.strides) {
            *slot = (index / stride) as u32;
            index %= stride;
        }
    }

    /// The full allocation `m` as an [`Allocation`].
    pub fn full(&self) -> Allocation {
        Allocation(self.units.clone())
    }

    /// All allocations in row-major order.
    pub fn allocations(&self) -> impl Iterator<Item = Allocation> + '_ {
        (0..self.cells).map(move |i| {
            let mut counts = vec![0; self.units.len()];
            self.write_coords(i, &mut counts);
            Allocation(counts)
        })
    }

    /// Number of ways to split every total `c <= m` between two agents,
    /// `sum_c prod_r (c_r + 1) = prod_r (m_r + 1)(m_r + 2) / 2`.
    pub fn division_count(&self) -> u128 {
        self.units
            .iter()
            .map(|&m| (m as u128 + 1) * (m as u128 + 2) / 2)
            .product()
    }
}

impl fmt::Display for ResourceCapacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.units)
    }
}

/// Row-major odometer over a grid, yielding nothing but keeping coordinates
/// in sync with a running cell index.
pub(crate) struct Odometer<'a> {
    units: &'a [u32],
    pub coords: Vec<u32>,
    pub index: usize,
    done: bool,
}

impl<'a> Odometer<'a> {
    pub fn new(units: &'a [u32]) -> Self {
        Self {
            units,
            coords: vec![0; units.len()],
            index: 0,
            done: false,
        }
    }

    pub fn done(&self) -> bool {
        self.done
    }

    pub fn advance(&mut self) {
        self.index += 1;
        for r in (0..self.units.len()).rev() {
            if self.coords[r] < self.units[r] {
                self.coords[r] += 1;
                return;
            }
            self.coords[r] = 0;
        }
        self.done = true;
    }
}

/// Units of each resource held by one agent.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Allocation(Vec<u32>);

impl Allocation {
    pub fn new(counts: Vec<u32>) -> Self {
        Allocation(counts)
    }

    pub fn zeros(resources: usize) -> Self {
        Allocation(vec![0; resources])
    }

    pub fn counts(&self) -> &[u32] {
        &self.0
    }

    pub fn resources(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0)
    }

    /// Element-wise `self <= other`.
    pub fn le(&self, other: &Allocation) -> bool {
        self.0.len() == other.0.len() && self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }

    pub fn checked_sub(&self, other: &Allocation) -> Option<Allocation> {
        if self.0.len() != other.0.len() {
            return None;
        }
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| a.checked_sub(*b))
            .collect::<Option<Vec<_>>>()
            .map(Allocation)
    }
}

impl Add for &Allocation {
    type Output = Allocation;
    fn add(self, rhs: &Allocation) -> Allocation {
        assert_eq!(self.0.len(), rhs.0.len(), "allocation dimension mismatch");
        Allocation(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl From<Vec<u32>> for Allocation {
    fn from(counts: Vec<u32>) -> Self {
        Allocation(counts)
    }
}

impl fmt::Display for Allocation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_tuple(f, &self.0)
    }
}

fn write_tuple(f: &mut fmt::Formatter<'_>, xs: &[u32]) -> fmt::Result {
    f.write_str("(")?;
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{x}")?;
    }
    f.write_str(")")
}

/// Left and right one-sided derivatives at one allocation, per resource.
///
/// `left[r] = +inf` exactly when `a_r = 0`; `right[r] = 0` exactly when
/// `a_r = m_r`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GradientPair {
    pub left: Vec<ExtReal>,
    pub right: Vec<ExtReal>,
}

/// An agent's bid, or the effective valuation of a group of agents.
#[derive(Clone, Debug, PartialEq)]
pub struct ValuationTensor {
    capacity: ResourceCapacity,
    values: Vec<f64>,
}

impl ValuationTensor {
    /// Builds a tensor, requiring finite nonnegative values and `V(0) = 0`.
    pub fn new(capacity: ResourceCapacity, values: Vec<f64>) -> Result<Self> {
        if values.len() != capacity.cells() {
            return Err(Error::InvalidTensor(format!(
                "expected {} values for capacity {capacity}, got {}",
                capacity.cells(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidTensor(format!(
                "value {} at cell {i} is not a finite nonnegative number",
                values[i]
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::InvalidTensor(format!(
                "value at the empty allocation must be 0, got {}",
                values[0]
            )));
        }
        Ok(Self { capacity, values })
    }

    /// Shifts all values so that `V(0) = 0`, then validates.
    pub fn normalized(capacity: ResourceCapacity, mut values: Vec<f64>) -> Result<Self> {
        if let Some(&origin) = values.first() {
            if origin.is_finite() && origin != 0.0 {
                values.iter_mut().for_each(|v| *v -= origin);
            }
        }
        Self::new(capacity, values)
    }

    /// The all-zero valuation, the identity of the join.
    pub fn zeros(capacity: ResourceCapacity) -> Self {
        let values = vec![0.0; capacity.cells()];
        Self { capacity, values }
    }

    /// Skips validation. Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(capacity: ResourceCapacity, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), capacity.cells());
        Self { capacity, values }
    }

    pub fn capacity(&self) -> &ResourceCapacity {
        &self.capacity
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, a: &Allocation) -> Result<f64> {
        Ok(self.values[self.capacity.linear_index(a)?])
    }

    pub fn value_at(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cell of the maximal value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    pub fn gradients(&self, a: &Allocation) -> Result<GradientPair> {
        let cell = self.capacity.linear_index(a)?;
        let resources = self.capacity.resources();
        let mut left = Vec::with_capacity(resources);
        let mut right = Vec::with_capacity(resources);
        for r in 0..resources {
            let (l, rt) = self.one_sided(cell, a.counts()[r], r);
            left.push(ExtReal::from_key(l));
            right.push(ExtReal::from_key(rt));
        }
        Ok(GradientPair { left, right })
    }

    /// `(left, right)` derivative keys along resource `r` at `cell`, whose
    /// coordinate in that resource is `coord`.
    #[inline]
    pub(crate) fn one_sided(&self, cell: usize, coord: u32, r: usize) -> (f64, f64) {
        let stride = self.capacity.strides[r];
        let v = self.values[cell];
        let left = if coord == 0 {
            f64::INFINITY
        } else {
            v - self.values[cell - stride]
        };
        let right = if coord == self.capacity.units[r] {
            0.0
        } else {
            self.values[cell + stride] - v
        };
        (left + 0.0, right + 0.0)
    }

    /// Allocations whose every left derivative is positive.
    pub fn pareto_survivors(&self) -> Vec<Allocation> {
        self.pareto_survivor_cells()
            .into_iter()
            .map(|c| self.capacity.allocation_at(c).expect("cell in range"))
            .collect()
    }

    /// Linear indices of [`Self::pareto_survivors`], ascending.
    pub fn pareto_survivor_cells(&self) -> Vec<usize> {
        let units = self.capacity.units();
        let mut out = Vec::new();
        let mut odo = Odometer::new(units);
        while !odo.done() {
            let cell = odo.index;
            let keep = (0..units.len()).all(|r| {
                odo.coords[r] == 0
                    || self.values[cell] - self.values[cell - self.capacity.strides[r]] > 0.0
            });
            if keep {
                out.push(cell);
            }
            odo.advance();
        }
        out
    }

    /// Restriction to the box `[0, upper]`. Resources where `upper` is zero are
    /// sliced away at coordinate 0, so the result may have fewer resources.
    /// Returns `None` when every entry of `upper` is zero.
    pub fn restrict(&self, upper: &Allocation) -> Result<Option<ValuationTensor>> {
        if !self.capacity.contains(upper) {
            return Err(Error::AllocationOutOfRange {
                allocation: upper.to_string(),
                capacity: self.capacity.to_string(),
            });
        }
        let kept: Vec<usize> = (0..upper.resources())
            .filter(|&r| upper.counts()[r] > 0)
            .collect();
        if kept.is_empty() {
            return Ok(None);
        }
        let sub_units: Vec<u32> = kept.iter().map(|&r| upper.counts()[r]).collect();
        let sub_cap = ResourceCapacity::new(sub_units)?;
        let mut values = Vec::with_capacity(sub_cap.cells());
        let mut odo = Odometer::new(sub_cap.units());
        while !odo.done() {
            let cell: usize = kept
                .iter()
                .zip(&odo.coords)
                .map(|(&r, &x)| x as usize * self.capacity.strides[r])
                .sum();
            values.push(self.values[cell]);
            odo.advance();
        }
        Ok(Some(ValuationTensor::from_parts_unchecked(sub_cap, values)))
    }
}
