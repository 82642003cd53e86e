//! Reference optimizers for verification.
//!
//! Small instances enumerate every feasible allocation tuple. Larger ones
//! chain [`naive_join`], which compares every split of every cell and so
//! needs no filtering argument to be exact.

use crate::auction::Bid;
use crate::error::{Error, Result};
use crate::join::{naive_join, JointValuation};
use crate::tensor::{Allocation, ResourceCapacity, ValuationTensor};

/// Largest number of allocation tuples enumerated directly.
pub const EXHAUSTIVE_LIMIT: u128 = 5_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMethod {
    Exhaustive,
    NaiveChain,
}

#[derive(Clone, Debug)]
pub struct OracleSolution {
    pub welfare: f64,
    pub allocations: Vec<Allocation>,
    pub method: OracleMethod,
}

/// Number of tuples `(a_1..a_n)` with `sum a_i <= m`:
/// `prod_r C(m_r + n, n)`.
pub fn tuple_count(agents: usize, cap: &ResourceCapacity) -> u128 {
    cap.units()
        .iter()
        .map(|&m| binomial(m as u128 + agents as u128, agents as u128))
        .fold(1u128, |acc, x| acc.saturating_mul(x))
}

fn binomial(n: u128, k: u128) -> u128 {
    let k = k.min(n - k);
    let mut acc = 1u128;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn check(tensors: &[&ValuationTensor], cap: &ResourceCapacity) -> Result<()> {
    if tensors.is_empty() {
        return Err(Error::NoBids);
    }
    for t in tensors {
        if t.capacity() != cap {
            return Err(Error::CapacityMismatch {
                expected: cap.to_string(),
                found: t.capacity().to_string(),
            });
        }
    }
    Ok(())
}

pub fn optimal_welfare(tensors: &[&ValuationTensor], cap: &ResourceCapacity) -> Result<OracleSolution> {
    check(tensors, cap)?;
    if tuple_count(tensors.len(), cap) <= EXHAUSTIVE_LIMIT {
        Ok(exhaustive(tensors, cap))
    } else {
        naive_chain(tensors, cap)
    }
}

/// Enumerates every feasible tuple. Ties keep the tuple found first.
pub fn exhaustive(tensors: &[&ValuationTensor], cap: &ResourceCapacity) -> OracleSolution {
    struct Search<'a> {
        tensors: &'a [&'a ValuationTensor],
        strides: &'a [usize],
        cells: Vec<usize>,
        best: f64,
        best_cells: Vec<usize>,
    }
    impl Search<'_> {
        fn visit(&mut self, t: usize, remaining: &mut [u32], acc: f64) {
            if t == self.tensors.len() {
                if acc > self.best {
                    self.best = acc;
                    self.best_cells.clone_from(&self.cells);
                }
                return;
            }
            let res = remaining.len();
            let limit = remaining.to_vec();
            let mut a = vec![0u32; res];
            let mut cell = 0usize;
            loop {
                for r in 0..res {
                    remaining[r] = limit[r] - a[r];
                }
                self.cells[t] = cell;
                let v = acc + self.tensors[t].value_at(cell);
                self.visit(t + 1, remaining, v);
                let mut r = res;
                loop {
                    if r == 0 {
                        remaining.copy_from_slice(&limit);
                        return;
                    }
                    r -= 1;
                    if a[r] < limit[r] {
                        a[r] += 1;
                        cell += self.strides[r];
                        break;
                    }
                    cell -= a[r] as usize * self.strides[r];
                    a[r] = 0;
                }
            }
        }
    }
    let mut s = Search {
        tensors,
        strides: cap.strides(),
        cells: vec![0; tensors.len()],
        best: 0.0,
        best_cells: vec![0; tensors.len()],
    };
    let mut remaining = cap.units().to_vec();
    s.visit(0, &mut remaining, 0.0);
    OracleSolution {
        welfare: s.best,
        allocations: s
            .best_cells
            .iter()
            .map(|&c| cap.allocation_at(c).expect("cell in range"))
            .collect(),
        method: OracleMethod::Exhaustive,
    }
}

/// Chain of exact naive joins with the allocation read back from the splits.
pub fn naive_chain(tensors: &[&ValuationTensor], cap: &ResourceCapacity) -> Result<OracleSolution> {
    check(tensors, cap)?;
    let mut chain: Vec<JointValuation> = vec![JointValuation::single(tensors[0])];
    for t in &tensors[1..] {
        let (next, _) = naive_join(chain.last().expect("non-empty").tensor(), t)?;
        chain.push(next);
    }
    let last = chain.last().expect("non-empty").tensor();
    let mut cell = last.argmax();
    let welfare = last.value_at(cell);
    let mut cells = vec![0usize; tensors.len()];
    for t in (0..tensors.len()).rev() {
        match chain[t].divisions().cell(cell) {
            Some((l, r)) => {
                cells[t] = r;
                cell = l;
            }
            None => break,
        }
    }
    Ok(OracleSolution {
        welfare,
        allocations: cells.iter().map(|&c| cap.allocation_at(c)).collect::<Result<_>>()?,
        method: OracleMethod::NaiveChain,
    })
}

/// Optimal welfare without agent `j`; 0 when `j` is the only agent.
pub fn welfare_without(bids: &[Bid], cap: &ResourceCapacity, j: usize) -> Result<f64> {
    let others: Vec<&ValuationTensor> = bids
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, b)| &b.valuation)
        .collect();
    if others.is_empty() {
        return Ok(0.0);
    }
    Ok(optimal_welfare(&others, cap)?.welfare)
}

/// VCG payments from oracle optima, evaluated at the given allocation.
/// Agents whose allocation has zero value pay 0.
pub fn vcg_payments(bids: &[Bid], cap: &ResourceCapacity, allocations: &[Allocation]) -> Result<Vec<f64>> {
    let tensors: Vec<&ValuationTensor> = bids.iter().map(|b| &b.valuation).collect();
    let sw = optimal_welfare(&tensors, cap)?.welfare;
    bids.iter()
        .zip(allocations)
        .enumerate()
        .map(|(j, (b, a))| {
            let v = b.valuation.value(a)?;
            if v > 0.0 {
                Ok(welfare_without(bids, cap, j)? - (sw - v))
            } else {
                Ok(0.0)
            }
        })
        .collect()
}
