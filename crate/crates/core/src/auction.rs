//! VCG auction over the join chain.
//!
//! The forward chain `P_t = join(P_{t-1}, V_t)` yields the optimal welfare and,
//! through the stored splits, the allocation. Payments need the optimum
//! without each winner `j`; that is the best cell of
//! `join(P_{j-1}, S_{j+1})` where `S_t = join(V_t, S_{t+1})` is built in
//! reverse order.

use crate::error::{Error, Result};
use crate::join::{join_with, JoinMetrics, JoinOptions, JointValuation};
use crate::tensor::{Allocation, ResourceCapacity, ValuationTensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Bid {
    pub agent_id: String,
    pub valuation: ValuationTensor,
}

impl Bid {
    pub fn new(agent_id: impl Into<String>, valuation: ValuationTensor) -> Self {
        Self {
            agent_id: agent_id.into(),
            valuation,
        }
    }
}

/// Prefix joints `P_1..P_n` of the bids in order.
#[derive(Clone, Debug)]
pub struct ForwardChain {
    joints: Vec<JointValuation>,
}

impl ForwardChain {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }

    /// `P_t` for `t` in `1..=n`.
    pub fn prefix(&self, t: usize) -> &JointValuation {
        &self.joints[t - 1]
    }
}

#[derive(Clone, Debug)]
pub struct AllocationOutcome {
    pub allocations: Vec<Allocation>,
    pub social_welfare: f64,
    pub chain: ForwardChain,
    pub metrics: JoinMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Payments {
    pub payments: Vec<f64>,
    /// Optimal welfare without the agent; `None` for non-winners.
    pub welfare_without: Vec<Option<f64>>,
    pub metrics: JoinMetrics,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentOutcome {
    pub agent_id: String,
    pub allocation: Allocation,
    pub value: f64,
    pub payment: f64,
    pub welfare_without: Option<f64>,
}

impl AgentOutcome {
    pub fn is_winner(&self) -> bool {
        self.value > 0.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuctionResult {
    pub agents: Vec<AgentOutcome>,
    pub social_welfare: f64,
    pub capacity: ResourceCapacity,
    pub allocation_metrics: JoinMetrics,
    pub payment_metrics: JoinMetrics,
}

impl AuctionResult {
    pub fn agent(&self, agent_id: &str) -> Option<&AgentOutcome> {
        self.agents.iter().find(|a| a.agent_id == agent_id)
    }

    pub fn total_payments(&self) -> f64 {
        self.agents.iter().map(|a| a.payment).sum()
    }

    pub fn winners(&self) -> impl Iterator<Item = &AgentOutcome> {
        self.agents.iter().filter(|a| a.is_winner())
    }

    /// Units handed out per resource.
    pub fn units_allocated(&self) -> Vec<u64> {
        let mut total = vec![0u64; self.capacity.resources()];
        for a in &self.agents {
            for (t, &x) in total.iter_mut().zip(a.allocation.counts()) {
                *t += x as u64;
            }
        }
        total
    }
}

fn check_bids(bids: &[Bid], cap: &ResourceCapacity) -> Result<()> {
    if bids.is_empty() {
        return Err(Error::NoBids);
    }
    for b in bids {
        if b.valuation.capacity() != cap {
            return Err(Error::AgentCapacityMismatch {
                agent: b.agent_id.clone(),
                expected: cap.to_string(),
                found: b.valuation.capacity().to_string(),
            });
        }
    }
    Ok(())
}

/// Joins the bids left to right and reads the optimal allocation back from
/// the splits. Welfare ties at the last joint go to the lowest cell index.
pub fn solve_allocation(
    bids: &[Bid],
    cap: &ResourceCapacity,
    opts: &JoinOptions,
) -> Result<AllocationOutcome> {
    check_bids(bids, cap)?;
    let mut metrics = JoinMetrics::default();
    let mut joints = Vec::with_capacity(bids.len());
    joints.push(JointValuation::single(&bids[0].valuation));
    for b in &bids[1..] {
        let prev = joints.last().expect("chain starts non-empty");
        let (next, m) = join_with(prev.tensor(), &b.valuation, opts)?;
        metrics.accumulate(&m);
        joints.push(next);
    }
    let last = joints.last().expect("chain starts non-empty").tensor();
    let mut cell = last.argmax();
    let social_welfare = last.value_at(cell);

    let mut cells = vec![0usize; bids.len()];
    for t in (0..bids.len()).rev() {
        match joints[t].divisions().cell(cell) {
            Some((l, r)) => {
                cells[t] = r;
                cell = l;
            }
            None => break,
        }
    }
    let allocations = cells
        .into_iter()
        .map(|c| cap.allocation_at(c))
        .collect::<Result<_>>()?;
    Ok(AllocationOutcome {
        allocations,
        social_welfare,
        chain: ForwardChain { joints },
        metrics,
    })
}

/// Relative tolerance under which a payment just outside `[0, value]` is
/// treated as rounding and clamped.
const PAYMENT_ROUNDING: f64 = 1e-9;

pub fn compute_payments(
    bids: &[Bid],
    cap: &ResourceCapacity,
    opts: &JoinOptions,
    chain: &ForwardChain,
    allocations: &[Allocation],
    social_welfare: f64,
) -> Result<Payments> {
    check_bids(bids, cap)?;
    let n = bids.len();
    if chain.len() != n || allocations.len() != n {
        return Err(Error::Validation(format!(
            "forward chain has {} joints and {} allocations for {n} bids",
            chain.len(),
            allocations.len()
        )));
    }
    let values: Vec<f64> = bids
        .iter()
        .zip(allocations)
        .map(|(b, a)| b.valuation.value(a))
        .collect::<Result<_>>()?;
    let mut metrics = JoinMetrics::default();
    let mut payments = vec![0.0; n];
    let mut welfare_without = vec![None; n];
    let Some(lowest_winner) = values.iter().position(|&v| v > 0.0) else {
        return Ok(Payments {
            payments,
            welfare_without,
            metrics,
        });
    };

    // `suffix` holds S_{j+1} while agent j is handled; `None` is the empty group.
    let mut suffix: Option<ValuationTensor> = None;
    for j in (lowest_winner..n).rev() {
        if values[j] > 0.0 {
            let without = match (j, &suffix) {
                (0, None) => 0.0,
                (0, Some(s)) => s.max_value(),
                (_, None) => chain.prefix(j).tensor().max_value(),
                (_, Some(s)) => {
                    let (bridge, m) = join_with(chain.prefix(j).tensor(), s, opts)?;
                    metrics.accumulate(&m);
                    bridge.tensor().max_value()
                }
            };
            welfare_without[j] = Some(without);
            payments[j] = clamp_payment(without - (social_welfare - values[j]), values[j], social_welfare);
        }
        if j > lowest_winner {
            suffix = Some(match suffix {
                None => bids[j].valuation.clone(),
                Some(s) => {
                    let (next, m) = join_with(&bids[j].valuation, &s, opts)?;
                    metrics.accumulate(&m);
                    next.into_tensor()
                }
            });
        }
    }
    Ok(Payments {
        payments,
        welfare_without,
        metrics,
    })
}

fn clamp_payment(p: f64, value: f64, welfare: f64) -> f64 {
    let tol = PAYMENT_ROUNDING * welfare.max(1.0);
    if p < 0.0 && p > -tol {
        0.0
    } else if p > value && p < value + tol {
        value
    } else {
        p
    }
}

pub fn run_vcg_auction(
    bids: &[Bid],
    cap: &ResourceCapacity,
    opts: &JoinOptions,
) -> Result<AuctionResult> {
    let outcome = solve_allocation(bids, cap, opts)?;
    let pay = compute_payments(
        bids,
        cap,
        opts,
        &outcome.chain,
        &outcome.allocations,
        outcome.social_welfare,
    )?;
    let agents = bids
        .iter()
        .zip(outcome.allocations)
        .enumerate()
        .map(|(i, (b, a))| {
            let value = b.valuation.value(&a)?;
            Ok(AgentOutcome {
                agent_id: b.agent_id.clone(),
                allocation: a,
                value,
                payment: pay.payments[i],
                welfare_without: pay.welfare_without[i],
            })
        })
        .collect::<Result<_>>()?;
    Ok(AuctionResult {
        agents,
        social_welfare: outcome.social_welfare,
        capacity: cap.clone(),
        allocation_metrics: outcome.metrics,
        payment_metrics: pay.metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ubds::DsKind;

    fn one_d(values: &[f64]) -> ValuationTensor {
        let cap = ResourceCapacity::new(vec![values.len() as u32 - 1]).unwrap();
        ValuationTensor::new(cap, values.to_vec()).unwrap()
    }

    fn opts() -> JoinOptions {
        JoinOptions::new(DsKind::Sim2dTrees)
    }

    #[test]
    fn single_agent_takes_its_maximum() {
        let v = one_d(&[0.0, 5.0, 8.0]);
        let cap = v.capacity().clone();
        let r = run_vcg_auction(&[Bid::new("a", v)], &cap, &opts()).unwrap();
        assert_eq!(r.social_welfare, 8.0);
        assert_eq!(r.agents[0].allocation.counts(), &[2]);
        assert_eq!(r.agents[0].payment, 0.0);
    }

    #[test]
    fn vickrey_second_price() {
        let cap = ResourceCapacity::new(vec![1]).unwrap();
        let bids = [Bid::new("a", one_d(&[0.0, 5.0])), Bid::new("b", one_d(&[0.0, 3.0]))];
        let r = run_vcg_auction(&bids, &cap, &opts()).unwrap();
        assert_eq!(r.social_welfare, 5.0);
        assert_eq!(r.agents[0].allocation.counts(), &[1]);
        assert_eq!(r.agents[0].payment, 3.0);
        assert_eq!(r.agents[0].welfare_without, Some(3.0));
        assert_eq!(r.agents[1].allocation.counts(), &[0]);
        assert_eq!(r.agents[1].payment, 0.0);
        assert_eq!(r.agents[1].welfare_without, None);
    }

    #[test]
    fn no_externality_means_free() {
        let cap = ResourceCapacity::new(vec![2]).unwrap();
        let bids = [Bid::new("a", one_d(&[0.0, 5.0, 5.0])), Bid::new("b", one_d(&[0.0, 3.0, 3.0]))];
        let r = run_vcg_auction(&bids, &cap, &opts()).unwrap();
        assert_eq!(r.social_welfare, 8.0);
        assert!(r.agents.iter().all(|a| a.payment == 0.0));
    }

    #[test]
    fn rejects_bad_inputs() {
        let cap = ResourceCapacity::new(vec![1]).unwrap();
        assert!(matches!(run_vcg_auction(&[], &cap, &opts()), Err(Error::NoBids)));
        let bad = [Bid::new("x", one_d(&[0.0, 1.0, 2.0]))];
        match run_vcg_auction(&bad, &cap, &opts()) {
            Err(Error::AgentCapacityMismatch { agent, .. }) => assert_eq!(agent, "x"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_zero_bids() {
        let cap = ResourceCapacity::new(vec![2]).unwrap();
        let bids = [
            Bid::new("a", ValuationTensor::zeros(cap.clone())),
            Bid::new("b", ValuationTensor::zeros(cap.clone())),
        ];
        let r = run_vcg_auction(&bids, &cap, &opts()).unwrap();
        assert_eq!(r.social_welfare, 0.0);
        assert!(r.agents.iter().all(|a| a.allocation.is_zero() && a.payment == 0.0));
    }

    #[test]
    fn clamping_only_absorbs_rounding() {
        assert_eq!(clamp_payment(-1e-15, 1.0, 10.0), 0.0);
        assert_eq!(clamp_payment(-1.0, 1.0, 10.0), -1.0);
        assert_eq!(clamp_payment(1.0 + 1e-15, 1.0, 10.0), 1.0);
    }
}
