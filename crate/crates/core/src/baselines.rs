//! Reference mechanisms: a greedy auction for concave single-resource bids and
//! independent per-resource auctions.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::auction::{solve_allocation, AgentOutcome, AuctionResult, Bid};
use crate::datasets::GeneratedClient;
use crate::error::{Error, Result};
use crate::join::{JoinMetrics, JoinOptions};
use crate::tensor::{Allocation, ResourceCapacity};

const CONCAVITY_TOL: f64 = 1e-12;

/// Concave, strictly increasing valuation of one resource.
#[derive(Clone, Debug, PartialEq)]
pub struct SingleResourceBid {
    agent_id: String,
    values: Vec<f64>,
}

impl SingleResourceBid {
    pub fn new(agent_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        let agent_id = agent_id.into();
        let fail = |msg: &str| Err(Error::Validation(format!("bid `{agent_id}`: {msg}")));
        if values.len() < 2 {
            return fail("needs at least one unit");
        }
        if values[0] != 0.0 {
            return fail("value of zero units must be 0");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return fail("values must be finite");
        }
        let scale = values.iter().copied().fold(0.0, f64::max).max(1.0);
        let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
        if diffs.iter().any(|&d| d <= 0.0) {
            return fail("not strictly increasing");
        }
        if diffs.windows(2).any(|w| w[1] > w[0] + CONCAVITY_TOL * scale) {
            return fail("not concave");
        }
        Ok(Self { agent_id, values })
    }

    /// Single-resource bid from a one-resource tensor.
    pub fn from_bid(bid: &Bid) -> Result<Self> {
        if bid.valuation.capacity().resources() != 1 {
            return Err(Error::Validation(format!(
                "bid `{}` covers {} resources, expected 1",
                bid.agent_id,
                bid.valuation.capacity().resources()
            )));
        }
        Self::new(bid.agent_id.clone(), bid.valuation.values().to_vec())
    }

    pub fn agent_id(&self) -> &str {
        &self.agent_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn units(&self) -> u32 {
        self.values.len() as u32 - 1
    }

    fn marginal(&self, held: u32) -> f64 {
        self.values[held as usize + 1] - self.values[held as usize]
    }
}

#[derive(PartialEq)]
struct Offer {
    marginal: f64,
    agent: Reverse<usize>,
}

impl Eq for Offer {}

impl PartialOrd for Offer {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Offer {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.marginal
            .total_cmp(&other.marginal)
            .then(self.agent.cmp(&other.agent))
    }
}

/// Hands out units one at a time to the highest next marginal value; ties go
/// to the earlier agent. Returns units held and total welfare.
fn greedy(bids: &[&SingleResourceBid], m: u32) -> (Vec<u32>, f64) {
    let mut held = vec![0u32; bids.len()];
    let mut heap: BinaryHeap<Offer> = bids
        .iter()
        .enumerate()
        .filter(|(_, b)| b.units() > 0)
        .map(|(i, b)| Offer {
            marginal: b.marginal(0),
            agent: Reverse(i),
        })
        .collect();
    for _ in 0..m {
        let Some(best) = heap.pop() else { break };
        if best.marginal <= 0.0 {
            break;
        }
        let i = best.agent.0;
        held[i] += 1;
        if held[i] < bids[i].units() {
            heap.push(Offer {
                marginal: bids[i].marginal(held[i]),
                agent: Reverse(i),
            });
        }
    }
    let welfare = bids
        .iter()
        .zip(&held)
        .fold(0.0, |acc, (b, &h)| acc + b.values[h as usize]);
    (held, welfare)
}

/// Greedy auction with payments from re-running greedy without each winner.
pub fn concave_auction(bids: &[SingleResourceBid], m: u32) -> Result<AuctionResult> {
    if bids.is_empty() {
        return Err(Error::NoBids);
    }
    let capacity = ResourceCapacity::new(vec![m])?;
    if let Some(b) = bids.iter().find(|b| b.units() != m) {
        return Err(Error::AgentCapacityMismatch {
            agent: b.agent_id.clone(),
            expected: capacity.to_string(),
            found: format!("({})", b.units()),
        });
    }
    let all: Vec<&SingleResourceBid> = bids.iter().collect();
    let (held, social_welfare) = greedy(&all, m);
    let agents = bids
        .iter()
        .enumerate()
        .map(|(j, b)| {
            let value = b.values[held[j] as usize];
            let (payment, welfare_without) = if value > 0.0 {
                let others: Vec<&SingleResourceBid> = all
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != j)
                    .map(|(_, b)| *b)
                    .collect();
                let (_, without) = greedy(&others, m);
                ((without - (social_welfare - value)).max(0.0), Some(without))
            } else {
                (0.0, None)
            };
            AgentOutcome {
                agent_id: b.agent_id.clone(),
                allocation: Allocation::new(vec![held[j]]),
                value,
                payment,
                welfare_without,
            }
        })
        .collect();
    Ok(AuctionResult {
        agents,
        social_welfare,
        capacity,
        allocation_metrics: JoinMetrics::default(),
        payment_metrics: JoinMetrics::default(),
    })
}

#[derive(Clone, Debug)]
pub struct SeparateAuctions {
    /// Welfare of the combined per-resource winnings under the true valuations.
    pub achieved: f64,
    /// Optimal welfare of the joint auction.
    pub optimal: f64,
    pub per_resource: Vec<AuctionResult>,
}

impl SeparateAuctions {
    pub fn ratio(&self) -> f64 {
        if self.optimal == 0.0 {
            1.0
        } else {
            self.achieved / self.optimal
        }
    }
}

/// One concave auction per resource, each client bidding `max_value / R`
/// times its component for that resource. The winnings are then valued with
/// the full tensors.
pub fn separate_auctions(
    clients: &[GeneratedClient],
    cap: &ResourceCapacity,
    opts: &JoinOptions,
) -> Result<SeparateAuctions> {
    if clients.is_empty() {
        return Err(Error::NoBids);
    }
    let res = cap.resources();
    let share = 1.0 / res as f64;
    let mut per_resource = Vec::with_capacity(res);
    for (r, &m) in cap.units().iter().enumerate() {
        let bids = clients
            .iter()
            .map(|c| {
                let comp = c.components.get(r).ok_or_else(|| {
                    Error::Validation(format!("client `{}` lacks component {r}", c.agent_id))
                })?;
                let values = comp.iter().map(|v| c.max_value * share * v).collect();
                SingleResourceBid::new(c.agent_id.clone(), values)
            })
            .collect::<Result<Vec<_>>>()?;
        per_resource.push(concave_auction(&bids, m)?);
    }
    let mut achieved = 0.0;
    for (i, c) in clients.iter().enumerate() {
        let won: Vec<u32> = per_resource
            .iter()
            .map(|a| a.agents[i].allocation.counts()[0])
            .collect();
        achieved += c.valuation.value(&Allocation::new(won))?;
    }
    let bids: Vec<Bid> = clients.iter().map(GeneratedClient::bid).collect();
    let optimal = solve_allocation(&bids, cap, opts)?.social_welfare;
    Ok(SeparateAuctions {
        achieved,
        optimal,
        per_resource,
    })
}
