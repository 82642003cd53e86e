//! Exact multi-resource, multi-unit VCG auctions.
//!
//! Each bidder submits a [`ValuationTensor`] over every bundle up to the
//! capacity. The valuations are joined pairwise into the valuation of the
//! whole group ([`join`]); the best cell of the final joint is the optimal
//! social welfare, and the allocation is read back from the stored splits.
//! Payments reuse the forward chain and a chain joined in reverse order.

pub mod auction;
pub mod baselines;
pub mod datasets;
pub mod error;
pub mod join;
pub mod oracle;
pub mod tensor;
pub mod ubds;
pub mod vft;

pub use auction::{run_vcg_auction, AgentOutcome, AuctionResult, Bid};
pub use error::{Error, Result};
pub use join::{join, join_with, naive_join, DivisionMap, JoinMetrics, JoinOptions, JointValuation};
pub use tensor::{Allocation, ExtReal, GradientPair, ResourceCapacity, ValuationTensor};
pub use ubds::{Candidates, DsKind, QueryBound, UbVector, UpperBoundIndex};
