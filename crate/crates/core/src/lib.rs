//! Differentially private aggregate hints for an order-flow auction.
//!
//! A trusted matchmaker collects user transactions, discloses per-transaction
//! hints in the clear, and releases noisy `countOf` / `sumOf` aggregates over
//! the transactions that opted in. Searchers turn those hints into backrun
//! bundles against simulated constant-product pools, and the matchmaker
//! settles the bundle paying the largest kickback to the user.
//!
//! Module map:
//!
//! - [`dp`]: noise samplers, count/sum mechanisms, subsampling and its
//!   privacy amplification, the budget ledger and an empirical epsilon audit.
//! - [`market`]: constant-product pools, exact integer swaps, liquidity-delta
//!   inference and optimal two-venue arbitrage.
//! - [`matchmaker`]: the trusted curator (ingest, release, auction, settle).
//! - [`strategies`]: contract backrunning, prior-driven brute force and the
//!   hint-enhanced brute force.
//! - [`adversary`]: sybil poisoning of the sum aggregate.
//! - [`sim`]: scenario configuration, the round loop, paired experiments and
//!   report files.

pub mod adversary;
pub mod dp;
pub mod ids;
pub mod market;
pub mod matchmaker;
pub mod sim;
pub mod stats;
pub mod strategies;

pub use ids::{ParticipantId, TxId};
