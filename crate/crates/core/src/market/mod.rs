//! Constant-product venues and the arithmetic backruns are valued on.
//!
//! All settlement math is exact integer arithmetic in token base units.
//! Token 2 of a canonical pair acts as the quote token: arbitrage starts and
//! ends in it, so every profit is a token-2 amount.

mod arb;
mod chain;
mod pool;

use thiserror::Error;

pub use arb::{
    arb_output, backrun, backrun_within, grid_search_arb, infer_trade_from_liquidity, optimal_arb_amount,
    optimal_arb_amount_within, route_profit, ArbPlan, ArbRoute, Backrun, InferredTrade,
    DEFAULT_SCAN_LIMIT,
};
pub use chain::{AppliedTrade, ChainState, Trade, VenueKey};
pub use pool::{amount_out, CanonicalPair, Direction, Pair, PoolState, ProtocolId, Token, FEE_DENOMINATOR};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MarketError {
    #[error("invalid pair: {0}")]
    InvalidPair(String),
    #[error("invalid pool: {0}")]
    InvalidPool(String),
    #[error("pool {0} is not active")]
    InactivePool(String),
    #[error("dust trade: output rounds to zero")]
    Dust,
    #[error("arithmetic overflow in {0}")]
    Overflow(&'static str),
    #[error("unknown venue {protocol} for {pair}")]
    UnknownVenue { protocol: String, pair: String },
    #[error("inconsistent snapshots: {0}")]
    InconsistentSnapshot(String),
    #[error("slippage: got {out}, required at least {min_out}")]
    SlippageExceeded { out: u128, min_out: u128 },
    #[error("no liquidity change observed on probed venues")]
    NoLiquidityChange,
}
