use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::arb::ArbRoute;
use super::pool::{CanonicalPair, Direction, Pair, PoolState, ProtocolId};
use super::MarketError;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VenueKey {
    pub protocol: ProtocolId,
    pub pair: CanonicalPair,
}

/// One swap. The ordered pair carries the direction: `token_sell` goes in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trade {
    pub pair: Pair,
    pub protocol: ProtocolId,
    pub amount_in: u128,
    #[serde(default)]
    pub min_amount_out: u128,
}

impl Trade {
    pub fn new(pair: Pair, protocol: ProtocolId, amount_in: u128) -> Self {
        Self {
            pair,
            protocol,
            amount_in,
            min_amount_out: 0,
        }
    }

    pub fn direction(&self) -> Direction {
        self.pair.canonical().1
    }

    pub fn venue(&self) -> VenueKey {
        VenueKey {
            protocol: self.protocol.clone(),
            pair: self.pair.canonical().0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppliedTrade {
    pub round: u64,
    pub trade: Trade,
    pub amount_out: u128,
    pub before: PoolState,
    pub after: PoolState,
}

/// Simulated on-chain state: venues keyed by `(protocol, pair)` plus an
/// append-only log of applied trades.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainState {
    pools: BTreeMap<VenueKey, PoolState>,
    pub gas_price: u128,
    round: u64,
    history: Vec<AppliedTrade>,
}

impl ChainState {
    pub fn new(gas_price: u128) -> Self {
        Self {
            gas_price,
            ..Self::default()
        }
    }

    pub fn add_pool(&mut self, pool: PoolState) -> Result<(), MarketError> {
        let key = VenueKey {
            protocol: pool.protocol.clone(),
            pair: pool.pair.clone(),
        };
        if self.pools.contains_key(&key) {
            return Err(MarketError::InvalidPool(format!("duplicate venue {} {}", key.protocol, key.pair)));
        }
        self.pools.insert(key, pool);
        Ok(())
    }

    pub fn pool(&self, protocol: &ProtocolId, pair: &CanonicalPair) -> Option<&PoolState> {
        self.pools.get(&VenueKey {
            protocol: protocol.clone(),
            pair: pair.clone(),
        })
    }

    fn pool_or_err(&self, protocol: &ProtocolId, pair: &CanonicalPair) -> Result<&PoolState, MarketError> {
        self.pool(protocol, pair).ok_or_else(|| MarketError::UnknownVenue {
            protocol: protocol.to_string(),
            pair: pair.to_string(),
        })
    }

    pub fn pools(&self) -> impl Iterator<Item = &PoolState> {
        self.pools.values()
    }

    /// All venues listing `pair`, in protocol order.
    pub fn venues_for<'a>(&'a self, pair: &'a CanonicalPair) -> impl Iterator<Item = &'a PoolState> + 'a {
        self.pools.values().filter(move |p| &p.pair == pair)
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn set_round(&mut self, round: u64) {
        self.round = round;
    }

    pub fn history(&self) -> &[AppliedTrade] {
        &self.history
    }

    pub fn round_history(&self, round: u64) -> impl Iterator<Item = &AppliedTrade> {
        self.history.iter().filter(move |t| t.round == round)
    }

    /// Copy of the pools without the trade log, for what-if simulation.
    pub fn snapshot(&self) -> ChainState {
        ChainState {
            pools: self.pools.clone(),
            gas_price: self.gas_price,
            round: self.round,
            history: Vec::new(),
        }
    }

    /// Output of `trade` against the current state, without applying it.
    pub fn quote(&self, trade: &Trade) -> Result<u128, MarketError> {
        let (pair, dir) = trade.pair.canonical();
        Ok(self.pool_or_err(&trade.protocol, &pair)?.swap(trade.amount_in, dir)?.0)
    }

    /// Execute one trade. On error nothing changes.
    pub fn apply_trade(&mut self, trade: &Trade) -> Result<u128, MarketError> {
        let (pair, dir) = trade.pair.canonical();
        let before = self.pool_or_err(&trade.protocol, &pair)?.clone();
        let (out, after) = before.swap(trade.amount_in, dir)?;
        if out < trade.min_amount_out {
            return Err(MarketError::SlippageExceeded {
                out,
                min_out: trade.min_amount_out,
            });
        }
        self.pools.insert(
            VenueKey {
                protocol: trade.protocol.clone(),
                pair,
            },
            after.clone(),
        );
        self.history.push(AppliedTrade {
            round: self.round,
            trade: trade.clone(),
            amount_out: out,
            before,
            after,
        });
        Ok(out)
    }

    /// Apply trades in order, all or nothing.
    pub fn apply_all(&mut self, trades: &[Trade]) -> Result<Vec<u128>, MarketError> {
        let mut scratch = self.snapshot();
        for t in trades {
            scratch.apply_trade(t)?;
        }
        let mut outs = Vec::with_capacity(trades.len());
        for t in trades {
            outs.push(self.apply_trade(t)?);
        }
        Ok(outs)
    }

    /// Run an arbitrage route atomically: buy token 1 on the buy venue with
    /// `amount_in` of token 2, sell everything received on the sell venue.
    /// Returns the gross token-2 profit, which may be negative.
    pub fn execute_route(&mut self, route: &ArbRoute) -> Result<i128, MarketError> {
        let leg1 = Trade::new(route.pair.ordered(Direction::SellToken2), route.buy_venue.clone(), route.amount_in);
        let mid = self.quote(&leg1)?;
        let leg2 = Trade::new(route.pair.ordered(Direction::SellToken1), route.sell_venue.clone(), mid);
        if route.buy_venue == route.sell_venue {
            return Err(MarketError::InvalidPool("route buys and sells on one venue".into()));
        }
        let outs = self.apply_all(&[leg1, leg2])?;
        Ok(outs[1] as i128 - route.amount_in as i128)
    }

    /// Gross profit `execute_route` would realise, leaving the state as is.
    pub fn simulate_route(&self, route: &ArbRoute) -> Result<i128, MarketError> {
        self.snapshot().execute_route(route)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::Token;

    fn ab() -> CanonicalPair {
        CanonicalPair::new(Token::new("A"), Token::new("B")).unwrap()
    }

    fn state() -> ChainState {
        let mut s = ChainState::new(1);
        for (name, l1, l2) in [("u", 1_000_000u128, 1_000_000u128), ("s", 1_000_000, 1_100_000)] {
            s.add_pool(PoolState::new(ProtocolId::new(name), ab(), l1, l2, 3000).unwrap())
                .unwrap();
        }
        s
    }

    #[test]
    fn unknown_venue_and_duplicates() {
        let mut s = state();
        let t = Trade::new(ab().ordered(Direction::SellToken1), ProtocolId::new("curve"), 10);
        assert!(matches!(s.apply_trade(&t), Err(MarketError::UnknownVenue { .. })));
        let dup = s.pools().next().unwrap().clone();
        assert!(s.add_pool(dup).is_err());
        assert!(s.history().is_empty());
    }

    #[test]
    fn disjoint_trades_commute() {
        let t1 = Trade::new(ab().ordered(Direction::SellToken1), ProtocolId::new("u"), 5_000);
        let t2 = Trade::new(ab().ordered(Direction::SellToken2), ProtocolId::new("s"), 7_000);
        let mut x = state();
        x.apply_trade(&t1).unwrap();
        x.apply_trade(&t2).unwrap();
        let mut y = state();
        y.apply_trade(&t2).unwrap();
        y.apply_trade(&t1).unwrap();
        assert_eq!(x.snapshot().pools, y.snapshot().pools);

        // same pool: order matters
        let t3 = Trade::new(ab().ordered(Direction::SellToken2), ProtocolId::new("u"), 300_000);
        let mut x = state();
        let a1 = x.apply_trade(&t1).unwrap();
        x.apply_trade(&t3).unwrap();
        let mut y = state();
        y.apply_trade(&t3).unwrap();
        let b1 = y.apply_trade(&t1).unwrap();
        assert_ne!(a1, b1);
    }

    #[test]
    fn slippage_and_atomic_batches() {
        let mut s = state();
        let mut t = Trade::new(ab().ordered(Direction::SellToken1), ProtocolId::new("u"), 5_000);
        t.min_amount_out = u128::MAX;
        assert!(matches!(s.apply_trade(&t), Err(MarketError::SlippageExceeded { .. })));
        let ok = Trade::new(ab().ordered(Direction::SellToken1), ProtocolId::new("u"), 5_000);
        let before = s.clone();
        assert!(s.apply_all(&[ok, t]).is_err());
        assert_eq!(s, before);
    }
}
