use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::MarketError;

/// Fees are expressed in parts per million.
pub const FEE_DENOMINATOR: u128 = 1_000_000;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Token(pub String);

impl Token {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Venue identifier (a protocol deployment for one pair).
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProtocolId(pub String);

impl ProtocolId {
    pub fn new(s: impl Into<String>) -> Self {
        Self(s.into())
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Which token of the canonical pair is sold into the pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    SellToken1,
    SellToken2,
}

impl Direction {
    pub fn flip(self) -> Self {
        match self {
            Direction::SellToken1 => Direction::SellToken2,
            Direction::SellToken2 => Direction::SellToken1,
        }
    }
}

/// Unordered pair stored with `token1 < token2`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CanonicalPair {
    pub token1: Token,
    pub token2: Token,
}

impl CanonicalPair {
    pub fn new(a: Token, b: Token) -> Result<Self, MarketError> {
        match a.cmp(&b) {
            Ordering::Less => Ok(Self { token1: a, token2: b }),
            Ordering::Greater => Ok(Self { token1: b, token2: a }),
            Ordering::Equal => Err(MarketError::InvalidPair(format!("{a}/{a}"))),
        }
    }

    /// The ordered trade pair for a given direction.
    pub fn ordered(&self, direction: Direction) -> Pair {
        match direction {
            Direction::SellToken1 => Pair {
                token_buy: self.token2.clone(),
                token_sell: self.token1.clone(),
            },
            Direction::SellToken2 => Pair {
                token_buy: self.token1.clone(),
                token_sell: self.token2.clone(),
            },
        }
    }
}

impl fmt::Display for CanonicalPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.token1, self.token2)
    }
}

/// Ordered pair `(token bought, token sold)`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    pub token_buy: Token,
    pub token_sell: Token,
}

impl Pair {
    pub fn new(token_buy: Token, token_sell: Token) -> Result<Self, MarketError> {
        if token_buy == token_sell {
            return Err(MarketError::InvalidPair(format!("{token_buy}/{token_sell}")));
        }
        Ok(Self { token_buy, token_sell })
    }

    pub fn canonical(&self) -> (CanonicalPair, Direction) {
        if self.token_buy < self.token_sell {
            (
                CanonicalPair {
                    token1: self.token_buy.clone(),
                    token2: self.token_sell.clone(),
                },
                Direction::SellToken2,
            )
        } else {
            (
                CanonicalPair {
                    token1: self.token_sell.clone(),
                    token2: self.token_buy.clone(),
                },
                Direction::SellToken1,
            )
        }
    }
}

/// Reserves `l1` (token 1) and `l2` (token 2) of one constant-product venue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolState {
    pub protocol: ProtocolId,
    pub pair: CanonicalPair,
    pub l1: u128,
    pub l2: u128,
    pub fee_ppm: u32,
}

impl PoolState {
    pub fn new(protocol: ProtocolId, pair: CanonicalPair, l1: u128, l2: u128, fee_ppm: u32) -> Result<Self, MarketError> {
        if fee_ppm as u128 > FEE_DENOMINATOR {
            return Err(MarketError::InvalidPool(format!("fee {fee_ppm} ppm exceeds 100%")));
        }
        Ok(Self {
            protocol,
            pair,
            l1,
            l2,
            fee_ppm,
        })
    }

    pub fn is_active(&self) -> bool {
        self.l1 > 0 && self.l2 > 0
    }

    /// `(reserve_in, reserve_out)` for a swap in `direction`.
    pub fn reserves(&self, direction: Direction) -> (u128, u128) {
        match direction {
            Direction::SellToken1 => (self.l1, self.l2),
            Direction::SellToken2 => (self.l2, self.l1),
        }
    }

    /// Swap `amount_in` of the sold token. The whole input stays in the pool;
    /// only the output is reduced by the fee.
    pub fn swap(&self, amount_in: u128, direction: Direction) -> Result<(u128, PoolState), MarketError> {
        if !self.is_active() {
            return Err(MarketError::InactivePool(self.protocol.to_string()));
        }
        let (r_in, r_out) = self.reserves(direction);
        let out = amount_out(r_in, r_out, amount_in, self.fee_ppm)?;
        let new_in = r_in.checked_add(amount_in).ok_or(MarketError::Overflow("reserve"))?;
        let new_out = r_out - out;
        let mut next = self.clone();
        match direction {
            Direction::SellToken1 => {
                next.l1 = new_in;
                next.l2 = new_out;
            }
            Direction::SellToken2 => {
                next.l2 = new_in;
                next.l1 = new_out;
            }
        }
        Ok((out, next))
    }

    /// Compares the token-1 price (`l2 / l1`) of two pools exactly.
    pub fn cmp_token1_price(&self, other: &PoolState) -> Ordering {
        let a = self.l2.checked_mul(other.l1);
        let b = other.l2.checked_mul(self.l1);
        match (a, b) {
            (Some(a), Some(b)) => a.cmp(&b),
            _ => (self.l2 as f64 / self.l1 as f64).total_cmp(&(other.l2 as f64 / other.l1 as f64)),
        }
    }
}

/// `floor(r_out * a / (r_in + a))` with effective input
/// `a = amount_in * (1 - fee_ppm / 10^6)`, evaluated without rounding `a`.
pub fn amount_out(reserve_in: u128, reserve_out: u128, amount_in: u128, fee_ppm: u32) -> Result<u128, MarketError> {
    if amount_in == 0 {
        return Err(MarketError::Dust);
    }
    let keep = FEE_DENOMINATOR - fee_ppm as u128;
    let effective = amount_in.checked_mul(keep).ok_or(MarketError::Overflow("swap input"))?;
    let num = effective.checked_mul(reserve_out).ok_or(MarketError::Overflow("swap numerator"))?;
    let den = reserve_in
        .checked_mul(FEE_DENOMINATOR)
        .and_then(|d| d.checked_add(effective))
        .ok_or(MarketError::Overflow("swap denominator"))?;
    if den == 0 {
        return Err(MarketError::Dust);
    }
    let out = num / den;
    if out == 0 {
        return Err(MarketError::Dust);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    pub(crate) fn pool(l1: u128, l2: u128, fee: u32) -> PoolState {
        PoolState::new(
            ProtocolId::new("p"),
            CanonicalPair::new(Token::new("A"), Token::new("B")).unwrap(),
            l1,
            l2,
            fee,
        )
        .unwrap()
    }

    #[test]
    fn constant_product_example() {
        let p = pool(100_000_000, 100_000_000, 0);
        let (out, next) = p.swap(10_000_000, Direction::SellToken2).unwrap();
        // floor(100e6 - 1e16 / 110e6)
        assert_eq!(out, 9_090_909);
        assert_eq!(next.l2, 110_000_000);
        assert_eq!(next.l1, 90_909_091);
    }

    #[test]
    fn full_fee_is_dust() {
        let p = pool(1_000, 1_000, 1_000_000);
        assert_eq!(p.swap(10, Direction::SellToken1), Err(MarketError::Dust));
        assert!(PoolState::new(p.protocol.clone(), p.pair.clone(), 1, 1, 1_000_001).is_err());
    }

    #[test]
    fn round_trip_never_gains() {
        let p = pool(1_000_000, 2_000_000, 0);
        let (b, p1) = p.swap(50_000, Direction::SellToken1).unwrap();
        let (a, _) = p1.swap(b, Direction::SellToken2).unwrap();
        assert!(a <= 50_000);
    }

    #[test]
    fn pair_canonicalisation() {
        let ab = Pair::new(Token::new("A"), Token::new("B")).unwrap();
        let ba = Pair::new(Token::new("B"), Token::new("A")).unwrap();
        let (c1, d1) = ab.canonical();
        let (c2, d2) = ba.canonical();
        assert_eq!(c1, c2);
        assert_eq!(d1, d2.flip());
        assert_eq!(c1.ordered(d1), ab);
        assert!(Pair::new(Token::new("A"), Token::new("A")).is_err());
    }

    proptest! {
        #[test]
        fn zero_fee_product_bounds(l1 in 1u128..1_000_000_000, l2 in 1u128..1_000_000_000, x in 1u128..1_000_000_000, sell1 in any::<bool>()) {
            let p = pool(l1, l2, 0);
            let dir = if sell1 { Direction::SellToken1 } else { Direction::SellToken2 };
            let (r_in, _) = p.reserves(dir);
            if let Ok((out, next)) = p.swap(x, dir) {
                let before = l1 * l2;
                let after = next.l1 * next.l2;
                prop_assert!(after >= before);
                prop_assert!(after - before < r_in + x);
                prop_assert!(next.l1 > 0 && next.l2 > 0);
                prop_assert!(out > 0);
            }
        }
    }
}
