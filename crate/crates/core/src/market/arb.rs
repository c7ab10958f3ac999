//! Two-venue arbitrage and the exact backrun built on it.
//!
//! Routes always start and end in token 2: buy token 1 where it is cheap,
//! sell it where it is dear. The real-valued optimum has a closed form; the
//! integer optimum is found by scanning outward from it until the smooth
//! profit curve, which bounds every integer outcome from above, drops below
//! the best integer profit seen.

use serde::{Deserialize, Serialize};

use super::chain::{ChainState, Trade};
use super::pool::{amount_out, CanonicalPair, Direction, Pair, PoolState, ProtocolId, FEE_DENOMINATOR};
use super::MarketError;

/// Per-side cap on integer candidates scanned around the closed form.
pub const DEFAULT_SCAN_LIMIT: u64 = 1 << 15;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbRoute {
    pub pair: CanonicalPair,
    pub buy_venue: ProtocolId,
    pub sell_venue: ProtocolId,
    pub amount_in: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArbPlan {
    pub amount_in: u128,
    pub expected_profit: u128,
    pub route: Option<ArbRoute>,
}

impl ArbPlan {
    pub fn none() -> Self {
        Self {
            amount_in: 0,
            expected_profit: 0,
            route: None,
        }
    }
}

/// Leg outputs `(token1 bought, token2 received)` for `amount_in` of token 2.
pub fn arb_output(buy: &PoolState, sell: &PoolState, amount_in: u128) -> Result<(u128, u128), MarketError> {
    for p in [buy, sell] {
        if !p.is_active() {
            return Err(MarketError::InactivePool(p.protocol.to_string()));
        }
    }
    buy.l2.checked_add(amount_in).ok_or(MarketError::Overflow("reserve"))?;
    let mid = amount_out(buy.l2, buy.l1, amount_in, buy.fee_ppm)?;
    let out = amount_out(sell.l1, sell.l2, mid, sell.fee_ppm)?;
    Ok((mid, out))
}

/// Exact integer gross profit of the route, in token 2.
pub fn route_profit(buy: &PoolState, sell: &PoolState, amount_in: u128) -> Result<i128, MarketError> {
    let (_, out) = arb_output(buy, sell, amount_in)?;
    Ok(out as i128 - amount_in as i128)
}

/// Best route between two venues on one pair, in either direction.
/// Returns an empty plan when no input is profitable.
pub fn optimal_arb_amount(a: &PoolState, b: &PoolState) -> Result<ArbPlan, MarketError> {
    optimal_arb_amount_within(a, b, DEFAULT_SCAN_LIMIT)
}

/// As [`optimal_arb_amount`] with an explicit scan cap. The result is the
/// exact integer optimum whenever the cap is not reached.
pub fn optimal_arb_amount_within(a: &PoolState, b: &PoolState, scan_limit: u64) -> Result<ArbPlan, MarketError> {
    if a.pair != b.pair {
        return Err(MarketError::InvalidPair(format!("{} vs {}", a.pair, b.pair)));
    }
    if a.protocol == b.protocol {
        return Err(MarketError::InvalidPool(format!("both sides are venue {}", a.protocol)));
    }
    if !a.is_active() || !b.is_active() {
        return Ok(ArbPlan::none());
    }
    let found = one_way(a, b, scan_limit).map(|r| (a, b, r)).or_else(|| one_way(b, a, scan_limit).map(|r| (b, a, r)));
    Ok(match found {
        Some((buy, sell, (x, profit))) => ArbPlan {
            amount_in: x,
            expected_profit: profit,
            route: Some(ArbRoute {
                pair: a.pair.clone(),
                buy_venue: buy.protocol.clone(),
                sell_venue: sell.protocol.clone(),
                amount_in: x,
            }),
        },
        None => ArbPlan::none(),
    })
}

/// Exhaustive search over every integer input up to the selling venue's
/// token-2 reserve, in both directions. Slow; for fixtures and checks.
pub fn grid_search_arb(a: &PoolState, b: &PoolState) -> Result<ArbPlan, MarketError> {
    if a.pair != b.pair {
        return Err(MarketError::InvalidPair(format!("{} vs {}", a.pair, b.pair)));
    }
    let mut best = ArbPlan::none();
    for (buy, sell) in [(a, b), (b, a)] {
        for x in 1..=sell.l2 {
            let Ok(p) = route_profit(buy, sell, x) else { continue };
            if p > best.expected_profit as i128 {
                best = ArbPlan {
                    amount_in: x,
                    expected_profit: p as u128,
                    route: Some(ArbRoute {
                        pair: a.pair.clone(),
                        buy_venue: buy.protocol.clone(),
                        sell_venue: sell.protocol.clone(),
                        amount_in: x,
                    }),
                };
            }
        }
    }
    Ok(best)
}

struct Curve {
    b1: f64,
    q1: f64,
    b2: f64,
    q2: f64,
    g1: f64,
    g2: f64,
}

impl Curve {
    fn new(buy: &PoolState, sell: &PoolState) -> Self {
        let keep = |p: &PoolState| (FEE_DENOMINATOR - p.fee_ppm as u128) as f64 / FEE_DENOMINATOR as f64;
        Self {
            b1: buy.l1 as f64,
            q1: buy.l2 as f64,
            b2: sell.l1 as f64,
            q2: sell.l2 as f64,
            g1: keep(buy),
            g2: keep(sell),
        }
    }

    fn sell_out(&self, y: f64) -> f64 {
        self.g2 * y * self.q2 / (self.b2 + self.g2 * y)
    }

    fn buy_out(&self, x: f64) -> f64 {
        self.g1 * x * self.b1 / (self.q1 + self.g1 * x)
    }

    /// Smooth profit as a function of token 2 spent.
    fn profit_x(&self, x: f64) -> f64 {
        self.sell_out(self.buy_out(x)) - x
    }

    /// Smooth profit as a function of token 1 bought.
    fn profit_y(&self, y: f64) -> f64 {
        if y >= self.b1 {
            return f64::NEG_INFINITY;
        }
        self.sell_out(y) - y * self.q1 / (self.g1 * (self.b1 - y))
    }

    /// Closed-form maximiser of `profit_x`: with `A = g1 g2 b1 q2`,
    /// `B = q1 b2`, `C = g1 (b2 + g2 b1)`, it is `(sqrt(A B) - B) / C`.
    fn x_star(&self) -> f64 {
        let a = self.g1 * self.g2 * self.b1 * self.q2;
        let b = self.q1 * self.b2;
        let c = self.g1 * (self.b2 + self.g2 * self.b1);
        ((a * b).sqrt() - b) / c
    }

    fn tolerance(&self) -> f64 {
        1e-12 * (self.b1 + self.q1 + self.b2 + self.q2) + 1e-6
    }
}

/// First-order test in exact integers: is the marginal route rate above 1?
fn profitable_at_margin(buy: &PoolState, sell: &PoolState) -> bool {
    let g1 = FEE_DENOMINATOR - buy.fee_ppm as u128;
    let g2 = FEE_DENOMINATOR - sell.fee_ppm as u128;
    let lhs = g1.checked_mul(g2).and_then(|g| g.checked_mul(buy.l1)).and_then(|v| v.checked_mul(sell.l2));
    let rhs = (FEE_DENOMINATOR * FEE_DENOMINATOR)
        .checked_mul(buy.l2)
        .and_then(|v| v.checked_mul(sell.l1));
    match (lhs, rhs) {
        (Some(l), Some(r)) => l > r,
        _ => {
            let c = Curve::new(buy, sell);
            c.g1 * c.g2 * c.b1 * c.q2 > c.q1 * c.b2
        }
    }
}

/// Smallest token-2 input that buys at least `y` token 1 from `buy`.
fn min_input_for(buy: &PoolState, y: u128) -> Option<u128> {
    if y == 0 || y >= buy.l1 {
        return None;
    }
    let g = FEE_DENOMINATOR - buy.fee_ppm as u128;
    let num = y.checked_mul(buy.l2)?.checked_mul(FEE_DENOMINATOR)?;
    let den = g.checked_mul(buy.l1 - y)?;
    if den == 0 {
        return None;
    }
    Some(num.div_ceil(den))
}

/// Integer optimum of buying on `buy` and selling on `sell`.
fn one_way(buy: &PoolState, sell: &PoolState, scan_limit: u64) -> Option<(u128, u128)> {
    if !profitable_at_margin(buy, sell) {
        return None;
    }
    let curve = Curve::new(buy, sell);
    let x_star = curve.x_star().max(1.0);
    let tol = curve.tolerance();

    // Parameterise by the coarser side of the pool: when a unit of token 1
    // costs at least a unit of token 2, every useful input is the minimal
    // input for some integer amount of token 1, so scanning token 1 amounts
    // is exact and never revisits an input.
    let best = if buy.l2 >= buy.l1 {
        let y_star = curve.buy_out(x_star);
        scan(
            y_star,
            1,
            buy.l1 - 1,
            scan_limit,
            |y| {
                let x = min_input_for(buy, y)?;
                let p = route_profit(buy, sell, x).ok()?;
                Some((x, p))
            },
            |y| curve.profit_y(y as f64) + tol,
        )
    } else {
        scan(
            x_star,
            1,
            u64::MAX as u128,
            scan_limit,
            |x| route_profit(buy, sell, x).ok().map(|p| (x, p)),
            |x| curve.profit_x(x as f64) + tol,
        )
    };
    best.filter(|&(_, p)| p > 0).map(|(x, p)| (x, p as u128))
}

/// Walk outward from `center` on `[lo, hi]`. `eval` maps a coordinate to a
/// candidate `(amount_in, profit)`, `bound` is a concave upper bound on any
/// profit reachable at that coordinate. Each side stops once the bound falls
/// below the incumbent or after `limit` steps. Ties keep the smaller input.
fn scan<E, B>(center: f64, lo: u128, hi: u128, limit: u64, eval: E, bound: B) -> Option<(u128, i128)>
where
    E: Fn(u128) -> Option<(u128, i128)>,
    B: Fn(u128) -> f64,
{
    if lo > hi {
        return None;
    }
    let start = if center.is_finite() {
        (center.round().max(lo as f64) as u128).min(hi)
    } else {
        lo
    };
    let mut best: Option<(u128, i128)> = None;
    let consider = |cand: Option<(u128, i128)>, best: &mut Option<(u128, i128)>| {
        if let Some((x, p)) = cand {
            let better = match *best {
                None => true,
                Some((bx, bp)) => p > bp || (p == bp && x < bx),
            };
            if better {
                *best = Some((x, p));
            }
        }
    };
    consider(eval(start), &mut best);
    let live = |t: u128, best: &Option<(u128, i128)>| match best {
        Some((_, bp)) => bound(t) >= *bp as f64,
        None => true,
    };
    let (mut up, mut down) = (true, true);
    let mut step: u64 = 1;
    while (up || down) && step <= limit {
        let d = step as u128;
        if up {
            match start.checked_add(d).filter(|&t| t <= hi) {
                Some(t) if live(t, &best) => consider(eval(t), &mut best),
                _ => up = false,
            }
        }
        if down {
            match start.checked_sub(d).filter(|&t| t >= lo) {
                Some(t) if live(t, &best) => consider(eval(t), &mut best),
                _ => down = false,
            }
        }
        step += 1;
    }
    best
}

/// A backrun: the trades appended after the victim and their profit.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Backrun {
    pub route: Option<ArbRoute>,
    pub trades: Vec<Trade>,
    pub profit: u128,
}

impl Backrun {
    pub fn empty() -> Self {
        Self {
            route: None,
            trades: Vec::new(),
            profit: 0,
        }
    }
}

/// Result of comparing two snapshots of one venue.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InferredTrade {
    /// `None` when the snapshots are identical.
    pub direction: Option<Direction>,
    pub amount_in: u128,
    pub amount_out: u128,
}

impl InferredTrade {
    pub fn is_trade(&self) -> bool {
        self.direction.is_some()
    }
}

/// Recover the single swap between two snapshots. For a token-2 sale this is
/// `amount_in = l2' - l2`, `amount_out = l1 - l1'`.
pub fn infer_trade_from_liquidity(before: &PoolState, after: &PoolState) -> Result<InferredTrade, MarketError> {
    if before.protocol != after.protocol || before.pair != after.pair {
        return Err(MarketError::InconsistentSnapshot(format!(
            "{} {} vs {} {}",
            before.protocol, before.pair, after.protocol, after.pair
        )));
    }
    let (l1, l2, n1, n2) = (before.l1, before.l2, after.l1, after.l2);
    if n1 == l1 && n2 == l2 {
        return Ok(InferredTrade {
            direction: None,
            amount_in: 0,
            amount_out: 0,
        });
    }
    if n2 > l2 && n1 < l1 {
        Ok(InferredTrade {
            direction: Some(Direction::SellToken2),
            amount_in: n2 - l2,
            amount_out: l1 - n1,
        })
    } else if n1 > l1 && n2 < l2 {
        Ok(InferredTrade {
            direction: Some(Direction::SellToken1),
            amount_in: n1 - l1,
            amount_out: l2 - n2,
        })
    } else {
        Err(MarketError::InconsistentSnapshot(format!(
            "reserves moved ({l1}, {l2}) -> ({n1}, {n2})"
        )))
    }
}

/// Greedy cross-venue backrun of a victim who bought `pair.token_buy` on
/// `protocol`, leaving that venue at `(l1, l2)`. Arbitrages against the venue
/// where the victim's token is cheapest.
pub fn backrun(
    pair: &Pair,
    protocol: &ProtocolId,
    amount_in: u128,
    l1: u128,
    l2: u128,
    state: &ChainState,
) -> Result<Backrun, MarketError> {
    backrun_within(pair, protocol, amount_in, l1, l2, state, DEFAULT_SCAN_LIMIT)
}

pub fn backrun_within(
    pair: &Pair,
    protocol: &ProtocolId,
    _amount_in: u128,
    l1: u128,
    l2: u128,
    state: &ChainState,
    scan_limit: u64,
) -> Result<Backrun, MarketError> {
    let (canonical, _) = pair.canonical();
    let mut victim_venue = state
        .pool(protocol, &canonical)
        .ok_or_else(|| MarketError::UnknownVenue {
            protocol: protocol.to_string(),
            pair: canonical.to_string(),
        })?
        .clone();
    victim_venue.l1 = l1;
    victim_venue.l2 = l2;
    let bought_token1 = pair.token_buy == canonical.token1;
    let cheapest = state
        .venues_for(&canonical)
        .filter(|p| &p.protocol != protocol && p.is_active())
        .min_by(|a, b| {
            let ord = a.cmp_token1_price(b);
            if bought_token1 {
                ord
            } else {
                ord.reverse()
            }
        });
    let Some(other) = cheapest else {
        return Ok(Backrun::empty());
    };
    let plan = optimal_arb_amount_within(&victim_venue, other, scan_limit)?;
    let Some(route) = plan.route else {
        return Ok(Backrun::empty());
    };
    let (buy, sell) = if route.buy_venue == victim_venue.protocol {
        (&victim_venue, other)
    } else {
        (other, &victim_venue)
    };
    let (mid, _) = arb_output(buy, sell, route.amount_in)?;
    let trades = vec![
        Trade::new(canonical.ordered(Direction::SellToken2), route.buy_venue.clone(), route.amount_in),
        Trade::new(canonical.ordered(Direction::SellToken1), route.sell_venue.clone(), mid),
    ];
    Ok(Backrun {
        route: Some(route),
        trades,
        profit: plan.expected_profit,
    })
}
