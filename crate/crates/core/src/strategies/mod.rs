//! Searcher algorithms: exact backrunning through an on-chain contract,
//! brute force over a prior on the hidden amount, and the same brute force
//! recentred by differentially private aggregates.

mod prior;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::derive_mean;
use crate::market::{backrun_within, ArbRoute, ChainState, Direction, DEFAULT_SCAN_LIMIT};
use crate::matchmaker::{AggQuery, AggregateHint, BackrunPlan, BundleTemplate, HintRelease, TradeHint, TxHint};
use crate::ParticipantId;

pub use prior::{estimate_prior, AmountPrior, PriorFamily};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("invalid prior: {0}")]
    Prior(String),
    #[error("invalid searcher configuration: {0}")]
    Config(String),
}

/// Gas charged per settled bundle, in quote-token base units.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasModel {
    pub plain: u128,
    /// Extra cost per venue a contract reads.
    pub probe: u128,
}

impl Default for GasModel {
    fn default() -> Self {
        Self { plain: 100, probe: 150 }
    }
}

impl GasModel {
    pub fn contract(&self, probes: usize) -> u128 {
        self.plain + self.probe * probes as u128
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutMode {
    /// Fixed cuts at the `(2i + 1) / 2k` quantiles.
    #[default]
    Quantile,
    /// Independent draws from the prior.
    Sample,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Contract,
    BruteForce,
    HintEnhanced,
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            StrategyKind::Contract => "contract",
            StrategyKind::BruteForce => "brute_force",
            StrategyKind::HintEnhanced => "hint_enhanced",
        })
    }
}

/// What a static-route searcher needs besides the release and prior.
#[derive(Clone, Debug, PartialEq)]
pub struct StaticParams {
    pub searcher: ParticipantId,
    pub gas: GasModel,
    pub rebate_percent: u8,
    pub cuts: CutMode,
    pub token_scale: u128,
    pub scan_limit: u64,
}

impl StaticParams {
    pub fn new(searcher: ParticipantId) -> Self {
        Self {
            searcher,
            gas: GasModel::default(),
            rebate_percent: 0,
            cuts: CutMode::Quantile,
            token_scale: 1_000_000,
            scan_limit: DEFAULT_SCAN_LIMIT,
        }
    }
}

/// Per-round outcome for one searcher. `net = gross - gas - kickback`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub searcher: ParticipantId,
    pub strategy: StrategyKind,
    pub round: u64,
    pub templates: usize,
    pub wins: usize,
    pub gross: u128,
    pub gas: u128,
    pub kickback: u128,
    pub net: u128,
}

/// Single-trade hints with a known pair, the only shape searchers target.
fn targets(release: &HintRelease) -> impl Iterator<Item = (&TxHint, &TradeHint)> {
    release
        .tx_hints
        .iter()
        .filter(|h| h.trades.len() == 1 && h.trades[0].pair.is_some())
        .map(|h| (h, &h.trades[0]))
}

/// One parameterised template per hinted transaction. The contract reads
/// the hinted venue, or every venue on the pair when the venue is hidden.
pub fn contract_backrun_strategy(
    searcher: &ParticipantId,
    release: &HintRelease,
    chain: &ChainState,
    gas: GasModel,
    rebate_percent: u8,
) -> Vec<BundleTemplate> {
    let mut out = Vec::new();
    for (tx, trade) in targets(release) {
        let pair = trade.pair.clone().expect("filtered");
        let probes: Vec<_> = match &trade.protocol {
            Some(p) => vec![p.clone()],
            None => chain.venues_for(&pair).map(|p| p.protocol.clone()).collect(),
        };
        if probes.is_empty() {
            continue;
        }
        out.push(BundleTemplate {
            searcher: searcher.clone(),
            txid: tx.txid,
            gas: gas.contract(probes.len()),
            backrun: BackrunPlan::Contract { pair, probes },
            rebate_percent,
        });
    }
    out
}

/// Candidate `(amount in tokens, direction)` guesses, at most `k`.
fn candidates<R: Rng + ?Sized>(
    prior: &AmountPrior,
    k: usize,
    cuts: CutMode,
    direction: Option<Direction>,
    rng: &mut R,
) -> Vec<(f64, Direction)> {
    let dirs: Vec<Direction> = match direction {
        Some(d) => vec![d],
        None => vec![Direction::SellToken2, Direction::SellToken1],
    };
    let per_dir = k.div_ceil(dirs.len());
    let amounts: Vec<f64> = match cuts {
        CutMode::Quantile => (0..per_dir)
            .map(|i| prior.quantile((2 * i + 1) as f64 / (2 * per_dir) as f64))
            .collect(),
        CutMode::Sample => (0..per_dir).map(|_| prior.sample(rng)).collect(),
    };
    let mut out = Vec::with_capacity(k);
    for a in amounts {
        for &d in &dirs {
            if out.len() < k {
                out.push((a, d));
            }
        }
    }
    out
}

/// Static route that would be optimal if the victim traded `amount` base
/// units in `dir`.
fn route_for_guess(
    chain: &ChainState,
    trade: &TradeHint,
    amount: u128,
    dir: Direction,
    scan_limit: u64,
) -> Option<ArbRoute> {
    let pair = trade.pair.as_ref()?;
    let protocol = trade.protocol.as_ref()?;
    let (_, post) = chain.pool(protocol, pair)?.swap(amount, dir).ok()?;
    backrun_within(&pair.ordered(dir), protocol, amount, post.l1, post.l2, chain, scan_limit)
        .ok()?
        .route
}

/// Static templates for each hinted transaction whose pair and venue are
/// public, one per distinct guessed amount.
pub fn brute_force_strategy<R: Rng + ?Sized>(
    params: &StaticParams,
    release: &HintRelease,
    prior: &AmountPrior,
    k: usize,
    rng: &mut R,
    chain: &ChainState,
) -> Vec<BundleTemplate> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    for (tx, trade) in targets(release) {
        if trade.protocol.is_none() {
            continue;
        }
        out.extend(static_templates(params, tx, trade, prior, k, rng, chain));
    }
    out
}

fn static_templates<R: Rng + ?Sized>(
    params: &StaticParams,
    tx: &TxHint,
    trade: &TradeHint,
    prior: &AmountPrior,
    k: usize,
    rng: &mut R,
    chain: &ChainState,
) -> Vec<BundleTemplate> {
    let guesses: Vec<(u128, Direction)> = match trade.amount {
        Some(a) => {
            let dirs = trade.direction.map(|d| vec![d]).unwrap_or(vec![Direction::SellToken2, Direction::SellToken1]);
            dirs.into_iter().map(|d| (a, d)).collect()
        }
        None => candidates(prior, k, params.cuts, trade.direction, rng)
            .into_iter()
            .map(|(v, d)| (((v * params.token_scale as f64).round() as u128).max(1), d))
            .collect(),
    };
    let mut routes: Vec<ArbRoute> = Vec::new();
    for (amount, dir) in guesses {
        if let Some(r) = route_for_guess(chain, trade, amount, dir, params.scan_limit) {
            if !routes.contains(&r) {
                routes.push(r);
            }
        }
    }
    routes
        .into_iter()
        .take(k)
        .map(|route| BundleTemplate {
            searcher: params.searcher.clone(),
            txid: tx.txid,
            backrun: BackrunPlan::Static { route },
            rebate_percent: params.rebate_percent,
            gas: params.gas.plain,
        })
        .collect()
}

/// Posterior for a transaction given the release, or `None` when no
/// satisfied amount aggregate covers it.
///
/// With a count and a sum over the same scope the prior is centred on the
/// derived mean. With a sum alone it is centred on the sum (corrected for
/// the sampling rate) split evenly over the transactions that may be in
/// scope; a transaction alone in scope gets a point mass at the sum.
pub fn hint_posterior(release: &HintRelease, trade: &TradeHint, prior: &AmountPrior) -> Option<AmountPrior> {
    let relevant: Vec<&AggregateHint> = release
        .aggregates
        .iter()
        .filter(|a| a.satisfied && a.value.is_some() && a.scope.may_match(trade))
        .collect();
    for sum in relevant.iter().filter(|a| matches!(a.query, AggQuery::Sum { .. })) {
        let count = relevant
            .iter()
            .find(|a| matches!(a.query, AggQuery::Count) && a.scope == sum.scope);
        if let Some(count) = count {
            if let Some(m) = derive_mean(count.value?, sum.value?) {
                if m > 0.0 {
                    return Some(prior.centered_on(m));
                }
            }
        }
    }
    let sum = relevant.iter().find(|a| matches!(a.query, AggQuery::Sum { .. }))?;
    let q = release.effective_rate;
    if q <= 0.0 {
        return None;
    }
    let in_scope = release
        .tx_hints
        .iter()
        .filter(|h| h.trades.iter().any(|t| sum.scope.may_match(t)))
        .count();
    let total = sum.value? / q;
    if total <= 0.0 {
        return None;
    }
    if in_scope <= 1 {
        return Some(AmountPrior::point(total));
    }
    Some(prior.centered_on(total / in_scope as f64))
}

/// Brute force on the posterior from [`hint_posterior`]; without a usable
/// aggregate this is exactly [`brute_force_strategy`].
pub fn hint_enhanced_strategy<R: Rng + ?Sized>(
    params: &StaticParams,
    release: &HintRelease,
    prior: &AmountPrior,
    k: usize,
    rng: &mut R,
    chain: &ChainState,
) -> Vec<BundleTemplate> {
    let mut out = Vec::new();
    if k == 0 {
        return out;
    }
    for (tx, trade) in targets(release) {
        if trade.protocol.is_none() {
            continue;
        }
        let posterior = hint_posterior(release, trade, prior);
        let belief = posterior.as_ref().unwrap_or(prior);
        out.extend(static_templates(params, tx, trade, belief, k, rng, chain));
    }
    out
}
