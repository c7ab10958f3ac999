use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::market::{ArbRoute, CanonicalPair, Direction, ProtocolId, Trade};
use crate::{ParticipantId, TxId};

/// Trade attributes a user can reveal.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HintField {
    Pair,
    Protocol,
    Amount,
    Direction,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintConfig {
    /// Fields released in the clear.
    #[serde(default)]
    pub plain: BTreeSet<HintField>,
    /// Aggregate specs the user contributes to.
    #[serde(default)]
    pub agg_specs: Vec<String>,
}

impl HintConfig {
    pub fn new(plain: impl IntoIterator<Item = HintField>) -> Self {
        Self {
            plain: plain.into_iter().collect(),
            agg_specs: Vec::new(),
        }
    }

    pub fn opt_in(mut self, spec: impl Into<String>) -> Self {
        self.agg_specs.push(spec.into());
        self
    }

    pub fn reveals(&self, field: HintField) -> bool {
        self.plain.contains(&field)
    }

    pub fn opted_into(&self, spec: &str) -> bool {
        self.agg_specs.iter().any(|s| s == spec)
    }
}

/// Which trades a spec is about. `None` fields match anything.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TxFilter {
    #[serde(default)]
    pub pair: Option<CanonicalPair>,
    #[serde(default)]
    pub protocol: Option<ProtocolId>,
    #[serde(default)]
    pub direction: Option<Direction>,
}

impl TxFilter {
    pub fn matches(&self, trade: &Trade) -> bool {
        let (pair, dir) = trade.pair.canonical();
        self.pair.as_ref().is_none_or(|p| *p == pair)
            && self.protocol.as_ref().is_none_or(|p| *p == trade.protocol)
            && self.direction.is_none_or(|d| d == dir)
    }

    /// Whether a trade with these public attributes could be in scope. Unknown
    /// attributes are given the benefit of the doubt.
    pub fn may_match(&self, hint: &TradeHint) -> bool {
        fn ok<T: PartialEq>(want: Option<T>, seen: Option<T>) -> bool {
            match (want, seen) {
                (Some(w), Some(s)) => w == s,
                _ => true,
            }
        }
        ok(self.pair.as_ref(), hint.pair.as_ref())
            && ok(self.protocol.as_ref(), hint.protocol.as_ref())
            && ok(self.direction, hint.direction)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum AggQuery {
    /// Number of opted-in transactions in scope.
    Count,
    /// Sum of in-scope traded amounts (in tokens), each clamped to `cap`.
    Sum { cap: f64 },
}

impl AggQuery {
    pub fn sensitivity(&self) -> f64 {
        match self {
            AggQuery::Count => 1.0,
            AggQuery::Sum { cap } => *cap,
        }
    }
}

/// An aggregate: released only if enough users are in scope on both sides
/// of the opt-in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AggSpec {
    pub id: String,
    #[serde(default)]
    pub scope: TxFilter,
    pub min_opted_in: u32,
    pub min_opted_out: u32,
    pub query: AggQuery,
    pub epsilon_cond: f64,
    pub epsilon_query: f64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub txid: TxId,
    pub sender: ParticipantId,
    pub trades: Vec<Trade>,
    pub hint_config: HintConfig,
}

/// Publicly visible attributes of one trade.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeHint {
    pub pair: Option<CanonicalPair>,
    pub protocol: Option<ProtocolId>,
    pub direction: Option<Direction>,
    pub amount: Option<u128>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxHint {
    pub txid: TxId,
    pub trades: Vec<TradeHint>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateHint {
    pub spec_id: String,
    pub query: AggQuery,
    pub scope: TxFilter,
    pub satisfied: bool,
    /// The ledger refused a charge this round.
    pub exhausted: bool,
    /// Present iff `satisfied`.
    pub value: Option<f64>,
    pub epsilon_charged: f64,
    pub delta_charged: f64,
}

/// What the matchmaker broadcasts each round; identical for every searcher.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HintRelease {
    pub round: u64,
    pub pending: usize,
    pub sample_size: usize,
    /// `sample_size / pending`, the rate the charges were amplified at.
    pub effective_rate: f64,
    pub tx_hints: Vec<TxHint>,
    pub aggregates: Vec<AggregateHint>,
}

impl HintRelease {
    pub fn aggregate(&self, spec_id: &str) -> Option<&AggregateHint> {
        self.aggregates.iter().find(|a| a.spec_id == spec_id)
    }

    pub fn epsilon_charged(&self) -> f64 {
        self.aggregates.iter().map(|a| a.epsilon_charged).sum()
    }
}

/// How a bundle's backrun is produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum BackrunPlan {
    /// A precomputed arbitrage.
    Static { route: ArbRoute },
    /// An on-chain program: records `probes` before the victim, finds the
    /// venue whose liquidity moved and backruns it exactly.
    Contract { pair: CanonicalPair, probes: Vec<ProtocolId> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BundleTemplate {
    pub searcher: ParticipantId,
    pub txid: TxId,
    pub backrun: BackrunPlan,
    pub rebate_percent: u8,
    pub gas: u128,
}

/// A settled bundle. `kickback + searcher_net + gas == gross`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilledBundle {
    pub searcher: ParticipantId,
    pub txid: TxId,
    pub template_index: usize,
    pub rebate_percent: u8,
    pub gross: u128,
    pub gas: u128,
    pub kickback: u128,
    pub searcher_net: u128,
}

impl FilledBundle {
    pub fn new(template: &BundleTemplate, template_index: usize, gross: u128) -> Option<Self> {
        if gross <= template.gas || template.rebate_percent > 100 {
            return None;
        }
        let surplus = gross - template.gas;
        let kickback = surplus * template.rebate_percent as u128 / 100;
        Some(Self {
            searcher: template.searcher.clone(),
            txid: template.txid,
            template_index,
            rebate_percent: template.rebate_percent,
            gross,
            gas: template.gas,
            kickback,
            searcher_net: surplus - kickback,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BundleAck {
    Accepted,
    RateLimited,
    Rejected(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    Bundled,
    Standalone,
    /// Trades reverted; the transaction is dropped.
    Canceled,
    /// Over block capacity; stays pending.
    Deferred,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxOutcome {
    pub txid: TxId,
    pub sender: ParticipantId,
    pub status: TxStatus,
    /// Input amounts of trades that executed.
    pub executed: Vec<u128>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub round: u64,
    pub outcomes: Vec<TxOutcome>,
    pub filled: Vec<FilledBundle>,
    pub templates: usize,
    pub discarded: usize,
}

impl Settlement {
    pub fn total_gross(&self) -> u128 {
        self.filled.iter().map(|f| f.gross).sum()
    }
}
