//! The trusted curator: holds raw transactions, broadcasts plain and
//! differentially private aggregate hints, runs the rate-limited bundle
//! auction and settles the best bundle per transaction.
//!
//! A round is ingest, [`Matchmaker::release_hints`], bundle submission via
//! [`Matchmaker::accept_bundle`], then [`Matchmaker::settle_round`].

mod types;

use std::collections::{BTreeMap, BTreeSet};

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::{
    amplify_by_subsampling, dp_count, dp_sum, sample_size, subsample_indices, BudgetLedger, ContributionRecord,
    Dataset, DpError, NoiseSource, PrivacyParams,
};
use crate::market::{backrun, infer_trade_from_liquidity, ChainState, MarketError, Pair, PoolState};
use crate::{ParticipantId, TxId};

pub use types::{
    AggQuery, AggSpec, AggregateHint, BackrunPlan, BundleAck, BundleTemplate, FilledBundle, HintConfig, HintField,
    HintRelease, Settlement, Transaction, TradeHint, TxFilter, TxHint, TxOutcome, TxStatus,
};

pub const DEFAULT_RATE_LIMIT: usize = 16;

#[derive(Debug, Error)]
pub enum MatchError {
    #[error("transaction {0} already submitted")]
    DuplicateTx(TxId),
    #[error("malformed transaction {txid}: {reason}")]
    Malformed { txid: TxId, reason: String },
    #[error("invalid aggregate spec {id}: {reason}")]
    InvalidSpec { id: String, reason: String },
    #[error("invalid matchmaker configuration: {0}")]
    Config(String),
    #[error("bundle did not produce a profitable backrun")]
    Unprofitable,
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchmakerConfig {
    pub subsample_rate: f64,
    /// Templates per searcher per victim per round.
    pub rate_limit: usize,
    /// Base units per token; aggregate values are reported in tokens.
    pub token_scale: u128,
    /// Transactions settled per round; the rest wait.
    pub block_capacity: Option<usize>,
    pub global_epsilon_cap: f64,
}

impl Default for MatchmakerConfig {
    fn default() -> Self {
        Self {
            subsample_rate: 1.0,
            rate_limit: DEFAULT_RATE_LIMIT,
            token_scale: 1_000_000,
            block_capacity: None,
            global_epsilon_cap: 100.0,
        }
    }
}

/// Result of evaluating one aggregate condition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionOutcome {
    pub satisfied: bool,
    pub exhausted: bool,
    pub epsilon_charged: f64,
    pub delta_charged: f64,
}

pub struct Matchmaker {
    cfg: MatchmakerConfig,
    specs: Vec<AggSpec>,
    // keyed by (sender, txid): the deterministic arrival order
    pending: BTreeMap<(ParticipantId, TxId), Transaction>,
    index: BTreeMap<TxId, ParticipantId>,
    seen: BTreeSet<TxId>,
    ledger: BudgetLedger,
    round: u64,
    templates: Vec<BundleTemplate>,
    per_victim: BTreeMap<(ParticipantId, TxId), usize>,
}

impl Matchmaker {
    pub fn new(cfg: MatchmakerConfig, specs: Vec<AggSpec>) -> Result<Self, MatchError> {
        if !(0.0..=1.0).contains(&cfg.subsample_rate) {
            return Err(MatchError::Config(format!(
                "subsample_rate must lie in [0, 1], got {}",
                cfg.subsample_rate
            )));
        }
        if cfg.token_scale == 0 {
            return Err(MatchError::Config("token_scale must be positive".into()));
        }
        let mut ids = BTreeSet::new();
        for s in &specs {
            validate_spec(s)?;
            if !ids.insert(s.id.clone()) {
                return Err(MatchError::InvalidSpec {
                    id: s.id.clone(),
                    reason: "duplicate id".into(),
                });
            }
        }
        Ok(Self {
            ledger: BudgetLedger::new(cfg.global_epsilon_cap)?,
            cfg,
            specs,
            pending: BTreeMap::new(),
            index: BTreeMap::new(),
            seen: BTreeSet::new(),
            round: 0,
            templates: Vec::new(),
            per_victim: BTreeMap::new(),
        })
    }

    pub fn config(&self) -> &MatchmakerConfig {
        &self.cfg
    }

    pub fn specs(&self) -> &[AggSpec] {
        &self.specs
    }

    pub fn ledger(&self) -> &BudgetLedger {
        &self.ledger
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// Pending transactions in arrival order.
    pub fn pending(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.values()
    }

    pub fn templates(&self) -> &[BundleTemplate] {
        &self.templates
    }

    pub fn submit_transaction(&mut self, tx: Transaction) -> Result<TxId, MatchError> {
        if self.seen.contains(&tx.txid) {
            return Err(MatchError::DuplicateTx(tx.txid));
        }
        let malformed = |reason: String| MatchError::Malformed { txid: tx.txid, reason };
        if tx.trades.is_empty() {
            return Err(malformed("no trades".into()));
        }
        if let Some(t) = tx.trades.iter().find(|t| t.amount_in == 0) {
            return Err(malformed(format!("zero amount on {}", t.protocol)));
        }
        let mut opted = BTreeSet::new();
        for id in &tx.hint_config.agg_specs {
            let Some(spec) = self.specs.iter().find(|s| &s.id == id) else {
                return Err(malformed(format!("unknown aggregate spec {id}")));
            };
            if !opted.insert(id) {
                return Err(malformed(format!("spec {id} listed twice")));
            }
            if matches!(spec.query, AggQuery::Sum { .. }) && tx.hint_config.reveals(HintField::Amount) {
                return Err(malformed(format!(
                    "amount is both released in the clear and aggregated by {id}"
                )));
            }
        }
        let txid = tx.txid;
        self.seen.insert(txid);
        self.index.insert(txid, tx.sender.clone());
        self.pending.insert((tx.sender.clone(), txid), tx);
        Ok(txid)
    }

    fn tx(&self, txid: TxId) -> Option<&Transaction> {
        let sender = self.index.get(&txid)?;
        self.pending.get(&(sender.clone(), txid))
    }

    /// Contribution records of the sampled transactions for one spec.
    fn records(&self, spec: &AggSpec, sample: &[&Transaction]) -> Result<Dataset, DpError> {
        let scale = self.cfg.token_scale as f64;
        let mut ds = Dataset::default();
        for tx in sample {
            let in_scope: Vec<_> = tx.trades.iter().filter(|t| spec.scope.matches(t)).collect();
            let value = in_scope.iter().map(|t| t.amount_in as f64).sum::<f64>() / scale;
            let mut rec = ContributionRecord::new(tx.txid, value);
            rec.matches_query = !in_scope.is_empty();
            rec.opted_in = tx.hint_config.opted_into(&spec.id);
            ds.push(rec)?;
        }
        Ok(ds)
    }

    /// Noisy opted-in and opted-out counts in scope, each at half of
    /// `epsilon_cond` amplified by `q`. Both must clear their thresholds.
    /// If the ledger cannot pay for both halves nothing is drawn or charged.
    pub fn evaluate_condition(
        &mut self,
        data: &Dataset,
        spec: &AggSpec,
        q: f64,
        noise: &mut dyn NoiseSource,
    ) -> Result<ConditionOutcome, MatchError> {
        let half = amplify_by_subsampling(PrivacyParams::pure(spec.epsilon_cond / 2.0, 1.0)?, q)?;
        if !self.ledger.can_afford(2.0 * half.epsilon_prime) {
            return Ok(ConditionOutcome {
                satisfied: false,
                exhausted: true,
                epsilon_charged: 0.0,
                delta_charged: 0.0,
            });
        }
        let inside = dp_count(data, |e| e.matches_query && e.opted_in, spec.epsilon_cond / 2.0, noise)?;
        self.ledger
            .charge_amplified(self.round, format!("{}:cond-in", spec.id), &half)?;
        let outside = dp_count(data, |e| e.matches_query && !e.opted_in, spec.epsilon_cond / 2.0, noise)?;
        self.ledger
            .charge_amplified(self.round, format!("{}:cond-out", spec.id), &half)?;
        Ok(ConditionOutcome {
            satisfied: inside >= spec.min_opted_in as f64 && outside >= spec.min_opted_out as f64,
            exhausted: false,
            epsilon_charged: 2.0 * half.epsilon_prime,
            delta_charged: 2.0 * half.delta_prime,
        })
    }

    /// Plain hints for every pending transaction and one aggregate entry per
    /// spec, all computed on a single uniform subsample of the pending set.
    pub fn release_hints(
        &mut self,
        noise: &mut dyn NoiseSource,
        sampler: &mut dyn RngCore,
    ) -> Result<HintRelease, MatchError> {
        let txs: Vec<&Transaction> = self.pending.values().collect();
        let n = txs.len();
        let q = self.cfg.subsample_rate;
        let m = sample_size(n, q);
        let q_eff = if n == 0 { q } else { m as f64 / n as f64 };
        let tx_hints = txs.iter().map(|tx| plain_hint(tx)).collect();

        let mut aggregates = Vec::with_capacity(self.specs.len());
        let prepared: Vec<(AggSpec, Option<Dataset>)> = if m == 0 {
            self.specs.iter().map(|s| (s.clone(), None)).collect()
        } else {
            let idx = subsample_indices(n, q, sampler)?;
            let sample: Vec<&Transaction> = idx.iter().map(|&i| txs[i]).collect();
            self.specs
                .iter()
                .map(|s| Ok((s.clone(), Some(self.records(s, &sample)?))))
                .collect::<Result<_, DpError>>()?
        };

        for (spec, data) in prepared {
            let mut hint = AggregateHint {
                spec_id: spec.id.clone(),
                query: spec.query,
                scope: spec.scope.clone(),
                satisfied: false,
                exhausted: false,
                value: None,
                epsilon_charged: 0.0,
                delta_charged: 0.0,
            };
            // An empty sample is decided from public information alone.
            let Some(data) = data else {
                aggregates.push(hint);
                continue;
            };
            let cond = self.evaluate_condition(&data, &spec, q_eff, noise)?;
            hint.exhausted = cond.exhausted;
            hint.epsilon_charged = cond.epsilon_charged;
            hint.delta_charged = cond.delta_charged;
            if cond.satisfied {
                let budget = amplify_by_subsampling(
                    PrivacyParams::pure(spec.epsilon_query, spec.query.sensitivity())?,
                    q_eff,
                )?;
                if self.ledger.can_afford(budget.epsilon_prime) {
                    let value = match spec.query {
                        AggQuery::Count => dp_count(&data, |e| e.matches_query && e.opted_in, spec.epsilon_query, noise)?,
                        AggQuery::Sum { cap } => dp_sum(
                            &data,
                            |e| (e.matches_query && e.opted_in).then_some(e.value),
                            cap,
                            spec.epsilon_query,
                            noise,
                        )?,
                    };
                    self.ledger
                        .charge_amplified(self.round, format!("{}:query", spec.id), &budget)?;
                    hint.satisfied = true;
                    hint.value = Some(value);
                    hint.epsilon_charged += budget.epsilon_prime;
                    hint.delta_charged += budget.delta_prime;
                } else {
                    hint.exhausted = true;
                }
            }
            aggregates.push(hint);
        }
        Ok(HintRelease {
            round: self.round,
            pending: n,
            sample_size: m,
            effective_rate: q_eff,
            tx_hints,
            aggregates,
        })
    }

    /// Accept a template unless the searcher already sent `rate_limit`
    /// templates for this victim this round. The answer depends only on the
    /// caller's own submissions.
    pub fn accept_bundle(&mut self, template: BundleTemplate) -> BundleAck {
        if self.tx(template.txid).is_none() {
            return BundleAck::Rejected(format!("unknown transaction {}", template.txid));
        }
        if template.rebate_percent > 100 {
            return BundleAck::Rejected(format!("rebate {}% exceeds 100%", template.rebate_percent));
        }
        let key = (template.searcher.clone(), template.txid);
        let used = self.per_victim.entry(key).or_insert(0);
        if *used >= self.cfg.rate_limit {
            return BundleAck::RateLimited;
        }
        *used += 1;
        self.templates.push(template);
        BundleAck::Accepted
    }

    /// Settle pending transactions in arrival order. Each victim gets the
    /// valid template with the largest kickback (lowest index on ties) or
    /// executes alone. Settled and canceled transactions leave the pending
    /// set; transactions over block capacity stay for the next round.
    pub fn settle_round(&mut self, state: &mut ChainState) -> Result<Settlement, MatchError> {
        state.set_round(self.round);
        let mut by_victim: BTreeMap<TxId, Vec<usize>> = BTreeMap::new();
        for (i, t) in self.templates.iter().enumerate() {
            by_victim.entry(t.txid).or_default().push(i);
        }
        let mut out = Settlement {
            round: self.round,
            templates: self.templates.len(),
            ..Settlement::default()
        };
        let keys: Vec<_> = self.pending.keys().cloned().collect();
        let capacity = self.cfg.block_capacity.unwrap_or(usize::MAX);
        for (slot, key) in keys.into_iter().enumerate() {
            let tx = self.pending[&key].clone();
            if slot >= capacity {
                out.outcomes.push(TxOutcome {
                    txid: tx.txid,
                    sender: tx.sender.clone(),
                    status: TxStatus::Deferred,
                    executed: Vec::new(),
                });
                continue;
            }
            let mut best: Option<FilledBundle> = None;
            for &i in by_victim.get(&tx.txid).map(Vec::as_slice).unwrap_or(&[]) {
                let template = &self.templates[i];
                let filled = simulate_template(state, &tx, template)
                    .ok()
                    .and_then(|gross| FilledBundle::new(template, i, gross));
                match filled {
                    Some(f) if best.as_ref().is_none_or(|b| f.kickback > b.kickback) => best = Some(f),
                    Some(_) => {}
                    None => out.discarded += 1,
                }
            }
            let outcome = match best {
                Some(f) => {
                    let gross = run_bundle(state, &tx, &self.templates[f.template_index])?;
                    debug_assert_eq!(gross, f.gross);
                    out.filled.push(f);
                    TxOutcome {
                        txid: tx.txid,
                        sender: tx.sender.clone(),
                        status: TxStatus::Bundled,
                        executed: tx.trades.iter().map(|t| t.amount_in).collect(),
                    }
                }
                None => {
                    let status = match state.apply_all(&tx.trades) {
                        Ok(_) => TxStatus::Standalone,
                        Err(_) => TxStatus::Canceled,
                    };
                    let executed = if status == TxStatus::Standalone {
                        tx.trades.iter().map(|t| t.amount_in).collect()
                    } else {
                        Vec::new()
                    };
                    TxOutcome {
                        txid: tx.txid,
                        sender: tx.sender.clone(),
                        status,
                        executed,
                    }
                }
            };
            self.pending.remove(&key);
            self.index.remove(&tx.txid);
            out.outcomes.push(outcome);
        }
        self.templates.clear();
        self.per_victim.clear();
        self.round += 1;
        Ok(out)
    }
}

fn validate_spec(s: &AggSpec) -> Result<(), MatchError> {
    let bad = |reason: &str| MatchError::InvalidSpec {
        id: s.id.clone(),
        reason: reason.to_string(),
    };
    if s.id.is_empty() {
        return Err(bad("empty id"));
    }
    if s.min_opted_in < 1 || s.min_opted_out < 1 {
        return Err(bad("thresholds must be at least 1"));
    }
    if !(s.epsilon_cond > 0.0 && s.epsilon_cond.is_finite()) || !(s.epsilon_query > 0.0 && s.epsilon_query.is_finite()) {
        return Err(bad("epsilons must be positive and finite"));
    }
    if let AggQuery::Sum { cap } = s.query {
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(bad("sum cap must be positive and finite"));
        }
    }
    Ok(())
}

fn plain_hint(tx: &Transaction) -> TxHint {
    let cfg = &tx.hint_config;
    TxHint {
        txid: tx.txid,
        trades: tx
            .trades
            .iter()
            .map(|t| {
                let (pair, dir) = t.pair.canonical();
                TradeHint {
                    pair: cfg.reveals(HintField::Pair).then_some(pair),
                    protocol: cfg.reveals(HintField::Protocol).then(|| t.protocol.clone()),
                    direction: cfg.reveals(HintField::Direction).then_some(dir),
                    amount: cfg.reveals(HintField::Amount).then_some(t.amount_in),
                }
            })
            .collect(),
    }
}

/// Gross profit of `template` backrunning `tx` on a copy of `state`.
pub fn simulate_template(state: &ChainState, tx: &Transaction, template: &BundleTemplate) -> Result<u128, MatchError> {
    run_bundle(&mut state.snapshot(), tx, template)
}

/// Execute victim plus backrun on `state`; all or nothing.
fn run_bundle(state: &mut ChainState, tx: &Transaction, template: &BundleTemplate) -> Result<u128, MatchError> {
    let mut scratch = state.snapshot();
    let gross = match &template.backrun {
        BackrunPlan::Static { route } => {
            scratch.apply_all(&tx.trades)?;
            scratch.execute_route(route)?
        }
        BackrunPlan::Contract { pair, probes } => {
            let before: Vec<PoolState> = probes
                .iter()
                .map(|p| {
                    scratch.pool(p, pair).cloned().ok_or_else(|| MarketError::UnknownVenue {
                        protocol: p.to_string(),
                        pair: pair.to_string(),
                    })
                })
                .collect::<Result<_, _>>()?;
            scratch.apply_all(&tx.trades)?;
            let mut moved = None;
            for b in &before {
                let after = scratch.pool(&b.protocol, pair).expect("probed venue exists").clone();
                let inferred = infer_trade_from_liquidity(b, &after)?;
                if let Some(dir) = inferred.direction {
                    moved = Some((after, dir, inferred.amount_in));
                    break;
                }
            }
            let (after, dir, amount_in) = moved.ok_or(MarketError::NoLiquidityChange)?;
            let victim_pair: Pair = pair.ordered(dir);
            let br = backrun(&victim_pair, &after.protocol, amount_in, after.l1, after.l2, &scratch)?;
            let route = br.route.ok_or(MatchError::Unprofitable)?;
            scratch.execute_route(&route)?
        }
    };
    if gross <= 0 {
        return Err(MatchError::Unprofitable);
    }
    // Replay on the real state so its trade log records every leg.
    let legs: Vec<_> = scratch.history().iter().map(|a| a.trade.clone()).collect();
    state.apply_all(&legs)?;
    Ok(gross as u128)
}
