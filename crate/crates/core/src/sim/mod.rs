//! Scenario configuration, the round loop and report files.
//!
//! One round: users submit, the matchmaker releases hints, every searcher
//! builds templates from the same release, the auction settles. All
//! randomness comes from one seed split into fixed streams, so a config and
//! seed determine every output byte.

mod config;
mod report;

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp::LedgerEntry;
use crate::market::{CanonicalPair, ChainState, Direction, MarketError, ProtocolId, Token, Trade};
use crate::matchmaker::{
    simulate_template, BundleAck, BundleTemplate, FilledBundle, HintConfig, HintRelease, MatchError, Matchmaker,
    Transaction, TxStatus,
};
use crate::stats;
use crate::strategies::{
    brute_force_strategy, contract_backrun_strategy, estimate_prior, hint_enhanced_strategy, AmountPrior,
    StaticParams, StrategyError, StrategyKind, StrategyReport,
};
use crate::{ParticipantId, TxId};

pub use config::{
    load_scenario, GasSection, HintProfile, MatchmakerSection, PoolConfig, PopulationConfig, ScenarioConfig,
    SearcherConfig,
};
pub use report::{emit_reports, Summary, ROUNDS_FILE, RELEASES_FILE, SEARCHERS_FILE, SUMMARY_FILE, CONFIG_FILE};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error("round {round}: {message}")]
    Round { round: u64, message: String },
    #[error(transparent)]
    Match(#[from] MatchError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error(transparent)]
    Market(#[from] MarketError),
}

const POPULATION_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;
const SAMPLER_STREAM: u64 = 3;
const SEARCHER_STREAM: u64 = 16;

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub round: u64,
    pub pending: usize,
    pub sample_size: usize,
    pub effective_rate: f64,
    /// Log of the amount multiplier shared by this round's users.
    pub regime: f64,
    pub epsilon_charged: f64,
    pub epsilon_spent: f64,
    pub templates: usize,
    pub bundles: usize,
    pub discarded: usize,
    pub standalone: usize,
    pub canceled: usize,
    pub deferred: usize,
    pub gross: u128,
    pub gas: u128,
    pub kickback: u128,
    pub searcher_net: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReleaseRow {
    pub round: u64,
    pub spec_id: String,
    pub kind: String,
    pub satisfied: bool,
    pub exhausted: bool,
    pub value: Option<f64>,
    pub epsilon_charged: f64,
    pub delta_charged: f64,
}

/// One searcher in one round: the live auction outcome, plus the outcome
/// it would have had with no competitors, every victim evaluated against
/// the round's opening state. `solo_gross` counts backruns too small to
/// cover gas; `solo_net` does not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearcherRound {
    pub report: StrategyReport,
    pub accepted: usize,
    pub solo_gross: u128,
    pub solo_net: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetTrace {
    pub global_cap: f64,
    pub spent: f64,
    pub spent_delta: f64,
    pub entries: Vec<LedgerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub rounds: Vec<RoundRow>,
    pub releases: Vec<ReleaseRow>,
    pub searchers: Vec<SearcherRound>,
    pub kickbacks: BTreeMap<ParticipantId, u128>,
    pub budget: BudgetTrace,
}

impl RunMetrics {
    /// Per-round rows of one searcher, in round order.
    pub fn searcher(&self, id: &str) -> Vec<&SearcherRound> {
        self.searchers.iter().filter(|s| s.report.searcher.0 == id).collect()
    }

    /// Total kickbacks, searcher nets and gas against total gross.
    pub fn conservation(&self) -> (u128, u128) {
        let parts: u128 = self
            .searchers
            .iter()
            .map(|s| s.report.kickback + s.report.net + s.report.gas)
            .sum();
        let gross: u128 = self.rounds.iter().map(|r| r.gross).sum();
        (parts, gross)
    }
}

/// Paired comparison of two searchers' solo outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub a: String,
    pub b: String,
    pub rounds: usize,
    pub mean_gross_a: f64,
    pub mean_gross_b: f64,
    pub mean_net_a: f64,
    pub mean_net_b: f64,
    /// Rounds where `a` grossed at least as much as `b`.
    pub rounds_gross_a_ge_b: usize,
    pub rounds_net_a_gt_b: usize,
    pub rounds_net_b_gt_a: usize,
    /// One-sided paired t-test p-values on net.
    pub p_net_a_greater: f64,
    pub p_net_b_greater: f64,
}

pub fn compare(metrics: &RunMetrics, a: &str, b: &str) -> Option<PairedComparison> {
    let ra = metrics.searcher(a);
    let rb = metrics.searcher(b);
    if ra.is_empty() || ra.len() != rb.len() {
        return None;
    }
    let f = |rows: &[&SearcherRound], net: bool| -> Vec<f64> {
        rows.iter()
            .map(|r| if net { r.solo_net as f64 } else { r.solo_gross as f64 })
            .collect()
    };
    let (ga, gb, na, nb) = (f(&ra, false), f(&rb, false), f(&ra, true), f(&rb, true));
    let pairs = || ra.iter().zip(&rb);
    Some(PairedComparison {
        a: a.to_string(),
        b: b.to_string(),
        rounds: ra.len(),
        mean_gross_a: stats::mean(&ga),
        mean_gross_b: stats::mean(&gb),
        mean_net_a: stats::mean(&na),
        mean_net_b: stats::mean(&nb),
        rounds_gross_a_ge_b: pairs().filter(|(x, y)| x.solo_gross >= y.solo_gross).count(),
        rounds_net_a_gt_b: pairs().filter(|(x, y)| x.solo_net > y.solo_net).count(),
        rounds_net_b_gt_a: pairs().filter(|(x, y)| y.solo_net > x.solo_net).count(),
        p_net_a_greater: stats::paired_t_greater(&na, &nb).1,
        p_net_b_greater: stats::paired_t_greater(&nb, &na).1,
    })
}

struct Searcher {
    cfg: SearcherConfig,
    id: ParticipantId,
    rng: ChaCha20Rng,
}

struct Population {
    pair: CanonicalPair,
    protocols: Vec<ProtocolId>,
    configs: Vec<HintConfig>,
}

fn build_chain(cfg: &ScenarioConfig) -> Result<ChainState, SimError> {
    let mut chain = ChainState::new(1);
    for p in &cfg.pools {
        chain.add_pool(p.build()?)?;
    }
    Ok(chain)
}

fn build_population(cfg: &PopulationConfig) -> Result<Population, SimError> {
    let pair = CanonicalPair::new(Token::new(&cfg.pair[0]), Token::new(&cfg.pair[1]))?;
    let mut configs = Vec::with_capacity(cfg.users);
    for (h, n) in cfg.hint_mix.iter().zip(cfg.profile_counts()) {
        let mut c = HintConfig::new(h.plain.iter().copied());
        for s in &h.opt_in {
            c = c.opt_in(s.clone());
        }
        configs.extend(std::iter::repeat_n(c, n));
    }
    Ok(Population {
        pair,
        protocols: cfg.protocols.iter().map(ProtocolId::new).collect(),
        configs,
    })
}

/// Run every round of `cfg`. Budget exhaustion shows up in the release rows
/// and is not an error.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let mm_cfg = cfg.matchmaker.build();
    let scale = mm_cfg.token_scale;
    let gas = cfg.gas.build();
    let mut mm = Matchmaker::new(mm_cfg, cfg.specs.clone())?;
    let mut chain = build_chain(cfg)?;

    let mut pop_rng = stream(cfg.seed, POPULATION_STREAM);
    let mut noise_rng = stream(cfg.seed, NOISE_STREAM);
    let mut sampler = stream(cfg.seed, SAMPLER_STREAM);
    let population = build_population(&cfg.population)?;

    let mut searchers: Vec<Searcher> = cfg
        .searchers
        .iter()
        .enumerate()
        .map(|(i, s)| Searcher {
            cfg: s.clone(),
            id: ParticipantId::new(&s.id),
            rng: stream(cfg.seed, SEARCHER_STREAM + i as u64),
        })
        .collect();
    searchers.sort_by(|a, b| a.id.cmp(&b.id));

    let mut metrics = RunMetrics {
        seed: cfg.seed,
        rounds: Vec::new(),
        releases: Vec::new(),
        searchers: Vec::new(),
        kickbacks: BTreeMap::new(),
        budget: BudgetTrace {
            global_cap: cfg.matchmaker.global_epsilon_cap,
            spent: 0.0,
            spent_delta: 0.0,
            entries: Vec::new(),
        },
    };
    let mut history: Vec<f64> = Vec::new();
    let mut next_txid = 0u64;

    for round in 0..cfg.rounds {
        let ctx = |e: &dyn std::fmt::Display| SimError::Round {
            round,
            message: e.to_string(),
        };
        if cfg.reset_pools {
            chain = build_chain(cfg)?;
        }
        chain.set_round(round);

        let regime = if cfg.population.regime_scale > 0.0 {
            cfg.population.regime_scale * pop_rng.sample::<f64, _>(rand_distr::StandardNormal)
        } else {
            0.0
        };
        for (u, hint_config) in population.configs.iter().enumerate() {
            let protocol = population.protocols[pop_rng.random_range(0..population.protocols.len())].clone();
            let dir = if pop_rng.random::<f64>() < cfg.population.sell_token1_fraction {
                Direction::SellToken1
            } else {
                Direction::SellToken2
            };
            let tokens = cfg.population.amount.sample(&mut pop_rng) * regime.exp();
            let amount = ((tokens * scale as f64).round() as u128).max(1);
            mm.submit_transaction(Transaction {
                txid: TxId(next_txid),
                sender: ParticipantId::new(format!("user-{u:04}")),
                trades: vec![Trade::new(population.pair.ordered(dir), protocol, amount)],
                hint_config: hint_config.clone(),
            })
            .map_err(|e| ctx(&e))?;
            next_txid += 1;
        }

        let release = mm
            .release_hints(&mut noise_rng, &mut sampler as &mut dyn RngCore)
            .map_err(|e| ctx(&e))?;
        for a in &release.aggregates {
            metrics.releases.push(ReleaseRow {
                round,
                spec_id: a.spec_id.clone(),
                kind: match a.query {
                    crate::matchmaker::AggQuery::Count => "count".into(),
                    crate::matchmaker::AggQuery::Sum { .. } => "sum".into(),
                },
                satisfied: a.satisfied,
                exhausted: a.exhausted,
                value: a.value,
                epsilon_charged: a.epsilon_charged,
                delta_charged: a.delta_charged,
            });
        }

        let pending: BTreeMap<TxId, Transaction> = mm.pending().map(|t| (t.txid, t.clone())).collect();
        let opening = chain.snapshot();
        let mut per_searcher = Vec::with_capacity(searchers.len());
        for s in searchers.iter_mut() {
            let templates = build_templates(s, &release, &history, &opening, gas, scale)?;
            let (solo_gross, solo_net) = solo_outcome(&templates, &pending, &opening);
            let mut accepted = 0;
            let submitted = templates.len();
            for t in templates {
                if mm.accept_bundle(t) == BundleAck::Accepted {
                    accepted += 1;
                }
            }
            per_searcher.push((submitted, accepted, solo_gross, solo_net));
        }

        let settlement = mm.settle_round(&mut chain).map_err(|e| ctx(&e))?;
        for o in &settlement.outcomes {
            if matches!(o.status, TxStatus::Bundled | TxStatus::Standalone) {
                history.extend(o.executed.iter().map(|&a| a as f64 / scale as f64));
            }
        }
        for f in &settlement.filled {
            let sender = pending[&f.txid].sender.clone();
            *metrics.kickbacks.entry(sender).or_insert(0) += f.kickback;
        }
        for (s, (submitted, accepted, solo_gross, solo_net)) in searchers.iter().zip(per_searcher) {
            let won: Vec<&FilledBundle> = settlement.filled.iter().filter(|f| f.searcher == s.id).collect();
            let sum = |g: fn(&FilledBundle) -> u128| won.iter().map(|f| g(f)).sum::<u128>();
            metrics.searchers.push(SearcherRound {
                report: StrategyReport {
                    searcher: s.id.clone(),
                    strategy: s.cfg.strategy,
                    round,
                    templates: submitted,
                    wins: won.len(),
                    gross: sum(|f| f.gross),
                    gas: sum(|f| f.gas),
                    kickback: sum(|f| f.kickback),
                    net: sum(|f| f.searcher_net),
                },
                accepted,
                solo_gross,
                solo_net,
            });
        }

        let count = |st: TxStatus| settlement.outcomes.iter().filter(|o| o.status == st).count();
        let total = |g: fn(&FilledBundle) -> u128| settlement.filled.iter().map(g).sum::<u128>();
        metrics.rounds.push(RoundRow {
            round,
            pending: release.pending,
            sample_size: release.sample_size,
            effective_rate: release.effective_rate,
            regime,
            epsilon_charged: release.epsilon_charged(),
            epsilon_spent: mm.ledger().spent(),
            templates: settlement.templates,
            bundles: settlement.filled.len(),
            discarded: settlement.discarded,
            standalone: count(TxStatus::Standalone),
            canceled: count(TxStatus::Canceled),
            deferred: count(TxStatus::Deferred),
            gross: total(|f| f.gross),
            gas: total(|f| f.gas),
            kickback: total(|f| f.kickback),
            searcher_net: total(|f| f.searcher_net),
        });
    }

    let ledger = mm.ledger();
    metrics.budget = BudgetTrace {
        global_cap: ledger.global_cap(),
        spent: ledger.spent(),
        spent_delta: ledger.spent_delta(),
        entries: ledger.entries().to_vec(),
    };
    Ok(metrics)
}

fn build_templates(
    s: &mut Searcher,
    release: &HintRelease,
    history: &[f64],
    chain: &ChainState,
    gas: crate::strategies::GasModel,
    scale: u128,
) -> Result<Vec<BundleTemplate>, SimError> {
    if s.cfg.strategy == StrategyKind::Contract {
        return Ok(contract_backrun_strategy(&s.id, release, chain, gas, s.cfg.rebate_percent));
    }
    let default = s.cfg.prior.clone().expect("validated");
    let prior: AmountPrior = if s.cfg.learn_prior {
        estimate_prior(history, s.cfg.prior_family, &default)?
    } else {
        default
    };
    let mut params = StaticParams::new(s.id.clone());
    params.gas = gas;
    params.rebate_percent = s.cfg.rebate_percent;
    params.cuts = s.cfg.cuts;
    params.token_scale = scale;
    params.scan_limit = s.cfg.scan_limit;
    let k = s.cfg.k.unwrap_or(usize::MAX);
    Ok(match s.cfg.strategy {
        StrategyKind::BruteForce => brute_force_strategy(&params, release, &prior, k, &mut s.rng, chain),
        _ => hint_enhanced_strategy(&params, release, &prior, k, &mut s.rng, chain),
    })
}

/// Best template per victim against `opening`, summed over victims: the
/// largest gross any template extracts, whether or not it clears gas, and
/// the largest searcher net among templates that would be filled.
fn solo_outcome(
    templates: &[BundleTemplate],
    pending: &BTreeMap<TxId, Transaction>,
    opening: &ChainState,
) -> (u128, u128) {
    let mut best: BTreeMap<TxId, (u128, u128)> = BTreeMap::new();
    for (i, t) in templates.iter().enumerate() {
        let Some(tx) = pending.get(&t.txid) else { continue };
        let Ok(gross) = simulate_template(opening, tx, t) else { continue };
        let net = FilledBundle::new(t, i, gross).map_or(0, |f| f.searcher_net);
        let e = best.entry(t.txid).or_default();
        e.0 = e.0.max(gross);
        e.1 = e.1.max(net);
    }
    best.values().fold((0, 0), |(g, n), &(bg, bn)| (g + bg, n + bn))
}

#[cfg(test)]
mod tests;
