//! Sybil poisoning of a sum aggregate and the attacker's estimate of the
//! victim's value, used to measure how much subsampling blunts the attack.
//!
//! Sybil trades carry an unreachable minimum output, so they revert at
//! settlement and cost the attacker nothing under the gas model.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::dp::{amplify_by_subsampling, NoiseSource, PrivacyParams, ZeroNoise};
use crate::market::{CanonicalPair, Direction, ProtocolId, Token, Trade};
use crate::matchmaker::{
    AggQuery, AggSpec, HintConfig, HintField, HintRelease, MatchError, Matchmaker, MatchmakerConfig, Transaction,
    TxFilter,
};
use crate::stats::{self, Interval};
use crate::strategies::AmountPrior;
use crate::{ParticipantId, TxId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackPlan {
    pub target_spec: String,
    /// Opted-in sybils, each reporting `sybil_value` tokens.
    pub sybils: usize,
    pub sybil_value: f64,
    /// Opted-out sybils that only pad the opt-out threshold.
    pub decoys: usize,
    pub pair: CanonicalPair,
    pub protocol: ProtocolId,
    pub token_scale: u128,
    /// `(txid, value in tokens)` of every opted-in sybil submitted so far.
    #[serde(default)]
    pub knowledge: Vec<(TxId, f64)>,
}

/// Sybil transactions for one round, txids starting at `first_id`. Each has
/// its own sender. Opted-in values are recorded in the plan's knowledge.
pub fn craft_sybil_batch(plan: &mut AttackPlan, round: u64, first_id: u64) -> Vec<Transaction> {
    let mut out = Vec::with_capacity(plan.sybils + plan.decoys);
    let amount = ((plan.sybil_value * plan.token_scale as f64).round() as u128).max(1);
    for i in 0..plan.sybils + plan.decoys {
        let txid = TxId(first_id + i as u64);
        let opted = i < plan.sybils;
        let mut trade = Trade::new(plan.pair.ordered(Direction::SellToken2), plan.protocol.clone(), amount);
        trade.min_amount_out = u128::MAX;
        let mut cfg = HintConfig::new([HintField::Pair, HintField::Protocol]);
        if opted {
            cfg = cfg.opt_in(plan.target_spec.clone());
            plan.knowledge.push((txid, plan.sybil_value));
        }
        out.push(Transaction {
            txid,
            sender: ParticipantId::new(format!("sybil-r{round}-{i:05}")),
            trades: vec![trade],
            hint_config: cfg,
        });
    }
    out
}

/// The attacker's estimate of the victim's (clamped) value from a release
/// and its own submissions. `other_expected` is the expected total of honest
/// contributions besides the victim. Below full sampling the sum is scaled
/// up by the inverse inclusion rate first, which is unbiased but noisier.
pub fn infer_victim_value(release: &HintRelease, plan: &AttackPlan, other_expected: f64) -> Option<f64> {
    let agg = release.aggregate(&plan.target_spec)?;
    let value = agg.value.filter(|_| agg.satisfied)?;
    let cap = match agg.query {
        AggQuery::Sum { cap } => cap,
        AggQuery::Count => return None,
    };
    let known: f64 = plan.knowledge.iter().map(|(_, v)| v.min(cap)).sum();
    let q = release.effective_rate;
    let total = if q >= 1.0 {
        value
    } else if q > 0.0 {
        value / q
    } else {
        return None;
    };
    Some(total - known - other_expected)
}

/// Isolation experiment: one victim among sybils, optionally with honest
/// background users drawn from `background_prior`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackScenario {
    pub cap: f64,
    #[serde(default = "one")]
    pub epsilon_query: f64,
    #[serde(default = "one")]
    pub epsilon_cond: f64,
    #[serde(default = "ten")]
    pub min_opted_in: u32,
    #[serde(default = "ten")]
    pub min_opted_out: u32,
    pub victim_value: f64,
    pub sybils: usize,
    pub sybil_value: f64,
    #[serde(default = "ten_usize")]
    pub decoys: usize,
    #[serde(default)]
    pub background: usize,
    #[serde(default)]
    pub background_prior: Option<AmountPrior>,
    #[serde(default = "yes")]
    pub noise: bool,
}

fn one() -> f64 {
    1.0
}
fn ten() -> u32 {
    10
}
fn ten_usize() -> usize {
    10
}
fn yes() -> bool {
    true
}

impl AttackScenario {
    /// The isolation setup: `sybils` opted-in sybils at the cap plus decoys.
    /// Decoys are padded so the pool size is even and `q = 0.5` is exact.
    pub fn isolation(cap: f64, victim_value: f64, sybils: usize) -> Self {
        let mut decoys = 10 + sybils / 4;
        if (1 + sybils + decoys) % 2 == 1 {
            decoys += 1;
        }
        Self {
            cap,
            epsilon_query: 1.0,
            epsilon_cond: 1.0,
            min_opted_in: 10,
            min_opted_out: 10,
            victim_value,
            sybils,
            sybil_value: cap,
            decoys,
            background: 0,
            background_prior: None,
            noise: true,
        }
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let bad = |m: &str| Err(MatchError::Config(format!("attack: {m}")));
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return bad("cap must be positive");
        }
        if !(self.victim_value > 0.0 && self.sybil_value >= 0.0) {
            return bad("values must be positive");
        }
        if self.background > 0 && self.background_prior.is_none() {
            return bad("background users need background_prior");
        }
        if let Some(p) = &self.background_prior {
            p.validate().map_err(|e| MatchError::Config(format!("attack: {e}")))?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub q: f64,
    pub trials: usize,
    /// Trials where the aggregate was released.
    pub estimated: usize,
    pub truth: f64,
    pub mae: f64,
    pub mae_ci99: Interval,
    pub error_p50: f64,
    pub error_p90: f64,
    pub error_p99: f64,
    /// Amplified epsilon charged for one sum release.
    pub query_epsilon_prime: f64,
    #[serde(skip)]
    pub errors: Vec<f64>,
}

const SCALE: u128 = 1_000_000;

/// Repeat submit, release and infer `trials` times per rate. Trial `t` uses
/// the same seeds at every rate, so the per-rate errors are paired.
pub fn run_attack_experiment(
    scenario: &AttackScenario,
    qs: &[f64],
    trials: usize,
    seed: u64,
) -> Result<Vec<AttackOutcome>, MatchError> {
    scenario.validate()?;
    if trials == 0 {
        return Err(MatchError::Config("attack: trials must be positive".into()));
    }
    let pair = CanonicalPair::new(Token::new("ETH"), Token::new("USDC")).expect("distinct tokens");
    let protocol = ProtocolId::new("uni");
    let spec = AggSpec {
        id: "target".into(),
        scope: TxFilter::default(),
        min_opted_in: scenario.min_opted_in,
        min_opted_out: scenario.min_opted_out,
        query: AggQuery::Sum { cap: scenario.cap },
        epsilon_cond: scenario.epsilon_cond,
        epsilon_query: scenario.epsilon_query,
    };
    let truth = scenario.victim_value.min(scenario.cap);
    let background_mean = scenario
        .background_prior
        .as_ref()
        .map_or(0.0, |p| p.mean().min(scenario.cap) * scenario.background as f64);

    let mut out = Vec::with_capacity(qs.len());
    for &q in qs {
        let cfg = MatchmakerConfig {
            subsample_rate: q,
            token_scale: SCALE,
            global_epsilon_cap: f64::MAX,
            ..MatchmakerConfig::default()
        };
        let mut errors = Vec::with_capacity(trials);
        let mut q_eff = q;
        for t in 0..trials {
            let mut mm = Matchmaker::new(cfg.clone(), vec![spec.clone()])?;
            let mut noise_rng = ChaCha20Rng::seed_from_u64(seed);
            noise_rng.set_stream(3 * t as u64);
            let mut sampler = ChaCha20Rng::seed_from_u64(seed);
            sampler.set_stream(3 * t as u64 + 1);
            let mut users = ChaCha20Rng::seed_from_u64(seed);
            users.set_stream(3 * t as u64 + 2);

            let honest = |id: u64, tokens: f64| Transaction {
                txid: TxId(id),
                sender: ParticipantId::new(format!("user-{id:05}")),
                trades: vec![Trade::new(
                    pair.ordered(Direction::SellToken2),
                    protocol.clone(),
                    ((tokens * SCALE as f64).round() as u128).max(1),
                )],
                hint_config: HintConfig::new([HintField::Pair, HintField::Protocol]).opt_in("target"),
            };
            mm.submit_transaction(honest(0, scenario.victim_value))?;
            for i in 0..scenario.background {
                let v = scenario.background_prior.as_ref().expect("validated").sample(&mut users);
                mm.submit_transaction(honest(1 + i as u64, v))?;
            }
            let mut plan = AttackPlan {
                target_spec: "target".into(),
                sybils: scenario.sybils,
                sybil_value: scenario.sybil_value,
                decoys: scenario.decoys,
                pair: pair.clone(),
                protocol: protocol.clone(),
                token_scale: SCALE,
                knowledge: Vec::new(),
            };
            for tx in craft_sybil_batch(&mut plan, 0, 100_000) {
                mm.submit_transaction(tx)?;
            }
            let noise: &mut dyn NoiseSource = if scenario.noise { &mut noise_rng } else { &mut ZeroNoise };
            let release = mm.release_hints(noise, &mut sampler as &mut dyn RngCore)?;
            q_eff = release.effective_rate;
            if let Some(est) = infer_victim_value(&release, &plan, background_mean) {
                errors.push((est - truth).abs());
            }
        }
        let mut ci_rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
        let mae = stats::mean(&errors);
        let query_epsilon_prime = amplify_by_subsampling(PrivacyParams::pure(scenario.epsilon_query, scenario.cap)?, q_eff)?
            .epsilon_prime;
        out.push(AttackOutcome {
            q,
            trials,
            estimated: errors.len(),
            truth,
            mae,
            mae_ci99: if errors.is_empty() {
                Interval { lo: f64::NAN, hi: f64::NAN }
            } else {
                stats::bootstrap_mean_ci(&errors, 0.99, 2000, &mut ci_rng)
            },
            error_p50: stats::quantile(&errors, 0.5),
            error_p90: stats::quantile(&errors, 0.9),
            error_p99: stats::quantile(&errors, 0.99),
            query_epsilon_prime,
            errors,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn plan(sybils: usize) -> AttackPlan {
        AttackPlan {
            target_spec: "target".into(),
            sybils,
            sybil_value: 50.0,
            decoys: 3,
            pair: CanonicalPair::new(Token::new("A"), Token::new("B")).unwrap(),
            protocol: ProtocolId::new("p"),
            token_scale: SCALE,
            knowledge: Vec::new(),
        }
    }

    #[test]
    fn batch_shape() {
        let mut p = plan(100);
        let txs = craft_sybil_batch(&mut p, 0, 10);
        assert_eq!(txs.len(), 103);
        let senders: std::collections::BTreeSet<_> = txs.iter().map(|t| t.sender.clone()).collect();
        assert_eq!(senders.len(), 103);
        let opted: Vec<_> = txs
            .iter()
            .filter(|t| t.hint_config.opted_into("target"))
            .map(|t| (t.txid, t.trades[0].amount_in as f64 / SCALE as f64))
            .collect();
        assert_eq!(opted, p.knowledge);
    }

    #[test]
    fn matchmaker_accepts_every_sybil_and_they_cost_nothing() {
        let mut p = plan(20);
        let spec = AggSpec {
            id: "target".into(),
            scope: TxFilter::default(),
            min_opted_in: 1,
            min_opted_out: 1,
            query: AggQuery::Sum { cap: 100.0 },
            epsilon_cond: 1.0,
            epsilon_query: 1.0,
        };
        let mut mm = Matchmaker::new(MatchmakerConfig::default(), vec![spec]).unwrap();
        for tx in craft_sybil_batch(&mut p, 0, 0) {
            mm.submit_transaction(tx).unwrap();
        }
        assert_eq!(mm.pending_len(), 23);
        let mut chain = crate::market::ChainState::new(1);
        chain
            .add_pool(crate::market::PoolState::new(p.protocol.clone(), p.pair.clone(), 1 << 40, 1 << 40, 3000).unwrap())
            .unwrap();
        let s = mm.settle_round(&mut chain).unwrap();
        assert!(s.outcomes.iter().all(|o| o.status == crate::matchmaker::TxStatus::Canceled));
        assert!(s.filled.is_empty());
        assert!(chain.history().is_empty());
    }

    #[test]
    fn noiseless_full_sampling_recovers_victim() {
        let mut sc = AttackScenario::isolation(100.0, 42.0, 30);
        sc.noise = false;
        let out = run_attack_experiment(&sc, &[1.0], 20, 1).unwrap();
        assert_eq!(out[0].estimated, 20);
        assert!(out[0].mae < 1e-9);
    }

    #[test]
    fn unsatisfied_release_gives_no_estimate() {
        let p = plan(1);
        let r = HintRelease {
            round: 0,
            pending: 0,
            sample_size: 0,
            effective_rate: 1.0,
            tx_hints: vec![],
            aggregates: vec![],
        };
        assert_eq!(infer_victim_value(&r, &p, 0.0), None);
    }

    #[test]
    fn subsampling_inflates_error() {
        let sc = AttackScenario::isolation(100.0, 42.0, 40);
        let out = run_attack_experiment(&sc, &[0.5, 1.0], 2000, 3).unwrap();
        assert!(out[0].mae > out[1].mae);
        assert!((out[1].mae - 100.0).abs() < 10.0, "{}", out[1].mae);
        let expect = (1.0 + 0.5 * (1f64.exp() - 1.0)).ln();
        assert!((out[0].query_epsilon_prime - expect).abs() < 1e-12);
    }
}
