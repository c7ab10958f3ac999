use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::adversary::AttackScenario;
use crate::market::{CanonicalPair, PoolState, ProtocolId, Token, FEE_DENOMINATOR};
use crate::matchmaker::{AggSpec, HintField, MatchmakerConfig, DEFAULT_RATE_LIMIT};
use crate::strategies::{AmountPrior, CutMode, GasModel, PriorFamily, StrategyKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub rounds: u64,
    /// Restore every pool to its configured reserves at the start of each round.
    #[serde(default)]
    pub reset_pools: bool,
    #[serde(default)]
    pub matchmaker: MatchmakerSection,
    #[serde(default)]
    pub gas: GasSection,
    pub pools: Vec<PoolConfig>,
    pub population: PopulationConfig,
    #[serde(default)]
    pub specs: Vec<AggSpec>,
    #[serde(default)]
    pub searchers: Vec<SearcherConfig>,
    #[serde(default)]
    pub attack: Option<AttackScenario>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchmakerSection {
    pub subsample_rate: f64,
    pub rate_limit: usize,
    pub token_scale: u64,
    pub block_capacity: Option<usize>,
    pub global_epsilon_cap: f64,
}

impl Default for MatchmakerSection {
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

impl MatchmakerSection {
    pub fn build(&self) -> MatchmakerConfig {
        MatchmakerConfig {
            subsample_rate: self.subsample_rate,
            rate_limit: self.rate_limit,
            token_scale: self.token_scale as u128,
            block_capacity: self.block_capacity,
            global_epsilon_cap: self.global_epsilon_cap,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GasSection {
    pub plain: u64,
    pub probe: u64,
}

impl Default for GasSection {
    fn default() -> Self {
        let g = GasModel::default();
        Self {
            plain: g.plain as u64,
            probe: g.probe as u64,
        }
    }
}

impl GasSection {
    pub fn build(&self) -> GasModel {
        GasModel {
            plain: self.plain as u128,
            probe: self.probe as u128,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolConfig {
    pub protocol: String,
    pub pair: [String; 2],
    /// `[l1, l2]` in base units, `l1` for the lexicographically smaller token.
    pub reserves: [u64; 2],
    #[serde(default = "default_fee")]
    pub fee_ppm: u64,
}

fn default_fee() -> u64 {
    3000
}

impl PoolConfig {
    pub fn canonical_pair(&self) -> Result<CanonicalPair, SimError> {
        CanonicalPair::new(Token::new(&self.pair[0]), Token::new(&self.pair[1]))
            .map_err(|e| SimError::Config(format!("pools: {e}")))
    }

    pub fn build(&self) -> Result<PoolState, SimError> {
        PoolState::new(
            ProtocolId::new(&self.protocol),
            self.canonical_pair()?,
            self.reserves[0] as u128,
            self.reserves[1] as u128,
            self.fee_ppm as u32,
        )
        .map_err(|e| SimError::Config(format!("pools: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PopulationConfig {
    /// Each user submits one transaction per round.
    pub users: usize,
    pub pair: [String; 2],
    /// Venues users trade on, picked uniformly per transaction.
    pub protocols: Vec<String>,
    #[serde(default)]
    pub sell_token1_fraction: f64,
    /// Amounts in tokens of the sold token.
    pub amount: AmountPrior,
    /// Standard deviation of a per-round log multiplier shared by all users.
    #[serde(default)]
    pub regime_scale: f64,
    #[serde(default = "default_mix")]
    pub hint_mix: Vec<HintProfile>,
}

impl PopulationConfig {
    /// Users per hint profile: weights apportioned by largest remainder,
    /// ties to the earlier profile.
    pub fn profile_counts(&self) -> Vec<usize> {
        let total: f64 = self.hint_mix.iter().map(|h| h.weight).sum();
        let exact: Vec<f64> = self
            .hint_mix
            .iter()
            .map(|h| h.weight / total * self.users as f64)
            .collect();
        let mut counts: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
        let mut order: Vec<usize> = (0..exact.len()).collect();
        order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())).then(a.cmp(&b)));
        let short = self.users - counts.iter().sum::<usize>();
        for &i in order.iter().take(short) {
            counts[i] += 1;
        }
        counts
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HintProfile {
    #[serde(default = "one")]
    pub weight: f64,
    #[serde(default)]
    pub plain: Vec<HintField>,
    #[serde(default)]
    pub opt_in: Vec<String>,
}

fn one() -> f64 {
    1.0
}

fn default_mix() -> Vec<HintProfile> {
    vec![HintProfile {
        weight: 1.0,
        plain: vec![HintField::Pair, HintField::Protocol, HintField::Direction],
        opt_in: Vec::new(),
    }]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearcherConfig {
    pub id: String,
    pub strategy: StrategyKind,
    /// Templates per victim; defaults to the rate limit.
    #[serde(default)]
    pub k: Option<usize>,
    #[serde(default)]
    pub rebate_percent: u8,
    #[serde(default)]
    pub cuts: CutMode,
    /// Starting belief about amounts; required for static strategies.
    #[serde(default)]
    pub prior: Option<AmountPrior>,
    /// Refit the prior each round to settled amounts seen so far.
    #[serde(default)]
    pub learn_prior: bool,
    #[serde(default = "default_family")]
    pub prior_family: PriorFamily,
    /// Integer candidates scanned per side when pricing a static route.
    #[serde(default = "default_scan")]
    pub scan_limit: u64,
}

fn default_scan() -> u64 {
    256
}

fn default_family() -> PriorFamily {
    PriorFamily::LogNormal
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, SimError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| SimError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, SimError> {
        toml::to_string(self).map_err(|e| SimError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        let mm = &self.matchmaker;
        if !(0.0..=1.0).contains(&mm.subsample_rate) {
            return bad(format!("subsample_rate must be in [0, 1], got {}", mm.subsample_rate));
        }
        if !(mm.global_epsilon_cap > 0.0) {
            return bad(format!("global_epsilon_cap must be > 0, got {}", mm.global_epsilon_cap));
        }
        if mm.token_scale == 0 {
            return bad("token_scale must be positive".into());
        }
        if mm.rate_limit == 0 {
            return bad("rate_limit must be positive".into());
        }
        if self.pools.is_empty() {
            return bad("pools: at least one pool is required".into());
        }
        let mut venues = BTreeSet::new();
        for (i, p) in self.pools.iter().enumerate() {
            if p.fee_ppm >= FEE_DENOMINATOR as u64 {
                return bad(format!("pools[{i}].fee_ppm must be below {FEE_DENOMINATOR}"));
            }
            let pool = p.build().map_err(|e| SimError::Config(format!("pools[{i}]: {e}")))?;
            if !venues.insert((pool.pair.clone(), pool.protocol.clone())) {
                return bad(format!("pools[{i}]: duplicate venue {} on {}", p.protocol, pool.pair));
            }
        }
        let has_pool = |pair: &CanonicalPair, protocol: Option<&ProtocolId>| {
            venues
                .iter()
                .any(|(p, v)| p == pair && protocol.is_none_or(|x| x == v))
        };

        let pop = &self.population;
        let pair = CanonicalPair::new(Token::new(&pop.pair[0]), Token::new(&pop.pair[1]))
            .map_err(|e| SimError::Config(format!("population.pair: {e}")))?;
        if pop.protocols.is_empty() {
            return bad("population.protocols must not be empty".into());
        }
        for p in &pop.protocols {
            if !has_pool(&pair, Some(&ProtocolId::new(p))) {
                return bad(format!("population.protocols: no pool for {p} on {pair}"));
            }
        }
        if !(0.0..=1.0).contains(&pop.sell_token1_fraction) {
            return bad("population.sell_token1_fraction must be in [0, 1]".into());
        }
        if !(pop.regime_scale >= 0.0 && pop.regime_scale.is_finite()) {
            return bad("population.regime_scale must be non-negative".into());
        }
        pop.amount
            .validate()
            .map_err(|e| SimError::Config(format!("population.amount: {e}")))?;
        if pop.hint_mix.is_empty() || pop.hint_mix.iter().any(|h| !(h.weight >= 0.0)) {
            return bad("population.hint_mix needs non-negative weights".into());
        }
        if pop.hint_mix.iter().map(|h| h.weight).sum::<f64>() <= 0.0 {
            return bad("population.hint_mix weights sum to zero".into());
        }

        let mut ids = BTreeSet::new();
        for (i, s) in self.specs.iter().enumerate() {
            if !ids.insert(s.id.as_str()) {
                return bad(format!("specs[{i}]: duplicate id {}", s.id));
            }
            if let Some(p) = &s.scope.pair {
                if !has_pool(p, s.scope.protocol.as_ref()) {
                    return bad(format!("specs[{i}].scope: no pool for {p}"));
                }
            }
        }
        for h in &pop.hint_mix {
            for s in &h.opt_in {
                if !ids.contains(s.as_str()) {
                    return bad(format!("population.hint_mix: unknown spec {s}"));
                }
            }
        }

        let mut names = BTreeSet::new();
        for (i, s) in self.searchers.iter().enumerate() {
            if !names.insert(s.id.as_str()) {
                return bad(format!("searchers[{i}]: duplicate id {}", s.id));
            }
            if s.rebate_percent > 100 {
                return bad(format!("searchers[{i}].rebate_percent must be at most 100"));
            }
            if s.scan_limit == 0 {
                return bad(format!("searchers[{i}].scan_limit must be positive"));
            }
            if s.k.unwrap_or(0) > mm.rate_limit {
                return bad(format!("searchers[{i}].k exceeds rate_limit {}", mm.rate_limit));
            }
            match (&s.prior, s.strategy) {
                (None, StrategyKind::BruteForce | StrategyKind::HintEnhanced) => {
                    return bad(format!("searchers[{i}].prior is required for {}", s.strategy));
                }
                (Some(p), _) => p
                    .validate()
                    .map_err(|e| SimError::Config(format!("searchers[{i}].prior: {e}")))?,
                _ => {}
            }
        }
        if let Some(a) = &self.attack {
            a.validate().map_err(|e| SimError::Config(e.to_string()))?;
        }
        Ok(())
    }
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, SimError> {
    let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
    ScenarioConfig::from_toml(&text)
}
