use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{compare, BudgetTrace, PairedComparison, RunMetrics, ScenarioConfig, SimError};
use crate::strategies::StrategyKind;

pub const ROUNDS_FILE: &str = "rounds.csv";
pub const RELEASES_FILE: &str = "releases.csv";
pub const SEARCHERS_FILE: &str = "searchers.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CONFIG_FILE: &str = "config.toml";

#[derive(Serialize, Deserialize)]
struct SearcherCsvRow {
    round: u64,
    searcher: String,
    strategy: StrategyKind,
    templates: usize,
    accepted: usize,
    wins: usize,
    gross: u128,
    gas: u128,
    kickback: u128,
    net: u128,
    solo_gross: u128,
    solo_net: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearcherTotals {
    pub searcher: String,
    pub strategy: StrategyKind,
    pub templates: usize,
    pub wins: usize,
    pub gross: u128,
    pub gas: u128,
    pub kickback: u128,
    pub net: u128,
    pub solo_gross: u128,
    pub solo_net: u128,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub gross: u128,
    pub gas: u128,
    pub kickback: u128,
    pub searcher_net: u128,
    /// `kickback + searcher_net + gas == gross`.
    pub conserved: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seed: u64,
    pub rounds: usize,
    pub totals: Totals,
    pub searchers: Vec<SearcherTotals>,
    pub comparisons: Vec<PairedComparison>,
    pub satisfied_releases: usize,
    pub exhausted_releases: usize,
    pub kickbacks_by_user: BTreeMap<String, u128>,
    pub budget: BudgetTrace,
}

impl Summary {
    pub fn from_metrics(m: &RunMetrics) -> Self {
        let sum = |f: fn(&super::RoundRow) -> u128| m.rounds.iter().map(f).sum::<u128>();
        let (gross, gas, kickback, searcher_net) = (
            sum(|r| r.gross),
            sum(|r| r.gas),
            sum(|r| r.kickback),
            sum(|r| r.searcher_net),
        );
        let (parts, _) = m.conservation();
        let mut searchers: BTreeMap<String, SearcherTotals> = BTreeMap::new();
        for s in &m.searchers {
            let r = &s.report;
            let t = searchers.entry(r.searcher.0.clone()).or_insert_with(|| SearcherTotals {
                searcher: r.searcher.0.clone(),
                strategy: r.strategy,
                templates: 0,
                wins: 0,
                gross: 0,
                gas: 0,
                kickback: 0,
                net: 0,
                solo_gross: 0,
                solo_net: 0,
            });
            t.templates += r.templates;
            t.wins += r.wins;
            t.gross += r.gross;
            t.gas += r.gas;
            t.kickback += r.kickback;
            t.net += r.net;
            t.solo_gross += s.solo_gross;
            t.solo_net += s.solo_net;
        }
        let ids: Vec<String> = searchers.keys().cloned().collect();
        let mut comparisons = Vec::new();
        for (i, a) in ids.iter().enumerate() {
            for b in &ids[i + 1..] {
                comparisons.extend(compare(m, a, b));
            }
        }
        Summary {
            seed: m.seed,
            rounds: m.rounds.len(),
            totals: Totals {
                gross,
                gas,
                kickback,
                searcher_net,
                conserved: kickback + searcher_net + gas == gross && parts == gross,
            },
            searchers: searchers.into_values().collect(),
            comparisons,
            satisfied_releases: m.releases.iter().filter(|r| r.satisfied).count(),
            exhausted_releases: m.releases.iter().filter(|r| r.exhausted).count(),
            kickbacks_by_user: m.kickbacks.iter().map(|(k, v)| (k.0.clone(), *v)).collect(),
            budget: m.budget.clone(),
        }
    }
}

fn io(path: &Path, e: impl std::fmt::Display) -> SimError {
    SimError::Io(format!("{}: {e}", path.display()))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| io(path, e))?;
    }
    w.flush().map_err(|e| io(path, e))
}

/// Write the per-round tables, the summary and the resolved config into `dir`.
pub fn emit_reports(cfg: &ScenarioConfig, metrics: &RunMetrics, dir: &Path) -> Result<Summary, SimError> {
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_csv(&dir.join(ROUNDS_FILE), &metrics.rounds)?;
    write_csv(&dir.join(RELEASES_FILE), &metrics.releases)?;
    write_csv(
        &dir.join(SEARCHERS_FILE),
        metrics.searchers.iter().map(|s| SearcherCsvRow {
            round: s.report.round,
            searcher: s.report.searcher.0.clone(),
            strategy: s.report.strategy,
            templates: s.report.templates,
            accepted: s.accepted,
            wins: s.report.wins,
            gross: s.report.gross,
            gas: s.report.gas,
            kickback: s.report.kickback,
            net: s.report.net,
            solo_gross: s.solo_gross,
            solo_net: s.solo_net,
        }),
    )?;
    let summary = Summary::from_metrics(metrics);
    let path = dir.join(SUMMARY_FILE);
    let mut text = serde_json::to_string_pretty(&summary).map_err(|e| io(&path, e))?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| io(&path, e))?;
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, cfg.to_toml()?).map_err(|e| io(&path, e))?;
    Ok(summary)
}
