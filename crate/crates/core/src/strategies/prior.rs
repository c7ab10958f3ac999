use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal as LogNormalDist};

use super::StrategyError;
use crate::stats;

/// A searcher's belief about trade amounts, in tokens.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum AmountPrior {
    /// Uniform within each bucket `[edges[i], edges[i+1]]`; a bucket may be
    /// a single point.
    Histogram { edges: Vec<f64>, masses: Vec<f64> },
    LogNormal { location: f64, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorFamily {
    Histogram,
    LogNormal,
}

impl AmountPrior {
    pub fn point(v: f64) -> Self {
        AmountPrior::Histogram {
            edges: vec![v, v],
            masses: vec![1.0],
        }
    }

    pub fn validate(&self) -> Result<(), StrategyError> {
        let bad = |m: String| Err(StrategyError::Prior(m));
        match self {
            AmountPrior::Histogram { edges, masses } => {
                if masses.is_empty() || edges.len() != masses.len() + 1 {
                    return bad(format!("{} edges for {} masses", edges.len(), masses.len()));
                }
                if !edges.iter().all(|e| e.is_finite()) || edges[0] <= 0.0 {
                    return bad("support must be finite and strictly positive".into());
                }
                if edges.windows(2).any(|w| w[1] < w[0]) {
                    return bad("edges must be non-decreasing".into());
                }
                if masses.iter().any(|m| !(*m >= 0.0)) {
                    return bad("masses must be non-negative".into());
                }
                let total: f64 = masses.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("masses sum to {total}"));
                }
            }
            AmountPrior::LogNormal { location, scale } => {
                if !location.is_finite() || !(scale.is_finite() && *scale > 0.0) {
                    return bad(format!("log-normal({location}, {scale})"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            AmountPrior::Histogram { edges, masses } => masses
                .iter()
                .enumerate()
                .map(|(i, m)| m * (edges[i] + edges[i + 1]) / 2.0)
                .sum(),
            AmountPrior::LogNormal { location, scale } => (location + scale * scale / 2.0).exp(),
        }
    }

    pub fn std_dev(&self) -> f64 {
        match self {
            AmountPrior::Histogram { edges, masses } => {
                let mu = self.mean();
                let second: f64 = masses
                    .iter()
                    .enumerate()
                    .map(|(i, m)| {
                        let (a, b) = (edges[i], edges[i + 1]);
                        m * (a * a + a * b + b * b) / 3.0
                    })
                    .sum();
                (second - mu * mu).max(0.0).sqrt()
            }
            AmountPrior::LogNormal { scale, .. } => {
                let s2 = scale * scale;
                self.mean() * (s2.exp_m1()).sqrt()
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        match self {
            AmountPrior::Histogram { edges, masses } => {
                let mut acc = 0.0;
                for (i, &m) in masses.iter().enumerate() {
                    if m > 0.0 && (acc + m >= p || i == masses.len() - 1) {
                        let f = ((p - acc) / m).clamp(0.0, 1.0);
                        return edges[i] + f * (edges[i + 1] - edges[i]);
                    }
                    acc += m;
                }
                edges[edges.len() - 1]
            }
            AmountPrior::LogNormal { location, scale } => LogNormalDist::new(*location, *scale)
                .expect("validated parameters")
                .inverse_cdf(p),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            AmountPrior::Histogram { .. } => self.quantile(rng.random::<f64>()),
            AmountPrior::LogNormal { location, scale } => {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                (location + scale * z).exp()
            }
        }
    }

    /// The same shape stretched so its median is `target`: for a log-normal
    /// the location becomes `ln target` and the log-scale is unchanged.
    pub fn centered_on(&self, target: f64) -> Self {
        let median = self.quantile(0.5);
        if !(target > 0.0 && target.is_finite() && median > 0.0) {
            return self.clone();
        }
        match self {
            AmountPrior::Histogram { edges, masses } => AmountPrior::Histogram {
                edges: edges.iter().map(|e| e * target / median).collect(),
                masses: masses.clone(),
            },
            AmountPrior::LogNormal { scale, .. } => AmountPrior::LogNormal {
                location: target.ln(),
                scale: *scale,
            },
        }
    }
}

/// Fit `family` to observed amounts; `default` when there is no history.
pub fn estimate_prior(history: &[f64], family: PriorFamily, default: &AmountPrior) -> Result<AmountPrior, StrategyError> {
    let obs: Vec<f64> = history.iter().copied().filter(|v| v.is_finite() && *v > 0.0).collect();
    if obs.is_empty() {
        return Ok(default.clone());
    }
    let prior = match family {
        PriorFamily::Histogram => freedman_diaconis(&obs),
        PriorFamily::LogNormal => {
            let m = stats::mean(&obs);
            let v = stats::variance(&obs);
            let s2 = (v / (m * m)).ln_1p();
            if s2 <= 0.0 {
                AmountPrior::point(m)
            } else {
                AmountPrior::LogNormal {
                    location: m.ln() - s2 / 2.0,
                    scale: s2.sqrt(),
                }
            }
        }
    };
    prior.validate()?;
    Ok(prior)
}

fn freedman_diaconis(obs: &[f64]) -> AmountPrior {
    let mut v = obs.to_vec();
    v.sort_by(f64::total_cmp);
    let (lo, hi) = (v[0], v[v.len() - 1]);
    let iqr = stats::quantile_sorted(&v, 0.75) - stats::quantile_sorted(&v, 0.25);
    let width = 2.0 * iqr / (v.len() as f64).cbrt();
    if hi == lo {
        return AmountPrior::point(lo);
    }
    let bins = if width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, 1000)
    } else {
        1
    };
    let w = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for x in &v {
        counts[(((x - lo) / w) as usize).min(bins - 1)] += 1;
    }
    let mut edges: Vec<f64> = (0..bins).map(|i| lo + w * i as f64).collect();
    edges.push(hi);
    AmountPrior::Histogram {
        edges,
        masses: counts.iter().map(|&c| c as f64 / v.len() as f64).collect(),
    }
}
