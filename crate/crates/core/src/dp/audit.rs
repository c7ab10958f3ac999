//! Empirical epsilon audit by histogram likelihood ratios.
//!
//! The mechanism runs `trials` times on each of two datasets. Outputs are
//! binned into equal-width bins over the pooled range and the audit reports
//! the largest `|ln(p_X(bin) / p_X'(bin))|` over bins where both sides have at
//! least `min_hits` hits.
//!
//! Trials are split into fixed-size chunks, each with its own derived noise
//! and sampling streams. Chunk `c` uses the same streams for `X` and `X'`
//! (common random numbers), which leaves both marginals untouched and makes
//! the comparison of identical datasets exact.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::mechanism::validate_descriptor;
use super::{ContributionRecord, Dataset, DpError, Mechanism};
use crate::TxId;

const CHUNK: usize = 4096;

/// Fewest trials the audit accepts.
pub const MIN_AUDIT_TRIALS: usize = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditOptions {
    pub trials: usize,
    pub bins: usize,
    pub min_hits: u64,
    pub seed: u64,
}

impl AuditOptions {
    pub fn new(trials: usize, bins: usize) -> Self {
        Self {
            trials,
            bins,
            min_hits: 1000,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon_hat: f64,
    /// Epsilon the mechanism claims after amplification.
    pub claimed_epsilon: f64,
    pub slack: f64,
    pub bins_scored: usize,
    pub worst_bin: Option<usize>,
    pub range: (f64, f64),
    pub trials: usize,
    pub bins: usize,
}

impl AuditReport {
    pub fn within_claim(&self) -> bool {
        self.epsilon_hat <= self.claimed_epsilon + self.slack
    }
}

/// Statistical slack on a scored bin's log ratio: `sqrt(1/n1 + 1/n2)` is at
/// most `sqrt(2 / min_hits)` and the bound uses `z = sqrt(5)`, so 1000 hits
/// per side give a slack of 0.1.
pub fn audit_slack(min_hits: u64) -> f64 {
    (10.0 / min_hits as f64).sqrt()
}

/// Neighbouring datasets for auditing: `x_prime` holds `background`
/// opted-out records and `x` adds one opted-in record worth `value`.
pub fn neighboring_datasets(background: usize, value: f64) -> Result<(Dataset, Dataset), DpError> {
    let mut x_prime = Dataset::default();
    for i in 0..background {
        x_prime.push(ContributionRecord::new(TxId(i as u64), value).opted_out())?;
    }
    let mut x = x_prime.clone();
    x.push(ContributionRecord::new(TxId(background as u64), value))?;
    Ok((x, x_prime))
}

/// Audit one mechanism on the pair `(x, x_prime)`.
pub fn epsilon_audit<M: Mechanism + ?Sized>(
    mechanism: &M,
    x: &Dataset,
    x_prime: &Dataset,
    opts: AuditOptions,
) -> Result<AuditReport, DpError> {
    epsilon_audit_pair(mechanism, x, mechanism, x_prime, opts)
}

/// Audit with separately supplied mechanism instances for each side; their
/// configurations must agree.
pub fn epsilon_audit_pair<A: Mechanism + ?Sized, B: Mechanism + ?Sized>(
    on_x: &A,
    x: &Dataset,
    on_x_prime: &B,
    x_prime: &Dataset,
    opts: AuditOptions,
) -> Result<AuditReport, DpError> {
    let desc = on_x.descriptor();
    if desc != on_x_prime.descriptor() {
        return Err(DpError::Audit(format!(
            "mechanism configuration differs between runs: {:?} vs {:?}",
            desc,
            on_x_prime.descriptor()
        )));
    }
    validate_descriptor(&desc)?;
    if opts.trials < MIN_AUDIT_TRIALS {
        return Err(DpError::Audit(format!(
            "need at least {MIN_AUDIT_TRIALS} trials, got {}",
            opts.trials
        )));
    }
    if opts.bins == 0 || opts.min_hits == 0 {
        return Err(DpError::Audit("bins and min_hits must be positive".into()));
    }

    let out_x = run_trials(on_x, x, &opts)?;
    let out_xp = run_trials(on_x_prime, x_prime, &opts)?;

    let (lo, hi) = out_x
        .iter()
        .chain(out_xp.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let width = (hi - lo) / opts.bins as f64;
    let bin_of = |v: f64| -> usize {
        if width == 0.0 {
            0
        } else {
            (((v - lo) / width) as usize).min(opts.bins - 1)
        }
    };
    let mut hx = vec![0u64; opts.bins];
    let mut hxp = vec![0u64; opts.bins];
    for &v in &out_x {
        hx[bin_of(v)] += 1;
    }
    for &v in &out_xp {
        hxp[bin_of(v)] += 1;
    }

    let mut epsilon_hat = 0.0f64;
    let mut worst_bin = None;
    let mut bins_scored = 0;
    for (i, (&a, &b)) in hx.iter().zip(hxp.iter()).enumerate() {
        if a < opts.min_hits || b < opts.min_hits {
            continue;
        }
        bins_scored += 1;
        let r = (a as f64 / b as f64).ln().abs();
        if worst_bin.is_none() || r > epsilon_hat {
            epsilon_hat = r;
            worst_bin = Some(i);
        }
    }
    if bins_scored == 0 {
        return Err(DpError::Audit(format!(
            "no bin reached {} hits on both sides; raise trials or lower bins",
            opts.min_hits
        )));
    }
    Ok(AuditReport {
        epsilon_hat,
        claimed_epsilon: desc.guarantee()?.epsilon_prime,
        slack: audit_slack(opts.min_hits),
        bins_scored,
        worst_bin,
        range: (lo, hi),
        trials: opts.trials,
        bins: opts.bins,
    })
}

fn run_trials<M: Mechanism + ?Sized>(
    mechanism: &M,
    data: &Dataset,
    opts: &AuditOptions,
) -> Result<Vec<f64>, DpError> {
    let mut out = Vec::with_capacity(opts.trials);
    let chunks = opts.trials.div_ceil(CHUNK);
    for c in 0..chunks {
        let mut noise = ChaCha20Rng::seed_from_u64(opts.seed);
        noise.set_stream(2 * c as u64);
        let mut sampler = ChaCha20Rng::seed_from_u64(opts.seed);
        sampler.set_stream(2 * c as u64 + 1);
        let n = CHUNK.min(opts.trials - c * CHUNK);
        for _ in 0..n {
            out.push(mechanism.release(data, &mut noise, &mut sampler as &mut dyn RngCore)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{CountMechanism, SumMechanism};

    fn count_neighbors() -> (Dataset, Dataset) {
        let mut x = Dataset::default();
        for i in 0..3 {
            x.push(ContributionRecord::new(TxId(i), 1.0)).unwrap();
        }
        x.push(ContributionRecord::new(TxId(3), 1.0).opted_out()).unwrap();
        let xp = x.without(TxId(2));
        (x, xp)
    }

    #[test]
    fn slack_at_default_hits() {
        assert!((audit_slack(1000) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn count_audit_respects_epsilon() {
        let (x, xp) = count_neighbors();
        assert!(x.is_neighbor_of(&xp));
        let r = epsilon_audit(&CountMechanism::new(1.0), &x, &xp, AuditOptions::new(1_000_000, 200)).unwrap();
        assert!(r.epsilon_hat <= 1.1, "{r:?}");
        assert!(r.epsilon_hat > 0.8, "the audit should see most of the ratio: {r:?}");
        assert!(r.within_claim());
    }

    #[test]
    fn identical_datasets_score_zero() {
        let (x, _) = count_neighbors();
        let r = epsilon_audit(&CountMechanism::new(1.0), &x, &x, AuditOptions::new(200_000, 200)).unwrap();
        assert!(r.epsilon_hat < 0.05, "{r:?}");
    }

    #[test]
    fn doubled_noise_halves_ratio() {
        let (x, xp) = count_neighbors();
        let r = epsilon_audit(&CountMechanism::new(0.5), &x, &xp, AuditOptions::new(1_000_000, 200)).unwrap();
        assert!(r.epsilon_hat <= 0.6, "{r:?}");
    }

    #[test]
    fn neighboring_datasets_differ_by_one_opted_in_record() {
        let (x, xp) = neighboring_datasets(99, 2.0).unwrap();
        assert!(x.is_neighbor_of(&xp));
        assert_eq!(x.len(), 100);
    }

    #[test]
    fn rejects_mismatched_configuration() {
        let (x, xp) = count_neighbors();
        let err = epsilon_audit_pair(
            &CountMechanism::new(1.0),
            &x,
            &CountMechanism::new(2.0),
            &xp,
            AuditOptions::new(200_000, 200),
        )
        .unwrap_err();
        assert!(matches!(err, DpError::Audit(_)));
        let err = epsilon_audit(&SumMechanism::new(1.0, 5.0), &x, &xp, AuditOptions::new(10, 200)).unwrap_err();
        assert!(matches!(err, DpError::Audit(_)));
    }
}
