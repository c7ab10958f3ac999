use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Dataset, DpError, PrivacyParams};

/// Budget of a mechanism run on a uniform subsample with inclusion
/// probability `q`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AmplifiedBudget {
    pub base: PrivacyParams,
    pub q: f64,
    pub epsilon_prime: f64,
    pub delta_prime: f64,
}

fn check_rate(q: f64) -> Result<(), DpError> {
    if !(0.0..=1.0).contains(&q) {
        return Err(DpError::Parameter(format!("subsample rate must be in [0, 1], got {q}")));
    }
    Ok(())
}

/// `epsilon' = ln(1 + q (e^epsilon - 1))`, `delta' = q delta`.
pub fn amplify_by_subsampling(base: PrivacyParams, q: f64) -> Result<AmplifiedBudget, DpError> {
    check_rate(q)?;
    let epsilon_prime = if q == 1.0 {
        base.epsilon
    } else {
        (q * base.epsilon.exp_m1()).ln_1p()
    };
    Ok(AmplifiedBudget {
        base,
        q,
        epsilon_prime,
        delta_prime: q * base.delta,
    })
}

/// Fixed sample size `round(q n)`.
pub fn sample_size(n: usize, q: f64) -> usize {
    ((q * n as f64).round() as usize).min(n)
}

/// Sorted positions of a uniform `round(q n)`-subset drawn without
/// replacement.
pub fn subsample_indices<R: Rng + ?Sized>(
    n: usize,
    q: f64,
    rng: &mut R,
) -> Result<Vec<usize>, DpError> {
    check_rate(q)?;
    let m = sample_size(n, q);
    if m == n {
        return Ok((0..n).collect());
    }
    let mut idx = rand::seq::index::sample(rng, n, m).into_vec();
    idx.sort_unstable();
    Ok(idx)
}

/// Uniform subset of size `round(q n)`; the input is left untouched.
pub fn subsample<R: Rng + ?Sized>(dataset: &Dataset, q: f64, rng: &mut R) -> Result<Dataset, DpError> {
    let idx = subsample_indices(dataset.len(), q, rng)?;
    Ok(dataset.select(&idx))
}
