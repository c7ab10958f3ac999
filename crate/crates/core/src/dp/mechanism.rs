use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::noise::NoiseSource;
use super::subsample::{amplify_by_subsampling, subsample};
use super::{AmplifiedBudget, ContributionRecord, Dataset, DpError, NoiseParams, PrivacyParams};

/// Noisy count of the entries satisfying `predicate`. Sensitivity is fixed
/// at 1; the release is a raw real and may be negative or fractional.
pub fn dp_count<P, N>(dataset: &Dataset, predicate: P, epsilon: f64, noise: &mut N) -> Result<f64, DpError>
where
    P: Fn(&ContributionRecord) -> bool,
    N: NoiseSource + ?Sized,
{
    let params = PrivacyParams::pure(epsilon, 1.0)?.laplace_noise()?;
    let count = dataset.entries().iter().filter(|e| predicate(e)).count();
    Ok(count as f64 + noise.draw(&params))
}

/// Noisy sum of per-entry values clamped to `clamp_cap`. `selector` returns
/// `None` for entries that do not contribute.
pub fn dp_sum<S, N>(
    dataset: &Dataset,
    selector: S,
    clamp_cap: f64,
    epsilon: f64,
    noise: &mut N,
) -> Result<f64, DpError>
where
    S: Fn(&ContributionRecord) -> Option<f64>,
    N: NoiseSource + ?Sized,
{
    let params = PrivacyParams::pure(epsilon, clamp_cap)?.laplace_noise()?;
    let mut total = 0.0;
    for e in dataset.entries() {
        if let Some(v) = selector(e) {
            if !(v.is_finite() && v >= 0.0) {
                return Err(DpError::Data(format!("{} selected value {v} is negative", e.txid)));
            }
            total += v.min(clamp_cap);
        }
    }
    Ok(total + noise.draw(&params))
}

/// Mean from an already released count and sum. Pure post-processing, so it
/// charges nothing. Undefined when the noisy count is below one.
pub fn derive_mean(noisy_count: f64, noisy_sum: f64) -> Option<f64> {
    (noisy_count >= 1.0).then(|| noisy_sum / noisy_count)
}

/// Identity of a mechanism configuration; two runs are comparable only when
/// their descriptors are equal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismDescriptor {
    pub kind: String,
    pub epsilon: f64,
    pub sensitivity: f64,
    pub subsample_rate: f64,
}

impl MechanismDescriptor {
    /// The guarantee the mechanism claims, after amplification.
    pub fn guarantee(&self) -> Result<AmplifiedBudget, DpError> {
        amplify_by_subsampling(PrivacyParams::pure(self.epsilon, self.sensitivity)?, self.subsample_rate)
    }
}

/// A releasable mechanism: one noisy real per invocation.
pub trait Mechanism {
    fn descriptor(&self) -> MechanismDescriptor;

    fn release(
        &self,
        data: &Dataset,
        noise: &mut dyn NoiseSource,
        sampler: &mut dyn RngCore,
    ) -> Result<f64, DpError>;
}

/// `countOf` over opted-in entries matching the query, optionally run on a
/// uniform subsample.
#[derive(Clone, Debug)]
pub struct CountMechanism {
    pub epsilon: f64,
    pub subsample_rate: f64,
}

impl CountMechanism {
    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            subsample_rate: 1.0,
        }
    }

    pub fn subsampled(epsilon: f64, q: f64) -> Self {
        Self {
            epsilon,
            subsample_rate: q,
        }
    }
}

impl Mechanism for CountMechanism {
    fn descriptor(&self) -> MechanismDescriptor {
        MechanismDescriptor {
            kind: "count".into(),
            epsilon: self.epsilon,
            sensitivity: 1.0,
            subsample_rate: self.subsample_rate,
        }
    }

    fn release(
        &self,
        data: &Dataset,
        noise: &mut dyn NoiseSource,
        sampler: &mut dyn RngCore,
    ) -> Result<f64, DpError> {
        let pred = |e: &ContributionRecord| e.opted_in && e.matches_query;
        if self.subsample_rate < 1.0 {
            let sample = subsample(data, self.subsample_rate, sampler)?;
            dp_count(&sample, pred, self.epsilon, noise)
        } else {
            dp_count(data, pred, self.epsilon, noise)
        }
    }
}

/// `sumOf` over opted-in entries with per-entry clamping.
#[derive(Clone, Debug)]
pub struct SumMechanism {
    pub epsilon: f64,
    pub cap: f64,
    pub subsample_rate: f64,
}

impl SumMechanism {
    pub fn new(epsilon: f64, cap: f64) -> Self {
        Self {
            epsilon,
            cap,
            subsample_rate: 1.0,
        }
    }

    pub fn subsampled(epsilon: f64, cap: f64, q: f64) -> Self {
        Self {
            epsilon,
            cap,
            subsample_rate: q,
        }
    }
}

impl Mechanism for SumMechanism {
    fn descriptor(&self) -> MechanismDescriptor {
        MechanismDescriptor {
            kind: "sum".into(),
            epsilon: self.epsilon,
            sensitivity: self.cap,
            subsample_rate: self.subsample_rate,
        }
    }

    fn release(
        &self,
        data: &Dataset,
        noise: &mut dyn NoiseSource,
        sampler: &mut dyn RngCore,
    ) -> Result<f64, DpError> {
        let sel = |e: &ContributionRecord| e.opted_in.then_some(e.value);
        if self.subsample_rate < 1.0 {
            let sample = subsample(data, self.subsample_rate, sampler)?;
            dp_sum(&sample, sel, self.cap, self.epsilon, noise)
        } else {
            dp_sum(data, sel, self.cap, self.epsilon, noise)
        }
    }
}

// Used by audit to sanity check a configuration before running it.
pub(crate) fn validate_descriptor(d: &MechanismDescriptor) -> Result<NoiseParams, DpError> {
    d.guarantee()?;
    PrivacyParams::pure(d.epsilon, d.sensitivity)?.laplace_noise()
}
