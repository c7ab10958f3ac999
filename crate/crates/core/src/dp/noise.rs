use rand::distr::Open01;
use rand::{Rng, RngCore};
use rand_distr::StandardNormal;

use super::params::{NoiseKind, NoiseParams};

/// Draws one noise value. Laplace uses the inverse CDF on an open-interval
/// uniform so the logarithm never sees zero.
pub fn sample_noise<R: Rng + ?Sized>(params: &NoiseParams, rng: &mut R) -> f64 {
    match params.kind {
        NoiseKind::Laplace => {
            let u: f64 = rng.sample(Open01);
            if u < 0.5 {
                params.scale * (2.0 * u).ln()
            } else {
                -params.scale * (2.0 * (1.0 - u)).ln()
            }
        }
        NoiseKind::Gaussian => {
            let z: f64 = rng.sample(StandardNormal);
            params.scale * z
        }
    }
}

/// Where mechanisms get their noise from. Any random generator is a noise
/// source; [`ZeroNoise`] is the stub used to check exact aggregates.
pub trait NoiseSource {
    fn draw(&mut self, params: &NoiseParams) -> f64;
}

impl<R: RngCore> NoiseSource for R {
    fn draw(&mut self, params: &NoiseParams) -> f64 {
        sample_noise(params, self)
    }
}

/// Noise stub: every draw is exactly zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn draw(&mut self, _params: &NoiseParams) -> f64 {
        0.0
    }
}
