//! Randomness for every experiment, plus the discrete Gaussian error
//! distribution `Psi_alpha` and its analytic decryption-error predictor.
//!
//! All randomness flows from [`PufRng`], a ChaCha20 stream seeded from a
//! 64-bit value, so every experiment is reproducible bit-for-bit. Parallel
//! consumers take independent streams via [`rng_stream`].

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};
use statrs::function::erf::erfc;

use crate::lwe::{Params, Zq};

/// The deterministic generator standing in for the device TRNG.
pub type PufRng = ChaCha20Rng;

pub fn rng_from_seed(seed: u64) -> PufRng {
    PufRng::seed_from_u64(seed)
}

/// An independent stream of the generator seeded with `seed`.
pub fn rng_stream(seed: u64, stream: u64) -> PufRng {
    let mut rng = PufRng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Rounded Gaussian with `sigma = alpha q / sqrt(2 pi)`, reduced mod `q`.
#[derive(Clone, Debug)]
pub struct ErrorSampler {
    normal: Option<Normal<f64>>,
}

impl ErrorSampler {
    pub fn new(params: &Params) -> Self {
        let sigma = params.sigma();
        let normal = (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"));
        ErrorSampler { normal }
    }

    /// The signed value before reduction. `f64::round` breaks ties away from zero.
    pub fn sample_signed<R: RngCore + ?Sized>(&self, rng: &mut R) -> i64 {
        match &self.normal {
            Some(normal) => normal.sample(rng).round() as i64,
            None => 0,
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, rng: &mut R) -> Zq {
        Zq::from_i64(self.sample_signed(rng))
    }

    pub fn sample_vec<R: RngCore + ?Sized>(&self, len: usize, rng: &mut R) -> Vec<Zq> {
        (0..len).map(|_| self.sample(rng)).collect()
    }
}

/// One draw from `Psi_alpha`. Prefer [`ErrorSampler`] in loops.
pub fn sample_error<R: RngCore + ?Sized>(params: &Params, rng: &mut R) -> Zq {
    ErrorSampler::new(params).sample(rng)
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `2 (1 - Phi(sqrt(pi) / (2 alpha sqrt(m))))`.
pub fn predicted_error_rate(params: &Params) -> f64 {
    if params.alpha() == 0.0 {
        return 0.0;
    }
    let z = std::f64::consts::PI.sqrt() / (2.0 * params.alpha() * (params.m() as f64).sqrt());
    // 2 (1 - Phi(z)) = erfc(z / sqrt 2), without the cancellation.
    erfc(z / std::f64::consts::SQRT_2)
}

pub fn sample_bits<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<bool> {
    (0..count).map(|_| rng.random()).collect()
}

pub fn sample_bytes<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<u8> {
    let mut out = vec![0u8; count];
    rng.fill_bytes(&mut out);
    out
}

pub fn sample_zq_vec<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<Zq> {
    sample_bytes(count, rng).into_iter().map(Zq).collect()
}
