//! A simulated SRAM power-up key: fixed enrollment bits plus noisy reads in
//! which every cell flips independently with the same probability.

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::sampler::sample_bits;
use crate::{Error, Result};

/// Cells in the deployed array: 10 blocks of 212 codeword bits, tripled.
pub const POK_BITS: usize = 6360;
pub const DEFAULT_BER: f64 = 0.05;

#[derive(Clone, Debug, PartialEq)]
pub struct PokArray {
    truth: Vec<bool>,
    ber: f64,
}

impl PokArray {
    pub fn new<R: Rng + ?Sized>(len: usize, ber: f64, rng: &mut R) -> Result<Self> {
        PokArray::from_truth(sample_bits(len, rng), ber)
    }

    pub fn from_truth(truth: Vec<bool>, ber: f64) -> Result<Self> {
        if !(0.0..0.5).contains(&ber) {
            return Err(Error::Config(format!("bit error rate {ber} outside [0, 0.5)")));
        }
        Ok(PokArray { truth, ber })
    }

    /// Enrollment-time power-up values. Only the one-time enrollment
    /// interface should touch these.
    pub fn truth(&self) -> &[bool] {
        &self.truth
    }

    pub fn ber(&self) -> f64 {
        self.ber
    }

    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }

    /// One power-up read.
    pub fn read<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<bool> {
        if self.ber == 0.0 {
            return self.truth.clone();
        }
        let flip = Bernoulli::new(self.ber).expect("ber validated");
        self.truth.iter().map(|&b| b ^ flip.sample(rng)).collect()
    }
}

/// The deployed array size at the default error rate.
pub fn pok_new<R: Rng + ?Sized>(rng: &mut R) -> PokArray {
    PokArray::new(POK_BITS, DEFAULT_BER, rng).expect("default error rate is valid")
}

pub fn pok_read<R: Rng + ?Sized>(pok: &PokArray, rng: &mut R) -> Vec<bool> {
    pok.read(rng)
}
