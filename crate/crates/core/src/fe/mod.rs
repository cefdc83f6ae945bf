//! Code-offset fuzzy extractor over a concatenated code: a shortened BCH
//! outer code per key block, each codeword bit repeated by an inner
//! repetition code.
//!
//! Raw POK bits are laid out block-major: block `b` spans
//! `[b * n_out * n_in, (b + 1) * n_out * n_in)` and codeword bit `i` of that
//! block occupies the `n_in` cells starting at `i * n_in`. The helper data is
//! `ConcatEncode(key) xor truth` in the same layout.

pub mod bch;
pub mod gf256;
pub mod pok;
pub mod repetition;

use rand::Rng;
use rayon::prelude::*;

use crate::bits::{pack_lsb, unpack_lsb};
use crate::lwe::SecretKey;
use crate::sampler::sample_bits;
use crate::{Error, Result};

pub use bch::{Bch, DecodeFailure, Decoded};
pub use pok::{pok_new, pok_read, PokArray, DEFAULT_BER, POK_BITS};

/// Concatenated code parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EccConfig {
    /// Shortened BCH length.
    pub outer_len: usize,
    pub msg_len: usize,
    pub t: usize,
    /// Repetition length; 1 disables the inner code.
    pub inner_len: usize,
    pub blocks: usize,
}

impl EccConfig {
    /// `[212, 128, 11]` outer, `[3, 1, 1]` inner, 10 blocks.
    pub const fn lattice_puf() -> Self {
        EccConfig {
            outer_len: 212,
            msg_len: 128,
            t: 11,
            inner_len: 3,
            blocks: 10,
        }
    }

    /// The configuration sized for a given POK error rate (1, 5, 10 or 15%).
    pub fn for_ber_percent(percent: u32) -> Option<Self> {
        let (outer_len, t, inner_len) = match percent {
            1 => (236, 14, 1),
            5 => (212, 11, 3),
            10 => (220, 12, 5),
            15 => (244, 15, 7),
            _ => return None,
        };
        Some(EccConfig {
            outer_len,
            msg_len: 128,
            t,
            inner_len,
            blocks: 10,
        })
    }

    pub fn with_inner_len(self, inner_len: usize) -> Self {
        EccConfig { inner_len, ..self }
    }

    pub fn key_bits(&self) -> usize {
        self.blocks * self.msg_len
    }

    pub fn raw_bits(&self) -> usize {
        self.blocks * self.outer_len * self.inner_len
    }

    pub fn helper_bytes(&self) -> usize {
        self.raw_bits().div_ceil(8)
    }

    fn block_bits(&self) -> usize {
        self.outer_len * self.inner_len
    }
}

impl Default for EccConfig {
    fn default() -> Self {
        EccConfig::lattice_puf()
    }
}

/// `1 - (1 - P_block)^blocks` with
/// `P_block = P[Binomial(n_out, p_inner) > t]` and `p_inner` the
/// post-majority error rate of the inner code.
pub fn analytic_failure_rate(config: &EccConfig, ber: f64) -> f64 {
    let p_inner = repetition::post_majority_ber(ber, config.inner_len);
    let p_block = repetition::binomial_upper_tail(config.outer_len, p_inner, config.t);
    -(config.blocks as f64 * (-p_block).ln_1p()).exp_m1()
}

/// Public reconstruction mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HelperData {
    bits: Vec<bool>,
}

impl HelperData {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        HelperData { bits }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    /// LSB-first packing (795 bytes for the deployed layout).
    pub fn to_bytes(&self) -> Vec<u8> {
        pack_lsb(&self.bits)
    }

    pub fn from_bytes(bytes: &[u8], bit_len: usize) -> Result<Self> {
        Error::check_len("helper bytes", bit_len.div_ceil(8), bytes.len())?;
        Ok(HelperData {
            bits: unpack_lsb(bytes, bit_len),
        })
    }
}

#[derive(Clone, Debug)]
pub struct FuzzyExtractor {
    config: EccConfig,
    outer: Bch,
}

impl FuzzyExtractor {
    pub fn new(config: EccConfig) -> Result<Self> {
        if config.inner_len.is_multiple_of(2) || config.blocks == 0 {
            return Err(Error::Config(format!("unsupported ECC layout {config:?}")));
        }
        let outer = Bch::new(config.t, config.msg_len)?;
        if outer.len() != config.outer_len {
            return Err(Error::Config(format!(
                "t = {} with {} message bits gives length {}, not {}",
                config.t,
                config.msg_len,
                outer.len(),
                config.outer_len
            )));
        }
        Ok(FuzzyExtractor { config, outer })
    }

    pub fn lattice_puf() -> Self {
        FuzzyExtractor::new(EccConfig::lattice_puf()).expect("deployed preset is valid")
    }

    pub fn config(&self) -> &EccConfig {
        &self.config
    }

    pub fn outer(&self) -> &Bch {
        &self.outer
    }

    /// Concatenated encoding of `key_bits()` bits into `raw_bits()` bits.
    pub fn encode(&self, key: &[bool]) -> Result<Vec<bool>> {
        Error::check_len("key bits", self.config.key_bits(), key.len())?;
        let mut out = Vec::with_capacity(self.config.raw_bits());
        for block in key.chunks(self.config.msg_len) {
            for bit in self.outer.encode(block)? {
                out.extend(repetition::encode(bit, self.config.inner_len));
            }
        }
        Ok(out)
    }

    /// Inverse of [`FuzzyExtractor::encode`] under noise. Blocks decode in
    /// parallel; the first failing block (by index) is reported.
    pub fn decode(&self, word: &[bool]) -> Result<Vec<bool>> {
        Error::check_len("raw bits", self.config.raw_bits(), word.len())?;
        let blocks: Vec<Result<Vec<bool>>> = word
            .par_chunks(self.config.block_bits())
            .enumerate()
            .map(|(b, chunk)| {
                let outer_word: Vec<bool> =
                    chunk.chunks(self.config.inner_len).map(repetition::decode).collect();
                match self.outer.decode(&outer_word)? {
                    Ok(decoded) => Ok(decoded.message),
                    Err(_) => Err(Error::Reconstruction { block: b }),
                }
            })
            .collect();
        let mut key = Vec::with_capacity(self.config.key_bits());
        for block in blocks {
            key.extend(block?);
        }
        Ok(key)
    }

    /// Draws a uniform key and masks its encoding with the enrollment bits.
    pub fn gen<R: Rng + ?Sized>(&self, truth: &[bool], rng: &mut R) -> Result<(SecretKey, HelperData)> {
        let key = sample_bits(self.config.key_bits(), rng);
        let helper = self.gen_with_key(truth, &key)?;
        Ok((SecretKey::from_bits(key)?, helper))
    }

    pub fn gen_with_key(&self, truth: &[bool], key: &[bool]) -> Result<HelperData> {
        Error::check_len("POK bits", self.config.raw_bits(), truth.len())?;
        let code = self.encode(key)?;
        Ok(HelperData {
            bits: code.iter().zip(truth).map(|(c, w)| c ^ w).collect(),
        })
    }

    pub fn rec(&self, read: &[bool], helper: &HelperData) -> Result<SecretKey> {
        Error::check_len("POK bits", self.config.raw_bits(), read.len())?;
        Error::check_len("helper bits", self.config.raw_bits(), helper.len())?;
        let noisy: Vec<bool> = read.iter().zip(&helper.bits).map(|(w, h)| w ^ h).collect();
        SecretKey::from_bits(self.decode(&noisy)?)
    }
}

/// Enrollment with the deployed code.
pub fn fe_gen<R: Rng + ?Sized>(pok: &PokArray, rng: &mut R) -> Result<(SecretKey, HelperData)> {
    FuzzyExtractor::lattice_puf().gen(pok.truth(), rng)
}

pub fn fe_rec(read: &[bool], helper: &HelperData) -> Result<SecretKey> {
    FuzzyExtractor::lattice_puf().rec(read, helper)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::hamming_weight;
    use crate::sampler::rng_from_seed;
    use rand::seq::index::sample;

    #[test]
    fn deployed_layout_sizes() {
        let c = EccConfig::lattice_puf();
        assert_eq!(c.key_bits(), 1280);
        assert_eq!(c.raw_bits(), 6360);
        assert_eq!(c.helper_bytes(), 795);
        assert_eq!(EccConfig::for_ber_percent(5), Some(c));
        for p in [1, 5, 10, 15] {
            let cfg = EccConfig::for_ber_percent(p).unwrap();
            assert_eq!(cfg.key_bits(), 1280);
            FuzzyExtractor::new(cfg).unwrap();
        }
        assert!(EccConfig::for_ber_percent(7).is_none());
    }

    #[test]
    fn analytic_rates() {
        let c = EccConfig::lattice_puf();
        assert_eq!(analytic_failure_rate(&c, 0.0), 0.0);
        let at5 = analytic_failure_rate(&c, 0.05);
        assert!(at5 <= 1e-6, "{at5}");
        assert!(at5 > 1e-7, "{at5}");
        let mut last = 0.0;
        for ber in [0.01, 0.03, 0.05, 0.08, 0.1, 0.15] {
            let r = analytic_failure_rate(&c, ber);
            assert!(r > last);
            last = r;
        }
        assert!(analytic_failure_rate(&c, 0.15) > 1e-6);
        let wide = EccConfig::for_ber_percent(15).unwrap();
        assert!(analytic_failure_rate(&wide, 0.15) < analytic_failure_rate(&c, 0.15));
    }

    #[test]
    fn noiseless_roundtrip() {
        let mut rng = rng_from_seed(71);
        let pok = PokArray::new(POK_BITS, 0.0, &mut rng).unwrap();
        let (key, helper) = fe_gen(&pok, &mut rng).unwrap();
        assert_eq!(fe_rec(pok.truth(), &helper).unwrap(), key);
        assert_eq!(helper.to_bytes().len(), 795);
        assert_eq!(HelperData::from_bytes(&helper.to_bytes(), 6360).unwrap(), helper);
    }

    #[test]
    fn mask_looks_uniform() {
        let mut rng = rng_from_seed(72);
        let pok = pok_new(&mut rng);
        let (_, helper) = fe_gen(&pok, &mut rng).unwrap();
        let frac = hamming_weight(helper.bits()) as f64 / 6360.0;
        assert!((frac - 0.5).abs() < 0.01, "{frac}");
    }

    #[test]
    fn same_key_different_devices() {
        let mut rng = rng_from_seed(73);
        let fe = FuzzyExtractor::lattice_puf();
        let key = sample_bits(1280, &mut rng);
        let a = pok_new(&mut rng);
        let b = pok_new(&mut rng);
        assert_ne!(
            fe.gen_with_key(a.truth(), &key).unwrap(),
            fe.gen_with_key(b.truth(), &key).unwrap()
        );
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let mut rng = rng_from_seed(74);
        let pok = pok_new(&mut rng);
        let (key, helper) = fe_gen(&pok, &mut rng).unwrap();
        let read = pok.read(&mut rng);
        let first = fe_rec(&read, &helper).unwrap();
        assert_eq!(first, key);
        assert_eq!(fe_rec(&read, &helper).unwrap(), first);
    }

    #[test]
    fn concatenated_roundtrip_at_the_limit() {
        // 11 triples per block get two flips (outer errors); every other
        // triple may take one flip, which the majority vote absorbs.
        let fe = FuzzyExtractor::lattice_puf();
        let mut rng = rng_from_seed(75);
        for _ in 0..200 {
            let key = sample_bits(1280, &mut rng);
            let mut word = fe.encode(&key).unwrap();
            for b in 0..10 {
                let base = b * 636;
                let broken = sample(&mut rng, 212, 11).into_vec();
                for triple in 0..212 {
                    let cells = base + 3 * triple;
                    if broken.contains(&triple) {
                        for j in sample(&mut rng, 3, 2) {
                            word[cells + j] ^= true;
                        }
                    } else if rng.random_bool(0.3) {
                        word[cells + rng.random_range(0..3)] ^= true;
                    }
                }
            }
            assert_eq!(fe.decode(&word).unwrap(), key);
        }
    }

    #[test]
    fn twelve_broken_triples_fail_or_miscorrect() {
        let fe = FuzzyExtractor::lattice_puf();
        let mut rng = rng_from_seed(76);
        let key = sample_bits(1280, &mut rng);
        let mut word = fe.encode(&key).unwrap();
        for triple in sample(&mut rng, 212, 30).into_vec() {
            for j in 0..2 {
                word[3 * triple + j] ^= true;
            }
        }
        match fe.decode(&word) {
            Err(Error::Reconstruction { block: 0 }) => {}
            Ok(k) => assert_ne!(k, key),
            Err(e) => panic!("unexpected {e}"),
        }
    }
}
