//! Server-side CRP generation: the full LWE cryptosystem and the relaxed
//! encryption that pairs an LFSR-expanded `a'` with a scalar `b'`.

use rand::Rng;

use crate::device::{challenge_vectors, DatapathConfig, Seed};
use crate::lwe::{dot, Ciphertext, Params, SecretKey, Zq};
use crate::sampler::{sample_bits, sample_zq_vec, ErrorSampler};
use crate::{Error, Result};

/// `(A, b = A s + e)` with `A` stored row-major, `m` rows of `n`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicKey {
    rows: Vec<Vec<Zq>>,
    b: Vec<Zq>,
}

impl PublicKey {
    pub fn rows(&self) -> &[Vec<Zq>] {
        &self.rows
    }

    pub fn b(&self) -> &[Zq] {
        &self.b
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }
}

pub fn keygen<R: Rng + ?Sized>(params: &Params, rng: &mut R) -> (SecretKey, PublicKey) {
    let key = SecretKey::from_elems(sample_zq_vec(params.n(), rng));
    let pk = public_key_for(params, &key, rng);
    (key, pk)
}

/// A fresh public key for an existing secret.
pub fn public_key_for<R: Rng + ?Sized>(params: &Params, key: &SecretKey, rng: &mut R) -> PublicKey {
    let sampler = ErrorSampler::new(params);
    let rows: Vec<Vec<Zq>> = (0..params.m()).map(|_| sample_zq_vec(params.n(), rng)).collect();
    let b = rows
        .iter()
        .map(|row| dot(row, key.elems()) + sampler.sample(rng))
        .collect();
    PublicKey { rows, b }
}

/// Encrypts `r` with a uniformly drawn selection vector.
pub fn encrypt_full<R: Rng + ?Sized>(pk: &PublicKey, r: bool, rng: &mut R) -> Ciphertext {
    let x = sample_bits(pk.m(), rng);
    encrypt_with_selection(pk, r, &x).expect("selection sized from the key")
}

/// `(A^T x, b^T x + r floor(q/2))`.
pub fn encrypt_with_selection(pk: &PublicKey, r: bool, x: &[bool]) -> Result<Ciphertext> {
    Error::check_len("selection", pk.m(), x.len())?;
    let n = pk.rows.first().map_or(0, Vec::len);
    let mut a = vec![Zq::ZERO; n];
    let mut b = Zq::encode_bit(r);
    for (i, _) in x.iter().enumerate().filter(|(_, &sel)| sel) {
        for (acc, &v) in a.iter_mut().zip(&pk.rows[i]) {
            *acc += v;
        }
        b += pk.b[i];
    }
    Ok(Ciphertext { a, b })
}

/// `<a', s> + e^T x + r floor(q/2)` for given noise and selection.
pub fn relaxed_with(key: &SecretKey, r: bool, a_prime: &[Zq], noise: &[Zq], x: &[bool]) -> Result<Zq> {
    Error::check_len("a'", key.n(), a_prime.len())?;
    Error::check_len("selection", noise.len(), x.len())?;
    let accumulated: Zq = noise.iter().zip(x).filter(|(_, &sel)| sel).map(|(&e, _)| e).sum();
    Ok(dot(a_prime, key.elems()) + accumulated + Zq::encode_bit(r))
}

/// Relaxed encryption with fresh `e` and `x`.
pub fn encrypt_relaxed<R: Rng + ?Sized>(
    params: &Params,
    key: &SecretKey,
    r: bool,
    a_prime: &[Zq],
    rng: &mut R,
) -> Result<Zq> {
    let noise = ErrorSampler::new(params).sample_vec(params.m(), rng);
    let x = sample_bits(params.m(), rng);
    relaxed_with(key, r, a_prime, &noise, &x)
}

/// Where the error vector of an L-bit CRP comes from.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub enum NoisePolicy {
    /// A new `e` for each CRP, shared by its L bits. Bit errors within a
    /// CRP are then correlated through `sum(e)`.
    #[default]
    FreshPerCrp,
    /// A new `e` for every bit; bit errors are independent.
    FreshPerBit,
    /// One `e` for the lifetime of the device, like a public-key residue.
    Fixed(Vec<Zq>),
}

/// A server-held L-bit challenge-response pair.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LbitCrp {
    pub seed: Seed,
    pub counter: u64,
    pub b_prime: Vec<Zq>,
    /// Plaintext bits; a genuine device reproduces them up to decryption errors.
    pub r: Vec<bool>,
    used: bool,
}

impl LbitCrp {
    pub fn new(seed: Seed, counter: u64, b_prime: Vec<Zq>, r: Vec<bool>, used: bool) -> Result<Self> {
        if b_prime.is_empty() {
            return Err(Error::shape("b'", 1, 0));
        }
        Error::check_len("r", b_prime.len(), r.len())?;
        Ok(LbitCrp {
            seed,
            counter,
            b_prime,
            r,
            used,
        })
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn is_used(&self) -> bool {
        self.used
    }

    /// Consumes the CRP. Returns `false` if it was already used.
    pub fn mark_used(&mut self) -> bool {
        !std::mem::replace(&mut self.used, true)
    }

    /// Bits on the wire for the challenge: seed plus one element per bit.
    pub fn payload_bits(&self) -> usize {
        8 * self.seed.len() + 8 * self.b_prime.len()
    }
}

/// Generates L-bit CRPs for one key.
#[derive(Clone, Debug)]
pub struct CrpGenerator {
    params: Params,
    sampler: ErrorSampler,
    noise: NoisePolicy,
}

impl CrpGenerator {
    pub fn new(params: Params, noise: NoisePolicy) -> Result<Self> {
        if let NoisePolicy::Fixed(e) = &noise {
            Error::check_len("fixed noise", params.m(), e.len())?;
        }
        Ok(CrpGenerator {
            sampler: ErrorSampler::new(&params),
            params,
            noise,
        })
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn generate<R: Rng + ?Sized>(
        &self,
        key: &SecretKey,
        len: usize,
        seed: Seed,
        counter: u64,
        config: &DatapathConfig,
        rng: &mut R,
    ) -> Result<LbitCrp> {
        if len == 0 {
            return Err(Error::shape("L", 1, 0));
        }
        let vectors = challenge_vectors(&self.params, &seed, counter, len, config.p1());
        let r = sample_bits(len, rng);
        let m = self.params.m();
        let mut noise = match &self.noise {
            NoisePolicy::FreshPerCrp => self.sampler.sample_vec(m, rng),
            NoisePolicy::FreshPerBit => Vec::new(),
            NoisePolicy::Fixed(e) => e.clone(),
        };
        let mut b_prime = Vec::with_capacity(len);
        for (a, &bit) in vectors.iter().zip(&r) {
            if self.noise == NoisePolicy::FreshPerBit {
                noise = self.sampler.sample_vec(m, rng);
            }
            let x = sample_bits(m, rng);
            b_prime.push(relaxed_with(key, bit, a, &noise, &x)?);
        }
        LbitCrp::new(seed, counter, b_prime, r, false)
    }
}

/// One L-bit CRP with fresh noise.
pub fn gen_lbit_crp<R: Rng + ?Sized>(
    params: &Params,
    key: &SecretKey,
    len: usize,
    seed: Seed,
    counter: u64,
    config: &DatapathConfig,
    rng: &mut R,
) -> Result<LbitCrp> {
    CrpGenerator::new(*params, NoisePolicy::FreshPerCrp)?.generate(key, len, seed, counter, config, rng)
}
