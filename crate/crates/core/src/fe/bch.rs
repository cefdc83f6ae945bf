//! Binary narrow-sense BCH codes of length 255 over GF(2^8), shortened on
//! the message side, with a syndrome / Berlekamp-Massey / Chien decoder.
//!
//! Bit `i` of a codeword vector is the coefficient of `x^i`. Encoding is
//! systematic: parity occupies positions `0 .. r` and the message occupies
//! `r .. r + k`, where `r` is the generator degree. Shortening fixes the
//! top `255 - r - k` positions to zero and drops them.

use thiserror::Error;

use super::gf256::{Gf, ORDER};
use crate::{Error, Result};

pub const FULL_LENGTH: usize = ORDER;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum DecodeFailure {
    #[error("error locator degree {degree} exceeds t = {t}")]
    TooManyErrors { degree: usize, t: usize },
    #[error("error locator of degree {degree} has {roots} roots")]
    LocatorMismatch { degree: usize, roots: usize },
    #[error("correction lands in shortened position {0}")]
    ShortenedPosition(usize),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decoded {
    pub message: Vec<bool>,
    /// Number of bit positions flipped.
    pub corrected: usize,
}

#[derive(Clone, Debug)]
pub struct Bch {
    t: usize,
    msg_len: usize,
    parity_len: usize,
    /// Generator coefficients below the leading term.
    generator: u128,
}

impl Bch {
    /// The t-error-correcting code shortened to `msg_len` message bits.
    pub fn new(t: usize, msg_len: usize) -> Result<Self> {
        if t == 0 || 2 * t >= FULL_LENGTH {
            return Err(Error::Config(format!("unsupported t = {t}")));
        }
        let poly = generator_poly(t);
        let parity_len = poly.len() - 1;
        if parity_len >= 128 {
            return Err(Error::Config(format!("generator degree {parity_len} too large")));
        }
        if msg_len == 0 || parity_len + msg_len > FULL_LENGTH {
            return Err(Error::Config(format!(
                "message length {msg_len} exceeds dimension {}",
                FULL_LENGTH - parity_len
            )));
        }
        let generator = poly[..parity_len]
            .iter()
            .enumerate()
            .fold(0u128, |acc, (i, &c)| acc | (c as u128) << i);
        Ok(Bch {
            t,
            msg_len,
            parity_len,
            generator,
        })
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Shortened code length.
    pub fn len(&self) -> usize {
        self.parity_len + self.msg_len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn msg_len(&self) -> usize {
        self.msg_len
    }

    pub fn parity_len(&self) -> usize {
        self.parity_len
    }

    /// Dimension of the unshortened code.
    pub fn full_dimension(&self) -> usize {
        FULL_LENGTH - self.parity_len
    }

    /// Full generator polynomial, lowest coefficient first.
    pub fn generator(&self) -> Vec<bool> {
        (0..=self.parity_len)
            .map(|i| i == self.parity_len || self.generator >> i & 1 == 1)
            .collect()
    }

    pub fn encode(&self, msg: &[bool]) -> Result<Vec<bool>> {
        Error::check_len("BCH message", self.msg_len, msg.len())?;
        let top = 1u128 << (self.parity_len - 1);
        let mask = (1u128 << self.parity_len) - 1;
        let mut reg = 0u128;
        for &bit in msg.iter().rev() {
            let feedback = bit ^ (reg & top != 0);
            reg = (reg << 1) & mask;
            if feedback {
                reg ^= self.generator;
            }
        }
        let mut word = Vec::with_capacity(self.len());
        word.extend((0..self.parity_len).map(|i| reg >> i & 1 == 1));
        word.extend_from_slice(msg);
        Ok(word)
    }

    pub fn syndromes(&self, word: &[bool]) -> Vec<Gf> {
        let mut syn = vec![Gf::ZERO; 2 * self.t];
        for (i, _) in word.iter().enumerate().filter(|(_, &b)| b) {
            for (j, s) in syn.iter_mut().enumerate() {
                *s += Gf::alpha_pow(i * (j + 1));
            }
        }
        syn
    }

    /// Corrects up to `t` errors. Any locator that does not split into
    /// distinct in-range roots is reported as a failure.
    pub fn decode(&self, word: &[bool]) -> Result<std::result::Result<Decoded, DecodeFailure>> {
        Error::check_len("BCH word", self.len(), word.len())?;
        let syn = self.syndromes(word);
        let mut fixed = word.to_vec();
        let mut corrected = 0;
        if syn.iter().any(|s| !s.is_zero()) {
            let locator = berlekamp_massey(&syn);
            let degree = locator.len() - 1;
            if degree > self.t {
                return Ok(Err(DecodeFailure::TooManyErrors { degree, t: self.t }));
            }
            let roots = chien_search(&locator);
            if roots.len() != degree {
                return Ok(Err(DecodeFailure::LocatorMismatch {
                    degree,
                    roots: roots.len(),
                }));
            }
            if let Some(&pos) = roots.iter().find(|&&p| p >= self.len()) {
                return Ok(Err(DecodeFailure::ShortenedPosition(pos)));
            }
            for pos in roots {
                fixed[pos] = !fixed[pos];
            }
            corrected = degree;
        }
        Ok(Ok(Decoded {
            message: fixed[self.parity_len..].to_vec(),
            corrected,
        }))
    }
}

/// Product of the distinct minimal polynomials of `alpha^1 .. alpha^2t`.
fn generator_poly(t: usize) -> Vec<bool> {
    let mut covered = [false; FULL_LENGTH];
    let mut g = vec![Gf::ONE];
    for i in 1..=2 * t {
        if covered[i] {
            continue;
        }
        let mut j = i;
        loop {
            covered[j] = true;
            let root = Gf::alpha_pow(j);
            let mut next = vec![Gf::ZERO; g.len() + 1];
            for (k, &c) in g.iter().enumerate() {
                next[k + 1] += c;
                next[k] += c * root;
            }
            g = next;
            j = j * 2 % FULL_LENGTH;
            if j == i {
                break;
            }
        }
    }
    g.iter()
        .map(|c| {
            assert!(c.0 <= 1, "minimal polynomial product left GF(2)");
            c.0 == 1
        })
        .collect()
}

/// Error-locator polynomial, lowest coefficient first, trimmed to its degree.
fn berlekamp_massey(syn: &[Gf]) -> Vec<Gf> {
    let mut c = vec![Gf::ONE];
    let mut b = vec![Gf::ONE];
    let mut len = 0usize;
    let mut shift = 1usize;
    let mut last = Gf::ONE;
    for n in 0..syn.len() {
        let mut d = syn[n];
        for i in 1..=len.min(c.len() - 1) {
            d += c[i] * syn[n - i];
        }
        if d.is_zero() {
            shift += 1;
            continue;
        }
        let coef = d * last.inv().expect("nonzero discrepancy");
        let prev = c.clone();
        if c.len() < b.len() + shift {
            c.resize(b.len() + shift, Gf::ZERO);
        }
        for (i, &bi) in b.iter().enumerate() {
            c[i + shift] += coef * bi;
        }
        if 2 * len <= n {
            len = n + 1 - len;
            b = prev;
            last = d;
            shift = 1;
        } else {
            shift += 1;
        }
    }
    c.truncate(len + 1);
    c.resize(len + 1, Gf::ZERO);
    c
}

/// Positions `i` with `locator(alpha^-i) = 0`.
fn chien_search(locator: &[Gf]) -> Vec<usize> {
    (0..FULL_LENGTH)
        .filter(|&i| {
            let inv = (FULL_LENGTH - i) % FULL_LENGTH;
            locator
                .iter()
                .enumerate()
                .fold(Gf::ZERO, |acc, (k, &c)| acc + c * Gf::alpha_pow(inv * k))
                .is_zero()
        })
        .collect()
}
