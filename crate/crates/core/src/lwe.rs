//! Arithmetic over `Z_q` with `q = 256`, challenge and key bit packing, the
//! response quantizer and the LWE decryption function.
//!
//! Because `q` is a power of two, every ring operation is plain 8-bit
//! wrapping arithmetic; nothing here ever divides.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::{Error, Result};

/// Bits per `Z_q` element.
pub const LOG_Q: usize = 8;
/// The modulus. Elements are stored as `u8`, so this is the only supported value.
pub const Q: u32 = 1 << LOG_Q;

/// An element of `Z_256`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Zq(pub u8);

impl Zq {
    pub const ZERO: Zq = Zq(0);
    /// `floor(q / 2)`, the plaintext offset of a one bit.
    pub const HALF: Zq = Zq(128);

    #[inline]
    pub fn value(self) -> u8 {
        self.0
    }

    /// Representative in `[-128, 127]`.
    #[inline]
    pub fn signed(self) -> i16 {
        self.0 as i8 as i16
    }

    /// Reduces an arbitrary integer modulo 256.
    #[inline]
    pub fn from_i64(x: i64) -> Zq {
        Zq(x.rem_euclid(Q as i64) as u8)
    }

    /// `r * floor(q/2)`.
    #[inline]
    pub fn encode_bit(r: bool) -> Zq {
        if r {
            Zq::HALF
        } else {
            Zq::ZERO
        }
    }
}

impl fmt::Debug for Zq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for Zq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Add for Zq {
    type Output = Zq;
    #[inline]
    fn add(self, rhs: Zq) -> Zq {
        Zq(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for Zq {
    type Output = Zq;
    #[inline]
    fn sub(self, rhs: Zq) -> Zq {
        Zq(self.0.wrapping_sub(rhs.0))
    }
}

impl Mul for Zq {
    type Output = Zq;
    #[inline]
    fn mul(self, rhs: Zq) -> Zq {
        Zq(self.0.wrapping_mul(rhs.0))
    }
}

impl Neg for Zq {
    type Output = Zq;
    #[inline]
    fn neg(self) -> Zq {
        Zq(self.0.wrapping_neg())
    }
}

impl AddAssign for Zq {
    #[inline]
    fn add_assign(&mut self, rhs: Zq) {
        *self = *self + rhs;
    }
}

impl SubAssign for Zq {
    #[inline]
    fn sub_assign(&mut self, rhs: Zq) {
        *self = *self - rhs;
    }
}

impl Sum for Zq {
    fn sum<I: Iterator<Item = Zq>>(iter: I) -> Zq {
        iter.fold(Zq::ZERO, Add::add)
    }
}

/// LWE parameter set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Params {
    n: usize,
    m: usize,
    alpha: f64,
}

impl Params {
    /// The deployed parameter set: `n = 160`, `q = 256`, `m = 256`, `alpha = 2.2%`.
    pub const fn lattice_puf() -> Self {
        Params {
            n: 160,
            m: 256,
            alpha: 0.022,
        }
    }

    pub fn new(n: usize, m: usize, alpha: f64) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::Config("n and m must be positive".into()));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        Ok(Params { n, m, alpha })
    }

    pub fn with_alpha(self, alpha: f64) -> Result<Self> {
        Params::new(self.n, self.m, alpha)
    }

    /// Lattice dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of public-key rows combined per encryption.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> u32 {
        Q
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn log_q(&self) -> usize {
        LOG_Q
    }

    /// Challenge length `N = (n + 1) log q` (1288 for the deployed set).
    pub fn challenge_bits(&self) -> usize {
        (self.n + 1) * LOG_Q
    }

    /// Secret length `n log q` (1280 for the deployed set).
    pub fn key_bits(&self) -> usize {
        self.n * LOG_Q
    }

    /// Standard deviation of the continuous Gaussian behind the error
    /// distribution, `alpha * q / sqrt(2 pi)`.
    pub fn sigma(&self) -> f64 {
        self.alpha * Q as f64 / (2.0 * std::f64::consts::PI).sqrt()
    }
}

impl Default for Params {
    fn default() -> Self {
        Params::lattice_puf()
    }
}

/// The binary secret `W` together with its packed form `s`.
#[derive(Clone, PartialEq, Eq)]
pub struct SecretKey {
    bits: Vec<bool>,
    s: Vec<Zq>,
}

impl SecretKey {
    /// Packs `W` into `s`; `bits.len()` must be a multiple of 8.
    pub fn from_bits(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() || !bits.len().is_multiple_of(LOG_Q) {
            return Err(Error::Malformed(format!(
                "key length {} is not a positive multiple of {LOG_Q}",
                bits.len()
            )));
        }
        let s = bits.chunks(LOG_Q).map(pack_element).collect();
        Ok(SecretKey { bits, s })
    }

    pub fn from_elems(s: Vec<Zq>) -> Self {
        let bits = s
            .iter()
            .flat_map(|e| (0..LOG_Q).map(move |j| e.0 >> j & 1 == 1))
            .collect();
        SecretKey { bits, s }
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn elems(&self) -> &[Zq] {
        &self.s
    }

    pub fn n(&self) -> usize {
        self.s.len()
    }

    /// Returns a copy with bit `i` of `W` flipped.
    pub fn with_flipped_bit(&self, i: usize) -> SecretKey {
        let mut bits = self.bits.clone();
        bits[i] = !bits[i];
        SecretKey::from_bits(bits).expect("length unchanged")
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SecretKey").field("n", &self.s.len()).finish_non_exhaustive()
    }
}

/// A challenge in uncompressed form.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ciphertext {
    pub a: Vec<Zq>,
    pub b: Zq,
}

impl Ciphertext {
    /// The 161-byte serialization: `a_1 .. a_n` followed by `b`.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.a.iter().map(|e| e.0).chain(std::iter::once(self.b.0)).collect()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (b, a) = bytes.split_last().ok_or(Error::shape("ciphertext bytes", 2, 0))?;
        if a.is_empty() {
            return Err(Error::shape("ciphertext bytes", 2, 1));
        }
        Ok(Ciphertext {
            a: a.iter().copied().map(Zq).collect(),
            b: Zq(*b),
        })
    }
}

#[inline]
fn pack_element(chunk: &[bool]) -> Zq {
    Zq(chunk
        .iter()
        .enumerate()
        .fold(0u8, |acc, (j, &bit)| acc | (bit as u8) << j))
}

/// Interprets `N = (n + 1) log q` challenge bits as `(a, b)`, little-endian
/// within each 8-bit group.
pub fn pack_challenge(params: &Params, bits: &[bool]) -> Result<Ciphertext> {
    Error::check_len("challenge bits", params.challenge_bits(), bits.len())?;
    let mut elems: Vec<Zq> = bits.chunks(LOG_Q).map(pack_element).collect();
    let b = elems.pop().expect("n + 1 >= 2 elements");
    Ok(Ciphertext { a: elems, b })
}

/// Inverse of [`pack_challenge`].
pub fn unpack_challenge(ct: &Ciphertext) -> Vec<bool> {
    ct.a
        .iter()
        .chain(std::iter::once(&ct.b))
        .flat_map(|e| (0..LOG_Q).map(move |j| e.0 >> j & 1 == 1))
        .collect()
}

pub fn pack_key(params: &Params, bits: &[bool]) -> Result<SecretKey> {
    Error::check_len("key bits", params.key_bits(), bits.len())?;
    SecretKey::from_bits(bits.to_vec())
}

/// `sum a_i s_i mod q` without a length check.
#[inline]
pub(crate) fn dot(a: &[Zq], s: &[Zq]) -> Zq {
    let acc = a
        .iter()
        .zip(s)
        .fold(0u8, |acc, (x, y)| acc.wrapping_add(x.0.wrapping_mul(y.0)));
    Zq(acc)
}

/// The modular dot product `<a, s> mod q`.
pub fn mod_dot(a: &[Zq], key: &SecretKey) -> Result<Zq> {
    Error::check_len("a", key.n(), a.len())?;
    Ok(dot(a, key.elems()))
}

/// `Q(x) = 0` on `[0, 64] u [193, 255]`, `1` on `[65, 192]`.
#[inline]
pub fn quantize(x: Zq) -> bool {
    (65..=192).contains(&x.0)
}

/// `Q(b - <a, s>)`. Deterministic.
pub fn decrypt(ct: &Ciphertext, key: &SecretKey) -> Result<bool> {
    Ok(quantize(ct.b - mod_dot(&ct.a, key)?))
}

/// Decrypts a compressed-challenge scalar against an already expanded `a'`.
#[inline]
pub(crate) fn decrypt_parts(a: &[Zq], b: Zq, s: &[Zq]) -> bool {
    quantize(b - dot(a, s))
}
