//! The 256-bit Fibonacci LFSR that expands a challenge seed into `a'`.
//!
//! Register bits are numbered `X_0 .. X_255`. Each serial step emits `X_255`,
//! shifts every bit up one position and loads the feedback
//! `X_255 ^ X_253 ^ X_250 ^ X_245` into `X_0`.
//!
//! Unrolling by `u` computes the next `u` feedback bits from the current
//! register in one step: the feedback of the `k`-th serial cycle reads taps
//! shifted down by `k`, which stays inside the current register only while
//! `k` does not exceed the lowest tap. Combined with the byte-wide MAC array
//! (which needs power-of-two widths), this bounds the unroll factor at the
//! largest power of two not exceeding `lowest_tap + 1`: 128 for the deployed
//! taps, 8 for a polynomial whose lowest tap is `X_7`.

use crate::{Error, Result};

pub const REGISTER_BITS: usize = 256;
pub const TAPS: [usize; 4] = [255, 253, 250, 245];
pub const SEED_BYTES: usize = 32;
pub const COUNTER_BITS: usize = 64;
/// Serial cycles needed to load `seed || counter`.
pub const ABSORB_CYCLES: usize = SEED_BYTES * 8 + COUNTER_BITS;

/// Shifted in after an absorption that left the register all-zero.
const ZERO_STATE_PAD: u64 = 0x9e37_79b9_7f4a_7c15;

/// A 256-bit register, little-endian words: bit `i` is `X_i`.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Debug)]
struct Reg([u64; 4]);

impl Reg {
    #[inline]
    fn bit(&self, i: usize) -> bool {
        self.0[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    fn set(&mut self, i: usize, v: bool) {
        let mask = 1u64 << (i % 64);
        if v {
            self.0[i / 64] |= mask;
        } else {
            self.0[i / 64] &= !mask;
        }
    }

    fn is_zero(&self) -> bool {
        self.0 == [0; 4]
    }

    #[inline]
    fn shl(&self, n: usize) -> Reg {
        debug_assert!(n < REGISTER_BITS);
        let (words, bits) = (n / 64, n % 64);
        let mut out = [0u64; 4];
        for i in (words..4).rev() {
            let src = i - words;
            out[i] = self.0[src] << bits;
            if bits != 0 && src > 0 {
                out[i] |= self.0[src - 1] >> (64 - bits);
            }
        }
        Reg(out)
    }

    #[inline]
    fn shr(&self, n: usize) -> Reg {
        debug_assert!(n < REGISTER_BITS);
        let (words, bits) = (n / 64, n % 64);
        let mut out = [0u64; 4];
        for (i, word) in out.iter_mut().enumerate().take(4 - words) {
            let src = i + words;
            *word = self.0[src] >> bits;
            if bits != 0 && src + 1 < 4 {
                *word |= self.0[src + 1] << (64 - bits);
            }
        }
        Reg(out)
    }

    /// The low 128 bits.
    #[inline]
    fn low128(&self) -> u128 {
        self.0[0] as u128 | (self.0[1] as u128) << 64
    }

    #[inline]
    fn or_low128(&mut self, x: u128) {
        self.0[0] |= x as u64;
        self.0[1] |= (x >> 64) as u64;
    }
}

#[inline]
fn low_mask(u: usize) -> u128 {
    if u == 128 {
        u128::MAX
    } else {
        (1u128 << u) - 1
    }
}

/// Largest supported unroll factor for a tap set.
pub fn max_unroll(taps: &[usize]) -> usize {
    let lowest = taps.iter().copied().min().unwrap_or(0);
    let limit = (lowest + 1).min(128);
    1 << (usize::BITS - 1 - limit.leading_zeros())
}

/// An unroll factor validated against a tap set.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct UnrollFactor(usize);

impl UnrollFactor {
    pub fn new(u: usize, taps: &[usize]) -> Result<Self> {
        let max = max_unroll(taps);
        if u == 0 || u > max {
            return Err(Error::Config(format!(
                "unroll factor {u} outside 1..={max} for taps {taps:?}"
            )));
        }
        Ok(UnrollFactor(u))
    }

    pub fn get(self) -> usize {
        self.0
    }
}

/// Register contents plus the tap set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LfsrState {
    reg: Reg,
    taps: Vec<usize>,
    padded: bool,
}

impl LfsrState {
    /// A register loaded directly with `bits` (`bits[i]` is `X_i`).
    pub fn from_bits(bits: &[bool], taps: &[usize]) -> Result<Self> {
        Error::check_len("register bits", REGISTER_BITS, bits.len())?;
        validate_taps(taps)?;
        let mut reg = Reg::default();
        for (i, &b) in bits.iter().enumerate() {
            reg.set(i, b);
        }
        Ok(LfsrState {
            reg,
            taps: taps.to_vec(),
            padded: false,
        })
    }

    /// A register loaded from four little-endian words.
    pub fn from_words(words: [u64; 4]) -> Self {
        LfsrState {
            reg: Reg(words),
            taps: TAPS.to_vec(),
            padded: false,
        }
    }

    /// Loads `seed || counter` serially from the all-zero register, each
    /// input bit XOR-ed into the feedback. Seed bytes go first, LSB-first,
    /// then the counter from its least significant bit.
    ///
    /// An absorption that ends in the all-zero register (the zero fixed
    /// point, or any input in the kernel of the load map) is followed by a
    /// fixed 64-bit pad; [`LfsrState::was_padded`] reports that event.
    pub fn absorb(seed: &[u8; SEED_BYTES], counter: u64) -> Self {
        let mut state = LfsrState {
            reg: Reg::default(),
            taps: TAPS.to_vec(),
            padded: false,
        };
        let seed_bits = (0..SEED_BYTES * 8).map(|i| seed[i / 8] >> (i % 8) & 1 == 1);
        let counter_bits = (0..COUNTER_BITS).map(|j| counter >> j & 1 == 1);
        for bit in seed_bits.chain(counter_bits) {
            state.shift_in(bit);
        }
        if state.reg.is_zero() {
            log::warn!("LFSR absorption reached the zero state; applying pad");
            for j in 0..64 {
                state.shift_in(ZERO_STATE_PAD >> j & 1 == 1);
            }
            state.padded = true;
        }
        state
    }

    fn shift_in(&mut self, input: bool) {
        let fb = self.feedback() ^ input;
        self.reg = self.reg.shl(1);
        self.reg.set(0, fb);
    }

    #[inline]
    fn feedback(&self) -> bool {
        self.taps.iter().fold(false, |acc, &t| acc ^ self.reg.bit(t))
    }

    pub fn was_padded(&self) -> bool {
        self.padded
    }

    pub fn is_zero(&self) -> bool {
        self.reg.is_zero()
    }

    pub fn taps(&self) -> &[usize] {
        &self.taps
    }

    pub fn bits(&self) -> Vec<bool> {
        (0..REGISTER_BITS).map(|i| self.reg.bit(i)).collect()
    }

    pub fn words(&self) -> [u64; 4] {
        self.reg.0
    }

    pub fn max_unroll(&self) -> usize {
        max_unroll(&self.taps)
    }

    /// One serial cycle; returns the emitted bit `X_255`.
    pub fn step_serial(&mut self) -> bool {
        let out = self.reg.bit(REGISTER_BITS - 1);
        let fb = self.feedback();
        self.reg = self.reg.shl(1);
        self.reg.set(0, fb);
        out
    }

    /// `u` serial cycles computed in one step. Bit `k` of the result is the
    /// `k`-th emitted bit.
    #[inline]
    pub(crate) fn step_block(&mut self, u: usize) -> u128 {
        debug_assert!(u >= 1 && u <= self.max_unroll());
        let mask = low_mask(u);
        // Feedback of serial cycle k sits at position u - 1 - k and reads
        // X_{tap - k}; aligned, that is (reg >> (tap - u + 1)) masked to u bits.
        let fb = self
            .taps
            .iter()
            .fold(0u128, |acc, &t| acc ^ self.reg.shr(t + 1 - u).low128())
            & mask;
        // Cycle k emits X_{255 - k}: the top u bits, reversed.
        let top = self.reg.shr(REGISTER_BITS - u).low128() & mask;
        let emitted = top.reverse_bits() >> (128 - u);
        self.reg = self.reg.shl(u);
        self.reg.or_low128(fb);
        emitted
    }

    /// `u` serial cycles in one unrolled step.
    pub fn step_unrolled(&mut self, u: usize) -> Result<Vec<bool>> {
        let u = UnrollFactor::new(u, &self.taps)?.get();
        let word = self.step_block(u);
        Ok((0..u).map(|k| word >> k & 1 == 1).collect())
    }

    /// Emits `byte_count` bytes; the first emitted bit is the LSB of the
    /// first byte. Consumes exactly `8 * byte_count` serial cycles.
    pub fn expand(&mut self, byte_count: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(byte_count);
        self.expand_into(byte_count, &mut out);
        out
    }

    pub(crate) fn expand_into(&mut self, byte_count: usize, out: &mut Vec<u8>) {
        let block_bytes = (self.max_unroll() / 8).max(1);
        let mut remaining = byte_count;
        if self.max_unroll() < 8 {
            for _ in 0..byte_count {
                let mut byte = 0u8;
                for j in 0..8 {
                    byte |= (self.step_serial() as u8) << j;
                }
                out.push(byte);
            }
            return;
        }
        while remaining > 0 {
            let take = remaining.min(block_bytes);
            let word = self.step_block(take * 8);
            out.extend_from_slice(&word.to_le_bytes()[..take]);
            remaining -= take;
        }
    }
}

fn validate_taps(taps: &[usize]) -> Result<()> {
    if taps.is_empty() || taps.iter().any(|&t| t >= REGISTER_BITS) {
        return Err(Error::Config(format!("invalid tap set {taps:?}")));
    }
    if !taps.contains(&(REGISTER_BITS - 1)) {
        return Err(Error::Config("tap set must include X_255".into()));
    }
    Ok(())
}
