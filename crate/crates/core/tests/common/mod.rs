//! Independent reference models shared by the integration tests. Nothing
//! here calls into the library's LFSR or decryption code.

#![allow(dead_code)]

const TAPS: [usize; 4] = [255, 253, 250, 245];

/// Bit-at-a-time Fibonacci LFSR kept as a ring buffer, so that one shift
/// is an index move rather than a 256-bit copy.
pub struct RefLfsr {
    ring: [bool; 256],
    head: usize,
}

impl RefLfsr {
    fn bit(&self, i: usize) -> bool {
        self.ring[(self.head + i) % 256]
    }

    fn push(&mut self, b: bool) {
        self.head = (self.head + 255) % 256;
        self.ring[self.head] = b;
    }

    fn feedback(&self) -> bool {
        TAPS.iter().fold(false, |acc, &t| acc ^ self.bit(t))
    }

    pub fn from_words(words: [u64; 4]) -> Self {
        let mut ring = [false; 256];
        for (i, slot) in ring.iter_mut().enumerate() {
            *slot = words[i / 64] >> (i % 64) & 1 == 1;
        }
        RefLfsr { ring, head: 0 }
    }

    /// Zero register, then seed bytes LSB-first, then the counter LSB-first.
    pub fn absorb(seed: &[u8; 32], counter: u64) -> Self {
        let mut r = RefLfsr::from_words([0; 4]);
        let input = (0..256).map(|i| seed[i / 8] >> (i % 8) & 1 == 1).chain((0..64).map(|j| counter >> j & 1 == 1));
        for b in input {
            let fb = r.feedback() ^ b;
            r.push(fb);
        }
        assert!(r.ring.iter().any(|&b| b), "zero state after absorption");
        r
    }

    pub fn step(&mut self) -> bool {
        let out = self.bit(255);
        let fb = self.feedback();
        self.push(fb);
        out
    }

    pub fn next_byte(&mut self) -> u8 {
        (0..8).fold(0u8, |acc, j| acc | (self.step() as u8) << j)
    }
}

/// `1` iff `x` lies in `[q/4 + 1, 3q/4]` for `q = 256`.
pub fn ref_quantize(x: u8) -> bool {
    (65..=192).contains(&x)
}

/// Response bits for a compressed challenge, computed serially: bit `k`
/// comes from the LFSR loaded with counter `t + k % p1`, taking that
/// stream's `(k / p1)`-th run of `n` bytes.
pub fn ref_respond(key: &[u8], seed: &[u8; 32], counter: u64, b_prime: &[u8], p1: usize) -> Vec<bool> {
    let n = key.len();
    let mut lanes: Vec<RefLfsr> = (0..p1).map(|d| RefLfsr::absorb(seed, counter + d as u64)).collect();
    b_prime
        .iter()
        .enumerate()
        .map(|(k, &b)| {
            let lane = &mut lanes[k % p1];
            let mut acc: u32 = 0;
            for s in key.iter().take(n) {
                acc += lane.next_byte() as u32 * *s as u32;
            }
            ref_quantize(b.wrapping_sub((acc % 256) as u8))
        })
        .collect()
}
