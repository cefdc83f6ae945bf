//! Chosen-ciphertext key recovery against a device without the counter,
//! and the same attacker pointed at the protected interface.
//!
//! With `c = <a, s>` fixed, `Q(b - c)` is 1 exactly for `b` in the cyclic
//! window `[c + 65, c + 192]`, so the first 1 after a 0 sits at
//! `b = c + 65`. Collecting `n` such equations whose coefficient matrix is
//! invertible mod 2 pins down `s` by lifting one bit plane at a time.

use rand::Rng;

use crate::device::{challenge_vectors, DatapathConfig, DeviceState, Seed};
use crate::lwe::{decrypt_parts, dot, Params, SecretKey, Zq};
use crate::sampler::sample_zq_vec;
use crate::{Error, Result};

/// Offset of the first 1-response above `<a, s>`.
pub const THRESHOLD_OFFSET: u8 = 65;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleMode {
    /// Raw `(a, b)` decryption; exists only inside this harness.
    Unprotected,
    /// Seed interface; the counter advances after every query.
    Protected,
    /// Seed interface with the counter pinned. Regression guard only.
    StaticCounter,
}

/// A device under attack, counting queries.
#[derive(Debug)]
pub struct AttackOracle {
    params: Params,
    mode: OracleMode,
    state: DeviceState,
    queries: u64,
}

impl AttackOracle {
    pub fn new(params: Params, key: SecretKey, mode: OracleMode) -> Result<Self> {
        Ok(AttackOracle {
            params,
            mode,
            state: DeviceState::new(params, key, 0, DatapathConfig::serial())?,
            queries: 0,
        })
    }

    pub fn mode(&self) -> OracleMode {
        self.mode
    }

    pub fn queries(&self) -> u64 {
        self.queries
    }

    /// The device counter, which is public.
    pub fn counter(&self) -> u64 {
        self.state.counter()
    }

    pub fn query_ciphertext(&mut self, a: &[Zq], b: Zq) -> Result<bool> {
        if self.mode != OracleMode::Unprotected {
            return Err(Error::Protocol("raw ciphertext interface is disabled".into()));
        }
        Error::check_len("a", self.params.n(), a.len())?;
        self.queries += 1;
        Ok(self.state.decrypt_raw(a, b))
    }

    pub fn query_seed(&mut self, seed: &Seed, b_prime: Zq) -> Result<bool> {
        self.queries += 1;
        let counter = self.state.counter();
        let (bits, _) = self.state.respond(seed, &[b_prime])?;
        if self.mode == OracleMode::StaticCounter {
            self.state.pin_counter(counter);
        }
        Ok(bits[0])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Search {
    /// All 256 values of `b`.
    Scan,
    /// 8 queries, using `Q(x + 128) = !Q(x)`.
    Bisect,
}

/// Locates `b_hat`, the first `b` answered with 1 after a 0.
pub fn threshold_by<F: FnMut(Zq) -> Result<bool>>(mut probe: F, search: Search) -> Result<Zq> {
    match search {
        Search::Scan => {
            let answers = (0..=255u8).map(|b| probe(Zq(b))).collect::<Result<Vec<bool>>>()?;
            (0..256usize)
                .find(|&b| answers[b] && !answers[(b + 255) % 256])
                .map(|b| Zq(b as u8))
                .ok_or_else(|| Error::Protocol("responses never switch from 0 to 1".into()))
        }
        Search::Bisect => {
            // f(0) and f(128) differ, and f changes exactly once on [0, 128].
            let first = probe(Zq(0))?;
            let (mut lo, mut hi) = (0u8, 128u8);
            while hi - lo > 1 {
                let mid = lo + (hi - lo) / 2;
                if probe(Zq(mid))? == first {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            // A 1 -> 0 switch at `hi` means the 1-window started 128 earlier.
            Ok(if first { Zq(hi.wrapping_add(128)) } else { Zq(hi) })
        }
    }
}

/// `b_hat` for a chosen `a` through the raw interface.
pub fn find_threshold(oracle: &mut AttackOracle, a: &[Zq], search: Search) -> Result<Zq> {
    threshold_by(|b| oracle.query_ciphertext(a, b), search)
}

/// Incremental GF(2) row echelon form over 160-bit rows.
#[derive(Clone, Debug, Default)]
pub struct Gf2Basis {
    /// (pivot bit, reduced row) pairs.
    rows: Vec<(usize, Vec<u64>)>,
}

fn parity_row(a: &[Zq]) -> Vec<u64> {
    let mut row = vec![0u64; a.len().div_ceil(64)];
    for (i, e) in a.iter().enumerate() {
        row[i / 64] |= ((e.0 & 1) as u64) << (i % 64);
    }
    row
}

impl Gf2Basis {
    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    /// Adds `a mod 2` if it is independent of the rows so far.
    pub fn insert(&mut self, a: &[Zq]) -> bool {
        let mut row = parity_row(a);
        for (pivot, basis) in &self.rows {
            if row[pivot / 64] >> (pivot % 64) & 1 == 1 {
                row.iter_mut().zip(basis).for_each(|(x, y)| *x ^= y);
            }
        }
        match row.iter().enumerate().find(|(_, w)| **w != 0) {
            Some((word, w)) => {
                self.rows.push((word * 64 + w.trailing_zeros() as usize, row));
                true
            }
            None => false,
        }
    }
}

/// Solves `A x = y` over GF(2) for square `A`; `None` if singular.
fn gf2_solve(a: &[Vec<u64>], y: &[bool], n: usize) -> Option<Vec<bool>> {
    let words = n.div_ceil(64) + 1;
    // Augment with y in the bit just past the last column.
    let mut m: Vec<Vec<u64>> = a
        .iter()
        .zip(y)
        .map(|(row, &rhs)| {
            let mut r = row.clone();
            r.resize(words, 0);
            r[n / 64] |= (rhs as u64) << (n % 64);
            r
        })
        .collect();
    let bit = |r: &Vec<u64>, c: usize| r[c / 64] >> (c % 64) & 1 == 1;
    for col in 0..n {
        let pivot = (col..m.len()).find(|&r| bit(&m[r], col))?;
        m.swap(col, pivot);
        let pivot_row = m[col].clone();
        for (r, row) in m.iter_mut().enumerate() {
            if r != col && bit(row, col) {
                row.iter_mut().zip(&pivot_row).for_each(|(x, p)| *x ^= p);
            }
        }
    }
    Some((0..n).map(|i| bit(&m[i], n)).collect())
}

/// Equations `<a_i, s> = c_i mod 256`.
#[derive(Clone, Debug, Default)]
pub struct LinearSystem {
    pub rows: Vec<(Vec<Zq>, Zq)>,
}

impl LinearSystem {
    pub fn push(&mut self, a: Vec<Zq>, c: Zq) {
        self.rows.push((a, c));
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Recovers `s` from `n` equations: solve mod 2, subtract, halve, repeat
/// for each of the 8 bit planes.
pub fn solve_key(system: &LinearSystem, n: usize) -> Result<SecretKey> {
    let mut basis = Gf2Basis::default();
    let chosen: Vec<&(Vec<Zq>, Zq)> = system
        .rows
        .iter()
        .filter(|(a, _)| a.len() == n && basis.rank() < n && basis.insert(a))
        .collect();
    if chosen.len() < n {
        return Err(Error::Config(format!("equations have rank {} mod 2, need {n}", chosen.len())));
    }
    let parity: Vec<Vec<u64>> = chosen.iter().map(|(a, _)| parity_row(a)).collect();
    let mut s = vec![Zq::ZERO; n];
    for plane in 0..8 {
        let y: Vec<bool> = chosen
            .iter()
            .map(|(a, c)| (*c - dot(a, &s)).0 >> plane & 1 == 1)
            .collect();
        let bits = gf2_solve(&parity, &y, n).expect("rows chosen independent");
        for (si, b) in s.iter_mut().zip(bits) {
            si.0 |= (b as u8) << plane;
        }
    }
    Ok(SecretKey::from_elems(s))
}

#[derive(Clone, Debug)]
pub struct AttackOutcome {
    pub key: SecretKey,
    pub queries: u64,
    /// Candidate vectors drawn, including ones rejected as dependent.
    pub candidates: usize,
}

/// Collects `n` independent equations through whichever interface the
/// oracle exposes, then solves them.
pub fn run_attack<R: Rng + ?Sized>(oracle: &mut AttackOracle, search: Search, rng: &mut R) -> Result<AttackOutcome> {
    let params = oracle.params;
    let n = params.n();
    let start = oracle.queries();
    let mut basis = Gf2Basis::default();
    let mut system = LinearSystem::default();
    let mut candidates = 0;
    while system.len() < n {
        candidates += 1;
        if oracle.mode() == OracleMode::Unprotected {
            let a = sample_zq_vec(n, rng);
            if !basis.insert(&a) {
                continue;
            }
            let b_hat = find_threshold(oracle, &a, search)?;
            system.push(a, b_hat - Zq(THRESHOLD_OFFSET));
        } else {
            // The attacker expands the seed at the counter it last saw and
            // assumes the vector stays put while it sweeps b'.
            let seed: Seed = rng.random();
            let a = challenge_vectors(&params, &seed, oracle.counter(), 1, 1).remove(0);
            if !basis.insert(&a) {
                continue;
            }
            let b_hat = threshold_by(|b| oracle.query_seed(&seed, b), search)?;
            system.push(a, b_hat - Zq(THRESHOLD_OFFSET));
        }
    }
    Ok(AttackOutcome {
        key: solve_key(&system, n)?,
        queries: oracle.queries() - start,
        candidates,
    })
}

/// Fraction of uniform random ciphertexts on which two keys decrypt alike.
pub fn clone_agreement<R: Rng + ?Sized>(a: &SecretKey, b: &SecretKey, trials: usize, rng: &mut R) -> f64 {
    let agree = (0..trials)
        .filter(|_| {
            let v = sample_zq_vec(a.n(), rng);
            let c = Zq(rng.random());
            decrypt_parts(&v, c, a.elems()) == decrypt_parts(&v, c, b.elems())
        })
        .count();
    agree as f64 / trials as f64
}

/// Fraction of differing bits between the first `bits` LFSR output bits
/// for the same seed at counters `t` and `t + 1`.
pub fn stream_divergence(seed: &Seed, counter: u64, bits: usize) -> f64 {
    let mut x = crate::lfsr::LfsrState::absorb(seed, counter);
    let mut y = crate::lfsr::LfsrState::absorb(seed, counter + 1);
    let differ = (0..bits).filter(|_| x.step_serial() != y.step_serial()).count();
    differ as f64 / bits as f64
}

/// What the attacker gets out of the protected interface.
#[derive(Clone, Debug)]
pub struct ProtectedReport {
    pub queries: u64,
    /// Same seed probed twice: did the underlying `a'` change?
    pub a_prime_changed: bool,
    pub stream_divergence: f64,
    /// Thresholds found for one seed on two consecutive sweeps.
    pub repeat_thresholds: (Zq, Zq),
    pub key_recovered: bool,
    pub clone_agreement: f64,
}

pub fn attack_protected<R: Rng + ?Sized>(
    oracle: &mut AttackOracle,
    truth: &SecretKey,
    search: Search,
    clone_trials: usize,
    rng: &mut R,
) -> Result<ProtectedReport> {
    let params = oracle.params;
    let start = oracle.queries();
    let seed: Seed = rng.random();
    let before = challenge_vectors(&params, &seed, oracle.counter(), 1, 1).remove(0);
    let first = threshold_by(|b| oracle.query_seed(&seed, b), search)?;
    let after = challenge_vectors(&params, &seed, oracle.counter(), 1, 1).remove(0);
    let second = threshold_by(|b| oracle.query_seed(&seed, b), search)?;
    let outcome = run_attack(oracle, search, rng)?;
    Ok(ProtectedReport {
        queries: oracle.queries() - start,
        a_prime_changed: before != after,
        stream_divergence: stream_divergence(&seed, 0, params.key_bits()),
        repeat_thresholds: (first, second),
        key_recovered: &outcome.key == truth,
        clone_agreement: clone_agreement(&outcome.key, truth, clone_trials, rng),
    })
}
