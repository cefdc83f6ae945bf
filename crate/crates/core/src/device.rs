//! Device-side datapath: counter handling, LFSR expansion of `a'`, LWE
//! decryption per response bit and a cycle-level latency model of the
//! `(p1, p2)` parallel configurations.
//!
//! ## Stream assignment
//!
//! Datapath `d` in `0..p1` handles response bits `d, d + p1, d + 2 p1, ...`.
//! It absorbs `seed || (t + d)` and slices its output stream into
//! consecutive `n`-byte vectors, one per handled bit. [`challenge_vectors`]
//! is the single definition of this rule; CRP generation uses it too.
//!
//! ## Cycle accounting
//!
//! Per response bit a datapath first clocks the LFSR `ceil(8n / p2)` times,
//! filling the `a'` buffer, then runs `ceil(n / units)` MAC cycles where
//! `units = max(1, p2 / 8)` byte-wide MAC units each consume one element
//! per cycle. Partial sums are reduced combinationally in the last MAC
//! cycle. Seed loading costs [`SEED_LOAD_CYCLES`] and runs concurrently in
//! all datapaths, so it is paid once per transaction.

use std::fmt;

use rand::Rng;

use crate::fe::{FuzzyExtractor, HelperData, PokArray};
use crate::lfsr::{self, LfsrState, SEED_BYTES};
use crate::lwe::{quantize, Params, SecretKey, Zq};
use crate::{Error, Result};

pub const CLOCK_MHZ: f64 = 33.3;
/// MAC units (one per 8 LFSR output bits) the fabric can host.
pub const DEFAULT_MAC_BUDGET: usize = 256;
pub const SEED_LOAD_CYCLES: u64 = lfsr::ABSORB_CYCLES as u64;
/// Cycles per MAC step.
pub const MAC_CYCLES: u64 = 1;
/// Fixed per-bit overhead (quantize and hand-off overlap the last MAC cycle).
pub const FIXED_CYCLES: u64 = 0;

pub type Seed = [u8; SEED_BYTES];

/// Parallelism of the decryption engine.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DatapathConfig {
    p1: usize,
    p2: usize,
    clock_mhz: f64,
}

impl DatapathConfig {
    /// Validates `p2` against the LFSR polynomial and `p1 * p2` against
    /// [`DEFAULT_MAC_BUDGET`].
    pub fn new(p1: usize, p2: usize) -> Result<Self> {
        DatapathConfig::with_budget(p1, p2, DEFAULT_MAC_BUDGET)
    }

    pub fn with_budget(p1: usize, p2: usize, budget: usize) -> Result<Self> {
        if p1 == 0 {
            return Err(Error::Config("p1 must be at least 1".into()));
        }
        lfsr::UnrollFactor::new(p2, &lfsr::TAPS)?;
        if !p2.is_power_of_two() {
            return Err(Error::Config(format!("p2 = {p2} is not a power of two")));
        }
        if p1 * p2 > budget {
            return Err(Error::Config(format!(
                "p1 * p2 = {} exceeds the budget of {budget}",
                p1 * p2
            )));
        }
        Ok(DatapathConfig {
            p1,
            p2,
            clock_mhz: CLOCK_MHZ,
        })
    }

    pub const fn serial() -> Self {
        DatapathConfig {
            p1: 1,
            p2: 1,
            clock_mhz: CLOCK_MHZ,
        }
    }

    pub fn with_clock(self, clock_mhz: f64) -> Self {
        DatapathConfig { clock_mhz, ..self }
    }

    pub fn p1(&self) -> usize {
        self.p1
    }

    pub fn p2(&self) -> usize {
        self.p2
    }

    pub fn clock_mhz(&self) -> f64 {
        self.clock_mhz
    }

    pub fn mac_units(&self) -> usize {
        (self.p2 / 8).max(1)
    }
}

impl Default for DatapathConfig {
    fn default() -> Self {
        DatapathConfig::serial()
    }
}

impl fmt::Display for DatapathConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(p1 = {}, p2 = {})", self.p1, self.p2)
    }
}

/// The `a'` vector for every response bit, in bit order.
pub fn challenge_vectors(params: &Params, seed: &Seed, counter: u64, len: usize, p1: usize) -> Vec<Vec<Zq>> {
    let mut out = vec![Vec::new(); len];
    for d in 0..p1.min(len) {
        let mut state = LfsrState::absorb(seed, counter.wrapping_add(d as u64));
        let mut buf = Vec::with_capacity(params.n());
        for k in (d..len).step_by(p1) {
            buf.clear();
            state.expand_into(params.n(), &mut buf);
            out[k] = buf.iter().copied().map(Zq).collect();
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CycleReport {
    pub seed_load_cycles: u64,
    pub decrypt_cycles: u64,
    pub response_bits: usize,
    pub clock_mhz: f64,
}

impl CycleReport {
    pub fn total_cycles(&self) -> u64 {
        self.seed_load_cycles + self.decrypt_cycles
    }

    pub fn latency_us(&self) -> f64 {
        self.total_cycles() as f64 / self.clock_mhz
    }

    /// Response generation time excluding the seed load.
    pub fn decrypt_latency_us(&self) -> f64 {
        self.decrypt_cycles as f64 / self.clock_mhz
    }

    pub fn seed_load_us(&self) -> f64 {
        self.seed_load_cycles as f64 / self.clock_mhz
    }

    /// Decrypt cycles divided over the delivered response bits.
    pub fn cycles_per_response_bit(&self) -> f64 {
        self.decrypt_cycles as f64 / self.response_bits.max(1) as f64
    }
}

/// LFSR cycles needed to fill one `a'` of `n` bytes.
pub fn lfsr_cycles_per_bit(config: &DatapathConfig, n: usize) -> u64 {
    (8 * n).div_ceil(config.p2) as u64
}

/// MAC cycles for one `n`-element dot product.
pub fn mac_cycles_per_bit(config: &DatapathConfig, n: usize) -> u64 {
    MAC_CYCLES * n.div_ceil(config.mac_units()) as u64
}

pub fn cycles_per_bit(config: &DatapathConfig, n: usize) -> u64 {
    lfsr_cycles_per_bit(config, n) + mac_cycles_per_bit(config, n) + FIXED_CYCLES
}

/// Closed form of what [`DeviceState::respond`] counts.
pub fn cycle_model(params: &Params, config: &DatapathConfig, len: usize) -> CycleReport {
    let rounds = len.div_ceil(config.p1) as u64;
    CycleReport {
        seed_load_cycles: SEED_LOAD_CYCLES,
        decrypt_cycles: rounds * cycles_per_bit(config, params.n()),
        response_bits: len,
        clock_mhz: config.clock_mhz,
    }
}

/// Published latencies in microseconds for 128 response bits, indexed by
/// `p1 in {1, 2, 4, 8}` and `p2 in {1, 4, 8, 16, 32, 64, 128}`. `None`
/// marks configurations that do not fit the fabric.
pub const REFERENCE_P1: [usize; 4] = [1, 2, 4, 8];
pub const REFERENCE_P2: [usize; 7] = [1, 4, 8, 16, 32, 64, 128];
pub const REFERENCE_LATENCY_US: [[Option<f64>; 7]; 4] = [
    [Some(5632.0), Some(1843.0), Some(1229.0), Some(614.0), Some(307.0), Some(154.0), Some(77.0)],
    [Some(2765.0), Some(922.0), Some(614.0), Some(307.0), Some(154.0), Some(77.0), Some(38.0)],
    [Some(1382.0), Some(461.0), Some(307.0), Some(154.0), Some(77.0), Some(38.0), None],
    [Some(691.0), Some(230.0), Some(154.0), Some(77.0), Some(38.0), None, None],
];

pub fn reference_latency_us(p1: usize, p2: usize) -> Option<f64> {
    let i = REFERENCE_P1.iter().position(|&x| x == p1)?;
    let j = REFERENCE_P2.iter().position(|&x| x == p2)?;
    REFERENCE_LATENCY_US[i][j]
}

/// One row of the model-versus-reference comparison.
#[derive(Clone, Copy, Debug)]
pub struct CalibrationCell {
    pub p1: usize,
    pub p2: usize,
    pub model_us: f64,
    pub reference_us: Option<f64>,
    /// Whether the configuration passes [`DatapathConfig::new`].
    pub feasible: bool,
}

impl CalibrationCell {
    pub fn relative_error(&self) -> Option<f64> {
        self.reference_us.map(|r| (self.model_us - r) / r)
    }
}

/// Decrypt latency for `len` bits over the reference grid.
pub fn calibration_table(params: &Params, len: usize) -> Vec<CalibrationCell> {
    let mut cells = Vec::new();
    for &p1 in &REFERENCE_P1 {
        for &p2 in &REFERENCE_P2 {
            let feasible = DatapathConfig::new(p1, p2).is_ok();
            let config = DatapathConfig { p1, p2, clock_mhz: CLOCK_MHZ };
            let model_us = cycle_model(params, &config, len).decrypt_latency_us();
            cells.push(CalibrationCell {
                p1,
                p2,
                model_us,
                reference_us: reference_latency_us(p1, p2),
                feasible,
            });
        }
    }
    cells
}

/// One LFSR plus MAC-array lane.
struct Datapath {
    lfsr: LfsrState,
    buffer: Vec<u8>,
    partial: Vec<u8>,
    cycles: u64,
}

impl Datapath {
    fn new(seed: &Seed, counter: u64, n: usize, units: usize) -> Self {
        Datapath {
            lfsr: LfsrState::absorb(seed, counter),
            buffer: vec![0; n],
            partial: vec![0; units],
            cycles: 0,
        }
    }

    fn fill(&mut self, p2: usize) {
        let total_bits = self.buffer.len() * 8;
        self.buffer.fill(0);
        let mut pos = 0;
        while pos < total_bits {
            let width = p2.min(total_bits - pos);
            let word = self.lfsr.step_block(width);
            for k in 0..width {
                if word >> k & 1 == 1 {
                    self.buffer[(pos + k) / 8] |= 1 << ((pos + k) % 8);
                }
            }
            pos += width;
            self.cycles += 1;
        }
    }

    fn accumulate(&mut self, s: &[Zq]) -> Zq {
        let units = self.partial.len();
        self.partial.fill(0);
        for (step, chunk) in self.buffer.chunks(units).enumerate() {
            for (u, &a) in chunk.iter().enumerate() {
                let idx = step * units + u;
                self.partial[u] = self.partial[u].wrapping_add(a.wrapping_mul(s[idx].0));
            }
            self.cycles += MAC_CYCLES;
        }
        Zq(self.partial.iter().fold(0u8, |acc, &p| acc.wrapping_add(p)))
    }

    fn respond(&mut self, s: &[Zq], b: Zq, p2: usize) -> bool {
        self.fill(p2);
        let dot = self.accumulate(s);
        self.cycles += FIXED_CYCLES;
        quantize(b - dot)
    }
}

/// A challenge counter older than the device's own.
#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
#[error("stale counter {offered}; device is at {current}")]
pub struct StaleCounter {
    pub offered: u64,
    pub current: u64,
}

/// Reconstructed key plus the monotone counter.
#[derive(Clone, Debug)]
pub struct DeviceState {
    params: Params,
    key: SecretKey,
    counter: u64,
    config: DatapathConfig,
}

impl DeviceState {
    pub fn new(params: Params, key: SecretKey, counter: u64, config: DatapathConfig) -> Result<Self> {
        Error::check_len("key elements", params.n(), key.n())?;
        Ok(DeviceState {
            params,
            key,
            counter,
            config,
        })
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn config(&self) -> &DatapathConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Test-harness hook: sets the counter unconditionally.
    pub(crate) fn pin_counter(&mut self, counter: u64) {
        self.counter = counter;
    }

    /// Decryption of an arbitrary ciphertext, bypassing the LFSR.
    pub(crate) fn decrypt_raw(&self, a: &[Zq], b: Zq) -> bool {
        crate::lwe::decrypt_parts(a, b, self.key.elems())
    }

    /// Moves the counter forward to `to`; never backward.
    pub fn fast_forward(&mut self, to: u64) -> std::result::Result<(), StaleCounter> {
        if to < self.counter {
            return Err(StaleCounter {
                offered: to,
                current: self.counter,
            });
        }
        self.counter = to;
        Ok(())
    }

    /// Evaluates the datapaths at the current counter, then advances the
    /// counter by `p1`.
    pub fn respond(&mut self, seed: &Seed, b_prime: &[Zq]) -> Result<(Vec<bool>, CycleReport)> {
        if b_prime.is_empty() {
            return Err(Error::shape("b'", 1, 0));
        }
        let next = self
            .counter
            .checked_add(self.config.p1 as u64)
            .ok_or_else(|| Error::Config("counter exhausted".into()))?;
        let out = self.evaluate(seed, self.counter, b_prime);
        self.counter = next;
        Ok(out)
    }

    fn evaluate(&self, seed: &Seed, counter: u64, b_prime: &[Zq]) -> (Vec<bool>, CycleReport) {
        let (n, len) = (self.params.n(), b_prime.len());
        let (p1, p2) = (self.config.p1, self.config.p2);
        let mut response = vec![false; len];
        let mut busiest = 0;
        for d in 0..p1.min(len) {
            let mut lane = Datapath::new(seed, counter.wrapping_add(d as u64), n, self.config.mac_units());
            for k in (d..len).step_by(p1) {
                response[k] = lane.respond(self.key.elems(), b_prime[k], p2);
            }
            busiest = busiest.max(lane.cycles);
        }
        let report = CycleReport {
            seed_load_cycles: SEED_LOAD_CYCLES,
            decrypt_cycles: busiest,
            response_bits: len,
            clock_mhz: self.config.clock_mhz,
        };
        (response, report)
    }
}

/// What a device sends back for one challenge.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DeviceReply {
    Response(Vec<bool>),
    /// The challenge counter was stale; carries the device counter.
    Resync(u64),
}

/// A complete device: POK, fuzzy extractor, datapath and counter. The key
/// exists only while a challenge is being answered.
#[derive(Clone, Debug)]
pub struct PufDevice<R> {
    id: u64,
    params: Params,
    pok: PokArray,
    fe: FuzzyExtractor,
    config: DatapathConfig,
    counter: u64,
    noise: R,
}

impl<R: Rng> PufDevice<R> {
    pub fn new(id: u64, pok: PokArray, config: DatapathConfig, noise: R) -> Self {
        PufDevice {
            id,
            params: Params::lattice_puf(),
            pok,
            fe: FuzzyExtractor::lattice_puf(),
            config,
            counter: 0,
            noise,
        }
    }

    pub fn with_counter(mut self, counter: u64) -> Self {
        self.counter = counter;
        self
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn config(&self) -> &DatapathConfig {
        &self.config
    }

    pub fn pok(&self) -> &PokArray {
        &self.pok
    }

    /// Answers a challenge bound to `counter`. A stale counter yields
    /// [`DeviceReply::Resync`]; a failed key reconstruction is an error.
    pub fn answer(&mut self, counter: u64, seed: &Seed, b_prime: &[Zq], helper: &HelperData) -> Result<DeviceReply> {
        if counter < self.counter {
            return Ok(DeviceReply::Resync(self.counter));
        }
        let read = self.pok.read(&mut self.noise);
        let key = self.fe.rec(&read, helper)?;
        let mut state = DeviceState::new(self.params, key, counter, self.config)?;
        let (bits, _) = state.respond(seed, b_prime)?;
        self.counter = state.counter();
        Ok(DeviceReply::Response(bits))
    }
}
