//! A software model of a strong PUF built from an LWE decryption function.
//!
//! The device holds a 1280-bit secret derived from an SRAM power-up key
//! (reconstructed through a code-offset fuzzy extractor) and answers each
//! challenge ciphertext `(a, b)` with `Q(b - <a, s>)`. Challenges are
//! compressed to a 256-bit LFSR seed plus one byte per response bit, and a
//! self-incrementing counter is mixed into the seed so that an attacker
//! cannot hold `a` fixed across queries.
//!
//! Module map:
//!
//! * [`lwe`]: arithmetic over `Z_256`, bit packing, quantizer, decryption.
//! * [`sampler`]: seeded randomness and the rounded-Gaussian error sampler.
//! * [`lfsr`]: the 256-bit Fibonacci LFSR, serial and unrolled.
//! * [`crpgen`]: server-side encryption, full and seed-compressed.
//! * [`fe`]: SRAM POK model, GF(2^8), BCH, repetition code, fuzzy extractor.
//! * [`device`]: parallel datapath simulator and cycle model.
//! * [`server`]: enrollment, CRP database and authentication decisions.
//! * [`wire`]: framed byte protocol, loopback and TCP transports.
//! * [`eval`]: population statistics, CRP export and the logistic-regression attack.
//! * [`attacks`]: the chosen-ciphertext key-recovery attack and the counter defence.

pub mod attacks;
pub mod bits;
pub mod crpgen;
pub mod device;
mod error;
pub mod eval;
pub mod fe;
pub mod lfsr;
pub mod lwe;
pub mod sampler;
pub mod server;
pub mod wire;

pub use error::{Error, Result};
pub use lwe::{Ciphertext, Params, SecretKey, Zq};
