//! Text CRP datasets for modeling attacks.
//!
//! One CRP per line: the 161-byte challenge `a_1 .. a_160, b` as 322
//! lowercase hex characters, a comma, the response `0` or `1`, and `\n`.
//! The response is the plaintext bit chosen at encryption time.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use super::toy::ArbiterPuf;
use crate::crpgen::{encrypt_full, encrypt_relaxed, public_key_for, PublicKey};
use crate::device::{challenge_vectors, Seed};
use crate::lwe::{Ciphertext, Params, SecretKey};
use crate::{Error, Result};

/// Bytes per exported line at the deployed parameters.
pub const LINE_BYTES: usize = 2 * 161 + 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportMode {
    /// Ciphertexts from the full public-key encryption.
    Full,
    /// LFSR-expanded `a'` with a relaxed `b'`, as the device sees them.
    Compressed,
}

impl FromStr for ExportMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(ExportMode::Full),
            "compressed" => Ok(ExportMode::Compressed),
            other => Err(Error::Config(format!("unknown export mode {other:?}"))),
        }
    }
}

/// Labelled challenges for one key.
pub struct CrpSource<'k> {
    params: Params,
    key: &'k SecretKey,
    pk: Option<PublicKey>,
    counter: u64,
}

impl<'k> CrpSource<'k> {
    pub fn new<R: Rng + ?Sized>(params: Params, key: &'k SecretKey, mode: ExportMode, rng: &mut R) -> Result<Self> {
        Error::check_len("key elements", params.n(), key.n())?;
        let pk = (mode == ExportMode::Full).then(|| public_key_for(&params, key, rng));
        Ok(CrpSource {
            params,
            key,
            pk,
            counter: 0,
        })
    }

    pub fn next_crp<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (Ciphertext, bool) {
        let r: bool = rng.random();
        let ct = match &self.pk {
            Some(pk) => encrypt_full(pk, r, rng),
            None => {
                let seed: Seed = rng.random();
                let a = challenge_vectors(&self.params, &seed, self.counter, 1, 1).remove(0);
                self.counter += 1;
                let b = encrypt_relaxed(&self.params, self.key, r, &a, rng).expect("a sized from params");
                Ciphertext { a, b }
            }
        };
        (ct, r)
    }
}

pub fn format_line(ct: &Ciphertext, response: bool) -> String {
    let mut line = String::with_capacity(2 * (ct.a.len() + 1) + 3);
    for byte in ct.to_bytes() {
        line.push_str(&format!("{byte:02x}"));
    }
    line.push(',');
    line.push(if response { '1' } else { '0' });
    line.push('\n');
    line
}

/// Parses one line, with or without its trailing newline.
pub fn parse_line(line: &str) -> Result<(Ciphertext, bool)> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let (hex, label) = line
        .split_once(',')
        .ok_or_else(|| Error::Malformed("missing comma".into()))?;
    let response = match label {
        "0" => false,
        "1" => true,
        other => return Err(Error::Malformed(format!("label {other:?}"))),
    };
    if hex.len() % 2 != 0 || !hex.is_ascii() {
        return Err(Error::Malformed("challenge is not whole hex bytes".into()));
    }
    let bytes = (0..hex.len())
        .step_by(2)
        .map(|i| u8::from_str_radix(&hex[i..i + 2], 16).map_err(|e| Error::Malformed(e.to_string())))
        .collect::<Result<Vec<u8>>>()?;
    Ok((Ciphertext::from_bytes(&bytes)?, response))
}

pub fn export_crps<W: Write, R: Rng + ?Sized>(
    key: &SecretKey,
    count: usize,
    mode: ExportMode,
    out: W,
    rng: &mut R,
) -> Result<()> {
    if count == 0 {
        return Err(Error::Config("export needs at least one CRP".into()));
    }
    let mut source = CrpSource::new(Params::lattice_puf(), key, mode, rng)?;
    let mut out = BufWriter::new(out);
    for _ in 0..count {
        let (ct, r) = source.next_crp(rng);
        out.write_all(format_line(&ct, r).as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn export_crps_to_path<R: Rng + ?Sized>(
    key: &SecretKey,
    count: usize,
    mode: ExportMode,
    path: &Path,
    rng: &mut R,
) -> Result<()> {
    export_crps(key, count, mode, File::create(path)?, rng)
}

/// Toy arbiter CRPs in the same format: the 64 stage bits occupy the first
/// 8 bytes (LSB-first), the remaining bytes are zero.
pub fn export_toy<W: Write, R: Rng + ?Sized>(puf: &ArbiterPuf, count: usize, out: W, rng: &mut R) -> Result<()> {
    let mut out = BufWriter::new(out);
    for _ in 0..count {
        let (ct, r) = toy_crp(puf, rng);
        out.write_all(format_line(&ct, r).as_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn toy_crp<R: Rng + ?Sized>(puf: &ArbiterPuf, rng: &mut R) -> (Ciphertext, bool) {
    let challenge = crate::sampler::sample_bits(puf.stages(), rng);
    let mut bytes = crate::bits::pack_lsb(&challenge);
    bytes.resize(161, 0);
    let ct = Ciphertext::from_bytes(&bytes).expect("161 bytes");
    (ct, puf.response(&challenge))
}

pub fn read_crps(path: &Path) -> Result<Vec<(Ciphertext, bool)>> {
    BufReader::new(File::open(path)?)
        .lines()
        .enumerate()
        .map(|(i, line)| parse_line(&line?).map_err(|e| Error::Malformed(format!("line {}: {e}", i + 1))))
        .collect()
}
