//! Server side of the authentication protocol: enrollment, the CRP
//! database and the accept/reject decision.
//!
//! ## Database file
//!
//! ```text
//! magic      8   b"LPUFCRP1"
//! device_id  8   u64 LE
//! p1, p2     2+2 u16 LE
//! clock      8   f64 LE (MHz)
//! L          2   u16 LE
//! next_ctr   8   u64 LE
//! helper     4 + ceil(bits / 8)   u32 LE bit count, LSB-first bits
//! records    seed 32 | counter 8 LE | b' L | r ceil(L/8) | used 1
//! ```
//!
//! The used flag is rewritten in place and flushed before a challenge goes
//! out. The secret key is never written.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;

use crate::bits::{hamming_distance, pack_lsb, unpack_lsb};
use crate::crpgen::{CrpGenerator, LbitCrp, NoisePolicy};
use crate::device::{DatapathConfig, DeviceReply, PufDevice, Seed};
use crate::fe::{FuzzyExtractor, HelperData};
use crate::lwe::{Params, SecretKey, Zq};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"LPUFCRP1";
/// Byte offset of `next_ctr` in the header.
const NEXT_COUNTER_OFFSET: u64 = 8 + 8 + 2 + 2 + 8 + 2;

/// Response length and acceptance threshold.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AuthPolicy {
    len: usize,
    threshold: usize,
}

#[allow(clippy::len_without_is_empty)]
impl AuthPolicy {
    /// Accepts iff the Hamming distance is below `threshold`.
    pub fn new(len: usize, threshold: usize) -> Result<Self> {
        if len == 0 || len > u16::MAX as usize || threshold == 0 || 2 * threshold >= len {
            return Err(Error::Config(format!(
                "threshold {threshold} must lie strictly between 0 and L/2 for L = {len}"
            )));
        }
        Ok(AuthPolicy { len, threshold })
    }

    /// `th = floor(L / 4)`.
    pub fn with_len(len: usize) -> Result<Self> {
        AuthPolicy::new(len, len / 4)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    pub fn accepts(&self, distance: usize) -> bool {
        distance < self.threshold
    }

    /// `P[HD < th]` when each bit mismatches independently with `p`.
    pub fn accept_probability(&self, p: f64) -> f64 {
        1.0 - crate::fe::repetition::binomial_upper_tail(self.len, p, self.threshold - 1)
    }
}

impl Default for AuthPolicy {
    fn default() -> Self {
        AuthPolicy { len: 100, threshold: 25 }
    }
}

/// What the server sends for one transaction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Challenge {
    pub seed: Seed,
    pub counter: u64,
    pub b_prime: Vec<Zq>,
    pub helper: HelperData,
}

/// Per-device constants stored in the database header.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreHeader {
    pub device_id: u64,
    pub config: DatapathConfig,
    pub len: usize,
    pub next_counter: u64,
    pub helper: HelperData,
}

impl StoreHeader {
    fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&self.device_id.to_le_bytes());
        out.extend_from_slice(&(self.config.p1() as u16).to_le_bytes());
        out.extend_from_slice(&(self.config.p2() as u16).to_le_bytes());
        out.extend_from_slice(&self.config.clock_mhz().to_le_bytes());
        out.extend_from_slice(&(self.len as u16).to_le_bytes());
        out.extend_from_slice(&self.next_counter.to_le_bytes());
        out.extend_from_slice(&(self.helper.len() as u32).to_le_bytes());
        out.extend_from_slice(&self.helper.to_bytes());
        out
    }

    fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Malformed("not a CRP database".into()));
        }
        let device_id = read_u64(r)?;
        let p1 = read_u16(r)? as usize;
        let p2 = read_u16(r)? as usize;
        let clock = f64::from_bits(read_u64(r)?);
        let len = read_u16(r)? as usize;
        let next_counter = read_u64(r)?;
        let mut word = [0u8; 4];
        r.read_exact(&mut word)?;
        let helper_bits = u32::from_le_bytes(word) as usize;
        let mut helper = vec![0u8; helper_bits.div_ceil(8)];
        r.read_exact(&mut helper)?;
        if len == 0 {
            return Err(Error::Malformed("zero response length".into()));
        }
        Ok(StoreHeader {
            device_id,
            config: DatapathConfig::new(p1, p2)?.with_clock(clock),
            len,
            next_counter,
            helper: HelperData::from_bytes(&helper, helper_bits)?,
        })
    }

    fn record_size(&self) -> usize {
        32 + 8 + self.len + self.len.div_ceil(8) + 1
    }
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn encode_record(crp: &LbitCrp) -> Vec<u8> {
    let mut out = Vec::with_capacity(41 + crp.len() * 2);
    out.extend_from_slice(&crp.seed);
    out.extend_from_slice(&crp.counter.to_le_bytes());
    out.extend(crp.b_prime.iter().map(|e| e.0));
    out.extend_from_slice(&pack_lsb(&crp.r));
    out.push(crp.is_used() as u8);
    out
}

fn decode_record(bytes: &[u8], len: usize) -> Result<LbitCrp> {
    let seed: Seed = bytes[..32].try_into().expect("fixed slice");
    let counter = u64::from_le_bytes(bytes[32..40].try_into().expect("fixed slice"));
    let b_prime = bytes[40..40 + len].iter().copied().map(Zq).collect();
    let r_end = 40 + len + len.div_ceil(8);
    let r = unpack_lsb(&bytes[40 + len..r_end], len);
    let used = match bytes[r_end] {
        0 => false,
        1 => true,
        x => return Err(Error::Malformed(format!("used flag {x}"))),
    };
    LbitCrp::new(seed, counter, b_prime, r, used)
}

/// Ordered one-time CRP storage, optionally mirrored to a file.
#[derive(Debug)]
pub struct CrpStore {
    header: StoreHeader,
    crps: Vec<LbitCrp>,
    /// Index of the first CRP that may still be unused.
    cursor: usize,
    file: Option<File>,
    header_len: u64,
}

impl CrpStore {
    pub fn in_memory(header: StoreHeader) -> Self {
        let header_len = header.to_bytes().len() as u64;
        CrpStore {
            header,
            crps: Vec::new(),
            cursor: 0,
            file: None,
            header_len,
        }
    }

    /// Creates (or truncates) a database file.
    pub fn create(path: &Path, header: StoreHeader) -> Result<Self> {
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        let bytes = header.to_bytes();
        file.write_all(&bytes)?;
        file.sync_data()?;
        Ok(CrpStore {
            header,
            crps: Vec::new(),
            cursor: 0,
            file: Some(file),
            header_len: bytes.len() as u64,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new().read(true).write(true).open(path)?;
        let mut reader = BufReader::new(file);
        let header = StoreHeader::read_from(&mut reader)?;
        let header_len = header.to_bytes().len() as u64;
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest)?;
        let size = header.record_size();
        if rest.len() % size != 0 {
            return Err(Error::Malformed(format!(
                "{} trailing bytes do not form {size}-byte records",
                rest.len()
            )));
        }
        let crps = rest
            .chunks(size)
            .map(|chunk| decode_record(chunk, header.len))
            .collect::<Result<Vec<_>>>()?;
        let cursor = crps.iter().position(|c| !c.is_used()).unwrap_or(crps.len());
        Ok(CrpStore {
            header,
            crps,
            cursor,
            file: Some(reader.into_inner()),
            header_len,
        })
    }

    pub fn header(&self) -> &StoreHeader {
        &self.header
    }

    pub fn crps(&self) -> &[LbitCrp] {
        &self.crps
    }

    /// Unused CRPs left.
    pub fn remaining(&self) -> usize {
        self.crps[self.cursor..].iter().filter(|c| !c.is_used()).count()
    }

    pub fn append(&mut self, batch: Vec<LbitCrp>, next_counter: u64) -> Result<()> {
        for crp in &batch {
            Error::check_len("CRP length", self.header.len, crp.len())?;
        }
        if let Some(file) = &mut self.file {
            file.seek(SeekFrom::End(0))?;
            let mut bytes = Vec::with_capacity(batch.len() * self.header.record_size());
            for crp in &batch {
                bytes.extend(encode_record(crp));
            }
            file.write_all(&bytes)?;
            file.seek(SeekFrom::Start(NEXT_COUNTER_OFFSET))?;
            file.write_all(&next_counter.to_le_bytes())?;
            file.sync_data()?;
        }
        self.header.next_counter = next_counter;
        self.crps.extend(batch);
        Ok(())
    }

    /// Consumes and returns the first unused CRP whose counter is at least
    /// `min_counter`. Unused CRPs passed over are consumed as well, since
    /// the device can no longer answer them.
    pub fn take_next(&mut self, min_counter: u64) -> Result<LbitCrp> {
        while self.cursor < self.crps.len() {
            let i = self.cursor;
            self.cursor += 1;
            if self.crps[i].is_used() {
                continue;
            }
            let fresh = self.crps[i].mark_used();
            assert!(fresh, "CRP {i} handed out twice");
            self.persist_used(i)?;
            if self.crps[i].counter >= min_counter {
                return Ok(self.crps[i].clone());
            }
        }
        Err(Error::Exhausted)
    }

    fn persist_used(&mut self, index: usize) -> Result<()> {
        if let Some(file) = &mut self.file {
            let size = self.header.record_size() as u64;
            let offset = self.header_len + index as u64 * size + size - 1;
            file.seek(SeekFrom::Start(offset))?;
            file.write_all(&[1])?;
            file.sync_data()?;
        }
        Ok(())
    }
}

/// How one transaction ended.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept { counter: u64, distance: usize },
    Reject { counter: u64, distance: usize },
    /// Transport failure, desync or malformed reply. Counts as a reject.
    Abort { counter: u64, reason: String },
}

impl Decision {
    pub fn accepted(&self) -> bool {
        matches!(self, Decision::Accept { .. })
    }
}

/// Everything the server keeps about one device.
#[derive(Debug)]
pub struct DeviceRecord {
    params: Params,
    /// Present only in the enrolling process; needed to mint new CRPs.
    key: Option<SecretKey>,
    noise: NoisePolicy,
    store: CrpStore,
    history: Vec<Decision>,
}

impl DeviceRecord {
    /// Runs FE enrollment on the one-time POK readout and pre-generates
    /// `batch` CRPs with counters `0, p1, 2 p1, ...`.
    pub fn enroll<R: Rng + ?Sized>(
        device_id: u64,
        pok_truth: &[bool],
        config: DatapathConfig,
        policy: &AuthPolicy,
        batch: usize,
        db_path: Option<&Path>,
        rng: &mut R,
    ) -> Result<Self> {
        let (key, helper) = FuzzyExtractor::lattice_puf().gen(pok_truth, rng)?;
        let header = StoreHeader {
            device_id,
            config,
            len: policy.len(),
            next_counter: 0,
            helper,
        };
        let store = match db_path {
            Some(path) => CrpStore::create(path, header)?,
            None => CrpStore::in_memory(header),
        };
        let mut record = DeviceRecord {
            params: Params::lattice_puf(),
            key: Some(key),
            noise: NoisePolicy::default(),
            store,
            history: Vec::new(),
        };
        record.replenish(batch, rng)?;
        Ok(record)
    }

    /// Reopens a database. The record can authenticate but not mint CRPs.
    pub fn open(path: &Path) -> Result<Self> {
        Ok(DeviceRecord {
            params: Params::lattice_puf(),
            key: None,
            noise: NoisePolicy::default(),
            store: CrpStore::open(path)?,
            history: Vec::new(),
        })
    }

    pub fn device_id(&self) -> u64 {
        self.store.header.device_id
    }

    pub fn config(&self) -> &DatapathConfig {
        &self.store.header.config
    }

    pub fn helper(&self) -> &HelperData {
        &self.store.header.helper
    }

    pub fn next_counter(&self) -> u64 {
        self.store.header.next_counter
    }

    /// Authentications left.
    pub fn remaining(&self) -> usize {
        self.store.remaining()
    }

    pub fn store(&self) -> &CrpStore {
        &self.store
    }

    pub fn history(&self) -> &[Decision] {
        &self.history
    }

    /// The enrolled key, when this process performed the enrollment.
    pub fn key(&self) -> Option<&SecretKey> {
        self.key.as_ref()
    }

    /// Applies to CRPs minted from now on.
    pub fn set_noise_policy(&mut self, noise: NoisePolicy) {
        self.noise = noise;
    }

    pub fn replenish<R: Rng + ?Sized>(&mut self, batch: usize, rng: &mut R) -> Result<()> {
        let key = self
            .key
            .as_ref()
            .ok_or_else(|| Error::Config("key not available in this process".into()))?;
        let generator = CrpGenerator::new(self.params, self.noise.clone())?;
        let header = &self.store.header;
        let step = header.config.p1() as u64;
        let mut counter = header.next_counter;
        let mut crps = Vec::with_capacity(batch);
        for _ in 0..batch {
            let seed: Seed = rng.random();
            crps.push(generator.generate(key, header.len, seed, counter, &header.config, rng)?);
            counter += step;
        }
        self.store.append(crps, counter)
    }

    fn challenge_for(&self, crp: &LbitCrp) -> Challenge {
        Challenge {
            seed: crp.seed,
            counter: crp.counter,
            b_prime: crp.b_prime.clone(),
            helper: self.helper().clone(),
        }
    }
}

/// The server's view of a device endpoint.
pub trait DeviceLink {
    fn exchange(&mut self, challenge: &Challenge) -> Result<DeviceReply>;
    /// Tells the device the verdict. Failures here do not change it.
    fn report(&mut self, accepted: bool) -> Result<()>;
}

/// A device driven in-process, with no transport in between.
impl<R: Rng> DeviceLink for PufDevice<R> {
    fn exchange(&mut self, c: &Challenge) -> Result<DeviceReply> {
        self.answer(c.counter, &c.seed, &c.b_prime, &c.helper)
    }

    fn report(&mut self, _accepted: bool) -> Result<()> {
        Ok(())
    }
}

/// One transaction. The CRP is consumed before the challenge leaves; any
/// error after that point is recorded as [`Decision::Abort`] and returned.
pub fn authenticate<L: DeviceLink + ?Sized>(
    record: &mut DeviceRecord,
    policy: &AuthPolicy,
    link: &mut L,
) -> Result<Decision> {
    Error::check_len("policy length", record.store.header.len, policy.len())?;
    let mut crp = record.store.take_next(0)?;
    let outcome = run_transaction(record, policy, link, &mut crp);
    let decision = match &outcome {
        Ok(d) => d.clone(),
        Err(e) => Decision::Abort {
            counter: crp.counter,
            reason: e.to_string(),
        },
    };
    log::info!("device {}: {:?}", record.device_id(), decision);
    record.history.push(decision);
    outcome
}

fn run_transaction<L: DeviceLink + ?Sized>(
    record: &mut DeviceRecord,
    policy: &AuthPolicy,
    link: &mut L,
    crp: &mut LbitCrp,
) -> Result<Decision> {
    let mut reply = link.exchange(&record.challenge_for(crp))?;
    if let DeviceReply::Resync(device_counter) = reply {
        log::warn!(
            "device {} at counter {device_counter}, CRP at {}; skipping ahead",
            record.device_id(),
            crp.counter
        );
        *crp = record.store.take_next(device_counter)?;
        reply = link.exchange(&record.challenge_for(crp))?;
    }
    let bits = match reply {
        DeviceReply::Response(bits) => bits,
        DeviceReply::Resync(device) => return Err(Error::Desync { device }),
    };
    Error::check_len("response", crp.len(), bits.len())?;
    let distance = hamming_distance(&bits, &crp.r);
    let decision = if policy.accepts(distance) {
        Decision::Accept {
            counter: crp.counter,
            distance,
        }
    } else {
        Decision::Reject {
            counter: crp.counter,
            distance,
        }
    };
    if let Err(e) = link.report(decision.accepted()) {
        log::warn!("could not deliver verdict: {e}");
    }
    Ok(decision)
}

/// Enrolled devices; one transaction per device at a time.
#[derive(Debug, Default)]
pub struct Registry {
    policy: AuthPolicy,
    devices: Mutex<HashMap<u64, Arc<Mutex<DeviceRecord>>>>,
}

impl Registry {
    pub fn new(policy: AuthPolicy) -> Self {
        Registry {
            policy,
            devices: Mutex::new(HashMap::new()),
        }
    }

    pub fn policy(&self) -> &AuthPolicy {
        &self.policy
    }

    /// Enrollment is one-time: a second record for the same id is refused.
    pub fn insert(&self, record: DeviceRecord) -> Result<Arc<Mutex<DeviceRecord>>> {
        let mut devices = self.devices.lock().expect("registry lock");
        let id = record.device_id();
        if devices.contains_key(&id) {
            return Err(Error::AlreadyEnrolled(id));
        }
        let entry = Arc::new(Mutex::new(record));
        devices.insert(id, Arc::clone(&entry));
        Ok(entry)
    }

    pub fn enroll<R: Rng + ?Sized>(
        &self,
        device_id: u64,
        pok_truth: &[bool],
        config: DatapathConfig,
        batch: usize,
        rng: &mut R,
    ) -> Result<Arc<Mutex<DeviceRecord>>> {
        if self.get(device_id).is_ok() {
            return Err(Error::AlreadyEnrolled(device_id));
        }
        let record = DeviceRecord::enroll(device_id, pok_truth, config, &self.policy, batch, None, rng)?;
        self.insert(record)
    }

    pub fn get(&self, device_id: u64) -> Result<Arc<Mutex<DeviceRecord>>> {
        self.devices
            .lock()
            .expect("registry lock")
            .get(&device_id)
            .cloned()
            .ok_or(Error::UnknownDevice(device_id))
    }

    pub fn authenticate<L: DeviceLink + ?Sized>(&self, device_id: u64, link: &mut L) -> Result<Decision> {
        let entry = self.get(device_id)?;
        let mut record = entry.lock().expect("device lock");
        authenticate(&mut record, &self.policy, link)
    }
}
