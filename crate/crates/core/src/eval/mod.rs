//! Population statistics, the decryption-error Monte Carlo, CRP export and
//! the in-repo modeling attack.

pub mod export;
pub mod lr;
pub mod toy;

use std::fmt::{self, Write as _};

use rand::Rng;
use rayon::prelude::*;

use crate::bits::{hamming_distance, hamming_weight};
use crate::crpgen::{encrypt_relaxed, CrpGenerator, NoisePolicy};
use crate::device::{DatapathConfig, DeviceReply, DeviceState, PufDevice, Seed};
use crate::fe::{FuzzyExtractor, PokArray, POK_BITS};
use crate::lwe::{decrypt_parts, Params, SecretKey};
use crate::sampler::{predicted_error_rate, rng_stream, sample_zq_vec};
use crate::{Error, Result};

/// Stream id reserved for the shared uniqueness challenges.
const SHARED_STREAM: u64 = u64::MAX;

/// Dimensions of one population experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationSpec {
    pub num_devices: usize,
    pub challenges_per_device: usize,
    /// POK bit error rate for the combined reliability figure.
    pub ber: f64,
    pub master_seed: u64,
    /// Full POK + FE + decrypt transactions per device.
    pub combined_reads: usize,
    pub config: DatapathConfig,
}

impl Default for PopulationSpec {
    fn default() -> Self {
        PopulationSpec {
            num_devices: 100,
            challenges_per_device: 1000,
            ber: crate::fe::DEFAULT_BER,
            master_seed: 0,
            combined_reads: 5,
            config: DatapathConfig::serial(),
        }
    }
}

impl PopulationSpec {
    fn validate(&self) -> Result<()> {
        if self.num_devices < 2 || self.challenges_per_device == 0 {
            return Err(Error::Config(format!(
                "need at least 2 devices and 1 challenge, got {} and {}",
                self.num_devices, self.challenges_per_device
            )));
        }
        Ok(())
    }
}

/// Per-device figures, as fractions of response bits.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceStats {
    pub uniformity: f64,
    /// Against the enrolled responses, with the enrolled key.
    pub reliability: f64,
    /// Through the POK and fuzzy extractor; `None` if every read failed.
    pub combined_reliability: Option<f64>,
    pub fe_failures: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StatsReport {
    pub uniformity_mean: f64,
    pub uniformity_std: f64,
    pub uniqueness_mean: f64,
    pub uniqueness_std: f64,
    pub reliability_mean: f64,
    pub reliability_std: f64,
    /// Pooled over every evaluated bit; equals `reliability_mean` for equal counts.
    pub decryption_error_rate: f64,
    pub combined_reliability_mean: f64,
    pub fe_failures: usize,
    pub devices: Vec<DeviceStats>,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// One simulated device: random key, its own CRPs, shared challenges.
struct Evaluated {
    stats: DeviceStats,
    errors: usize,
    shared_responses: Vec<bool>,
}

fn evaluate_device(spec: &PopulationSpec, index: usize, shared: &[(Vec<crate::Zq>, crate::Zq)]) -> Result<Evaluated> {
    let params = Params::lattice_puf();
    let mut rng = rng_stream(spec.master_seed, index as u64);
    let pok = PokArray::new(POK_BITS, spec.ber, &mut rng)?;
    let (key, helper) = FuzzyExtractor::lattice_puf().gen(pok.truth(), &mut rng)?;

    let generator = CrpGenerator::new(params, NoisePolicy::FreshPerCrp)?;
    let mut state = DeviceState::new(params, key.clone(), 0, spec.config)?;
    let (mut ones, mut errors, mut done) = (0, 0, 0);
    while done < spec.challenges_per_device {
        let len = (spec.challenges_per_device - done).min(100);
        let seed: Seed = rng.random();
        let crp = generator.generate(&key, len, seed, state.counter(), &spec.config, &mut rng)?;
        let (response, _) = state.respond(&seed, &crp.b_prime)?;
        ones += hamming_weight(&response);
        errors += hamming_distance(&response, &crp.r);
        done += len;
    }
    let bits = spec.challenges_per_device as f64;

    let mut device = PufDevice::new(index as u64, pok, spec.config, rng_stream(spec.master_seed ^ 0x5eed, index as u64));
    let (mut combined_errors, mut combined_bits, mut fe_failures) = (0, 0, 0);
    for _ in 0..spec.combined_reads {
        let seed: Seed = rng.random();
        let crp = generator.generate(&key, 100, seed, device.counter(), &spec.config, &mut rng)?;
        match device.answer(crp.counter, &seed, &crp.b_prime, &helper) {
            Ok(DeviceReply::Response(r)) => {
                combined_errors += hamming_distance(&r, &crp.r);
                combined_bits += r.len();
            }
            Ok(DeviceReply::Resync(c)) => unreachable!("counter taken from the device ({c})"),
            Err(Error::Reconstruction { .. }) => fe_failures += 1,
            Err(e) => return Err(e),
        }
    }

    let shared_responses = shared
        .iter()
        .map(|(a, b)| decrypt_parts(a, *b, key.elems()))
        .collect();
    Ok(Evaluated {
        stats: DeviceStats {
            uniformity: ones as f64 / bits,
            reliability: errors as f64 / bits,
            combined_reliability: (combined_bits > 0).then(|| combined_errors as f64 / combined_bits as f64),
            fe_failures,
        },
        errors,
        shared_responses,
    })
}

/// Simulates the population; devices run in parallel on independent streams,
/// so the report depends only on the spec.
pub fn run_stats(spec: &PopulationSpec) -> Result<StatsReport> {
    spec.validate()?;
    let params = Params::lattice_puf();
    let mut rng = rng_stream(spec.master_seed, SHARED_STREAM);
    let shared: Vec<_> = (0..spec.challenges_per_device)
        .map(|_| (sample_zq_vec(params.n(), &mut rng), crate::Zq(rng.random())))
        .collect();
    let devices = (0..spec.num_devices)
        .into_par_iter()
        .map(|i| evaluate_device(spec, i, &shared))
        .collect::<Result<Vec<_>>>()?;

    let uniqueness: Vec<f64> = (0..devices.len())
        .into_par_iter()
        .flat_map_iter(|i| {
            let devices = &devices;
            (i + 1..devices.len()).map(move |j| {
                hamming_distance(&devices[i].shared_responses, &devices[j].shared_responses) as f64
                    / spec.challenges_per_device as f64
            })
        })
        .collect();
    let (uniformity_mean, uniformity_std) = mean_std(&devices.iter().map(|d| d.stats.uniformity).collect::<Vec<_>>());
    let (reliability_mean, reliability_std) =
        mean_std(&devices.iter().map(|d| d.stats.reliability).collect::<Vec<_>>());
    let (uniqueness_mean, uniqueness_std) = mean_std(&uniqueness);
    let combined: Vec<f64> = devices.iter().filter_map(|d| d.stats.combined_reliability).collect();
    let total_errors: usize = devices.iter().map(|d| d.errors).sum();
    Ok(StatsReport {
        uniformity_mean,
        uniformity_std,
        uniqueness_mean,
        uniqueness_std,
        reliability_mean,
        reliability_std,
        decryption_error_rate: total_errors as f64 / (devices.len() * spec.challenges_per_device) as f64,
        combined_reliability_mean: if combined.is_empty() { f64::NAN } else { mean_std(&combined).0 },
        fe_failures: devices.iter().map(|d| d.stats.fe_failures).sum(),
        devices: devices.into_iter().map(|d| d.stats).collect(),
    })
}

impl StatsReport {
    /// `device,uniformity,reliability,combined_reliability,fe_failures` rows.
    pub fn per_device_csv(&self) -> String {
        let mut out = String::from("device,uniformity,reliability,combined_reliability,fe_failures\n");
        for (i, d) in self.devices.iter().enumerate() {
            let combined = d.combined_reliability.map_or(String::new(), |c| format!("{c:.6}"));
            writeln!(out, "{i},{:.6},{:.6},{combined},{}", d.uniformity, d.reliability, d.fe_failures)
                .expect("writing to a String");
        }
        out
    }
}

/// Flat `key=value` lines.
impl fmt::Display for StatsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "devices={}", self.devices.len())?;
        writeln!(f, "uniformity_mean={:.6}", self.uniformity_mean)?;
        writeln!(f, "uniformity_std={:.6}", self.uniformity_std)?;
        writeln!(f, "uniqueness_mean={:.6}", self.uniqueness_mean)?;
        writeln!(f, "uniqueness_std={:.6}", self.uniqueness_std)?;
        writeln!(f, "reliability_mean={:.6}", self.reliability_mean)?;
        writeln!(f, "reliability_std={:.6}", self.reliability_std)?;
        writeln!(f, "decryption_error_rate={:.6}", self.decryption_error_rate)?;
        writeln!(f, "combined_reliability_mean={:.6}", self.combined_reliability_mean)?;
        write!(f, "fe_failures={}", self.fe_failures)
    }
}

/// Monte Carlo decryption-error estimate next to the analytic predictor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorRateReport {
    pub trials: usize,
    pub errors: usize,
    pub predicted: f64,
}

impl ErrorRateReport {
    pub fn rate(&self) -> f64 {
        self.errors as f64 / self.trials as f64
    }

    pub fn gap(&self) -> f64 {
        self.rate() - self.predicted
    }

    /// Binomial standard error of [`ErrorRateReport::rate`].
    pub fn std_error(&self) -> f64 {
        let p = self.rate();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

/// Relaxed single-bit CRPs with a uniform `a'`, a fresh key per 1000 trials
/// and fresh noise per trial.
pub fn decryption_error_rate(params: &Params, trials: usize, seed: u64) -> ErrorRateReport {
    const PER_KEY: usize = 1000;
    let errors = (0..trials.div_ceil(PER_KEY))
        .into_par_iter()
        .map(|chunk| {
            let mut rng = rng_stream(seed, chunk as u64);
            let key = SecretKey::from_elems(sample_zq_vec(params.n(), &mut rng));
            let count = PER_KEY.min(trials - chunk * PER_KEY);
            (0..count)
                .filter(|_| {
                    let a = sample_zq_vec(params.n(), &mut rng);
                    let r: bool = rng.random();
                    let b = encrypt_relaxed(params, &key, r, &a, &mut rng).expect("sized from params");
                    decrypt_parts(&a, b, key.elems()) != r
                })
                .count()
        })
        .sum();
    ErrorRateReport {
        trials,
        errors,
        predicted: predicted_error_rate(params),
    }
}
