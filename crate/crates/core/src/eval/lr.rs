//! Logistic-regression modeling attack with an 80/20 train/test split.
//!
//! Features are stored as `+1/-1` bytes; the model adds its own bias.
//! Training is mini-batch Adam on the cross-entropy loss.

use rand::seq::SliceRandom;
use rand::Rng;

use super::export::{toy_crp, CrpSource, ExportMode};
use super::toy::{parity_features, ArbiterPuf};
use crate::lwe::{unpack_challenge, Ciphertext, Params, SecretKey};
use crate::{Error, Result};

const MIN_ROWS: usize = 1000;
const BATCH: usize = 64;

/// Row-major `+1/-1` features with boolean labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<i8>,
    y: Vec<bool>,
}

fn signs(bits: impl IntoIterator<Item = bool>) -> impl Iterator<Item = i8> {
    bits.into_iter().map(|b| if b { 1 } else { -1 })
}

impl Dataset {
    pub fn with_dim(dim: usize) -> Self {
        Dataset {
            dim,
            x: Vec::new(),
            y: Vec::new(),
        }
    }

    pub fn push(&mut self, features: &[i8], label: bool) -> Result<()> {
        Error::check_len("features", self.dim, features.len())?;
        self.x.extend_from_slice(features);
        self.y.push(label);
        Ok(())
    }

    /// The 1288 challenge bits of each ciphertext as features.
    pub fn from_challenges<'a>(rows: impl IntoIterator<Item = &'a (Ciphertext, bool)>) -> Self {
        let mut data = Dataset::with_dim(0);
        for (ct, label) in rows {
            let features: Vec<i8> = signs(unpack_challenge(ct)).collect();
            if data.y.is_empty() {
                data.dim = features.len();
            }
            data.push(&features, *label).expect("all challenges share one size");
        }
        data
    }

    /// Fresh CRPs of the lattice PUF with key `key`.
    pub fn lattice<R: Rng + ?Sized>(key: &SecretKey, count: usize, mode: ExportMode, rng: &mut R) -> Result<Self> {
        let params = Params::lattice_puf();
        let mut source = CrpSource::new(params, key, mode, rng)?;
        let mut data = Dataset::with_dim(params.challenge_bits());
        data.x.reserve(count * data.dim);
        for _ in 0..count {
            let (ct, r) = source.next_crp(rng);
            data.x.extend(signs(unpack_challenge(&ct)));
            data.y.push(r);
        }
        Ok(data)
    }

    /// Arbiter CRPs with parity features.
    pub fn toy<R: Rng + ?Sized>(puf: &ArbiterPuf, count: usize, rng: &mut R) -> Self {
        let mut data = Dataset::with_dim(puf.stages() + 1);
        for _ in 0..count {
            let (ct, r) = toy_crp(puf, rng);
            let challenge = crate::bits::unpack_lsb(&ct.to_bytes()[..puf.stages().div_ceil(8)], puf.stages());
            data.x.extend(parity_features(&challenge));
            data.y.push(r);
        }
        data
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn labels(&self) -> &[bool] {
        &self.y
    }

    fn row(&self, i: usize) -> &[i8] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn shuffle_labels<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        self.y.shuffle(rng);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogisticModel {
    weights: Vec<f64>,
    bias: f64,
}

impl LogisticModel {
    fn margin(&self, row: &[i8]) -> f64 {
        self.bias + row.iter().zip(&self.weights).map(|(&x, w)| x as f64 * w).sum::<f64>()
    }

    pub fn predict(&self, row: &[i8]) -> bool {
        self.margin(row) > 0.0
    }

    pub fn error_rate(&self, data: &Dataset, rows: &[usize]) -> f64 {
        let wrong = rows.iter().filter(|&&i| self.predict(data.row(i)) != data.y[i]).count();
        wrong as f64 / rows.len() as f64
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Adam state for `dim` weights plus the bias (last slot).
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    rate: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let (c1, c2) = (1.0 - Self::B1.powi(self.t), 1.0 - Self::B2.powi(self.t));
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            params[i] -= self.rate * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + Self::EPS);
        }
    }
}

pub fn train<R: Rng + ?Sized>(data: &Dataset, rows: &[usize], epochs: usize, rate: f64, rng: &mut R) -> LogisticModel {
    let dim = data.dim;
    let mut params = vec![0.0; dim + 1];
    let mut adam = Adam {
        m: vec![0.0; dim + 1],
        v: vec![0.0; dim + 1],
        t: 0,
        rate,
    };
    let mut order = rows.to_vec();
    let mut grad = vec![0.0; dim + 1];
    for _ in 0..epochs {
        order.shuffle(rng);
        for batch in order.chunks(BATCH) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let row = data.row(i);
                let z = params[dim] + row.iter().zip(&params).map(|(&x, w)| x as f64 * w).sum::<f64>();
                let residual = (sigmoid(z) - data.y[i] as u8 as f64) / batch.len() as f64;
                for (g, &x) in grad.iter_mut().zip(row) {
                    *g += residual * x as f64;
                }
                grad[dim] += residual;
            }
            adam.step(&mut params, &grad);
        }
    }
    let bias = params.pop().expect("bias slot");
    LogisticModel { weights: params, bias }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LrReport {
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_error: f64,
    pub test_error: f64,
}

impl LrReport {
    /// Standard error of the test error under a coin-flip model.
    pub fn coin_flip_sigma(&self) -> f64 {
        0.5 / (self.test_rows as f64).sqrt()
    }
}

/// Shuffles, holds out 20% and reports the held-out prediction error.
pub fn lr_attack<R: Rng + ?Sized>(data: &Dataset, epochs: usize, rate: f64, rng: &mut R) -> Result<LrReport> {
    if data.len() < MIN_ROWS {
        return Err(Error::Config(format!("{} rows; the attack needs {MIN_ROWS}", data.len())));
    }
    let mut rows: Vec<usize> = (0..data.len()).collect();
    rows.shuffle(rng);
    let (test, train_rows) = rows.split_at(data.len() / 5);
    let model = train(data, train_rows, epochs, rate, rng);
    Ok(LrReport {
        train_rows: train_rows.len(),
        test_rows: test.len(),
        train_error: model.error_rate(data, train_rows),
        test_error: model.error_rate(data, test),
    })
}
