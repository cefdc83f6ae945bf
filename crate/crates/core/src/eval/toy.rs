//! An additive-delay arbiter PUF, used only to show that the attacker in
//! [`super::lr`] does learn a linear-threshold device.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Clone, Debug, PartialEq)]
pub struct ArbiterPuf {
    /// Stage delay differences plus the arbiter bias as the last entry.
    weights: Vec<f64>,
}

impl ArbiterPuf {
    pub fn new<R: Rng + ?Sized>(stages: usize, rng: &mut R) -> Self {
        ArbiterPuf {
            weights: (0..=stages).map(|_| StandardNormal.sample(rng)).collect(),
        }
    }

    pub fn stages(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn response(&self, challenge: &[bool]) -> bool {
        let phi = parity_features(challenge);
        let delay: f64 = phi.iter().zip(&self.weights).map(|(&f, w)| f as f64 * w).sum();
        delay > 0.0
    }
}

/// `phi_i = prod_{j >= i} (1 - 2 c_j)` for each stage, then a constant 1.
pub fn parity_features(challenge: &[bool]) -> Vec<i8> {
    let mut phi = vec![1i8; challenge.len() + 1];
    for i in (0..challenge.len()).rev() {
        phi[i] = phi[i + 1] * if challenge[i] { -1 } else { 1 };
    }
    phi
}
