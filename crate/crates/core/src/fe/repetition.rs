//! Odd-length repetition codes with majority decoding.

use statrs::function::factorial::ln_binomial;

pub fn encode(bit: bool, len: usize) -> impl Iterator<Item = bool> {
    std::iter::repeat_n(bit, len)
}

/// Majority vote. Callers use odd lengths, so there are no ties.
pub fn decode(bits: &[bool]) -> bool {
    2 * bits.iter().filter(|&&b| b).count() > bits.len()
}

/// `P[Binomial(n, p) > k]`, summed term by term in log space.
pub fn binomial_upper_tail(n: usize, p: f64, k: usize) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return if k < n { 1.0 } else { 0.0 };
    }
    let (lp, lq) = (p.ln(), (-p).ln_1p());
    ((k + 1)..=n)
        .map(|j| (ln_binomial(n as u64, j as u64) + j as f64 * lp + (n - j) as f64 * lq).exp())
        .sum::<f64>()
        .min(1.0)
}

/// Bit error rate after majority decoding of a length-`len` code over a
/// channel with crossover `p`.
pub fn post_majority_ber(p: f64, len: usize) -> f64 {
    binomial_upper_tail(len, p, len / 2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::rng_from_seed;
    use rand::Rng;

    #[test]
    fn encode_decode_examples() {
        assert_eq!(encode(false, 3).collect::<Vec<_>>(), vec![false; 3]);
        assert_eq!(encode(true, 3).collect::<Vec<_>>(), vec![true; 3]);
        assert!(decode(&[true, true, true]));
        assert!(decode(&[true, false, true]));
        assert!(!decode(&[false, false, true]));
    }

    #[test]
    fn closed_form_for_triple() {
        let p: f64 = 0.05;
        let expected = 3.0 * p * p * (1.0 - p) + p.powi(3);
        assert!((post_majority_ber(p, 3) - expected).abs() < 1e-15);
        assert!((expected - 0.00725).abs() < 1e-12);
        assert_eq!(post_majority_ber(0.0, 3), 0.0);
        assert_eq!(post_majority_ber(0.05, 1), binomial_upper_tail(1, 0.05, 0));
    }

    #[test]
    fn majority_over_noisy_channel() {
        let mut rng = rng_from_seed(51);
        let trials = 1_000_000;
        let mut errors = 0usize;
        for _ in 0..trials {
            let bit: bool = rng.random();
            let noisy: Vec<bool> = encode(bit, 3).map(|b| b ^ rng.random_bool(0.05)).collect();
            if decode(&noisy) != bit {
                errors += 1;
            }
        }
        let rate = errors as f64 / trials as f64;
        assert!((rate - 0.00725).abs() < 0.0005, "rate = {rate}");
    }

    #[test]
    fn tail_extremes() {
        assert_eq!(binomial_upper_tail(10, 0.3, 10), 0.0);
        assert!((binomial_upper_tail(10, 0.5, 4) - 638.0 / 1024.0).abs() < 1e-12);
        assert_eq!(binomial_upper_tail(5, 1.0, 2), 1.0);
    }
}
