//! BPSK over AWGN, LLR computation and seeded random streams.
//!
//! SNR is `1 / sigma^2` in dB for unit-energy BPSK symbols.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type WordRng = ChaCha8Rng;

/// Independent, reproducible generator for `(seed, domain, index)`.
///
/// `domain` separates unrelated uses (noise, gating draws, training data); `index`
/// is a trial or worker number.
pub fn substream(seed: u64, domain: u64, index: u64) -> WordRng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(domain)));
    rng.set_stream(index);
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn random_bits<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<u8> {
    (0..len).map(|_| rng.random::<bool>() as u8).collect()
}

/// `0 -> +1`, `1 -> -1`.
pub fn modulate(bits: &[u8]) -> Vec<f64> {
    bits.iter().map(|&c| 1.0 - 2.0 * f64::from(c)).collect()
}

pub fn noise_variance(snr_db: f64) -> f64 {
    10f64.powf(-snr_db / 10.0)
}

#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ChannelConfig {
    pub snr_db: f64,
    pub seed: u64,
}

impl ChannelConfig {
    pub fn noise_variance(&self) -> f64 {
        noise_variance(self.snr_db)
    }

    /// Transmits `symbols` with a generator derived from `seed` alone.
    pub fn transmit(&self, symbols: &[f64]) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        Awgn::new(self.noise_variance())?.llr(symbols, &mut rng)
    }
}

/// Additive white Gaussian noise channel followed by the BPSK LLR `2y / sigma^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Awgn {
    variance: f64,
}

impl Awgn {
    pub fn new(variance: f64) -> Result<Self> {
        if !(variance > 0.0 && variance.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "noise variance must be positive, got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    pub fn from_snr_db(snr_db: f64) -> Result<Self> {
        Self::new(noise_variance(snr_db))
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn llr<R: Rng + ?Sized>(&self, symbols: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        let sigma = self.variance.sqrt();
        let scale = 2.0 / self.variance;
        Ok(symbols
            .iter()
            .map(|&x| {
                let n: f64 = rng.sample(StandardNormal);
                scale * (x + sigma * n)
            })
            .collect())
    }

    /// LLRs of the noiseless observation `y = x`.
    pub fn noiseless_llr(&self, symbols: &[f64]) -> Vec<f64> {
        symbols.iter().map(|&x| 2.0 * x / self.variance).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bpsk_mapping() {
        assert_eq!(modulate(&[0, 1, 1, 0]), vec![1.0, -1.0, -1.0, 1.0]);
        let c = [1u8, 0, 1, 1, 0];
        let back: Vec<u8> = modulate(&c)
            .iter()
            .map(|x| ((1.0 - x) / 2.0) as u8)
            .collect();
        assert_eq!(back, c);
    }

    #[test]
    fn llr_formula() {
        let ch = Awgn::new(1.0).unwrap();
        assert_eq!(ch.noiseless_llr(&[1.0, -1.0, 0.0]), vec![2.0, -2.0, 0.0]);
    }

    #[test]
    fn rejects_non_positive_variance() {
        assert!(Awgn::new(0.0).is_err());
        assert!(Awgn::new(-1.0).is_err());
        assert!(Awgn::new(f64::NAN).is_err());
    }

    #[test]
    fn snr_convention() {
        assert_eq!(noise_variance(0.0), 1.0);
        assert!((noise_variance(10.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn same_seed_same_stream() {
        let cfg = ChannelConfig {
            snr_db: 0.5,
            seed: 7,
        };
        let x = modulate(&[0; 64]);
        assert_eq!(cfg.transmit(&x).unwrap(), cfg.transmit(&x).unwrap());
        let other = ChannelConfig { seed: 8, ..cfg };
        assert_ne!(cfg.transmit(&x).unwrap(), other.transmit(&x).unwrap());
    }

    #[test]
    fn substreams_differ() {
        let a: u64 = substream(1, 0, 0).random();
        let b: u64 = substream(1, 0, 1).random();
        let c: u64 = substream(1, 1, 0).random();
        let a2: u64 = substream(1, 0, 0).random();
        assert_eq!(a, a2);
        assert_ne!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn llr_moments_match_closed_form() {
        // mean 2x/s2, variance 4/s2; 3 standard errors
        let snr_db = -1.0;
        let ch = Awgn::from_snr_db(snr_db).unwrap();
        let s2 = ch.variance();
        let n = 100_000;
        let mut rng = substream(42, 0, 0);
        let llr = ch.llr(&vec![1.0; n], &mut rng).unwrap();
        let mean = llr.iter().sum::<f64>() / n as f64;
        let var = llr.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let true_var = 4.0 / s2;
        assert!((mean - 2.0 / s2).abs() < 3.0 * (true_var / n as f64).sqrt());
        // var of sample variance for Gaussian: 2 sigma^4 / (n-1)
        let se_var = (2.0 * true_var * true_var / (n - 1) as f64).sqrt();
        assert!((var - true_var).abs() < 3.0 * se_var);
    }
}
