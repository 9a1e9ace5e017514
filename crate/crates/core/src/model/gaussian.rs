use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Diagonal Gaussian parameterized by mean and log-variance.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianParams {
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self> {
        if mu.len() != log_var.len() {
            return Err(Error::Config(format!(
                "mean has {} entries but log-variance has {}",
                mu.len(),
                log_var.len()
            )));
        }
        if mu.iter().chain(&log_var).any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite Gaussian parameter".into()));
        }
        Ok(Self { mu, log_var })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            log_var: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn sigma(&self) -> Vec<f64> {
        self.log_var.iter().map(|lv| (0.5 * lv).exp()).collect()
    }

    /// Log density at `z`.
    pub fn log_density(&self, z: &[f64]) -> f64 {
        let ln_2pi = (2.0 * std::f64::consts::PI).ln();
        self.mu
            .iter()
            .zip(&self.log_var)
            .zip(z)
            .map(|((m, lv), x)| -0.5 * (ln_2pi + lv + (x - m).powi(2) / lv.exp()))
            .sum()
    }
}

/// `KL(q || p)` summed over dimensions:
/// `log(σ_p/σ_q) + (σ_q² + (μ_q - μ_p)²) / (2σ_p²) - 1/2`.
pub fn kl_diag_gauss(q: &GaussianParams, p: &GaussianParams) -> f64 {
    assert_eq!(q.dim(), p.dim(), "KL between Gaussians of different size");
    let mut kl = 0.0;
    for i in 0..q.dim() {
        let (mq, lq, mp, lp) = (q.mu[i], q.log_var[i], p.mu[i], p.log_var[i]);
        kl += 0.5 * (lp - lq) + (lq.exp() + (mq - mp).powi(2)) / (2.0 * lp.exp()) - 0.5;
    }
    kl.max(0.0)
}

/// A reparameterized draw together with the noise that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSample {
    pub z: Vec<f64>,
    pub epsilon: Vec<f64>,
}

/// `z = μ + σ ⊙ ε` for the given noise.
pub fn latent_from_noise(g: &GaussianParams, epsilon: Vec<f64>) -> LatentSample {
    let z = g
        .mu
        .iter()
        .zip(g.sigma())
        .zip(&epsilon)
        .map(|((m, s), e)| m + s * e)
        .collect();
    LatentSample { z, epsilon }
}

pub fn sample_latent<R: Rng + ?Sized>(g: &GaussianParams, rng: &mut R) -> LatentSample {
    let eps = (0..g.dim()).map(|_| rng.sample(StandardNormal)).collect();
    latent_from_noise(g, eps)
}

/// SplitMix64 finalizer over a sequence of words.
pub fn mix_seed(parts: &[u64]) -> u64 {
    let mut h: u64 = 0x9E37_79B9_7F4A_7C15;
    for &p in parts {
        h ^= p;
        h = h.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = h;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        h = z ^ (z >> 31);
    }
    h
}

/// Standard-normal noise that depends only on `(seed, step, pair_id)`, so
/// every evaluation of the same example at the same step sees the same draw
/// regardless of batch composition or thread schedule.
pub fn latent_noise(seed: u64, step: u64, pair_id: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, step, pair_id as u64]));
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}
