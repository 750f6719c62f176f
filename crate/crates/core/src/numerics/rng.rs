use rand_core::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::{Error, Result};

const TWO_POW_NEG_53: f64 = 1.0 / (1u64 << 53) as f64;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the `stream`-th child of `seed`. Nest calls to build hierarchical
/// streams such as (experiment, replica, purpose).
pub fn stream_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(splitmix64(seed) ^ splitmix64(stream ^ 0xD1B5_4A32_D192_ED03))
}

/// Deterministic random source: xoshiro256** seeded through SplitMix64.
///
/// Uniforms use the top 53 bits of each 64-bit output; normals use the
/// Box–Muller cosine branch with one pair of uniforms per draw, so every
/// draw consumes exactly two words.
#[derive(Clone, Debug)]
pub struct SeededRng {
    inner: Xoshiro256StarStar,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            inner: Xoshiro256StarStar::seed_from_u64(seed),
        }
    }

    /// Independent stream `stream` derived from `seed`.
    pub fn derive(seed: u64, stream: u64) -> Self {
        Self::new(stream_seed(seed, stream))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_NEG_53
    }

    /// Uniform on (0, 1].
    pub fn uniform_open_low(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * TWO_POW_NEG_53
    }

    /// Standard normal via Box–Muller: `sqrt(-2 ln u1) * cos(2 pi u2)` with
    /// `u1` on (0, 1] drawn first and `u2` on [0, 1) second.
    pub fn standard_normal(&mut self) -> f64 {
        let u1 = self.uniform_open_low();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.standard_normal();
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        let mut v = vec![0.0; n];
        self.fill_normal(&mut v);
        v
    }
}

fn validate_weights(weights: &[f64]) -> Result<()> {
    if weights.is_empty() {
        return Err(Error::Contract("empty weight vector".into()));
    }
    if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Contract(format!(
            "weight {i} is {} (must be finite and nonnegative)",
            weights[i]
        )));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Contract(format!("weights sum to {total}, not 1")));
    }
    Ok(())
}

/// Draws an index by inverse CDF with a single uniform.
pub fn categorical_sample(weights: &[f64], rng: &mut SeededRng) -> Result<usize> {
    validate_weights(weights)?;
    let u = rng.uniform();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(last_positive(weights))
}

fn last_positive(weights: &[f64]) -> usize {
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(weights.len() - 1)
}

/// Precomputed cumulative weights for repeated draws from one distribution.
///
/// Draws are identical to [`categorical_sample`] on the same weights.
#[derive(Clone, Debug)]
pub struct Categorical {
    cumulative: Vec<f64>,
    fallback: usize,
}

impl Categorical {
    pub fn new(weights: &[f64]) -> Result<Self> {
        validate_weights(weights)?;
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect();
        Ok(Self {
            cumulative,
            fallback: last_positive(weights),
        })
    }

    pub fn len(&self) -> usize {
        self.cumulative.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cumulative.is_empty()
    }

    pub fn sample(&self, rng: &mut SeededRng) -> usize {
        let u = rng.uniform();
        // first index whose running sum exceeds u
        let i = self.cumulative.partition_point(|&c| c <= u);
        if i < self.cumulative.len() {
            i
        } else {
            self.fallback
        }
    }
}
