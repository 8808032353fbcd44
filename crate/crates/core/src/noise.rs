//! Seedable noise for the geometric and Laplace mechanisms.
//!
//! **Not for production privacy.** Samples are drawn with ordinary
//! floating-point arithmetic from a non-cryptographic stream cipher seeded by
//! a 64-bit value. That is what a reproducible research artifact needs, but it
//! is open to floating-point precision attacks and to seed guessing.

use std::collections::VecDeque;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{param, Result};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 42;

/// Environment variable consulted for the default seed.
pub const SEED_ENV: &str = "PRIVHIST_SEED";

/// Deterministic random stream keyed by `(seed, stream label)`.
///
/// Different labels under the same seed give independent ChaCha8 streams, so
/// parallel trials never share randomness.
#[derive(Clone, Debug)]
pub struct RandomSource {
    seed: u64,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64) -> Self {
        Self::substream(seed, 0)
    }

    pub fn substream(seed: u64, label: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(label);
        Self { seed, rng }
    }

    /// Seeds from OS entropy.
    pub fn from_entropy() -> Self {
        Self::new(rand::rng().next_u64())
    }

    /// A fresh stream under the same seed.
    pub fn derive(&self, label: u64) -> Self {
        Self::substream(self.seed, label)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

impl RngCore for RandomSource {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

/// Parses a seed flag: a decimal `u64`, or `random` for OS entropy (`None`).
pub fn parse_seed(s: &str) -> Result<Option<u64>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("random") {
        return Ok(None);
    }
    s.parse()
        .map(Some)
        .map_err(|_| param(format!("seed must be an unsigned integer or 'random', got '{s}'")))
}

/// Two-sided geometric distribution `G(α)`: `Pr(Z = z) = (1−α)/(1+α)·α^|z|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeometricMechanism {
    alpha: f64,
}

impl GeometricMechanism {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(param(format!("geometric alpha must lie in (0, 1), got {alpha}")));
        }
        Ok(Self { alpha })
    }

    /// `α = e^{−ε}` for a sensitivity-1 query.
    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        Self::with_sensitivity(epsilon, 1)
    }

    /// `α = e^{−ε/Δ}`.
    pub fn with_sensitivity(epsilon: f64, sensitivity: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(param(format!("epsilon must be positive, got {epsilon}")));
        }
        if sensitivity == 0 {
            return Err(param("sensitivity must be positive"));
        }
        Self::new((-epsilon / sensitivity as f64).exp())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn pmf(&self, z: i64) -> f64 {
        let a = self.alpha;
        (1.0 - a) / (1.0 + a) * a.powf(z.unsigned_abs() as f64)
    }

    /// `E|Z| = 2α/(1−α²)`.
    pub fn mean_abs(&self) -> f64 {
        let a = self.alpha;
        2.0 * a / (1.0 - a * a)
    }

    /// `E[Z²] = 2α/(1−α)²`.
    pub fn second_moment(&self) -> f64 {
        let a = self.alpha;
        2.0 * a / ((1.0 - a) * (1.0 - a))
    }

    /// Inverse CDF on the folded pmf: first decide `Z = 0`, otherwise draw the
    /// magnitude from the one-sided geometric tail and a fair sign.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let a = self.alpha;
        let p_zero = (1.0 - a) / (1.0 + a);
        if rng.random::<f64>() < p_zero {
            return 0;
        }
        // Pr(|Z| = k | Z ≠ 0) = (1−α)α^{k−1}; v ∈ (0, 1].
        let v = 1.0 - rng.random::<f64>();
        let magnitude = 1 + (v.ln() / a.ln()).floor() as i64;
        if rng.random::<bool>() {
            magnitude
        } else {
            -magnitude
        }
    }
}

/// Laplace distribution `L(b)` with density `exp(−|x|/b)/(2b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaplaceMechanism {
    scale: f64,
}

impl LaplaceMechanism {
    pub fn new(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(param(format!("laplace scale must be positive, got {scale}")));
        }
        Ok(Self { scale })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `E|Z| = b`.
    pub fn mean_abs(&self) -> f64 {
        self.scale
    }

    /// `E[Z²] = 2b²`.
    pub fn second_moment(&self) -> f64 {
        2.0 * self.scale * self.scale
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        // u uniform in (−1/2, 1/2)
        let mut u: f64 = rng.random::<f64>() - 0.5;
        while u == -0.5 {
            u = rng.random::<f64>() - 0.5;
        }
        -self.scale * u.signum() * (1.0 - 2.0 * u.abs()).ln()
    }
}

/// Where the mechanisms get their noise from.
///
/// [`RandomSource`] is the real thing; [`ZeroNoise`] and [`ScriptedNoise`]
/// make intermediate states hand-traceable in tests.
pub trait NoiseSource {
    fn geometric(&mut self, mech: &GeometricMechanism) -> i64;
    fn laplace(&mut self, mech: &LaplaceMechanism) -> f64;
}

impl NoiseSource for RandomSource {
    fn geometric(&mut self, mech: &GeometricMechanism) -> i64 {
        mech.sample(&mut self.rng)
    }

    fn laplace(&mut self, mech: &LaplaceMechanism) -> f64 {
        mech.sample(&mut self.rng)
    }
}

/// Every draw is zero.
#[derive(Clone, Copy, Debug, Default)]
pub struct ZeroNoise;

impl NoiseSource for ZeroNoise {
    fn geometric(&mut self, _: &GeometricMechanism) -> i64 {
        0
    }

    fn laplace(&mut self, _: &LaplaceMechanism) -> f64 {
        0.0
    }
}

/// Replays queued draws in order, then returns zeros.
#[derive(Clone, Debug, Default)]
pub struct ScriptedNoise {
    geometric: VecDeque<i64>,
    laplace: VecDeque<f64>,
}

impl ScriptedNoise {
    pub fn new(geometric: impl IntoIterator<Item = i64>, laplace: impl IntoIterator<Item = f64>) -> Self {
        Self {
            geometric: geometric.into_iter().collect(),
            laplace: laplace.into_iter().collect(),
        }
    }
}

impl NoiseSource for ScriptedNoise {
    fn geometric(&mut self, _: &GeometricMechanism) -> i64 {
        self.geometric.pop_front().unwrap_or(0)
    }

    fn laplace(&mut self, _: &LaplaceMechanism) -> f64 {
        self.laplace.pop_front().unwrap_or(0.0)
    }
}

pub fn sample_geometric(alpha: f64, rng: &mut RandomSource) -> Result<i64> {
    Ok(GeometricMechanism::new(alpha)?.sample(rng))
}

pub fn sample_laplace(scale: f64, rng: &mut RandomSource) -> Result<f64> {
    Ok(LaplaceMechanism::new(scale)?.sample(rng))
}

/// `max(n + z, 0)`.
pub fn clamped_shift(n: u64, z: i64) -> u64 {
    let shifted = n as i128 + z as i128;
    shifted.max(0) as u64
}
