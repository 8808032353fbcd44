//! Noisy sorted counts with isotonic post-processing: the linear-time
//! comparison point for [`privhist`](super::privhist).

use crate::error::{param, Result};
use crate::histogram::AnonymizedHistogram;
use crate::isotonic::{isotonic_nonincreasing, round_nonnegative, WeightedSequence};
use crate::noise::{GeometricMechanism, NoiseSource};

/// Pads the sorted counts with zeros to `domain_size`, adds `G(e^{−ε})` to
/// each, projects onto non-increasing sequences, rounds, and drops zeros.
///
/// Runs in `O(domain_size)`.
pub fn baseline_noisy_counts<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    epsilon: f64,
    domain_size: u64,
    rng: &mut R,
) -> Result<AnonymizedHistogram> {
    let symbols = h.support_size();
    if domain_size < symbols {
        return Err(param(format!(
            "domain size {domain_size} is smaller than the {symbols} symbols in the histogram"
        )));
    }
    if domain_size == 0 {
        return Ok(AnonymizedHistogram::empty());
    }
    let mech = GeometricMechanism::from_epsilon(epsilon)?;
    let mut padded: Vec<f64> = h.counts_desc().map(|c| c as f64).collect();
    padded.resize(domain_size as usize, 0.0);
    for v in padded.iter_mut() {
        *v += rng.geometric(&mech) as f64;
    }
    let fitted = isotonic_nonincreasing(&WeightedSequence::unit(padded)?)?;
    Ok(AnonymizedHistogram::from_counts(
        fitted.into_iter().map(|v| round_nonnegative(v) as u64),
    ))
}
