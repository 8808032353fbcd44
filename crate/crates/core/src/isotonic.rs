//! Weighted isotonic regression onto non-increasing sequences, and the
//! rounding step that turns monotone cumulative prevalences back into counts.

use crate::error::{param, Error, Result};
use crate::histogram::CumulativePrevalence;

/// Values with matching positive weights.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightedSequence {
    values: Vec<f64>,
    weights: Vec<f64>,
}

impl WeightedSequence {
    pub fn new(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.len() != weights.len() {
            return Err(param(format!(
                "{} values but {} weights",
                values.len(),
                weights.len()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0 && w.is_finite())) {
            return Err(param(format!("weights must be positive and finite, got {w}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(param("values must be finite"));
        }
        Ok(Self { values, weights })
    }

    pub fn unit(values: Vec<f64>) -> Result<Self> {
        let weights = vec![1.0; values.len()];
        Self::new(values, weights)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

struct Block {
    weighted_sum: f64,
    weight: f64,
    len: usize,
}

impl Block {
    fn mean(&self) -> f64 {
        self.weighted_sum / self.weight
    }
}

/// Minimizes `Σ w_i (x_i − y_i)²` subject to `x_1 ≥ x_2 ≥ … ≥ x_k` with
/// pool-adjacent-violators. Linear time.
pub fn isotonic_nonincreasing(seq: &WeightedSequence) -> Result<Vec<f64>> {
    if seq.is_empty() {
        return Err(Error::Empty);
    }
    let mut blocks: Vec<Block> = Vec::with_capacity(seq.len());
    for (&y, &w) in seq.values.iter().zip(&seq.weights) {
        let mut cur = Block {
            weighted_sum: w * y,
            weight: w,
            len: 1,
        };
        while let Some(prev) = blocks.last() {
            if prev.mean() >= cur.mean() {
                break;
            }
            let prev = blocks.pop().unwrap();
            cur = Block {
                weighted_sum: prev.weighted_sum + cur.weighted_sum,
                weight: prev.weight + cur.weight,
                len: prev.len + cur.len,
            };
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(seq.len());
    for b in &blocks {
        let m = b.mean();
        out.extend(std::iter::repeat_n(m, b.len));
    }
    Ok(out)
}

/// Round half away from zero after clamping at zero.
pub fn round_nonnegative(v: f64) -> f64 {
    v.max(0.0).round()
}

/// Replaces every cumulative prevalence `v` by `round(max(v, 0))`.
///
/// The input must be non-increasing; rounding is monotone so the output is
/// too.
pub fn round_clamp_cumulative(c: &CumulativePrevalence) -> Result<CumulativePrevalence> {
    if !c.is_non_increasing() {
        return Err(Error::Contract(
            "cumulative prevalences must be non-increasing before rounding".into(),
        ));
    }
    let values: Vec<f64> = c.values().map(round_nonnegative).collect();
    c.with_values(&values)
}
