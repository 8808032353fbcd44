//! Post-processing for `ε > 1`.

use serde::Serialize;

use crate::error::Result;
use crate::histogram::{from_cumulative, AnonymizedHistogram, CumulativePrevalence};
use crate::isotonic::{isotonic_nonincreasing, round_clamp_cumulative, WeightedSequence};

use super::WorkCounter;

/// Intermediates of the low-privacy path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LowTrace {
    /// Monotone fit of the noisy small cumulative prevalences.
    pub mon: CumulativePrevalence,
    pub h_ds: AnonymizedHistogram,
    pub h_dl: AnonymizedHistogram,
    pub h_d: AnonymizedHistogram,
    pub h_e: AnonymizedHistogram,
}

/// Isotonic fit and rounding of the small half, clamping of the large
/// counts at `T`, recombination, and removal of the `2M` fake items.
pub fn low_privacy_path(
    noisy_small: &CumulativePrevalence,
    noisy_large: &[i64],
    threshold: u64,
    multiplicity: u64,
) -> Result<AnonymizedHistogram> {
    let trace = low_privacy_traced(
        noisy_small,
        noisy_large,
        threshold,
        multiplicity,
        &mut WorkCounter::default(),
    )?;
    Ok(trace.h_e)
}

pub(crate) fn low_privacy_traced(
    noisy_small: &CumulativePrevalence,
    noisy_large: &[i64],
    threshold: u64,
    multiplicity: u64,
    work: &mut WorkCounter,
) -> Result<LowTrace> {
    // L1
    let seq = WeightedSequence::unit(noisy_small.values().collect())?;
    let mon = noisy_small.with_values(&isotonic_nonincreasing(&seq)?)?;
    let h_ds = from_cumulative(&round_clamp_cumulative(&mon)?).to_anonymized()?;
    work.add(2 * noisy_small.len() as u64);

    // L2
    let h_dl = AnonymizedHistogram::from_counts(
        noisy_large.iter().map(|&c| (c.max(threshold as i64)) as u64),
    );
    work.add(noisy_large.len() as u64);

    // L3, L4
    let h_d = &h_ds + &h_dl;
    let without_upper = remove_closest(&h_d, threshold + 1, multiplicity, work);
    let h_e = remove_closest(&without_upper, threshold, multiplicity, work);

    Ok(LowTrace {
        mon,
        h_ds,
        h_dl,
        h_d,
        h_e,
    })
}

/// Removes the `k` items whose counts are closest to `target`.
///
/// Distance ties go to the smaller count. If fewer than `k` items exist, all
/// are removed.
pub fn remove_closest(
    h: &AnonymizedHistogram,
    target: u64,
    k: u64,
    work: &mut WorkCounter,
) -> AnonymizedHistogram {
    let mut entries = h.entries().to_vec();
    let mut right = entries.partition_point(|&(c, _)| c < target);
    let mut left = right; // entries[..left] are candidates below target
    let mut remaining = k;
    while remaining > 0 {
        let below = left.checked_sub(1).map(|i| (i, target - entries[i].0));
        let above = (right < entries.len()).then(|| (right, entries[right].0 - target));
        let idx = match (below, above) {
            (Some((i, db)), Some((j, da))) => {
                if db <= da {
                    i
                } else {
                    j
                }
            }
            (Some((i, _)), None) => i,
            (None, Some((j, _))) => j,
            (None, None) => break,
        };
        let take = entries[idx].1.min(remaining);
        entries[idx].1 -= take;
        remaining -= take;
        work.add(1);
        if entries[idx].1 == 0 {
            if idx < right {
                left -= 1;
            } else {
                right += 1;
            }
        }
    }
    AnonymizedHistogram::from_prevalences(entries)
}
