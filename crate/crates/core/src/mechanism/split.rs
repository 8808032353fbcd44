//! Sensitivity-preserving split of the histogram at the threshold `T`, and
//! the noise added to each half.

use serde::Serialize;

use crate::histogram::{AnonymizedHistogram, CumulativePrevalence, RealHistogram};
use crate::noise::{GeometricMechanism, NoiseSource};

use super::budget::SplitParams;
use super::WorkCounter;

/// The two halves of the split histogram.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SplitResult {
    /// Prevalences at counts `1..=T`.
    pub small: AnonymizedHistogram,
    /// Every count above `T`, one entry per item, largest first.
    pub large: Vec<u64>,
    /// The realized perturbation moved from `T` to `T+1`.
    pub zb: i64,
}

/// Adds `M` fake items at `T` and `T+1`, moves `Z^b ~ G(e^{−eps2})` items from
/// `T` to `T+1`, and cuts at `T` with running nonnegative clipping on each side.
pub fn split_histogram<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    params: &SplitParams,
    mech: &GeometricMechanism,
    rng: &mut R,
) -> SplitResult {
    let zb = rng.geometric(mech);
    split_with_shift(h, params, zb, &mut WorkCounter::default())
}

/// [`split_histogram`] with the perturbation `Z^b` given.
pub fn split_with_shift(
    h: &AnonymizedHistogram,
    params: &SplitParams,
    zb: i64,
    work: &mut WorkCounter,
) -> SplitResult {
    let t = params.threshold;
    let m = params.multiplicity as i128;
    let zb_wide = zb as i128;
    let entries = h.entries();
    let cut = entries.partition_point(|&(c, _)| c <= t);
    work.add(entries.len() as u64);

    let phi_t = h.prevalence(t) as i128 + m - zb_wide;
    let phi_t1 = h.prevalence(t + 1) as i128 + m + zb_wide;

    // Large side, scanning upward from T+1. `deficit` is the running
    // Σ φ^b − Σ φ^{bℓ}, which is never positive after a step.
    let mut large_entries: Vec<(u64, u64)> = Vec::new();
    let mut deficit: i128 = 0;
    let above = entries[cut..]
        .iter()
        .filter(|&&(c, _)| c > t + 1)
        .map(|&(c, p)| (c, p as i128));
    for (count, phi_b) in std::iter::once((t + 1, phi_t1)).chain(above) {
        let kept = (deficit + phi_b).max(0);
        deficit += phi_b - kept;
        if kept > 0 {
            large_entries.push((count, kept as u64));
        }
    }

    // Small side, scanning downward from T.
    let mut small_entries: Vec<(u64, u64)> = Vec::new();
    let mut deficit: i128 = 0;
    let below = entries[..cut]
        .iter()
        .rev()
        .filter(|&&(c, _)| c < t)
        .map(|&(c, p)| (c, p as i128));
    for (count, phi_b) in std::iter::once((t, phi_t)).chain(below) {
        let kept = (deficit + phi_b).max(0);
        deficit += phi_b - kept;
        if kept > 0 {
            small_entries.push((count, kept as u64));
        }
    }
    small_entries.reverse();

    let large: Vec<u64> = large_entries
        .iter()
        .rev()
        .flat_map(|&(c, p)| std::iter::repeat_n(c, p as usize))
        .collect();
    work.add(small_entries.len() as u64 + large.len() as u64);

    SplitResult {
        small: AnonymizedHistogram::new(small_entries).expect("clipped prevalences are canonical"),
        large,
        zb,
    }
}

/// `H^a` and `H^b` of the split, materialized for traces.
pub(crate) fn perturbed_histograms(
    h: &AnonymizedHistogram,
    params: &SplitParams,
    zb: i64,
) -> (AnonymizedHistogram, RealHistogram) {
    let t = params.threshold;
    let m = params.multiplicity;
    let fakes = AnonymizedHistogram::new(vec![(t, m), (t + 1, m)]).expect("T ≥ 1, M ≥ 1");
    let with_fakes = h + &fakes;
    let shift = RealHistogram::new(vec![(t, -(zb as f64)), (t + 1, zb as f64)])
        .expect("T < T+1");
    let perturbed = &with_fakes.to_real() + &shift;
    (with_fakes, perturbed)
}

/// Noisy cumulative prevalences of the small half at `1..=T`.
pub fn noise_small<R: NoiseSource + ?Sized>(
    small: &RealHistogram,
    threshold: u64,
    mech: &GeometricMechanism,
    rng: &mut R,
) -> CumulativePrevalence {
    noise_small_counted(small, threshold, mech, rng, &mut WorkCounter::default())
}

pub(crate) fn noise_small_counted<R: NoiseSource + ?Sized>(
    small: &RealHistogram,
    threshold: u64,
    mech: &GeometricMechanism,
    rng: &mut R,
    work: &mut WorkCounter,
) -> CumulativePrevalence {
    let exact = crate::histogram::cumulative(small, threshold);
    let noisy: Vec<f64> = exact
        .values()
        .map(|v| v + rng.geometric(mech) as f64)
        .collect();
    work.add(threshold + small.len() as u64);
    exact.with_values(&noisy).expect("same length")
}

/// Adds independent geometric noise to each large count. No clamping.
pub fn noise_large<R: NoiseSource + ?Sized>(
    large: &[u64],
    mech: &GeometricMechanism,
    rng: &mut R,
) -> Vec<i64> {
    large
        .iter()
        .map(|&c| c as i64 + rng.geometric(mech))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{RandomSource, ScriptedNoise, ZeroNoise};

    fn h(e: &[(u64, u64)]) -> AnonymizedHistogram {
        AnonymizedHistogram::new(e.to_vec()).unwrap()
    }

    fn params(t: u64, m: u64) -> SplitParams {
        SplitParams {
            threshold: t,
            multiplicity: m,
            n_estimate: 0,
        }
    }

    #[test]
    fn hand_traced_split() {
        // Fake items: one at count 2 (small side), one at count 3 (large side).
        let s = split_with_shift(&h(&[(1, 2), (3, 1)]), &params(2, 1), 0, &mut WorkCounter::default());
        assert_eq!(s.small, h(&[(1, 2), (2, 1)]));
        assert_eq!(s.large, vec![3, 3]);
        // 1·2 + 2·1 + 3·2 = 10 = 5 + M(2T + 1)
        let mass = s.small.total_items() + s.large.iter().sum::<u64>();
        assert_eq!(mass, 5 + 5);
    }

    #[test]
    fn over_negative_shift_is_absorbed_by_clipping() {
        let base = h(&[(1, 2), (3, 1), (6, 2)]);
        let p = params(2, 1);
        // φ^a_3 = 1 + 1 = 2, so Z^b = −4 drives φ^b_3 to −2.
        let s = split_with_shift(&base, &p, -4, &mut WorkCounter::default());
        assert!(s.large.iter().all(|&c| c >= 3));
        // The −2 at count 3 eats both items at count 6.
        assert!(s.large.is_empty());
        // φ^b_2 = 0 + 1 + 4 = 5 on the small side.
        assert_eq!(s.small, h(&[(1, 2), (2, 5)]));
    }

    #[test]
    fn over_positive_shift_clips_small_side() {
        let base = h(&[(1, 2), (4, 1)]);
        // φ^b_3 = 0 + 1 − 4 = −3 absorbs the two singletons and the rest is lost.
        let s = split_with_shift(&base, &params(3, 1), 4, &mut WorkCounter::default());
        assert!(s.small.is_empty());
        assert_eq!(s.large, vec![4, 4, 4, 4, 4, 4]);
    }

    #[test]
    fn mass_is_conserved_without_clipping() {
        let mut rng = RandomSource::new(11);
        for _ in 0..200 {
            let counts: Vec<u64> = (0..30).map(|_| 1 + (rng.uniform().powi(3) * 60.0) as u64).collect();
            let base = AnonymizedHistogram::from_counts(counts);
            let t = 1 + (rng.uniform() * 8.0) as u64;
            let m = 1 + (rng.uniform() * 4.0) as u64;
            let zb = (rng.uniform() * 2.0 * m as f64) as i64 - m as i64;
            let p = params(t, m);
            let s = split_with_shift(&base, &p, zb, &mut WorkCounter::default());
            let clipped = (base.prevalence(t) as i64 + m as i64 - zb) < 0
                || (base.prevalence(t + 1) as i64 + m as i64 + zb) < 0;
            if !clipped {
                let mass = s.small.total_items() + s.large.iter().sum::<u64>();
                // each shifted item moves up by one count
                assert_eq!(mass as i64, (base.total_items() + m * (2 * t + 1)) as i64 + zb);
            }
            assert!(s.small.max_count().is_none_or(|c| c <= t));
            assert!(s.large.iter().all(|&c| c > t));
            assert!(s.large.windows(2).all(|w| w[0] >= w[1]));
        }
    }

    #[test]
    fn split_histogram_draws_one_shift() {
        let mech = GeometricMechanism::from_epsilon(1.0).unwrap();
        let mut noise = ScriptedNoise::new([1], []);
        let s = split_histogram(&h(&[(1, 2), (3, 1)]), &params(2, 1), &mech, &mut noise);
        assert_eq!(s.zb, 1);
        // one item moves from 2 to 3
        assert_eq!(s.small, h(&[(1, 2)]));
        assert_eq!(s.large, vec![3, 3, 3]);
    }

    #[test]
    fn perturbed_histograms_match_split() {
        let (a, b) = perturbed_histograms(&h(&[(1, 2), (3, 1)]), &params(2, 1), 3);
        assert_eq!(a, h(&[(1, 2), (2, 1), (3, 2)]));
        assert_eq!(b.entries(), &[(1, 2.0), (2, -2.0), (3, 5.0)]);
    }

    #[test]
    fn noise_small_zero_noise_is_exact() {
        let mech = GeometricMechanism::from_epsilon(1.0).unwrap();
        let small = h(&[(1, 2), (3, 1)]).to_real();
        let c = noise_small(&small, 3, &mech, &mut ZeroNoise);
        assert_eq!(c.entries(), &[(1, 3.0), (2, 1.0), (3, 1.0)]);
        let mut rng = RandomSource::new(5);
        assert_eq!(noise_small(&small, 7, &mech, &mut rng).len(), 7);
    }

    #[test]
    fn noise_large_contract() {
        let mech = GeometricMechanism::from_epsilon(1.0).unwrap();
        assert_eq!(noise_large(&[9, 4], &mech, &mut ZeroNoise), vec![9, 4]);
        assert!(noise_large(&[], &mech, &mut ZeroNoise).is_empty());
        let mut noise = ScriptedNoise::new([-7, -2], []);
        assert_eq!(noise_large(&[5, 4], &mech, &mut noise), vec![-2, 2]);
    }
}
