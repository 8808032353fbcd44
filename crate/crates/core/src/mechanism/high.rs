//! Smoothing-based release for `ε ≤ 1`.
//!
//! Prevalences are linearly apportioned onto a sparse set of boundary counts
//! `S`, so neighbouring inputs differ by at most `1/(s_i − s_{i−1})` at each
//! boundary and the Laplace noise can shrink with the gap.

use serde::Serialize;

use crate::error::{param, Error, Result};
use crate::histogram::{from_cumulative, AnonymizedHistogram, CumulativePrevalence, RealHistogram};
use crate::isotonic::{isotonic_nonincreasing, round_clamp_cumulative, WeightedSequence};
use crate::noise::{LaplaceMechanism, NoiseSource};

use super::WorkCounter;

/// Boundary counts `s_1 < s_2 < …` that carry all mass after smoothing.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundarySet {
    pub boundaries: Vec<u64>,
    /// Upper end `T'` of the geometric grid.
    pub tprime: u64,
    /// Grid ratio minus one.
    pub q: f64,
}

impl BoundarySet {
    pub fn len(&self) -> usize {
        self.boundaries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boundaries.is_empty()
    }

    /// `s_i − s_{i−1}` with `s_0 = 0`.
    pub fn gaps(&self) -> impl Iterator<Item = u64> + '_ {
        let mut prev = 0;
        self.boundaries.iter().map(move |&s| {
            let gap = s - prev;
            prev = s;
            gap
        })
    }
}

/// Intermediates of the high-privacy path.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HighTrace {
    pub h_u: AnonymizedHistogram,
    pub boundaries: BoundarySet,
    pub h_v: RealHistogram,
    pub h_w: CumulativePrevalence,
    pub h_x: CumulativePrevalence,
    pub h_y: AnonymizedHistogram,
}

/// Collapses every count `≥ 2N` onto `2N`.
pub fn approximate_high(h: &AnonymizedHistogram, n_estimate: u64) -> Result<AnonymizedHistogram> {
    if n_estimate == 0 {
        return Err(param("approximate_high needs N >= 1"));
    }
    let cap = 2 * n_estimate;
    let cut = h.entries().partition_point(|&(c, _)| c < cap);
    let tail: u64 = h.entries()[cut..].iter().map(|&(_, p)| p).sum();
    let mut entries = h.entries()[..cut].to_vec();
    if tail > 0 {
        entries.push((cap, tail));
    }
    AnonymizedHistogram::new(entries)
}

/// `S = {1..T} ∪ {⌊T(1+q)^i⌋ : 1 ≤ i ≤ log_{1+q}(T'/T)} ∪ {N_x ≥ T'} ∪ {2N}`
/// with `T' = ⌈10√(N/eps3³)⌉` and `q = √(ln(1/eps3)/(N·eps3))`.
///
/// Members above `2N` are dropped.
pub fn compute_boundaries(
    threshold: u64,
    n_estimate: u64,
    eps3: f64,
    noisy_large: &[i64],
) -> Result<BoundarySet> {
    if !(eps3 > 0.0 && eps3 <= 1.0) {
        return Err(param(format!("eps3 must lie in (0, 1], got {eps3}")));
    }
    if n_estimate == 0 || threshold == 0 {
        return Err(param("compute_boundaries needs N >= 1 and T >= 1"));
    }
    let n = n_estimate as f64;
    let cap = 2 * n_estimate;
    let tprime = (10.0 * (n / eps3.powi(3)).sqrt()).ceil() as u64;
    let q = ((1.0 / eps3).ln() / (n * eps3)).sqrt();

    let mut s: Vec<u64> = (1..=threshold.min(cap)).collect();

    if q > 0.0 && tprime > threshold {
        let t = threshold as f64;
        let step = q.ln_1p();
        let i_max = ((tprime as f64 / t).ln() / step).floor();
        let mut i = 1.0f64;
        while i <= i_max {
            let v = (t * (i * step).exp()).floor() as u64;
            if v > cap {
                break;
            }
            s.push(v);
            // jump to the first exponent whose floor exceeds v
            let next = (((v + 1) as f64 / t).ln() / step).ceil();
            i = next.max(i + 1.0);
        }
    }

    s.extend(
        noisy_large
            .iter()
            .filter(|&&x| x >= tprime as i64 && x as u64 <= cap)
            .map(|&x| x as u64),
    );
    s.push(cap);
    s.sort_unstable();
    s.dedup();

    Ok(BoundarySet {
        boundaries: s,
        tprime,
        q,
    })
}

/// Splits each prevalence at `j ∈ (s_{i−1}, s_i)` between the two
/// neighbouring boundaries in proportion to proximity. Preserves total mass
/// and the first moment.
pub fn smooth_prevalences(u: &RealHistogram, s: &BoundarySet) -> Result<RealHistogram> {
    let b = &s.boundaries;
    let (Some(&lo), Some(&hi)) = (b.first(), b.last()) else {
        return Err(Error::Contract("empty boundary set".into()));
    };
    let mut v = vec![0.0; b.len()];
    for &(j, phi) in u.entries() {
        if j < lo || j > hi {
            return Err(Error::Contract(format!(
                "count {j} lies outside the boundary range [{lo}, {hi}]"
            )));
        }
        match b.binary_search(&j) {
            Ok(i) => v[i] += phi,
            Err(i) => {
                let (left, right) = (b[i - 1], b[i]);
                let gap = (right - left) as f64;
                v[i - 1] += phi * (right - j) as f64 / gap;
                v[i] += phi * (j - left) as f64 / gap;
            }
        }
    }
    RealHistogram::new(b.iter().copied().zip(v).collect())
}

/// Cumulative prevalences at each boundary plus `L(1/(eps3·(s_i − s_{i−1})))`.
pub fn noise_smoothed<R: NoiseSource + ?Sized>(
    v: &RealHistogram,
    s: &BoundarySet,
    eps3: f64,
    rng: &mut R,
) -> Result<CumulativePrevalence> {
    if !(eps3 > 0.0) {
        return Err(param("eps3 must be positive"));
    }
    let exact = CumulativePrevalence::at_points(v, &s.boundaries)?;
    let noisy = exact
        .values()
        .zip(s.gaps())
        .map(|(value, gap)| {
            let mech = LaplaceMechanism::new(1.0 / (eps3 * gap as f64))?;
            Ok(value + rng.laplace(&mech))
        })
        .collect::<Result<Vec<f64>>>()?;
    exact.with_values(&noisy)
}

/// Runs the whole high-privacy path on the raw histogram.
pub fn high_privacy_path<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    noisy_large: &[i64],
    threshold: u64,
    n_estimate: u64,
    eps3: f64,
    rng: &mut R,
) -> Result<AnonymizedHistogram> {
    let trace = high_privacy_traced(
        h,
        noisy_large,
        threshold,
        n_estimate,
        eps3,
        rng,
        &mut WorkCounter::default(),
    )?;
    Ok(trace.h_y)
}

pub(crate) fn high_privacy_traced<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    noisy_large: &[i64],
    threshold: u64,
    n_estimate: u64,
    eps3: f64,
    rng: &mut R,
    work: &mut WorkCounter,
) -> Result<HighTrace> {
    let h_u = approximate_high(h, n_estimate)?;
    let boundaries = compute_boundaries(threshold, n_estimate, eps3, noisy_large)?;
    let h_v = smooth_prevalences(&h_u.to_real(), &boundaries)?;
    let h_w = noise_smoothed(&h_v, &boundaries, eps3, rng)?;
    work.add(h.len() as u64 + noisy_large.len() as u64 + 3 * boundaries.len() as u64);

    let weights: Vec<f64> = boundaries.gaps().map(|g| (g * g) as f64).collect();
    let seq = WeightedSequence::new(h_w.values().collect(), weights)?;
    let h_x = h_w.with_values(&isotonic_nonincreasing(&seq)?)?;
    let h_y = from_cumulative(&round_clamp_cumulative(&h_x)?).to_anonymized()?;
    work.add(2 * boundaries.len() as u64);

    Ok(HighTrace {
        h_u,
        boundaries,
        h_v,
        h_w,
        h_x,
        h_y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::ZeroNoise;

    fn h(e: &[(u64, u64)]) -> AnonymizedHistogram {
        AnonymizedHistogram::new(e.to_vec()).unwrap()
    }

    fn set(b: &[u64]) -> BoundarySet {
        BoundarySet {
            boundaries: b.to_vec(),
            tprime: 0,
            q: 0.0,
        }
    }

    #[test]
    fn approximate_high_examples() {
        assert_eq!(approximate_high(&h(&[(1, 1), (50, 1)]), 10).unwrap(), h(&[(1, 1), (20, 1)]));
        let small = h(&[(1, 3), (19, 2)]);
        assert_eq!(approximate_high(&small, 10).unwrap(), small);
        let many = h(&[(3, 1), (20, 2), (31, 4)]);
        assert_eq!(approximate_high(&many, 10).unwrap(), h(&[(3, 1), (20, 6)]));
        assert!(approximate_high(&many, 0).is_err());
    }

    #[test]
    fn boundary_formulas() {
        // N = 100, ε = 0.3 → eps3 = 0.1, T = ⌈√30⌉ = 6
        let s = compute_boundaries(6, 100, 0.1, &[]).unwrap();
        assert_eq!(s.tprime, 3163);
        assert!((s.q - 0.479_853).abs() < 1e-6);
        // 2N = 200 < T', so the grid is cut at 200.
        assert_eq!(s.boundaries[..6], [1, 2, 3, 4, 5, 6]);
        assert_eq!(*s.boundaries.last().unwrap(), 200);
        // grid points ⌊6·1.4799^i⌋ for i = 1..8: 8, 13, 19, 28, 42, 63, 93, 138
        assert_eq!(s.boundaries[6..], [8, 13, 19, 28, 42, 63, 93, 138, 200]);
    }

    #[test]
    fn boundaries_include_large_noisy_counts() {
        let n = 50_000;
        let s = compute_boundaries(100, n, 0.5, &[70_000, 99_999, 5, -3]).unwrap();
        assert_eq!(s.tprime, 6325);
        assert!(s.boundaries.contains(&70_000));
        assert!(s.boundaries.contains(&99_999));
        assert!(s.boundaries.contains(&100_000));
        assert!(s.boundaries.windows(2).all(|w| w[0] < w[1]));
        let grid_len = ((s.tprime as f64 / 100.0).ln() / s.q.ln_1p()).floor() as usize;
        assert!(s.len() <= 100 + grid_len + 2 + 1);
    }

    #[test]
    fn boundaries_degenerate_q() {
        let s = compute_boundaries(3, 4, 1.0, &[]).unwrap();
        assert_eq!(s.q, 0.0);
        assert_eq!(s.boundaries, vec![1, 2, 3, 8]);
        assert!(compute_boundaries(3, 4, 0.0, &[]).is_err());
        assert!(compute_boundaries(3, 4, 1.5, &[]).is_err());
    }

    #[test]
    fn smoothing_examples() {
        let u = RealHistogram::new(vec![(3, 1.0)]).unwrap();
        let v = smooth_prevalences(&u, &set(&[2, 4])).unwrap();
        assert_eq!(v.entries(), &[(2, 0.5), (4, 0.5)]);

        let on_s = RealHistogram::new(vec![(2, 3.0), (4, 1.0)]).unwrap();
        assert_eq!(smooth_prevalences(&on_s, &set(&[2, 4])).unwrap(), on_s);

        let u = RealHistogram::new(vec![(1, 1.0)]).unwrap();
        assert!(smooth_prevalences(&u, &set(&[2, 4])).is_err());
    }

    #[test]
    fn noise_scale_follows_gap() {
        let s = set(&[1, 2, 12]);
        assert_eq!(s.gaps().collect::<Vec<_>>(), vec![1, 1, 10]);
        let v = RealHistogram::new(vec![(1, 2.0), (12, 1.0)]).unwrap();
        let w = noise_smoothed(&v, &s, 0.5, &mut ZeroNoise).unwrap();
        assert_eq!(w.entries(), &[(1, 3.0), (2, 1.0), (12, 1.0)]);
    }

    #[test]
    fn zero_noise_reproduces_small_support() {
        let base = h(&[(1, 4), (2, 1), (5, 2)]);
        // every count lies in 1..=T ⊆ S, so smoothing is the identity
        let out = high_privacy_path(&base, &[], 5, 16, 0.3, &mut ZeroNoise).unwrap();
        assert_eq!(out, base);
    }
}
