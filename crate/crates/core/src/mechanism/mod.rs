//! The private release mechanism.
//!
//! [`privhist`] privatizes the total, splits the histogram at
//! `T ≈ √(N·min(ε, 1))` into a small-count half (released through noisy
//! cumulative prevalences) and a large-count half (released through noisy
//! counts), then post-processes along the low-privacy path for `ε > 1` or the
//! smoothing-based high-privacy path for `ε ≤ 1`. Work is proportional to the
//! number of distinct counts plus `O(√(n/min(ε,1)) + 1/ε + log n)`, never to
//! `n` itself.

mod baseline;
mod budget;
mod high;
mod low;
mod split;

use serde::Serialize;

pub use baseline::baseline_noisy_counts;
pub use budget::{BudgetSplit, Path, PrivacyBudget, SplitParams};
pub use high::{
    approximate_high, compute_boundaries, high_privacy_path, noise_smoothed, smooth_prevalences,
    BoundarySet, HighTrace,
};
pub use low::{low_privacy_path, remove_closest, LowTrace};
pub use split::{noise_large, noise_small, split_histogram, split_with_shift, SplitResult};

use crate::error::{param, Result};
use crate::histogram::{AnonymizedHistogram, CumulativePrevalence, RealHistogram};
use crate::noise::{clamped_shift, GeometricMechanism, NoiseSource};

/// Counts the prevalence entries, items and noise draws a release touches.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WorkCounter(u64);

impl WorkCounter {
    pub fn add(&mut self, units: u64) {
        self.0 += units;
    }

    pub fn get(&self) -> u64 {
        self.0
    }
}

/// The released pair `(H, N)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MechanismOutput {
    pub histogram: AnonymizedHistogram,
    pub n_estimate: u64,
    pub path: Path,
    /// Realized intermediates, present only when tracing was requested.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace: Option<Trace>,
}

/// Every intermediate of one release, for golden-master tests.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Trace {
    pub z_a: i64,
    pub n_estimate: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params: Option<SplitParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_a: Option<AnonymizedHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z_b: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_b: Option<RealHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_bs: Option<AnonymizedHistogram>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_bl: Option<Vec<u64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_cs: Option<CumulativePrevalence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h_cl: Option<Vec<i64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub low: Option<LowTrace>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub high: Option<HighTrace>,
}

impl Trace {
    fn empty(z_a: i64, n_estimate: u64) -> Self {
        Self {
            z_a,
            n_estimate,
            params: None,
            h_a: None,
            z_b: None,
            h_b: None,
            h_bs: None,
            h_bl: None,
            h_cs: None,
            h_cl: None,
            low: None,
            high: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("traces always serialize")
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ReleaseOptions {
    pub trace: bool,
}

/// `N = max(n + Z^a, 0)` with `Z^a ~ G(e^{−eps1})`.
pub fn privatize_total<R: NoiseSource + ?Sized>(n: u64, eps1: f64, rng: &mut R) -> Result<u64> {
    let mech = GeometricMechanism::from_epsilon(eps1)?;
    Ok(clamped_shift(n, rng.geometric(&mech)))
}

/// Releases an `ε`-differentially private histogram and total.
pub fn privhist<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<MechanismOutput> {
    privhist_with(h, budget, rng, ReleaseOptions::default()).map(|(out, _)| out)
}

/// [`privhist`] with the trace attached.
pub fn privhist_traced<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<MechanismOutput> {
    privhist_with(h, budget, rng, ReleaseOptions { trace: true }).map(|(out, _)| out)
}

/// [`privhist`] returning the work count alongside the output.
pub fn privhist_with<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    budget: &PrivacyBudget,
    rng: &mut R,
    options: ReleaseOptions,
) -> Result<(MechanismOutput, WorkCounter)> {
    budget.validate()?;
    let path = budget.path();
    let mut work = WorkCounter::default();

    // (1) private total
    let n = h.total_items();
    let z_a = rng.geometric(&GeometricMechanism::from_epsilon(budget.eps1)?);
    let n_estimate = clamped_shift(n, z_a);
    work.add(h.len() as u64 + 1);
    let mut trace = options.trace.then(|| Trace::empty(z_a, n_estimate));
    if n_estimate == 0 {
        let out = MechanismOutput {
            histogram: AnonymizedHistogram::empty(),
            n_estimate: 0,
            path,
            trace,
        };
        return Ok((out, work));
    }

    // (2) split
    let params = SplitParams::derive(n_estimate, budget)?;
    let mech2 = GeometricMechanism::from_epsilon(budget.eps2)?;
    let z_b = rng.geometric(&mech2);
    let split = split_with_shift(h, &params, z_b, &mut work);

    // (3), (4) noise both halves
    let noisy_small = split::noise_small_counted(
        &split.small.to_real(),
        params.threshold,
        &mech2,
        rng,
        &mut work,
    );
    let noisy_large = noise_large(&split.large, &mech2, rng);
    work.add(noisy_large.len() as u64);

    if let Some(t) = trace.as_mut() {
        let (h_a, h_b) = split::perturbed_histograms(h, &params, z_b);
        t.params = Some(params);
        t.h_a = Some(h_a);
        t.z_b = Some(z_b);
        t.h_b = Some(h_b);
        t.h_bs = Some(split.small.clone());
        t.h_bl = Some(split.large.clone());
        t.h_cs = Some(noisy_small.clone());
        t.h_cl = Some(noisy_large.clone());
    }

    // (5), (6) dispatch
    let histogram = match path {
        Path::Low => {
            let low = low::low_privacy_traced(
                &noisy_small,
                &noisy_large,
                params.threshold,
                params.multiplicity,
                &mut work,
            )?;
            let out = low.h_e.clone();
            if let Some(t) = trace.as_mut() {
                t.low = Some(low);
            }
            out
        }
        Path::High => {
            if !(budget.eps3 > 0.0) {
                return Err(param("the high-privacy path needs eps3 > 0"));
            }
            let high = high::high_privacy_traced(
                h,
                &noisy_large,
                params.threshold,
                n_estimate,
                budget.eps3,
                rng,
                &mut work,
            )?;
            let out = high.h_y.clone();
            if let Some(t) = trace.as_mut() {
                t.high = Some(high);
            }
            out
        }
    };

    Ok((
        MechanismOutput {
            histogram,
            n_estimate,
            path,
            trace,
        },
        work,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::{RandomSource, ScriptedNoise, ZeroNoise};

    fn h(e: &[(u64, u64)]) -> AnonymizedHistogram {
        AnonymizedHistogram::new(e.to_vec()).unwrap()
    }

    #[test]
    fn empty_release_when_total_clamps_to_zero() {
        let b = PrivacyBudget::new(1.0).unwrap();
        let out = privhist(&AnonymizedHistogram::empty(), &b, &mut ZeroNoise).unwrap();
        assert!(out.histogram.is_empty());
        assert_eq!(out.n_estimate, 0);

        let mut noise = ScriptedNoise::new([-10], []);
        let out = privhist(&h(&[(2, 1)]), &b, &mut noise).unwrap();
        assert_eq!((out.histogram.is_empty(), out.n_estimate), (true, 0));
    }

    #[test]
    fn privatize_total_examples() {
        assert_eq!(privatize_total(5, 1.0, &mut ZeroNoise).unwrap(), 5);
        assert_eq!(privatize_total(0, 1.0, &mut ScriptedNoise::new([-3], [])).unwrap(), 0);
        assert!(privatize_total(5, 0.0, &mut ZeroNoise).is_err());
    }

    #[test]
    fn zero_noise_low_path_is_exact() {
        let base = h(&[(1, 2), (3, 1)]);
        let out = privhist_traced(&base, &PrivacyBudget::new(9.0).unwrap(), &mut ZeroNoise).unwrap();
        assert_eq!(out.histogram, base);
        assert_eq!(out.n_estimate, 5);
        let t = out.trace.unwrap();
        let p = t.params.unwrap();
        assert_eq!((p.threshold, p.multiplicity), (3, 4));
        assert_eq!(t.h_bs.unwrap(), h(&[(1, 2), (3, 5)]));
        assert_eq!(t.h_bl.unwrap(), vec![4; 4]);
        let low = t.low.unwrap();
        assert_eq!(low.h_d, h(&[(1, 2), (3, 5), (4, 4)]));
    }

    #[test]
    fn zero_noise_high_path_is_exact_below_threshold() {
        // n = 12, ε = 1 → T = ⌈√12⌉ = 4 covers every count.
        let base = h(&[(1, 3), (2, 1), (3, 1), (4, 1)]);
        let out = privhist_traced(&base, &PrivacyBudget::new(1.0).unwrap(), &mut ZeroNoise).unwrap();
        assert_eq!(out.path, Path::High);
        assert_eq!(out.histogram, base);
    }

    #[test]
    fn deterministic_given_seed() {
        let base = h(&[(1, 5), (2, 3), (7, 2), (40, 1)]);
        for eps in [0.5, 3.0] {
            let b = PrivacyBudget::new(eps).unwrap();
            let a = privhist(&base, &b, &mut RandomSource::new(77)).unwrap();
            let c = privhist(&base, &b, &mut RandomSource::new(77)).unwrap();
            assert_eq!(a, c);
        }
    }

    #[test]
    fn outputs_are_proper() {
        let base = h(&[(1, 5), (2, 3), (7, 2), (40, 1)]);
        let mut rng = RandomSource::new(3);
        for eps in [0.1, 0.5, 1.0, 2.0, 8.0] {
            let b = PrivacyBudget::new(eps).unwrap();
            for _ in 0..200 {
                let out = privhist(&base, &b, &mut rng).unwrap();
                assert!(out.histogram.entries().iter().all(|&(c, p)| c > 0 && p > 0));
            }
        }
    }

    #[test]
    fn trace_serializes() {
        let base = h(&[(1, 2), (3, 1)]);
        for eps in [0.5, 4.0] {
            let out = privhist_traced(&base, &PrivacyBudget::new(eps).unwrap(), &mut RandomSource::new(1)).unwrap();
            let json = out.trace.as_ref().unwrap().to_json();
            assert!(json.contains("\"h_bs\""));
            assert!(json.contains(if eps > 1.0 { "\"h_e\"" } else { "\"h_y\"" }));
        }
        let plain = privhist(&base, &PrivacyBudget::new(4.0).unwrap(), &mut RandomSource::new(1)).unwrap();
        assert!(plain.trace.is_none());
    }
}
