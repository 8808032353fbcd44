//! Synthetic input histograms.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{param, Result};
use crate::format::read_histogram;
use crate::histogram::AnonymizedHistogram;
use crate::noise::RandomSource;

/// Input family for experiments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Generator {
    /// `n` samples into `k` equally likely bins.
    UniformK { k: u64 },
    /// `n` samples from `p_i ∝ i^{−s}` over `k` bins (`k = n` when absent).
    Zipf {
        s: f64,
        #[serde(default)]
        k: Option<u64>,
    },
    /// One symbol holding every item.
    SingleHeavy,
    /// The paired-prevalence hard family: for each block `i = 1..k`,
    /// `φ_{4i} = φ_{4i+3} = x_i` and `φ_{4i+1} = φ_{4i+2} = 1 − x_i`, with
    /// `k = ⌊√n/10⌋` and one extra symbol holding the remaining items. Bits
    /// are drawn at random unless given.
    TwoScale {
        #[serde(default)]
        bits: Option<Vec<bool>>,
    },
    FromFile { path: PathBuf },
}

impl Generator {
    /// Number of symbols the baseline must pad to, when the family fixes it.
    pub fn domain_size(&self, n: u64) -> Option<u64> {
        match self {
            Generator::UniformK { k } => Some(*k),
            Generator::Zipf { k, .. } => Some(k.unwrap_or(n)),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Generator::UniformK { k } => format!("uniform-k(k={k})"),
            Generator::Zipf { s, k: Some(k) } => format!("zipf(s={s},k={k})"),
            Generator::Zipf { s, k: None } => format!("zipf(s={s},k=n)"),
            Generator::SingleHeavy => "single-heavy".into(),
            Generator::TwoScale { .. } => "two-scale".into(),
            Generator::FromFile { path } => format!("file({})", path.display()),
        }
    }
}

/// Draws an input histogram with `n` items. `from-file` ignores `n` and `rng`.
pub fn generate_histogram(gen: &Generator, n: u64, rng: &mut RandomSource) -> Result<AnonymizedHistogram> {
    match gen {
        Generator::UniformK { k } => {
            if *k == 0 {
                return Err(param("uniform-k needs k >= 1"));
            }
            multinomial(n, &vec![1.0; *k as usize], rng)
        }
        Generator::Zipf { s, k } => {
            if !(s.is_finite() && *s >= 0.0) {
                return Err(param(format!("zipf exponent must be finite and >= 0, got {s}")));
            }
            let k = k.unwrap_or(n.max(1));
            if k == 0 {
                return Err(param("zipf needs k >= 1"));
            }
            let weights: Vec<f64> = (1..=k).map(|i| (i as f64).powf(-s)).collect();
            multinomial(n, &weights, rng)
        }
        Generator::SingleHeavy => Ok(AnonymizedHistogram::from_counts([n])),
        Generator::TwoScale { bits } => {
            let k = two_scale_blocks(n);
            let bits: Vec<bool> = match bits {
                Some(b) if b.len() as u64 == k => b.clone(),
                Some(b) => {
                    return Err(param(format!(
                        "two-scale with n = {n} needs {k} bits, got {}",
                        b.len()
                    )))
                }
                None => (0..k).map(|_| rng.rng().random::<bool>()).collect(),
            };
            two_scale(n, &bits)
        }
        Generator::FromFile { path } => read_histogram(path, None),
    }
}

/// `⌊√n / 10⌋`.
pub fn two_scale_blocks(n: u64) -> u64 {
    ((n as f64).sqrt() / 10.0).floor() as u64
}

/// The two-scale histogram for explicit bits.
pub fn two_scale(n: u64, bits: &[bool]) -> Result<AnonymizedHistogram> {
    let mut counts = Vec::with_capacity(2 * bits.len() + 1);
    for (i, &x) in bits.iter().enumerate() {
        let i = i as u64 + 1;
        if x {
            counts.extend([4 * i, 4 * i + 3]);
        } else {
            counts.extend([4 * i + 1, 4 * i + 2]);
        }
    }
    let used: u64 = counts.iter().sum();
    if used > n {
        return Err(param(format!("{} blocks need more than n = {n} items", bits.len())));
    }
    counts.push(n - used);
    Ok(AnonymizedHistogram::from_counts(counts))
}

/// Exact multinomial draw through sequential conditional binomials. `O(k)`.
fn multinomial(n: u64, weights: &[f64], rng: &mut RandomSource) -> Result<AnonymizedHistogram> {
    let mut suffix = vec![0.0; weights.len() + 1];
    for i in (0..weights.len()).rev() {
        suffix[i] = suffix[i + 1] + weights[i];
    }
    let mut remaining = n;
    let mut counts = Vec::new();
    for (i, &w) in weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        let p = (w / suffix[i]).clamp(0.0, 1.0);
        let c = Binomial::new(remaining, p)
            .map_err(|e| param(format!("binomial: {e}")))?
            .sample(rng.rng());
        remaining -= c;
        counts.push(c);
    }
    Ok(AnonymizedHistogram::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng() -> RandomSource {
        RandomSource::new(42)
    }

    #[test]
    fn single_heavy() {
        let h = generate_histogram(&Generator::SingleHeavy, 7, &mut rng()).unwrap();
        assert_eq!(h.entries(), &[(7, 1)]);
    }

    #[test]
    fn two_scale_hand_instance() {
        // k = 1, x = 0: counts 5 and 6, remainder 100 − 11 = 89
        let g = Generator::TwoScale { bits: Some(vec![false]) };
        let h = generate_histogram(&g, 100, &mut rng()).unwrap();
        assert_eq!(h.entries(), &[(5, 1), (6, 1), (89, 1)]);
        let h = two_scale(100, &[true]).unwrap();
        assert_eq!(h.entries(), &[(4, 1), (7, 1), (89, 1)]);
        assert!(generate_histogram(&Generator::TwoScale { bits: Some(vec![]) }, 100, &mut rng()).is_err());
    }

    #[test]
    fn two_scale_bits_flip_distance() {
        let a = two_scale(10_000, &[false; 10]).unwrap();
        let mut bits = [false; 10];
        bits[3] = true;
        bits[7] = true;
        let b = two_scale(10_000, &bits).unwrap();
        assert_eq!(crate::sorted_l1(&a, &b), 4);
        let r = generate_histogram(&Generator::TwoScale { bits: None }, 10_000, &mut rng()).unwrap();
        assert_eq!(r.total_items(), 10_000);
        assert_eq!(r.support_size(), 21);
    }

    #[test]
    fn samplers_conserve_items() {
        for g in [
            Generator::UniformK { k: 100 },
            Generator::Zipf { s: 1.0, k: Some(50) },
            Generator::Zipf { s: 1.1, k: None },
        ] {
            for n in [0, 1, 17, 5000] {
                let h = generate_histogram(&g, n, &mut rng()).unwrap();
                assert_eq!(h.total_items(), n, "{g:?}");
                if let Some(k) = g.domain_size(n) {
                    assert!(h.support_size() <= k.max(1));
                }
            }
        }
    }

    #[test]
    fn uniform_with_one_bin_and_zipf_zero_is_uniform() {
        let h = generate_histogram(&Generator::UniformK { k: 1 }, 9, &mut rng()).unwrap();
        assert_eq!(h.entries(), &[(9, 1)]);
        // mean bin load of uniform-k is n/k
        let h = generate_histogram(&Generator::Zipf { s: 0.0, k: Some(10) }, 100_000, &mut rng()).unwrap();
        assert_eq!(h.support_size(), 10);
        assert!(h.counts_desc().all(|c| (c as f64 - 10_000.0).abs() < 600.0));
    }

    #[test]
    fn zipf_head_matches_weights() {
        let k = 100u64;
        let h = generate_histogram(&Generator::Zipf { s: 1.0, k: Some(k) }, 1_000_000, &mut rng()).unwrap();
        let harmonic: f64 = (1..=k).map(|i| 1.0 / i as f64).sum();
        let top = h.max_count().unwrap() as f64 / 1e6;
        assert!((top - 1.0 / harmonic).abs() < 0.005);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(generate_histogram(&Generator::UniformK { k: 0 }, 5, &mut rng()).is_err());
        assert!(generate_histogram(&Generator::Zipf { s: -1.0, k: None }, 5, &mut rng()).is_err());
        let missing = Generator::FromFile { path: "/nonexistent/h.tsv".into() };
        assert!(generate_histogram(&missing, 5, &mut rng()).is_err());
    }

    #[test]
    fn config_round_trip() {
        let g: Generator = serde_json::from_str(r#"{"kind":"zipf","s":1.0,"k":1000}"#).unwrap();
        assert_eq!(g, Generator::Zipf { s: 1.0, k: Some(1000) });
        let g: Generator = toml::from_str("kind = \"single-heavy\"").unwrap();
        assert_eq!(g, Generator::SingleHeavy);
    }
}
