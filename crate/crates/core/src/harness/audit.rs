//! Monte-Carlo privacy audit over exhaustively enumerated neighbor pairs.
//!
//! Each input is released `runs_per_input` times and every distinct output
//! `(H, N)` is tallied. For a neighbor pair the audit bounds
//! `ln(P[o | a] / P[o | b])` from below with one-sided Clopper–Pearson
//! intervals, Bonferroni-corrected over all outcomes and both directions,
//! and flags the pair when that bound exceeds `ε`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::error::{param, Result};
use crate::histogram::{sorted_l1, AnonymizedHistogram};
use crate::mechanism::{privhist, MechanismOutput, PrivacyBudget};
use crate::noise::{clamped_shift, GeometricMechanism, NoiseSource, RandomSource, DEFAULT_SEED};

pub const MAX_AUDIT_ITEMS: u64 = 8;
const CHUNK: u64 = 1 << 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuditMechanism {
    Privhist,
    /// Geometric noise on the nonzero prevalences only; not private.
    IncorrectPrevalenceNoise,
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_mechanism() -> AuditMechanism {
    AuditMechanism::Privhist
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct AuditConfig {
    pub max_items: u64,
    pub epsilon: f64,
    pub runs_per_input: u64,
    pub confidence: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mechanism")]
    pub mechanism: AuditMechanism,
}

impl AuditConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_items > MAX_AUDIT_ITEMS {
            return Err(param(format!("max-items must be <= {MAX_AUDIT_ITEMS}")));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(param("epsilon must be positive"));
        }
        if self.runs_per_input == 0 {
            return Err(param("runs-per-input must be >= 1"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(param("confidence must lie in (0, 1)"));
        }
        Ok(())
    }

    /// Reads a `.toml` or `.json` config.
    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let cfg: Self = super::load_config(path)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditRow {
    pub pair_id: String,
    pub left_items: u64,
    pub right_items: u64,
    pub distinct_outcomes: usize,
    /// Largest `|ln(p̂_a / p̂_b)|` over outcomes seen under both inputs.
    pub max_log_ratio: f64,
    /// Largest lower confidence bound on the log-ratio, either direction.
    pub lower_bound: f64,
    /// Upper confidence bound on the log-ratio at the outcome attaining
    /// `lower_bound`; infinite when that outcome never occurred under the
    /// other input.
    pub upper_bound: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub epsilon: f64,
    pub mechanism: AuditMechanism,
    pub runs_per_input: u64,
    pub confidence: f64,
    pub inputs: usize,
    pub flagged: usize,
    pub rows: Vec<AuditRow>,
}

/// Every histogram with at most `max_items` items, the empty one included,
/// ordered by item count.
pub fn enumerate_histograms(max_items: u64) -> Vec<AnonymizedHistogram> {
    let mut out = Vec::new();
    for n in 0..=max_items {
        let mut parts = Vec::new();
        partitions(n, n, &mut parts, &mut out);
    }
    out
}

fn partitions(rest: u64, cap: u64, parts: &mut Vec<u64>, out: &mut Vec<AnonymizedHistogram>) {
    if rest == 0 {
        out.push(AnonymizedHistogram::from_counts(parts.iter().copied()));
        return;
    }
    for part in (1..=cap.min(rest)).rev() {
        parts.push(part);
        partitions(rest - part, part, parts, out);
        parts.pop();
    }
}

/// Index pairs `(i, j)` with `sorted_l1 == 1`, `i` having one item fewer.
pub fn neighbor_pairs(hs: &[AnonymizedHistogram]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for (i, a) in hs.iter().enumerate() {
        for (j, b) in hs.iter().enumerate() {
            if b.total_items() == a.total_items() + 1 && sorted_l1(a, b) == 1 {
                pairs.push((i, j));
            }
        }
    }
    pairs
}

/// The broken release: `N` as in privhist with half the budget, then
/// `G(e^{−ε/2})` noise on each nonzero prevalence, clamped at zero. Counts
/// whose prevalence is zero never appear, which leaks the support.
pub fn incorrect_prevalence_noise<R: NoiseSource + ?Sized>(
    h: &AnonymizedHistogram,
    epsilon: f64,
    rng: &mut R,
) -> Result<MechanismOutput> {
    let mech = GeometricMechanism::from_epsilon(epsilon / 2.0)?;
    let n_estimate = clamped_shift(h.total_items(), rng.geometric(&mech));
    let entries: Vec<(u64, u64)> = h
        .entries()
        .iter()
        .map(|&(c, p)| (c, clamped_shift(p, rng.geometric(&mech))))
        .filter(|&(_, p)| p > 0)
        .collect();
    Ok(MechanismOutput {
        histogram: AnonymizedHistogram::new(entries)?,
        n_estimate,
        path: PrivacyBudget::new(epsilon)?.path(),
        trace: None,
    })
}

type Outcome = (AnonymizedHistogram, u64);
type Tally = HashMap<Outcome, u64>;

fn release(cfg: &AuditConfig, budget: &PrivacyBudget, h: &AnonymizedHistogram, rng: &mut RandomSource) -> Result<Outcome> {
    let out = match cfg.mechanism {
        AuditMechanism::Privhist => privhist(h, budget, rng)?,
        AuditMechanism::IncorrectPrevalenceNoise => incorrect_prevalence_noise(h, cfg.epsilon, rng)?,
    };
    Ok((out.histogram, out.n_estimate))
}

/// Tallies `runs_per_input` releases of `h`, in fixed-size chunks each with
/// its own sub-stream.
pub fn tally_outcomes(cfg: &AuditConfig, input_index: u64, h: &AnonymizedHistogram) -> Result<HashMap<(AnonymizedHistogram, u64), u64>> {
    let budget = PrivacyBudget::new(cfg.epsilon)?;
    let chunks = cfg.runs_per_input.div_ceil(CHUNK);
    let partial: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = RandomSource::substream(cfg.seed, (input_index << 32) | c);
            let runs = CHUNK.min(cfg.runs_per_input - c * CHUNK);
            let mut t = Tally::new();
            for _ in 0..runs {
                *t.entry(release(cfg, &budget, h, &mut rng)?).or_default() += 1;
            }
            Ok(t)
        })
        .collect::<Result<_>>()?;
    let mut total = Tally::new();
    for t in partial {
        for (k, v) in t {
            *total.entry(k).or_default() += v;
        }
    }
    Ok(total)
}

/// One-sided Clopper–Pearson lower bound on a binomial proportion.
pub fn clopper_pearson_lower(successes: u64, trials: u64, alpha: f64) -> f64 {
    if successes == 0 {
        return 0.0;
    }
    Beta::new(successes as f64, (trials - successes + 1) as f64)
        .expect("positive shape parameters")
        .inverse_cdf(alpha)
}

/// One-sided Clopper–Pearson upper bound on a binomial proportion.
pub fn clopper_pearson_upper(successes: u64, trials: u64, alpha: f64) -> f64 {
    if successes >= trials {
        return 1.0;
    }
    Beta::new((successes + 1) as f64, (trials - successes) as f64)
        .expect("positive shape parameters")
        .inverse_cdf(1.0 - alpha)
}

struct PairStats {
    outcomes: usize,
    max_log_ratio: f64,
    lower_bound: f64,
    upper_bound: f64,
}

fn compare(a: &Tally, b: &Tally, runs: u64, confidence: f64) -> PairStats {
    let outcomes = a.len() + b.keys().filter(|k| !a.contains_key(*k)).count();
    // two directions per outcome, two one-sided bounds per comparison
    let alpha = (1.0 - confidence) / (4.0 * outcomes.max(1) as f64);
    let upper_at_zero = clopper_pearson_upper(0, runs, alpha);
    let runs_f = runs as f64;

    let mut max_log_ratio: f64 = 0.0;
    for (o, &ca) in a {
        if let Some(&cb) = b.get(o) {
            max_log_ratio = max_log_ratio.max((ca as f64 / cb as f64).ln().abs());
        }
    }

    let mut lower_bound = f64::NEG_INFINITY;
    let mut upper_bound = f64::NEG_INFINITY;
    for (x, y) in [(a, b), (b, a)] {
        let mut seen: Vec<(&Outcome, u64)> = x.iter().map(|(o, &c)| (o, c)).collect();
        seen.sort_unstable_by_key(|s| std::cmp::Reverse(s.1));
        for (o, cx) in seen {
            let cy = y.get(o).copied().unwrap_or(0);
            // CP lower ≤ p̂ and CP upper ≥ max(p̂, upper at zero)
            let ceiling = ((cx as f64 / runs_f) / (cy as f64 / runs_f).max(upper_at_zero)).ln();
            if ceiling <= lower_bound {
                continue;
            }
            let lb = (clopper_pearson_lower(cx, runs, alpha) / clopper_pearson_upper(cy, runs, alpha)).ln();
            if lb > lower_bound {
                lower_bound = lb;
                upper_bound = (clopper_pearson_upper(cx, runs, alpha) / clopper_pearson_lower(cy, runs, alpha)).ln();
            }
        }
    }
    PairStats {
        outcomes,
        max_log_ratio,
        lower_bound,
        upper_bound,
    }
}

/// Audits all neighbor pairs with at most `cfg.max_items` items.
pub fn run_privacy_audit(cfg: &AuditConfig) -> Result<AuditReport> {
    cfg.validate()?;
    let hs = enumerate_histograms(cfg.max_items);
    let pairs = neighbor_pairs(&hs);
    audit_pairs(cfg, &hs, &pairs)
}

/// Audits the given pairs of `hs`.
pub fn audit_pairs(cfg: &AuditConfig, hs: &[AnonymizedHistogram], pairs: &[(usize, usize)]) -> Result<AuditReport> {
    cfg.validate()?;
    let mut used: Vec<usize> = pairs.iter().flat_map(|&(i, j)| [i, j]).collect();
    used.sort_unstable();
    used.dedup();
    let mut tallies: HashMap<usize, Tally> = HashMap::new();
    for &i in &used {
        tallies.insert(i, tally_outcomes(cfg, i as u64, &hs[i])?);
    }

    let rows: Vec<AuditRow> = pairs
        .iter()
        .map(|&(i, j)| {
            let s = compare(&tallies[&i], &tallies[&j], cfg.runs_per_input, cfg.confidence);
            AuditRow {
                pair_id: format!("{} ~ {}", pair_label(&hs[i]), pair_label(&hs[j])),
                left_items: hs[i].total_items(),
                right_items: hs[j].total_items(),
                distinct_outcomes: s.outcomes,
                max_log_ratio: s.max_log_ratio,
                lower_bound: s.lower_bound,
                upper_bound: s.upper_bound,
                flagged: s.lower_bound > cfg.epsilon,
            }
        })
        .collect();
    Ok(AuditReport {
        epsilon: cfg.epsilon,
        mechanism: cfg.mechanism,
        runs_per_input: cfg.runs_per_input,
        confidence: cfg.confidence,
        inputs: used.len(),
        flagged: rows.iter().filter(|r| r.flagged).count(),
        rows,
    })
}

/// `{1:2,3:1}` style label in prevalence form.
pub fn pair_label(h: &AnonymizedHistogram) -> String {
    let body: Vec<String> = h.entries().iter().map(|(c, p)| format!("{c}:{p}")).collect();
    format!("{{{}}}", body.join(","))
}

impl AuditReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(e: &[(u64, u64)]) -> AnonymizedHistogram {
        AnonymizedHistogram::new(e.to_vec()).unwrap()
    }

    #[test]
    fn partition_counts() {
        // p(0..=5) = 1, 1, 2, 3, 5, 7
        assert_eq!(enumerate_histograms(5).len(), 19);
        assert_eq!(enumerate_histograms(8).len(), 1 + 1 + 2 + 3 + 5 + 7 + 11 + 15 + 22);
    }

    #[test]
    fn neighbors_add_or_remove_one_item() {
        let hs = enumerate_histograms(3);
        let pairs = neighbor_pairs(&hs);
        // ∅–{1}, {1}–{2}, {1}–{1,1}, {2}–{3}, {2}–{2,1}, {1,1}–{2,1}, {1,1}–{1,1,1}
        assert_eq!(pairs.len(), 7);
        for (i, j) in pairs {
            assert_eq!(hs[j].total_items(), hs[i].total_items() + 1);
        }
    }

    #[test]
    fn clopper_pearson_known_values() {
        // x = 0: upper = 1 − α^{1/n}
        let u = clopper_pearson_upper(0, 100, 0.05);
        assert!((u - (1.0 - 0.05f64.powf(0.01))).abs() < 1e-9);
        // x = n: lower = α^{1/n}
        let l = clopper_pearson_lower(100, 100, 0.05);
        assert!((l - 0.05f64.powf(0.01)).abs() < 1e-9);
        let (l, u) = (clopper_pearson_lower(50, 100, 0.025), clopper_pearson_upper(50, 100, 0.025));
        assert!(l < 0.5 && u > 0.5 && (0.5 - l - (u - 0.5)).abs() < 1e-9);
    }

    #[test]
    fn identical_inputs_have_ratio_near_zero() {
        let cfg = AuditConfig {
            max_items: 2,
            epsilon: 1.0,
            runs_per_input: 20_000,
            confidence: 0.99,
            seed: 1,
            mechanism: AuditMechanism::Privhist,
        };
        let x = h(&[(1, 2)]);
        let a = tally_outcomes(&cfg, 0, &x).unwrap();
        let b = tally_outcomes(&cfg, 1, &x).unwrap();
        let s = compare(&a, &b, cfg.runs_per_input, cfg.confidence);
        assert!(s.lower_bound <= 0.0);
        let heavy = a.values().max().unwrap();
        assert!(*heavy > 1000);
    }

    #[test]
    fn incorrect_mechanism_is_flagged() {
        let cfg = AuditConfig {
            max_items: 3,
            epsilon: 1.0,
            runs_per_input: 20_000,
            confidence: 0.99,
            seed: 3,
            mechanism: AuditMechanism::IncorrectPrevalenceNoise,
        };
        let hs = vec![h(&[(1, 2)]), h(&[(1, 1), (2, 1)])];
        let report = audit_pairs(&cfg, &hs, &[(0, 1)]).unwrap();
        assert_eq!(report.rows[0].pair_id, "{1:2} ~ {1:1,2:1}");
        assert!(report.rows[0].flagged);
    }

    #[test]
    fn small_privhist_audit_is_clean() {
        let cfg = AuditConfig {
            max_items: 2,
            epsilon: 2.0,
            runs_per_input: 20_000,
            confidence: 0.99,
            seed: 5,
            mechanism: AuditMechanism::Privhist,
        };
        let report = run_privacy_audit(&cfg).unwrap();
        assert_eq!(report.rows.len(), 3);
        assert_eq!(report.flagged, 0);
        let mut csv = Vec::new();
        report.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 4);
    }

    #[test]
    fn validation() {
        let ok = AuditConfig {
            max_items: 8,
            epsilon: 1.0,
            runs_per_input: 1,
            confidence: 0.9,
            seed: 0,
            mechanism: AuditMechanism::Privhist,
        };
        assert!(ok.validate().is_ok());
        assert!(AuditConfig { max_items: 9, ..ok.clone() }.validate().is_err());
        assert!(AuditConfig { epsilon: 0.0, ..ok.clone() }.validate().is_err());
        assert!(AuditConfig { confidence: 1.0, ..ok.clone() }.validate().is_err());
        assert!(AuditConfig { runs_per_input: 0, ..ok }.validate().is_err());
    }
}
