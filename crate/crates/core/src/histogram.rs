//! Succinct anonymized histograms.
//!
//! A histogram is stored in prevalence form: a list of `(count, prevalence)`
//! pairs sorted by count, where the prevalence of `r` is the number of symbols
//! that appeared exactly `r` times. A histogram over `n` items has at most
//! `√(2n)` distinct counts, so every operation here runs in time proportional
//! to the number of entries rather than the number of items.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Multiset of positive counts, stored as strictly increasing `(count, prevalence)` pairs.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, u64)>", into = "Vec<(u64, u64)>")]
pub struct AnonymizedHistogram {
    entries: Vec<(u64, u64)>,
}

impl AnonymizedHistogram {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds a histogram from canonical entries. Counts must be strictly
    /// increasing and every count and prevalence must be positive.
    pub fn new(entries: Vec<(u64, u64)>) -> Result<Self> {
        for (i, &(count, prevalence)) in entries.iter().enumerate() {
            if count == 0 {
                return Err(Error::Histogram("count 0 is not allowed".into()));
            }
            if prevalence == 0 {
                return Err(Error::Histogram(format!("count {count} has zero prevalence")));
            }
            if i > 0 && entries[i - 1].0 >= count {
                return Err(Error::Histogram(format!(
                    "counts must be strictly increasing ({} then {count})",
                    entries[i - 1].0
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Aggregates an unordered multiset of counts. Zero counts are dropped.
    pub fn from_counts<I: IntoIterator<Item = u64>>(counts: I) -> Self {
        Self::from_prevalences(counts.into_iter().map(|c| (c, 1)))
    }

    /// Aggregates unordered `(count, prevalence)` pairs, summing repeated
    /// counts and dropping zero counts or prevalences.
    pub fn from_prevalences<I: IntoIterator<Item = (u64, u64)>>(pairs: I) -> Self {
        let mut map: BTreeMap<u64, u64> = BTreeMap::new();
        for (count, prevalence) in pairs {
            if count > 0 && prevalence > 0 {
                *map.entry(count).or_default() += prevalence;
            }
        }
        Self {
            entries: map.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(u64, u64)] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<(u64, u64)> {
        self.entries
    }

    /// Number of distinct counts.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of items, `Σ count·prevalence`.
    pub fn total_items(&self) -> u64 {
        self.entries.iter().map(|&(c, p)| c * p).sum()
    }

    /// Number of symbols, `Σ prevalence`.
    pub fn support_size(&self) -> u64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    pub fn max_count(&self) -> Option<u64> {
        self.entries.last().map(|&(c, _)| c)
    }

    /// Prevalence of `count` (0 if absent).
    pub fn prevalence(&self, count: u64) -> u64 {
        match self.entries.binary_search_by_key(&count, |&(c, _)| c) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0,
        }
    }

    pub fn to_real(&self) -> RealHistogram {
        RealHistogram {
            entries: self.entries.iter().map(|&(c, p)| (c, p as f64)).collect(),
        }
    }

    pub fn sorted_counts(&self) -> SortedCounts {
        SortedCounts::from(self)
    }

    /// Iterates every count with multiplicity, largest first.
    ///
    /// This materializes the item-level view and is meant for small inputs
    /// and tests.
    pub fn counts_desc(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries
            .iter()
            .rev()
            .flat_map(|&(c, p)| std::iter::repeat_n(c, p as usize))
    }
}

impl TryFrom<Vec<(u64, u64)>> for AnonymizedHistogram {
    type Error = Error;

    fn try_from(entries: Vec<(u64, u64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<AnonymizedHistogram> for Vec<(u64, u64)> {
    fn from(h: AnonymizedHistogram) -> Self {
        h.entries
    }
}

impl Add for &AnonymizedHistogram {
    type Output = AnonymizedHistogram;

    fn add(self, rhs: Self) -> AnonymizedHistogram {
        let entries = merge_entries(&self.entries, &rhs.entries, |a, b| a + b, |p| *p == 0);
        AnonymizedHistogram { entries }
    }
}

/// Improper histogram whose prevalences may be negative or fractional.
///
/// Counts are strictly increasing and positive. Entries with a prevalence of
/// exactly zero are not stored.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(u64, f64)>", into = "Vec<(u64, f64)>")]
pub struct RealHistogram {
    entries: Vec<(u64, f64)>,
}

impl RealHistogram {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(entries: Vec<(u64, f64)>) -> Result<Self> {
        check_increasing(entries.iter().map(|e| e.0))?;
        if let Some(&(c, _)) = entries.iter().find(|e| !e.1.is_finite()) {
            return Err(Error::Histogram(format!("non-finite prevalence at count {c}")));
        }
        let entries = entries.into_iter().filter(|e| e.1 != 0.0).collect();
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn prevalence(&self, count: u64) -> f64 {
        match self.entries.binary_search_by_key(&count, |&(c, _)| c) {
            Ok(i) => self.entries[i].1,
            Err(_) => 0.0,
        }
    }

    /// `Σ prevalence`.
    pub fn mass(&self) -> f64 {
        self.entries.iter().map(|e| e.1).sum()
    }

    /// `Σ count·prevalence`.
    pub fn first_moment(&self) -> f64 {
        self.entries.iter().map(|&(c, p)| c as f64 * p).sum()
    }

    /// Converts to a proper histogram if every prevalence is a nonnegative integer.
    pub fn to_anonymized(&self) -> Result<AnonymizedHistogram> {
        let mut out = Vec::with_capacity(self.entries.len());
        for &(c, p) in &self.entries {
            if p < 0.0 || p.fract() != 0.0 {
                return Err(Error::Histogram(format!(
                    "prevalence {p} at count {c} is not a nonnegative integer"
                )));
            }
            out.push((c, p as u64));
        }
        AnonymizedHistogram::new(out)
    }
}

impl TryFrom<Vec<(u64, f64)>> for RealHistogram {
    type Error = Error;

    fn try_from(entries: Vec<(u64, f64)>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<RealHistogram> for Vec<(u64, f64)> {
    fn from(h: RealHistogram) -> Self {
        h.entries
    }
}

impl From<&AnonymizedHistogram> for RealHistogram {
    fn from(h: &AnonymizedHistogram) -> Self {
        h.to_real()
    }
}

impl Add for &RealHistogram {
    type Output = RealHistogram;

    fn add(self, rhs: Self) -> RealHistogram {
        let entries = merge_entries(&self.entries, &rhs.entries, |a, b| a + b, |p| *p == 0.0);
        RealHistogram { entries }
    }
}

/// Cumulative prevalences `φ_{r+} = Σ_{s≥r} φ_s` sampled at strictly increasing counts.
///
/// When the counts are not contiguous the histogram is understood to be
/// supported on the listed counts only, so `φ_{c_i} = v_i − v_{i+1}` with the
/// value past the last entry taken as zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CumulativePrevalence {
    entries: Vec<(u64, f64)>,
}

impl CumulativePrevalence {
    pub fn new(entries: Vec<(u64, f64)>) -> Result<Self> {
        check_increasing(entries.iter().map(|e| e.0))?;
        Ok(Self { entries })
    }

    /// Cumulative prevalences of `h` at each of `points` (strictly increasing).
    pub fn at_points(h: &RealHistogram, points: &[u64]) -> Result<Self> {
        check_increasing(points.iter().copied())?;
        let mut values = vec![0.0; points.len()];
        let mut running = 0.0;
        let mut idx = h.entries.len();
        for (slot, &r) in points.iter().enumerate().rev() {
            while idx > 0 && h.entries[idx - 1].0 >= r {
                idx -= 1;
                running += h.entries[idx].1;
            }
            values[slot] = running;
        }
        Ok(Self {
            entries: points.iter().copied().zip(values).collect(),
        })
    }

    pub fn entries(&self) -> &[(u64, f64)] {
        &self.entries
    }

    pub fn counts(&self) -> impl Iterator<Item = u64> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Replaces the values, keeping the counts.
    pub fn with_values(&self, values: &[f64]) -> Result<Self> {
        if values.len() != self.entries.len() {
            return Err(Error::Contract(format!(
                "expected {} values, got {}",
                self.entries.len(),
                values.len()
            )));
        }
        Ok(Self {
            entries: self.counts().zip(values.iter().copied()).collect(),
        })
    }

    pub fn is_non_increasing(&self) -> bool {
        self.entries.windows(2).all(|w| w[0].1 >= w[1].1)
    }
}

/// Dense cumulative prevalences of `h` at `1..=up_to`.
pub fn cumulative(h: &RealHistogram, up_to: u64) -> CumulativePrevalence {
    let points: Vec<u64> = (1..=up_to).collect();
    CumulativePrevalence::at_points(h, &points).expect("1..=up_to is increasing")
}

/// Inverse of [`cumulative`]: `φ_r = φ_{r+} − φ_{(r+1)+}`.
pub fn from_cumulative(c: &CumulativePrevalence) -> RealHistogram {
    let e = &c.entries;
    let entries = (0..e.len())
        .map(|i| {
            let next = e.get(i + 1).map_or(0.0, |x| x.1);
            (e[i].0, e[i].1 - next)
        })
        .filter(|x| x.1 != 0.0)
        .collect();
    RealHistogram { entries }
}

/// Non-increasing list of positive counts `n_(1) ≥ n_(2) ≥ …`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SortedCounts {
    values: Vec<u64>,
}

impl SortedCounts {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.contains(&0) {
            return Err(Error::Histogram("sorted counts must be positive".into()));
        }
        if values.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::Histogram("sorted counts must be non-increasing".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn into_histogram(self) -> AnonymizedHistogram {
        AnonymizedHistogram::from(&self)
    }
}

impl From<&AnonymizedHistogram> for SortedCounts {
    fn from(h: &AnonymizedHistogram) -> Self {
        Self {
            values: h.counts_desc().collect(),
        }
    }
}

impl From<&SortedCounts> for AnonymizedHistogram {
    fn from(s: &SortedCounts) -> Self {
        AnonymizedHistogram::from_counts(s.values.iter().copied())
    }
}

/// Sorted-ℓ1 (earth mover's) distance `Σ_i |n_(i)(h1) − n_(i)(h2)|`.
///
/// Walks both entry lists from the largest count down, pairing runs of equal
/// rank. Runs in `O(t1 + t2)`.
pub fn sorted_l1(h1: &AnonymizedHistogram, h2: &AnonymizedHistogram) -> u64 {
    let mut a = h1.entries.iter().rev().copied();
    let mut b = h2.entries.iter().rev().copied();
    let mut cur_a = a.next();
    let mut cur_b = b.next();
    let mut total = 0u64;
    loop {
        match (cur_a, cur_b) {
            (Some((ca, pa)), Some((cb, pb))) => {
                let k = pa.min(pb);
                total += k * ca.abs_diff(cb);
                cur_a = if pa == k { a.next() } else { Some((ca, pa - k)) };
                cur_b = if pb == k { b.next() } else { Some((cb, pb - k)) };
            }
            (Some((c, p)), None) | (None, Some((c, p))) => {
                total += c * p;
                total += a.by_ref().chain(b.by_ref()).map(|(c, p)| c * p).sum::<u64>();
                return total;
            }
            (None, None) => return total,
        }
    }
}

/// Upper bounds on [`sorted_l1`]:
/// `(Σ_r |φ_{r+}(h1) − φ_{r+}(h2)|, Σ_r r·|φ_r(h1) − φ_r(h2)|)`.
///
/// The first never exceeds the second and both dominate the distance.
pub fn l1_upper_bounds(h1: &AnonymizedHistogram, h2: &AnonymizedHistogram) -> (u64, u64) {
    // Union of counts, ascending, with the prevalence difference at each.
    let diffs = merge_entries(
        &signed(&h1.entries),
        &negated(&h2.entries),
        |a, b| a + b,
        |_| false,
    );

    let bound_prev = diffs
        .iter()
        .map(|&(r, d)| r as i128 * d.abs())
        .sum::<i128>() as u64;

    // φ_{r+}(h1) − φ_{r+}(h2) is constant on (c_{i−1}, c_i].
    let mut suffix: i128 = diffs.iter().map(|d| d.1).sum();
    let mut prev = 0u64;
    let mut bound_cum: i128 = 0;
    for &(r, d) in &diffs {
        bound_cum += (r - prev) as i128 * suffix.abs();
        suffix -= d;
        prev = r;
    }
    (bound_cum as u64, bound_prev)
}

fn signed(e: &[(u64, u64)]) -> Vec<(u64, i128)> {
    e.iter().map(|&(c, p)| (c, p as i128)).collect()
}

fn negated(e: &[(u64, u64)]) -> Vec<(u64, i128)> {
    e.iter().map(|&(c, p)| (c, -(p as i128))).collect()
}

fn check_increasing(mut counts: impl Iterator<Item = u64>) -> Result<()> {
    let Some(mut prev) = counts.next() else {
        return Ok(());
    };
    if prev == 0 {
        return Err(Error::Histogram("count 0 is not allowed".into()));
    }
    for c in counts {
        if c <= prev {
            return Err(Error::Histogram(format!(
                "counts must be strictly increasing ({prev} then {c})"
            )));
        }
        prev = c;
    }
    Ok(())
}

/// Merges two count-sorted entry lists, combining equal counts and dropping
/// entries for which `is_zero` holds.
fn merge_entries<P: Copy>(
    a: &[(u64, P)],
    b: &[(u64, P)],
    combine: impl Fn(P, P) -> P,
    is_zero: impl Fn(&P) -> bool,
) -> Vec<(u64, P)> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(x), Some(y)) => match x.0.cmp(&y.0) {
                Ordering::Less => {
                    i += 1;
                    *x
                }
                Ordering::Greater => {
                    j += 1;
                    *y
                }
                Ordering::Equal => {
                    i += 1;
                    j += 1;
                    (x.0, combine(x.1, y.1))
                }
            },
            (Some(x), None) => {
                i += 1;
                *x
            }
            (None, Some(y)) => {
                j += 1;
                *y
            }
            (None, None) => unreachable!(),
        };
        if !is_zero(&next.1) {
            out.push(next);
        }
    }
    out
}
