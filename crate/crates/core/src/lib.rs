//! Differentially private release of anonymized histograms.
//!
//! An anonymized histogram is the multiset of symbol counts of a dataset with
//! the labels thrown away. This crate releases such histograms under
//! `ε`-differential privacy in time sublinear in the number of items, measures
//! release error in sorted-ℓ1 (earth mover's) distance, and turns releases into
//! private estimates of symmetric distribution properties.
//!
//! Randomness comes from a seedable ChaCha8 stream and samples use ordinary
//! floating point. This is a research tool: it is not hardened against
//! floating-point or seed-recovery side channels.

pub mod error;
pub mod estimators;
pub mod format;
pub mod harness;
pub mod histogram;
pub mod isotonic;
pub mod mechanism;
pub mod noise;

pub use error::{Error, Result};
pub use histogram::{
    cumulative, from_cumulative, l1_upper_bounds, sorted_l1, AnonymizedHistogram,
    CumulativePrevalence, RealHistogram, SortedCounts,
};
pub use mechanism::{privhist, MechanismOutput, Path, PrivacyBudget};
pub use noise::{NoiseSource, RandomSource};
