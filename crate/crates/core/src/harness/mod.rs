//! Reproducible experiments: utility sweeps, head-to-heads against the
//! baseline, and the Monte-Carlo privacy audit.

mod audit;
mod generate;
mod utility;

use std::path::Path;

use serde::de::DeserializeOwned;

use crate::error::{Error, Result};

pub use audit::{
    audit_pairs, clopper_pearson_lower, clopper_pearson_upper, enumerate_histograms,
    incorrect_prevalence_noise, neighbor_pairs, pair_label, run_privacy_audit, tally_outcomes,
    AuditConfig, AuditMechanism, AuditReport, AuditRow, MAX_AUDIT_ITEMS,
};
pub use generate::{generate_histogram, two_scale, two_scale_blocks, Generator};
pub use utility::{
    run_utility_experiment, write_csv, write_json, ExperimentConfig, MechanismKind, UtilityRow,
};

/// Reads a `.toml` config, or JSON for any other extension.
fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => toml::from_str(&text).map_err(|e| Error::Config(e.to_string())),
        _ => serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string())),
    }
}
