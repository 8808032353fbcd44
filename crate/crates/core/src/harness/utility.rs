//! Utility-versus-(n, ε) experiments.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::histogram::{sorted_l1, AnonymizedHistogram};
use crate::mechanism::{baseline_noisy_counts, privhist_with, BudgetSplit, PrivacyBudget, ReleaseOptions};
use crate::noise::{RandomSource, DEFAULT_SEED};

use super::generate::{generate_histogram, Generator};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    Privhist,
    Baseline,
}

impl MechanismKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            MechanismKind::Privhist => "privhist",
            MechanismKind::Baseline => "baseline",
        }
    }
}

impl std::str::FromStr for MechanismKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "privhist" => Ok(Self::Privhist),
            "baseline" => Ok(Self::Baseline),
            _ => Err(param(format!("unknown mechanism '{s}' (expected privhist or baseline)"))),
        }
    }
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

fn default_mechanisms() -> Vec<MechanismKind> {
    vec![MechanismKind::Privhist]
}

/// One utility sweep. Each `n` gets one input drawn from `generator`; every
/// trial re-runs the mechanisms on it with fresh noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExperimentConfig {
    pub generator: Generator,
    pub n_grid: Vec<u64>,
    pub epsilon_grid: Vec<f64>,
    pub trials: u64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_mechanisms")]
    pub mechanisms: Vec<MechanismKind>,
    /// Budget split for privhist, as accepted by `BudgetSplit::from_str`.
    #[serde(default)]
    pub budget_split: Option<String>,
    /// Padding length for the baseline. Defaults to the generator's domain
    /// size, or `n` when the family has none.
    #[serde(default)]
    pub baseline_domain: Option<u64>,
    /// Record wall time. Off by default so outputs are reproducible.
    #[serde(default)]
    pub timing: bool,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(param("trials must be >= 1"));
        }
        if self.n_grid.is_empty() || self.epsilon_grid.is_empty() || self.mechanisms.is_empty() {
            return Err(param("n-grid, epsilon-grid and mechanisms must be non-empty"));
        }
        if self.n_grid.len() >= 1 << 12 || self.epsilon_grid.len() >= 1 << 12 || self.trials >= 1 << 32 {
            return Err(param("grid or trial count too large"));
        }
        for &eps in &self.epsilon_grid {
            self.budget(eps)?;
        }
        Ok(())
    }

    /// Reads a `.toml` or `.json` config.
    pub fn from_path(path: &Path) -> Result<Self> {
        let cfg: Self = super::load_config(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn budget(&self, epsilon: f64) -> Result<PrivacyBudget> {
        match &self.budget_split {
            None => PrivacyBudget::new(epsilon),
            Some(s) => PrivacyBudget::with_split(epsilon, s.parse::<BudgetSplit>()?),
        }
    }
}

/// Aggregates over the trials of one `(mechanism, n, ε)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub mechanism: MechanismKind,
    pub n: u64,
    pub epsilon: f64,
    pub trials: u64,
    pub mean_l1: f64,
    pub std_l1: f64,
    /// Mean `|N − n|`; the baseline releases no total.
    pub mean_abs_n_error: Option<f64>,
    pub mean_wall_ms: Option<f64>,
    pub mean_work: f64,
}

struct TrialResult {
    l1: u64,
    n_error: Option<u64>,
    wall_ms: f64,
    work: u64,
}

const INPUT_STREAM: u64 = 1 << 63;

fn trial_label(mech: usize, n_idx: usize, eps_idx: usize, trial: u64) -> u64 {
    ((((mech as u64) << 12 | n_idx as u64) << 12 | eps_idx as u64) << 32) | trial
}

/// Runs every `(mechanism, n, ε)` cell. Trials run in parallel on their own
/// sub-streams and are aggregated in trial order, so the table depends only
/// on the config.
pub fn run_utility_experiment(cfg: &ExperimentConfig) -> Result<Vec<UtilityRow>> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for (n_idx, &n) in cfg.n_grid.iter().enumerate() {
        let mut input_rng = RandomSource::substream(cfg.seed, INPUT_STREAM | n_idx as u64);
        let input = generate_histogram(&cfg.generator, n, &mut input_rng)?;
        let n_true = input.total_items();
        for (m_idx, &mech) in cfg.mechanisms.iter().enumerate() {
            for (e_idx, &eps) in cfg.epsilon_grid.iter().enumerate() {
                let domain = cfg
                    .baseline_domain
                    .or_else(|| cfg.generator.domain_size(n))
                    .unwrap_or(n_true)
                    .max(input.support_size());
                let results: Vec<TrialResult> = (0..cfg.trials)
                    .into_par_iter()
                    .map(|t| {
                        let mut rng = RandomSource::substream(cfg.seed, trial_label(m_idx, n_idx, e_idx, t));
                        run_trial(cfg, mech, &input, eps, domain, &mut rng)
                    })
                    .collect::<Result<_>>()?;
                rows.push(aggregate(mech, n_true, eps, &results, cfg.timing));
            }
        }
    }
    Ok(rows)
}

fn run_trial(
    cfg: &ExperimentConfig,
    mech: MechanismKind,
    input: &AnonymizedHistogram,
    eps: f64,
    domain: u64,
    rng: &mut RandomSource,
) -> Result<TrialResult> {
    let start = cfg.timing.then(Instant::now);
    let (released, n_error, work) = match mech {
        MechanismKind::Privhist => {
            let (out, work) = privhist_with(input, &cfg.budget(eps)?, rng, ReleaseOptions::default())?;
            let err = out.n_estimate.abs_diff(input.total_items());
            (out.histogram, Some(err), work.get())
        }
        MechanismKind::Baseline => (baseline_noisy_counts(input, eps, domain, rng)?, None, domain),
    };
    let wall_ms = start.map_or(0.0, |s| s.elapsed().as_secs_f64() * 1e3);
    Ok(TrialResult {
        l1: sorted_l1(input, &released),
        n_error,
        wall_ms,
        work,
    })
}

fn aggregate(mech: MechanismKind, n: u64, eps: f64, results: &[TrialResult], timing: bool) -> UtilityRow {
    let k = results.len() as f64;
    let mean = |f: &dyn Fn(&TrialResult) -> f64| results.iter().map(f).sum::<f64>() / k;
    let mean_l1 = mean(&|r| r.l1 as f64);
    let var = if results.len() > 1 {
        results.iter().map(|r| (r.l1 as f64 - mean_l1).powi(2)).sum::<f64>() / (k - 1.0)
    } else {
        0.0
    };
    UtilityRow {
        mechanism: mech,
        n,
        epsilon: eps,
        trials: results.len() as u64,
        mean_l1,
        std_l1: var.sqrt(),
        mean_abs_n_error: (mech == MechanismKind::Privhist).then(|| mean(&|r| r.n_error.unwrap_or(0) as f64)),
        mean_wall_ms: timing.then(|| mean(&|r| r.wall_ms)),
        mean_work: mean(&|r| r.work as f64),
    }
}

pub fn write_csv<W: Write>(rows: &[UtilityRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<W: Write>(rows: &[UtilityRow], mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, rows)?;
    writeln!(out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig {
            generator: Generator::Zipf { s: 1.0, k: Some(50) },
            n_grid: vec![200, 800],
            epsilon_grid: vec![0.5, 2.0],
            trials: 12,
            seed: 9,
            mechanisms: vec![MechanismKind::Privhist, MechanismKind::Baseline],
            budget_split: None,
            baseline_domain: None,
            timing: false,
        }
    }

    #[test]
    fn one_row_per_cell() {
        let rows = run_utility_experiment(&cfg()).unwrap();
        assert_eq!(rows.len(), 8);
        for r in &rows {
            assert_eq!(r.trials, 12);
            assert!(r.mean_l1 >= 0.0 && r.std_l1 >= 0.0);
            assert_eq!(r.mean_abs_n_error.is_some(), r.mechanism == MechanismKind::Privhist);
            assert!(r.mean_wall_ms.is_none());
        }
    }

    #[test]
    fn byte_identical_reruns() {
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_csv(&run_utility_experiment(&cfg()).unwrap(), &mut a).unwrap();
        write_csv(&run_utility_experiment(&cfg()).unwrap(), &mut b).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with("mechanism,n,epsilon,trials,mean_l1"));
    }

    #[test]
    fn single_point_grid() {
        let c = ExperimentConfig {
            n_grid: vec![10],
            epsilon_grid: vec![1.0],
            trials: 1,
            mechanisms: vec![MechanismKind::Privhist],
            generator: Generator::SingleHeavy,
            timing: true,
            ..cfg()
        };
        let rows = run_utility_experiment(&c).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].mean_wall_ms.is_some());
        let mut json = Vec::new();
        write_json(&rows, &mut json).unwrap();
        let back: Vec<UtilityRow> = serde_json::from_slice(&json).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn validation() {
        assert!(run_utility_experiment(&ExperimentConfig { trials: 0, ..cfg() }).is_err());
        assert!(run_utility_experiment(&ExperimentConfig { n_grid: vec![], ..cfg() }).is_err());
        assert!(run_utility_experiment(&ExperimentConfig { epsilon_grid: vec![-1.0], ..cfg() }).is_err());
        let bad_split = ExperimentConfig {
            budget_split: Some("low-optimized".into()),
            ..cfg()
        };
        assert!(bad_split.validate().is_err());
    }

    #[test]
    fn config_files() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "n-grid = [100]\nepsilon-grid = [1.0]\ntrials = 3\nmechanisms = [\"privhist\", \"baseline\"]\n[generator]\nkind = \"uniform-k\"\nk = 10\n",
        )
        .unwrap();
        let c = ExperimentConfig::from_path(&toml_path).unwrap();
        assert_eq!(c.generator, Generator::UniformK { k: 10 });
        assert_eq!(c.seed, DEFAULT_SEED);
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::from_path(&json_path).unwrap(), c);
        std::fs::write(&json_path, "{\"trials\": 1}").unwrap();
        assert!(matches!(ExperimentConfig::from_path(&json_path), Err(Error::Config(_))));
    }
}
