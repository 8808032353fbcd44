use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};

/// Total privacy budget `ε` and its split across the three stages: the total
/// count, the histogram split and noising, and the high-privacy smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub eps1: f64,
    pub eps2: f64,
    pub eps3: f64,
}

impl PrivacyBudget {
    /// Even three-way split.
    pub fn new(epsilon: f64) -> Result<Self> {
        Self::with_split(epsilon, BudgetSplit::default())
    }

    pub fn with_split(epsilon: f64, split: BudgetSplit) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(param("epsilon must be positive"));
        }
        let [a, b, c] = match split {
            BudgetSplit::Fractions(f) => f,
            BudgetSplit::LowOptimized => {
                if epsilon <= 1.0 {
                    return Err(param(
                        "the low-optimized split leaves nothing for the high-privacy path; it needs epsilon > 1",
                    ));
                }
                [0.05, 0.95, 0.0]
            }
        };
        let budget = Self {
            epsilon,
            eps1: a * epsilon,
            eps2: b * epsilon,
            eps3: c * epsilon,
        };
        budget.validate()?;
        Ok(budget)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(param("epsilon must be positive"));
        }
        if !(self.eps1 > 0.0 && self.eps2 > 0.0) {
            return Err(param("eps1 and eps2 must be positive"));
        }
        if !(self.eps3 >= 0.0) {
            return Err(param("eps3 must be nonnegative"));
        }
        if self.path() == Path::High && self.eps3 <= 0.0 {
            return Err(param("eps3 must be positive when epsilon <= 1"));
        }
        let sum = self.eps1 + self.eps2 + self.eps3;
        if (sum - self.epsilon).abs() > 1e-9 * self.epsilon.max(1.0) {
            return Err(param(format!(
                "budget components sum to {sum}, expected {}",
                self.epsilon
            )));
        }
        Ok(())
    }

    pub fn path(&self) -> Path {
        if self.epsilon > 1.0 {
            Path::Low
        } else {
            Path::High
        }
    }
}

/// Which post-processing path a release takes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Path {
    /// `ε > 1`
    Low,
    /// `ε ≤ 1`
    High,
}

impl Path {
    pub fn as_str(&self) -> &'static str {
        match self {
            Path::Low => "low",
            Path::High => "high",
        }
    }
}

/// How `ε` is divided between `(eps1, eps2, eps3)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BudgetSplit {
    /// Fractions of `ε`, summing to one.
    Fractions([f64; 3]),
    /// `(0.05, 0.95, 0)`: the low path never spends eps3.
    LowOptimized,
}

impl Default for BudgetSplit {
    fn default() -> Self {
        BudgetSplit::Fractions([1.0 / 3.0; 3])
    }
}

impl FromStr for BudgetSplit {
    type Err = Error;

    /// Accepts `low-optimized` or three comma-separated fractions, each a
    /// decimal or `p/q`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "low-optimized" {
            return Ok(BudgetSplit::LowOptimized);
        }
        let parts: Vec<f64> = s.split(',').map(parse_fraction).collect::<Result<_>>()?;
        let [a, b, c] = parts[..] else {
            return Err(param(format!("budget split needs three fractions, got '{s}'")));
        };
        if [a, b, c].iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
            return Err(param("budget fractions must be nonnegative"));
        }
        if ((a + b + c) - 1.0).abs() > 1e-6 {
            return Err(param(format!("budget fractions must sum to 1, got {}", a + b + c)));
        }
        Ok(BudgetSplit::Fractions([a, b, c]))
    }
}

fn parse_fraction(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || param(format!("invalid fraction '{s}'"));
    match s.split_once('/') {
        Some((n, d)) => {
            let n: f64 = n.trim().parse().map_err(|_| bad())?;
            let d: f64 = d.trim().parse().map_err(|_| bad())?;
            if d == 0.0 {
                return Err(bad());
            }
            Ok(n / d)
        }
        None => s.parse().map_err(|_| bad()),
    }
}

/// Threshold `T`, fake-count multiplicity `M` and the private total `N`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitParams {
    pub threshold: u64,
    pub multiplicity: u64,
    pub n_estimate: u64,
}

impl SplitParams {
    /// `T = ⌈√(N·min(ε, 1))⌉`, `M = ⌈max(2·ln(N·e^{eps2}), 1)/eps2⌉`.
    pub fn derive(n_estimate: u64, budget: &PrivacyBudget) -> Result<Self> {
        if n_estimate == 0 {
            return Err(param("split parameters need a positive total"));
        }
        let n = n_estimate as f64;
        let threshold = (n * budget.epsilon.min(1.0)).sqrt().ceil().max(1.0) as u64;
        let eps2 = budget.eps2;
        let multiplicity = ((2.0 * (n.ln() + eps2)).max(1.0) / eps2).ceil().max(1.0) as u64;
        Ok(Self {
            threshold,
            multiplicity,
            n_estimate,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_split_is_even() {
        let b = PrivacyBudget::new(0.9).unwrap();
        assert!((b.eps1 - 0.3).abs() < 1e-12);
        assert!((b.eps2 - 0.3).abs() < 1e-12);
        assert!((b.eps3 - 0.3).abs() < 1e-12);
        assert_eq!(b.path(), Path::High);
        assert_eq!(PrivacyBudget::new(1.5).unwrap().path(), Path::Low);
        assert_eq!(PrivacyBudget::new(1.0).unwrap().path(), Path::High);
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        assert!(PrivacyBudget::new(0.0).is_err());
        assert!(PrivacyBudget::new(-1.0).is_err());
        assert!(PrivacyBudget::new(f64::INFINITY).is_err());
    }

    #[test]
    fn low_optimized_split() {
        let b = PrivacyBudget::with_split(4.0, BudgetSplit::LowOptimized).unwrap();
        assert!((b.eps1 - 0.2).abs() < 1e-12);
        assert!((b.eps2 - 3.8).abs() < 1e-12);
        assert_eq!(b.eps3, 0.0);
        assert!(PrivacyBudget::with_split(0.5, BudgetSplit::LowOptimized).is_err());
        // eps3 = 0 is not usable on the high path.
        assert!(PrivacyBudget::with_split(0.5, "0.5,0.5,0".parse().unwrap()).is_err());
    }

    #[test]
    fn split_parsing() {
        assert_eq!(
            "1/3,1/3,1/3".parse::<BudgetSplit>().unwrap(),
            BudgetSplit::Fractions([1.0 / 3.0; 3])
        );
        assert_eq!(
            "0.2, 0.5, 0.3".parse::<BudgetSplit>().unwrap(),
            BudgetSplit::Fractions([0.2, 0.5, 0.3])
        );
        assert_eq!("low-optimized".parse::<BudgetSplit>().unwrap(), BudgetSplit::LowOptimized);
        assert!("0.5,0.5".parse::<BudgetSplit>().is_err());
        assert!("0.5,0.5,0.5".parse::<BudgetSplit>().is_err());
        assert!("a,b,c".parse::<BudgetSplit>().is_err());
        assert!("1/0,0,0".parse::<BudgetSplit>().is_err());
    }

    #[test]
    fn split_params_formulas() {
        // N = 5, ε = 9: T = ⌈√5⌉ = 3, M = ⌈2(ln 5 + 3)/3⌉ = ⌈3.07⌉ = 4.
        let p = SplitParams::derive(5, &PrivacyBudget::new(9.0).unwrap()).unwrap();
        assert_eq!((p.threshold, p.multiplicity), (3, 4));

        // N = 100, ε = 0.3: T = ⌈√30⌉ = 6, M = ⌈2(ln 100 + 0.1)/0.1⌉ = ⌈94.1⌉ = 95.
        let p = SplitParams::derive(100, &PrivacyBudget::new(0.3).unwrap()).unwrap();
        assert_eq!((p.threshold, p.multiplicity), (6, 95));

        // N = 1, eps2 = 0.3: 2(ln 1 + 0.3) = 0.6 is floored to 1, so M = ⌈1/0.3⌉ = 4.
        let p = SplitParams::derive(1, &PrivacyBudget::new(0.9).unwrap()).unwrap();
        assert_eq!((p.threshold, p.multiplicity), (1, 4));
        assert!(SplitParams::derive(0, &PrivacyBudget::new(1.0).unwrap()).is_err());
    }
}
