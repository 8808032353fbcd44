//! Linear plug-in estimators of symmetric distribution properties.
//!
//! A linear estimator is `Σ_r f(r, n)·φ_r`. Evaluated on a released pair
//! `(H, N)` it is private by post-processing: nothing here touches raw data
//! or randomness.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{param, Error, Result};
use crate::histogram::AnonymizedHistogram;
use crate::mechanism::MechanismOutput;

pub type CoefficientFn = Arc<dyn Fn(u64, u64) -> f64 + Send + Sync>;

/// Named coefficient function `f(r, n)`.
#[derive(Clone)]
pub struct PropertyCoefficients {
    name: String,
    coeff: CoefficientFn,
}

impl fmt::Debug for PropertyCoefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PropertyCoefficients")
            .field("name", &self.name)
            .finish_non_exhaustive()
    }
}

impl PropertyCoefficients {
    pub fn new(name: impl Into<String>, coeff: impl Fn(u64, u64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            coeff: Arc::new(coeff),
        }
    }

    /// Coefficients read from a table for one fixed sample size. `n` is
    /// ignored at evaluation time; counts missing from the table are undefined.
    pub fn from_table(name: impl Into<String>, table: BTreeMap<u64, f64>) -> Self {
        Self::new(name, move |r, _| table.get(&r).copied().unwrap_or(f64::NAN))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn coeff(&self, r: u64, n: u64) -> f64 {
        (self.coeff)(r, n)
    }
}

pub const BUILTIN_NAMES: &[&str] = &[
    "entropy-plugin",
    "entropy-miller-madow",
    "support-size",
    "support-coverage",
    "distance-to-uniformity-plugin",
];

/// Looks up a built-in coefficient set.
///
/// `support-coverage` takes an optional `:m=<samples>` suffix (default `m = n`)
/// and `distance-to-uniformity-plugin` an optional `:k=<domain size>` suffix
/// (default `k = n`).
pub fn builtin_coefficients(name: &str) -> Result<PropertyCoefficients> {
    let (base, arg) = match name.split_once(':') {
        Some((b, a)) => (b, Some(a)),
        None => (name, None),
    };
    let unknown = || Error::UnknownProperty {
        name: name.to_string(),
        available: BUILTIN_NAMES.join(", "),
    };
    let parse_arg = |key: &str| -> Result<Option<f64>> {
        let Some(arg) = arg else { return Ok(None) };
        let value = arg
            .strip_prefix(key)
            .and_then(|rest| rest.strip_prefix('='))
            .ok_or_else(|| param(format!("'{base}' takes '{key}=<value>', got '{arg}'")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| param(format!("invalid {key} '{value}'")))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(param(format!("{key} must be positive")));
        }
        Ok(Some(v))
    };

    let coeffs = match base {
        "entropy-plugin" if arg.is_none() => PropertyCoefficients::new(name, entropy_term),
        "entropy-miller-madow" if arg.is_none() => PropertyCoefficients::new(name, |r, n| {
            // plug-in + (S − 1)/(2n); the −1/(2n) is spread as −r/(2n²) using Σ r·φ_r = n
            let n = n as f64;
            entropy_term(r, n as u64) + 1.0 / (2.0 * n) - r as f64 / (2.0 * n * n)
        }),
        "support-size" if arg.is_none() => PropertyCoefficients::new(name, |_, _| 1.0),
        "support-coverage" => {
            let m = parse_arg("m")?;
            PropertyCoefficients::new(name, move |r, n| {
                let m = m.unwrap_or(n as f64);
                1.0 - (1.0 - r as f64 / n as f64).max(0.0).powf(m)
            })
        }
        "distance-to-uniformity-plugin" => {
            let k = parse_arg("k")?;
            PropertyCoefficients::new(name, move |r, n| {
                // Σ_seen |p̂ − 1/k| + (k − S)/k, with the constant 1 spread as r/n
                let k = k.unwrap_or(n as f64);
                let p = r as f64 / n as f64;
                (p - 1.0 / k).abs() - 1.0 / k + p
            })
        }
        _ => return Err(unknown()),
    };
    Ok(coeffs)
}

fn entropy_term(r: u64, n: u64) -> f64 {
    let p = r as f64 / n as f64;
    if p >= 1.0 {
        0.0
    } else {
        -p * p.ln()
    }
}

/// `Σ_r f(r, n)·φ_r`.
pub fn estimate(h: &AnonymizedHistogram, n: u64, coeffs: &PropertyCoefficients) -> Result<f64> {
    if n == 0 {
        return Err(param("estimate needs n >= 1"));
    }
    let mut total = 0.0;
    for &(r, phi) in h.entries() {
        let f = coeffs.coeff(r, n);
        if !f.is_finite() {
            return Err(param(format!(
                "coefficient '{}' is undefined at r = {r}, n = {n}",
                coeffs.name()
            )));
        }
        total += f * phi as f64;
    }
    Ok(total)
}

/// Estimate computed from a release.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReleaseEstimate {
    pub value: f64,
    /// The release was `(∅, 0)`; `value` is then 0 and carries no information.
    pub empty_release: bool,
}

/// Plug-in estimate on `(H, N)`; the `N = 0` release yields 0 with a flag.
pub fn estimate_release(out: &MechanismOutput, coeffs: &PropertyCoefficients) -> Result<ReleaseEstimate> {
    if out.n_estimate == 0 {
        return Ok(ReleaseEstimate {
            value: 0.0,
            empty_release: true,
        });
    }
    Ok(ReleaseEstimate {
        value: estimate(&out.histogram, out.n_estimate, coeffs)?,
        empty_release: false,
    })
}

/// `max_{1≤r<n} |f(r, n) − f(r+1, n)|`, the coefficient Lipschitz constant
/// at sample size `n`. `O(n)`.
pub fn lipschitz_report(coeffs: &PropertyCoefficients, n: u64) -> f64 {
    (1..n)
        .map(|r| (coeffs.coeff(r, n) - coeffs.coeff(r + 1, n)).abs())
        .fold(0.0, f64::max)
}

/// Parses `r<TAB>f(r,n)` lines; `#` comments and blank lines are skipped.
pub fn parse_coefficient_table(text: &str) -> Result<BTreeMap<u64, f64>> {
    let mut table = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            line: idx + 1,
            message,
        };
        let (r, f) = line
            .split_once('\t')
            .ok_or_else(|| err(format!("expected 'r<TAB>value', got '{line}'")))?;
        let r: u64 = r.trim().parse().map_err(|_| err(format!("invalid count '{r}'")))?;
        let f: f64 = f.trim().parse().map_err(|_| err(format!("invalid coefficient '{f}'")))?;
        if r == 0 || !f.is_finite() {
            return Err(err("counts must be positive and coefficients finite".into()));
        }
        if table.insert(r, f).is_some() {
            return Err(err(format!("duplicate count {r}")));
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(e: &[(u64, u64)]) -> AnonymizedHistogram {
        AnonymizedHistogram::new(e.to_vec()).unwrap()
    }

    fn builtin(name: &str) -> PropertyCoefficients {
        builtin_coefficients(name).unwrap()
    }

    #[test]
    fn entropy_of_uniform_three() {
        let e = estimate(&h(&[(2, 3)]), 6, &builtin("entropy-plugin")).unwrap();
        assert!((e - 3f64.ln()).abs() < 1e-12);
        assert_eq!(builtin("entropy-plugin").coeff(9, 9), 0.0);
    }

    #[test]
    fn support_size_counts_symbols() {
        let s = builtin("support-size");
        assert_eq!(estimate(&h(&[(1, 2), (5, 1)]), 7, &s).unwrap(), 3.0);
        assert_eq!(estimate(&h(&[(3, 2), (4, 1)]), 10, &s).unwrap(), 3.0);
    }

    #[test]
    fn miller_madow_adds_bias_correction() {
        let x = h(&[(2, 3)]);
        let plug = estimate(&x, 6, &builtin("entropy-plugin")).unwrap();
        let mm = estimate(&x, 6, &builtin("entropy-miller-madow")).unwrap();
        assert!((mm - (plug + 2.0 / 12.0)).abs() < 1e-12);
    }

    #[test]
    fn parameterized_builtins() {
        // one symbol seen n times: coverage is 1, distance to uniform over k is 2(1 − 1/k)
        let single = h(&[(10, 1)]);
        let cov = estimate(&single, 10, &builtin("support-coverage:m=5")).unwrap();
        assert!((cov - 1.0).abs() < 1e-12);
        let d = estimate(&single, 10, &builtin("distance-to-uniformity-plugin:k=4")).unwrap();
        assert!((d - 1.5).abs() < 1e-12);
        // exactly uniform over k
        let uni = h(&[(5, 4)]);
        let d = estimate(&uni, 20, &builtin("distance-to-uniformity-plugin:k=4")).unwrap();
        assert!(d.abs() < 1e-12);
        assert!(builtin_coefficients("support-coverage:k=5").is_err());
        assert!(builtin_coefficients("support-coverage:m=-1").is_err());
        assert!(builtin_coefficients("support-size:m=3").is_err());
    }

    #[test]
    fn unknown_names_list_the_registry() {
        let err = builtin_coefficients("renyi").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("renyi"));
        for name in BUILTIN_NAMES {
            assert!(msg.contains(name));
        }
    }

    #[test]
    fn zero_total_is_an_error() {
        assert!(estimate(&h(&[(1, 1)]), 0, &builtin("support-size")).is_err());
    }

    #[test]
    fn table_coefficients() {
        let table = parse_coefficient_table("# f\n1\t0.5\n2\t1.5\n").unwrap();
        let c = PropertyCoefficients::from_table("custom", table);
        assert_eq!(estimate(&h(&[(1, 2), (2, 1)]), 4, &c).unwrap(), 2.5);
        assert!(estimate(&h(&[(3, 1)]), 3, &c).is_err());
        assert!(parse_coefficient_table("1\t2\n1\t3\n").is_err());
        assert!(matches!(parse_coefficient_table("x\t2"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn lipschitz_of_support_size_is_zero() {
        assert_eq!(lipschitz_report(&builtin("support-size"), 50), 0.0);
        let l = lipschitz_report(&builtin("entropy-plugin"), 1000);
        assert!(l > 0.0 && l < 0.01);
    }
}
