//! Hypothesis tests and multiple-comparison corrections.
//!
//! Covers the likelihood-ratio test between nested mixed models, the
//! chi-square and Student t survival functions behind it, one- and two-sided
//! Welch t-tests, Benjamini-Hochberg / Benjamini-Yekutieli FDR adjustment,
//! and a Kolmogorov-Smirnov uniformity check used for calibration studies.

pub mod special;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lmm::FittedModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("{name} = {value} is outside its domain ({expected})")]
    Domain {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("sample needs at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("likelihood-ratio test needs a positive df, got {0}")]
    NonPositiveDf(f64),
    #[error("models were fit to different data (fingerprints {reduced:016x} vs {full:016x})")]
    DataMismatch { reduced: u64, full: u64 },
    #[error("unknown {what} `{value}` (expected one of: {expected})")]
    UnknownLabel {
        what: &'static str,
        value: String,
        expected: &'static str,
    },
}

/// Direction of a test. `Less` means the first sample's mean is below the second's.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alternative {
    TwoSided,
    Less,
    Greater,
}

impl Alternative {
    pub fn as_str(self) -> &'static str {
        match self {
            Alternative::TwoSided => "two_sided",
            Alternative::Less => "less",
            Alternative::Greater => "greater",
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Alternative::TwoSided => Alternative::TwoSided,
            Alternative::Less => Alternative::Greater,
            Alternative::Greater => Alternative::Less,
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Alternative {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "two_sided" | "two-sided" | "two.sided" => Ok(Alternative::TwoSided),
            "less" | "<" => Ok(Alternative::Less),
            "greater" | ">" => Ok(Alternative::Greater),
            _ => Err(StatsError::UnknownLabel {
                what: "alternative",
                value: s.to_string(),
                expected: "two_sided, less, greater",
            }),
        }
    }
}

/// False-discovery-rate step-up procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum FdrMethod {
    /// Benjamini-Hochberg.
    Bh,
    /// Benjamini-Yekutieli; valid under arbitrary dependence.
    #[default]
    By,
}

impl FdrMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FdrMethod::Bh => "bh",
            FdrMethod::By => "by",
        }
    }
}

impl fmt::Display for FdrMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FdrMethod {
    type Err = StatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bh" => Ok(FdrMethod::Bh),
            "by" => Ok(FdrMethod::By),
            _ => Err(StatsError::UnknownLabel {
                what: "FDR method",
                value: s.to_string(),
                expected: "bh, by",
            }),
        }
    }
}

/// Outcome of one hypothesis test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub label: String,
    pub statistic: f64,
    /// Degrees of freedom; fractional for Welch tests.
    pub df: f64,
    pub p_raw: f64,
    pub p_adjusted: Option<f64>,
    pub alternative: Alternative,
}

impl TestResult {
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Adjusted p if present, otherwise raw.
    pub fn p(&self) -> f64 {
        self.p_adjusted.unwrap_or(self.p_raw)
    }
}

/// P(X > x) for X ~ chi-square(df).
pub fn chi_square_sf(x: f64, df: f64) -> Result<f64, StatsError> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(StatsError::Domain {
            name: "df",
            value: df,
            expected: "df > 0",
        });
    }
    if !(x >= 0.0) {
        return Err(StatsError::Domain {
            name: "x",
            value: x,
            expected: "x >= 0",
        });
    }
    Ok(special::gamma_q(0.5 * df, 0.5 * x))
}

/// P(T > t) for T ~ Student t(df).
pub fn t_sf(t: f64, df: f64) -> Result<f64, StatsError> {
    if !(df > 0.0) || !df.is_finite() {
        return Err(StatsError::Domain {
            name: "df",
            value: df,
            expected: "df > 0",
        });
    }
    if t.is_nan() {
        return Err(StatsError::Domain {
            name: "t",
            value: t,
            expected: "t is a number",
        });
    }
    Ok(special::student_t_upper(t, df).clamp(0.0, 1.0))
}

/// Likelihood-ratio test of `reduced` against `full`.
///
/// Both models must be ML fits to the same data; nesting is the caller's
/// responsibility. The statistic is clamped at zero.
pub fn lrt(reduced: &FittedModel, full: &FittedModel) -> Result<TestResult, StatsError> {
    if reduced.fingerprint != full.fingerprint {
        return Err(StatsError::DataMismatch {
            reduced: reduced.fingerprint,
            full: full.fingerprint,
        });
    }
    let df = full.n_fixed() as f64 - reduced.n_fixed() as f64;
    if df <= 0.0 {
        return Err(StatsError::NonPositiveDf(df));
    }
    let statistic = (2.0 * (full.loglik - reduced.loglik)).max(0.0);
    Ok(TestResult {
        label: String::new(),
        statistic,
        df,
        p_raw: chi_square_sf(statistic, df)?,
        p_adjusted: None,
        alternative: Alternative::Greater,
    })
}

/// Welch's unequal-variance two-sample t-test.
pub fn welch_t(a: &[f64], b: &[f64], alternative: Alternative) -> Result<TestResult, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFew {
                needed: 2,
                got: s.len(),
            });
        }
    }
    let (ma, sa) = mean_sd(a)?;
    let (mb, sb) = mean_sd(b)?;
    let va = sa * sa / a.len() as f64;
    let vb = sb * sb / b.len() as f64;
    if va == 0.0 && vb == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    let se2 = va + vb;
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (va * va / (a.len() as f64 - 1.0) + vb * vb / (b.len() as f64 - 1.0));
    let p_raw = match alternative {
        Alternative::Greater => t_sf(t, df)?,
        Alternative::Less => t_sf(-t, df)?,
        Alternative::TwoSided => (2.0 * t_sf(t.abs(), df)?).min(1.0),
    };
    Ok(TestResult {
        label: String::new(),
        statistic: t,
        df,
        p_raw,
        p_adjusted: None,
        alternative,
    })
}

/// Step-up FDR adjustment; results are returned in input order.
pub fn fdr_adjust(ps: &[f64], method: FdrMethod) -> Result<Vec<f64>, StatsError> {
    if let Some(&bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::Domain {
            name: "p",
            value: bad,
            expected: "0 <= p <= 1",
        });
    }
    let m = ps.len();
    if m == 0 {
        return Ok(Vec::new());
    }
    let c = match method {
        FdrMethod::Bh => 1.0,
        FdrMethod::By => (1..=m).map(|k| 1.0 / k as f64).sum(),
    };
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&i, &j| ps[i].total_cmp(&ps[j]).then(i.cmp(&j)));
    let mut adjusted = vec![0.0; m];
    let mut running = f64::INFINITY;
    for rank in (0..m).rev() {
        let idx = order[rank];
        let candidate = ps[idx] * m as f64 * c / (rank + 1) as f64;
        running = running.min(candidate);
        adjusted[idx] = running.min(1.0);
    }
    Ok(adjusted)
}

/// Writes FDR-adjusted p-values into every result of the family.
pub fn adjust_family(results: &mut [&mut TestResult], method: FdrMethod) -> Result<(), StatsError> {
    let ps: Vec<f64> = results.iter().map(|r| r.p_raw).collect();
    let adjusted = fdr_adjust(&ps, method)?;
    for (r, p) in results.iter_mut().zip(adjusted) {
        r.p_adjusted = Some(p);
    }
    Ok(())
}

/// Arithmetic mean and sample standard deviation (n - 1 denominator).
pub fn mean_sd(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    if xs.len() < 2 {
        return Err(StatsError::TooFew {
            needed: 2,
            got: xs.len(),
        });
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss: f64 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
    Ok((mean, (ss / (n - 1.0)).sqrt()))
}

/// Mean and standard error of the mean.
pub fn mean_se(xs: &[f64]) -> Result<(f64, f64), StatsError> {
    let (m, sd) = mean_sd(xs)?;
    Ok((m, sd / (xs.len() as f64).sqrt()))
}

/// One-sample Kolmogorov-Smirnov test against Uniform(0, 1).
///
/// Returns the D statistic and its asymptotic p-value with the Stephens
/// small-sample correction.
pub fn ks_uniform(ps: &[f64]) -> Result<(f64, f64), StatsError> {
    if ps.is_empty() {
        return Err(StatsError::TooFew { needed: 1, got: 0 });
    }
    if let Some(&bad) = ps.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(StatsError::Domain {
            name: "p",
            value: bad,
            expected: "0 <= p <= 1",
        });
    }
    let mut sorted = ps.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let hi = (i + 1) as f64 / n - u;
            let lo = u - i as f64 / n;
            hi.max(lo)
        })
        .fold(0.0, f64::max);
    let sqrt_n = n.sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok((d, special::kolmogorov_sf(lambda)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_reference_points() {
        assert_eq!(chi_square_sf(0.0, 3.0).unwrap(), 1.0);
        // values from numerical integration of the density
        assert!((chi_square_sf(3.841459, 1.0).unwrap() - 0.049_999_994_653_195_77).abs() < 1e-12);
        assert!((chi_square_sf(2.0, 1.0).unwrap() - 0.157_299_207_050_285_13).abs() < 1e-12);
        assert!((chi_square_sf(11.0705, 5.0).unwrap() - 0.049_999_955_428_043_65).abs() < 1e-12);
        assert!(chi_square_sf(-1.0, 1.0).is_err());
        assert!(chi_square_sf(1.0, 0.0).is_err());
    }

    #[test]
    fn chi_square_tail_goes_to_zero() {
        let mut last = 1.0;
        for x in [1.0, 10.0, 100.0, 500.0, 2000.0] {
            let p = chi_square_sf(x, 4.0).unwrap();
            assert!(p <= last);
            last = p;
        }
        assert!(last < 1e-300);
        assert_eq!(chi_square_sf(f64::INFINITY, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn t_reference_points() {
        assert_eq!(t_sf(0.0, 7.0).unwrap(), 0.5);
        assert!((t_sf(2.776445, 4.0).unwrap() - 0.025_000_002_691_045_79).abs() < 1e-12);
        assert!((t_sf(1.959964, 1e5).unwrap() - 0.025_001_385_577_321_79).abs() < 1e-11);
        assert!((t_sf(-1.2, 3.0).unwrap() - 0.841_868_942_650_947_5).abs() < 1e-12);
        assert!(t_sf(1.0, -2.0).is_err());
    }

    #[test]
    fn welch_worked_example() {
        let r = welch_t(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0], Alternative::Less).unwrap();
        assert!((r.statistic + 1.224_744_871_391_589).abs() < 1e-12);
        assert!((r.df - 4.0).abs() < 1e-12);
        assert!((r.p_raw - 0.143_932_067_363_345_35).abs() < 1e-12);
    }

    #[test]
    fn welch_identical_samples() {
        let a = [1.0, 4.0, 2.0, 8.0];
        let r = welch_t(&a, &a, Alternative::Greater).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!((r.p_raw - 0.5).abs() < 1e-15);
        let r2 = welch_t(&a, &a, Alternative::TwoSided).unwrap();
        assert!((r2.p_raw - 1.0).abs() < 1e-15);
    }

    #[test]
    fn welch_errors() {
        assert!(matches!(
            welch_t(&[1.0], &[1.0, 2.0], Alternative::Less),
            Err(StatsError::TooFew { .. })
        ));
        assert_eq!(
            welch_t(&[1.0, 1.0], &[2.0, 2.0], Alternative::Less),
            Err(StatsError::ZeroVariance)
        );
        // one constant sample is fine
        assert!(welch_t(&[1.0, 1.0], &[2.0, 3.0], Alternative::Less).is_ok());
    }

    #[test]
    fn welch_equal_variance_df() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0];
        let b = [11.0, 12.0, 13.0, 14.0, 15.0];
        let r = welch_t(&a, &b, Alternative::TwoSided).unwrap();
        assert!((r.df - 8.0).abs() < 1e-12);
    }

    #[test]
    fn bh_worked_example() {
        let adj = fdr_adjust(&[0.01, 0.04, 0.03, 0.005], FdrMethod::Bh).unwrap();
        assert_eq!(adj, vec![0.02, 0.04, 0.04, 0.02]);
    }

    #[test]
    fn fdr_degenerate_families() {
        assert_eq!(fdr_adjust(&[0.3], FdrMethod::By).unwrap(), vec![0.3]);
        let c: f64 = 1.0 + 0.5 + 1.0 / 3.0;
        let adj = fdr_adjust(&[0.2, 0.2, 0.2], FdrMethod::By).unwrap();
        for a in adj {
            assert!((a - 0.2 * c).abs() < 1e-15);
        }
        let adj = fdr_adjust(&[0.5, 0.5], FdrMethod::By).unwrap();
        assert_eq!(adj, vec![0.75, 0.75]);
        let adj = fdr_adjust(&[0.9, 0.9], FdrMethod::By).unwrap();
        assert_eq!(adj, vec![1.0, 1.0]);
        assert!(fdr_adjust(&[0.1, 1.2], FdrMethod::Bh).is_err());
        assert!(fdr_adjust(&[], FdrMethod::Bh).unwrap().is_empty());
    }

    #[test]
    fn mean_sd_examples() {
        assert_eq!(mean_sd(&[1.0, 1.0, 1.0]).unwrap(), (1.0, 0.0));
        let (m, s) = mean_sd(&[0.0, 2.0]).unwrap();
        assert_eq!(m, 1.0);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert!(mean_sd(&[1.0]).is_err());
    }

    #[test]
    fn ks_accepts_uniform_grid_and_rejects_skew() {
        let grid: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let (d, p) = ks_uniform(&grid).unwrap();
        assert!(d <= 0.001 + 1e-12);
        assert!(p > 0.99);
        let skewed: Vec<f64> = grid.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed).unwrap().1 < 1e-6);
    }

    #[test]
    fn parse_labels() {
        assert_eq!("BH".parse::<FdrMethod>().unwrap(), FdrMethod::Bh);
        assert_eq!("less".parse::<Alternative>().unwrap(), Alternative::Less);
        assert!("holm".parse::<FdrMethod>().is_err());
        assert_eq!(FdrMethod::default(), FdrMethod::By);
    }
}
