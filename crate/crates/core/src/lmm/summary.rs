//! Versioned plain-text model summaries.
//!
//! One tab-separated record per line. Floats are written in Rust's shortest
//! round-trip form, so a summary parses back to the exact fitted values and
//! two identical fits produce byte-identical text.

use std::fmt::Write as _;

use super::fit::FittedModel;
use super::LmmError;

pub const SUMMARY_MAGIC: &str = "n400-lmm-summary";
pub const SUMMARY_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct FixedEstimate {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub name: String,
    pub theta: f64,
    /// theta * sigma.
    pub sd: f64,
    pub levels: usize,
}

/// Parsed form of a model summary.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSummary {
    pub version: u32,
    pub formula: String,
    pub n_obs: usize,
    pub n_params: usize,
    pub loglik: f64,
    pub aic: f64,
    pub sigma2: f64,
    pub converged: bool,
    pub singular: bool,
    pub iterations: usize,
    pub fingerprint: u64,
    pub dropped: Vec<String>,
    pub fixed: Vec<FixedEstimate>,
    pub random: Vec<VarianceEstimate>,
}

impl FittedModel {
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{SUMMARY_MAGIC}\t{SUMMARY_VERSION}");
        let _ = writeln!(s, "formula\t{}", self.spec);
        let _ = writeln!(s, "n_obs\t{}", self.n_obs);
        let _ = writeln!(s, "n_params\t{}", self.n_params);
        let _ = writeln!(s, "loglik\t{}", self.loglik);
        let _ = writeln!(s, "aic\t{}", self.aic());
        let _ = writeln!(s, "sigma2\t{}", self.sigma2);
        let _ = writeln!(s, "converged\t{}", self.converged);
        let _ = writeln!(s, "singular\t{}", self.singular);
        let _ = writeln!(s, "iterations\t{}", self.iterations);
        let _ = writeln!(s, "fingerprint\t{:016x}", self.fingerprint);
        let _ = writeln!(s, "dropped\t{}", self.dropped_columns.join(","));
        for ((name, b), se) in self.column_names().iter().zip(&self.beta).zip(&self.beta_se) {
            let _ = writeln!(s, "fixed\t{name}\t{b}\t{se}");
        }
        let sigma = self.sigma2.sqrt();
        for re in &self.random {
            let _ = writeln!(
                s,
                "random\t{}\t{}\t{}\t{}",
                re.name,
                re.theta,
                re.theta * sigma,
                re.levels.len()
            );
        }
        s
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> LmmError {
    LmmError::Summary(format!("line {line}: {msg}"))
}

fn num<T: std::str::FromStr>(line: usize, field: &str) -> Result<T, LmmError> {
    field.parse().map_err(|_| bad(line, format!("cannot parse {field:?}")))
}

pub fn parse_summary(text: &str) -> Result<ModelSummary, LmmError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| bad(1, "empty summary"))?;
    let version = match header.split('\t').collect::<Vec<_>>().as_slice() {
        [magic, v] if *magic == SUMMARY_MAGIC => num::<u32>(1, v)?,
        _ => return Err(bad(1, "not a model summary")),
    };
    if version != SUMMARY_VERSION {
        return Err(bad(1, format!("unsupported version {version}")));
    }
    let mut out = ModelSummary {
        version,
        formula: String::new(),
        n_obs: 0,
        n_params: 0,
        loglik: f64::NAN,
        aic: f64::NAN,
        sigma2: f64::NAN,
        converged: false,
        singular: false,
        iterations: 0,
        fingerprint: 0,
        dropped: Vec::new(),
        fixed: Vec::new(),
        random: Vec::new(),
    };
    for (ln, line) in lines {
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split('\t').collect();
        match f.as_slice() {
            ["formula", v] => out.formula = v.to_string(),
            ["n_obs", v] => out.n_obs = num(ln, v)?,
            ["n_params", v] => out.n_params = num(ln, v)?,
            ["loglik", v] => out.loglik = num(ln, v)?,
            ["aic", v] => out.aic = num(ln, v)?,
            ["sigma2", v] => out.sigma2 = num(ln, v)?,
            ["converged", v] => out.converged = num(ln, v)?,
            ["singular", v] => out.singular = num(ln, v)?,
            ["iterations", v] => out.iterations = num(ln, v)?,
            ["fingerprint", v] => {
                out.fingerprint = u64::from_str_radix(v, 16).map_err(|_| bad(ln, "bad fingerprint"))?
            }
            ["dropped", v] => out.dropped = v.split(',').filter(|s| !s.is_empty()).map(str::to_string).collect(),
            ["fixed", name, est, se] => out.fixed.push(FixedEstimate {
                name: name.to_string(),
                estimate: num(ln, est)?,
                se: num(ln, se)?,
            }),
            ["random", name, theta, sd, levels] => out.random.push(VarianceEstimate {
                name: name.to_string(),
                theta: num(ln, theta)?,
                sd: num(ln, sd)?,
                levels: num(ln, levels)?,
            }),
            _ => return Err(bad(ln, format!("unrecognised record {:?}", f[0]))),
        }
    }
    Ok(out)
}
