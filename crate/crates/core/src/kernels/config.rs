//! JSON model documents and their validation.
//!
//! ```json
//! {"types": 1, "variant": "bgw", "offspring": [{"0": 0.25, "2": 0.75}]}
//! ```
//!
//! Offspring pmfs are maps from outcome keys to probabilities. For a single
//! type the key is the child count; with several types it is the
//! comma-separated vector of per-type child counts (`"0,2"`).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Tolerance on the total mass of every pmf.
pub const PMF_SUM_TOL: f64 = 1e-12;

pub type PmfMap = BTreeMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub types: usize,
    #[serde(flatten)]
    pub variant: VariantConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub career_cap: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "lowercase")]
pub enum VariantConfig {
    /// One joint offspring pmf per type; every birth happens at age 1.
    Bgw { offspring: Vec<PmfMap> },
    /// Single-type splitting at death, with the split law depending on age.
    Sevastyanov { life_span: SplittingConfig },
    /// Births as a Poisson process during a random life span, one entry per type.
    General { careers: Vec<PoissonCareerConfig> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SplittingConfig {
    Discrete {
        atoms: Vec<SplitAtomConfig>,
    },
    /// Exponential life span with a split law independent of age.
    Exponential {
        rate: f64,
        split: PmfMap,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAtomConfig {
    pub age: f64,
    pub prob: f64,
    pub split: PmfMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoissonCareerConfig {
    pub life_span: LifeSpanConfig,
    pub birth_rate: f64,
    pub child_types: PmfMap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LifeSpanConfig {
    Discrete { atoms: Vec<AgeAtomConfig> },
    Exponential { rate: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeAtomConfig {
    pub age: f64,
    pub prob: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Parses an outcome key into per-type child counts.
pub fn parse_count_key(key: &str, types: usize) -> Result<Vec<u32>, String> {
    let counts = key
        .split(',')
        .map(|part| {
            part.trim()
                .parse::<u32>()
                .map_err(|_| format!("outcome key {key:?} is not a list of child counts"))
        })
        .collect::<Result<Vec<u32>, String>>()?;
    if counts.len() != types {
        return Err(format!(
            "outcome key {key:?} has {} counts, expected {types}",
            counts.len()
        ));
    }
    Ok(counts)
}

pub fn format_count_key(counts: &[u32]) -> String {
    counts
        .iter()
        .map(u32::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn check_prob(report: &mut ValidationReport, path: &str, p: f64) {
    if !p.is_finite() || p < 0.0 {
        report.push(path, format!("probability {p} is not a nonnegative real"));
    } else if p > 1.0 + PMF_SUM_TOL {
        report.push(path, format!("probability {p} exceeds 1"));
    }
}

fn check_sum(report: &mut ValidationReport, path: &str, probs: impl Iterator<Item = f64>) {
    let sum: f64 = probs.sum();
    if (sum - 1.0).abs() > PMF_SUM_TOL {
        report.push(path, format!("pmf sums to {sum}"));
    }
}

fn check_pmf(
    report: &mut ValidationReport,
    path: &str,
    pmf: &PmfMap,
    key_ok: impl Fn(&str) -> Result<u64, String>,
    cap: usize,
) {
    if pmf.is_empty() {
        report.push(path, "empty support");
        return;
    }
    for (key, &p) in pmf {
        let entry = format!("{path}[{key:?}]");
        match key_ok(key) {
            Ok(children) if children > cap as u64 => report.push(
                &entry,
                format!("outcome with {children} children exceeds the career cap {cap}"),
            ),
            Ok(_) => {}
            Err(e) => report.push(&entry, e),
        }
        check_prob(report, &entry, p);
    }
    check_sum(report, path, pmf.values().copied());
}

fn split_key(key: &str) -> Result<u64, String> {
    key.trim()
        .parse::<u64>()
        .map_err(|_| format!("split key {key:?} is not a child count"))
}

fn check_life_span(report: &mut ValidationReport, path: &str, cfg: &LifeSpanConfig) {
    match cfg {
        LifeSpanConfig::Discrete { atoms } => {
            if atoms.is_empty() {
                report.push(format!("{path}.atoms"), "empty support");
            }
            for (i, a) in atoms.iter().enumerate() {
                let p = format!("{path}.atoms[{i}]");
                check_age(report, &format!("{p}.age"), a.age);
                check_prob(report, &format!("{p}.prob"), a.prob);
            }
            if !atoms.is_empty() {
                check_sum(
                    report,
                    &format!("{path}.atoms"),
                    atoms.iter().map(|a| a.prob),
                );
            }
        }
        LifeSpanConfig::Exponential { rate } => check_rate(report, &format!("{path}.rate"), *rate),
    }
}

fn check_age(report: &mut ValidationReport, path: &str, age: f64) {
    if !age.is_finite() || age < 0.0 {
        report.push(path, format!("age {age} is not a finite nonnegative real"));
    }
}

fn check_rate(report: &mut ValidationReport, path: &str, rate: f64) {
    if !rate.is_finite() || rate <= 0.0 {
        report.push(path, format!("rate {rate} is not a positive real"));
    }
}

/// Lists every structural problem of a parsed model document.
pub fn validate_model(cfg: &ModelConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let m = cfg.types;
    let cap = cfg.career_cap.unwrap_or(super::DEFAULT_CAREER_CAP);
    if m == 0 {
        report.push("types", "a model needs at least one type");
        return report;
    }
    if cap == 0 {
        report.push("career_cap", "career cap must be positive");
    }
    match &cfg.variant {
        VariantConfig::Bgw { offspring } => {
            if offspring.len() != m {
                report.push(
                    "offspring",
                    format!("{} offspring pmfs for {m} types", offspring.len()),
                );
            }
            for (s, pmf) in offspring.iter().enumerate() {
                check_pmf(
                    &mut report,
                    &format!("offspring[{s}]"),
                    pmf,
                    |k| parse_count_key(k, m).map(|c| c.iter().map(|&x| u64::from(x)).sum()),
                    cap,
                );
            }
        }
        VariantConfig::Sevastyanov { life_span } => {
            if m != 1 {
                report.push("types", "splitting models are single-type");
            }
            match life_span {
                SplittingConfig::Discrete { atoms } => {
                    if atoms.is_empty() {
                        report.push("life_span.atoms", "empty support");
                    }
                    for (i, a) in atoms.iter().enumerate() {
                        let p = format!("life_span.atoms[{i}]");
                        check_age(&mut report, &format!("{p}.age"), a.age);
                        check_prob(&mut report, &format!("{p}.prob"), a.prob);
                        check_pmf(&mut report, &format!("{p}.split"), &a.split, split_key, cap);
                    }
                    if !atoms.is_empty() {
                        check_sum(&mut report, "life_span.atoms", atoms.iter().map(|a| a.prob));
                    }
                }
                SplittingConfig::Exponential { rate, split } => {
                    check_rate(&mut report, "life_span.rate", *rate);
                    check_pmf(&mut report, "life_span.split", split, split_key, cap);
                }
            }
        }
        VariantConfig::General { careers } => {
            if careers.len() != m {
                report.push(
                    "careers",
                    format!("{} careers for {m} types", careers.len()),
                );
            }
            for (s, c) in careers.iter().enumerate() {
                let p = format!("careers[{s}]");
                check_life_span(&mut report, &format!("{p}.life_span"), &c.life_span);
                if !c.birth_rate.is_finite() || c.birth_rate < 0.0 {
                    report.push(
                        format!("{p}.birth_rate"),
                        format!(
                            "birth rate {} is not a finite nonnegative real",
                            c.birth_rate
                        ),
                    );
                }
                check_pmf(
                    &mut report,
                    &format!("{p}.child_types"),
                    &c.child_types,
                    |k| match k.trim().parse::<usize>() {
                        Ok(t) if t < m => Ok(0),
                        _ => Err(format!("child type {k:?} is not a type index below {m}")),
                    },
                    cap,
                );
            }
        }
    }
    report
}
