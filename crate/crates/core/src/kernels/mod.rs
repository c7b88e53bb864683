//! Life kernels: the per-type law of a life career.
//!
//! A [`Model`] is built from a validated [`ModelConfig`]. Three families are
//! supported:
//!
//! * `bgw`: a joint pmf over per-type child counts; every child is born at
//!   maternal age 1 and the mother dies at age 1, so generation equals time.
//! * `sevastyanov`: single-type splitting at death, where the split law may
//!   depend on the life span.
//! * `general`: births form a Poisson process of constant rate during a random
//!   life span, and each child's type is drawn independently.
//!
//! All three have closed-form offspring generating functions, which the
//! extinction solver relies on.

pub mod catalog;
mod config;

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::Exp;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    format_count_key, parse_count_key, validate_model, AgeAtomConfig, LifeSpanConfig, ModelConfig,
    PmfMap, PoissonCareerConfig, SplitAtomConfig, SplittingConfig, ValidationReport, VariantConfig,
    Violation, PMF_SUM_TOL,
};

use crate::stream::Stream;

pub const DEFAULT_CAREER_CAP: usize = 10_000;

/// Index of a type in a finite type space `0..m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub usize);

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "type {}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BirthEvent {
    pub age: f64,
    pub child_type: TypeId,
}

/// One realised life: births ordered by maternal age, plus the life span
/// where the model has one.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LifeCareer {
    pub births: Vec<BirthEvent>,
    pub life_span: Option<f64>,
}

impl LifeCareer {
    /// Total offspring `X`.
    pub fn offspring(&self) -> usize {
        self.births.len()
    }

    pub fn counts_by_type(&self, types: usize) -> Vec<u32> {
        let mut counts = vec![0; types];
        for b in &self.births {
            counts[b.child_type.0] += 1;
        }
        counts
    }

    /// Age of the last event of the career: death if known, else last birth.
    pub fn end_age(&self) -> f64 {
        self.life_span
            .or_else(|| self.births.last().map(|b| b.age))
            .unwrap_or(0.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SampleError {
    #[error("{type_id} career exceeded the cap of {cap} children")]
    CareerCapExceeded { type_id: TypeId, cap: usize },
    #[error("{type_id} is not a type of this {types}-type model")]
    UnknownType { type_id: TypeId, types: usize },
    #[error(
        "conditioning on extinction is undefined for {type_id}: its extinction probability is 0"
    )]
    ConditioningUndefined { type_id: TypeId },
    #[error("no career of {type_id} accepted in {attempts} attempts")]
    RejectionStalled { type_id: TypeId, attempts: u64 },
}

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("invalid model: {0}")]
    Invalid(ValidationReport),
    #[error("model document is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{operation} is not available for {variant} models")]
    Unsupported {
        operation: &'static str,
        variant: &'static str,
    },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Anything that draws life careers given the mother's type.
pub trait CareerSampler: Sync {
    fn types(&self) -> usize;

    fn sample_career(&self, s: TypeId, rng: &mut Stream) -> Result<LifeCareer, SampleError>;
}

/// Pmf over per-type child-count vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    types: usize,
    outcomes: Vec<(Vec<u32>, f64)>,
}

impl JointPmf {
    pub fn new(types: usize, outcomes: Vec<(Vec<u32>, f64)>) -> Result<Self, KernelError> {
        if let Some((counts, _)) = outcomes.iter().find(|(c, _)| c.len() != types) {
            return Err(KernelError::InvalidArgument(format!(
                "outcome {counts:?} does not have {types} entries"
            )));
        }
        Ok(JointPmf { types, outcomes })
    }

    /// Single-type pmf from `(child count, probability)` pairs.
    pub fn single(pairs: &[(u32, f64)]) -> Self {
        JointPmf {
            types: 1,
            outcomes: pairs.iter().map(|&(k, p)| (vec![k], p)).collect(),
        }
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn outcomes(&self) -> &[(Vec<u32>, f64)] {
        &self.outcomes
    }

    pub fn total(&self) -> f64 {
        self.outcomes.iter().map(|(_, p)| p).sum()
    }

    /// Probability of an exact count vector (0 if absent).
    pub fn prob(&self, counts: &[u32]) -> f64 {
        self.outcomes
            .iter()
            .filter(|(c, _)| c.as_slice() == counts)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.types];
        for (counts, p) in &self.outcomes {
            for (m, &k) in mean.iter_mut().zip(counts) {
                *m += p * f64::from(k);
            }
        }
        mean
    }

    pub fn pgf(&self, z: &[f64]) -> f64 {
        self.outcomes
            .iter()
            .map(|(counts, p)| p * monomial(z, counts))
            .sum()
    }

    pub fn pgf_gradient(&self, z: &[f64]) -> Vec<f64> {
        let mut grad = vec![0.0; self.types];
        for (counts, p) in &self.outcomes {
            for (j, g) in grad.iter_mut().enumerate() {
                if counts[j] == 0 {
                    continue;
                }
                let mut term = p * f64::from(counts[j]);
                for (i, (&zi, &ki)) in z.iter().zip(counts).enumerate() {
                    let exp = if i == j { ki - 1 } else { ki };
                    term *= zi.powi(exp as i32);
                }
                *g += term;
            }
        }
        grad
    }

    fn to_map(&self) -> PmfMap {
        let mut map = PmfMap::new();
        for (counts, p) in &self.outcomes {
            *map.entry(format_count_key(counts)).or_insert(0.0) += p;
        }
        map
    }
}

fn monomial(z: &[f64], counts: &[u32]) -> f64 {
    z.iter()
        .zip(counts)
        .map(|(&zi, &k)| zi.powi(k as i32))
        .product()
}

/// One atom of a discrete life-span law with its split pmf `p_k(age)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAtom {
    pub age: f64,
    pub prob: f64,
    /// `split[k]` is the probability of splitting into `k` children.
    pub split: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplittingLaw {
    Discrete(Vec<SplitAtom>),
    /// Exponential life span; the split law does not depend on age.
    Exponential {
        rate: f64,
        split: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LifeSpanLaw {
    Discrete(Vec<(f64, f64)>),
    Exponential { rate: f64 },
}

impl LifeSpanLaw {
    pub fn mean(&self) -> f64 {
        match self {
            LifeSpanLaw::Discrete(atoms) => atoms.iter().map(|(a, p)| a * p).sum(),
            LifeSpanLaw::Exponential { rate } => 1.0 / rate,
        }
    }
}

/// Poisson births at `birth_rate` during the life span, types drawn from
/// `child_types`.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonCareer {
    pub life_span: LifeSpanLaw,
    pub birth_rate: f64,
    pub child_types: Vec<f64>,
}

impl PoissonCareer {
    /// `E[exp(birth_rate * L * c)]` and its derivative in `c`, for `c <= 0`.
    fn laplace(&self, c: f64) -> (f64, f64) {
        let lam = self.birth_rate;
        match &self.life_span {
            LifeSpanLaw::Discrete(atoms) => atoms.iter().fold((0.0, 0.0), |(v, d), &(u, p)| {
                let e = p * (lam * u * c).exp();
                (v + e, d + e * lam * u)
            }),
            LifeSpanLaw::Exponential { rate } => {
                let denom = rate - lam * c;
                (rate / denom, rate * lam / (denom * denom))
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Law {
    Bgw(Vec<(JointPmf, WeightedIndex<f64>)>),
    Sevastyanov {
        law: SplittingLaw,
        ages: Option<WeightedIndex<f64>>,
        splits: Vec<WeightedIndex<f64>>,
    },
    General(
        Vec<(
            PoissonCareer,
            Option<WeightedIndex<f64>>,
            WeightedIndex<f64>,
        )>,
    ),
}

/// A validated life kernel.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    types: usize,
    career_cap: usize,
    law: Law,
}

fn dense_split(map: &PmfMap) -> Vec<f64> {
    let mut split = Vec::new();
    for (k, &p) in map {
        let k: usize = k.trim().parse().expect("validated split key");
        if split.len() <= k {
            split.resize(k + 1, 0.0);
        }
        split[k] += p;
    }
    split
}

fn sparse_split(split: &[f64]) -> PmfMap {
    split
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(k, &p)| (k.to_string(), p))
        .collect()
}

fn weighted(weights: impl IntoIterator<Item = f64>) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).expect("validated pmf has positive mass")
}

fn life_span_config(law: &LifeSpanLaw) -> LifeSpanConfig {
    match law {
        LifeSpanLaw::Discrete(atoms) => LifeSpanConfig::Discrete {
            atoms: atoms
                .iter()
                .map(|&(age, prob)| AgeAtomConfig { age, prob })
                .collect(),
        },
        LifeSpanLaw::Exponential { rate } => LifeSpanConfig::Exponential { rate: *rate },
    }
}

impl Model {
    pub fn new(config: ModelConfig) -> Result<Self, KernelError> {
        let report = validate_model(&config);
        if !report.is_valid() {
            return Err(KernelError::Invalid(report));
        }
        let types = config.types;
        let career_cap = config.career_cap.unwrap_or(DEFAULT_CAREER_CAP);
        let law = match &config.variant {
            VariantConfig::Bgw { offspring } => Law::Bgw(
                offspring
                    .iter()
                    .map(|map| {
                        let outcomes = map
                            .iter()
                            .map(|(k, &p)| (parse_count_key(k, types).expect("validated key"), p))
                            .collect();
                        let pmf = JointPmf { types, outcomes };
                        let index = weighted(pmf.outcomes.iter().map(|(_, p)| *p));
                        (pmf, index)
                    })
                    .collect(),
            ),
            VariantConfig::Sevastyanov { life_span } => match life_span {
                SplittingConfig::Discrete { atoms } => {
                    let atoms: Vec<SplitAtom> = atoms
                        .iter()
                        .map(|a| SplitAtom {
                            age: a.age,
                            prob: a.prob,
                            split: dense_split(&a.split),
                        })
                        .collect();
                    Law::Sevastyanov {
                        ages: Some(weighted(atoms.iter().map(|a| a.prob))),
                        splits: atoms
                            .iter()
                            .map(|a| weighted(a.split.iter().copied()))
                            .collect(),
                        law: SplittingLaw::Discrete(atoms),
                    }
                }
                SplittingConfig::Exponential { rate, split } => {
                    let split = dense_split(split);
                    Law::Sevastyanov {
                        ages: None,
                        splits: vec![weighted(split.iter().copied())],
                        law: SplittingLaw::Exponential { rate: *rate, split },
                    }
                }
            },
            VariantConfig::General { careers } => Law::General(
                careers
                    .iter()
                    .map(|c| {
                        let life_span = match &c.life_span {
                            LifeSpanConfig::Discrete { atoms } => LifeSpanLaw::Discrete(
                                atoms.iter().map(|a| (a.age, a.prob)).collect(),
                            ),
                            LifeSpanConfig::Exponential { rate } => {
                                LifeSpanLaw::Exponential { rate: *rate }
                            }
                        };
                        let mut child_types = vec![0.0; types];
                        for (k, &p) in &c.child_types {
                            child_types[k.trim().parse::<usize>().expect("validated type")] += p;
                        }
                        let ages = match &life_span {
                            LifeSpanLaw::Discrete(atoms) => {
                                Some(weighted(atoms.iter().map(|(_, p)| *p)))
                            }
                            LifeSpanLaw::Exponential { .. } => None,
                        };
                        let marks = weighted(child_types.iter().copied());
                        (
                            PoissonCareer {
                                life_span,
                                birth_rate: c.birth_rate,
                                child_types,
                            },
                            ages,
                            marks,
                        )
                    })
                    .collect(),
            ),
        };
        Ok(Model {
            config,
            types,
            career_cap,
            law,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self, KernelError> {
        Model::new(serde_json::from_str(json)?)
    }

    pub fn bgw(pmfs: Vec<JointPmf>) -> Result<Self, KernelError> {
        let types = pmfs.first().map_or(0, JointPmf::types);
        if pmfs.iter().any(|p| p.types != types) {
            return Err(KernelError::InvalidArgument(
                "offspring pmfs disagree on the number of types".into(),
            ));
        }
        Model::new(ModelConfig {
            types,
            variant: VariantConfig::Bgw {
                offspring: pmfs.iter().map(JointPmf::to_map).collect(),
            },
            career_cap: None,
        })
    }

    pub fn sevastyanov(law: SplittingLaw) -> Result<Self, KernelError> {
        let life_span = match &law {
            SplittingLaw::Discrete(atoms) => SplittingConfig::Discrete {
                atoms: atoms
                    .iter()
                    .map(|a| SplitAtomConfig {
                        age: a.age,
                        prob: a.prob,
                        split: sparse_split(&a.split),
                    })
                    .collect(),
            },
            SplittingLaw::Exponential { rate, split } => SplittingConfig::Exponential {
                rate: *rate,
                split: sparse_split(split),
            },
        };
        Model::new(ModelConfig {
            types: 1,
            variant: VariantConfig::Sevastyanov { life_span },
            career_cap: None,
        })
    }

    pub fn general(careers: Vec<PoissonCareer>) -> Result<Self, KernelError> {
        let types = careers.len();
        Model::new(ModelConfig {
            types,
            variant: VariantConfig::General {
                careers: careers
                    .iter()
                    .map(|c| PoissonCareerConfig {
                        life_span: life_span_config(&c.life_span),
                        birth_rate: c.birth_rate,
                        child_types: c
                            .child_types
                            .iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(t, &p)| (t.to_string(), p))
                            .collect(),
                    })
                    .collect(),
            },
            career_cap: None,
        })
    }

    /// The same kernel with a different per-career child cap.
    pub fn with_career_cap(&self, cap: usize) -> Result<Self, KernelError> {
        let mut config = self.config.clone();
        config.career_cap = Some(cap);
        Model::new(config)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn types(&self) -> usize {
        self.types
    }

    pub fn career_cap(&self) -> usize {
        self.career_cap
    }

    pub fn variant_name(&self) -> &'static str {
        match self.law {
            Law::Bgw(_) => "bgw",
            Law::Sevastyanov { .. } => "sevastyanov",
            Law::General(_) => "general",
        }
    }

    pub fn offspring_pmf(&self, s: TypeId) -> Option<&JointPmf> {
        match &self.law {
            Law::Bgw(laws) => laws.get(s.0).map(|(pmf, _)| pmf),
            _ => None,
        }
    }

    pub fn splitting_law(&self) -> Option<&SplittingLaw> {
        match &self.law {
            Law::Sevastyanov { law, .. } => Some(law),
            _ => None,
        }
    }

    pub fn poisson_careers(&self) -> Option<Vec<&PoissonCareer>> {
        match &self.law {
            Law::General(careers) => Some(careers.iter().map(|(c, _, _)| c).collect()),
            _ => None,
        }
    }

    fn check_type(&self, s: TypeId) -> Result<(), KernelError> {
        if s.0 < self.types {
            Ok(())
        } else {
            Err(KernelError::InvalidArgument(format!(
                "{s} is not a type of this {}-type model",
                self.types
            )))
        }
    }

    fn check_arg(&self, z: &[f64]) -> Result<(), KernelError> {
        if z.len() != self.types {
            return Err(KernelError::InvalidArgument(format!(
                "argument has {} entries, expected {}",
                z.len(),
                self.types
            )));
        }
        if let Some(x) = z.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(KernelError::InvalidArgument(format!(
                "argument entry {x} lies outside [0, 1]"
            )));
        }
        Ok(())
    }

    /// `f_s(z) = E_s[prod_j z_j^(number of type-j children)]`.
    pub fn offspring_pgf(&self, s: TypeId, z: &[f64]) -> Result<f64, KernelError> {
        self.check_type(s)?;
        self.check_arg(z)?;
        Ok(match &self.law {
            Law::Bgw(laws) => laws[s.0].0.pgf(z),
            Law::Sevastyanov { law, .. } => match law {
                SplittingLaw::Discrete(atoms) => atoms
                    .iter()
                    .map(|a| a.prob * split_pgf(&a.split, z[0]))
                    .sum(),
                SplittingLaw::Exponential { split, .. } => split_pgf(split, z[0]),
            },
            Law::General(careers) => {
                let c = &careers[s.0].0;
                c.laplace(mark_shift(c, z)).0
            }
        })
    }

    /// Gradient of `f_s` at `z`: row `s` of the Jacobian.
    pub fn offspring_pgf_gradient(&self, s: TypeId, z: &[f64]) -> Result<Vec<f64>, KernelError> {
        self.check_type(s)?;
        self.check_arg(z)?;
        Ok(match &self.law {
            Law::Bgw(laws) => laws[s.0].0.pgf_gradient(z),
            Law::Sevastyanov { law, .. } => vec![match law {
                SplittingLaw::Discrete(atoms) => atoms
                    .iter()
                    .map(|a| a.prob * split_pgf_derivative(&a.split, z[0]))
                    .sum(),
                SplittingLaw::Exponential { split, .. } => split_pgf_derivative(split, z[0]),
            }],
            Law::General(careers) => {
                let c = &careers[s.0].0;
                let d = c.laplace(mark_shift(c, z)).1;
                c.child_types.iter().map(|pi| d * pi).collect()
            }
        })
    }

    /// All per-type offspring generating functions at once.
    pub fn offspring_pgf_all(&self, z: &[f64]) -> Result<Vec<f64>, KernelError> {
        (0..self.types)
            .map(|s| self.offspring_pgf(TypeId(s), z))
            .collect()
    }

    /// `M[s][j]`: expected number of type-`j` children of a type-`s` mother.
    pub fn mean_matrix(&self) -> Result<MeanMatrix, KernelError> {
        let ones = vec![1.0; self.types];
        let rows = (0..self.types)
            .map(|s| self.offspring_pgf_gradient(TypeId(s), &ones))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MeanMatrix(rows))
    }

    /// Mean reproduction measure of a type-`s` mother over (age, child type).
    pub fn mean_reproduction_measure(&self, s: TypeId) -> Result<MeanReproMeasure, KernelError> {
        self.check_type(s)?;
        match &self.law {
            Law::Bgw(laws) => Ok(MeanReproMeasure::Atoms(
                laws[s.0]
                    .0
                    .mean()
                    .into_iter()
                    .enumerate()
                    .filter(|(_, m)| *m > 0.0)
                    .map(|(j, mass)| ReproAtom {
                        age: 1.0,
                        child_type: TypeId(j),
                        mass,
                    })
                    .collect(),
            )),
            Law::Sevastyanov { law, .. } => Ok(match law {
                SplittingLaw::Discrete(atoms) => MeanReproMeasure::Atoms(
                    atoms
                        .iter()
                        .map(|a| ReproAtom {
                            age: a.age,
                            child_type: TypeId(0),
                            mass: a.prob * split_mean(&a.split),
                        })
                        .filter(|a| a.mass > 0.0)
                        .collect(),
                ),
                SplittingLaw::Exponential { rate, split } => MeanReproMeasure::Exponential {
                    rate: *rate,
                    masses: vec![split_mean(split)],
                },
            }),
            Law::General(_) => Err(KernelError::Unsupported {
                operation: "mean reproduction measure",
                variant: "general",
            }),
        }
    }

    fn sample(&self, s: TypeId, rng: &mut Stream) -> Result<LifeCareer, SampleError> {
        if s.0 >= self.types {
            return Err(SampleError::UnknownType {
                type_id: s,
                types: self.types,
            });
        }
        let too_many = |n: usize| n > self.career_cap;
        let career = match &self.law {
            Law::Bgw(laws) => {
                let (pmf, index) = &laws[s.0];
                let counts = &pmf.outcomes[index.sample(rng)].0;
                let mut births = Vec::with_capacity(counts.iter().sum::<u32>() as usize);
                for (j, &k) in counts.iter().enumerate() {
                    births.extend((0..k).map(|_| BirthEvent {
                        age: 1.0,
                        child_type: TypeId(j),
                    }));
                }
                LifeCareer {
                    births,
                    life_span: Some(1.0),
                }
            }
            Law::Sevastyanov { law, ages, splits } => {
                let (age, k) = match law {
                    SplittingLaw::Discrete(atoms) => {
                        let i = ages.as_ref().expect("discrete ages").sample(rng);
                        (atoms[i].age, splits[i].sample(rng))
                    }
                    SplittingLaw::Exponential { rate, .. } => {
                        let age = Exp::new(*rate).expect("validated rate").sample(rng);
                        (age, splits[0].sample(rng))
                    }
                };
                if too_many(k) {
                    return Err(SampleError::CareerCapExceeded {
                        type_id: s,
                        cap: self.career_cap,
                    });
                }
                LifeCareer {
                    births: vec![
                        BirthEvent {
                            age,
                            child_type: TypeId(0)
                        };
                        k
                    ],
                    life_span: Some(age),
                }
            }
            Law::General(careers) => {
                let (career, ages, marks) = &careers[s.0];
                let life_span = match &career.life_span {
                    LifeSpanLaw::Discrete(atoms) => {
                        atoms[ages.as_ref().expect("discrete ages").sample(rng)].0
                    }
                    LifeSpanLaw::Exponential { rate } => {
                        Exp::new(*rate).expect("validated rate").sample(rng)
                    }
                };
                let mut births = Vec::new();
                if career.birth_rate > 0.0 {
                    let gap = Exp::new(career.birth_rate).expect("validated rate");
                    let mut age = gap.sample(rng);
                    while age < life_span {
                        if too_many(births.len() + 1) {
                            return Err(SampleError::CareerCapExceeded {
                                type_id: s,
                                cap: self.career_cap,
                            });
                        }
                        births.push(BirthEvent {
                            age,
                            child_type: TypeId(marks.sample(rng)),
                        });
                        age += gap.sample(rng);
                    }
                }
                LifeCareer {
                    births,
                    life_span: Some(life_span),
                }
            }
        };
        Ok(career)
    }
}

impl CareerSampler for Model {
    fn types(&self) -> usize {
        self.types
    }

    fn sample_career(&self, s: TypeId, rng: &mut Stream) -> Result<LifeCareer, SampleError> {
        self.sample(s, rng)
    }
}

fn mark_shift(c: &PoissonCareer, z: &[f64]) -> f64 {
    c.child_types
        .iter()
        .zip(z)
        .map(|(p, zj)| p * zj)
        .sum::<f64>()
        - 1.0
}

fn split_pgf(split: &[f64], z: f64) -> f64 {
    // Horner from the highest count down.
    split.iter().rev().fold(0.0, |acc, &p| acc * z + p)
}

fn split_pgf_derivative(split: &[f64], z: f64) -> f64 {
    split
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, &p)| acc * z + k as f64 * p)
}

fn split_mean(split: &[f64]) -> f64 {
    split.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
}

/// Expected per-type child counts, `M[s][j]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MeanMatrix(Vec<Vec<f64>>);

impl MeanMatrix {
    /// Returns `None` unless `rows` is square with finite nonnegative entries.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Option<Self> {
        let n = rows.len();
        let ok = rows
            .iter()
            .all(|r| r.len() == n && r.iter().all(|x| x.is_finite() && *x >= 0.0));
        ok.then_some(MeanMatrix(rows))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.0
    }

    pub fn get(&self, s: usize, j: usize) -> f64 {
        self.0[s][j]
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.0
            .iter()
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReproAtom {
    pub age: f64,
    pub child_type: TypeId,
    pub mass: f64,
}

/// Expected number of births by maternal age and child type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MeanReproMeasure {
    Atoms(Vec<ReproAtom>),
    /// `masses[j] * rate * exp(-rate t) dt` for each child type `j`.
    Exponential {
        rate: f64,
        masses: Vec<f64>,
    },
}

impl MeanReproMeasure {
    pub fn is_empty(&self) -> bool {
        match self {
            MeanReproMeasure::Atoms(atoms) => atoms.is_empty(),
            MeanReproMeasure::Exponential { masses, .. } => masses.iter().all(|m| *m == 0.0),
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            MeanReproMeasure::Atoms(atoms) => atoms.iter().map(|a| a.mass).sum(),
            MeanReproMeasure::Exponential { masses, .. } => masses.iter().sum(),
        }
    }

    /// Total mass per child type.
    pub fn masses(&self, types: usize) -> Vec<f64> {
        self.laplace_row(0.0, types)
    }

    /// `int exp(-alpha t) mu(dt x {j})` for every child type `j`; infinite
    /// where the integral diverges.
    pub fn laplace_row(&self, alpha: f64, types: usize) -> Vec<f64> {
        let mut row = vec![0.0; types];
        match self {
            MeanReproMeasure::Atoms(atoms) => {
                for a in atoms {
                    row[a.child_type.0] += a.mass * (-alpha * a.age).exp();
                }
            }
            MeanReproMeasure::Exponential { rate, masses } => {
                for (r, m) in row.iter_mut().zip(masses) {
                    *r = if *m == 0.0 {
                        0.0
                    } else if alpha > -rate {
                        m * rate / (rate + alpha)
                    } else {
                        f64::INFINITY
                    };
                }
            }
        }
        row
    }
}

#[cfg(test)]
mod tests {
    use super::catalog;
    use super::*;
    use crate::stream::replicate_stream;

    const N: usize = 100_000;

    #[test]
    fn pgf_examples() {
        let bgw = catalog::bgw_quarter();
        let v = bgw.offspring_pgf(TypeId(0), &[1.0 / 3.0]).unwrap();
        assert!((v - 1.0 / 3.0).abs() < 1e-15);

        let sev = catalog::sevastyanov_example();
        let v = sev.offspring_pgf(TypeId(0), &[5.0 / 11.0]).unwrap();
        assert!((v - 5.0 / 11.0).abs() < 1e-15);

        for model in catalog::all() {
            let ones = vec![1.0; model.types()];
            for s in 0..model.types() {
                let v = model.offspring_pgf(TypeId(s), &ones).unwrap();
                assert!(
                    (v - 1.0).abs() < 1e-12,
                    "{}: f(1) = {v}",
                    model.variant_name()
                );
            }
        }
    }

    #[test]
    fn pgf_argument_checks() {
        let bgw = catalog::bgw_quarter();
        assert!(bgw.offspring_pgf(TypeId(0), &[1.5]).is_err());
        assert!(bgw.offspring_pgf(TypeId(0), &[0.5, 0.5]).is_err());
        assert!(bgw.offspring_pgf(TypeId(1), &[0.5]).is_err());
    }

    #[test]
    fn mean_matrices() {
        assert_eq!(
            catalog::bgw_quarter().mean_matrix().unwrap().rows(),
            &[vec![1.5]]
        );
        assert_eq!(
            catalog::flip().mean_matrix().unwrap().rows(),
            &[vec![0.0, 1.5], vec![1.5, 0.0]]
        );
        let det = Model::bgw(vec![JointPmf::single(&[(1, 1.0)])]).unwrap();
        assert_eq!(det.mean_matrix().unwrap().rows(), &[vec![1.0]]);

        // E[X | L=1] = 1, E[X | L=2] = 7/4, each with weight 1/2.
        let sev = catalog::sevastyanov_example().mean_matrix().unwrap();
        assert!((sev.get(0, 0) - 1.375).abs() < 1e-15);
    }

    #[test]
    fn mean_matrix_matches_finite_differences() {
        for model in catalog::all() {
            let m = model.types();
            let mm = model.mean_matrix().unwrap();
            let h = 1e-6;
            for s in 0..m {
                for j in 0..m {
                    let mut z = vec![1.0; m];
                    z[j] -= h;
                    let f1 = model.offspring_pgf(TypeId(s), &vec![1.0; m]).unwrap();
                    let f0 = model.offspring_pgf(TypeId(s), &z).unwrap();
                    let fd = (f1 - f0) / h;
                    assert!(
                        (fd - mm.get(s, j)).abs() < 1e-4 * (1.0 + mm.get(s, j)),
                        "{} M[{s}][{j}]: {fd} vs {}",
                        model.variant_name(),
                        mm.get(s, j)
                    );
                }
            }
        }
    }

    #[test]
    fn reproduction_measures() {
        let bgw = catalog::bgw_quarter()
            .mean_reproduction_measure(TypeId(0))
            .unwrap();
        assert_eq!(
            bgw,
            MeanReproMeasure::Atoms(vec![ReproAtom {
                age: 1.0,
                child_type: TypeId(0),
                mass: 1.5
            }])
        );

        let sev = catalog::sevastyanov_example()
            .mean_reproduction_measure(TypeId(0))
            .unwrap();
        let MeanReproMeasure::Atoms(atoms) = &sev else {
            panic!("expected atoms")
        };
        assert_eq!(atoms.len(), 2);
        assert_eq!((atoms[0].age, atoms[0].mass), (1.0, 0.5));
        assert_eq!((atoms[1].age, atoms[1].mass), (2.0, 0.875));

        let dead = Model::bgw(vec![JointPmf::single(&[(0, 1.0)])]).unwrap();
        assert!(dead
            .mean_reproduction_measure(TypeId(0))
            .unwrap()
            .is_empty());

        assert!(catalog::two_type_general()
            .mean_reproduction_measure(TypeId(0))
            .is_err());

        for model in catalog::all() {
            let Ok(mm) = model.mean_matrix() else {
                continue;
            };
            for s in 0..model.types() {
                if let Ok(mu) = model.mean_reproduction_measure(TypeId(s)) {
                    for (a, b) in mu.masses(model.types()).iter().zip(&mm.rows()[s]) {
                        assert!((a - b).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn bgw_careers() {
        let model = catalog::bgw_quarter();
        let mut rng = replicate_stream(11, 0);
        let mut twos = 0usize;
        for _ in 0..N {
            let c = model.sample_career(TypeId(0), &mut rng).unwrap();
            assert!(c.births.iter().all(|b| b.age == 1.0));
            assert_eq!(c.life_span, Some(1.0));
            match c.offspring() {
                0 => {}
                2 => twos += 1,
                x => panic!("impossible offspring {x}"),
            }
        }
        let p = 0.75;
        let sigma = (N as f64 * p * (1.0 - p)).sqrt();
        assert!((twos as f64 - N as f64 * p).abs() < 3.0 * sigma);
    }

    #[test]
    fn splitting_births_at_death() {
        let model = catalog::sevastyanov_example();
        let mut rng = replicate_stream(12, 0);
        for _ in 0..10_000 {
            let c = model.sample_career(TypeId(0), &mut rng).unwrap();
            let l = c.life_span.unwrap();
            assert!(l == 1.0 || l == 2.0);
            assert!(c.births.iter().all(|b| b.age == l));
        }
    }

    #[test]
    fn degenerate_childless() {
        let model = Model::bgw(vec![JointPmf::single(&[(0, 1.0)])]).unwrap();
        let mut rng = replicate_stream(1, 0);
        for _ in 0..100 {
            assert_eq!(
                model
                    .sample_career(TypeId(0), &mut rng)
                    .unwrap()
                    .offspring(),
                0
            );
        }
    }

    #[test]
    fn general_careers_are_ordered_and_within_life() {
        let model = catalog::two_type_general();
        let mut rng = replicate_stream(13, 0);
        for s in 0..2 {
            for _ in 0..10_000 {
                let c = model.sample_career(TypeId(s), &mut rng).unwrap();
                let l = c.life_span.unwrap();
                assert!(c.births.windows(2).all(|w| w[0].age <= w[1].age));
                assert!(c.births.iter().all(|b| b.age < l));
            }
        }
    }

    #[test]
    fn career_cap_is_an_error() {
        let model = catalog::two_type_general().with_career_cap(1).unwrap();
        let mut rng = replicate_stream(3, 0);
        let hit = (0..1000).any(|_| {
            matches!(
                model.sample_career(TypeId(0), &mut rng),
                Err(SampleError::CareerCapExceeded { cap: 1, .. })
            )
        });
        assert!(hit);
    }

    #[test]
    fn monte_carlo_means_match_mean_matrix() {
        for model in catalog::all() {
            let m = model.types();
            let mm = model.mean_matrix().unwrap();
            let mut rng = replicate_stream(17, 0);
            for s in 0..m {
                let mut sum = vec![0.0; m];
                let mut sum_sq = vec![0.0; m];
                for _ in 0..N {
                    let counts = model
                        .sample_career(TypeId(s), &mut rng)
                        .unwrap()
                        .counts_by_type(m);
                    for j in 0..m {
                        let x = f64::from(counts[j]);
                        sum[j] += x;
                        sum_sq[j] += x * x;
                    }
                }
                for j in 0..m {
                    let n = N as f64;
                    let mean = sum[j] / n;
                    let se = ((sum_sq[j] / n - mean * mean) / n).sqrt();
                    assert!(
                        (mean - mm.get(s, j)).abs() <= 4.0 * se + 1e-12,
                        "{} M[{s}][{j}]: {mean} vs {} (se {se})",
                        model.variant_name(),
                        mm.get(s, j)
                    );
                }
            }
        }
    }

    #[test]
    fn pgf_monotone_and_convex_on_grid() {
        for model in catalog::all() {
            let m = model.types();
            let grid: Vec<f64> = (0..=20).map(|i| f64::from(i) / 20.0).collect();
            for s in 0..m {
                for j in 0..m {
                    for base in &grid {
                        let vals: Vec<f64> = grid
                            .iter()
                            .map(|&x| {
                                let mut z = vec![*base; m];
                                z[j] = x;
                                model.offspring_pgf(TypeId(s), &z).unwrap()
                            })
                            .collect();
                        for w in vals.windows(3) {
                            assert!(w[1] >= w[0] - 1e-15);
                            assert!(w[2] - 2.0 * w[1] + w[0] >= -1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn config_round_trip() {
        for model in catalog::all() {
            let json = serde_json::to_string(model.config()).unwrap();
            let back = Model::from_json_str(&json).unwrap();
            assert_eq!(back.config(), model.config());
        }
    }
}
