//! Extinction probabilities.
//!
//! `q_s` is the minimal fixed point of the offspring generating function in
//! `[0,1]^m`. Iterating `q <- f(q)` from the zero vector climbs monotonically
//! to it, since `f^n(0)` is the probability of dying out by generation `n`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{CareerSampler, KernelError, Model, TypeId};
use crate::simulate::{map_replicates, SimConfig, SimError};

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 1_000_000;

/// Two-sided 95% standard normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error)]
pub enum ExtinctionError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Simulation(#[from] SimError),
    #[error(
        "no convergence after {iterations} iterations (last step {last_step:e}, residual {residual:e})"
    )]
    NotConverged {
        iterations: usize,
        last_step: f64,
        residual: f64,
    },
    #[error("invalid extinction vector: {0}")]
    InvalidQ(String),
}

/// Per-type extinction probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct QVector(Vec<f64>);

impl QVector {
    pub fn new(q: Vec<f64>) -> Result<Self, ExtinctionError> {
        if q.is_empty() {
            return Err(ExtinctionError::InvalidQ("no entries".into()));
        }
        if let Some(x) = q.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(ExtinctionError::InvalidQ(format!(
                "entry {x} lies outside [0, 1]"
            )));
        }
        Ok(QVector(q))
    }

    pub fn get(&self, s: TypeId) -> f64 {
        self.0[s.0]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `sup_s q_s`.
    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    /// Types that cannot die out; conditioning on extinction is undefined there.
    pub fn zero_types(&self) -> Vec<TypeId> {
        self.0
            .iter()
            .enumerate()
            .filter(|(_, &q)| q == 0.0)
            .map(|(s, _)| TypeId(s))
            .collect()
    }
}

impl TryFrom<Vec<f64>> for QVector {
    type Error = ExtinctionError;

    fn try_from(q: Vec<f64>) -> Result<Self, Self::Error> {
        QVector::new(q)
    }
}

impl From<QVector> for Vec<f64> {
    fn from(q: QVector) -> Self {
        q.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolveOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QSolution {
    pub q: QVector,
    pub iterations: usize,
    /// `||q - f(q)||_inf` at the returned `q`.
    pub residual: f64,
    /// Sup-norm size of the final iteration step.
    pub last_step: f64,
    /// Whether every iterate was coordinatewise no smaller than the last.
    pub monotone: bool,
    pub zero_types: Vec<TypeId>,
}

/// Slack for the monotonicity check: `f` is evaluated in floating point.
const MONOTONE_SLACK: f64 = 1e-15;

/// Tolerance for [`solve_q_precise`]. Conditioned laws divide by `q`, so
/// errors in `q` are amplified; this keeps them below `1e-12` downstream.
pub const PRECISE_TOL: f64 = 1e-15;

/// [`solve_q`] at [`PRECISE_TOL`], falling back to the default tolerance when
/// rounding keeps the iteration from getting that close. Returns the
/// tolerance that was met.
pub fn solve_q_precise(model: &Model) -> Result<(QSolution, f64), ExtinctionError> {
    let tight = SolveOptions {
        tol: PRECISE_TOL,
        ..SolveOptions::default()
    };
    match solve_q(model, tight) {
        Ok(sol) => Ok((sol, PRECISE_TOL)),
        Err(_) => Ok((solve_q(model, SolveOptions::default())?, DEFAULT_TOL)),
    }
}

/// Minimal fixed point of `q = f(q)` by iteration from zero.
pub fn solve_q(model: &Model, opts: SolveOptions) -> Result<QSolution, ExtinctionError> {
    let m = model.types();
    let mut q = vec![0.0; m];
    let mut monotone = true;
    let mut last_step = f64::INFINITY;
    let mut next = clamp(model.offspring_pgf_all(&q)?);
    for iteration in 1..=opts.max_iter {
        last_step = sup_dist(&next, &q);
        monotone &= next.iter().zip(&q).all(|(a, b)| *a >= b - MONOTONE_SLACK);
        q = next;
        next = clamp(model.offspring_pgf_all(&q)?);
        if last_step < opts.tol {
            let residual = sup_dist(&next, &q);
            if residual < opts.tol {
                let q = QVector(q);
                return Ok(QSolution {
                    zero_types: q.zero_types(),
                    q,
                    iterations: iteration,
                    residual,
                    last_step,
                    monotone,
                });
            }
        }
    }
    Err(ExtinctionError::NotConverged {
        iterations: opts.max_iter,
        last_step,
        residual: sup_dist(&next, &q),
    })
}

fn clamp(v: Vec<f64>) -> Vec<f64> {
    v.into_iter().map(|x| x.clamp(0.0, 1.0)).collect()
}

fn sup_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Monte Carlo extinction frequency with a Wilson 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fraction of runs stopped by the cap or the horizon.
    pub censored: f64,
    pub runs: u64,
    pub extinct: u64,
}

impl QEstimate {
    pub fn contains(&self, q: f64) -> bool {
        self.ci_low <= q && q <= self.ci_high
    }
}

/// Wilson score interval for `successes` out of `n`.
pub fn wilson_interval(successes: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let centre = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // The bounds are exactly 0 and 1 at the extremes; rounding would miss that.
    let low = if successes == 0 {
        0.0
    } else {
        (centre - half).max(0.0)
    };
    let high = if successes as f64 == n {
        1.0
    } else {
        (centre + half).min(1.0)
    };
    (low, high)
}

/// Fraction of `runs` populations from a type-`s` ancestor that die out
/// before exceeding `cap` individuals or reaching `horizon`.
pub fn estimate_q_mc<S: CareerSampler + ?Sized>(
    sampler: &S,
    s: TypeId,
    runs: u64,
    cap: u64,
    horizon: Option<f64>,
    seed: u64,
) -> Result<QEstimate, ExtinctionError> {
    let config = SimConfig {
        cap,
        horizon,
        snapshot_depth: 0,
        stop_line: None,
    };
    let flags = map_replicates(sampler, s, runs, &config, seed, |_, o| {
        (o.extinct, o.censored)
    })?;
    let extinct = flags.iter().filter(|(e, _)| *e).count() as u64;
    let censored = flags.iter().filter(|(_, c)| *c).count() as u64;
    let (ci_low, ci_high) = wilson_interval(extinct, runs);
    let n = runs.max(1) as f64;
    Ok(QEstimate {
        estimate: extinct as f64 / n,
        ci_low,
        ci_high,
        censored: censored as f64 / n,
        runs,
        extinct,
    })
}
