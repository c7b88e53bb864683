//! Named bundles of checks, each with a seed derived from the suite seed and
//! the check name.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::checks::*;
use super::{TestReport, Verdict, VerifyError};
use crate::extinction::solve_q_precise;
use crate::kernels::{Model, TypeId};
use crate::simulate::StopLine;
use crate::stream::derive_seed;
use crate::tilt::{TiltError, TiltedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Q,
    Tilt,
    Rn,
    Subcritical,
    Malthus,
    Branching,
    All,
}

impl Suite {
    pub const NAMES: [&'static str; 7] = [
        "q",
        "tilt",
        "rn",
        "subcritical",
        "malthus",
        "branching",
        "all",
    ];

    fn includes(self, part: Suite) -> bool {
        self == Suite::All || self == part
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let i = match self {
            Suite::Q => 0,
            Suite::Tilt => 1,
            Suite::Rn => 2,
            Suite::Subcritical => 3,
            Suite::Malthus => 4,
            Suite::Branching => 5,
            Suite::All => 6,
        };
        f.write_str(Suite::NAMES[i])
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "q" => Suite::Q,
            "tilt" => Suite::Tilt,
            "rn" => Suite::Rn,
            "subcritical" => Suite::Subcritical,
            "malthus" => Suite::Malthus,
            "branching" => Suite::Branching,
            "all" => Suite::All,
            _ => {
                return Err(format!(
                    "unknown suite {s:?}; expected one of {}",
                    Suite::NAMES.join(", ")
                ))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteOptions {
    /// Monte Carlo runs per check.
    pub runs: u64,
    pub seed: u64,
    /// Type of the ancestor.
    pub root: TypeId,
    /// Individual cap for unconditioned runs.
    pub cap: u64,
    /// Pooling threshold for progeny-size histograms.
    pub overflow: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            runs: 10_000,
            seed: 0,
            root: TypeId(0),
            cap: 1_000,
            overflow: 40,
        }
    }
}

/// A suite passes when no check failed or was inconclusive; inapplicable
/// checks do not count against it.
pub fn suite_passed(reports: &[TestReport]) -> bool {
    reports
        .iter()
        .all(|r| matches!(r.verdict, Verdict::Pass | Verdict::Inapplicable))
}

struct Runner<'a> {
    opts: &'a SuiteOptions,
    reports: Vec<TestReport>,
}

impl Runner<'_> {
    fn seed(&self, name: &str) -> u64 {
        derive_seed(self.opts.seed, name)
    }

    fn run(
        &mut self,
        name: &str,
        check: impl FnOnce(&str, u64) -> Result<TestReport, VerifyError>,
    ) -> Result<(), VerifyError> {
        let start = Instant::now();
        let mut report = check(name, self.seed(name))?;
        report.name = name.to_string();
        report.runtime = Some(start.elapsed());
        self.reports.push(report);
        Ok(())
    }
}

/// Runs the checks of `suite` on `model`.
pub fn run_suite(
    model: &Model,
    suite: Suite,
    opts: &SuiteOptions,
) -> Result<Vec<TestReport>, VerifyError> {
    let mut r = Runner {
        opts,
        reports: Vec::new(),
    };
    let (solution, tol) = solve_q_precise(model)?;
    let q = solution.q.clone();
    let root = opts.root;
    let runs = opts.runs;

    if suite.includes(Suite::Q) {
        r.run("q/fixed_point", |name, _| {
            Ok(q_fixed_point_check(name, &solution, tol))
        })?;
        for s in 0..model.types() {
            let name = format!("q/monte_carlo[type {s}]");
            r.run(&name, |name, seed| {
                q_agreement_check(name, model, &q, TypeId(s), runs, opts.cap, seed)
            })?;
        }
    }

    let tilted = match TiltedModel::new(model.clone(), q.clone()) {
        Ok(t) => Some(t),
        Err(TiltError::ConditioningUndefined(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let tilted = match tilted {
        Some(t) if q.get(root) > 0.0 => t,
        _ => {
            if suite != Suite::Q {
                r.reports.push(TestReport::inapplicable(
                    "conditioning",
                    format!("{root} cannot die out, so conditioning on extinction is undefined"),
                ));
            }
            return Ok(r.reports);
        }
    };
    let qs = q.get(root);

    if suite.includes(Suite::Tilt) {
        r.run("tilt/normalisation", |name, _| {
            tilt_normalisation_check(name, &tilted)
        })?;
        r.run("tilt/sampler_equivalence", |name, seed| {
            sampler_equivalence_check(name, &tilted, root, runs, seed)
        })?;
        r.run("tilt/acceptance_rate", |name, seed| {
            acceptance_rate_check(name, &tilted, root, runs, seed)
        })?;
        // Enough unconditioned runs that about `runs` of them die out.
        let base_runs = ((runs as f64 / qs).ceil() as u64).min(runs.saturating_mul(20));
        let mut summaries = vec![
            (
                "tilt/conditioned_total_progeny",
                OutcomeSummary::TotalProgeny {
                    overflow: opts.overflow,
                },
            ),
            (
                "tilt/conditioned_first_generation",
                OutcomeSummary::RootOffspring,
            ),
        ];
        if model.splitting_law().is_some() {
            summaries.push((
                "tilt/conditioned_root_career",
                OutcomeSummary::RootCareer {
                    resolution: 0.5,
                    max_bin: 20,
                },
            ));
        }
        for (name, summary) in summaries {
            r.run(name, |name, seed| {
                rejection_equivalence_check(
                    name, &tilted, root, summary, runs, base_runs, opts.cap, seed,
                )
            })?;
        }
        r.run("tilt/conditioned_dies_out", |name, seed| {
            conditioned_extinction_check(name, &tilted, root, runs, opts.cap.max(10_000), seed)
        })?;
    }

    if suite.includes(Suite::Rn) {
        r.run("rn/exact_generation_1", |name, _| {
            rn_weight_exact_check(name, &tilted, root)
        })?;
        for (label, line) in [
            ("generation 1", StopLine::Generation(1)),
            ("generation 2", StopLine::Generation(2)),
            ("coming generation 1.5", StopLine::ComingGeneration(1.5)),
        ] {
            r.run(&format!("rn/weight_mean[{label}]"), |name, seed| {
                rn_weight_mean_check(name, &tilted, root, line, runs, seed)
            })?;
        }
        for (label, line, g) in [
            (
                "size, generation 1",
                StopLine::Generation(1),
                LineFunctional::Size,
            ),
            (
                "empty, generation 1",
                StopLine::Generation(1),
                LineFunctional::Empty,
            ),
            (
                "size, generation 2",
                StopLine::Generation(2),
                LineFunctional::Size,
            ),
            (
                "type 0 count, generation 2",
                StopLine::Generation(2),
                LineFunctional::TypeCount(TypeId(0)),
            ),
        ] {
            r.run(&format!("rn/identity[{label}]"), |name, seed| {
                importance_identity_check(name, &tilted, root, line, g, runs, seed)
            })?;
        }
    }

    if suite.includes(Suite::Subcritical) {
        r.run("subcritical", |name, seed| {
            Ok(subcriticality_report(name, &tilted, root, runs, seed)?.report)
        })?;
    }

    if suite.includes(Suite::Malthus) {
        r.run("malthus", |name, _| {
            Ok(malthusian_sign_check(name, &tilted)?.report)
        })?;
    }

    if suite.includes(Suite::Branching) {
        let cap = opts.cap.max(50 * opts.overflow);
        r.run("branching/base", |name, seed| {
            branching_property_check(name, model, root, runs, cap, opts.overflow, seed)
        })?;
        r.run("branching/conditioned", |name, seed| {
            branching_property_check(name, &tilted, root, runs, cap, opts.overflow, seed)
        })?;
    }

    Ok(r.reports)
}
