//! Statistical and numerical checks that the conditioned process is a
//! subcritical branching process with the predicted law.
//!
//! Every check returns a [`TestReport`]; the suites in [`suite`] bundle them
//! by topic with fixed derived seeds, so a report is a pure function of the
//! model, run count and seed.

pub mod checks;
pub mod spectral;
pub mod stats;
pub mod suite;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extinction::ExtinctionError;
use crate::kernels::KernelError;
use crate::simulate::SimError;
use crate::tilt::TiltError;

pub use checks::{
    acceptance_rate_check, branching_property_check, conditioned_extinction_check,
    importance_identity_check, malthusian_sign_check, q_agreement_check, q_fixed_point_check,
    rejection_equivalence_check, rn_weight_exact_check, rn_weight_mean_check,
    sampler_equivalence_check, subcriticality_report, tilt_normalisation_check, GenerationMean,
    LineFunctional, OutcomeSummary, SubcriticalityReport,
};
pub use spectral::{malthusian_alpha, malthusian_alpha_multitype, spectral_radius};
pub use stats::{chi_square_gof, chi_square_two_sample, tv_distance, Histogram, Moments};
pub use suite::{run_suite, suite_passed, Suite, SuiteOptions};

/// Number of standard errors two Monte Carlo estimates may differ by.
pub const SE_THRESHOLD: f64 = 4.0;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Extinction(#[from] ExtinctionError),
    #[error(transparent)]
    Tilt(#[from] TiltError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl From<crate::kernels::SampleError> for VerifyError {
    fn from(e: crate::kernels::SampleError) -> Self {
        VerifyError::Simulation(e.into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    /// Too little data to decide.
    Inconclusive,
    /// The check's preconditions do not hold for this model.
    Inapplicable,
}

/// Outcome of one check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub verdict: Verdict,
    /// `verdict == Pass`.
    pub pass: bool,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub distance: Option<f64>,
    pub threshold: f64,
    /// How `statistic` or `p_value` is compared with `threshold`.
    pub criterion: String,
    pub sample_sizes: Vec<u64>,
    pub note: Option<String>,
    /// Wall-clock time; kept out of the serialised report so reruns compare
    /// byte for byte.
    #[serde(skip)]
    pub runtime: Option<Duration>,
}

impl TestReport {
    pub fn new(
        name: &str,
        verdict: Verdict,
        threshold: f64,
        criterion: &str,
        sample_sizes: Vec<u64>,
    ) -> Self {
        TestReport {
            name: name.to_string(),
            verdict,
            pass: verdict == Verdict::Pass,
            statistic: 0.0,
            p_value: None,
            distance: None,
            threshold,
            criterion: criterion.to_string(),
            sample_sizes,
            note: None,
            runtime: None,
        }
    }

    pub fn inapplicable(name: &str, why: impl Into<String>) -> Self {
        TestReport {
            note: Some(why.into()),
            ..TestReport::new(name, Verdict::Inapplicable, 0.0, "not evaluated", vec![])
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

pub(crate) fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}
