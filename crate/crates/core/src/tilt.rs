//! The life kernel of the process conditioned on extinction.
//!
//! Conditioning a type-`s` ancestor on dying out reweights a career with
//! children of types `σ(1), σ(2), ...` by `∏ q_σ(k) / q_s`. For BGW and
//! splitting models the reweighted law has closed form; otherwise careers are
//! drawn from the base kernel and accepted with probability `∏ q_σ(k)`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extinction::QVector;
use crate::kernels::{
    CareerSampler, JointPmf, KernelError, LifeCareer, MeanMatrix, Model, ModelConfig, SampleError,
    SplitAtom, SplittingLaw, TypeId,
};
use crate::stream::Stream;

/// Attempts without an acceptance before the rejection sampler gives up.
pub const REJECTION_WATCHDOG: u64 = 10_000_000;

/// How far a tilted pmf may sum from 1 before `q` is rejected as not being a
/// fixed point.
pub const FIXED_POINT_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum TiltError {
    #[error("conditioning on extinction is undefined for {0}: its extinction probability is 0")]
    ConditioningUndefined(TypeId),
    #[error("q is not a fixed point for {type_id}: tilted pmf sums to {sum}")]
    NotFixedPoint { type_id: TypeId, sum: f64 },
    #[error("life span {age} cannot be conditioned: every split has zero weight")]
    UnconditionableAtom { age: f64 },
    #[error("q has {got} entries but the model has {expected} types")]
    Dimension { got: usize, expected: usize },
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

/// `dP̃/dP` restricted to what happened up to a covering line, in log space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RnWeight {
    pub log_weight: f64,
}

impl RnWeight {
    pub fn weight(&self) -> f64 {
        self.log_weight.exp()
    }
}

/// `(1/q_s) ∏ q_σx` over the realised members of a covering line.
pub fn rn_weight<I>(s: TypeId, line_types: I, q: &QVector) -> Result<RnWeight, TiltError>
where
    I: IntoIterator<Item = TypeId>,
{
    let qs = q.get(s);
    if qs == 0.0 {
        return Err(TiltError::ConditioningUndefined(s));
    }
    let log_weight = line_types.into_iter().map(|t| q.get(t).ln()).sum::<f64>() - qs.ln();
    Ok(RnWeight { log_weight })
}

fn check_dim(model: &Model, q: &QVector) -> Result<(), TiltError> {
    if q.len() != model.types() {
        return Err(TiltError::Dimension {
            got: q.len(),
            expected: model.types(),
        });
    }
    Ok(())
}

/// Normalise weights that should already sum to one, rejecting a `q` that
/// is visibly off the fixed point.
fn renormalise(weights: &mut [f64], s: TypeId) -> Result<(), TiltError> {
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > FIXED_POINT_TOL {
        return Err(TiltError::NotFixedPoint { type_id: s, sum });
    }
    if sum != 1.0 {
        weights.iter_mut().for_each(|w| *w /= sum);
    }
    Ok(())
}

/// `p̃_s(k) = p_s(k) ∏_j q_j^(k_j) / q_s`.
pub fn tilt_offspring_pmf(pmf: &JointPmf, q: &QVector, s: TypeId) -> Result<JointPmf, TiltError> {
    let qs = q.get(s);
    if qs == 0.0 {
        return Err(TiltError::ConditioningUndefined(s));
    }
    let mut weights: Vec<f64> = pmf
        .outcomes()
        .iter()
        .map(|(counts, p)| {
            let log_q: f64 = counts
                .iter()
                .enumerate()
                .filter(|(_, &k)| k > 0)
                .map(|(j, &k)| k as f64 * q.as_slice()[j].ln())
                .sum();
            p * log_q.exp() / qs
        })
        .collect();
    renormalise(&mut weights, s)?;
    let outcomes = pmf
        .outcomes()
        .iter()
        .zip(weights)
        .filter(|(_, w)| *w > 0.0)
        .map(|((counts, _), w)| (counts.clone(), w))
        .collect();
    Ok(JointPmf::new(pmf.types(), outcomes)?)
}

/// `Σ_k p_k q^(k-1)`, the factor by which conditioning reweights an age.
fn split_weight(split: &[f64], q: f64) -> f64 {
    split
        .iter()
        .enumerate()
        .map(|(k, p)| p * q.powi(k as i32 - 1))
        .sum()
}

/// Conditioned split law `p̃_k = p_k q^(k-1) / Σ_i p_i q^(i-1)`.
fn tilt_split(split: &[f64], q: f64) -> Vec<f64> {
    let w = split_weight(split, q);
    split
        .iter()
        .enumerate()
        .map(|(k, p)| p * q.powi(k as i32 - 1) / w)
        .collect()
}

/// Conditioned life-span law and split laws of a discrete splitting model:
/// `G̃(u) = G(u) Σ_k p_k(u) q^(k-1)` and `p̃_k(u) = p_k(u) q^(k-1) / Σ_i p_i(u) q^(i-1)`.
pub fn tilt_sevastyanov(atoms: &[SplitAtom], q: f64) -> Result<Vec<SplitAtom>, TiltError> {
    if q == 0.0 {
        return Err(TiltError::ConditioningUndefined(TypeId(0)));
    }
    let mut life_span = Vec::with_capacity(atoms.len());
    for a in atoms {
        let w = split_weight(&a.split, q);
        if w <= 0.0 {
            return Err(TiltError::UnconditionableAtom { age: a.age });
        }
        life_span.push(a.prob * w);
    }
    renormalise(&mut life_span, TypeId(0))?;
    Ok(atoms
        .iter()
        .zip(life_span)
        .map(|(a, prob)| SplitAtom {
            age: a.age,
            prob,
            split: tilt_split(&a.split, q),
        })
        .collect())
}

/// Conditioned splitting law. With an exponential life span the split law
/// does not depend on age, so only the split is reweighted.
pub fn tilt_splitting_law(law: &SplittingLaw, q: f64) -> Result<SplittingLaw, TiltError> {
    match law {
        SplittingLaw::Discrete(atoms) => Ok(SplittingLaw::Discrete(tilt_sevastyanov(atoms, q)?)),
        SplittingLaw::Exponential { rate, split } => {
            if q == 0.0 {
                return Err(TiltError::ConditioningUndefined(TypeId(0)));
            }
            let mut split = tilt_split(split, q);
            renormalise(&mut split, TypeId(0))?;
            Ok(SplittingLaw::Exponential { rate: *rate, split })
        }
    }
}

/// `M̃[s][j] = ∂_j f_s(q) q_j / q_s`; rows of types with `q_s = 0` are zero.
pub fn tilted_mean_matrix(model: &Model, q: &QVector) -> Result<MeanMatrix, TiltError> {
    check_dim(model, q)?;
    let m = model.types();
    let rows = (0..m)
        .map(|s| {
            let qs = q.get(TypeId(s));
            if qs == 0.0 {
                return Ok(vec![0.0; m]);
            }
            let grad = model.offspring_pgf_gradient(TypeId(s), q.as_slice())?;
            Ok(grad
                .iter()
                .zip(q.as_slice())
                .map(|(g, qj)| g * qj / qs)
                .collect())
        })
        .collect::<Result<Vec<_>, TiltError>>()?;
    Ok(MeanMatrix::from_rows(rows).expect("square nonnegative"))
}

/// Draws careers from the base kernel and keeps each with probability
/// `∏ q_σ(k)`.
#[derive(Debug, Clone)]
pub struct RejectionSampler {
    base: Model,
    log_q: Vec<f64>,
    q: QVector,
}

impl RejectionSampler {
    pub fn new(base: Model, q: QVector) -> Result<Self, TiltError> {
        check_dim(&base, &q)?;
        let log_q = q.as_slice().iter().map(|x| x.ln()).collect();
        Ok(RejectionSampler { base, log_q, q })
    }

    pub fn base(&self) -> &Model {
        &self.base
    }

    /// An accepted career and the number of base draws it took.
    pub fn sample_counted(
        &self,
        s: TypeId,
        rng: &mut Stream,
    ) -> Result<(LifeCareer, u64), SampleError> {
        if s.0 < self.q.len() && self.q.get(s) == 0.0 {
            return Err(SampleError::ConditioningUndefined { type_id: s });
        }
        for attempt in 1..=REJECTION_WATCHDOG {
            let career = self.base.sample_career(s, rng)?;
            let log_accept: f64 = career
                .births
                .iter()
                .map(|b| self.log_q[b.child_type.0])
                .sum();
            if log_accept == 0.0 || rng.random::<f64>().ln() < log_accept {
                return Ok((career, attempt));
            }
        }
        Err(SampleError::RejectionStalled {
            type_id: s,
            attempts: REJECTION_WATCHDOG,
        })
    }
}

impl CareerSampler for RejectionSampler {
    fn types(&self) -> usize {
        self.base.types()
    }

    fn sample_career(&self, s: TypeId, rng: &mut Stream) -> Result<LifeCareer, SampleError> {
        self.sample_counted(s, rng).map(|(career, _)| career)
    }
}

/// Acceptance frequency of the rejection sampler with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcceptanceRate {
    pub type_id: TypeId,
    pub accepted: u64,
    pub attempts: u64,
    pub rate: f64,
    pub std_error: f64,
}

/// Runs the rejection sampler until `accepted` careers of type `s` are kept.
pub fn acceptance_rate(
    sampler: &RejectionSampler,
    s: TypeId,
    accepted: u64,
    rng: &mut Stream,
) -> Result<AcceptanceRate, SampleError> {
    let mut attempts = 0;
    for _ in 0..accepted {
        attempts += sampler.sample_counted(s, rng)?.1;
    }
    let rate = accepted as f64 / attempts.max(1) as f64;
    Ok(AcceptanceRate {
        type_id: s,
        accepted,
        attempts,
        rate,
        std_error: (rate * (1.0 - rate) / attempts.max(1) as f64).sqrt(),
    })
}

#[derive(Debug, Clone)]
enum TiltedKernel {
    Analytic(Model),
    Rejection(RejectionSampler),
}

/// The conditioned life kernel together with the base model and `q`.
#[derive(Debug, Clone)]
pub struct TiltedModel {
    base: Model,
    q: QVector,
    kernel: TiltedKernel,
}

impl TiltedModel {
    /// Closed-form tilt where available, rejection otherwise.
    pub fn new(base: Model, q: QVector) -> Result<Self, TiltError> {
        check_dim(&base, &q)?;
        let analytic = if let Some(law) = base.splitting_law() {
            Some(Model::sevastyanov(tilt_splitting_law(
                law,
                q.get(TypeId(0)),
            )?)?)
        } else if base.offspring_pmf(TypeId(0)).is_some() {
            let pmfs = (0..base.types())
                .map(|s| {
                    let pmf = base.offspring_pmf(TypeId(s)).expect("bgw");
                    // Such types never occur under the conditioned law.
                    if q.get(TypeId(s)) == 0.0 {
                        Ok(pmf.clone())
                    } else {
                        tilt_offspring_pmf(pmf, &q, TypeId(s))
                    }
                })
                .collect::<Result<Vec<_>, _>>()?;
            Some(Model::bgw(pmfs)?)
        } else {
            None
        };
        let kernel = match analytic {
            Some(model) => TiltedKernel::Analytic(model.with_career_cap(base.career_cap())?),
            None => TiltedKernel::Rejection(RejectionSampler::new(base.clone(), q.clone())?),
        };
        Ok(TiltedModel { base, q, kernel })
    }

    /// Tilted kernel sampled by rejection even when a closed form exists.
    pub fn by_rejection(base: Model, q: QVector) -> Result<Self, TiltError> {
        let sampler = RejectionSampler::new(base.clone(), q.clone())?;
        Ok(TiltedModel {
            base,
            q,
            kernel: TiltedKernel::Rejection(sampler),
        })
    }

    pub fn base(&self) -> &Model {
        &self.base
    }

    pub fn q(&self) -> &QVector {
        &self.q
    }

    /// The conditioned kernel as an ordinary model, when it has closed form.
    pub fn analytic(&self) -> Option<&Model> {
        match &self.kernel {
            TiltedKernel::Analytic(model) => Some(model),
            TiltedKernel::Rejection(_) => None,
        }
    }

    pub fn rejection(&self) -> Option<&RejectionSampler> {
        match &self.kernel {
            TiltedKernel::Rejection(sampler) => Some(sampler),
            TiltedKernel::Analytic(_) => None,
        }
    }

    pub fn mean_matrix(&self) -> Result<MeanMatrix, TiltError> {
        tilted_mean_matrix(&self.base, &self.q)
    }

    pub fn document(&self, acceptance: Vec<AcceptanceRate>) -> Result<TiltedDocument, TiltError> {
        Ok(TiltedDocument {
            variant: self.base.variant_name().to_string(),
            q: self.q.clone(),
            kernel: match self.kernel {
                TiltedKernel::Analytic(_) => "analytic",
                TiltedKernel::Rejection(_) => "rejection",
            }
            .to_string(),
            tilted_model: self.analytic().map(|m| m.config().clone()),
            tilted_mean_matrix: self.mean_matrix()?,
            undefined_types: self.q.zero_types(),
            acceptance,
        })
    }
}

impl CareerSampler for TiltedModel {
    fn types(&self) -> usize {
        self.base.types()
    }

    fn sample_career(&self, s: TypeId, rng: &mut Stream) -> Result<LifeCareer, SampleError> {
        if s.0 < self.q.len() && self.q.get(s) == 0.0 {
            return Err(SampleError::ConditioningUndefined { type_id: s });
        }
        match &self.kernel {
            TiltedKernel::Analytic(model) => model.sample_career(s, rng),
            TiltedKernel::Rejection(sampler) => sampler.sample_career(s, rng),
        }
    }
}

/// Serialised form of a [`TiltedModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TiltedDocument {
    pub variant: String,
    pub q: QVector,
    /// `analytic` or `rejection`.
    pub kernel: String,
    /// Conditioned kernel in the model file format, when it has closed form.
    pub tilted_model: Option<ModelConfig>,
    pub tilted_mean_matrix: MeanMatrix,
    /// Types with `q_s = 0`, from which conditioning is undefined.
    pub undefined_types: Vec<TypeId>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub acceptance: Vec<AcceptanceRate>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extinction::{solve_q, SolveOptions};
    use crate::kernels::catalog;
    use crate::stream::replicate_stream;
    use proptest::prelude::*;

    fn q1(x: f64) -> QVector {
        QVector::new(vec![x]).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quarter_tilts_to_mirror() {
        let pmf = catalog::bgw_quarter()
            .offspring_pmf(TypeId(0))
            .unwrap()
            .clone();
        let tilted = tilt_offspring_pmf(&pmf, &q1(1.0 / 3.0), TypeId(0)).unwrap();
        assert!(close(tilted.prob(&[0]), 0.75, 1e-12));
        assert!(close(tilted.prob(&[2]), 0.25, 1e-12));
        assert!(close(tilted.total(), 1.0, 1e-12));
    }

    #[test]
    fn geometric_tilt() {
        let pmf = catalog::geometric()
            .offspring_pmf(TypeId(0))
            .unwrap()
            .clone();
        let tilted = tilt_offspring_pmf(&pmf, &q1(0.5), TypeId(0)).unwrap();
        for k in 0..=catalog::GEOMETRIC_MAX_CHILDREN {
            let expected = (2.0 / 3.0) * (1.0f64 / 3.0).powi(k as i32);
            assert!(close(tilted.prob(&[k]), expected, 1e-12), "k = {k}");
        }
        assert!(close(tilted.mean()[0], 0.5, 1e-12));
    }

    #[test]
    fn sure_event_leaves_pmf_alone() {
        let pmf = catalog::bgw_subcritical_mirror()
            .offspring_pmf(TypeId(0))
            .unwrap()
            .clone();
        let tilted = tilt_offspring_pmf(&pmf, &q1(1.0), TypeId(0)).unwrap();
        assert_eq!(tilted, pmf);
    }

    #[test]
    fn flip_tilt() {
        let model = catalog::flip();
        let q = QVector::new(vec![1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let tilted =
            tilt_offspring_pmf(model.offspring_pmf(TypeId(0)).unwrap(), &q, TypeId(0)).unwrap();
        assert!(close(tilted.prob(&[0, 0]), 0.75, 1e-12));
        assert!(close(tilted.prob(&[0, 2]), 0.25, 1e-12));
        let m = tilted_mean_matrix(&model, &q).unwrap();
        assert!(close(m.get(0, 0), 0.0, 1e-15));
        assert!(close(m.get(0, 1), 0.5, 1e-12));
        assert!(close(m.get(1, 0), 0.5, 1e-12));
    }

    #[test]
    fn zero_q_is_rejected() {
        let pmf = catalog::bgw_quarter()
            .offspring_pmf(TypeId(0))
            .unwrap()
            .clone();
        assert!(matches!(
            tilt_offspring_pmf(&pmf, &q1(0.0), TypeId(0)),
            Err(TiltError::ConditioningUndefined(TypeId(0)))
        ));
        assert!(matches!(
            rn_weight(TypeId(0), [], &q1(0.0)),
            Err(TiltError::ConditioningUndefined(_))
        ));
        let atoms = match catalog::sevastyanov_example().splitting_law().unwrap() {
            SplittingLaw::Discrete(a) => a.clone(),
            _ => unreachable!(),
        };
        assert!(tilt_sevastyanov(&atoms, 0.0).is_err());
    }

    #[test]
    fn wrong_q_is_rejected() {
        let pmf = catalog::bgw_quarter()
            .offspring_pmf(TypeId(0))
            .unwrap()
            .clone();
        assert!(matches!(
            tilt_offspring_pmf(&pmf, &q1(0.5), TypeId(0)),
            Err(TiltError::NotFixedPoint { .. })
        ));
    }

    #[test]
    fn immortal_child_types_get_no_mass() {
        // Type 1 never dies out; type 0 may bear it.
        let pmf = JointPmf::new(
            2,
            vec![(vec![0, 0], 0.5), (vec![2, 0], 0.25), (vec![0, 1], 0.25)],
        )
        .unwrap();
        // f_0(q0, 0) = 1/2 + q0^2/4 has fixed point 2 - sqrt(2).
        let q0 = 2.0 - 2f64.sqrt();
        let q = QVector::new(vec![q0, 0.0]).unwrap();
        let tilted = tilt_offspring_pmf(&pmf, &q, TypeId(0)).unwrap();
        assert_eq!(tilted.prob(&[0, 1]), 0.0);
        assert!(close(tilted.total(), 1.0, 1e-12));
    }

    #[test]
    fn sevastyanov_example() {
        let atoms = match catalog::sevastyanov_example().splitting_law().unwrap() {
            SplittingLaw::Discrete(a) => a.clone(),
            _ => unreachable!(),
        };
        let tilted = tilt_sevastyanov(&atoms, 5.0 / 11.0).unwrap();
        assert!(close(tilted[0].prob, 73.0 / 110.0, 1e-12));
        assert!(close(tilted[1].prob, 37.0 / 110.0, 1e-12));
        assert!(close(tilted[0].split[0], 121.0 / 146.0, 1e-12));
        assert!(close(tilted[0].split[2], 25.0 / 146.0, 1e-12));
        for a in &tilted {
            assert!(close(a.split.iter().sum::<f64>(), 1.0, 1e-12));
        }
    }

    #[test]
    fn age_free_split_keeps_life_span() {
        let split = vec![0.25, 0.0, 0.75];
        let atoms = vec![
            SplitAtom {
                age: 1.0,
                prob: 0.3,
                split: split.clone(),
            },
            SplitAtom {
                age: 4.0,
                prob: 0.7,
                split,
            },
        ];
        let tilted = tilt_sevastyanov(&atoms, 1.0 / 3.0).unwrap();
        assert!(close(tilted[0].prob, 0.3, 1e-15));
        assert!(close(tilted[1].prob, 0.7, 1e-15));
    }

    #[test]
    fn markov_splitting_tilt() {
        let law = catalog::markov_splitting().splitting_law().unwrap().clone();
        match tilt_splitting_law(&law, 1.0 / 3.0).unwrap() {
            SplittingLaw::Exponential { rate, split } => {
                assert_eq!(rate, 1.0);
                assert!(close(split[0], 0.75, 1e-12));
                assert!(close(split[2], 0.25, 1e-12));
            }
            _ => panic!("expected exponential"),
        }
    }

    #[test]
    fn rn_weight_examples() {
        let q = q1(1.0 / 3.0);
        let w = rn_weight(TypeId(0), [TypeId(0), TypeId(0)], &q).unwrap();
        assert!(close(w.weight(), 1.0 / 3.0, 1e-14));
        let w = rn_weight(TypeId(0), [], &q).unwrap();
        assert!(close(w.weight(), 3.0, 1e-14));
        let mean = 0.25 * rn_weight(TypeId(0), [], &q).unwrap().weight()
            + 0.75 * rn_weight(TypeId(0), [TypeId(0); 2], &q).unwrap().weight();
        assert!(close(mean, 1.0, 1e-14));
        let q = QVector::new(vec![0.5, 0.0]).unwrap();
        let w = rn_weight(TypeId(0), [TypeId(1)], &q).unwrap();
        assert_eq!(w.weight(), 0.0);
        assert_eq!(w.log_weight, f64::NEG_INFINITY);
    }

    #[test]
    fn acceptance_rate_matches_q() {
        let sampler = RejectionSampler::new(catalog::bgw_quarter(), q1(1.0 / 3.0)).unwrap();
        let mut rng = replicate_stream(7, 0);
        let rate = acceptance_rate(&sampler, TypeId(0), 20_000, &mut rng).unwrap();
        assert!(
            (rate.rate - 1.0 / 3.0).abs() < 4.0 * rate.std_error,
            "{rate:?}"
        );
    }

    #[test]
    fn sure_extinction_accepts_everything() {
        let base = catalog::bgw_subcritical_mirror();
        let sampler = RejectionSampler::new(base.clone(), q1(1.0)).unwrap();
        let mut a = replicate_stream(3, 0);
        let mut b = replicate_stream(3, 0);
        for _ in 0..1_000 {
            let (career, attempts) = sampler.sample_counted(TypeId(0), &mut a).unwrap();
            assert_eq!(attempts, 1);
            assert_eq!(career, base.sample_career(TypeId(0), &mut b).unwrap());
        }
    }

    #[test]
    fn rejection_stalls_on_immortal_children() {
        let base = Model::bgw(vec![JointPmf::single(&[(2, 1.0)])]).unwrap();
        let mut rng = replicate_stream(1, 0);
        let q = QVector::new(vec![0.0]).unwrap();
        let sampler = TiltedModel::by_rejection(base, q).unwrap();
        assert!(matches!(
            sampler.sample_career(TypeId(0), &mut rng),
            Err(SampleError::ConditioningUndefined { .. })
        ));
    }

    #[test]
    fn general_model_tilts_by_rejection() {
        let base = catalog::two_type_general();
        let q = solve_q(&base, SolveOptions::default()).unwrap().q;
        let tilted = TiltedModel::new(base, q).unwrap();
        assert!(tilted.analytic().is_none());
        let doc = tilted.document(vec![]).unwrap();
        assert_eq!(doc.kernel, "rejection");
        assert!(doc.tilted_model.is_none());
    }

    #[test]
    fn analytic_mean_matrix_matches_gradient_route() {
        for base in catalog::all() {
            let q = solve_q(&base, SolveOptions::default()).unwrap().q;
            let tilted = TiltedModel::new(base.clone(), q.clone()).unwrap();
            let Some(analytic) = tilted.analytic() else {
                continue;
            };
            let direct = analytic.mean_matrix().unwrap();
            let gradient = tilted_mean_matrix(&base, &q).unwrap();
            for s in 0..base.types() {
                for j in 0..base.types() {
                    assert!(
                        close(direct.get(s, j), gradient.get(s, j), 1e-10),
                        "{} [{s}][{j}]",
                        base.variant_name()
                    );
                }
            }
        }
    }

    #[test]
    fn document_round_trip() {
        let tilted =
            TiltedModel::new(catalog::flip(), QVector::new(vec![1.0 / 3.0; 2]).unwrap()).unwrap();
        let doc = tilted.document(vec![]).unwrap();
        let json = serde_json::to_string(&doc).unwrap();
        let back: TiltedDocument = serde_json::from_str(&json).unwrap();
        assert_eq!(back, doc);
        let model = Model::new(back.tilted_model.unwrap()).unwrap();
        assert!(close(model.mean_matrix().unwrap().get(0, 1), 0.5, 1e-12));
    }

    fn supercritical_pmf() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, 3..8).prop_filter_map("supercritical", |w| {
            let total: f64 = w.iter().sum();
            let p: Vec<f64> = w.iter().map(|x| x / total).collect();
            let mean: f64 = p.iter().enumerate().map(|(k, x)| k as f64 * x).sum();
            (mean > 1.05).then_some(p)
        })
    }

    proptest! {
        #[test]
        fn tilted_pmf_normalised_with_mean_f_prime(p in supercritical_pmf()) {
            let pairs: Vec<(u32, f64)> = p.iter().enumerate().map(|(k, &x)| (k as u32, x)).collect();
            let base = Model::bgw(vec![JointPmf::single(&pairs)]).unwrap();
            // The identity holds at the exact fixed point; the solver's error
            // is amplified by 1/q, so solve well below the checked tolerance.
            let opts = SolveOptions { tol: 1e-15, ..SolveOptions::default() };
            let q = solve_q(&base, opts).unwrap().q;
            let tilted = tilt_offspring_pmf(base.offspring_pmf(TypeId(0)).unwrap(), &q, TypeId(0)).unwrap();
            prop_assert!((tilted.total() - 1.0).abs() <= 1e-12);
            let f_prime = base.offspring_pgf_gradient(TypeId(0), q.as_slice()).unwrap()[0];
            prop_assert!((tilted.mean()[0] - f_prime).abs() <= 1e-12);
            prop_assert!(f_prime < 1.0);
        }

        #[test]
        fn rn_weight_is_product(qs in 0.01f64..1.0, k in 0usize..20) {
            let q = q1(qs);
            let w = rn_weight(TypeId(0), vec![TypeId(0); k], &q).unwrap();
            prop_assert!((w.weight() - qs.powi(k as i32 - 1)).abs() <= 1e-12 * qs.powi(k as i32 - 1).max(1.0));
        }
    }
}
