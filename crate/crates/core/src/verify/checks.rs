//! Individual checks. Each takes explicit run counts and a seed.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectral::{
    malthusian_alpha, malthusian_alpha_multitype, spectral_radius, DEFAULT_SPECTRAL_TOL,
};
use super::stats::{chi_square_gof, chi_square_two_sample, tv_distance, Histogram, Moments};
use super::{verdict, TestReport, Verdict, VerifyError, SE_THRESHOLD};
use crate::extinction::{estimate_q_mc, QSolution, QVector};
use crate::kernels::{
    CareerSampler, KernelError, LifeCareer, MeanReproMeasure, Model, SplittingLaw, TypeId,
};
use crate::simulate::{
    map_replicates, simulate, LineMember, PopulationOutcome, SimConfig, StopLine,
};
use crate::stream::{derive_seed, replicate_stream};
use crate::tilt::{acceptance_rate, rn_weight, tilted_mean_matrix, RejectionSampler, TiltedModel};

/// Tolerance of the closed-form identities.
pub const EXACT_TOL: f64 = 1e-12;

/// Fewer extinct base runs than this make a conditioned-law comparison
/// inconclusive.
pub const MIN_EXTINCT_RUNS: u64 = 1_000;

/// Largest tolerated censored fraction among runs that should all die out.
pub const MAX_CENSORED: f64 = 1e-3;

/// Deepest generation whose conditioned mean is checked.
pub const DECAY_GENERATIONS: usize = 5;

/// Individual cap for runs stopped at a line; lines are shallow, so it is
/// only a guard.
const LINE_CAP: u64 = 1_000_000;

fn z_report(name: &str, a: Moments, b: Moments) -> TestReport {
    let se = (a.std_error().powi(2) + b.std_error().powi(2)).sqrt();
    let diff = a.mean - b.mean;
    let sizes = vec![a.n, b.n];
    let criterion = "|z| <= threshold";
    if se == 0.0 {
        return TestReport {
            statistic: diff.abs(),
            note: Some(format!(
                "zero variance; means {} and {} compared exactly",
                a.mean, b.mean
            )),
            ..TestReport::new(name, verdict(diff == 0.0), SE_THRESHOLD, criterion, sizes)
        };
    }
    let z = diff / se;
    TestReport {
        statistic: z.abs(),
        note: Some(format!("means {} and {}, combined SE {se}", a.mean, b.mean)),
        ..TestReport::new(
            name,
            verdict(z.abs() <= SE_THRESHOLD),
            SE_THRESHOLD,
            criterion,
            sizes,
        )
    }
}

fn root_q(q: &QVector, root: TypeId) -> f64 {
    q.get(root)
}

fn undefined_root(name: &str, root: TypeId) -> TestReport {
    TestReport::inapplicable(
        name,
        format!("{root} cannot die out, so conditioning on extinction is undefined"),
    )
}

/// Whether the solver's output is a converged, monotonely reached fixed point.
pub fn q_fixed_point_check(name: &str, solution: &QSolution, tol: f64) -> TestReport {
    let ok = solution.residual < tol && solution.monotone;
    TestReport {
        statistic: solution.residual,
        note: Some(format!(
            "q = {:?} after {} iterations, monotone: {}",
            solution.q.as_slice(),
            solution.iterations,
            solution.monotone
        )),
        ..TestReport::new(name, verdict(ok), tol, "residual < threshold", vec![])
    }
}

/// Monte Carlo extinction frequency against `q_root`, within 4 binomial
/// standard errors; for a sure-extinction model, censoring must also stay
/// below 1%.
pub fn q_agreement_check(
    name: &str,
    model: &Model,
    q: &QVector,
    root: TypeId,
    runs: u64,
    cap: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    let est = estimate_q_mc(model, root, runs, cap, None, seed)?;
    let qs = root_q(q, root);
    let se = (qs * (1.0 - qs) / runs as f64).sqrt();
    let diff = est.estimate - qs;
    let (statistic, mut ok) = if se > 0.0 {
        ((diff / se).abs(), (diff / se).abs() <= SE_THRESHOLD)
    } else {
        (diff.abs(), diff == 0.0)
    };
    if qs == 1.0 {
        ok &= est.censored < 0.01;
    }
    Ok(TestReport {
        statistic,
        note: Some(format!(
            "estimate {} (95% CI [{}, {}], contains q: {}), q = {qs}, censored {}",
            est.estimate,
            est.ci_low,
            est.ci_high,
            est.contains(qs),
            est.censored
        )),
        ..TestReport::new(
            name,
            verdict(ok),
            SE_THRESHOLD,
            "|z| <= threshold",
            vec![runs],
        )
    })
}

/// Tilted pmfs sum to one, and the conditioned mean offspring equals the
/// gradient of the generating function at `q`.
pub fn tilt_normalisation_check(
    name: &str,
    tilted: &TiltedModel,
) -> Result<TestReport, VerifyError> {
    let Some(analytic) = tilted.analytic() else {
        return Ok(TestReport::inapplicable(
            name,
            "no closed-form conditioned kernel; sampled by rejection",
        ));
    };
    let q = tilted.q();
    let mut worst: f64 = 0.0;
    if let Some(law) = analytic.splitting_law() {
        match law {
            SplittingLaw::Discrete(atoms) => {
                worst = worst.max((atoms.iter().map(|a| a.prob).sum::<f64>() - 1.0).abs());
                for a in atoms {
                    worst = worst.max((a.split.iter().sum::<f64>() - 1.0).abs());
                }
            }
            SplittingLaw::Exponential { split, .. } => {
                worst = worst.max((split.iter().sum::<f64>() - 1.0).abs());
            }
        }
    } else {
        for s in 0..analytic.types() {
            if q.get(TypeId(s)) > 0.0 {
                let pmf = analytic.offspring_pmf(TypeId(s)).expect("bgw");
                worst = worst.max((pmf.total() - 1.0).abs());
            }
        }
    }
    let normalisation = worst;
    // Conditioned mean offspring two ways: from the tilted kernel, and as
    // q_j d_j f_s(q) / q_s from the base kernel.
    let direct = analytic.mean_matrix()?;
    let gradient = tilted_mean_matrix(tilted.base(), q)?;
    let mut mean_gap: f64 = 0.0;
    for s in (0..direct.dim()).filter(|&s| q.get(TypeId(s)) > 0.0) {
        for j in 0..direct.dim() {
            mean_gap = mean_gap.max((direct.get(s, j) - gradient.get(s, j)).abs());
        }
    }
    let statistic = normalisation.max(mean_gap);
    Ok(TestReport {
        statistic,
        note: Some(format!(
            "largest normalisation error {normalisation}, largest mean-matrix gap {mean_gap}"
        )),
        ..TestReport::new(
            name,
            verdict(statistic <= EXACT_TOL),
            EXACT_TOL,
            "statistic <= threshold",
            vec![],
        )
    })
}

/// Key of a single career for comparing career laws.
fn career_key(model: &Model, career: &LifeCareer) -> Vec<i64> {
    let counts = career.counts_by_type(model.types());
    match model.splitting_law() {
        Some(SplittingLaw::Discrete(atoms)) => {
            let age = career
                .life_span
                .expect("splitting careers have a life span");
            let i = atoms
                .iter()
                .position(|a| a.age == age)
                .expect("age is an atom");
            vec![counts[0] as i64, i as i64]
        }
        _ => counts.into_iter().map(i64::from).collect(),
    }
}

/// Exact law of [`career_key`] under a BGW or splitting model.
fn career_key_pmf(model: &Model, s: TypeId) -> BTreeMap<Vec<i64>, f64> {
    let mut pmf = BTreeMap::new();
    match model.splitting_law() {
        Some(SplittingLaw::Discrete(atoms)) => {
            for (i, a) in atoms.iter().enumerate() {
                for (k, p) in a.split.iter().enumerate() {
                    *pmf.entry(vec![k as i64, i as i64]).or_insert(0.0) += a.prob * p;
                }
            }
        }
        Some(SplittingLaw::Exponential { split, .. }) => {
            for (k, p) in split.iter().enumerate() {
                pmf.insert(vec![k as i64], *p);
            }
        }
        None => {
            for (counts, p) in model.offspring_pmf(s).expect("bgw").outcomes() {
                *pmf.entry(counts.iter().map(|&c| i64::from(c)).collect())
                    .or_insert(0.0) += p;
            }
        }
    }
    pmf
}

/// Careers accepted by the rejection sampler against the closed-form
/// conditioned career law.
pub fn sampler_equivalence_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    draws: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    let Some(analytic) = tilted.analytic() else {
        return Ok(TestReport::inapplicable(
            name,
            "no closed-form conditioned kernel",
        ));
    };
    if root_q(tilted.q(), root) == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let sampler = RejectionSampler::new(tilted.base().clone(), tilted.q().clone())?;
    let mut rng = replicate_stream(seed, 0);
    let mut h = Histogram::new();
    for _ in 0..draws {
        h.add(career_key(
            analytic,
            &sampler.sample_career(root, &mut rng)?,
        ));
    }
    Ok(chi_square_gof(name, &h, &career_key_pmf(analytic, root)))
}

/// Empirical acceptance rate of the rejection sampler against `q_root`.
pub fn acceptance_rate_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    accepted: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    let qs = root_q(tilted.q(), root);
    if qs == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let sampler = RejectionSampler::new(tilted.base().clone(), tilted.q().clone())?;
    let rate = acceptance_rate(&sampler, root, accepted, &mut replicate_stream(seed, 0))?;
    let se = (qs * (1.0 - qs) / rate.attempts as f64).sqrt();
    let diff = rate.rate - qs;
    let (statistic, ok) = if se > 0.0 {
        ((diff / se).abs(), (diff / se).abs() <= SE_THRESHOLD)
    } else {
        (diff.abs(), diff == 0.0)
    };
    Ok(TestReport {
        statistic,
        note: Some(format!(
            "{} of {} careers accepted (rate {}), q = {qs}",
            rate.accepted, rate.attempts, rate.rate
        )),
        ..TestReport::new(
            name,
            verdict(ok),
            SE_THRESHOLD,
            "|z| <= threshold",
            vec![rate.attempts],
        )
    })
}

/// A function of the realised members of a stopping line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "type", rename_all = "snake_case")]
pub enum LineFunctional {
    One,
    /// Number of realised members.
    Size,
    /// 1 if no member is realised.
    Empty,
    /// Number of members of the given type.
    TypeCount(TypeId),
}

impl LineFunctional {
    pub fn eval(&self, members: &[LineMember]) -> f64 {
        match self {
            LineFunctional::One => 1.0,
            LineFunctional::Size => members.len() as f64,
            LineFunctional::Empty => f64::from(u8::from(members.is_empty())),
            LineFunctional::TypeCount(t) => {
                members.iter().filter(|m| m.type_id == *t).count() as f64
            }
        }
    }
}

/// Runs stopped at `line`, mapping each run's realised line to a value.
/// Censored runs yield `None`.
fn line_values<S, F>(
    sampler: &S,
    root: TypeId,
    line: StopLine,
    runs: u64,
    seed: u64,
    f: F,
) -> Result<(Vec<f64>, u64), VerifyError>
where
    S: CareerSampler + ?Sized,
    F: Fn(&[LineMember]) -> f64 + Sync,
{
    let config = SimConfig {
        cap: LINE_CAP,
        horizon: None,
        snapshot_depth: 0,
        stop_line: Some(line),
    };
    let values = map_replicates(sampler, root, runs, &config, seed, |_, o| {
        (!o.censored).then(|| f(o.stop_line_members().unwrap_or_default()))
    })?;
    let censored = values.iter().filter(|v| v.is_none()).count() as u64;
    Ok((values.into_iter().flatten().collect(), censored))
}

fn line_weight(root: TypeId, members: &[LineMember], q: &QVector) -> f64 {
    rn_weight(root, members.iter().map(|m| m.type_id), q)
        .expect("root type can die out")
        .weight()
}

fn censored_report(name: &str, censored: u64, runs: u64) -> TestReport {
    TestReport {
        note: Some(format!("{censored} runs hit the cap before the line")),
        ..TestReport::new(
            name,
            Verdict::Inconclusive,
            SE_THRESHOLD,
            "|z| <= threshold",
            vec![runs],
        )
    }
}

/// `Ẽ[g] = E[g · dP̃/dP]` on a stopping line: conditioned simulation
/// against reweighted base simulation.
#[allow(clippy::too_many_arguments)]
pub fn importance_identity_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    line: StopLine,
    g: LineFunctional,
    runs: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    let q = tilted.q();
    if root_q(q, root) == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let (cond, c1) = line_values(tilted, root, line, runs, derive_seed(seed, "tilted"), |m| {
        g.eval(m)
    })?;
    let (weighted, c2) = line_values(
        tilted.base(),
        root,
        line,
        runs,
        derive_seed(seed, "base"),
        |m| g.eval(m) * line_weight(root, m, q),
    )?;
    if c1 + c2 > 0 {
        return Ok(censored_report(name, c1 + c2, runs));
    }
    Ok(z_report(
        name,
        Moments::from_values(&cond),
        Moments::from_values(&weighted),
    ))
}

/// Mean of the likelihood ratio over base runs stopped at `line` against 1.
pub fn rn_weight_mean_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    line: StopLine,
    runs: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    let q = tilted.q();
    if root_q(q, root) == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let (weights, censored) = line_values(tilted.base(), root, line, runs, seed, |m| {
        line_weight(root, m, q)
    })?;
    if censored > 0 {
        return Ok(censored_report(name, censored, runs));
    }
    let one = Moments {
        n: weights.len() as u64,
        mean: 1.0,
        variance: 0.0,
    };
    Ok(z_report(name, Moments::from_values(&weights), one))
}

/// Expected likelihood ratio over the first generation, by enumerating the
/// offspring pmf (BGW) or from the generating function otherwise.
pub fn rn_weight_exact_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
) -> Result<TestReport, VerifyError> {
    let q = tilted.q();
    if root_q(q, root) == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let base = tilted.base();
    let (expected, how) = match base.offspring_pmf(root) {
        Some(pmf) => {
            let mut total = 0.0;
            for (counts, p) in pmf.outcomes() {
                let types = counts
                    .iter()
                    .enumerate()
                    .flat_map(|(j, &k)| std::iter::repeat_n(TypeId(j), k as usize));
                total += p * rn_weight(root, types, q)?.weight();
            }
            (total, "enumerated offspring pmf")
        }
        None => (
            base.offspring_pgf(root, q.as_slice())? / root_q(q, root),
            "generating function at q",
        ),
    };
    let gap = (expected - 1.0).abs();
    Ok(TestReport {
        statistic: gap,
        note: Some(format!("E[weight] = {expected} ({how})")),
        ..TestReport::new(
            name,
            verdict(gap <= EXACT_TOL),
            EXACT_TOL,
            "statistic <= threshold",
            vec![],
        )
    })
}

/// What a conditioned-law comparison looks at in each run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeSummary {
    /// Total progeny, pooled from `overflow` upwards.
    TotalProgeny { overflow: u64 },
    /// Per-type child counts of the ancestor.
    RootOffspring,
    /// Ancestor's child count and life span, the latter binned.
    RootCareer { resolution: f64, max_bin: i64 },
}

impl OutcomeSummary {
    pub fn key(&self, o: &PopulationOutcome, types: usize) -> Vec<i64> {
        match *self {
            OutcomeSummary::TotalProgeny { overflow } => {
                vec![o.total_progeny.min(overflow) as i64]
            }
            OutcomeSummary::RootOffspring => {
                let mut counts = vec![0i64; types];
                for c in &o.first_generation {
                    counts[c.child_type.0] += 1;
                }
                counts
            }
            OutcomeSummary::RootCareer {
                resolution,
                max_bin,
            } => {
                let life = o.root_life_span.unwrap_or(0.0);
                let bin = ((life / resolution).floor() as i64).min(max_bin);
                vec![o.first_generation.len() as i64, bin]
            }
        }
    }
}

/// Base runs that died out against conditioned runs.
#[allow(clippy::too_many_arguments)]
pub fn rejection_equivalence_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    summary: OutcomeSummary,
    tilted_runs: u64,
    base_runs: u64,
    cap: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    if root_q(tilted.q(), root) == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let types = tilted.base().types();
    let config = SimConfig {
        cap,
        horizon: None,
        snapshot_depth: 0,
        stop_line: None,
    };
    let base: Histogram = map_replicates(
        tilted.base(),
        root,
        base_runs,
        &config,
        derive_seed(seed, "base"),
        |_, o| o.extinct.then(|| summary.key(&o, types)),
    )?
    .into_iter()
    .flatten()
    .collect();
    if base.total() < MIN_EXTINCT_RUNS {
        return Ok(TestReport {
            note: Some(format!(
                "only {} of {base_runs} base runs died out",
                base.total()
            )),
            ..TestReport::new(
                name,
                Verdict::Inconclusive,
                super::stats::P_THRESHOLD,
                "p > threshold",
                vec![tilted_runs, base.total()],
            )
        });
    }
    let conditioned: Histogram = map_replicates(
        tilted,
        root,
        tilted_runs,
        &config,
        derive_seed(seed, "tilted"),
        |_, o| summary.key(&o, types),
    )?
    .into_iter()
    .collect();
    let mut report = chi_square_two_sample(name, &conditioned, &base);
    report.distance = Some(tv_distance(&conditioned, &base));
    Ok(report)
}

/// Every conditioned run dies out; censoring must stay below 10^-3.
pub fn conditioned_extinction_check(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    runs: u64,
    cap: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    if root_q(tilted.q(), root) == 0.0 {
        return Ok(undefined_root(name, root));
    }
    let config = SimConfig {
        cap,
        horizon: None,
        snapshot_depth: 0,
        stop_line: None,
    };
    let flags = map_replicates(tilted, root, runs, &config, seed, |_, o| {
        (o.extinct, o.censored)
    })?;
    let n = runs.max(1) as f64;
    let extinct = flags.iter().filter(|f| f.0).count() as f64 / n;
    let censored = flags.iter().filter(|f| f.1).count() as f64 / n;
    // Without a horizon a run either dies out or hits the cap.
    let ok = censored < MAX_CENSORED && extinct + censored == 1.0;
    Ok(TestReport {
        statistic: censored,
        note: Some(format!(
            "extinct fraction {extinct}, censored fraction {censored}"
        )),
        ..TestReport::new(
            name,
            verdict(ok),
            MAX_CENSORED,
            "statistic < threshold",
            vec![runs],
        )
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMean {
    pub generation: usize,
    pub mean: f64,
    pub std_error: f64,
    /// `(M̃^n 1)_root`.
    pub expected: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubcriticalityReport {
    pub base_radius: f64,
    pub tilted_radius: f64,
    /// `f'(q)` for single-type models.
    pub tilted_mean: Option<f64>,
    pub generations: Vec<GenerationMean>,
    pub report: TestReport,
}

/// Conditioned mean matrix has spectral radius below 1 (and below the base
/// radius), and simulated generation sizes decay as its powers predict.
pub fn subcriticality_report(
    name: &str,
    tilted: &TiltedModel,
    root: TypeId,
    runs: u64,
    seed: u64,
) -> Result<SubcriticalityReport, VerifyError> {
    let base = tilted.base();
    let q = tilted.q();
    let base_radius = spectral_radius(&base.mean_matrix()?, DEFAULT_SPECTRAL_TOL);
    let tilted_m = tilted.mean_matrix()?;
    let tilted_radius = spectral_radius(&tilted_m, DEFAULT_SPECTRAL_TOL);
    let tilted_mean = (base.types() == 1)
        .then(|| base.offspring_pgf_gradient(TypeId(0), q.as_slice()))
        .transpose()?
        .map(|g| g[0]);
    let mut out = SubcriticalityReport {
        base_radius,
        tilted_radius,
        tilted_mean,
        generations: Vec::new(),
        report: TestReport::inapplicable(name, ""),
    };
    if !(base_radius > 1.0 && q.max() < 1.0) {
        out.report = TestReport::inapplicable(
            name,
            format!(
                "not supercritical: base radius {base_radius}, max q {}",
                q.max()
            ),
        );
        return Ok(out);
    }
    if root_q(q, root) == 0.0 {
        out.report = undefined_root(name, root);
        return Ok(out);
    }

    let config = SimConfig {
        cap: LINE_CAP,
        horizon: None,
        snapshot_depth: 0,
        stop_line: Some(StopLine::Generation(DECAY_GENERATIONS)),
    };
    let sizes = map_replicates(tilted, root, runs, &config, seed, |_, o| {
        (1..=DECAY_GENERATIONS)
            .map(|n| o.generation_size(n) as f64)
            .collect::<Vec<_>>()
    })?;
    let mut power = vec![1.0; base.types()];
    let mut worst: f64 = 0.0;
    let mut all_ok = true;
    for n in 1..=DECAY_GENERATIONS {
        power = tilted_m.apply(&power);
        let expected = power[root.0];
        let values: Vec<f64> = sizes.iter().map(|v| v[n - 1]).collect();
        let m = Moments::from_values(&values);
        let se = m.std_error();
        let z = if se > 0.0 {
            (m.mean - expected) / se
        } else if (m.mean - expected).abs() <= EXACT_TOL {
            0.0
        } else {
            f64::INFINITY
        };
        all_ok &= z.abs() <= SE_THRESHOLD;
        worst = worst.max(z.abs());
        out.generations.push(GenerationMean {
            generation: n,
            mean: m.mean,
            std_error: se,
            expected,
            z,
        });
    }
    let ok = tilted_radius < 1.0
        && tilted_radius < base_radius
        && tilted_mean.is_none_or(|m| m < 1.0)
        && all_ok;
    out.report = TestReport {
        statistic: worst,
        note: Some(format!(
            "base radius {base_radius}, tilted radius {tilted_radius}{}",
            tilted_mean.map_or(String::new(), |m| format!(", f'(q) = {m}"))
        )),
        ..TestReport::new(
            name,
            verdict(ok),
            SE_THRESHOLD,
            "radius < 1 and max |z| <= threshold",
            vec![runs],
        )
    };
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalthusReport {
    pub alpha: Option<f64>,
    pub tilted_alpha: Option<f64>,
    pub report: TestReport,
}

fn lotka_root(rows: &[MeanReproMeasure]) -> Option<f64> {
    if rows.len() == 1 {
        malthusian_alpha(&rows[0])
    } else {
        malthusian_alpha_multitype(rows)
    }
}

fn repro_rows(model: &Model) -> Result<Vec<MeanReproMeasure>, KernelError> {
    (0..model.types())
        .map(|s| model.mean_reproduction_measure(TypeId(s)))
        .collect()
}

/// Malthusian parameter positive for the base process and negative for the
/// conditioned one.
pub fn malthusian_sign_check(
    name: &str,
    tilted: &TiltedModel,
) -> Result<MalthusReport, VerifyError> {
    let inapplicable = |why: String| MalthusReport {
        alpha: None,
        tilted_alpha: None,
        report: TestReport::inapplicable(name, why),
    };
    let (base_rows, analytic) = match (repro_rows(tilted.base()), tilted.analytic()) {
        (Ok(rows), Some(analytic)) => (rows, analytic),
        (Err(KernelError::Unsupported { .. }), _) | (_, None) => {
            return Ok(inapplicable(format!(
                "no closed-form conditioned reproduction measure for {} models",
                tilted.base().variant_name()
            )))
        }
        (Err(e), _) => return Err(e.into()),
    };
    let alpha = lotka_root(&base_rows);
    if tilted.q().max() >= 1.0 {
        let mut r = inapplicable(format!("not supercritical: alpha {alpha:?}"));
        r.alpha = alpha;
        return Ok(r);
    }
    let tilted_alpha = lotka_root(&repro_rows(analytic)?);
    let ok = alpha.is_some_and(|a| a > 0.0) && tilted_alpha.is_some_and(|a| a < 0.0);
    Ok(MalthusReport {
        alpha,
        tilted_alpha,
        report: TestReport {
            statistic: tilted_alpha.unwrap_or(f64::NAN),
            note: Some(format!("alpha {alpha:?}, tilted alpha {tilted_alpha:?}")),
            ..TestReport::new(name, verdict(ok), 0.0, "base alpha > 0 > statistic", vec![])
        },
    })
}

/// The first child's subtree against a fresh population from the same type.
///
/// Subtree sizes are pooled from `overflow` upwards; a subtree cut off by the
/// cap also lands in the overflow bin, so `cap` should be far above it.
pub fn branching_property_check<S: CareerSampler + ?Sized>(
    name: &str,
    sampler: &S,
    root: TypeId,
    runs: u64,
    cap: u64,
    overflow: u64,
    seed: u64,
) -> Result<TestReport, VerifyError> {
    let config = SimConfig {
        cap,
        horizon: None,
        snapshot_depth: 0,
        stop_line: None,
    };
    let firsts = map_replicates(
        sampler,
        root,
        runs,
        &config,
        derive_seed(seed, "subtree"),
        |_, o| {
            o.first_generation.first().map(|c| {
                let size = if c.complete {
                    c.total_progeny.min(overflow)
                } else {
                    overflow
                };
                (c.child_type, size)
            })
        },
    )?;
    let subtrees: Histogram = firsts
        .iter()
        .flatten()
        .map(|&(t, size)| vec![t.0 as i64, size as i64])
        .collect();
    let fresh_seed = derive_seed(seed, "fresh");
    let fresh = firsts
        .par_iter()
        .enumerate()
        .filter_map(|(r, first)| first.map(|(t, _)| (r, t)))
        .map(|(r, t)| {
            let mut rng = replicate_stream(fresh_seed, r as u64);
            simulate(sampler, t, &config, &mut rng).map(|o| {
                let size = if o.extinct {
                    o.total_progeny.min(overflow)
                } else {
                    overflow
                };
                vec![t.0 as i64, size as i64]
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fresh: Histogram = fresh.into_iter().collect();
    let mut report = chi_square_two_sample(name, &subtrees, &fresh);
    report.distance = Some(tv_distance(&subtrees, &fresh));
    Ok(report)
}
