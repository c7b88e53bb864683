//! Event-driven simulation of a population in real time.
//!
//! Individuals are processed in order of birth time, ties broken by label.
//! Processing an individual draws her career and schedules her children at
//! `t_x = t_mother + age`. A run ends when nobody is left to process
//! (extinction), when the cap on processed individuals would be exceeded, or
//! when a child would be born at or after the horizon.
//!
//! A run may also be stopped at a line: members of the generation-`n` line, or
//! of the coming generation after time `t`, are recorded but not expanded.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernels::{CareerSampler, SampleError, TypeId};
use crate::pedigree::Label;
use crate::stream::{replicate_stream, Stream};

pub const DEFAULT_CAP: u64 = 10_000;
pub const DEFAULT_SNAPSHOT_DEPTH: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("generation {requested} lies beyond the snapshot depth {depth}")]
    SnapshotDepthExceeded { requested: usize, depth: usize },
    #[error("the coming generation after t = {t} is not contained in the snapshot")]
    SnapshotUnavailable { t: f64 },
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
}

/// A line at which a run stops expanding individuals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "snake_case")]
pub enum StopLine {
    /// All individuals of generation `n`.
    Generation(usize),
    /// Individuals born after `t` to mothers born at or before `t`.
    ComingGeneration(f64),
}

impl StopLine {
    fn contains(&self, label: &Label, birth_time: f64) -> bool {
        match *self {
            StopLine::Generation(n) => label.generation() == n,
            StopLine::ComingGeneration(t) => birth_time > t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Largest number of individuals a run may process.
    pub cap: u64,
    /// Individuals born at or after the horizon are not realised. `None` is
    /// an unbounded horizon.
    pub horizon: Option<f64>,
    /// Generations up to this depth are kept in the outcome's snapshot.
    pub snapshot_depth: usize,
    pub stop_line: Option<StopLine>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            cap: DEFAULT_CAP,
            horizon: None,
            snapshot_depth: DEFAULT_SNAPSHOT_DEPTH,
            stop_line: None,
        }
    }
}

impl SimConfig {
    pub fn with_cap(cap: u64) -> Self {
        SimConfig {
            cap,
            ..SimConfig::default()
        }
    }

    fn check(&self) -> Result<(), SimError> {
        if self.cap == 0 {
            return Err(SimError::InvalidConfig("cap must be at least 1".into()));
        }
        if let Some(h) = self.horizon {
            if h.is_nan() || h <= 0.0 {
                return Err(SimError::InvalidConfig(format!(
                    "horizon {h} is not positive"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Extinct,
    Cap,
    Horizon,
    /// Everyone left was a member of the stop line.
    Line,
}

/// A realised individual kept in the snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub label: Label,
    #[serde(rename = "type")]
    pub type_id: TypeId,
    pub birth_time: f64,
    /// `None` for the ancestor.
    pub mother_birth_time: Option<f64>,
    /// Realised children; `None` if the individual was not expanded.
    pub children: Option<u32>,
}

/// A member of a line: label, type, birth time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMember {
    pub label: Label,
    #[serde(rename = "type")]
    pub type_id: TypeId,
    pub birth_time: f64,
}

impl From<&Individual> for LineMember {
    fn from(x: &Individual) -> Self {
        LineMember {
            label: x.label.clone(),
            type_id: x.type_id,
            birth_time: x.birth_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LineSnapshots {
    pub depth: usize,
    /// Processed individuals of generation at most `depth`, in processing order.
    pub individuals: Vec<Individual>,
    /// Realised members of the stop line, when one was set.
    pub stop_line: Option<(StopLine, Vec<LineMember>)>,
}

/// The progeny of one first-generation child.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubtreeSummary {
    pub child_type: TypeId,
    pub birth_time: f64,
    /// Processed individuals in the subtree, the child included.
    pub total_progeny: u64,
    /// `false` if the subtree still had unprocessed or unrealised members.
    pub complete: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationOutcome {
    pub root_type: TypeId,
    pub extinct: bool,
    /// Stopped by the cap or the horizon.
    pub censored: bool,
    pub termination: Termination,
    pub total_progeny: u64,
    pub extinction_time: Option<f64>,
    /// `generation_counts[n][s]`: processed type-`s` individuals of generation `n`.
    pub generation_counts: Vec<Vec<u64>>,
    pub root_life_span: Option<f64>,
    pub first_generation: Vec<SubtreeSummary>,
    pub line_snapshots: LineSnapshots,
}

impl PopulationOutcome {
    /// `X_n` summed over types; zero beyond the last populated generation.
    pub fn generation_size(&self, n: usize) -> u64 {
        self.generation_counts.get(n).map_or(0, |c| c.iter().sum())
    }

    /// Realised generation-`n` individuals.
    pub fn generation_line(&self, n: usize) -> Result<Vec<LineMember>, SimError> {
        generation_line(self, n)
    }

    pub fn coming_generation_line(&self, t: f64) -> Result<Vec<LineMember>, SimError> {
        coming_generation_line(self, t)
    }

    /// The realised part of the stop line (empty if the run died before it).
    pub fn stop_line_members(&self) -> Option<&[LineMember]> {
        self.line_snapshots
            .stop_line
            .as_ref()
            .map(|(_, members)| members.as_slice())
    }
}

pub fn generation_line(outcome: &PopulationOutcome, n: usize) -> Result<Vec<LineMember>, SimError> {
    let snap = &outcome.line_snapshots;
    if let Some((StopLine::Generation(g), members)) = &snap.stop_line {
        if *g == n {
            return Ok(members.clone());
        }
    }
    if outcome.extinct && n >= outcome.generation_counts.len() {
        return Ok(Vec::new());
    }
    if n > snap.depth {
        return Err(SimError::SnapshotDepthExceeded {
            requested: n,
            depth: snap.depth,
        });
    }
    Ok(snap
        .individuals
        .iter()
        .filter(|x| x.label.generation() == n)
        .map(LineMember::from)
        .collect())
}

/// Realised `x` with `t_mother <= t < t_x`; the ancestor counts as born to a
/// mother at time minus infinity.
pub fn coming_generation_line(
    outcome: &PopulationOutcome,
    t: f64,
) -> Result<Vec<LineMember>, SimError> {
    let snap = &outcome.line_snapshots;
    if let Some((StopLine::ComingGeneration(s), members)) = &snap.stop_line {
        if *s == t {
            return Ok(members.clone());
        }
    }
    if outcome.extinct && outcome.extinction_time.is_some_and(|e| t >= e) {
        return Ok(Vec::new());
    }
    // A member could hide below the snapshot if some deepest individual born
    // by t had (or may have had) children.
    let hidden = snap
        .individuals
        .iter()
        .any(|x| x.label.generation() == snap.depth && x.birth_time <= t && x.children != Some(0));
    if hidden {
        return Err(SimError::SnapshotUnavailable { t });
    }
    Ok(snap
        .individuals
        .iter()
        .filter(|x| x.birth_time > t && x.mother_birth_time.is_none_or(|m| m <= t))
        .map(LineMember::from)
        .collect())
}

struct Pending {
    birth_time: f64,
    label: Label,
    type_id: TypeId,
    mother_birth_time: Option<f64>,
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    fn cmp(&self, other: &Self) -> Ordering {
        self.birth_time
            .total_cmp(&other.birth_time)
            .then_with(|| self.label.cmp(&other.label))
    }
}

#[derive(Default, Clone)]
struct SubtreeTally {
    processed: u64,
    /// Scheduled, unexpanded or unrealised members.
    open: u64,
}

/// Simulates one population from a type-`root` ancestor born at time 0.
pub fn simulate<S: CareerSampler + ?Sized>(
    sampler: &S,
    root: TypeId,
    config: &SimConfig,
    rng: &mut Stream,
) -> Result<PopulationOutcome, SimError> {
    config.check()?;
    let types = sampler.types();
    if root.0 >= types {
        return Err(SampleError::UnknownType {
            type_id: root,
            types,
        }
        .into());
    }
    let horizon = config.horizon.unwrap_or(f64::INFINITY);

    let mut queue = BinaryHeap::new();
    queue.push(Reverse(Pending {
        birth_time: 0.0,
        label: Label::root(),
        type_id: root,
        mother_birth_time: None,
    }));

    let mut total: u64 = 0;
    let mut generation_counts: Vec<Vec<u64>> = Vec::new();
    let mut end_time: f64 = 0.0;
    let mut horizon_hit = false;
    let mut cap_hit = false;
    let mut root_life_span = None;
    let mut first_generation: Vec<SubtreeSummary> = Vec::new();
    let mut tallies: Vec<SubtreeTally> = Vec::new();
    let mut individuals = Vec::new();
    let mut line_members = config.stop_line.map(|_| Vec::new());

    while let Some(Reverse(x)) = queue.pop() {
        if total == config.cap {
            cap_hit = true;
            break;
        }
        total += 1;
        let generation = x.label.generation();
        if generation_counts.len() <= generation {
            generation_counts.resize(generation + 1, vec![0; types]);
        }
        generation_counts[generation][x.type_id.0] += 1;
        let lineage = x.label.lineage() as usize;
        if lineage > 0 {
            tallies[lineage - 1].processed += 1;
        }

        let on_line = config
            .stop_line
            .is_some_and(|line| line.contains(&x.label, x.birth_time));
        if on_line {
            if let Some(members) = line_members.as_mut() {
                members.push(LineMember {
                    label: x.label.clone(),
                    type_id: x.type_id,
                    birth_time: x.birth_time,
                });
            }
            if generation <= config.snapshot_depth {
                individuals.push(Individual {
                    label: x.label,
                    type_id: x.type_id,
                    birth_time: x.birth_time,
                    mother_birth_time: x.mother_birth_time,
                    children: None,
                });
            }
            continue;
        }

        let career = sampler.sample_career(x.type_id, rng)?;
        if x.label.is_root() {
            root_life_span = career.life_span;
        }
        end_time = end_time.max(x.birth_time + career.end_age());

        let mut realised = 0u32;
        for (k, birth) in career.births.iter().enumerate() {
            let t = x.birth_time + birth.age;
            if t >= horizon {
                horizon_hit = true;
                if lineage > 0 {
                    tallies[lineage - 1].open += 1;
                }
                continue;
            }
            realised += 1;
            let child = x.label.child(k as u32 + 1);
            if x.label.is_root() {
                first_generation.push(SubtreeSummary {
                    child_type: birth.child_type,
                    birth_time: t,
                    total_progeny: 0,
                    complete: false,
                });
                tallies.push(SubtreeTally::default());
            }
            let child_lineage = child.lineage() as usize;
            tallies[child_lineage - 1].open += 1;
            queue.push(Reverse(Pending {
                birth_time: t,
                label: child,
                type_id: birth.child_type,
                mother_birth_time: Some(x.birth_time),
            }));
        }
        if lineage > 0 {
            tallies[lineage - 1].open -= 1;
        }
        if generation <= config.snapshot_depth {
            individuals.push(Individual {
                label: x.label,
                type_id: x.type_id,
                birth_time: x.birth_time,
                mother_birth_time: x.mother_birth_time,
                children: Some(realised),
            });
        }
    }

    for (summary, tally) in first_generation.iter_mut().zip(&tallies) {
        summary.total_progeny = tally.processed;
        summary.complete = tally.open == 0;
    }

    let reached_line = line_members.as_ref().is_some_and(|m| !m.is_empty());
    let termination = if cap_hit {
        Termination::Cap
    } else if horizon_hit {
        Termination::Horizon
    } else if reached_line {
        Termination::Line
    } else {
        Termination::Extinct
    };
    let extinct = termination == Termination::Extinct;

    Ok(PopulationOutcome {
        root_type: root,
        extinct,
        censored: matches!(termination, Termination::Cap | Termination::Horizon),
        termination,
        total_progeny: total,
        extinction_time: extinct.then_some(end_time),
        generation_counts,
        root_life_span,
        first_generation,
        line_snapshots: LineSnapshots {
            depth: config.snapshot_depth,
            individuals,
            stop_line: config.stop_line.zip(line_members),
        },
    })
}

/// One population drawn from replicate stream 0 of `seed`.
pub fn run_population<S: CareerSampler + ?Sized>(
    sampler: &S,
    root: TypeId,
    config: &SimConfig,
    seed: u64,
) -> Result<PopulationOutcome, SimError> {
    simulate(sampler, root, config, &mut replicate_stream(seed, 0))
}

/// `n` populations; replicate `r` draws from `replicate_stream(seed, r)`.
///
/// Outcomes are returned in replicate order whatever the thread count.
pub fn run_replicates<S: CareerSampler + ?Sized>(
    sampler: &S,
    root: TypeId,
    n: u64,
    config: &SimConfig,
    seed: u64,
) -> Result<Vec<PopulationOutcome>, SimError> {
    map_replicates(sampler, root, n, config, seed, |_, outcome| outcome)
}

/// Like [`run_replicates`], reducing each outcome to a summary as soon as it
/// is produced.
pub fn map_replicates<S, T, F>(
    sampler: &S,
    root: TypeId,
    n: u64,
    config: &SimConfig,
    seed: u64,
    f: F,
) -> Result<Vec<T>, SimError>
where
    S: CareerSampler + ?Sized,
    T: Send,
    F: Fn(u64, PopulationOutcome) -> T + Sync,
{
    (0..n)
        .into_par_iter()
        .map(|r| {
            let mut rng = replicate_stream(seed, r);
            simulate(sampler, root, config, &mut rng).map(|outcome| f(r, outcome))
        })
        .collect()
}

/// Per-generation means and extinction fractions over a batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub runs: u64,
    pub extinct_fraction: f64,
    pub censored_fraction: f64,
    /// `mean_counts[n][s]`, averaging absent generations as zero.
    pub mean_counts: Vec<Vec<f64>>,
}

impl BatchSummary {
    pub fn from_outcomes(outcomes: &[PopulationOutcome], types: usize) -> Self {
        let runs = outcomes.len() as u64;
        let depth = outcomes
            .iter()
            .map(|o| o.generation_counts.len())
            .max()
            .unwrap_or(0);
        let mut sums = vec![vec![0u64; types]; depth];
        for o in outcomes {
            for (row, counts) in sums.iter_mut().zip(&o.generation_counts) {
                for (a, b) in row.iter_mut().zip(counts) {
                    *a += b;
                }
            }
        }
        let n = runs.max(1) as f64;
        BatchSummary {
            runs,
            extinct_fraction: outcomes.iter().filter(|o| o.extinct).count() as f64 / n,
            censored_fraction: outcomes.iter().filter(|o| o.censored).count() as f64 / n,
            mean_counts: sums
                .into_iter()
                .map(|row| row.into_iter().map(|x| x as f64 / n).collect())
                .collect(),
        }
    }

    /// Long-format CSV: `metric,generation,type,value`. `meta` pairs are
    /// written first as `name,,,value` rows.
    pub fn write_csv<W: std::io::Write>(
        &self,
        writer: W,
        meta: &[(&str, String)],
    ) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["metric", "generation", "type", "value"])?;
        for (name, value) in meta {
            w.write_record([name, "", "", value.as_str()])?;
        }
        w.write_record(["runs", "", "", &self.runs.to_string()])?;
        w.write_record([
            "extinct_fraction",
            "",
            "",
            &self.extinct_fraction.to_string(),
        ])?;
        w.write_record([
            "censored_fraction",
            "",
            "",
            &self.censored_fraction.to_string(),
        ])?;
        for (n, row) in self.mean_counts.iter().enumerate() {
            for (s, v) in row.iter().enumerate() {
                w.write_record(["mean_count", &n.to_string(), &s.to_string(), &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
