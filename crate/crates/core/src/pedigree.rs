//! Ulam–Harris labels and stopping lines.
//!
//! An individual is identified by the path of sibling ranks leading to her
//! from the ancestor: `(1, 3)` is the third child of the first child of the
//! ancestor, and the empty path is the ancestor herself. Lines are antichains
//! under the "stems from" partial order. Covering is only decidable relative
//! to a finite realised tree, so [`is_covering_on`] takes one explicitly.

use std::cmp::Ordering;
use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PedigreeError {
    #[error("label entry at position {position} is zero; ranks start at 1")]
    ZeroRank { position: usize },
    #[error("realised set is not prefix-closed: {missing} is missing (needed by {by})")]
    NotPrefixClosed { missing: Label, by: Label },
}

/// An individual in the Ulam–Harris family space.
///
/// Ordering is shortlex: generation first, then entries lexicographically.
#[derive(Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct Label(Vec<u32>);

impl Label {
    /// The ancestor `e`.
    pub fn root() -> Self {
        Label(Vec::new())
    }

    pub fn new(path: Vec<u32>) -> Result<Self, PedigreeError> {
        if let Some(position) = path.iter().position(|&k| k == 0) {
            return Err(PedigreeError::ZeroRank { position });
        }
        Ok(Label(path))
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    /// The `rank`-th child of this individual.
    ///
    /// # Panics
    ///
    /// If `rank` is zero.
    pub fn child(&self, rank: u32) -> Self {
        assert!(rank >= 1, "sibling ranks start at 1");
        let mut path = Vec::with_capacity(self.0.len() + 1);
        path.extend_from_slice(&self.0);
        path.push(rank);
        Label(path)
    }

    /// Concatenation `xy`: `other`'s path appended below `self`.
    pub fn concat(&self, other: &Label) -> Self {
        let mut path = self.0.clone();
        path.extend_from_slice(&other.0);
        Label(path)
    }

    /// Drops the last entry. The ancestor is her own mother.
    pub fn mother(&self) -> Self {
        match self.0.split_last() {
            Some((_, init)) => Label(init.to_vec()),
            None => Label::root(),
        }
    }

    /// Rank in the sibship; `0` for the ancestor, who has none.
    pub fn rank(&self) -> u32 {
        self.0.last().copied().unwrap_or(0)
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    /// Rank of the first-generation ancestor (`0` for the root).
    pub fn lineage(&self) -> u32 {
        self.0.first().copied().unwrap_or(0)
    }

    /// `true` iff `ancestor` is a prefix of `self` (reflexive).
    pub fn stems_from(&self, ancestor: &Label) -> bool {
        self.0.starts_with(&ancestor.0)
    }

    pub fn in_direct_line(&self, other: &Label) -> bool {
        self.stems_from(other) || other.stems_from(self)
    }

    /// All ancestors including `self`, from the root downwards.
    pub fn prefixes(&self) -> impl Iterator<Item = Label> + '_ {
        (0..=self.0.len()).map(move |n| Label(self.0[..n].to_vec()))
    }
}

impl Ord for Label {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .len()
            .cmp(&other.0.len())
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl TryFrom<Vec<u32>> for Label {
    type Error = PedigreeError;

    fn try_from(path: Vec<u32>) -> Result<Self, Self::Error> {
        Label::new(path)
    }
}

impl From<Label> for Vec<u32> {
    fn from(label: Label) -> Self {
        label.0
    }
}

impl fmt::Debug for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("e");
        }
        f.write_str("(")?;
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}")?;
        }
        f.write_str(")")
    }
}

/// A finite antichain of labels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Line(BTreeSet<Label>);

impl Line {
    /// Builds a line, returning `None` if two members are in direct line.
    pub fn new(members: impl IntoIterator<Item = Label>) -> Option<Self> {
        let members: BTreeSet<Label> = members.into_iter().collect();
        is_line(&members).then_some(Line(members))
    }

    pub fn members(&self) -> &BTreeSet<Label> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `true` iff no two distinct members are in direct line of descent.
pub fn is_line<'a>(members: impl IntoIterator<Item = &'a Label>) -> bool {
    // In plain lexicographic path order every descendant of y directly
    // follows y or another descendant of y, so adjacent pairs suffice.
    let mut paths: Vec<&[u32]> = members.into_iter().map(|l| l.path()).collect();
    paths.sort_unstable();
    paths.dedup();
    paths.windows(2).all(|w| !w[1].starts_with(w[0]))
}

/// `true` iff every realised label is in direct line with some member.
///
/// `realised` must be prefix-closed (contain the root and every mother).
pub fn is_covering_on<'a, 'b>(
    members: impl IntoIterator<Item = &'a Label>,
    realised: impl IntoIterator<Item = &'b Label>,
) -> Result<bool, PedigreeError> {
    let realised: HashSet<&Label> = realised.into_iter().collect();
    if !realised.contains(&Label::root()) {
        return Err(PedigreeError::NotPrefixClosed {
            missing: Label::root(),
            by: realised
                .iter()
                .next()
                .map_or_else(Label::root, |l| (*l).clone()),
        });
    }
    for x in &realised {
        if !x.is_root() {
            let m = x.mother();
            if !realised.contains(&m) {
                return Err(PedigreeError::NotPrefixClosed {
                    missing: m,
                    by: (*x).clone(),
                });
            }
        }
    }

    let members: HashSet<&Label> = members.into_iter().collect();
    // Every ancestor-or-self of a member: x lies above some member iff x is here.
    let above: HashSet<Label> = members.iter().flat_map(|y| y.prefixes()).collect();

    Ok(realised
        .iter()
        .all(|x| above.contains(*x) || x.prefixes().any(|p| members.contains(&p))))
}

/// The labels in `universe` that stem from some member of `ancestors`.
pub fn progeny_of<'a>(
    ancestors: &BTreeSet<Label>,
    universe: impl IntoIterator<Item = &'a Label>,
) -> BTreeSet<Label> {
    universe
        .into_iter()
        .filter(|x| x.prefixes().any(|p| ancestors.contains(&p)))
        .cloned()
        .collect()
}
