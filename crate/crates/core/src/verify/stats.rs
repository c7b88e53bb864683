//! Histograms and the distribution tests built on them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{TestReport, Verdict};

/// Significance level below which two samples are declared different.
pub const P_THRESHOLD: f64 = 0.001;

/// Smallest expected count a chi-square bin may have after merging.
pub const MIN_EXPECTED: f64 = 5.0;

/// Counts over integer-tuple outcome keys.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<(Vec<i64>, u64)>", into = "Vec<(Vec<i64>, u64)>")]
pub struct Histogram {
    counts: BTreeMap<Vec<i64>, u64>,
    total: u64,
}

impl Histogram {
    pub fn new() -> Self {
        Histogram::default()
    }

    pub fn add(&mut self, key: Vec<i64>) {
        self.add_n(key, 1);
    }

    pub fn add_n(&mut self, key: Vec<i64>, n: u64) {
        if n > 0 {
            *self.counts.entry(key).or_insert(0) += n;
            self.total += n;
        }
    }

    pub fn count(&self, key: &[i64]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<i64>, u64)> {
        self.counts.iter().map(|(k, &c)| (k, c))
    }

    pub fn frequency(&self, key: &[i64]) -> f64 {
        self.count(key) as f64 / self.total.max(1) as f64
    }
}

impl FromIterator<Vec<i64>> for Histogram {
    fn from_iter<I: IntoIterator<Item = Vec<i64>>>(iter: I) -> Self {
        let mut h = Histogram::new();
        for key in iter {
            h.add(key);
        }
        h
    }
}

impl From<Vec<(Vec<i64>, u64)>> for Histogram {
    fn from(pairs: Vec<(Vec<i64>, u64)>) -> Self {
        let mut h = Histogram::new();
        for (k, n) in pairs {
            h.add_n(k, n);
        }
        h
    }
}

impl From<Histogram> for Vec<(Vec<i64>, u64)> {
    fn from(h: Histogram) -> Self {
        h.counts.into_iter().collect()
    }
}

/// Merges consecutive cells (in key order) until every merged cell has
/// `ok(cell)`; a short tail joins the last complete cell.
fn merge_cells<T: Copy + Default + std::ops::AddAssign>(
    cells: impl IntoIterator<Item = T>,
    ok: impl Fn(&T) -> bool,
) -> Vec<T> {
    let mut merged: Vec<T> = Vec::new();
    let mut acc = T::default();
    let mut open = false;
    for c in cells {
        acc += c;
        open = true;
        if ok(&acc) {
            merged.push(acc);
            acc = T::default();
            open = false;
        }
    }
    if open {
        match merged.last_mut() {
            Some(last) => *last += acc,
            None => merged.push(acc),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy, Default)]
struct Pair(f64, f64);

impl std::ops::AddAssign for Pair {
    fn add_assign(&mut self, o: Pair) {
        self.0 += o.0;
        self.1 += o.1;
    }
}

fn chi_square_tail(statistic: f64, df: usize) -> f64 {
    ChiSquared::new(df as f64)
        .expect("positive degrees of freedom")
        .sf(statistic)
}

fn p_value_report(
    name: &str,
    statistic: f64,
    p_value: f64,
    sizes: Vec<u64>,
    bins: usize,
) -> TestReport {
    let verdict = if p_value > P_THRESHOLD {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    TestReport {
        statistic,
        p_value: Some(p_value),
        note: Some(format!("{bins} bins after merging")),
        ..TestReport::new(name, verdict, P_THRESHOLD, "p > threshold", sizes)
    }
}

fn degenerate(name: &str, sizes: Vec<u64>) -> TestReport {
    TestReport {
        p_value: Some(1.0),
        note: Some("fewer than 2 bins after merging".into()),
        ..TestReport::new(name, Verdict::Pass, P_THRESHOLD, "p > threshold", sizes)
    }
}

/// Two-sample chi-square test of homogeneity.
pub fn chi_square_two_sample(name: &str, h1: &Histogram, h2: &Histogram) -> TestReport {
    let (n1, n2) = (h1.total() as f64, h2.total() as f64);
    let sizes = vec![h1.total(), h2.total()];
    if h1.total() == 0 || h2.total() == 0 {
        return TestReport {
            note: Some("empty sample".into()),
            ..TestReport::new(
                name,
                Verdict::Inconclusive,
                P_THRESHOLD,
                "p > threshold",
                sizes,
            )
        };
    }
    let n = n1 + n2;
    let mut keys: Vec<&Vec<i64>> = h1.counts.keys().chain(h2.counts.keys()).collect();
    keys.sort();
    keys.dedup();
    let cells = keys
        .into_iter()
        .map(|k| Pair(h1.count(k) as f64, h2.count(k) as f64));
    let expected = |c: &Pair| {
        let row = c.0 + c.1;
        (row * n1 / n, row * n2 / n)
    };
    let merged = merge_cells(cells, |c| {
        let (e1, e2) = expected(c);
        e1 >= MIN_EXPECTED && e2 >= MIN_EXPECTED
    });
    if merged.len() < 2 {
        return degenerate(name, sizes);
    }
    let statistic: f64 = merged
        .iter()
        .map(|c| {
            let (e1, e2) = expected(c);
            (c.0 - e1).powi(2) / e1 + (c.1 - e2).powi(2) / e2
        })
        .sum();
    let p = chi_square_tail(statistic, merged.len() - 1);
    p_value_report(name, statistic, p, sizes, merged.len())
}

/// One-sample chi-square goodness of fit against an exact pmf.
pub fn chi_square_gof(name: &str, h: &Histogram, pmf: &BTreeMap<Vec<i64>, f64>) -> TestReport {
    let n = h.total() as f64;
    let sizes = vec![h.total()];
    // Observations outside the support make the fit impossible.
    if h.iter().any(|(k, _)| pmf.get(k).is_none_or(|&p| p <= 0.0)) {
        return TestReport {
            statistic: f64::MAX,
            p_value: Some(0.0),
            note: Some("observations outside the support".into()),
            ..TestReport::new(name, Verdict::Fail, P_THRESHOLD, "p > threshold", sizes)
        };
    }
    let mut keys: Vec<&Vec<i64>> = h.counts.keys().chain(pmf.keys()).collect();
    keys.sort();
    keys.dedup();
    let cells = keys
        .into_iter()
        .map(|k| Pair(h.count(k) as f64, pmf.get(k).copied().unwrap_or(0.0) * n));
    let merged = merge_cells(cells, |c| c.1 >= MIN_EXPECTED);
    if merged.len() < 2 {
        return degenerate(name, sizes);
    }
    let statistic: f64 = merged.iter().map(|c| (c.0 - c.1).powi(2) / c.1).sum();
    let p = chi_square_tail(statistic, merged.len() - 1);
    p_value_report(name, statistic, p, sizes, merged.len())
}

/// Half the L1 distance between the normalised histograms.
pub fn tv_distance(h1: &Histogram, h2: &Histogram) -> f64 {
    let mut keys: Vec<&Vec<i64>> = h1.counts.keys().chain(h2.counts.keys()).collect();
    keys.sort();
    keys.dedup();
    0.5 * keys
        .into_iter()
        .map(|k| (h1.frequency(k) - h2.frequency(k)).abs())
        .sum::<f64>()
}

/// Sample mean and variance, accumulated in a fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Moments {
    pub n: u64,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
}

impl Moments {
    pub fn from_values<'a>(values: impl IntoIterator<Item = &'a f64>) -> Self {
        // Welford's update.
        let (mut n, mut mean, mut m2) = (0u64, 0.0, 0.0);
        for &x in values {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        Moments {
            n,
            mean,
            variance: if n > 1 { m2 / (n - 1) as f64 } else { 0.0 },
        }
    }

    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        (self.variance / self.n.max(1) as f64).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::replicate_stream;
    use rand::distr::weighted::WeightedIndex;
    use rand::distr::Distribution;

    fn sample(probs: &[(i64, f64)], n: usize, seed: u64) -> Histogram {
        let index = WeightedIndex::new(probs.iter().map(|p| p.1)).unwrap();
        let mut rng = replicate_stream(seed, 0);
        (0..n)
            .map(|_| vec![probs[index.sample(&mut rng)].0])
            .collect()
    }

    #[test]
    fn identical_histograms() {
        let h = sample(&[(0, 0.75), (2, 0.25)], 1_000, 1);
        let r = chi_square_two_sample("same", &h, &h);
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, Some(1.0));
        assert!(r.pass);
        assert_eq!(tv_distance(&h, &h), 0.0);
    }

    #[test]
    fn same_law_passes() {
        let a = sample(&[(0, 0.75), (2, 0.25)], 100_000, 1);
        let b = sample(&[(0, 0.75), (2, 0.25)], 100_000, 2);
        let r = chi_square_two_sample("same law", &a, &b);
        assert!(r.p_value.unwrap() > P_THRESHOLD, "{r:?}");
    }

    #[test]
    fn different_laws_fail() {
        let a = sample(&[(0, 0.25), (2, 0.75)], 100_000, 1);
        let b = sample(&[(0, 0.75), (2, 0.25)], 100_000, 2);
        let r = chi_square_two_sample("different", &a, &b);
        assert!(r.p_value.unwrap() < 1e-6);
        assert!(!r.pass);
    }

    #[test]
    fn tv_examples() {
        let a: Histogram = vec![(vec![0], 3), (vec![2], 1)].into();
        let b: Histogram = vec![(vec![0], 1), (vec![2], 3)].into();
        assert!((tv_distance(&a, &b) - 0.5).abs() < 1e-15);
        let c: Histogram = vec![(vec![5], 7)].into();
        assert_eq!(tv_distance(&a, &c), 1.0);
    }

    #[test]
    fn single_bin_is_degenerate() {
        let a: Histogram = vec![(vec![0], 100)].into();
        let b: Histogram = vec![(vec![0], 50)].into();
        let r = chi_square_two_sample("one bin", &a, &b);
        assert!(r.pass);
        assert!(r.note.unwrap().contains("fewer than 2"));
    }

    #[test]
    fn sparse_tail_is_merged() {
        // Rare keys are pooled instead of inflating the statistic.
        let mut a = sample(&[(0, 0.5), (1, 0.5)], 10_000, 3);
        let mut b = sample(&[(0, 0.5), (1, 0.5)], 10_000, 4);
        a.add(vec![100]);
        b.add(vec![200]);
        let r = chi_square_two_sample("tail", &a, &b);
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn goodness_of_fit() {
        let h = sample(&[(0, 0.75), (2, 0.25)], 100_000, 5);
        let good: BTreeMap<Vec<i64>, f64> = [(vec![0], 0.75), (vec![2], 0.25)].into();
        let bad: BTreeMap<Vec<i64>, f64> = [(vec![0], 0.7), (vec![2], 0.3)].into();
        assert!(chi_square_gof("good", &h, &good).pass);
        assert!(!chi_square_gof("bad", &h, &bad).pass);
        let narrow: BTreeMap<Vec<i64>, f64> = [(vec![0], 1.0)].into();
        let mixed: Histogram = vec![(vec![0], 50), (vec![1], 50)].into();
        assert!(!chi_square_gof("narrow", &mixed, &narrow).pass);
    }

    #[test]
    fn chi_square_tail_values() {
        // P(chi2_1 > 3.841459) = 0.05, P(chi2_2 > x) = exp(-x/2).
        assert!((chi_square_tail(3.841_458_820_694_124, 1) - 0.05).abs() < 1e-9);
        assert!((chi_square_tail(4.0, 2) - (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn moments() {
        let m = Moments::from_values(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.n, 4);
        assert!((m.mean - 2.5).abs() < 1e-15);
        assert!((m.variance - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn histogram_serde() {
        let h: Histogram = vec![(vec![0, 1], 3), (vec![2, 0], 1)].into();
        let json = serde_json::to_string(&h).unwrap();
        assert_eq!(json, "[[[0,1],3],[[2,0],1]]");
        assert_eq!(serde_json::from_str::<Histogram>(&json).unwrap(), h);
    }
}
