//! Perron root of a mean matrix and the Malthusian parameter.

use crate::kernels::{MeanMatrix, MeanReproMeasure};

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-12;
pub const MALTHUS_TOL: f64 = 1e-12;

const MAX_POWER_ITER: usize = 1_000_000;
const VECTOR_FLOOR: f64 = 1e-12;
/// Entries of the normalised iterate at or below this are treated as zero
/// in the lower bound.
const SUPPORT_CUTOFF: f64 = 1e-9;
const MAX_BRACKET_DOUBLINGS: usize = 64;

/// Spectral radius of a nonnegative matrix.
///
/// Power iteration on `B = M + I` (the shift removes periodicity) from the
/// all-ones vector, floored at `1e-12` so it cannot lock into an invariant
/// subspace. Stops when the Collatz–Wielandt bounds meet: the upper bound is
/// `max_i (Bv)_i / v_i`; the lower bound uses `v` with its floored entries
/// zeroed, which stays valid when the Perron vector has zeros.
pub fn spectral_radius(m: &MeanMatrix, tol: f64) -> f64 {
    let n = m.dim();
    if n == 0 || m.rows().iter().flatten().all(|&x| x == 0.0) {
        return 0.0;
    }
    let shifted =
        |v: &[f64]| -> Vec<f64> { m.apply(v).iter().zip(v).map(|(a, b)| a + b).collect() };
    let mut v = vec![1.0; n];
    let (mut lo, mut hi) = (0.0, f64::INFINITY);
    for _ in 0..MAX_POWER_ITER {
        let w = shifted(&v);
        hi = w.iter().zip(&v).map(|(a, b)| a / b).fold(0.0, f64::max);
        let support: Vec<f64> = v
            .iter()
            .map(|&x| if x > SUPPORT_CUTOFF { x } else { 0.0 })
            .collect();
        let ws = shifted(&support);
        lo = ws
            .iter()
            .zip(&support)
            .filter(|(_, &x)| x > 0.0)
            .map(|(a, b)| a / b)
            .fold(f64::INFINITY, f64::min);
        if hi - lo <= tol * hi.max(1.0) {
            break;
        }
        let norm = w.iter().copied().fold(0.0, f64::max);
        v = w.iter().map(|x| (x / norm).max(VECTOR_FLOOR)).collect();
    }
    (0.5 * (lo + hi) - 1.0).max(0.0)
}

/// Root of `sum_i mass_i exp(-alpha t_i) = 1`, all child types pooled.
///
/// `None` if the measure is empty or no root exists.
pub fn malthusian_alpha(mu: &MeanReproMeasure) -> Option<f64> {
    if mu.is_empty() {
        return None;
    }
    bisect_decreasing(|alpha| mu.laplace_row(alpha, width(mu)).iter().sum::<f64>() - 1.0)
}

/// Multi-type Malthusian parameter: the `alpha` at which the Laplace-
/// transformed mean matrix `M(alpha)[s][j] = int exp(-alpha t) mu_s(dt x {j})`
/// has spectral radius 1.
pub fn malthusian_alpha_multitype(rows: &[MeanReproMeasure]) -> Option<f64> {
    let m = rows.len();
    if rows.iter().all(MeanReproMeasure::is_empty) {
        return None;
    }
    bisect_decreasing(|alpha| {
        let matrix: Vec<Vec<f64>> = rows.iter().map(|mu| mu.laplace_row(alpha, m)).collect();
        if matrix.iter().flatten().any(|x| x.is_infinite()) {
            return f64::INFINITY;
        }
        let matrix = MeanMatrix::from_rows(matrix).expect("nonnegative transform");
        spectral_radius(&matrix, DEFAULT_SPECTRAL_TOL) - 1.0
    })
}

/// Child types a measure can refer to.
fn width(mu: &MeanReproMeasure) -> usize {
    match mu {
        MeanReproMeasure::Atoms(atoms) => {
            atoms.iter().map(|a| a.child_type.0 + 1).max().unwrap_or(1)
        }
        MeanReproMeasure::Exponential { masses, .. } => masses.len(),
    }
}

/// Bisection for the root of a nonincreasing function, growing the bracket
/// geometrically from `[-1, 1]`.
fn bisect_decreasing(phi: impl Fn(f64) -> f64) -> Option<f64> {
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut grown = 0;
    while phi(lo) < 0.0 {
        lo *= 2.0;
        grown += 1;
        if grown > MAX_BRACKET_DOUBLINGS {
            return None;
        }
    }
    grown = 0;
    while phi(hi) > 0.0 {
        hi *= 2.0;
        grown += 1;
        if grown > MAX_BRACKET_DOUBLINGS {
            return None;
        }
    }
    while hi - lo > MALTHUS_TOL * hi.abs().max(lo.abs()).max(1.0) {
        let mid = 0.5 * (lo + hi);
        if phi(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}
