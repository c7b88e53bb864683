//! Reference models with known extinction probabilities.
//!
//! | model | q | tilted mean |
//! |---|---|---|
//! | [`bgw_quarter`] | 1/3 | 1/2 |
//! | [`bgw_subcritical_mirror`] | 1 | 1/2 |
//! | [`geometric`] | 1/2 | 1/2 |
//! | [`flip`] | (1/3, 1/3) | spectral radius 1/2 |
//! | [`sevastyanov_example`] | 5/11 | |
//! | [`markov_splitting`] | 1/3 | 1/2 |

use super::{JointPmf, LifeSpanLaw, Model, PoissonCareer, SplitAtom, SplittingLaw};

/// `p_0 = 1/4`, `p_2 = 3/4`.
pub fn bgw_quarter() -> Model {
    Model::bgw(vec![JointPmf::single(&[(0, 0.25), (2, 0.75)])]).expect("valid")
}

/// `p_0 = 3/4`, `p_2 = 1/4`: the tilt of [`bgw_quarter`].
pub fn bgw_subcritical_mirror() -> Model {
    Model::bgw(vec![JointPmf::single(&[(0, 0.75), (2, 0.25)])]).expect("valid")
}

/// Largest child count kept by [`geometric`]; the dropped tail has mass
/// `(2/3)^81 < 1e-14`.
pub const GEOMETRIC_MAX_CHILDREN: u32 = 80;

/// `p_k = (1/3)(2/3)^k`, truncated at [`GEOMETRIC_MAX_CHILDREN`] and
/// renormalised.
pub fn geometric() -> Model {
    let raw: Vec<(u32, f64)> = (0..=GEOMETRIC_MAX_CHILDREN)
        .map(|k| (k, (1.0 / 3.0) * (2.0f64 / 3.0).powi(k as i32)))
        .collect();
    let total: f64 = raw.iter().map(|(_, p)| p).sum();
    let pairs: Vec<(u32, f64)> = raw.into_iter().map(|(k, p)| (k, p / total)).collect();
    Model::bgw(vec![JointPmf::single(&pairs)]).expect("valid")
}

/// Two types; each bears two children of the other type with probability
/// 3/4 and none otherwise.
pub fn flip() -> Model {
    Model::bgw(vec![
        JointPmf::new(2, vec![(vec![0, 0], 0.25), (vec![0, 2], 0.75)]).expect("shape"),
        JointPmf::new(2, vec![(vec![0, 0], 0.25), (vec![2, 0], 0.75)]).expect("shape"),
    ])
    .expect("valid")
}

/// Life span 1 or 2 with equal probability; at death split into 0 or 2 with
/// `p_0(1) = 1/2`, `p_0(2) = 1/8`.
pub fn sevastyanov_example() -> Model {
    Model::sevastyanov(SplittingLaw::Discrete(vec![
        SplitAtom {
            age: 1.0,
            prob: 0.5,
            split: vec![0.5, 0.0, 0.5],
        },
        SplitAtom {
            age: 2.0,
            prob: 0.5,
            split: vec![0.125, 0.0, 0.875],
        },
    ]))
    .expect("valid")
}

/// Exponential(1) life span, binary split with `p_0 = 1/4`, `p_2 = 3/4`.
pub fn markov_splitting() -> Model {
    Model::sevastyanov(SplittingLaw::Exponential {
        rate: 1.0,
        split: vec![0.25, 0.0, 0.75],
    })
    .expect("valid")
}

/// Two types with Poisson births during life:
/// type 0 lives Exp(1) and bears at rate 2 children of either type;
/// type 1 lives 1 or 3 and bears type-0 children at rate 1.
pub fn two_type_general() -> Model {
    Model::general(vec![
        PoissonCareer {
            life_span: LifeSpanLaw::Exponential { rate: 1.0 },
            birth_rate: 2.0,
            child_types: vec![0.5, 0.5],
        },
        PoissonCareer {
            life_span: LifeSpanLaw::Discrete(vec![(1.0, 0.5), (3.0, 0.5)]),
            birth_rate: 1.0,
            child_types: vec![1.0, 0.0],
        },
    ])
    .expect("valid")
}

pub fn all() -> Vec<Model> {
    vec![
        bgw_quarter(),
        bgw_subcritical_mirror(),
        geometric(),
        flip(),
        sevastyanov_example(),
        markov_splitting(),
        two_type_general(),
    ]
}
