//! Shared fixtures for the unit tests.

use crate::params::{ModelParams, ValidatedParams};

/// Baseline constants of the first worked example. The homophily and
/// high-vulnerability variants below share everything but `g` and `s`.
pub(crate) fn example1(g1: f64, g2: f64) -> ValidatedParams<f64> {
    ModelParams {
        r: 2.0,
        horizon: 50.0,
        i0: 0.01,
        u_min: 0.1,
        u_max: 0.9,
        n: [2.0, 0.5],
        alpha: [1.0, 1.0],
        g: [g1, g2],
        s: [[2.0, 0.5], [2.0, 0.5]],
    }
    .validate()
    .expect("example parameters are valid")
}

/// Homophily variant: each type prefers contact with its own kind.
pub(crate) fn example2() -> ValidatedParams<f64> {
    let mut p = *example1(2.0, 2.8);
    p.s = [[2.0, 0.5], [0.5, 2.0]];
    p.validate().expect("example parameters are valid")
}

/// Strong-vulnerability variant used for the constrained-game runs.
pub(crate) fn example3() -> ValidatedParams<f64> {
    example1(1.6, 16.0)
}
