//! Shared fixtures and independent oracles for the integration tests.
//!
//! Everything here deliberately avoids the solver paths it is used to check:
//! finite differences go through the full nonlinear dynamics, and the
//! best-response check evaluates raw costs on a grid.

use epigame_core::costs::{self, CostContext};
use epigame_core::dynamics;
use epigame_core::params::{ModelParams, ValidatedParams};
use epigame_core::profile::{DiracPair, DiscreteProfile, TwoPointProfile};

pub fn example1(g1: f64, g2: f64) -> ValidatedParams<f64> {
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

pub fn example2() -> ValidatedParams<f64> {
    let mut p = *example1(2.0, 2.8);
    p.s = [[2.0, 0.5], [0.5, 2.0]];
    p.validate().expect("example parameters are valid")
}

pub fn example3() -> ValidatedParams<f64> {
    example1(1.6, 16.0)
}

/// Spearman rank correlation; ties get their midrank.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len());
    let rank = |values: &[f64]| -> Vec<f64> {
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&a, &b| values[a].partial_cmp(&values[b]).unwrap());
        let mut ranks = vec![0.0; values.len()];
        let mut i = 0;
        while i < order.len() {
            let mut j = i;
            while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
                j += 1;
            }
            let midrank = (i + j) as f64 / 2.0 + 1.0;
            for &idx in &order[i..=j] {
                ranks[idx] = midrank;
            }
            i = j + 1;
        }
        ranks
    };
    let rx = rank(x);
    let ry = rank(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut cov = 0.0;
    let mut var_x = 0.0;
    let mut var_y = 0.0;
    for k in 0..x.len() {
        cov += (rx[k] - mean) * (ry[k] - mean);
        var_x += (rx[k] - mean).powi(2);
        var_y += (ry[k] - mean).powi(2);
    }
    cov / (var_x.sqrt() * var_y.sqrt())
}

/// Value bundle differentiated by the finite-difference oracle.
#[derive(Debug, Clone, Copy)]
pub struct FdDerivatives {
    pub d_exposure: f64,
    pub d_cost_mean: [f64; 2],
    pub d_variance: f64,
}

fn perturbed_quantities(
    params: &ValidatedParams<f64>,
    base: &DiracPair<f64>,
    j: usize,
    u: f64,
    eps: f64,
    steps: usize,
) -> (f64, f64, f64, f64) {
    let (mut support, mut mass) = (
        [vec![base.u1], vec![base.u2]],
        [vec![params.n[0]], vec![params.n[1]]],
    );
    support[j] = vec![base.action(j), u];
    mass[j] = vec![params.n[j] - eps, eps];
    let profile = DiscreteProfile::new_signed(
        params,
        support[0].clone(),
        mass[0].clone(),
        support[1].clone(),
        mass[1].clone(),
    )
    .expect("perturbed profile is well formed");
    let report = costs::cost_report(params, &profile, steps).expect("integrable");
    let exposure = dynamics::exposure(params, &profile, steps).expect("integrable");
    (exposure, report.jbar1, report.jbar2, report.variance)
}

/// Central finite differences of exposure, mean costs, and variance for a
/// single-action deviation, Richardson-extrapolated over two step sizes.
pub fn fd_directional(
    params: &ValidatedParams<f64>,
    base: &DiracPair<f64>,
    j: usize,
    u: f64,
    eps: f64,
    steps: usize,
) -> FdDerivatives {
    let central = |e: f64| -> [f64; 4] {
        let plus = perturbed_quantities(params, base, j, u, e, steps);
        let minus = perturbed_quantities(params, base, j, u, -e, steps);
        [
            (plus.0 - minus.0) / (2.0 * e),
            (plus.1 - minus.1) / (2.0 * e),
            (plus.2 - minus.2) / (2.0 * e),
            (plus.3 - minus.3) / (2.0 * e),
        ]
    };
    let coarse = central(eps);
    let fine = central(eps / 2.0);
    let extrapolate = |c: f64, f: f64| (4.0 * f - c) / 3.0;
    FdDerivatives {
        d_exposure: extrapolate(coarse[0], fine[0]),
        d_cost_mean: [
            extrapolate(coarse[1], fine[1]),
            extrapolate(coarse[2], fine[2]),
        ],
        d_variance: extrapolate(coarse[3], fine[3]),
    }
}

/// Largest cost saving any agent can realize by a unilateral move to the
/// best action on a uniform grid; independent of the equilibrium algebra.
pub fn max_unilateral_improvement(
    params: &ValidatedParams<f64>,
    tp: &TwoPointProfile<f64>,
    grid_points: usize,
    steps: usize,
) -> f64 {
    let profile = DiscreteProfile::two_point(params, tp);
    let ctx = CostContext::new(params, &profile, steps).expect("integrable");
    let grid = dynamics::action_grid(params, grid_points);
    let mut worst: f64 = 0.0;
    for j in 0..2 {
        let best = grid
            .iter()
            .map(|&u| ctx.cost(j, u))
            .fold(f64::INFINITY, f64::min);
        for (u, _) in profile.atoms(j) {
            worst = worst.max(ctx.cost(j, u) - best);
        }
    }
    worst
}
