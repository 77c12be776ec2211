//! Enumeration of the two-point game's Nash equilibria.
//!
//! Restricting both types to mixtures over the endpoint actions `{u_m, u_M}`
//! turns a profile into a fraction pair `(tu1, tu2)`, and equilibrium is
//! characterized per type by the sign of the indifference gap
//!
//! ```text
//! D_j = G_j (1 - I0) (exp(-u_m F) - exp(-u_M F))
//!       - (u_M - u_m)(s_j1 ubar_1 + s_j2 ubar_2)
//! ```
//!
//! A type mixing strictly needs `D_j = 0`; a type pooled on `u_m` needs
//! `D_j >= 0`; a type pooled on `u_M` needs `D_j <= 0`. The solver checks the
//! four corners directly, line-searches the gap of the free type along each
//! boundary edge with bisection refinement, and looks for fully mixed
//! equilibria along the line on which both gaps can vanish simultaneously,
//! falling back to a grid scan over the unit square when that line
//! degenerates.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::costs::CostContext;
use crate::dynamics::{self, DynamicsError};
use crate::float::{c, cu, Scalar};
use crate::params::{InvalidParams, ValidatedParams};
use crate::profile::{DiscreteProfile, TwoPointProfile};

/// Bisection iterations for root refinement along an edge.
const BISECT_ITERATIONS: usize = 40;

/// Roots on one edge closer than this are one equilibrium.
const EDGE_DEDUP: f64 = 1e-4;

/// Equilibria from different searches closer than this (euclidean in the
/// fraction pair) are merged, pure kind winning.
const GLOBAL_DEDUP: f64 = 1e-3;

/// Residual at which table-precision profiles are verified as equilibria.
pub const VERIFY_TOL: f64 = 1e-2;

/// Roots this close to a corner belong to the pure-equilibrium check.
const CORNER_SKIP: f64 = 1e-6;

/// Slack on the parallel Pareto comparison to absorb solver noise.
const PARETO_TOL: f64 = 1e-3;

/// Line coefficients below this are treated as a degenerate internal line.
const DEGENERATE_LINE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NashError {
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Params(#[from] InvalidParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EquilibriumKind {
    Pure,
    BoundaryMixed,
    InternalMixed,
}

/// One verified equilibrium with the statistics the result tables report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumRecord<T> {
    pub kind: EquilibriumKind,
    pub tilde_u1: T,
    pub tilde_u2: T,
    /// Mass-weighted mean cost per type; for a mixing type this equals the
    /// common indifference value of its two support actions.
    pub cost: [T; 2],
    /// Cost of each type at the endpoint actions: `[j][0]` at `u_m`,
    /// `[j][1]` at `u_M`.
    pub cost_at_bounds: [[T; 2]; 2],
    pub prevalence: T,
    /// Worst signed violation of the defining conditions; nonpositive when
    /// every condition holds with margin.
    pub residual: T,
    pub pareto_dominated: bool,
}

impl<T: Scalar> EquilibriumRecord<T> {
    pub fn profile(&self) -> TwoPointProfile<T> {
        TwoPointProfile {
            tilde_u1: self.tilde_u1,
            tilde_u2: self.tilde_u2,
        }
    }
}

/// Solver knobs for the equilibrium searches.
#[derive(Debug, Clone, Copy)]
pub struct NashSettings<T> {
    /// RK4 steps per exposure evaluation.
    pub ode_steps: usize,
    /// Grid intervals per edge (and per internal-line) scan.
    pub line_search: usize,
    /// Equality tolerance: bisection acceptance and inequality slack during
    /// enumeration. Kept tight; near-miss corners are real non-equilibria.
    pub eq_tol: T,
}

impl<T: Scalar> Default for NashSettings<T> {
    fn default() -> Self {
        NashSettings {
            ode_steps: dynamics::DEFAULT_STEPS,
            line_search: 400,
            eq_tol: c(1e-6),
        }
    }
}

/// Exposure of a two-point profile.
pub fn exposure_two_point<T: Scalar>(
    params: &ValidatedParams<T>,
    tp: &TwoPointProfile<T>,
    steps: usize,
) -> Result<T, DynamicsError> {
    dynamics::exposure(params, &DiscreteProfile::two_point(params, tp), steps)
}

/// Indifference gap of type `j` at a profile with exposure `f`.
pub fn indifference_gap<T: Scalar>(
    params: &ValidatedParams<T>,
    j: usize,
    tp: &TwoPointProfile<T>,
    f: T,
) -> T {
    let bracket = (-params.u_min * f).exp() - (-params.u_max * f).exp();
    let social =
        params.s[j][0] * tp.mean_action(params, 0) + params.s[j][1] * tp.mean_action(params, 1);
    params.g[j] * (T::one() - params.i0) * bracket - params.action_span() * social
}

fn gaps<T: Scalar>(
    params: &ValidatedParams<T>,
    tp: &TwoPointProfile<T>,
    steps: usize,
) -> Result<[T; 2], DynamicsError> {
    let f = exposure_two_point(params, tp, steps)?;
    Ok([
        indifference_gap(params, 0, tp, f),
        indifference_gap(params, 1, tp, f),
    ])
}

/// Signed violation of type `j`'s equilibrium condition. Positive means the
/// condition fails by that much; interior types use the absolute gap.
fn condition_violation<T: Scalar>(tilde: T, gap: T) -> T {
    if tilde == T::zero() {
        -gap
    } else if tilde == T::one() {
        gap
    } else {
        gap.abs()
    }
}

/// Verifies a profile against the per-type equilibrium conditions.
///
/// Returns whether every condition holds within `tol` together with the
/// worst signed violation. Suited to table-precision inputs: at the default
/// [`VERIFY_TOL`] a profile rounded to a few digits still verifies.
pub fn check_equilibrium<T: Scalar>(
    params: &ValidatedParams<T>,
    tp: &TwoPointProfile<T>,
    tol: T,
    steps: usize,
) -> Result<(bool, T), DynamicsError> {
    let g = gaps(params, tp, steps)?;
    let residual = (0..2)
        .map(|j| condition_violation(tp.tilde(j), g[j]))
        .fold(T::neg_infinity(), T::max);
    Ok((residual <= tol, residual))
}

fn record_from<T: Scalar>(
    params: &ValidatedParams<T>,
    kind: EquilibriumKind,
    tp: TwoPointProfile<T>,
    residual: T,
    steps: usize,
) -> Result<EquilibriumRecord<T>, DynamicsError> {
    let profile = DiscreteProfile::two_point(params, &tp);
    let ctx = CostContext::new(params, &profile, steps)?;
    let mut cost = [T::zero(); 2];
    let mut prevalence = T::zero();
    for (j, mean_cost) in cost.iter_mut().enumerate() {
        let mut mean = T::zero();
        for (u, m) in profile.atoms(j) {
            mean = mean + ctx.cost(j, u) * m;
            prevalence = prevalence + ctx.infection_probability(u) * m;
        }
        *mean_cost = mean / params.n[j];
    }
    let cost_at_bounds = [
        [ctx.cost(0, params.u_min), ctx.cost(0, params.u_max)],
        [ctx.cost(1, params.u_min), ctx.cost(1, params.u_max)],
    ];
    Ok(EquilibriumRecord {
        kind,
        tilde_u1: tp.tilde_u1,
        tilde_u2: tp.tilde_u2,
        cost,
        cost_at_bounds,
        prevalence: prevalence / params.total_mass(),
        residual,
        pareto_dominated: false,
    })
}

/// Checks the four pure corners.
pub fn find_pure<T: Scalar>(
    params: &ValidatedParams<T>,
    settings: &NashSettings<T>,
) -> Result<Vec<EquilibriumRecord<T>>, DynamicsError> {
    let corners: Vec<(T, T)> = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)]
        .into_iter()
        .map(|(a, b)| (c(a), c(b)))
        .collect();
    let checked: Vec<_> = corners
        .par_iter()
        .map(|&(a, b)| {
            let tp = TwoPointProfile {
                tilde_u1: a,
                tilde_u2: b,
            };
            check_equilibrium(params, &tp, settings.eq_tol, settings.ode_steps)
                .map(|(ok, residual)| (tp, ok, residual))
        })
        .collect::<Result<_, _>>()?;
    checked
        .into_iter()
        .filter(|&(_, ok, _)| ok)
        .map(|(tp, _, residual)| {
            record_from(
                params,
                EquilibriumKind::Pure,
                tp,
                residual,
                settings.ode_steps,
            )
        })
        .collect()
}

fn bisect<T: Scalar>(
    mut lo: T,
    mut hi: T,
    mut gap_lo: T,
    mut gap: impl FnMut(T) -> Result<T, DynamicsError>,
) -> Result<T, DynamicsError> {
    let half = c::<T>(0.5);
    for _ in 0..BISECT_ITERATIONS {
        let mid = (lo + hi) * half;
        let gap_mid = gap(mid)?;
        if gap_mid == T::zero() {
            return Ok(mid);
        }
        if (gap_mid > T::zero()) == (gap_lo > T::zero()) {
            lo = mid;
            gap_lo = gap_mid;
        } else {
            hi = mid;
        }
    }
    Ok((lo + hi) * half)
}

/// Roots of `values` (sampled at `grid`) refined by bisection.
fn roots_on_grid<T: Scalar>(
    grid: &[T],
    values: &[T],
    mut gap: impl FnMut(T) -> Result<T, DynamicsError>,
) -> Result<Vec<T>, DynamicsError> {
    let mut roots = Vec::new();
    for k in 0..grid.len() - 1 {
        let (a, b) = (values[k], values[k + 1]);
        if a == T::zero() {
            roots.push(grid[k]);
        } else if a * b < T::zero() {
            roots.push(bisect(grid[k], grid[k + 1], a, &mut gap)?);
        }
    }
    if let Some(&last) = values.last() {
        if last == T::zero() {
            roots.push(*grid.last().unwrap());
        }
    }
    // merge near-duplicates from adjacent brackets
    let dedup = c::<T>(EDGE_DEDUP);
    let mut merged: Vec<T> = Vec::with_capacity(roots.len());
    for root in roots {
        match merged.last() {
            Some(&prev) if (root - prev).abs() < dedup => {}
            _ => merged.push(root),
        }
    }
    Ok(merged)
}

fn unit_grid<T: Scalar>(intervals: usize) -> Vec<T> {
    (0..=intervals)
        .map(|k| cu::<T>(k) / cu::<T>(intervals))
        .collect()
}

/// Line-searches each boundary edge of the unit square for equilibria where
/// exactly one type mixes.
pub fn find_boundary_mixed<T: Scalar>(
    params: &ValidatedParams<T>,
    settings: &NashSettings<T>,
) -> Result<Vec<EquilibriumRecord<T>>, DynamicsError> {
    assert!(
        settings.line_search >= 50,
        "edge scans need resolution >= 50"
    );
    let grid = unit_grid::<T>(settings.line_search);
    let mut records = Vec::new();

    // (fixed type, its fraction); the other type mixes along the edge.
    let corners: [(usize, T); 4] = [(1, T::zero()), (1, T::one()), (0, T::zero()), (0, T::one())];
    for (fixed, fixed_value) in corners {
        let free = 1 - fixed;
        let make = |x: T| -> TwoPointProfile<T> {
            let mut tp = TwoPointProfile {
                tilde_u1: fixed_value,
                tilde_u2: fixed_value,
            };
            match free {
                0 => tp.tilde_u1 = x,
                _ => tp.tilde_u2 = x,
            }
            tp
        };
        let values: Vec<T> = grid
            .par_iter()
            .map(|&x| {
                let tp = make(x);
                let f = exposure_two_point(params, &tp, settings.ode_steps)?;
                Ok(indifference_gap(params, free, &tp, f))
            })
            .collect::<Result<_, DynamicsError>>()?;
        let roots = roots_on_grid(&grid, &values, |x| {
            let tp = make(x);
            let f = exposure_two_point(params, &tp, settings.ode_steps)?;
            Ok(indifference_gap(params, free, &tp, f))
        })?;

        for root in roots {
            if root < c(CORNER_SKIP) || root > T::one() - c(CORNER_SKIP) {
                continue;
            }
            let tp = make(root);
            let g = gaps(params, &tp, settings.ode_steps)?;
            let fixed_violation = condition_violation(fixed_value, g[fixed]);
            let residual = T::max(g[free].abs(), fixed_violation);
            if residual <= settings.eq_tol {
                records.push(record_from(
                    params,
                    EquilibriumKind::BoundaryMixed,
                    tp,
                    residual,
                    settings.ode_steps,
                )?);
            }
        }
    }
    Ok(records)
}

/// Result of the internal-equilibrium search.
#[derive(Debug, Clone, PartialEq)]
pub struct InternalScan<T> {
    pub records: Vec<EquilibriumRecord<T>>,
    /// Set when both line coefficients vanish and the search fell back to a
    /// full grid scan over the unit square.
    pub degenerate_line: bool,
}

/// Searches for equilibria where both types mix.
///
/// Both gaps can only vanish together on the line
/// `(G2 s11 - G1 s21) tu1 + (G2 s12 - G1 s22) tu2 = rhs`; the scan walks the
/// segment of that line inside the unit square. When the coefficients
/// degenerate the two gaps are proportional everywhere, and a row-by-row scan
/// of the square takes over.
pub fn find_internal<T: Scalar>(
    params: &ValidatedParams<T>,
    settings: &NashSettings<T>,
) -> Result<InternalScan<T>, DynamicsError> {
    assert!(
        settings.line_search >= 50,
        "line scans need resolution >= 50"
    );
    let [g1, g2] = params.g;
    let s = params.s;
    let coeff_1 = g2 * s[0][0] - g1 * s[1][0];
    let coeff_2 = g2 * s[0][1] - g1 * s[1][1];
    let rhs =
        params.u_min * (g1 * (s[1][0] + s[1][1]) - g2 * (s[0][0] + s[0][1])) / params.action_span();

    let interior = |x: T| x > c(CORNER_SKIP) && x < T::one() - c(CORNER_SKIP);
    let mut records = Vec::new();

    if coeff_1.abs() < c(DEGENERATE_LINE_TOL) && coeff_2.abs() < c(DEGENERATE_LINE_TOL) {
        // The gaps are proportional, so roots of the first along each
        // interior row are simultaneous roots.
        let grid = unit_grid::<T>(settings.line_search);
        for iy in 1..settings.line_search {
            let tu2 = cu::<T>(iy) / cu::<T>(settings.line_search);
            let make = |x: T| TwoPointProfile {
                tilde_u1: x,
                tilde_u2: tu2,
            };
            let values: Vec<T> = grid
                .par_iter()
                .map(|&x| {
                    let tp = make(x);
                    let f = exposure_two_point(params, &tp, settings.ode_steps)?;
                    Ok(indifference_gap(params, 0, &tp, f))
                })
                .collect::<Result<_, DynamicsError>>()?;
            let roots = roots_on_grid(&grid, &values, |x| {
                let tp = make(x);
                let f = exposure_two_point(params, &tp, settings.ode_steps)?;
                Ok(indifference_gap(params, 0, &tp, f))
            })?;
            for root in roots {
                if !interior(root) {
                    continue;
                }
                let tp = make(root);
                let g = gaps(params, &tp, settings.ode_steps)?;
                let residual = T::max(g[0].abs(), g[1].abs());
                if residual <= settings.eq_tol {
                    records.push(record_from(
                        params,
                        EquilibriumKind::InternalMixed,
                        tp,
                        residual,
                        settings.ode_steps,
                    )?);
                }
            }
        }
        return Ok(InternalScan {
            records,
            degenerate_line: true,
        });
    }

    // Segment of the line inside the unit square.
    let mut endpoints: Vec<(T, T)> = Vec::new();
    let unit = |x: T| x >= -c::<T>(1e-12) && x <= T::one() + c::<T>(1e-12);
    let clamp01 = |x: T| T::min(T::max(x, T::zero()), T::one());
    if coeff_2.abs() >= c(DEGENERATE_LINE_TOL) {
        for x in [T::zero(), T::one()] {
            let y = (rhs - coeff_1 * x) / coeff_2;
            if unit(y) {
                endpoints.push((x, clamp01(y)));
            }
        }
    }
    if coeff_1.abs() >= c(DEGENERATE_LINE_TOL) {
        for y in [T::zero(), T::one()] {
            let x = (rhs - coeff_2 * y) / coeff_1;
            if unit(x) {
                endpoints.push((clamp01(x), y));
            }
        }
    }
    endpoints.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap());
    endpoints.dedup_by(|a, b| (a.0 - b.0).abs() + (a.1 - b.1).abs() < c(1e-9));
    if endpoints.len() < 2 {
        return Ok(InternalScan {
            records,
            degenerate_line: false,
        });
    }
    let p0 = endpoints[0];
    let p1 = *endpoints.last().unwrap();

    let point_at = move |t: T| -> TwoPointProfile<T> {
        TwoPointProfile {
            tilde_u1: p0.0 + (p1.0 - p0.0) * t,
            tilde_u2: p0.1 + (p1.1 - p0.1) * t,
        }
    };
    let grid = unit_grid::<T>(settings.line_search);
    let values: Vec<T> = grid
        .par_iter()
        .map(|&t| {
            let tp = point_at(t);
            let f = exposure_two_point(params, &tp, settings.ode_steps)?;
            Ok(indifference_gap(params, 0, &tp, f))
        })
        .collect::<Result<_, DynamicsError>>()?;
    let roots = roots_on_grid(&grid, &values, |t| {
        let tp = point_at(t);
        let f = exposure_two_point(params, &tp, settings.ode_steps)?;
        Ok(indifference_gap(params, 0, &tp, f))
    })?;
    for root in roots {
        let tp = point_at(root);
        if !interior(tp.tilde_u1) || !interior(tp.tilde_u2) {
            continue;
        }
        let g = gaps(params, &tp, settings.ode_steps)?;
        let residual = T::max(g[0].abs(), g[1].abs());
        if residual <= settings.eq_tol {
            records.push(record_from(
                params,
                EquilibriumKind::InternalMixed,
                tp,
                residual,
                settings.ode_steps,
            )?);
        }
    }
    Ok(InternalScan {
        records,
        degenerate_line: false,
    })
}

fn mark_pareto<T: Scalar>(records: &mut [EquilibriumRecord<T>]) {
    let tol = c::<T>(PARETO_TOL);
    let costs: Vec<[T; 2]> = records.iter().map(|r| r.cost).collect();
    for (idx, record) in records.iter_mut().enumerate() {
        record.pareto_dominated = costs.iter().enumerate().any(|(other, oc)| {
            other != idx
                && oc[0] <= costs[idx][0] + tol
                && oc[1] <= costs[idx][1] + tol
                && (oc[0] < costs[idx][0] - tol || oc[1] < costs[idx][1] - tol)
        });
    }
}

/// Runs all three searches, deduplicates, flags Pareto-dominated records,
/// and returns the set sorted by the fraction pair.
pub fn enumerate_all<T: Scalar>(
    params: &ValidatedParams<T>,
    settings: &NashSettings<T>,
) -> Result<Vec<EquilibriumRecord<T>>, DynamicsError> {
    let mut candidates = find_pure(params, settings)?;
    candidates.extend(find_boundary_mixed(params, settings)?);
    candidates.extend(find_internal(params, settings)?.records);

    // pure records come first, so they win merges against nearby roots
    let dedup = c::<T>(GLOBAL_DEDUP);
    let mut kept: Vec<EquilibriumRecord<T>> = Vec::with_capacity(candidates.len());
    for record in candidates {
        let duplicate = kept.iter().any(|k| {
            let d1 = k.tilde_u1 - record.tilde_u1;
            let d2 = k.tilde_u2 - record.tilde_u2;
            (d1 * d1 + d2 * d2).sqrt() < dedup
        });
        if !duplicate {
            kept.push(record);
        }
    }
    mark_pareto(&mut kept);
    kept.sort_by(|a, b| {
        (a.tilde_u1, a.tilde_u2)
            .partial_cmp(&(b.tilde_u1, b.tilde_u2))
            .expect("fractions are finite")
    });
    Ok(kept)
}

/// One row of a vulnerability sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct G1SweepRow<T> {
    pub g1: T,
    pub g2: T,
    pub outcome: Result<Vec<EquilibriumRecord<T>>, NashError>,
}

/// Reruns the enumeration for each `g1` value, holding `g2 = ratio * g1`.
///
/// Failures are recorded per row rather than aborting the sweep.
pub fn sweep_g1<T: Scalar>(
    params: &ValidatedParams<T>,
    g1_values: &[T],
    ratio: T,
    settings: &NashSettings<T>,
) -> Vec<G1SweepRow<T>> {
    g1_values
        .iter()
        .map(|&g1| {
            let g2 = ratio * g1;
            let mut p = **params;
            p.g = [g1, g2];
            let outcome = p
                .validate()
                .map_err(NashError::from)
                .and_then(|vp| enumerate_all(&vp, settings).map_err(NashError::from));
            G1SweepRow { g1, g2, outcome }
        })
        .collect()
}
