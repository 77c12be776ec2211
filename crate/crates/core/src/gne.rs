//! Variance-constrained generalized Nash equilibria over Dirac action pairs.
//!
//! With a shared bound `V <= C` on the cost variance, an action distribution
//! is an equilibrium when either the bound is slack and no vanishing group
//! can lower its mean cost (an ordinary equilibrium), or the bound is tight
//! and every cost-improving group deviation pushes the variance above the
//! bound. For non-singular points the deviation test reduces to mixtures of
//! at most two probe actions: a candidate fails exactly when some convex
//! combination of two probes makes both the mean-cost change `g^K` and the
//! variance derivative `g^L` negative.
//!
//! The search grids the square of Dirac pairs, collects the cells crossed by
//! the contour `V = C`, and runs the two-point test at each cell center.
//! Since both tested combinations are linear in the mixing weight, the
//! violating weights form an interval whose endpoints are computed exactly;
//! the configured weight grid only adds reporting resolution.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::costs::{self, CostContext};
use crate::dynamics::{self, DynamicsError};
use crate::float::{c, Scalar};
use crate::nash::{self, NashSettings};
use crate::params::ValidatedParams;
use crate::profile::{DiracPair, DiscreteProfile};
use crate::sensitivity::{self, Deviation, StationarityCheck};

/// Tolerance on mean-cost deviations (cost units).
pub const COST_DEV_TOL: f64 = 1e-6;

/// Tolerance on variance deviations (variance units); tighter than the cost
/// tolerance because the variance is quadratic in the costs.
pub const VARIANCE_DEV_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GneError {
    #[error("the variance never crosses the bound on the scan grid")]
    EmptyContour,
    #[error("pair is variance stationary; the two-point test is inconclusive")]
    SingularPoint,
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Resolution knobs for the constrained-game scan.
#[derive(Debug, Clone, Copy)]
pub struct GneSettings {
    /// Grid points per axis of the Dirac-pair square.
    pub grid_resolution: usize,
    /// Probe actions per deviation-function evaluation.
    pub probe_points: usize,
    /// Mixing-weight grid for certificates; the violation test itself is
    /// exact in the weight.
    pub rho_points: usize,
    /// RK4 steps per integration.
    pub ode_steps: usize,
}

impl Default for GneSettings {
    fn default() -> Self {
        GneSettings {
            grid_resolution: 81,
            probe_points: 201,
            rho_points: 21,
            ode_steps: dynamics::DEFAULT_STEPS,
        }
    }
}

/// Cost variance sampled over the square of Dirac pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceGrid<T> {
    pub actions: Vec<T>,
    /// `value[i1][i2]` is the variance at `(actions[i1], actions[i2])`.
    pub value: Vec<Vec<T>>,
}

impl<T: Scalar> VarianceGrid<T> {
    pub fn max_value(&self) -> T {
        self.value
            .iter()
            .flatten()
            .copied()
            .fold(T::neg_infinity(), T::max)
    }

    /// CSV export with columns `u1, u2, V`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u1,u2,V")?;
        for (i1, row) in self.value.iter().enumerate() {
            for (i2, v) in row.iter().enumerate() {
                writeln!(w, "{},{},{}", self.actions[i1], self.actions[i2], v)?;
            }
        }
        Ok(())
    }
}

/// Evaluates the cost variance at every grid pair.
pub fn variance_grid<T: Scalar>(
    params: &ValidatedParams<T>,
    resolution: usize,
    steps: usize,
) -> Result<VarianceGrid<T>, DynamicsError> {
    assert!(
        resolution >= 20,
        "contour grids need at least 20 points per axis"
    );
    let actions = dynamics::action_grid(params, resolution);
    let flat: Vec<T> = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let pair = DiracPair {
                u1: actions[idx / resolution],
                u2: actions[idx % resolution],
            };
            costs::variance(params, &DiscreteProfile::dirac(params, &pair), steps)
        })
        .collect::<Result<_, _>>()?;
    let value = flat.chunks(resolution).map(|row| row.to_vec()).collect();
    Ok(VarianceGrid { actions, value })
}

/// Grid cells crossed by the contour `V = bound`, refined to cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct ContourSet<T> {
    pub bound: T,
    pub candidates: Vec<DiracPair<T>>,
    /// Largest variance spread across any flagged cell's corners; the
    /// contour can only be located to within this much.
    pub tolerance: T,
}

pub fn contour_candidates<T: Scalar>(
    grid: &VarianceGrid<T>,
    bound: T,
) -> Result<ContourSet<T>, GneError> {
    let n = grid.actions.len();
    let mut candidates = Vec::new();
    let mut tolerance = T::zero();
    let half = c::<T>(0.5);
    for i1 in 0..n - 1 {
        for i2 in 0..n - 1 {
            let corners = [
                grid.value[i1][i2],
                grid.value[i1 + 1][i2],
                grid.value[i1][i2 + 1],
                grid.value[i1 + 1][i2 + 1],
            ];
            let below = corners.iter().any(|&v| v < bound);
            let above = corners.iter().any(|&v| v >= bound);
            if below && above {
                candidates.push(DiracPair {
                    u1: (grid.actions[i1] + grid.actions[i1 + 1]) * half,
                    u2: (grid.actions[i2] + grid.actions[i2 + 1]) * half,
                });
                let spread = corners.iter().copied().fold(T::neg_infinity(), T::max)
                    - corners.iter().copied().fold(T::infinity(), T::min);
                tolerance = T::max(tolerance, spread);
            }
        }
    }
    if candidates.is_empty() {
        return Err(GneError::EmptyContour);
    }
    Ok(ContourSet {
        bound,
        candidates,
        tolerance,
    })
}

/// Verdict of the two-point deviation test at one contour candidate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryCheck<T> {
    pub is_gne: bool,
    /// Minimum over tested deviations of
    /// `max(g^K combo / cost tol, g^L combo / variance tol)`; at least -1
    /// exactly when no violating deviation was found.
    pub certificate: T,
    pub violation: Option<GneViolation<T>>,
}

/// A two-point deviation that lowers the deviating group's mean cost and
/// the variance simultaneously.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GneViolation<T> {
    pub type_index: usize,
    pub u_a: T,
    pub u_b: T,
    pub rho: T,
}

/// Mixing weights where `rho * a + (1 - rho) * b < -tol`, clipped to `[0, 1]`.
fn negative_interval<T: Scalar>(a: T, b: T, tol: T) -> Option<(T, T)> {
    let threshold = -tol;
    if a == b {
        return (a < threshold).then_some((T::zero(), T::one()));
    }
    // comb(rho) = b + rho (a - b)
    let crossing = (threshold - b) / (a - b);
    let (lo, hi) = if a > b {
        (T::zero(), crossing)
    } else {
        (crossing, T::one())
    };
    let lo = T::max(lo, T::zero());
    let hi = T::min(hi, T::one());
    (lo < hi).then_some((lo, hi))
}

struct DeviationTables<T> {
    probe: Vec<T>,
    g_cost: [Vec<T>; 2],
    g_variance: [Vec<T>; 2],
}

/// Runs the single-point necessary filter and then the exact-in-rho
/// two-point test over all probe pairs.
fn two_point_test<T: Scalar>(tables: &DeviationTables<T>, rho_points: usize) -> BoundaryCheck<T> {
    let cost_tol = c::<T>(COST_DEV_TOL);
    let var_tol = c::<T>(VARIANCE_DEV_TOL);
    let rho_grid: Vec<T> = (0..rho_points.max(2))
        .map(|k| crate::float::cu::<T>(k) / crate::float::cu::<T>(rho_points.max(2) - 1))
        .collect();

    let mut certificate = T::infinity();
    let n = tables.probe.len();
    let half = c::<T>(0.5);
    let mut rhos: Vec<T> = Vec::with_capacity(rho_grid.len() + 3);
    for j in 0..2 {
        let gk = &tables.g_cost[j];
        let gl = &tables.g_variance[j];
        for a in 0..n {
            for b in a..n {
                rhos.clear();
                if let (Some(ki), Some(li)) = (
                    negative_interval(gk[a], gk[b], cost_tol),
                    negative_interval(gl[a], gl[b], var_tol),
                ) {
                    // both negativity regions are intervals in the weight;
                    // any overlap pins an exact violation
                    let lo = T::max(ki.0, li.0);
                    let hi = T::min(ki.1, li.1);
                    if lo < hi {
                        rhos.push((lo + hi) * half);
                    }
                    rhos.push((ki.0 + ki.1) * half);
                    rhos.push((li.0 + li.1) * half);
                }
                rhos.extend_from_slice(&rho_grid);
                for &rho in &rhos {
                    let comb_k = rho * gk[a] + (T::one() - rho) * gk[b];
                    let comb_l = rho * gl[a] + (T::one() - rho) * gl[b];
                    certificate = T::min(certificate, T::max(comb_k / cost_tol, comb_l / var_tol));
                    if comb_k < -cost_tol && comb_l < -var_tol {
                        return BoundaryCheck {
                            is_gne: false,
                            certificate,
                            violation: Some(GneViolation {
                                type_index: j,
                                u_a: tables.probe[a],
                                u_b: tables.probe[b],
                                rho,
                            }),
                        };
                    }
                }
            }
        }
    }
    BoundaryCheck {
        is_gne: true,
        certificate,
        violation: None,
    }
}

fn deviation_tables<T: Scalar>(
    params: &ValidatedParams<T>,
    pair: &DiracPair<T>,
    settings: &GneSettings,
) -> Result<(DeviationTables<T>, StationarityCheck<T>), GneError> {
    let probe = dynamics::action_grid(params, settings.probe_points);
    let ctx = CostContext::new(
        params,
        &DiscreteProfile::dirac(params, pair),
        settings.ode_steps,
    )?;
    let cost_tol = c::<T>(COST_DEV_TOL);
    let var_tol = c::<T>(VARIANCE_DEV_TOL);

    let mut tables = DeviationTables {
        probe: probe.clone(),
        g_cost: [Vec::new(), Vec::new()],
        g_variance: [vec![T::nan(); probe.len()], vec![T::nan(); probe.len()]],
    };
    for j in 0..2 {
        let incumbent = ctx.cost(j, pair.action(j));
        tables.g_cost[j] = probe.iter().map(|&u| ctx.cost(j, u) - incumbent).collect();
    }

    // Quick look at each type's best cost improvement; most contour
    // candidates die right here.
    let head: Vec<(usize, usize)> = (0..2)
        .filter_map(|j| {
            let mut best: Option<(usize, T)> = None;
            for (k, &gk) in tables.g_cost[j].iter().enumerate() {
                if gk < -cost_tol && best.is_none_or(|(_, b)| gk < b) {
                    best = Some((k, gk));
                }
            }
            best.map(|(k, _)| (j, k))
        })
        .collect();
    let head_values: Vec<(usize, usize, T)> = head
        .par_iter()
        .map(|&(j, k)| {
            sensitivity::directional(
                params,
                pair,
                &Deviation::to_action(j, probe[k]),
                settings.ode_steps,
            )
            .map(|s| (j, k, s.d_variance))
        })
        .collect::<Result<_, DynamicsError>>()?;
    for (j, k, gl) in head_values {
        tables.g_variance[j][k] = gl;
        if gl < -var_tol {
            return Ok((
                tables,
                StationarityCheck {
                    stationary: false,
                    satisfied_type: None,
                    witness: [None, None],
                },
            ));
        }
    }

    // Single-point rejection next: walk probes in order of most negative
    // cost improvement and price their variance derivative lazily.
    for j in 0..2 {
        let mut order: Vec<usize> = (0..probe.len()).collect();
        order.sort_by(|&a, &b| {
            tables.g_cost[j][a]
                .partial_cmp(&tables.g_cost[j][b])
                .expect("finite deviations")
        });
        for chunk in order.chunks(8) {
            if tables.g_cost[j][chunk[0]] >= -cost_tol {
                break; // sorted, the rest improve nothing
            }
            let improving: Vec<usize> = chunk
                .iter()
                .copied()
                .filter(|&k| tables.g_cost[j][k] < -cost_tol && tables.g_variance[j][k].is_nan())
                .collect();
            if improving.is_empty() {
                continue;
            }
            let values: Vec<(usize, T)> = improving
                .par_iter()
                .map(|&k| {
                    sensitivity::directional(
                        params,
                        pair,
                        &Deviation::to_action(j, probe[k]),
                        settings.ode_steps,
                    )
                    .map(|s| (k, s.d_variance))
                })
                .collect::<Result<_, DynamicsError>>()?;
            for (k, gl) in values {
                tables.g_variance[j][k] = gl;
                if gl < -var_tol {
                    // found a single-point violation, no need to fill further
                    return Ok((
                        tables,
                        StationarityCheck {
                            stationary: false,
                            satisfied_type: None,
                            witness: [None, None],
                        },
                    ));
                }
            }
        }
    }

    // Candidate survived the necessary filter; complete the tables.
    for j in 0..2 {
        let missing: Vec<usize> = (0..probe.len())
            .filter(|&k| tables.g_variance[j][k].is_nan())
            .collect();
        let values: Vec<(usize, T)> = missing
            .par_iter()
            .map(|&k| {
                sensitivity::directional(
                    params,
                    pair,
                    &Deviation::to_action(j, probe[k]),
                    settings.ode_steps,
                )
                .map(|s| (k, s.d_variance))
            })
            .collect::<Result<_, DynamicsError>>()?;
        for (k, gl) in values {
            tables.g_variance[j][k] = gl;
        }
    }

    let report = sensitivity::SensitivityReport {
        base: *pair,
        probe: tables.probe.clone(),
        g_cost: tables.g_cost.clone(),
        g_variance: tables.g_variance.clone(),
        d_exposure: [Vec::new(), Vec::new()],
    };
    let stationarity = sensitivity::variance_stationary(&report, c::<T>(VARIANCE_DEV_TOL));
    Ok((tables, stationarity))
}

/// Two-point deviation test at a contour candidate.
///
/// Returns `SingularPoint` when the pair is variance stationary, in which
/// case the test is inconclusive and the candidate should be reported as
/// unclassified rather than accepted or rejected.
pub fn check_gne_boundary<T: Scalar>(
    params: &ValidatedParams<T>,
    pair: &DiracPair<T>,
    settings: &GneSettings,
) -> Result<BoundaryCheck<T>, GneError> {
    let (tables, stationarity) = deviation_tables(params, pair, settings)?;
    // a lazily-found single-point violation leaves gaps in the tables
    let filled = tables
        .g_variance
        .iter()
        .all(|v| v.iter().all(|x| !x.is_nan()));
    if !filled {
        return Ok(two_point_test_partial(&tables));
    }
    if stationarity.stationary {
        return Err(GneError::SingularPoint);
    }
    Ok(two_point_test(&tables, settings.rho_points))
}

/// Verdict when a single-point violation short-circuited the table fill.
fn two_point_test_partial<T: Scalar>(tables: &DeviationTables<T>) -> BoundaryCheck<T> {
    let cost_tol = c::<T>(COST_DEV_TOL);
    let var_tol = c::<T>(VARIANCE_DEV_TOL);
    let mut certificate = T::infinity();
    let mut violation = None;
    for j in 0..2 {
        for (k, (&gk, &gl)) in tables.g_cost[j]
            .iter()
            .zip(&tables.g_variance[j])
            .enumerate()
        {
            if gl.is_nan() {
                continue;
            }
            let margin = T::max(gk / cost_tol, gl / var_tol);
            certificate = T::min(certificate, margin);
            if gk < -cost_tol && gl < -var_tol && violation.is_none() {
                violation = Some(GneViolation {
                    type_index: j,
                    u_a: tables.probe[k],
                    u_b: tables.probe[k],
                    rho: T::one(),
                });
            }
        }
    }
    BoundaryCheck {
        is_gne: false,
        certificate,
        violation,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GneKind {
    /// Slack bound: an unconstrained equilibrium with `V < C`.
    Interior,
    /// Tight bound: contour point passing the two-point deviation test.
    Boundary,
    /// Contour point that is variance stationary, where the two-point test
    /// does not apply; kept visible instead of silently dropped.
    SingularUnclassified,
}

/// One generalized equilibrium (or flagged candidate) of the scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GneRecord<T> {
    pub pair: DiracPair<T>,
    pub variance: T,
    pub bound: T,
    pub kind: GneKind,
    pub nonsingular: bool,
    pub cost: [T; 2],
    pub prevalence: T,
    pub certificate: Option<T>,
}

/// Result of a full constrained-game scan.
#[derive(Debug, Clone, PartialEq)]
pub struct GneOutcome<T> {
    pub records: Vec<GneRecord<T>>,
    /// Contour location tolerance, when the bound was reachable on the grid.
    pub contour_tolerance: Option<T>,
    pub grid: VarianceGrid<T>,
}

fn pair_stats<T: Scalar>(
    params: &ValidatedParams<T>,
    pair: &DiracPair<T>,
    steps: usize,
) -> Result<(T, [T; 2], T), DynamicsError> {
    let report = costs::cost_report(params, &DiscreteProfile::dirac(params, pair), steps)?;
    Ok((
        report.variance,
        [report.jbar1, report.jbar2],
        report.prevalence,
    ))
}

/// Scans for every generalized equilibrium under the bound `V <= C`.
///
/// Interior records are the unconstrained Dirac-pair equilibria (the corner
/// profiles) whose variance clears the bound; boundary records come from the
/// contour scan.
pub fn find_gne<T: Scalar>(
    params: &ValidatedParams<T>,
    bound: T,
    settings: &GneSettings,
) -> Result<GneOutcome<T>, DynamicsError> {
    let grid = variance_grid(params, settings.grid_resolution, settings.ode_steps)?;
    find_gne_with_grid(params, bound, settings, &grid)
}

fn find_gne_with_grid<T: Scalar>(
    params: &ValidatedParams<T>,
    bound: T,
    settings: &GneSettings,
    grid: &VarianceGrid<T>,
) -> Result<GneOutcome<T>, DynamicsError> {
    let mut records: Vec<GneRecord<T>> = Vec::new();
    let var_tol = c::<T>(VARIANCE_DEV_TOL);

    // Interior: corner equilibria of the unconstrained game are the only
    // Dirac-representable ones; keep those whose variance clears the bound.
    let nash_settings = NashSettings {
        ode_steps: settings.ode_steps,
        ..NashSettings::default()
    };
    for record in nash::find_pure(params, &nash_settings)? {
        let action = |tilde: T| {
            if tilde == T::zero() {
                params.u_min
            } else {
                params.u_max
            }
        };
        let pair = DiracPair {
            u1: action(record.tilde_u1),
            u2: action(record.tilde_u2),
        };
        let (variance, cost, prevalence) = pair_stats(params, &pair, settings.ode_steps)?;
        if variance < bound - var_tol {
            let report = sensitivity::probe_report(
                params,
                &pair,
                settings.probe_points,
                settings.ode_steps,
            )?;
            let stationarity = sensitivity::variance_stationary(&report, var_tol);
            records.push(GneRecord {
                pair,
                variance,
                bound,
                kind: GneKind::Interior,
                nonsingular: !stationarity.stationary,
                cost,
                prevalence,
                certificate: None,
            });
        }
    }

    // Boundary: contour candidates passing the two-point test.
    let contour = match contour_candidates(grid, bound) {
        Ok(set) => Some(set),
        Err(GneError::EmptyContour) => None,
        Err(GneError::Dynamics(e)) => return Err(e),
        Err(GneError::SingularPoint) => unreachable!("contour scan cannot be singular"),
    };
    if let Some(contour) = &contour {
        let checked: Vec<Option<GneRecord<T>>> = contour
            .candidates
            .par_iter()
            .map(|pair| -> Result<Option<GneRecord<T>>, DynamicsError> {
                let (variance, cost, prevalence) = pair_stats(params, pair, settings.ode_steps)?;
                // a cell center can stray from the crossing it flags; keep
                // the contract that boundary records sit on the contour
                if (variance - bound).abs() > contour.tolerance {
                    return Ok(None);
                }
                match check_gne_boundary(params, pair, settings) {
                    Ok(check) if check.is_gne => Ok(Some(GneRecord {
                        pair: *pair,
                        variance,
                        bound,
                        kind: GneKind::Boundary,
                        nonsingular: true,
                        cost,
                        prevalence,
                        certificate: Some(check.certificate),
                    })),
                    Ok(_) => Ok(None),
                    Err(GneError::SingularPoint) => Ok(Some(GneRecord {
                        pair: *pair,
                        variance,
                        bound,
                        kind: GneKind::SingularUnclassified,
                        nonsingular: false,
                        cost,
                        prevalence,
                        certificate: None,
                    })),
                    Err(GneError::Dynamics(e)) => Err(e),
                    Err(GneError::EmptyContour) => unreachable!("check does not scan contours"),
                }
            })
            .collect::<Result<_, _>>()?;
        records.extend(checked.into_iter().flatten());
    }

    records.sort_by(|a, b| {
        (a.pair.u1, a.pair.u2)
            .partial_cmp(&(b.pair.u1, b.pair.u2))
            .expect("actions are finite")
    });
    Ok(GneOutcome {
        records,
        contour_tolerance: contour.map(|set| set.tolerance),
        grid: grid.clone(),
    })
}

/// Summary of one bound value in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSweepRow<T> {
    pub bound: T,
    pub gne_count: usize,
    pub cost_min: Option<[T; 2]>,
    pub cost_max: Option<[T; 2]>,
    pub prevalence_mean: Option<T>,
}

/// Reruns the scan for each bound, sharing one variance grid.
///
/// Statistics cover boundary and interior records but not unclassified ones.
pub fn sweep_bounds<T: Scalar>(
    params: &ValidatedParams<T>,
    bounds: &[T],
    settings: &GneSettings,
) -> Result<Vec<BoundSweepRow<T>>, DynamicsError> {
    let grid = variance_grid(params, settings.grid_resolution, settings.ode_steps)?;
    let mut rows = Vec::with_capacity(bounds.len());
    for &bound in bounds {
        let outcome = find_gne_with_grid(params, bound, settings, &grid)?;
        let classified: Vec<&GneRecord<T>> = outcome
            .records
            .iter()
            .filter(|r| r.kind != GneKind::SingularUnclassified)
            .collect();
        let row = if classified.is_empty() {
            BoundSweepRow {
                bound,
                gne_count: 0,
                cost_min: None,
                cost_max: None,
                prevalence_mean: None,
            }
        } else {
            let mut cost_min = classified[0].cost;
            let mut cost_max = classified[0].cost;
            let mut prevalence = T::zero();
            for r in &classified {
                for j in 0..2 {
                    cost_min[j] = T::min(cost_min[j], r.cost[j]);
                    cost_max[j] = T::max(cost_max[j], r.cost[j]);
                }
                prevalence = prevalence + r.prevalence;
            }
            BoundSweepRow {
                bound,
                gne_count: classified.len(),
                cost_min: Some(cost_min),
                cost_max: Some(cost_max),
                prevalence_mean: Some(prevalence / crate::float::cu(classified.len())),
            }
        };
        rows.push(row);
    }
    Ok(rows)
}

/// Unconstrained equilibria of the two-point game whose variance clears the
/// bound; these remain equilibria of the constrained game.
pub fn nash_within_bound<T: Scalar>(
    params: &ValidatedParams<T>,
    bound: T,
    nash_settings: &NashSettings<T>,
) -> Result<Vec<(nash::EquilibriumRecord<T>, T)>, DynamicsError> {
    let mut kept = Vec::new();
    for record in nash::enumerate_all(params, nash_settings)? {
        let profile = DiscreteProfile::two_point(params, &record.profile());
        let variance = costs::variance(params, &profile, nash_settings.ode_steps)?;
        if variance < bound - c::<T>(VARIANCE_DEV_TOL) {
            kept.push((record, variance));
        }
    }
    Ok(kept)
}
