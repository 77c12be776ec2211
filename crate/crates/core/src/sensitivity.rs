//! Directional derivatives of exposure, costs, and variance under small
//! group deviations from a Dirac action pair.
//!
//! The base profile puts all type-`j` mass on one action `u_j`. A vanishing
//! group of type `j` switching to the mixed strategy `sum_k w_k d(v_k)`
//! perturbs the coupling term by
//!
//! ```text
//! phi(t) = sum_k w_k v_k I_jv_k(t) - u_j I_ju_j(t)
//! ```
//!
//! which drives a five-state linear time-varying system alongside the base
//! dynamics. The probe compartments `(S_jv, I_jv)` and the linearized states
//! are co-integrated with the base system on one grid, so every coefficient
//! is evaluated exactly where the stepper needs it.
//!
//! Two conventions are easy to get wrong and are pinned by tests against
//! finite differences of the full nonlinear dynamics:
//!
//! * the forcing carries the action weights (`v_k I_jv_k`, not the bare
//!   difference of infection probabilities), matching the derivative of the
//!   coupling integral;
//! * the exposure derivative is `DF = r * x5(T)`, with `x5` the sensitivity
//!   of the cumulative exposure state `z`.

use rayon::prelude::*;
use serde::Serialize;

use crate::costs::CostContext;
use crate::dynamics::{self, DynamicsError};
use crate::float::{c, Scalar};
use crate::ode::rk4;
use crate::params::ValidatedParams;
use crate::profile::DiracPair;

/// Stationarity tolerance in variance units.
pub const STATIONARY_TOL: f64 = 1e-7;

/// A deviation of a vanishing group of type `type_index` agents to the mixed
/// strategy placing weight `w_k` on action `v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Deviation<T> {
    pub type_index: usize,
    atoms: Vec<(T, T)>,
}

impl<T: Scalar> Deviation<T> {
    /// Deviation of a type-`j` group to the single action `u`.
    pub fn to_action(type_index: usize, u: T) -> Self {
        Deviation {
            type_index,
            atoms: vec![(u, T::one())],
        }
    }

    /// Deviation to a finite mixture; weights must be nonnegative and sum
    /// to one.
    pub fn mixture(type_index: usize, atoms: &[(T, T)]) -> Self {
        let total: T = atoms.iter().fold(T::zero(), |acc, &(_, w)| acc + w);
        assert!(
            (total - T::one()).abs() <= c(1e-9),
            "mixture weights must sum to 1"
        );
        Deviation {
            type_index,
            atoms: atoms.to_vec(),
        }
    }

    pub fn atoms(&self) -> &[(T, T)] {
        &self.atoms
    }
}

/// The linearized states over the shared time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedState<T> {
    pub times: Vec<T>,
    /// `x[0..4]` perturb `S_1, S_2, I_1, I_2` of the base pair; `x[4]`
    /// perturbs the cumulative exposure `z`.
    pub x: [Vec<T>; 5],
    /// `x5(T)`, the terminal exposure sensitivity.
    pub terminal: T,
}

/// Joint layout: base pair states, probe compartments, linearized states.
struct JointLayout {
    companions: usize,
    lin: usize,
}

impl JointLayout {
    // base: S1 I1 S2 I2 z = 0..5
    const BASE_S: [usize; 2] = [0, 2];
    const BASE_I: [usize; 2] = [1, 3];
    const BASE_Z: usize = 4;

    fn new(companions: usize) -> Self {
        JointLayout {
            companions,
            lin: 5 + 2 * companions,
        }
    }

    fn comp_s(&self, k: usize) -> usize {
        5 + 2 * k
    }

    fn comp_i(&self, k: usize) -> usize {
        5 + 2 * k + 1
    }

    fn lin(&self, idx: usize) -> usize {
        self.lin + idx
    }

    fn len(&self) -> usize {
        self.lin + 5
    }
}

/// Atom of the deviation with its infection-state source.
enum AtomSource {
    /// The atom sits on the incumbent action; its compartments are the base's.
    Base,
    /// Dedicated probe compartments at companion slot `k`.
    Companion(usize),
}

struct JointSystem<'a, T> {
    params: &'a ValidatedParams<T>,
    base: &'a DiracPair<T>,
    dev_type: usize,
    atoms: Vec<(T, T, AtomSource)>,
    layout: JointLayout,
}

impl<'a, T: Scalar> JointSystem<'a, T> {
    fn new(params: &'a ValidatedParams<T>, base: &'a DiracPair<T>, dev: &Deviation<T>) -> Self {
        let incumbent = base.action(dev.type_index);
        let mut atoms = Vec::with_capacity(dev.atoms.len());
        let mut companions = 0usize;
        for &(v, w) in &dev.atoms {
            if v == incumbent {
                atoms.push((v, w, AtomSource::Base));
            } else {
                atoms.push((v, w, AtomSource::Companion(companions)));
                companions += 1;
            }
        }
        JointSystem {
            params,
            base,
            dev_type: dev.type_index,
            atoms,
            layout: JointLayout::new(companions),
        }
    }

    fn initial_state(&self) -> Vec<T> {
        let p = self.params;
        let mut y = vec![T::zero(); self.layout.len()];
        for j in 0..2 {
            y[JointLayout::BASE_S[j]] = T::one() - p.i0;
            y[JointLayout::BASE_I[j]] = p.i0;
        }
        for k in 0..self.layout.companions {
            y[self.layout.comp_s(k)] = T::one() - p.i0;
            y[self.layout.comp_i(k)] = p.i0;
        }
        y
    }

    fn rhs(&self, y: &[T], dy: &mut [T]) {
        let p = self.params;
        let l = &self.layout;
        let u = [self.base.u1, self.base.u2];
        let i_free =
            p.n[0] * u[0] * y[JointLayout::BASE_I[0]] + p.n[1] * u[1] * y[JointLayout::BASE_I[1]];

        for j in 0..2 {
            let s = y[JointLayout::BASE_S[j]];
            let incidence = p.r * u[j] * s * i_free;
            dy[JointLayout::BASE_S[j]] = -incidence;
            dy[JointLayout::BASE_I[j]] = incidence - p.alpha[j] * y[JointLayout::BASE_I[j]];
        }
        dy[JointLayout::BASE_Z] = i_free;

        // probe compartments ride the base coupling
        let alpha_dev = p.alpha[self.dev_type];
        for (v, _, source) in &self.atoms {
            if let AtomSource::Companion(k) = source {
                let s = y[l.comp_s(*k)];
                let incidence = p.r * *v * s * i_free;
                dy[l.comp_s(*k)] = -incidence;
                dy[l.comp_i(*k)] = incidence - alpha_dev * y[l.comp_i(*k)];
            }
        }

        // deviation forcing: the action-weighted infection difference
        let incumbent_i = y[JointLayout::BASE_I[self.dev_type]];
        let incumbent_u = u[self.dev_type];
        let mut forcing = -incumbent_u * incumbent_i;
        for (v, w, source) in &self.atoms {
            let i_probe = match source {
                AtomSource::Base => incumbent_i,
                AtomSource::Companion(k) => y[l.comp_i(*k)],
            };
            forcing = forcing + *w * *v * i_probe;
        }

        let d_free = p.n[0] * u[0] * y[l.lin(2)] + p.n[1] * u[1] * y[l.lin(3)] + forcing;
        for j in 0..2 {
            let s = y[JointLayout::BASE_S[j]];
            let flow = p.r * u[j] * (i_free * y[l.lin(j)] + s * d_free);
            dy[l.lin(j)] = -flow;
            dy[l.lin(2 + j)] = flow - p.alpha[j] * y[l.lin(2 + j)];
        }
        dy[l.lin(4)] = d_free;
    }
}

/// Integrates the joint system, recording the linearized states.
pub fn linearized_state<T: Scalar>(
    params: &ValidatedParams<T>,
    base: &DiracPair<T>,
    dev: &Deviation<T>,
    steps: usize,
) -> Result<LinearizedState<T>, DynamicsError> {
    let system = JointSystem::new(params, base, dev);
    let mut y = system.initial_state();
    let mut out = LinearizedState {
        times: Vec::with_capacity(steps + 1),
        x: std::array::from_fn(|_| Vec::with_capacity(steps + 1)),
        terminal: T::zero(),
    };
    rk4(
        &mut y,
        T::zero(),
        params.horizon,
        steps,
        |_, y, dy| system.rhs(y, dy),
        |_, t, y| {
            out.times.push(t);
            for idx in 0..5 {
                out.x[idx].push(y[system.layout.lin(idx)]);
            }
        },
    );
    let terminal = *out.x[4].last().expect("at least the initial point");
    if !terminal.is_finite() {
        return Err(DynamicsError::NonFinite {
            label: "x5".to_string(),
            value: terminal.to_f64().unwrap_or(f64::NAN),
            t: params.horizon.to_f64().unwrap_or(f64::NAN),
        });
    }
    out.terminal = terminal;
    Ok(out)
}

/// Every directional derivative attached to one deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityAt<T> {
    /// Exposure of the base pair.
    pub exposure: T,
    /// Derivative of the exposure functional, `r * x5(T)`.
    pub d_exposure: T,
    /// Derivative of the deviating type's mean action.
    pub d_mean_action: T,
    /// Derivative of each type's mean cost.
    pub d_cost_mean: [T; 2],
    /// Derivative of the population-weighted mean cost.
    pub d_cost_mean_pop: T,
    /// Derivative of the cost variance.
    pub d_variance: T,
}

impl<T: Scalar> SensitivityAt<T> {
    /// Derivative of the cost of a type-`j_prime` agent playing `v`.
    pub fn d_cost(&self, params: &ValidatedParams<T>, dev_type: usize, j_prime: usize, v: T) -> T {
        let p = params;
        p.g[j_prime] * (T::one() - p.i0) * v * (-v * self.exposure).exp() * self.d_exposure
            - p.s[j_prime][dev_type] * v * self.d_mean_action
    }
}

/// Computes every directional derivative for one deviation with a single
/// joint integration.
pub fn directional<T: Scalar>(
    params: &ValidatedParams<T>,
    base: &DiracPair<T>,
    dev: &Deviation<T>,
    steps: usize,
) -> Result<SensitivityAt<T>, DynamicsError> {
    let system = JointSystem::new(params, base, dev);
    let mut y = system.initial_state();
    rk4(
        &mut y,
        T::zero(),
        params.horizon,
        steps,
        |_, y, dy| system.rhs(y, dy),
        |_, _, _| {},
    );
    let x5 = y[system.layout.lin(4)];
    let z = y[JointLayout::BASE_Z];
    if !x5.is_finite() || !z.is_finite() {
        return Err(DynamicsError::NonFinite {
            label: "x5".to_string(),
            value: x5.to_f64().unwrap_or(f64::NAN),
            t: params.horizon.to_f64().unwrap_or(f64::NAN),
        });
    }

    let exposure = params.r * z;
    let d_exposure = params.r * x5;
    let j = dev.type_index;
    let other = 1 - j;
    let incumbent = base.action(j);

    let d_mean_action = dev
        .atoms
        .iter()
        .fold(-incumbent, |acc, &(v, w)| acc + w * v)
        / params.n[j];

    let ctx = CostContext::with_exposure(params, exposure, [base.u1, base.u2]);
    let mut partial = SensitivityAt {
        exposure,
        d_exposure,
        d_mean_action,
        d_cost_mean: [T::zero(); 2],
        d_cost_mean_pop: T::zero(),
        d_variance: T::zero(),
    };

    let cost_incumbent = ctx.cost(j, incumbent);
    let dev_cost_shift = dev
        .atoms
        .iter()
        .fold(-cost_incumbent, |acc, &(v, w)| acc + w * ctx.cost(j, v));
    partial.d_cost_mean[j] = partial.d_cost(params, j, j, incumbent) + dev_cost_shift / params.n[j];
    partial.d_cost_mean[other] = partial.d_cost(params, j, other, base.action(other));
    partial.d_cost_mean_pop = (params.n[0] * partial.d_cost_mean[0]
        + params.n[1] * partial.d_cost_mean[1])
        / params.total_mass();

    // variance derivative, deviating-type part then the other type's part
    let jbar = (params.n[0] * ctx.cost(0, base.u1) + params.n[1] * ctx.cost(1, base.u2))
        / params.total_mass();
    let dev_incumbent = cost_incumbent - jbar;
    let spread_shift = dev
        .atoms
        .iter()
        .fold(-(dev_incumbent * dev_incumbent), |acc, &(v, w)| {
            let d = ctx.cost(j, v) - jbar;
            acc + w * d * d
        });
    let two = c::<T>(2.0);
    let dv_own = spread_shift
        + two
            * params.n[j]
            * dev_incumbent
            * (partial.d_cost(params, j, j, incumbent) - partial.d_cost_mean_pop);
    let other_dev = ctx.cost(other, base.action(other)) - jbar;
    let dv_other = two
        * params.n[other]
        * other_dev
        * (partial.d_cost(params, j, other, base.action(other)) - partial.d_cost_mean_pop);
    partial.d_variance = (dv_own + dv_other) / params.total_mass();
    Ok(partial)
}

/// Derivative of the exposure functional for a single-action deviation.
pub fn directional_exposure<T: Scalar>(
    params: &ValidatedParams<T>,
    base: &DiracPair<T>,
    j: usize,
    u: T,
    steps: usize,
) -> Result<T, DynamicsError> {
    Ok(directional(params, base, &Deviation::to_action(j, u), steps)?.d_exposure)
}

/// Variance derivative for a single-action deviation; this is `g^L_j(u)`.
pub fn g_variance_at<T: Scalar>(
    params: &ValidatedParams<T>,
    base: &DiracPair<T>,
    j: usize,
    u: T,
    steps: usize,
) -> Result<T, DynamicsError> {
    Ok(directional(params, base, &Deviation::to_action(j, u), steps)?.d_variance)
}

/// Deviation functions sampled on a probe grid.
///
/// `g_cost[j][k]` is the mean-cost change of a type-`j` group deviating to
/// probe action `k` (the cost difference against the incumbent action), and
/// `g_variance[j][k]` the corresponding variance derivative.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityReport<T> {
    pub base: DiracPair<T>,
    pub probe: Vec<T>,
    pub g_cost: [Vec<T>; 2],
    pub g_variance: [Vec<T>; 2],
    pub d_exposure: [Vec<T>; 2],
}

impl<T: Scalar> SensitivityReport<T> {
    /// CSV export with columns `u, gK1, gL1, gK2, gL2, dF1, dF2`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "u,gK1,gL1,gK2,gL2,dF1,dF2")?;
        for (k, &u) in self.probe.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                u,
                self.g_cost[0][k],
                self.g_variance[0][k],
                self.g_cost[1][k],
                self.g_variance[1][k],
                self.d_exposure[0][k],
                self.d_exposure[1][k],
            )?;
        }
        Ok(())
    }
}

/// Evaluates the deviation functions of both types over a uniform probe grid.
pub fn probe_report<T: Scalar>(
    params: &ValidatedParams<T>,
    base: &DiracPair<T>,
    probe_points: usize,
    steps: usize,
) -> Result<SensitivityReport<T>, DynamicsError> {
    assert!(probe_points >= 2, "probe grid needs at least two points");
    let probe = dynamics::action_grid(params, probe_points);
    let ctx = CostContext::new(
        params,
        &crate::profile::DiscreteProfile::dirac(params, base),
        steps,
    )?;

    let mut g_cost: [Vec<T>; 2] = [Vec::new(), Vec::new()];
    let mut g_variance: [Vec<T>; 2] = [Vec::new(), Vec::new()];
    let mut d_exposure: [Vec<T>; 2] = [Vec::new(), Vec::new()];
    for j in 0..2 {
        let incumbent_cost = ctx.cost(j, base.action(j));
        g_cost[j] = probe
            .iter()
            .map(|&u| ctx.cost(j, u) - incumbent_cost)
            .collect();
        let derivatives: Vec<(T, T)> = probe
            .par_iter()
            .map(|&u| {
                directional(params, base, &Deviation::to_action(j, u), steps)
                    .map(|s| (s.d_variance, s.d_exposure))
            })
            .collect::<Result<_, _>>()?;
        g_variance[j] = derivatives.iter().map(|&(v, _)| v).collect();
        d_exposure[j] = derivatives.iter().map(|&(_, f)| f).collect();
    }
    Ok(SensitivityReport {
        base: *base,
        probe,
        g_cost,
        g_variance,
        d_exposure,
    })
}

/// Outcome of the variance-stationarity test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityCheck<T> {
    pub stationary: bool,
    /// Type whose variance derivatives are all nonnegative, when stationary.
    pub satisfied_type: Option<usize>,
    /// Per type, the most negative `(probe action, g^L)` below tolerance.
    pub witness: [Option<(T, T)>; 2],
}

/// A pair is variance stationary when for at least one type every probed
/// deviation has a nonnegative variance derivative.
pub fn variance_stationary<T: Scalar>(
    report: &SensitivityReport<T>,
    tol: T,
) -> StationarityCheck<T> {
    let mut witness: [Option<(T, T)>; 2] = [None, None];
    let mut satisfied_type = None;
    for (j, slot) in witness.iter_mut().enumerate() {
        let mut worst: Option<(T, T)> = None;
        for (&u, &gl) in report.probe.iter().zip(&report.g_variance[j]) {
            if gl < -tol && worst.is_none_or(|(_, w)| gl < w) {
                worst = Some((u, gl));
            }
        }
        *slot = worst;
        if worst.is_none() && satisfied_type.is_none() {
            satisfied_type = Some(j);
        }
    }
    StationarityCheck {
        stationary: satisfied_type.is_some(),
        satisfied_type,
        witness,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ValidatedParams;
    use crate::profile::DiscreteProfile;
    use crate::testkit::example3;

    const STEPS: usize = 3000;

    fn base44() -> DiracPair<f64> {
        DiracPair { u1: 0.44, u2: 0.29 }
    }

    #[test]
    fn null_deviation_vanishes_identically() {
        let params = example3();
        let base = base44();
        for j in 0..2 {
            let dev = Deviation::to_action(j, base.action(j));
            let state = linearized_state(&params, &base, &dev, 500).unwrap();
            assert_eq!(state.terminal, 0.0);
            for series in &state.x {
                assert!(series.iter().all(|&v| v == 0.0));
            }
            let s = directional(&params, &base, &dev, 500).unwrap();
            assert_eq!(s.d_exposure, 0.0);
            assert_eq!(s.d_mean_action, 0.0);
            assert_eq!(s.d_cost_mean, [0.0, 0.0]);
            assert_eq!(s.d_variance, 0.0);
        }
    }

    #[test]
    fn zero_infection_rate_has_closed_form_terminal() {
        let mut p = *example3();
        p.r = 0.0;
        let params = ValidatedParams::trusted(p);
        let base = base44();
        let (j, u) = (1usize, 0.7);
        let state = linearized_state(&params, &base, &Deviation::to_action(j, u), 4000).unwrap();
        // with r = 0 the coupling dies and x5 integrates the weighted
        // difference of two exponentials with identical initial value
        let alpha = params.alpha[j];
        let expected =
            (u - base.action(j)) * params.i0 * (1.0 - (-alpha * params.horizon).exp()) / alpha;
        assert!(
            (state.terminal - expected).abs() < 1e-9,
            "x5(T) = {}, closed form = {expected}",
            state.terminal
        );
        // F carries the factor r, so its derivative vanishes here
        let s = directional(&params, &base, &Deviation::to_action(j, u), 4000).unwrap();
        assert_eq!(s.d_exposure, 0.0);
    }

    #[test]
    fn exposure_derivative_tracks_contact_direction() {
        let params = example3();
        let base = base44();
        for (u, sign) in [(0.35, 1.0), (0.23, -1.0)] {
            let df = directional_exposure(&params, &base, 1, u, STEPS).unwrap();
            assert!(df.signum() == sign, "dF({u}) = {df}, expected sign {sign}");
        }
    }

    #[test]
    fn social_term_drops_when_sociability_is_zero() {
        let mut p = *example3();
        p.s = [[0.0, 0.0], [0.0, 0.0]];
        let params = p.validate().unwrap();
        let base = base44();
        let s = directional(&params, &base, &Deviation::to_action(0, 0.7), STEPS).unwrap();
        for j_prime in 0..2 {
            let v = 0.5;
            let expected =
                params.g[j_prime] * (1.0 - params.i0) * v * (-v * s.exposure).exp() * s.d_exposure;
            assert!((s.d_cost(&params, 0, j_prime, v) - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn mixture_derivatives_are_linear_in_the_deviation() {
        let params = example3();
        let base = base44();
        let (u_a, u_b, rho) = (0.2, 0.8, 0.37);
        for j in 0..2 {
            let at_a = directional(&params, &base, &Deviation::to_action(j, u_a), STEPS).unwrap();
            let at_b = directional(&params, &base, &Deviation::to_action(j, u_b), STEPS).unwrap();
            let mix = directional(
                &params,
                &base,
                &Deviation::mixture(j, &[(u_a, rho), (u_b, 1.0 - rho)]),
                STEPS,
            )
            .unwrap();
            let lin = |a: f64, b: f64| rho * a + (1.0 - rho) * b;
            assert!((mix.d_exposure - lin(at_a.d_exposure, at_b.d_exposure)).abs() < 1e-9);
            for t in 0..2 {
                assert!(
                    (mix.d_cost_mean[t] - lin(at_a.d_cost_mean[t], at_b.d_cost_mean[t])).abs()
                        < 1e-9
                );
            }
            assert!((mix.d_variance - lin(at_a.d_variance, at_b.d_variance)).abs() < 1e-9);
        }
    }

    #[test]
    fn probe_cost_differences_match_incumbent_gap() {
        let params = example3();
        let base = base44();
        let report = probe_report(&params, &base, 51, STEPS).unwrap();
        let ctx =
            CostContext::new(&params, &DiscreteProfile::dirac(&params, &base), STEPS).unwrap();
        for j in 0..2 {
            for (k, &u) in report.probe.iter().enumerate() {
                let direct = ctx.cost(j, u) - ctx.cost(j, base.action(j));
                assert!((report.g_cost[j][k] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deviation_functions_have_no_jumps() {
        let params = example3();
        let report = probe_report(&params, &base44(), 201, 2000).unwrap();
        for j in 0..2 {
            for series in [&report.g_cost[j], &report.g_variance[j]] {
                let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let range = (hi - lo).max(1e-12);
                for w in series.windows(2) {
                    assert!(
                        (w[1] - w[0]).abs() <= 0.1 * range,
                        "jump {} against range {range}",
                        (w[1] - w[0]).abs()
                    );
                }
            }
        }
    }

    #[test]
    fn incumbent_probe_column_is_zero() {
        let params = example3();
        // base actions taken from the probe grid so the null column is hit
        // bit-exactly
        let grid = crate::dynamics::action_grid(&params, 41);
        let base = DiracPair {
            u1: grid[20],
            u2: grid[10],
        };
        let report = probe_report(&params, &base, 41, 2000).unwrap();
        for j in 0..2 {
            let idx = report
                .probe
                .iter()
                .position(|&u| u == base.action(j))
                .expect("incumbent on grid");
            assert_eq!(report.g_cost[j][idx], 0.0);
            assert_eq!(report.g_variance[j][idx], 0.0);
        }
    }

    #[test]
    fn central_pair_is_not_variance_stationary() {
        // Both types admit variance-decreasing deviations there, so the
        // two-point equilibrium test applies at this base.
        let params = example3();
        let report = probe_report(&params, &base44(), 101, 2500).unwrap();
        let check = variance_stationary(&report, STATIONARY_TOL);
        assert!(!check.stationary);
        assert!(check.witness[0].is_some() && check.witness[1].is_some());
    }

    #[test]
    fn report_csv_has_one_row_per_probe() {
        let params = example3();
        let report = probe_report(&params, &base44(), 11, 800).unwrap();
        let mut buf = Vec::new();
        report.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "u,gK1,gL1,gK2,gL2,dF1,dF2");
        assert_eq!(lines.count(), 11);
    }

    #[test]
    fn stationarity_is_a_disjunction_over_types() {
        let params = example3();
        let base = base44();
        let mut report = probe_report(&params, &base, 11, 800).unwrap();
        report.g_variance[0] = vec![0.1; 11];
        report.g_variance[1] = vec![-0.2; 11];
        let check = variance_stationary(&report, 1e-7);
        assert!(check.stationary);
        assert_eq!(check.satisfied_type, Some(0));
        assert!(check.witness[1].is_some());

        report.g_variance[0][3] = -1e-3;
        let check = variance_stationary(&report, 1e-7);
        assert!(!check.stationary);
        assert!(check.witness[0].is_some() && check.witness[1].is_some());

        report.g_variance[1] = vec![0.0; 11];
        let check = variance_stationary(&report, 1e-7);
        assert!(check.stationary);
        assert_eq!(check.satisfied_type, Some(1));
    }

    #[test]
    fn zero_variance_pair_is_stationary() {
        // With the two types made (numerically) identical and pooled on one
        // action, every realized cost coincides: the variance sits at its
        // global minimum 0, so no deviation of either type can decrease it.
        let mut p = *example3();
        p.n = [1.0, 1.0];
        p.alpha = [1.0, 1.0];
        p.g = [0.7, 0.7 + 1e-9];
        p.s = [[2.0, 0.5], [2.0, 0.5]];
        let params = p.validate().unwrap();
        let steps = 2000;
        let pair = DiracPair { u1: 0.4, u2: 0.4 };
        let v = crate::costs::variance(&params, &DiscreteProfile::dirac(&params, &pair), steps)
            .unwrap();
        assert!(v < 1e-15, "variance = {v}");
        let report = probe_report(&params, &pair, 51, steps).unwrap();
        let check = variance_stationary(&report, STATIONARY_TOL);
        assert!(check.stationary, "witnesses: {:?}", check.witness);
        // with every cost at the mean, the linear terms of the variance
        // derivative vanish and only the deviators' quadratic spread is left
        let ctx =
            CostContext::new(&params, &DiscreteProfile::dirac(&params, &pair), steps).unwrap();
        let jbar = (ctx.cost(0, pair.u1) + ctx.cost(1, pair.u2)) / 2.0;
        for j in 0..2 {
            for (k, &u) in report.probe.iter().enumerate() {
                let quadratic = (ctx.cost(j, u) - jbar).powi(2) / params.total_mass();
                assert!(
                    (report.g_variance[j][k] - quadratic).abs() < 1e-8,
                    "gL {} vs quadratic term {quadratic}",
                    report.g_variance[j][k]
                );
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences_of_the_full_dynamics() {
        // Spot check of the linearized system against central differences of
        // the nonlinear pipeline; the acceptance suite randomizes this.
        let params = example3();
        let base = base44();
        let steps = 4000;
        let eps = 1e-5;
        for (j, u) in [(0usize, 0.9f64), (1, 0.1)] {
            let perturbed = |e: f64| {
                let mut support = [vec![base.u1], vec![base.u2]];
                let mut mass = [vec![params.n[0]], vec![params.n[1]]];
                support[j] = vec![base.action(j), u];
                mass[j] = vec![params.n[j] - e, e];
                let profile = DiscreteProfile::new_signed(
                    &params,
                    support[0].clone(),
                    mass[0].clone(),
                    support[1].clone(),
                    mass[1].clone(),
                )
                .unwrap();
                let report = crate::costs::cost_report(&params, &profile, steps).unwrap();
                let exposure = crate::dynamics::exposure(&params, &profile, steps).unwrap();
                (exposure, report.jbar1, report.jbar2, report.variance)
            };
            let plus = perturbed(eps);
            let minus = perturbed(-eps);
            let fd = |p: f64, m: f64| (p - m) / (2.0 * eps);
            let s = directional(&params, &base, &Deviation::to_action(j, u), steps).unwrap();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-3 * b.abs().max(1e-8);
            assert!(close(s.d_exposure, fd(plus.0, minus.0)), "dF at ({j}, {u})");
            assert!(close(s.d_cost_mean[0], fd(plus.1, minus.1)), "dJ1 at ({j}, {u})");
            assert!(close(s.d_cost_mean[1], fd(plus.2, minus.2)), "dJ2 at ({j}, {u})");
            assert!(close(s.d_variance, fd(plus.3, minus.3)), "dV at ({j}, {u})");
            // the exposure derivative carries the infection-rate factor; the
            // unscaled sensitivity state alone is off by exactly r
            let unscaled = s.d_exposure / params.r;
            assert!(!close(unscaled, fd(plus.0, minus.0)), "scaling must matter");
        }
    }
}
