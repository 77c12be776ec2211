//! Compartmental dynamics of the epidemic under a fixed action profile.
//!
//! For every type `j` and support point `u` the per-agent probabilities
//! `S_ju` (susceptible) and `I_ju` (infected) evolve as
//!
//! ```text
//! dS_ju/dt = -r u S_ju If(t)
//! dI_ju/dt =  r u S_ju If(t) - alpha_j I_ju
//! dz/dt    =  If(t)
//! ```
//!
//! coupled only through the density of infected agents in public places,
//! `If(t) = sum_j sum_u u * I_ju(t) * mass_j(u)`. Initial conditions are the
//! same at every support point (`S = 1 - I0`, `I = I0`); population masses
//! enter solely through `If`. This per-agent formulation is algebraically
//! identical to baking the mass fractions into the initial conditions, since
//! each per-point subsystem is linear in its initial scaling.
//!
//! The cumulative exposure `z` is integrated as a state rather than recovered
//! by quadrature afterwards, so the exposure functional `F = r z(T)` shares
//! the discretization of everything built on top of it.

use std::io::{self, Write};

use thiserror::Error;

use crate::float::{c, cu, Scalar};
use crate::ode::rk4;
use crate::params::ValidatedParams;
use crate::profile::DiscreteProfile;

/// Fewest RK4 steps accepted for a horizon-length integration.
pub const MIN_STEPS: usize = 10;

/// Default step count for the reference horizon.
pub const DEFAULT_STEPS: usize = 5000;

/// Slack allowed on the probability bounds before an integration is declared
/// divergent. Loose on purpose; property tests pin the tight bound.
const BOUND_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    /// A probability state left `[0, 1]` by more than the slack or stopped
    /// being finite, which signals a step size too coarse for the parameters.
    #[error("state {label} diverged to {value:e} at t = {t} (step size too coarse)")]
    NonFinite { label: String, value: f64, t: f64 },
    #[error("integration needs at least {min} steps, got {got}")]
    TooFewSteps { min: usize, got: usize },
}

/// Time-gridded solution of the compartmental system for one profile.
///
/// Indexing is `s[j][p][k]`: type `j`, support point `p` (in the profile's
/// increasing action order), grid point `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T> {
    pub times: Vec<T>,
    pub s: [Vec<Vec<T>>; 2],
    pub i: [Vec<Vec<T>>; 2],
    /// Density of free infected agents at each grid point.
    pub i_free: Vec<T>,
    /// Cumulative exposure `z(t_k)`.
    pub z: Vec<T>,
}

impl<T: Scalar> Trajectory<T> {
    /// The exposure functional `F = r z(T)`.
    pub fn exposure(&self, params: &ValidatedParams<T>) -> T {
        params.r * *self.z.last().expect("trajectory is never empty")
    }

    /// CSV export: `time, I_f, z`, then `S`/`I` per (type, support point).
    pub fn write_csv<W: Write>(&self, profile: &DiscreteProfile<T>, mut w: W) -> io::Result<()> {
        write!(w, "time,I_f,z")?;
        for j in 0..2 {
            for &u in profile.support(j) {
                write!(w, ",S_{}_u{},I_{}_u{}", j + 1, u, j + 1, u)?;
            }
        }
        writeln!(w)?;
        for k in 0..self.times.len() {
            write!(w, "{},{},{}", self.times[k], self.i_free[k], self.z[k])?;
            for j in 0..2 {
                for p in 0..self.s[j].len() {
                    write!(w, ",{},{}", self.s[j][p][k], self.i[j][p][k])?;
                }
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Flat-state layout: `[S, I]` pairs per (type, point), then `z` last.
struct Layout {
    np: [usize; 2],
    offset: [usize; 2],
    z: usize,
}

impl Layout {
    fn of<T: Scalar>(profile: &DiscreteProfile<T>) -> Self {
        let np = [profile.support(0).len(), profile.support(1).len()];
        let offset = [0, 2 * np[0]];
        Layout {
            np,
            offset,
            z: 2 * (np[0] + np[1]),
        }
    }

    fn s(&self, j: usize, p: usize) -> usize {
        self.offset[j] + 2 * p
    }

    fn i(&self, j: usize, p: usize) -> usize {
        self.offset[j] + 2 * p + 1
    }

    fn len(&self) -> usize {
        self.z + 1
    }
}

fn i_free<T: Scalar>(layout: &Layout, profile: &DiscreteProfile<T>, y: &[T]) -> T {
    let mut total = T::zero();
    for j in 0..2 {
        for (p, (u, m)) in profile.atoms(j).enumerate() {
            total = total + u * m * y[layout.i(j, p)];
        }
    }
    total
}

/// Watches the probability states; records the first divergence.
struct BoundsWatch {
    violation: Option<(String, f64, f64)>,
}

impl BoundsWatch {
    fn new() -> Self {
        BoundsWatch { violation: None }
    }

    fn inspect<T: Scalar>(&mut self, layout: &Layout, t: T, y: &[T]) {
        if self.violation.is_some() {
            return;
        }
        let lo = -c::<T>(BOUND_SLACK);
        let hi = T::one() + c::<T>(BOUND_SLACK);
        for j in 0..2 {
            for p in 0..layout.np[j] {
                for (label, idx) in [("S", layout.s(j, p)), ("I", layout.i(j, p))] {
                    let v = y[idx];
                    if !(v >= lo && v <= hi) {
                        self.violation = Some((
                            format!("{label}_{}[{p}]", j + 1),
                            v.to_f64().unwrap_or(f64::NAN),
                            t.to_f64().unwrap_or(f64::NAN),
                        ));
                        return;
                    }
                }
            }
        }
        if !y[layout.z].is_finite() {
            self.violation = Some((
                "z".to_string(),
                y[layout.z].to_f64().unwrap_or(f64::NAN),
                t.to_f64().unwrap_or(f64::NAN),
            ));
        }
    }

    fn into_result(self) -> Result<(), DynamicsError> {
        match self.violation {
            Some((label, value, t)) => Err(DynamicsError::NonFinite { label, value, t }),
            None => Ok(()),
        }
    }
}

fn initial_state<T: Scalar>(params: &ValidatedParams<T>, layout: &Layout) -> Vec<T> {
    let mut y = vec![T::zero(); layout.len()];
    for j in 0..2 {
        for p in 0..layout.np[j] {
            y[layout.s(j, p)] = T::one() - params.i0;
            y[layout.i(j, p)] = params.i0;
        }
    }
    y
}

fn rhs<T: Scalar>(
    params: &ValidatedParams<T>,
    layout: &Layout,
    profile: &DiscreteProfile<T>,
    y: &[T],
    dy: &mut [T],
) {
    let infected_free = i_free(layout, profile, y);
    for j in 0..2 {
        for (p, u) in profile.support(j).iter().enumerate() {
            let s = y[layout.s(j, p)];
            let i = y[layout.i(j, p)];
            let incidence = params.r * *u * s * infected_free;
            dy[layout.s(j, p)] = -incidence;
            dy[layout.i(j, p)] = incidence - params.alpha[j] * i;
        }
    }
    dy[layout.z] = infected_free;
}

/// Integrates the full system and records the whole trajectory.
pub fn integrate<T: Scalar>(
    params: &ValidatedParams<T>,
    profile: &DiscreteProfile<T>,
    steps: usize,
) -> Result<Trajectory<T>, DynamicsError> {
    if steps < MIN_STEPS {
        return Err(DynamicsError::TooFewSteps {
            min: MIN_STEPS,
            got: steps,
        });
    }
    let layout = Layout::of(profile);
    let mut y = initial_state(params, &layout);

    let grid = steps + 1;
    let mut traj = Trajectory {
        times: Vec::with_capacity(grid),
        s: [
            vec![Vec::with_capacity(grid); layout.np[0]],
            vec![Vec::with_capacity(grid); layout.np[1]],
        ],
        i: [
            vec![Vec::with_capacity(grid); layout.np[0]],
            vec![Vec::with_capacity(grid); layout.np[1]],
        ],
        i_free: Vec::with_capacity(grid),
        z: Vec::with_capacity(grid),
    };
    let mut watch = BoundsWatch::new();

    rk4(
        &mut y,
        T::zero(),
        params.horizon,
        steps,
        |_, y, dy| rhs(params, &layout, profile, y, dy),
        |_, t, y| {
            watch.inspect(&layout, t, y);
            traj.times.push(t);
            for j in 0..2 {
                for p in 0..layout.np[j] {
                    traj.s[j][p].push(y[layout.s(j, p)]);
                    traj.i[j][p].push(y[layout.i(j, p)]);
                }
            }
            traj.i_free.push(i_free(&layout, profile, y));
            traj.z.push(y[layout.z]);
        },
    );
    watch.into_result()?;
    Ok(traj)
}

/// Integrates the system keeping only the terminal state; returns the
/// exposure `F = r z(T)`. This is the hot path of every equilibrium scan.
pub fn exposure<T: Scalar>(
    params: &ValidatedParams<T>,
    profile: &DiscreteProfile<T>,
    steps: usize,
) -> Result<T, DynamicsError> {
    if steps < MIN_STEPS {
        return Err(DynamicsError::TooFewSteps {
            min: MIN_STEPS,
            got: steps,
        });
    }
    let layout = Layout::of(profile);
    let mut y = initial_state(params, &layout);
    let mut watch = BoundsWatch::new();
    rk4(
        &mut y,
        T::zero(),
        params.horizon,
        steps,
        |_, y, dy| rhs(params, &layout, profile, y, dy),
        |_, t, y| watch.inspect(&layout, t, y),
    );
    watch.into_result()?;
    Ok(params.r * y[layout.z])
}

/// Grid of `points` uniformly spaced actions spanning `[u_min, u_max]`,
/// with both interval ends hit exactly.
pub fn action_grid<T: Scalar>(params: &ValidatedParams<T>, points: usize) -> Vec<T> {
    assert!(points >= 2, "an action grid needs at least two points");
    let span = params.action_span();
    let denom = cu::<T>(points - 1);
    (0..points)
        .map(|k| {
            if k == points - 1 {
                params.u_max
            } else {
                params.u_min + span * cu::<T>(k) / denom
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ModelParams;
    use crate::profile::TwoPointProfile;
    use crate::testkit::example1;

    fn two_point(
        params: &crate::params::ValidatedParams<f64>,
        a: f64,
        b: f64,
    ) -> DiscreteProfile<f64> {
        DiscreteProfile::two_point(params, &TwoPointProfile::new(a, b).unwrap())
    }

    #[test]
    fn tiny_seed_means_no_epidemic() {
        // The horizon must stay below the seed's takeoff time, which grows
        // like ln(1/I0) over the early growth rate; at T = 5 a 1e-12 seed
        // cannot ignite even at full contact.
        let mut p = *example1(0.2, 1.0);
        p.i0 = 1e-12;
        p.horizon = 3.5;
        let params = p.validate().unwrap();
        let profile = two_point(&params, 1.0, 1.0);
        let traj = integrate(&params, &profile, 2000).unwrap();
        assert!(traj.exposure(&params) < 1e-6);
        for j in 0..2 {
            for series in &traj.s[j] {
                assert!(*series.last().unwrap() >= 1.0 - 1e-6);
            }
        }
    }

    #[test]
    fn zero_infection_rate_has_closed_form() {
        // r = 0 fails validation (rates must be positive) but the dynamics
        // are well defined there and have a closed form worth pinning.
        let mut p = *example1(0.2, 1.0);
        p.r = 0.0;
        let params = crate::params::ValidatedParams::trusted(p);
        let tp = TwoPointProfile::new(0.3, 0.7).unwrap();
        let profile = two_point(&params, 0.3, 0.7);
        let traj = integrate(&params, &profile, 4000).unwrap();
        // S stays put, I decays at rate alpha, z integrates the decaying I_f.
        let p0 = *traj.s[0][0].last().unwrap();
        assert!((p0 - (1.0 - params.i0)).abs() < 1e-9);
        let t_end = params.horizon;
        let expected_z: f64 = (0..2)
            .map(|j| {
                params.n[j]
                    * tp.mean_action(&params, j)
                    * params.i0
                    * (1.0 - (-params.alpha[j] * t_end).exp())
                    / params.alpha[j]
            })
            .sum();
        let z = *traj.z.last().unwrap();
        assert!(
            (z - expected_z).abs() < 1e-9 * expected_z.max(1.0),
            "z = {z}, closed form = {expected_z}"
        );
        // F carries the factor r, so it vanishes identically here.
        assert_eq!(traj.exposure(&params), 0.0);
    }

    #[test]
    fn exposure_of_full_contact_exceeds_full_distancing() {
        let params = example1(0.2, 1.0);
        let low = exposure(&params, &two_point(&params, 0.0, 0.0), 3000).unwrap();
        let high = exposure(&params, &two_point(&params, 1.0, 1.0), 3000).unwrap();
        assert!(low < high, "low = {low}, high = {high}");
        assert!(low > 0.0);
    }

    #[test]
    fn states_stay_bounded_and_monotone() {
        let params = example1(0.2, 1.0);
        let profile = two_point(&params, 1.0, 1.0);
        let traj = integrate(&params, &profile, DEFAULT_STEPS).unwrap();
        for j in 0..2 {
            for series in traj.s[j].iter().chain(&traj.i[j]) {
                for &v in series {
                    assert!((-1e-9..=1.0 + 1e-9).contains(&v));
                }
            }
            for series in &traj.s[j] {
                for w in series.windows(2) {
                    assert!(w[1] <= w[0] + 1e-12, "S must be nonincreasing");
                }
            }
        }
        for w in traj.z.windows(2) {
            assert!(w[1] >= w[0], "z must be nondecreasing");
        }
        assert_eq!(traj.z[0], 0.0);
        let cap = (params.n[0] + params.n[1]) * params.u_max;
        for &v in &traj.i_free {
            assert!(v >= 0.0 && v <= cap);
        }
    }

    #[test]
    fn higher_contact_points_lose_susceptibles_faster() {
        let params = example1(0.2, 1.0);
        let profile = two_point(&params, 0.5, 0.5);
        let traj = integrate(&params, &profile, 3000).unwrap();
        for j in 0..2 {
            // support is [u_m, u_M]; the low-contact series dominates
            for k in 0..traj.times.len() {
                assert!(traj.s[j][0][k] >= traj.s[j][1][k] - 1e-12);
            }
        }
    }

    #[test]
    fn susceptible_terminal_matches_exposure_closed_form() {
        let params = example1(0.2, 1.0);
        let profile = two_point(&params, 0.6, 0.4);
        let traj = integrate(&params, &profile, DEFAULT_STEPS).unwrap();
        let f = traj.exposure(&params);
        for j in 0..2 {
            for (p, &u) in profile.support(j).iter().enumerate() {
                let expected = (1.0 - params.i0) * (-u * f).exp();
                let got = *traj.s[j][p].last().unwrap();
                assert!(
                    ((got - expected) / expected).abs() < 1e-6,
                    "S_{j}{p}(T) = {got}, closed form = {expected}"
                );
            }
        }
    }

    #[test]
    fn step_halving_shows_fourth_order() {
        let params = example1(0.2, 1.0);
        let profile = two_point(&params, 1.0, 1.0);
        let z = |steps: usize| exposure(&params, &profile, steps).unwrap();
        let (a, b, c) = (z(200), z(400), z(800));
        let order = ((a - b).abs() / (b - c).abs()).log2();
        assert!(order >= 3.5, "measured order {order}");
    }

    #[test]
    fn mass_baked_formulation_matches_per_agent() {
        // Alternative formulation folding the mixing fractions into the
        // initial conditions; I_f must agree with the per-agent system.
        let params = example1(0.2, 1.0);
        let (tu1, tu2) = (0.3, 0.8);
        let profile = two_point(&params, tu1, tu2);
        let steps = 2000;
        let traj = integrate(&params, &profile, steps).unwrap();

        let (u_m, u_max) = (params.u_min, params.u_max);
        let fractions = [[1.0 - tu1, tu1], [1.0 - tu2, tu2]];
        // state: [S1m, S1M, S2m, S2M, I1m, I1M, I2m, I2M, z]
        let mut y = [0.0f64; 9];
        for j in 0..2 {
            for (p, frac) in fractions[j].iter().enumerate() {
                y[2 * j + p] = frac * (1.0 - params.i0);
                y[4 + 2 * j + p] = frac * params.i0;
            }
        }
        let mut i_free_series = Vec::with_capacity(steps + 1);
        let baked_if = |y: &[f64]| {
            params.n[0] * (u_m * y[4] + u_max * y[5]) + params.n[1] * (u_m * y[6] + u_max * y[7])
        };
        crate::ode::rk4(
            &mut y,
            0.0,
            params.horizon,
            steps,
            |_, y, dy| {
                let infected_free = baked_if(y);
                for j in 0..2 {
                    for (p, &u) in [u_m, u_max].iter().enumerate() {
                        let s = y[2 * j + p];
                        let i = y[4 + 2 * j + p];
                        let inc = params.r * u * s * infected_free;
                        dy[2 * j + p] = -inc;
                        dy[4 + 2 * j + p] = inc - params.alpha[j] * i;
                    }
                }
                dy[8] = infected_free;
            },
            |_, _, y| i_free_series.push(baked_if(y)),
        );

        assert_eq!(i_free_series.len(), traj.i_free.len());
        for (a, b) in i_free_series.iter().zip(&traj.i_free) {
            assert!((a - b).abs() <= 1e-10, "I_f mismatch: {a} vs {b}");
        }
    }

    #[test]
    fn coarse_grid_is_reported_not_propagated() {
        let params = example1(0.2, 1.0);
        let profile = two_point(&params, 1.0, 1.0);
        match integrate(&params, &profile, 10) {
            Err(DynamicsError::NonFinite { .. }) => {}
            Ok(traj) => {
                // A 10-step grid on this horizon is either rejected or, if it
                // survives, still respects the loose bound.
                for j in 0..2 {
                    for series in traj.s[j].iter().chain(&traj.i[j]) {
                        for &v in series {
                            assert!((-1e-6..=1.0 + 1e-6).contains(&v));
                        }
                    }
                }
            }
            Err(e) => panic!("unexpected error {e}"),
        }
        assert!(matches!(
            integrate(&params, &profile, 5),
            Err(DynamicsError::TooFewSteps { .. })
        ));
    }

    #[test]
    fn csv_export_lists_every_support_column() {
        let params = example1(0.2, 1.0);
        let profile = two_point(&params, 0.5, 0.5);
        let traj = integrate(&params, &profile, 50).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&profile, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let header = text.lines().next().unwrap();
        assert_eq!(
            header,
            "time,I_f,z,S_1_u0.1,I_1_u0.1,S_1_u0.9,I_1_u0.9,S_2_u0.1,I_2_u0.1,S_2_u0.9,I_2_u0.9"
        );
        assert_eq!(text.lines().count(), 52);
    }

    #[test]
    fn generic_instantiation_in_single_precision() {
        let p32 = ModelParams::<f32> {
            r: 2.0,
            horizon: 50.0,
            i0: 0.01,
            u_min: 0.1,
            u_max: 0.9,
            n: [2.0, 0.5],
            alpha: [1.0, 1.0],
            g: [0.2, 1.0],
            s: [[2.0, 0.5], [2.0, 0.5]],
        }
        .validate()
        .unwrap();
        let profile = DiscreteProfile::two_point(&p32, &TwoPointProfile::new(1.0f32, 1.0).unwrap());
        let f32_exposure = exposure(&p32, &profile, 4000).unwrap();
        let p64 = example1(0.2, 1.0);
        let profile64 = two_point(&p64, 1.0, 1.0);
        let f64_exposure = exposure(&p64, &profile64, 4000).unwrap();
        assert!((f32_exposure as f64 - f64_exposure).abs() < 1e-3);
    }
}
