//! Individual costs, population means, cost variance, and prevalence.
//!
//! An agent of type `j` playing action `u` against a profile with exposure
//! `F` and mean actions `(ubar_1, ubar_2)` pays
//!
//! ```text
//! J_j(u) = G_j * P(u) - u * (s_j1 ubar_1 + s_j2 ubar_2)
//! P(u)   = I0 + (1 - I0) * (1 - exp(-u F))
//! ```
//!
//! Everything in this module is a closed-form function of `F` and the mean
//! actions, so one integration per profile serves every cost query made
//! against it.

use serde::Serialize;

use crate::dynamics::{self, DynamicsError};
use crate::float::{c, Scalar};
use crate::params::ValidatedParams;
use crate::profile::DiscreteProfile;

/// Exposure and mean actions of one profile; the full cost structure
/// derives from these three numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostContext<T> {
    params: ValidatedParams<T>,
    pub exposure: T,
    pub mean_action: [T; 2],
}

impl<T: Scalar> CostContext<T> {
    /// Integrates the profile once and captures what the cost formulas need.
    pub fn new(
        params: &ValidatedParams<T>,
        profile: &DiscreteProfile<T>,
        steps: usize,
    ) -> Result<Self, DynamicsError> {
        let exposure = dynamics::exposure(params, profile, steps)?;
        Ok(Self::with_exposure(
            params,
            exposure,
            [profile.mean_action(0), profile.mean_action(1)],
        ))
    }

    /// Builds a context from an already-known exposure value.
    pub fn with_exposure(params: &ValidatedParams<T>, exposure: T, mean_action: [T; 2]) -> Self {
        CostContext {
            params: *params,
            exposure,
            mean_action,
        }
    }

    /// Probability that an agent playing `u` gets infected by the horizon.
    pub fn infection_probability(&self, u: T) -> T {
        let p = &self.params;
        p.i0 + (T::one() - p.i0) * (T::one() - (-u * self.exposure).exp())
    }

    /// Cost of a type-`j` agent playing `u`.
    pub fn cost(&self, j: usize, u: T) -> T {
        let p = &self.params;
        let social = p.s[j][0] * self.mean_action[0] + p.s[j][1] * self.mean_action[1];
        p.g[j] * self.infection_probability(u) - u * social
    }
}

/// Individual cost as a free function of the primitive inputs.
pub fn individual_cost<T: Scalar>(
    params: &ValidatedParams<T>,
    j: usize,
    u: T,
    exposure: T,
    mean_action: [T; 2],
) -> T {
    CostContext::with_exposure(params, exposure, mean_action).cost(j, u)
}

/// Cost of each support atom plus the aggregate statistics of a profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostReport<T> {
    pub j1: Vec<SupportCost<T>>,
    pub j2: Vec<SupportCost<T>>,
    pub jbar1: T,
    pub jbar2: T,
    pub jbar: T,
    pub variance: T,
    pub prevalence: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupportCost<T> {
    pub u: T,
    pub cost: T,
}

/// Evaluates the whole cost structure of a profile from one integration.
pub fn cost_report<T: Scalar>(
    params: &ValidatedParams<T>,
    profile: &DiscreteProfile<T>,
    steps: usize,
) -> Result<CostReport<T>, DynamicsError> {
    let ctx = CostContext::new(params, profile, steps)?;
    let tables: Vec<Vec<SupportCost<T>>> = (0..2)
        .map(|j| {
            profile
                .atoms(j)
                .map(|(u, _)| SupportCost {
                    u,
                    cost: ctx.cost(j, u),
                })
                .collect()
        })
        .collect();

    let mean = |j: usize| -> T {
        let total: T = profile
            .atoms(j)
            .fold(T::zero(), |acc, (u, m)| acc + ctx.cost(j, u) * m);
        total / params.n[j]
    };
    let jbar_per = [mean(0), mean(1)];
    let jbar = (params.n[0] * jbar_per[0] + params.n[1] * jbar_per[1]) / params.total_mass();

    let mut spread = T::zero();
    let mut infected = T::zero();
    for j in 0..2 {
        for (u, m) in profile.atoms(j) {
            let dev = ctx.cost(j, u) - jbar;
            spread = spread + dev * dev * m;
            infected = infected + ctx.infection_probability(u) * m;
        }
    }
    let total = params.total_mass();

    let mut tables = tables.into_iter();
    Ok(CostReport {
        j1: tables.next().unwrap(),
        j2: tables.next().unwrap(),
        jbar1: jbar_per[0],
        jbar2: jbar_per[1],
        jbar,
        variance: spread / total,
        prevalence: infected / total,
    })
}

/// Population variance of the realized costs.
pub fn variance<T: Scalar>(
    params: &ValidatedParams<T>,
    profile: &DiscreteProfile<T>,
    steps: usize,
) -> Result<T, DynamicsError> {
    Ok(cost_report(params, profile, steps)?.variance)
}

/// Fraction of the population infected by the horizon.
pub fn prevalence<T: Scalar>(
    params: &ValidatedParams<T>,
    profile: &DiscreteProfile<T>,
    steps: usize,
) -> Result<T, DynamicsError> {
    Ok(cost_report(params, profile, steps)?.prevalence)
}

/// Grid minimizer of each type's cost against the given profile.
///
/// Since the cost is concave in the own action, the minimizer lands on an
/// endpoint of the action interval; tests pin that property.
pub fn concavity_witness<T: Scalar>(
    params: &ValidatedParams<T>,
    profile: &DiscreteProfile<T>,
    steps: usize,
    grid_points: usize,
) -> Result<[T; 2], DynamicsError> {
    let ctx = CostContext::new(params, profile, steps)?;
    let grid = dynamics::action_grid(params, grid_points);
    let mut witness = [params.u_min; 2];
    for (j, minimizer) in witness.iter_mut().enumerate() {
        let mut best = ctx.cost(j, grid[0]);
        for &u in &grid[1..] {
            let cost = ctx.cost(j, u);
            if cost < best {
                best = cost;
                *minimizer = u;
            }
        }
    }
    Ok(witness)
}

/// Second differences of `J_j` on a uniform grid; concavity means every
/// entry is nonpositive up to rounding.
pub fn second_differences<T: Scalar>(ctx: &CostContext<T>, j: usize, grid: &[T]) -> Vec<T> {
    let two = c::<T>(2.0);
    grid.windows(3)
        .map(|w| ctx.cost(j, w[2]) - two * ctx.cost(j, w[1]) + ctx.cost(j, w[0]))
        .collect()
}
