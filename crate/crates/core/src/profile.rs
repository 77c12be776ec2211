//! Finite-support action distributions.

use thiserror::Error;

use crate::float::{c, Scalar};
use crate::params::ValidatedParams;

/// Relative slack on the per-type mass totals.
const MASS_TOL: f64 = 1e-12;

/// Support points closer than this are merged into one atom.
const MERGE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("type {type_index}: support and mass lists differ in length")]
    LengthMismatch { type_index: usize },
    #[error("type {type_index}: action {value} lies outside [u_m, u_M]")]
    OutOfBounds { type_index: usize, value: f64 },
    #[error("type {type_index}: negative mass {value}")]
    NegativeMass { type_index: usize, value: f64 },
    #[error("type {type_index}: masses sum to {got}, expected {expected}")]
    MassMismatch {
        type_index: usize,
        expected: f64,
        got: f64,
    },
    #[error("mixing fraction {value} lies outside [0, 1]")]
    FractionOutOfRange { value: f64 },
}

/// A pair of finite-support measures on the action interval, one per type.
///
/// Support points are kept strictly increasing; duplicates are merged and
/// zero-mass atoms dropped at construction, so downstream grid scans can rely
/// on ordered supports. The per-type masses always sum to the population
/// masses `n_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteProfile<T> {
    support: [Vec<T>; 2],
    mass: [Vec<T>; 2],
}

impl<T: Scalar> DiscreteProfile<T> {
    /// Builds a profile from raw support/mass lists, checking every invariant.
    pub fn new(
        params: &ValidatedParams<T>,
        support1: Vec<T>,
        mass1: Vec<T>,
        support2: Vec<T>,
        mass2: Vec<T>,
    ) -> Result<Self, ProfileError> {
        Self::build(params, [support1, support2], [mass1, mass2], false)
    }

    /// Like [`new`], but admits negative masses.
    ///
    /// Signed atoms arise when a profile is perturbed along a deviation
    /// direction, as in finite-difference sensitivity checks. Total mass per
    /// type must still equal `n_j` and every point must stay in bounds.
    ///
    /// [`new`]: DiscreteProfile::new
    pub fn new_signed(
        params: &ValidatedParams<T>,
        support1: Vec<T>,
        mass1: Vec<T>,
        support2: Vec<T>,
        mass2: Vec<T>,
    ) -> Result<Self, ProfileError> {
        Self::build(params, [support1, support2], [mass1, mass2], true)
    }

    fn build(
        params: &ValidatedParams<T>,
        support: [Vec<T>; 2],
        mass: [Vec<T>; 2],
        allow_signed: bool,
    ) -> Result<Self, ProfileError> {
        let mut out_support: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        let mut out_mass: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        for j in 0..2 {
            if support[j].len() != mass[j].len() {
                return Err(ProfileError::LengthMismatch { type_index: j });
            }
            let mut atoms: Vec<(T, T)> = Vec::with_capacity(support[j].len());
            for (&u, &m) in support[j].iter().zip(&mass[j]) {
                if !u.is_finite() || u < params.u_min || u > params.u_max {
                    return Err(ProfileError::OutOfBounds {
                        type_index: j,
                        value: u.to_f64().unwrap_or(f64::NAN),
                    });
                }
                if !m.is_finite() || (!allow_signed && m < T::zero()) {
                    return Err(ProfileError::NegativeMass {
                        type_index: j,
                        value: m.to_f64().unwrap_or(f64::NAN),
                    });
                }
                atoms.push((u, m));
            }
            atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite actions"));
            let merge_tol = c::<T>(MERGE_TOL);
            let mut merged: Vec<(T, T)> = Vec::with_capacity(atoms.len());
            for (u, m) in atoms {
                match merged.last_mut() {
                    Some(last) if (u - last.0).abs() <= merge_tol => last.1 = last.1 + m,
                    _ => merged.push((u, m)),
                }
            }
            merged.retain(|&(_, m)| m != T::zero());

            let total: T = merged.iter().fold(T::zero(), |acc, &(_, m)| acc + m);
            let expected = params.n[j];
            let tol = c::<T>(MASS_TOL) * T::max(T::one(), expected);
            if (total - expected).abs() > tol {
                return Err(ProfileError::MassMismatch {
                    type_index: j,
                    expected: expected.to_f64().unwrap_or(f64::NAN),
                    got: total.to_f64().unwrap_or(f64::NAN),
                });
            }
            out_support[j] = merged.iter().map(|&(u, _)| u).collect();
            out_mass[j] = merged.iter().map(|&(_, m)| m).collect();
        }
        Ok(DiscreteProfile {
            support: out_support,
            mass: out_mass,
        })
    }

    /// Profile realizing a symmetric two-point strategy: a fraction
    /// `tilde_u_j` of type `j` plays `u_M`, the rest plays `u_m`. Collapses
    /// to a single atom when the fraction is 0 or 1.
    pub fn two_point(params: &ValidatedParams<T>, tp: &TwoPointProfile<T>) -> Self {
        let mut support: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        let mut mass: [Vec<T>; 2] = [Vec::new(), Vec::new()];
        for j in 0..2 {
            let tilde = tp.tilde(j);
            let at_max = params.n[j] * tilde;
            let at_min = params.n[j] * (T::one() - tilde);
            if at_min > T::zero() {
                support[j].push(params.u_min);
                mass[j].push(at_min);
            }
            if at_max > T::zero() {
                support[j].push(params.u_max);
                mass[j].push(at_max);
            }
        }
        DiscreteProfile { support, mass }
    }

    /// Profile with all type-`j` mass on the single action `pair.action(j)`.
    pub fn dirac(params: &ValidatedParams<T>, pair: &DiracPair<T>) -> Self {
        DiscreteProfile {
            support: [vec![pair.u1], vec![pair.u2]],
            mass: [vec![params.n[0]], vec![params.n[1]]],
        }
    }

    pub fn support(&self, j: usize) -> &[T] {
        &self.support[j]
    }

    pub fn mass(&self, j: usize) -> &[T] {
        &self.mass[j]
    }

    /// `(action, mass)` pairs of one type, in increasing action order.
    pub fn atoms(&self, j: usize) -> impl Iterator<Item = (T, T)> + '_ {
        self.support[j]
            .iter()
            .copied()
            .zip(self.mass[j].iter().copied())
    }

    pub fn total_mass(&self, j: usize) -> T {
        self.mass[j].iter().fold(T::zero(), |acc, &m| acc + m)
    }

    /// Mass-weighted mean action of one type.
    pub fn mean_action(&self, j: usize) -> T {
        let weighted = self.atoms(j).fold(T::zero(), |acc, (u, m)| acc + u * m);
        weighted / self.total_mass(j)
    }
}

/// Symmetric two-point mixed strategy, one mixing fraction per type.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct TwoPointProfile<T> {
    pub tilde_u1: T,
    pub tilde_u2: T,
}

impl<T: Scalar> TwoPointProfile<T> {
    pub fn new(tilde_u1: T, tilde_u2: T) -> Result<Self, ProfileError> {
        for v in [tilde_u1, tilde_u2] {
            if !v.is_finite() || v < T::zero() || v > T::one() {
                return Err(ProfileError::FractionOutOfRange {
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(TwoPointProfile { tilde_u1, tilde_u2 })
    }

    pub fn tilde(&self, j: usize) -> T {
        match j {
            0 => self.tilde_u1,
            _ => self.tilde_u2,
        }
    }

    /// Mean action of type `j`: `u_m + (u_M - u_m) * tilde_u_j`.
    pub fn mean_action(&self, params: &ValidatedParams<T>, j: usize) -> T {
        params.u_min + params.action_span() * self.tilde(j)
    }
}

/// One Dirac atom per type; the search space of the constrained-game scan.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DiracPair<T> {
    pub u1: T,
    pub u2: T,
}

impl<T: Scalar> DiracPair<T> {
    pub fn new(params: &ValidatedParams<T>, u1: T, u2: T) -> Result<Self, ProfileError> {
        for (j, u) in [u1, u2].into_iter().enumerate() {
            if !u.is_finite() || u < params.u_min || u > params.u_max {
                return Err(ProfileError::OutOfBounds {
                    type_index: j,
                    value: u.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(DiracPair { u1, u2 })
    }

    pub fn action(&self, j: usize) -> T {
        match j {
            0 => self.u1,
            _ => self.u2,
        }
    }
}

#[cfg(test)]
mod tests {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::testkit::example1;

    #[test]
    fn two_point_corner_collapses_to_single_atoms() {
        let params = example1(0.2, 1.0);
        let tp = TwoPointProfile::new(1.0, 0.0).unwrap();
        let profile = DiscreteProfile::two_point(&params, &tp);
        assert_eq!(profile.support(0), &[0.9]);
        assert_eq!(profile.mass(0), &[2.0]);
        assert_eq!(profile.support(1), &[0.1]);
        assert_eq!(profile.mass(1), &[0.5]);
    }

    #[test]
    fn two_point_even_split() {
        let params = example1(0.2, 1.0);
        let tp = TwoPointProfile::new(0.5, 0.5).unwrap();
        let profile = DiscreteProfile::two_point(&params, &tp);
        assert_eq!(profile.mass(0), &[1.0, 1.0]);
        assert_eq!(profile.mass(1), &[0.25, 0.25]);
    }

    #[test]
    fn mixing_fraction_maps_to_mean_action() {
        let params = example1(0.5, 2.5);
        let tp = TwoPointProfile::new(0.395, 0.0).unwrap();
        let profile = DiscreteProfile::two_point(&params, &tp);
        // u_m + (u_M - u_m) * 0.395 per the mean-action identity.
        assert!((profile.mean_action(0) - 0.416).abs() < 1e-12);
        assert!((tp.mean_action(&params, 0) - 0.416).abs() < 1e-12);
    }

    #[test]
    fn random_two_point_profiles_satisfy_invariants() {
        let params = example1(0.2, 1.0);
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..200 {
            let tp = TwoPointProfile::new(rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0))
                .unwrap();
            let profile = DiscreteProfile::two_point(&params, &tp);
            for j in 0..2 {
                assert!((profile.total_mass(j) - params.n[j]).abs() <= 1e-12 * params.n[j]);
                let sup = profile.support(j);
                for w in sup.windows(2) {
                    assert!(w[0] < w[1]);
                }
                for &u in sup {
                    assert!(u >= params.u_min && u <= params.u_max);
                }
                for &m in profile.mass(j) {
                    assert!(m >= 0.0);
                }
            }
        }
    }

    #[test]
    fn duplicate_support_points_are_merged() {
        let params = example1(0.2, 1.0);
        let profile = DiscreteProfile::new(
            &params,
            vec![0.5, 0.5, 0.3],
            vec![0.5, 0.5, 1.0],
            vec![0.2],
            vec![0.5],
        )
        .unwrap();
        assert_eq!(profile.support(0), &[0.3, 0.5]);
        assert_eq!(profile.mass(0), &[1.0, 1.0]);
    }

    #[test]
    fn mass_mismatch_is_rejected() {
        let params = example1(0.2, 1.0);
        let err =
            DiscreteProfile::new(&params, vec![0.5], vec![1.0], vec![0.2], vec![0.5]).unwrap_err();
        assert!(matches!(
            err,
            ProfileError::MassMismatch { type_index: 0, .. }
        ));
    }

    #[test]
    fn out_of_bounds_action_is_rejected() {
        let params = example1(0.2, 1.0);
        let err =
            DiscreteProfile::new(&params, vec![0.95], vec![2.0], vec![0.2], vec![0.5]).unwrap_err();
        assert!(matches!(
            err,
            ProfileError::OutOfBounds { type_index: 0, .. }
        ));
    }

    #[test]
    fn signed_constructor_admits_perturbation_atoms() {
        let params = example1(0.2, 1.0);
        let eps = 1e-4;
        let profile = DiscreteProfile::new_signed(
            &params,
            vec![0.4, 0.7],
            vec![2.0 + eps, -eps],
            vec![0.2],
            vec![0.5],
        )
        .unwrap();
        assert_eq!(profile.mass(0), &[2.0 + eps, -eps]);
        assert!(DiscreteProfile::new(
            &params,
            vec![0.4, 0.7],
            vec![2.0 + eps, -eps],
            vec![0.2],
            vec![0.5]
        )
        .is_err());
    }
}
