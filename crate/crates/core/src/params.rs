//! Model constants and their validation.

use std::fmt;
use std::ops::Deref;

use serde::Serialize;

use crate::float::Scalar;

/// All epidemic and game constants.
///
/// Type index 0 is the non-vulnerable population, index 1 the vulnerable one;
/// the vulnerability ordering `g[1] > g[0]` is enforced by [`validate`].
///
/// [`validate`]: ModelParams::validate
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ModelParams<T> {
    /// Infection-rate constant (per unit time and unit contact density).
    pub r: T,
    /// Length of the decision horizon, in time units.
    pub horizon: T,
    /// Probability that an agent is infected at time zero.
    pub i0: T,
    /// Smallest admissible action (minimum contact needed to get by).
    pub u_min: T,
    /// Largest admissible action (1 in the absence of a cap).
    pub u_max: T,
    /// Population masses per type.
    pub n: [T; 2],
    /// Exit rates from the infected state per type.
    pub alpha: [T; 2],
    /// Death probabilities given infection per type.
    pub g: [T; 2],
    /// Sociability matrix; `s[j][k]` is the utility a type-`j` agent draws
    /// per unit contact product with type-`k` agents.
    pub s: [[T; 2]; 2],
}

impl<T: Scalar> ModelParams<T> {
    /// Width of the action interval.
    pub fn action_span(&self) -> T {
        self.u_max - self.u_min
    }

    /// Total population mass.
    pub fn total_mass(&self) -> T {
        self.n[0] + self.n[1]
    }

    /// Checks every invariant, collecting all violations instead of stopping
    /// at the first one.
    pub fn validate(self) -> Result<ValidatedParams<T>, InvalidParams> {
        let zero = T::zero();
        let one = T::one();
        let mut violations = Vec::new();
        let mut check = |ok: bool, field: &'static str, reason: &'static str| {
            if !ok {
                violations.push(Violation { field, reason });
            }
        };

        check(self.r.is_finite() && self.r > zero, "r", "must be positive");
        check(
            self.horizon.is_finite() && self.horizon > zero,
            "T",
            "must be positive",
        );
        check(
            self.i0.is_finite() && self.i0 > zero && self.i0 < one,
            "I0",
            "must lie strictly between 0 and 1",
        );
        check(
            self.u_min.is_finite() && self.u_min >= zero,
            "u_m",
            "must be nonnegative",
        );
        check(
            self.u_max.is_finite() && self.u_max <= one,
            "u_M",
            "must not exceed 1",
        );
        check(self.u_max > self.u_min, "u_M", "must exceed u_m");
        let n_fields = ["n1", "n2"];
        let alpha_fields = ["alpha1", "alpha2"];
        for j in 0..2 {
            check(
                self.n[j].is_finite() && self.n[j] > zero,
                n_fields[j],
                "must be positive",
            );
            check(
                self.alpha[j].is_finite() && self.alpha[j] > zero,
                alpha_fields[j],
                "must be positive",
            );
        }
        check(
            self.g[0].is_finite() && self.g[0] >= zero,
            "G1",
            "must be nonnegative",
        );
        check(self.g[1].is_finite(), "G2", "must be finite");
        check(self.g[1] > self.g[0], "G2", "must exceed G1");
        let s_fields = [["s11", "s12"], ["s21", "s22"]];
        for (row, names) in self.s.iter().zip(&s_fields) {
            for (&entry, &name) in row.iter().zip(names) {
                check(
                    entry.is_finite() && entry >= zero,
                    name,
                    "must be nonnegative",
                );
            }
        }

        if violations.is_empty() {
            Ok(ValidatedParams(self))
        } else {
            Err(InvalidParams(violations))
        }
    }
}

/// One broken invariant, by config-file field name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub field: &'static str,
    pub reason: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.reason)
    }
}

/// Every invariant violation found in one pass over the parameters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvalidParams(pub Vec<Violation>);

impl fmt::Display for InvalidParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid model parameters: ")?;
        for (idx, v) in self.0.iter().enumerate() {
            if idx > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl std::error::Error for InvalidParams {}

/// Parameters that passed [`ModelParams::validate`].
///
/// Every solver entry point takes this wrapper, so a parameter set is checked
/// once and then moves freely through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidatedParams<T>(ModelParams<T>);

impl<T: Scalar> ValidatedParams<T> {
    /// Wraps a parameter set without checking the invariants.
    ///
    /// Meant for relabeling experiments (such as swapping the type indices,
    /// which flips the vulnerability ordering) where the caller knowingly
    /// steps outside the validated domain.
    pub fn trusted(params: ModelParams<T>) -> Self {
        ValidatedParams(params)
    }
}

impl<T> Deref for ValidatedParams<T> {
    type Target = ModelParams<T>;

    fn deref(&self) -> &ModelParams<T> {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example_base() -> ModelParams<f64> {
        *crate::testkit::example1(0.2, 1.0)
    }

    #[test]
    fn example_parameters_are_valid() {
        assert!(example_base().validate().is_ok());
    }

    #[test]
    fn degenerate_action_interval_is_rejected() {
        let mut p = example_base();
        p.u_min = 0.9;
        p.u_max = 0.9;
        let err = p.validate().unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|v| v.field == "u_M" && v.reason == "must exceed u_m"));
    }

    #[test]
    fn vulnerability_ordering_is_rejected_when_equal() {
        let mut p = example_base();
        p.g = [0.5, 0.5];
        let err = p.validate().unwrap_err();
        assert!(err
            .0
            .iter()
            .any(|v| v.field == "G2" && v.reason == "must exceed G1"));
    }

    #[test]
    fn all_violations_are_collected() {
        let mut p = example_base();
        p.r = -1.0;
        p.i0 = 2.0;
        p.n[1] = 0.0;
        let err = p.validate().unwrap_err();
        let fields: Vec<_> = err.0.iter().map(|v| v.field).collect();
        assert!(fields.contains(&"r"));
        assert!(fields.contains(&"I0"));
        assert!(fields.contains(&"n2"));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut p = example_base();
        p.r = f64::INFINITY;
        assert!(p.validate().is_err());
        let mut p = example_base();
        p.s[0][1] = f64::NAN;
        assert!(p.validate().is_err());
    }
}
