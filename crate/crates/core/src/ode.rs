//! Fixed-step classical Runge-Kutta integration over a flat state vector.
//!
//! A fixed grid keeps runs bit-reproducible across machines and lets the
//! linearized sensitivity systems share the exact discretization of the
//! nonlinear base system, so the two stay consistent to discretization order.

use crate::float::{c, cu, Scalar};

/// Advances `y` from `t0` to `t_end` in `steps` equal RK4 steps.
///
/// `rhs(t, y, dydt)` fills the derivative; `observe(k, t_k, y)` is called at
/// the initial state (`k = 0`) and after every accepted step, which is where
/// callers record trajectories or watch for divergence.
pub fn rk4<T: Scalar>(
    y: &mut [T],
    t0: T,
    t_end: T,
    steps: usize,
    mut rhs: impl FnMut(T, &[T], &mut [T]),
    mut observe: impl FnMut(usize, T, &[T]),
) {
    assert!(steps > 0, "rk4 needs at least one step");
    let n = y.len();
    let h = (t_end - t0) / cu::<T>(steps);
    let half = c::<T>(0.5);
    let sixth = h / c::<T>(6.0);
    let two = c::<T>(2.0);

    let mut k1 = vec![T::zero(); n];
    let mut k2 = vec![T::zero(); n];
    let mut k3 = vec![T::zero(); n];
    let mut k4 = vec![T::zero(); n];
    let mut stage = vec![T::zero(); n];

    observe(0, t0, y);
    for step in 0..steps {
        let t = t0 + h * cu::<T>(step);
        rhs(t, y, &mut k1);
        for i in 0..n {
            stage[i] = y[i] + half * h * k1[i];
        }
        rhs(t + half * h, &stage, &mut k2);
        for i in 0..n {
            stage[i] = y[i] + half * h * k2[i];
        }
        rhs(t + half * h, &stage, &mut k3);
        for i in 0..n {
            stage[i] = y[i] + h * k3[i];
        }
        rhs(t + h, &stage, &mut k4);
        for i in 0..n {
            y[i] = y[i] + sixth * (k1[i] + two * k2[i] + two * k3[i] + k4[i]);
        }
        observe(step + 1, t + h, y);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay_matches_closed_form() {
        let mut y = [1.0_f64];
        rk4(
            &mut y,
            0.0,
            2.0,
            200,
            |_, y, dy| dy[0] = -y[0],
            |_, _, _| {},
        );
        assert!((y[0] - (-2.0_f64).exp()).abs() < 1e-10);
    }

    #[test]
    fn observe_sees_every_grid_point() {
        let mut y = [0.0_f64];
        let mut count = 0usize;
        let mut last_t = f64::NAN;
        rk4(
            &mut y,
            0.0,
            1.0,
            10,
            |_, _, dy| dy[0] = 1.0,
            |k, t, _| {
                count = k + 1;
                last_t = t;
            },
        );
        assert_eq!(count, 11);
        assert!((last_t - 1.0).abs() < 1e-14);
        assert!((y[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn works_in_single_precision() {
        let mut y = [1.0_f32];
        rk4(
            &mut y,
            0.0_f32,
            1.0,
            100,
            |_, y, dy| dy[0] = -y[0],
            |_, _, _| {},
        );
        assert!((y[0] - (-1.0_f32).exp()).abs() < 1e-5);
    }
}
