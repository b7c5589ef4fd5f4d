//! Extended Kalman filter that tracks the relative pose together with a
//! constant-velocity model of the leader's twist, using pose measurements
//! only.

use nalgebra::{Cholesky, SMatrix, SVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{RelativeState, Twist};
use crate::scalar::{wrap_angle, Real};

pub type Vector5<T> = SVector<T, 5>;
pub type Matrix5<T> = SMatrix<T, 5, 5>;
type Matrix3<T> = SMatrix<T, 3, 3>;
type Matrix35<T> = SMatrix<T, 3, 5>;

/// Diagonal process and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfNoise<T> {
    /// Process noise spectral density per state (`Q dt` is added per step).
    pub q: [T; 5],
    /// Measurement noise variances for `(x_lf, y_lf, gamma)`.
    pub r: [T; 3],
}

impl<T: Real> Default for EkfNoise<T> {
    fn default() -> Self {
        Self {
            q: [1e-6, 1e-6, 1e-6, 1e-2, 1e-2].map(T::lit),
            r: [1e-4, 1e-4, 4e-4].map(T::lit),
        }
    }
}

impl<T: Real> EkfNoise<T> {
    pub fn is_valid(&self) -> bool {
        self.q.iter().chain(self.r.iter()).all(|v| *v > T::zero())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EkfError {
    #[error("innovation covariance is not positive definite")]
    NumericalFailure,
}

/// Mean `(x_lf, y_lf, gamma, v_l, omega_l)` and covariance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EkfState<T: Real> {
    pub mean: Vector5<T>,
    pub covariance: Matrix5<T>,
}

impl<T: Real> EkfState<T> {
    /// Starts at `s0` with zero leader velocity and covariance `p0 I`.
    pub fn new(s0: &RelativeState<T>, p0: T) -> Self {
        Self {
            mean: Vector5::new(s0.x_lf, s0.y_lf, s0.gamma, T::zero(), T::zero()),
            covariance: Matrix5::identity() * p0,
        }
    }

    pub fn pose(&self) -> RelativeState<T> {
        RelativeState::new(self.mean[0], self.mean[1], self.mean[2])
    }

    pub fn leader_velocity(&self) -> Twist<T> {
        Twist::new(self.mean[3], self.mean[4])
    }

    pub fn is_symmetric_pd(&self) -> bool {
        let p = &self.covariance;
        let sym = (p - p.transpose()).abs().max() <= T::lit(1e-12) * (T::one() + p.abs().max());
        sym && Cholesky::new(*p).is_some()
    }
}

fn drift<T: Real>(m: &Vector5<T>, u_f: &Twist<T>) -> Vector5<T> {
    let (x, y, g, v, w) = (m[0], m[1], m[2], m[3], m[4]);
    let (sg, cg) = g.sin_cos();
    Vector5::new(
        v * cg - u_f.v + y * u_f.omega,
        v * sg - x * u_f.omega,
        w - u_f.omega,
        T::zero(),
        T::zero(),
    )
}

/// Jacobian of the one-step Euler transition.
pub fn transition_jacobian<T: Real>(m: &Vector5<T>, u_f: &Twist<T>, dt: T) -> Matrix5<T> {
    let (g, v) = (m[2], m[3]);
    let (sg, cg) = g.sin_cos();
    let mut j = Matrix5::identity();
    j[(0, 1)] = dt * u_f.omega;
    j[(0, 2)] = -dt * v * sg;
    j[(0, 3)] = dt * cg;
    j[(1, 0)] = -dt * u_f.omega;
    j[(1, 2)] = dt * v * cg;
    j[(1, 3)] = dt * sg;
    j[(2, 4)] = dt;
    j
}

/// Euler transition of the mean, with the heading re-wrapped.
pub fn transition<T: Real>(m: &Vector5<T>, u_f: &Twist<T>, dt: T) -> Vector5<T> {
    let mut next = m + drift(m, u_f) * dt;
    next[2] = wrap_angle(next[2]);
    next
}

fn symmetrize<T: Real>(p: &Matrix5<T>) -> Matrix5<T> {
    (p + p.transpose()) * T::lit(0.5)
}

pub fn predict<T: Real>(state: &EkfState<T>, u_f: &Twist<T>, dt: T, noise: &EkfNoise<T>) -> EkfState<T> {
    let j = transition_jacobian(&state.mean, u_f, dt);
    let q = Matrix5::from_diagonal(&Vector5::from_row_slice(&noise.q)) * dt;
    EkfState {
        mean: transition(&state.mean, u_f, dt),
        covariance: symmetrize(&(j * state.covariance * j.transpose() + q)),
    }
}

pub fn update<T: Real>(
    state: &EkfState<T>,
    z: &RelativeState<T>,
    noise: &EkfNoise<T>,
) -> Result<EkfState<T>, EkfError> {
    let mut h = Matrix35::zeros();
    h[(0, 0)] = T::one();
    h[(1, 1)] = T::one();
    h[(2, 2)] = T::one();
    let r = Matrix3::from_diagonal(&SVector::<T, 3>::from_row_slice(&noise.r));
    let p = &state.covariance;
    let innovation = SVector::<T, 3>::new(
        z.x_lf - state.mean[0],
        z.y_lf - state.mean[1],
        wrap_angle(z.gamma - state.mean[2]),
    );
    let s = h * p * h.transpose() + r;
    let chol = Cholesky::new(s).ok_or(EkfError::NumericalFailure)?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T since S and P are symmetric
    let gain = chol.solve(&(h * p)).transpose();
    let mut mean = state.mean + gain * innovation;
    mean[2] = wrap_angle(mean[2]);
    let i_kh = Matrix5::identity() - gain * h;
    let covariance = i_kh * p * i_kh.transpose() + gain * r * gain.transpose();
    Ok(EkfState {
        mean,
        covariance: symmetrize(&covariance),
    })
}
