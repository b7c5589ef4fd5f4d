//! Planar unicycle kinematics and the leader-follower relative state.

use serde::{Deserialize, Serialize};

use crate::scalar::{wrap_angle, Real};

/// Turn rates below this are integrated as straight lines.
pub const OMEGA_EPS: f64 = 1e-9;

/// World-frame pose of a robot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2D<T> {
    pub x: T,
    pub y: T,
    /// Heading, wrapped to `(-pi, pi]`.
    pub theta: T,
}

impl<T: Real> Pose2D<T> {
    pub fn new(x: T, y: T, theta: T) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    /// Applies the rigid motion `p -> R(rot) p + (tx, ty)` to this pose.
    pub fn transformed(&self, rot: T, tx: T, ty: T) -> Self {
        let (s, c) = rot.sin_cos();
        Self::new(
            c * self.x - s * self.y + tx,
            s * self.x + c * self.y + ty,
            self.theta + rot,
        )
    }
}

/// Linear and angular velocity command.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist<T> {
    pub v: T,
    pub omega: T,
}

impl<T: Real> Twist<T> {
    pub fn new(v: T, omega: T) -> Self {
        Self { v, omega }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn is_finite(&self) -> bool {
        self.v.is_finite() && self.omega.is_finite()
    }

    /// True when the twist respects the velocity part of `bounds`.
    pub fn within(&self, bounds: &Bounds<T>) -> bool {
        self.is_finite() && self.v.abs() <= bounds.v_max && self.omega.abs() <= bounds.omega_max
    }

    /// Component-wise clamp into the velocity bounds.
    pub fn clamped(&self, bounds: &Bounds<T>) -> Self {
        Self::new(
            self.v.clamp(-bounds.v_max, bounds.v_max),
            self.omega.clamp(-bounds.omega_max, bounds.omega_max),
        )
    }
}

/// Leader pose expressed in the follower frame plus the heading difference.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RelativeState<T> {
    pub x_lf: T,
    pub y_lf: T,
    /// `theta_leader - theta_follower`, wrapped.
    pub gamma: T,
}

impl<T: Real> RelativeState<T> {
    pub fn new(x_lf: T, y_lf: T, gamma: T) -> Self {
        Self {
            x_lf,
            y_lf,
            gamma: wrap_angle(gamma),
        }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.x_lf, self.y_lf, self.gamma]
    }

    /// `self - other` with the heading component wrapped.
    pub fn error_from(&self, other: &Self) -> [T; 3] {
        [
            self.x_lf - other.x_lf,
            self.y_lf - other.y_lf,
            wrap_angle(self.gamma - other.gamma),
        ]
    }

    /// Distance from the follower origin to the leader origin.
    pub fn range(&self) -> T {
        (self.x_lf * self.x_lf + self.y_lf * self.y_lf).sqrt()
    }
}

/// Velocity and acceleration limits of a robot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds<T> {
    pub v_max: T,
    pub omega_max: T,
    pub vdot_max: T,
    pub omegadot_max: T,
}

impl<T: Real> Bounds<T> {
    pub fn is_valid(&self) -> bool {
        [self.v_max, self.omega_max, self.vdot_max, self.omegadot_max]
            .iter()
            .all(|b| b.is_finite() && *b > T::zero())
    }

    /// TurtleBot-class limits used in the experiments.
    pub fn experimental() -> Self {
        Self {
            v_max: T::lit(0.6),
            omega_max: T::lit(0.2),
            vdot_max: T::lit(0.5),
            omegadot_max: T::lit(0.2),
        }
    }
}

/// Moves `pose` along the constant-twist arc for `dt` seconds.
pub fn integrate_unicycle<T: Real>(pose: &Pose2D<T>, u: &Twist<T>, dt: T) -> Pose2D<T> {
    let theta_end = pose.theta + u.omega * dt;
    if u.omega.abs() > T::lit(OMEGA_EPS) {
        let radius = u.v / u.omega;
        Pose2D::new(
            pose.x + radius * (theta_end.sin() - pose.theta.sin()),
            pose.y - radius * (theta_end.cos() - pose.theta.cos()),
            theta_end,
        )
    } else {
        let dist = u.v * dt;
        Pose2D::new(
            pose.x + dist * pose.theta.cos(),
            pose.y + dist * pose.theta.sin(),
            theta_end,
        )
    }
}

/// Relative state of `leader` seen from `follower`.
pub fn relative_state<T: Real>(leader: &Pose2D<T>, follower: &Pose2D<T>) -> RelativeState<T> {
    let (s, c) = follower.theta.sin_cos();
    let dx = leader.x - follower.x;
    let dy = leader.y - follower.y;
    RelativeState::new(c * dx + s * dy, -s * dx + c * dy, leader.theta - follower.theta)
}

/// The leader-input matrix `F(gamma)` (3x2, row-major).
pub fn leader_input_matrix<T: Real>(gamma: T) -> [[T; 2]; 3] {
    let (s, c) = gamma.sin_cos();
    [[c, T::zero()], [s, T::zero()], [T::zero(), T::one()]]
}

/// The follower-input matrix `G(s)` (3x2, row-major).
pub fn follower_input_matrix<T: Real>(s: &RelativeState<T>) -> [[T; 2]; 3] {
    [[-T::one(), s.y_lf], [T::zero(), -s.x_lf], [T::zero(), -T::one()]]
}

pub(crate) fn mat32_mul<T: Real>(m: &[[T; 2]; 3], u: &Twist<T>) -> [T; 3] {
    [
        m[0][0] * u.v + m[0][1] * u.omega,
        m[1][0] * u.v + m[1][1] * u.omega,
        m[2][0] * u.v + m[2][1] * u.omega,
    ]
}

/// Time derivative of the relative state, `F u_l + G u_f`.
pub fn relative_derivative<T: Real>(s: &RelativeState<T>, u_l: &Twist<T>, u_f: &Twist<T>) -> [T; 3] {
    let a = mat32_mul(&leader_input_matrix(s.gamma), u_l);
    let b = mat32_mul(&follower_input_matrix(s), u_f);
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}
