//! Follower control stack: acceleration-limited velocity smoothing, the
//! plausibility gate on received leader velocities, the formation control law
//! and Lyapunov diagnostics for it.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{follower_input_matrix, leader_input_matrix, mat32_mul, Bounds, RelativeState, Twist};
use crate::quantize::QuantizerSpec;
use crate::scalar::{wrap_angle, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainConfig<T> {
    pub k1: T,
    pub k2: T,
    pub k3: T,
}

impl<T: Real> GainConfig<T> {
    pub fn new(k1: T, k2: T, k3: T) -> Self {
        Self { k1, k2, k3 }
    }

    pub fn experimental() -> Self {
        Self::new(T::lit(0.5), T::lit(0.75), T::lit(0.5))
    }

    pub fn is_valid(&self) -> bool {
        self.k1 > T::zero() && self.k2 > T::zero() && self.k3 > T::zero()
    }

    pub fn scaled(&self, f: T) -> Self {
        Self::new(self.k1 * f, self.k2 * f, self.k3 * f)
    }
}

/// Target relative pose of the formation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredPose<T> {
    pub x_bar: T,
    pub y_bar: T,
    pub gamma_bar: T,
}

impl<T: Real> DesiredPose<T> {
    pub fn new(x_bar: T, y_bar: T, gamma_bar: T) -> Self {
        Self {
            x_bar,
            y_bar,
            gamma_bar: wrap_angle(gamma_bar),
        }
    }

    pub fn as_state(&self) -> RelativeState<T> {
        RelativeState::new(self.x_bar, self.y_bar, self.gamma_bar)
    }

    /// Formation error `s - s_bar` (heading wrapped).
    pub fn error(&self, s: &RelativeState<T>) -> [T; 3] {
        s.error_from(&self.as_state())
    }
}

/// Acceleration-limited velocity smoother. Each call advances one publishing
/// period `1/f_v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoother<T> {
    pub u_current: Twist<T>,
    /// Desired acceleration magnitudes (`vdot`, `omegadot`).
    pub accel: Twist<T>,
    pub f_v: T,
}

impl<T: Real> Smoother<T> {
    pub fn new(accel: Twist<T>, f_v: T) -> Self {
        Self {
            u_current: Twist::zero(),
            accel,
            f_v,
        }
    }

    pub fn period(&self) -> T {
        T::one() / self.f_v
    }

    pub fn smooth(&mut self, target: &Twist<T>) -> Twist<T> {
        let dt = self.period();
        let step = |cur: T, tgt: T, a: T| {
            if tgt > cur {
                tgt.min(cur + a * dt)
            } else {
                tgt.max(cur - a * dt)
            }
        };
        self.u_current = Twist::new(
            step(self.u_current.v, target.v, self.accel.v),
            step(self.u_current.omega, target.omega, self.accel.omega),
        );
        self.u_current
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateDecision {
    Accepted,
    /// Nothing was received this interval.
    Missing,
    /// Received, but implied an implausible acceleration.
    Rejected,
}

/// Plausibility gate on velocities read from the optical link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityGate<T> {
    /// Last accepted velocity.
    pub u_hat_prev: Twist<T>,
    pub n: u32,
    pub delta_t: T,
    /// The leader's acceleration limits stand in for the desired accelerations.
    pub bounds: Bounds<T>,
}

impl<T: Real> VelocityGate<T> {
    pub fn new(n: u32, delta_t: T, bounds: Bounds<T>) -> Self {
        Self {
            u_hat_prev: Twist::zero(),
            n,
            delta_t,
            bounds,
        }
    }

    pub fn max_jump(&self) -> Twist<T> {
        let w = T::lit(self.n as f64) * self.delta_t;
        Twist::new(w * self.bounds.vdot_max, w * self.bounds.omegadot_max)
    }

    /// Accepts `u_new` if it is present and consistent with the previous
    /// accepted value; otherwise keeps the previous value.
    pub fn gate_velocity(&mut self, u_new: Option<Twist<T>>) -> (Twist<T>, GateDecision) {
        let Some(u) = u_new else {
            return (self.u_hat_prev, GateDecision::Missing);
        };
        let jump = self.max_jump();
        if !u.is_finite()
            || (u.v - self.u_hat_prev.v).abs() > jump.v
            || (u.omega - self.u_hat_prev.omega).abs() > jump.omega
        {
            return (self.u_hat_prev, GateDecision::Rejected);
        }
        self.u_hat_prev = u;
        (u, GateDecision::Accepted)
    }
}

/// Bounds on the received-velocity error and on the received velocity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundConstants<T> {
    pub delta_v_plus: T,
    pub delta_omega_plus: T,
    pub v_hat_plus: T,
    pub omega_hat_plus: T,
}

pub fn error_bounds<T: Real>(
    bounds: &Bounds<T>,
    gate: &VelocityGate<T>,
    q_v: &QuantizerSpec<T>,
    q_omega: &QuantizerSpec<T>,
) -> ErrorBoundConstants<T> {
    let jump = gate.max_jump();
    ErrorBoundConstants {
        delta_v_plus: q_v.max_error().max(jump.v),
        delta_omega_plus: q_omega.max_error().max(jump.omega),
        v_hat_plus: bounds.v_max + jump.v,
        omega_hat_plus: bounds.omega_max + jump.omega,
    }
}

/// `sigma = 1 / (x^2 + 1)`.
pub fn sigma<T: Real>(x_lf: T) -> T {
    T::one() / (x_lf * x_lf + T::one())
}

/// Formation control law. Returns the follower velocity target before
/// smoothing and clipping.
pub fn control<T: Real>(
    s: &RelativeState<T>,
    s_bar: &DesiredPose<T>,
    u_hat_l: &Twist<T>,
    gains: &GainConfig<T>,
) -> Twist<T> {
    control_with_error(s, &s_bar.error(s), u_hat_l, gains)
}

/// Control law evaluated for an explicit formation error.
pub fn control_with_error<T: Real>(
    s: &RelativeState<T>,
    eps: &[T; 3],
    u_hat_l: &Twist<T>,
    gains: &GainConfig<T>,
) -> Twist<T> {
    let sig = sigma(s.x_lf);
    let ff = mat32_mul(&leader_input_matrix(s.gamma), u_hat_l);
    let w = [
        gains.k1 * eps[0] + ff[0],
        gains.k2 * eps[1] + ff[1],
        gains.k3 * eps[2] + ff[2],
    ];
    let (x, y) = (s.x_lf, s.y_lf);
    // sigma * H * w with H = [[1/sigma, x y, y], [0, x, 1]]
    Twist::new(w[0] + sig * (x * y * w[1] + y * w[2]), sig * (x * w[1] + w[2]))
}

pub fn lyapunov<T: Real>(eps: &[T; 3]) -> T {
    T::lit(0.5) * (eps[0] * eps[0] + eps[1] * eps[1] + eps[2] * eps[2])
}

/// `dV/dt = eps . (F u_l + G u_f)` along the true kinematics.
pub fn lyapunov_rate<T: Real>(s: &RelativeState<T>, eps: &[T; 3], u_l_true: &Twist<T>, u_f: &Twist<T>) -> T {
    let a = mat32_mul(&leader_input_matrix(s.gamma), u_l_true);
    let b = mat32_mul(&follower_input_matrix(s), u_f);
    eps[0] * (a[0] + b[0]) + eps[1] * (a[1] + b[1]) + eps[2] * (a[2] + b[2])
}

/// `dV/dt` in the expanded closed-loop form, with the control law substituted.
pub fn lyapunov_rate_expanded<T: Real>(
    s: &RelativeState<T>,
    eps: &[T; 3],
    u_l_true: &Twist<T>,
    u_hat_l: &Twist<T>,
    gains: &GainConfig<T>,
) -> T {
    let x = s.x_lf;
    let sig = sigma(x);
    let eta = x * sig;
    let (sg, cg) = s.gamma.sin_cos();
    let (ex, ey, eg) = (eps[0], eps[1], eps[2]);
    let (v, w) = (u_l_true.v, u_l_true.omega);
    let (vh, wh) = (u_hat_l.v, u_hat_l.omega);
    -gains.k1 * ex * ex - gains.k2 * eta * x * ey * ey - gains.k3 * sig * eg * eg
        + ex * (v - vh) * cg
        + ey * ((v - eta * x * vh) * sg - eta * wh - eta * (gains.k2 + gains.k3) * eg)
        + eg * (w - sig * wh - eta * vh * sg)
}

/// Decay rate `min(k1, k2 eta x, k3 sigma)` of the exponential bound.
pub fn decay_rate<T: Real>(s: &RelativeState<T>, gains: &GainConfig<T>) -> T {
    let sig = sigma(s.x_lf);
    let eta = s.x_lf * sig;
    gains.k1.min(gains.k2 * eta * s.x_lf).min(gains.k3 * sig)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("formation error component {0} too close to zero for a gain floor")]
pub struct DegenerateError(pub usize);

/// Minimum gains from the stability argument, state dependent.
///
/// `k3_choice` is the `k3` plugged into the `k2` floor; `None` uses the `k3`
/// floor itself.
pub fn gain_floor<T: Real>(
    s: &RelativeState<T>,
    eps: &[T; 3],
    c: &ErrorBoundConstants<T>,
    k3_choice: Option<T>,
) -> Result<GainConfig<T>, DegenerateError> {
    let tiny = T::lit(1e-9);
    for (i, e) in eps.iter().enumerate() {
        if e.abs() < tiny {
            return Err(DegenerateError(i));
        }
    }
    let two = T::lit(2.0);
    let x = s.x_lf;
    let sig = sigma(x);
    let eta = x * sig;
    let (ax, ay, ag) = (eps[0].abs(), eps[1].abs(), eps[2].abs());
    let k1 = two * c.delta_v_plus / ax;
    let k3 = two * (c.delta_omega_plus + eta * x * c.omega_hat_plus + eta * c.v_hat_plus) / (sig * ag);
    let k3_used = k3_choice.unwrap_or(k3);
    let k2 = two * (c.delta_v_plus + sig * c.v_hat_plus + eta * (k3_used * ay + c.omega_hat_plus))
        / (eta * (x + T::one()) * ay);
    Ok(GainConfig::new(k1, k2, k3))
}

/// One sampled configuration of the Lyapunov decay check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub s: RelativeState<f64>,
    pub eps: [f64; 3],
    pub u_hat_l: Twist<f64>,
    pub u_l_true: Twist<f64>,
    pub gains: GainConfig<f64>,
    pub v: f64,
    pub v_dot: f64,
    pub phi: f64,
}

impl LyapunovSample {
    /// Slack of `V_dot <= -phi V`; positive means the bound is violated.
    pub fn excess(&self) -> f64 {
        self.v_dot + self.phi * self.v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub samples: usize,
    pub passed: usize,
    pub failures: Vec<LyapunovSample>,
}

impl LyapunovReport {
    pub fn pass_fraction(&self) -> f64 {
        if self.samples == 0 {
            return 1.0;
        }
        self.passed as f64 / self.samples as f64
    }
}

/// Monte-Carlo check of `V_dot <= -phi V + tol` with gains set to
/// `margin * gain_floor` at each sampled state.
pub fn lyapunov_check<R: Rng + ?Sized>(
    consts: &ErrorBoundConstants<f64>,
    samples: usize,
    margin: f64,
    tol: f64,
    rng: &mut R,
) -> LyapunovReport {
    use std::f64::consts::FRAC_PI_3;
    let mut passed = 0;
    let mut failures = Vec::new();
    let signed = |rng: &mut R, lo: f64, hi: f64| {
        let m = rng.random_range(lo..=hi);
        if rng.random_bool(0.5) {
            m
        } else {
            -m
        }
    };
    for _ in 0..samples {
        let s = RelativeState::new(
            rng.random_range(0.4..=1.25),
            rng.random_range(-0.3..=0.3),
            rng.random_range(-FRAC_PI_3..=FRAC_PI_3),
        );
        let eps = [signed(rng, 0.05, 0.5), signed(rng, 0.05, 0.5), signed(rng, 0.05, 0.5)];
        let u_hat_l = Twist::new(
            rng.random_range(-consts.v_hat_plus..=consts.v_hat_plus),
            rng.random_range(-consts.omega_hat_plus..=consts.omega_hat_plus),
        );
        let u_l_true = Twist::new(
            u_hat_l.v + rng.random_range(-consts.delta_v_plus..=consts.delta_v_plus),
            u_hat_l.omega + rng.random_range(-consts.delta_omega_plus..=consts.delta_omega_plus),
        );
        let k3 = gain_floor(&s, &eps, consts, None)
            .expect("sampled errors are nonzero")
            .k3
            * margin;
        let floor = gain_floor(&s, &eps, consts, Some(k3)).expect("sampled errors are nonzero");
        let gains = GainConfig::new(floor.k1 * margin, floor.k2 * margin, k3);
        let u_f = control_with_error(&s, &eps, &u_hat_l, &gains);
        let sample = LyapunovSample {
            s,
            eps,
            u_hat_l,
            u_l_true,
            gains,
            v: lyapunov(&eps),
            v_dot: lyapunov_rate(&s, &eps, &u_l_true, &u_f),
            phi: decay_rate(&s, &gains),
        };
        if sample.excess() <= tol {
            passed += 1;
        } else {
            failures.push(sample);
        }
    }
    LyapunovReport {
        samples,
        passed,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_6;

    fn gate() -> VelocityGate<f64> {
        VelocityGate::new(5, 0.1, Bounds::experimental())
    }

    #[test]
    fn smoother_examples() {
        let mut sm = Smoother::new(Twist::new(0.5, 0.2), 20.0);
        assert_eq!(sm.smooth(&Twist::new(0.3, 0.0)), Twist::new(0.025, 0.0));
        let mut sm = Smoother::new(Twist::new(0.5, 0.2), 20.0);
        sm.u_current = Twist::new(0.3, 0.0);
        let out = sm.smooth(&Twist::new(0.0, 0.0));
        assert_abs_diff_eq!(out.v, 0.275, epsilon = 1e-15);
        let held = sm.u_current;
        assert_eq!(sm.smooth(&held), held);
    }

    #[test]
    fn gate_examples() {
        let mut g = gate();
        g.u_hat_prev = Twist::new(0.1, 0.0);
        assert_eq!(
            g.gate_velocity(Some(Twist::new(0.12, 0.0))),
            (Twist::new(0.12, 0.0), GateDecision::Accepted)
        );
        let mut g = gate();
        g.u_hat_prev = Twist::new(0.1, 0.0);
        assert_eq!(
            g.gate_velocity(Some(Twist::new(0.5, 0.0))),
            (Twist::new(0.1, 0.0), GateDecision::Rejected)
        );
        assert_eq!(g.gate_velocity(None), (Twist::new(0.1, 0.0), GateDecision::Missing));
        // angular jump limit is N * omegadot * dt = 0.1
        assert_eq!(g.gate_velocity(Some(Twist::new(0.1, 0.11))).1, GateDecision::Rejected);
        assert_eq!(g.gate_velocity(Some(Twist::new(0.1, 0.09))).1, GateDecision::Accepted);
    }

    #[test]
    fn error_bound_constants() {
        let b = Bounds::experimental();
        let q_v = QuantizerSpec::new(0.0, 0.6, 8);
        let q_w = QuantizerSpec::new(-0.2, 0.2, 8);
        let c = error_bounds(&b, &gate(), &q_v, &q_w);
        assert_abs_diff_eq!(c.delta_v_plus, 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(c.v_hat_plus, 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(c.delta_omega_plus, 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(c.omega_hat_plus, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(q_w.max_error(), 0.2 / 256.0, epsilon = 1e-15);
        // a vanishing gate window leaves only quantization
        let tight = VelocityGate::new(1, 1e-9, b);
        let c = error_bounds(&b, &tight, &q_v, &q_w);
        assert_abs_diff_eq!(c.delta_v_plus, 0.6 / 512.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.delta_omega_plus, 0.2 / 256.0, epsilon = 1e-15);
    }

    #[test]
    fn control_equilibrium_and_feedforward() {
        let k = GainConfig::experimental();
        let sb = DesiredPose::new(0.75, 0.0, 0.0);
        let s = sb.as_state();
        assert_eq!(control(&s, &sb, &Twist::zero(), &k), Twist::zero());
        let u = control(&s, &sb, &Twist::new(0.3, 0.0), &k);
        assert_abs_diff_eq!(u.v, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(u.omega, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn control_at_experiment_start() {
        let s = RelativeState::new(1.25, -0.3, 0.0);
        let sb = DesiredPose::new(0.75, 0.0, FRAC_PI_6);
        let u = control(&s, &sb, &Twist::new(0.125, 0.1), &GainConfig::experimental());
        // eps = (0.5, -0.3, -pi/6); K eps + F u = (0.375, -0.225, 0.1 - pi/12)
        // sigma = 1 / 2.5625
        let sig = 1.0 / 2.5625;
        let w = [0.375, -0.225, 0.1 - 0.5 * FRAC_PI_6];
        let v = w[0] + sig * (1.25 * -0.3 * w[1] + -0.3 * w[2]);
        let om = sig * (1.25 * w[1] + w[2]);
        assert_abs_diff_eq!(u.v, v, epsilon = 1e-15);
        assert_abs_diff_eq!(u.omega, om, epsilon = 1e-15);
        assert_abs_diff_eq!(u.v, 0.4268692, epsilon = 1e-7);
        assert_abs_diff_eq!(u.omega, -0.17289732, epsilon = 1e-8);
    }

    #[test]
    fn expanded_rate_matches_identity() {
        let k = GainConfig::new(0.7, 1.3, 0.4);
        for (s, eps, u, uh) in [
            (
                RelativeState::new(0.9, 0.1, 0.4),
                [0.2, -0.1, 0.3],
                Twist::new(0.2, 0.05),
                Twist::new(0.25, 0.0),
            ),
            (
                RelativeState::new(0.5, -0.2, -0.9),
                [-0.4, 0.3, -0.05],
                Twist::new(-0.1, 0.2),
                Twist::new(0.0, 0.1),
            ),
        ] {
            let uf = control_with_error(&s, &eps, &uh, &k);
            let a = lyapunov_rate(&s, &eps, &u, &uf);
            let b = lyapunov_rate_expanded(&s, &eps, &u, &uh, &k);
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn lyapunov_zero() {
        let s = RelativeState::new(0.75, 0.0, 0.0);
        assert_eq!(lyapunov(&[0.0; 3]), 0.0);
        assert_eq!(
            lyapunov_rate(&s, &[0.0; 3], &Twist::new(0.2, 0.1), &Twist::new(0.1, 0.0)),
            0.0
        );
    }

    #[test]
    fn gain_floor_examples() {
        let c = ErrorBoundConstants {
            delta_v_plus: 0.25,
            delta_omega_plus: 0.1,
            v_hat_plus: 0.85,
            omega_hat_plus: 0.3,
        };
        let s = RelativeState::new(0.75, 0.0, 0.0);
        let g = gain_floor(&s, &[0.5, 0.1, 0.1], &c, None).unwrap();
        assert_abs_diff_eq!(g.k1, 1.0, epsilon = 1e-12);
        let g2 = gain_floor(&s, &[1.0, 0.1, 0.1], &c, None).unwrap();
        assert_abs_diff_eq!(g2.k1, 0.5, epsilon = 1e-12);
        assert_eq!(gain_floor(&s, &[0.5, 0.0, 0.1], &c, None), Err(DegenerateError(1)));
        // k2 floor grows with the chosen k3
        let lo = gain_floor(&s, &[0.5, 0.1, 0.1], &c, Some(1.0)).unwrap();
        let hi = gain_floor(&s, &[0.5, 0.1, 0.1], &c, Some(10.0)).unwrap();
        assert!(hi.k2 > lo.k2);
    }
}
