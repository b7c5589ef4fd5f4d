use oisac_core::camera::{self, ObserveOptions};
use oisac_core::controller::{self, DesiredPose, GainConfig, Smoother, VelocityGate};
use oisac_core::ekf::{self, EkfNoise, EkfState};
use oisac_core::geometry::{
    integrate_unicycle, relative_derivative, relative_state, Bounds, Pose2D, RelativeState, Twist,
};
use oisac_core::{CameraIntrinsics, FovLimits, ScreenGeometry};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::{FRAC_PI_3, PI};

fn pose() -> impl Strategy<Value = Pose2D<f64>> {
    (-5.0..5.0f64, -5.0..5.0f64, -PI..PI).prop_map(|(x, y, t)| Pose2D::new(x, y, t))
}

fn twist() -> impl Strategy<Value = Twist<f64>> {
    (-0.6..0.6f64, -0.5..0.5f64).prop_map(|(v, w)| Twist::new(v, w))
}

fn angle_close(a: f64, b: f64, tol: f64) -> bool {
    oisac_core::angle_diff(a, b).abs() <= tol
}

proptest! {
    #[test]
    fn constant_twist_is_a_flow(p in pose(), u in twist(), t1 in 0.001..3.0f64, t2 in 0.001..3.0f64) {
        let once = integrate_unicycle(&p, &u, t1 + t2);
        let twice = integrate_unicycle(&integrate_unicycle(&p, &u, t1), &u, t2);
        prop_assert!((once.x - twice.x).abs() < 1e-12);
        prop_assert!((once.y - twice.y).abs() < 1e-12);
        prop_assert!(angle_close(once.theta, twice.theta, 1e-12));
    }

    #[test]
    fn relative_state_rigid_invariance(l in pose(), f in pose(), rot in -PI..PI, tx in -3.0..3.0f64, ty in -3.0..3.0f64) {
        let a = relative_state(&l, &f);
        let b = relative_state(&l.transformed(rot, tx, ty), &f.transformed(rot, tx, ty));
        prop_assert!((a.x_lf - b.x_lf).abs() < 1e-9);
        prop_assert!((a.y_lf - b.y_lf).abs() < 1e-9);
        prop_assert!(angle_close(a.gamma, b.gamma, 1e-9));
    }

    #[test]
    fn derivative_matches_world_trajectories(l in pose(), f in pose(), ul in twist(), uf in twist()) {
        let h = 1e-5;
        let s0 = relative_state(&l, &f);
        let s1 = relative_state(&integrate_unicycle(&l, &ul, h), &integrate_unicycle(&f, &uf, h));
        let d = relative_derivative(&s0, &ul, &uf);
        prop_assert!(((s1.x_lf - s0.x_lf) / h - d[0]).abs() < 1e-3);
        prop_assert!(((s1.y_lf - s0.y_lf) / h - d[1]).abs() < 1e-3);
        prop_assert!((oisac_core::angle_diff(s1.gamma, s0.gamma) / h - d[2]).abs() < 1e-3);
    }

    #[test]
    fn smoother_rate_limit(targets in prop::collection::vec(twist(), 1..60)) {
        let mut sm = Smoother::new(Twist::new(0.5, 0.2), 20.0);
        let mut prev = sm.u_current;
        for t in &targets {
            let u = sm.smooth(t);
            prop_assert!((u.v - prev.v).abs() <= 0.5 * 0.05 + 1e-12);
            prop_assert!((u.omega - prev.omega).abs() <= 0.2 * 0.05 + 1e-12);
            prev = u;
        }
    }

    #[test]
    fn gate_output_never_jumps(seq in prop::collection::vec(prop::option::of(twist()), 1..80)) {
        let mut gate = VelocityGate::new(5, 0.1, Bounds::experimental());
        let mut prev = gate.u_hat_prev;
        for u in seq {
            let (out, _) = gate.gate_velocity(u);
            prop_assert!((out.v - prev.v).abs() <= 0.25 + 1e-12);
            prop_assert!((out.omega - prev.omega).abs() <= 0.1 + 1e-12);
            prev = out;
        }
    }

    #[test]
    fn feedback_is_linear(x in 0.4..1.25f64, y in -0.3..0.3f64, g in -1.0..1.0f64,
                          e in prop::array::uniform3(-0.5..0.5f64)) {
        // u_f = sigma H (K eps + F u); with u = 0 the map is bilinear in K and eps
        let s = RelativeState::new(x, y, g);
        let k = GainConfig::new(0.5, 0.75, 0.5);
        let base = controller::control_with_error(&s, &e, &Twist::zero(), &k);
        let e2 = e.map(|v| 2.0 * v);
        let quad = controller::control_with_error(&s, &e2, &Twist::zero(), &k.scaled(2.0));
        prop_assert!((quad.v - 4.0 * base.v).abs() < 1e-12);
        prop_assert!((quad.omega - 4.0 * base.omega).abs() < 1e-12);
    }
}

fn visible_state(rng: &mut ChaCha8Rng, fov: &FovLimits, geom: &ScreenGeometry) -> RelativeState<f64> {
    loop {
        let s = RelativeState::new(
            rng.random_range(0.38..1.26),
            rng.random_range(-0.4..0.4),
            rng.random_range(-1.1..1.1),
        );
        if camera::check_visibility(&s, fov, geom).is_ok() {
            return s;
        }
    }
}

#[test]
fn pose_round_trip_over_visible_region() {
    let (k, g, fov) = (
        CameraIntrinsics::experimental(),
        ScreenGeometry::experimental(),
        FovLimits::experimental(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for _ in 0..10_000 {
        let s = visible_state(&mut rng, &fov, &g);
        let Ok(p) = camera::observe(&s, &k, &g, &fov, &ObserveOptions::default(), &mut rng) else {
            continue;
        };
        let e = camera::estimate_pose(&p, &k, &g).unwrap();
        assert!((e.x_lf - s.x_lf).abs() < 1e-9, "{s:?} -> {e:?}");
        assert!((e.y_lf - s.y_lf).abs() < 1e-9, "{s:?} -> {e:?}");
        assert!((e.gamma - s.gamma).abs() < 1e-9, "{s:?} -> {e:?}");
        checked += 1;
    }
    assert!(checked > 6_000, "only {checked} states projected inside the image");
}

#[test]
fn trig_pair_normalizes_as_noise_vanishes() {
    let (k, g, fov) = (
        CameraIntrinsics::experimental(),
        ScreenGeometry::experimental(),
        FovLimits::experimental(),
    );
    let s = RelativeState::new(0.9, 0.05, 0.4);
    let mut prev = f64::INFINITY;
    for sigma in [1.0, 0.1, 0.01, 0.001] {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let opts = ObserveOptions {
                quantize: false,
                noise_sigma: sigma,
            };
            let p = camera::observe(&s, &k, &g, &fov, &opts, &mut rng).unwrap();
            let r = camera::reconstruct_screen(&p, &k, &g).unwrap();
            worst = worst.max((r.sin_gamma.powi(2) + r.cos_gamma.powi(2) - 1.0).abs());
        }
        assert!(worst < prev, "sigma {sigma}: {worst} !< {prev}");
        prev = worst;
    }
    assert!(prev < 1e-3);
}

/// First-order depth error for a half-pixel shift of the vertical coordinates.
fn depth_quantization_bound(f: f64, s: &RelativeState<f64>) -> f64 {
    let k = CameraIntrinsics {
        f_m: f,
        f_n: f,
        ..CameraIntrinsics::experimental()
    };
    let g = ScreenGeometry::experimental();
    let pts = camera::feature_points_camera(s, &g).unwrap();
    let px = pts.map(|p| camera::project(&p, &k).unwrap());
    let p0 = camera::FeaturePixels::from_array(px);
    let h = 1e-4;
    let mut total = 0.0;
    for which in 0..3 {
        let eval = |d: f64| {
            let mut p = p0;
            match which {
                0 => p.a.n += d,
                1 => p.b.n += d,
                _ => p.c.n += d,
            }
            camera::estimate_pose(&p, &k, &g).unwrap().x_lf
        };
        total += 0.5 * ((eval(h) - eval(-h)) / (2.0 * h)).abs();
    }
    total
}

#[test]
fn halving_focal_scale_doubles_depth_error_bound() {
    let s = RelativeState::new(0.9, 0.0, 0.3);
    for f in [500.0, 1000.0, 2000.0] {
        let ratio = depth_quantization_bound(f / 2.0, &s) / depth_quantization_bound(f, &s);
        assert!((ratio - 2.0).abs() < 0.4, "f={f}: ratio {ratio}");
    }
}

#[test]
fn quantized_error_within_first_order_bound() {
    // Whole-pixel rounding error stays inside the half-pixel linearized bound
    // (with 10% slack for curvature) across the operating grid.
    let (k, g, fov) = (
        CameraIntrinsics::experimental(),
        ScreenGeometry::experimental(),
        FovLimits::experimental(),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let opts = ObserveOptions {
        quantize: true,
        noise_sigma: 0.0,
    };
    for i in 0..16 {
        for j in 0..25 {
            let s = RelativeState::new(
                0.5 + 0.05 * i as f64,
                0.0,
                -FRAC_PI_3 + j as f64 * 2.0 * FRAC_PI_3 / 24.0,
            );
            let Ok(p) = camera::observe(&s, &k, &g, &fov, &opts, &mut rng) else {
                continue;
            };
            let e = camera::estimate_pose(&p, &k, &g).unwrap();
            let bound = depth_quantization_bound(500.0, &s);
            assert!((e.x_lf - s.x_lf).abs() <= 1.1 * bound + 1e-12, "{s:?}");
        }
    }
}

#[test]
fn lyapunov_rate_matches_finite_difference() {
    // closed loop with perfect velocity knowledge, exact kinematics
    let gains = GainConfig::experimental();
    let s_bar = DesiredPose::new(0.75, 0.0, FRAC_PI_3 / 2.0);
    let u_l = Twist::new(0.125, 0.1);
    let mut leader = Pose2D::new(1.25, -0.3, 0.0);
    let mut follower = Pose2D::new(0.0, 0.0, 0.0);
    let dt = 1e-3;
    let h = 1e-5;
    for step in 0..4000 {
        let s = relative_state(&leader, &follower);
        let u_f = controller::control(&s, &s_bar, &u_l, &gains);
        if step % 500 == 0 {
            let eps = s_bar.error(&s);
            let rate = controller::lyapunov_rate(&s, &eps, &u_l, &u_f);
            let v_at = |t: f64| {
                let st = relative_state(
                    &integrate_unicycle(&leader, &u_l, t),
                    &integrate_unicycle(&follower, &u_f, t),
                );
                controller::lyapunov(&s_bar.error(&st))
            };
            let fd = (v_at(h) - v_at(-h)) / (2.0 * h);
            assert!((fd - rate).abs() < 1e-8, "step {step}: fd {fd} vs {rate}");
        }
        leader = integrate_unicycle(&leader, &u_l, dt);
        follower = integrate_unicycle(&follower, &u_f, dt);
    }
}

#[test]
fn lyapunov_decreases_early_in_circular_transient() {
    let gains = GainConfig::experimental();
    let s_bar = DesiredPose::new(0.75, 0.0, FRAC_PI_3 / 2.0);
    let u_l = Twist::new(0.125, 0.1);
    let mut leader = Pose2D::new(1.25, -0.3, 0.0);
    let mut follower = Pose2D::new(0.0, 0.0, 0.0);
    let dt = 1e-3;
    for _ in 0..5000 {
        let s = relative_state(&leader, &follower);
        let u_f = controller::control(&s, &s_bar, &u_l, &gains);
        let eps = s_bar.error(&s);
        assert!(controller::lyapunov_rate(&s, &eps, &u_l, &u_f) < 0.0);
        leader = integrate_unicycle(&leader, &u_l, dt);
        follower = integrate_unicycle(&follower, &u_f, dt);
    }
}

#[test]
fn circular_orbit_equilibrium_is_invariant() {
    // A rigid formation behind a turning leader needs v sin(gamma) = x omega;
    // pick the heading that satisfies it at x = 0.75, y = 0.
    let u_l = Twist::new(0.125, 0.1);
    let x_bar: f64 = 0.75;
    let gamma_bar = (x_bar * u_l.omega / u_l.v).asin();
    let s_bar = DesiredPose::new(x_bar, 0.0, gamma_bar);
    let follower0 = Pose2D::new(0.0, 0.0, 0.0);
    let mut leader = Pose2D::new(x_bar, 0.0, gamma_bar);
    let mut follower = follower0;
    let gains = GainConfig::experimental();
    let dt = 1e-3;
    for _ in 0..60_000 {
        let s = relative_state(&leader, &follower);
        let eps = s_bar.error(&s);
        assert!(eps.iter().map(|e| e * e).sum::<f64>().sqrt() <= 1e-3);
        let u_f = controller::control(&s, &s_bar, &u_l, &gains);
        leader = integrate_unicycle(&leader, &u_l, dt);
        follower = integrate_unicycle(&follower, &u_f, dt);
    }
}

#[test]
fn ekf_covariance_stays_symmetric_pd() {
    let noise = EkfNoise::default();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut st = EkfState::new(&RelativeState::new(0.8, 0.0, 0.1), 0.1);
    for i in 0..10_000 {
        let u = Twist::new(rng.random_range(-0.6..0.6), rng.random_range(-0.2..0.2));
        st = ekf::predict(&st, &u, rng.random_range(0.01..0.2), &noise);
        if i % 2 == 0 {
            let z = RelativeState::new(
                st.mean[0] + rng.random_range(-0.05..0.05),
                st.mean[1] + rng.random_range(-0.05..0.05),
                st.mean[2] + rng.random_range(-0.05..0.05),
            );
            st = ekf::update(&st, &z, &noise).unwrap();
        }
        assert!(st.is_symmetric_pd(), "cycle {i}");
    }
}

/// Runs the filter against a leader at constant twist with exact pose
/// measurements at 10 Hz; the follower holds `u_f`. Returns (t, v_est, omega_est).
fn track_constant_leader(u_l: Twist<f64>, u_f: Twist<f64>, seconds: f64) -> Vec<(f64, f64, f64)> {
    let noise = EkfNoise::default();
    let mut leader = Pose2D::new(0.8, 0.0, 0.0);
    let mut follower = Pose2D::new(0.0, 0.0, 0.0);
    let mut st = EkfState::new(&relative_state(&leader, &follower), 0.1);
    let dt = 0.1;
    let mut out = Vec::new();
    let steps = (seconds / dt).round() as usize;
    for i in 1..=steps {
        leader = integrate_unicycle(&leader, &u_l, dt);
        follower = integrate_unicycle(&follower, &u_f, dt);
        st = ekf::predict(&st, &u_f, dt, &noise);
        st = ekf::update(&st, &relative_state(&leader, &follower), &noise).unwrap();
        out.push((i as f64 * dt, st.mean[3], st.mean[4]));
    }
    out
}

#[test]
fn ekf_velocity_settles_within_three_seconds() {
    let track = track_constant_leader(Twist::new(0.3, 0.0), Twist::new(0.3, 0.0), 10.0);
    let after: Vec<_> = track.iter().filter(|(t, _, _)| *t >= 3.0 - 1e-9).collect();
    for (t, v, _) in after {
        assert!((v - 0.3).abs() <= 0.02, "t={t}: v_est={v}");
    }
}

#[test]
fn ekf_velocity_converges_exactly_without_noise() {
    let track = track_constant_leader(Twist::new(0.3, 0.0), Twist::new(0.25, 0.0), 10.0);
    let (_, v, w) = *track.last().unwrap();
    assert!((v - 0.3).abs() < 1e-3, "v_est={v}");
    assert!(w.abs() < 1e-3, "w_est={w}");
}
