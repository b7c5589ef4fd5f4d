//! Fixed-step simulation loop.
//!
//! The base clock ticks every millisecond. Within one tick the events run in
//! a fixed order: publish, display, capture (sensing, estimation, control),
//! smooth, integrate.

use oisac_core::camera::{self, check_visibility, ObserveOptions, Violation};
use oisac_core::controller::{control, lyapunov, GateDecision};
use oisac_core::ekf::{self, EkfState};
use oisac_core::geometry::{integrate_unicycle, relative_state};
use oisac_core::{Pose2D, RelativeState, Smoother, Twist, VelocityGate};
use oisac_link::channel::{apply_channel_packet, apply_channel_raster, PacketOutcome};
use oisac_link::queue::DisplayQueue;
use oisac_link::synth::{camera_view, warp_frame, SCENE_BACKGROUND};
use oisac_link::{decode_payload, detect_markers, render_frame, DetectorConfig, PayloadCodec, VelocityPayload};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ticks_per, ConfigError, EstimatorKind, ScenarioConfig, SensingMode};
use crate::metrics::{compute_metrics, Metrics};

/// What happened to the leader's message at a camera tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinkStatus {
    /// Received and accepted by the gate.
    Accepted,
    /// Received but rejected by the gate.
    Gated,
    /// Lost in the channel or failed to decode.
    Dropped,
    /// Nothing on the screen yet.
    NoFrame,
    /// The estimator does not read the screen.
    Unused,
}

impl LinkStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Accepted => "accepted",
            Self::Gated => "gated",
            Self::Dropped => "dropped",
            Self::NoFrame => "no_frame",
            Self::Unused => "unused",
        }
    }
}

/// One row per camera tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub t: f64,
    pub leader: Pose2D,
    pub follower: Pose2D,
    pub s_true: RelativeState,
    pub s_est: RelativeState,
    pub u_hat: Twist,
    pub u_l: Twist,
    /// Control output before smoothing.
    pub u_cmd: Twist,
    /// Velocity applied after this tick's smoothing step.
    pub u_f: Twist,
    pub link: LinkStatus,
    /// Whether a fresh pose estimate was obtained.
    pub pose_ok: bool,
    pub eps: [f64; 3],
    pub v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisibilityLoss {
    pub t: f64,
    pub violation: Violation,
}

/// Leader stop and follower path length after it, tracked at the base rate.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct BrakingTracker {
    leader_moved: bool,
    stopped_at: Option<f64>,
    distance: f64,
    done: bool,
}

impl BrakingTracker {
    fn step(&mut self, t: f64, u_l: &Twist, target: &Twist, u_f: &Twist, dt: f64) {
        if u_l.v != 0.0 {
            self.leader_moved = true;
        }
        if self.stopped_at.is_none() {
            if self.leader_moved && u_l.v == 0.0 && target.v == 0.0 {
                self.stopped_at = Some(t);
            } else {
                return;
            }
        }
        if self.done {
            return;
        }
        if u_f.v <= 0.0 {
            self.done = true;
        } else {
            self.distance += u_f.v * dt;
        }
    }

    fn result(&self) -> Option<f64> {
        if !self.leader_moved {
            return Some(0.0);
        }
        self.done.then_some(self.distance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<SimRecord>,
    pub metrics: Metrics,
}

/// Random streams fanned out from the master seed.
pub mod streams {
    pub const CHANNEL: u64 = 1;
    pub const SENSING: u64 = 2;
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Follower pose that puts the leader (at the origin, heading 0) at `s`.
pub fn follower_pose_for(s: &RelativeState) -> Pose2D {
    let theta = -s.gamma;
    let (sn, cs) = theta.sin_cos();
    Pose2D::new(-(cs * s.x_lf - sn * s.y_lf), -(sn * s.x_lf + cs * s.y_lf), theta)
}

fn rate_limit(cur: f64, target: f64, step: f64) -> f64 {
    if target > cur {
        target.min(cur + step)
    } else {
        target.max(cur - step)
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput, ConfigError> {
    cfg.validate()?;
    let dt = 1e-3;
    let n_ticks = (cfg.total_duration() * 1000.0).round() as u64;
    let pub_ticks = ticks_per(cfg.rates.f_pub).ok_or(ConfigError::Rates)?;
    let cam_ticks = ticks_per(cfg.rates.f_cam).ok_or(ConfigError::Rates)?;
    let fv_ticks = ticks_per(cfg.rates.f_v).ok_or(ConfigError::Rates)?;

    let mut channel_rng = stream_rng(cfg.seed ^ cfg.channel.seed, streams::CHANNEL);
    let mut sensing_rng = stream_rng(cfg.seed, streams::SENSING);

    let codec = PayloadCodec::for_bounds(&cfg.bounds);
    let mut queue: DisplayQueue<VelocityPayload> = DisplayQueue::new(cfg.queue);
    let mut gate = VelocityGate::new(cfg.gate.n, cfg.gate.delta_t, cfg.bounds);
    let mut smoother = Smoother::new(cfg.smoother_accel(), cfg.rates.f_v);
    let mut filter = EkfState::new(&cfg.s0, cfg.ekf.p0);
    let observe_opts = ObserveOptions {
        quantize: cfg.pixel_noise.quantize,
        noise_sigma: cfg.pixel_noise.sigma,
    };
    let detector = DetectorConfig::default();

    let mut leader = Pose2D::new(0.0, 0.0, 0.0);
    let mut follower = follower_pose_for(&cfg.s0);
    let mut u_l = Twist::zero();
    let mut u_f = Twist::zero();
    let mut follower_accel = 0.0;
    let mut s_est = cfg.s0;
    let mut u_cmd = Twist::zero();
    let mut seq: u16 = 0;
    let mut braking = BrakingTracker::default();
    let mut lost = None;
    let mut records = Vec::with_capacity((n_ticks / cam_ticks + 1) as usize);

    for k in 0..n_ticks {
        let t = k as f64 * dt;

        if k % pub_ticks == 0 {
            queue.publish(t, codec.encode(&u_l, seq, k as u32));
            seq = seq.wrapping_add(1);
        }

        queue.advance(t);

        let mut pending = None;
        if k % cam_ticks == 0 {
            let s_true = relative_state(&leader, &follower);
            if let Err(violation) = check_visibility(&s_true, &cfg.fov, &cfg.screen) {
                lost = Some(VisibilityLoss { t, violation });
                break;
            }
            let shown = queue.on_screen().map(|(_, p)| *p);
            let reads_link = cfg.estimator == EstimatorKind::Oisac;
            let (pose, received) = match cfg.sensing {
                SensingMode::Ideal => {
                    let pose = camera::observe(
                        &s_true,
                        &cfg.camera,
                        &cfg.screen,
                        &cfg.fov,
                        &observe_opts,
                        &mut sensing_rng,
                    )
                    .and_then(|f| camera::estimate_pose(&f, &cfg.camera, &cfg.screen))
                    .ok();
                    let received = match shown {
                        None => None,
                        Some(_) if !reads_link => Some(None),
                        Some(p) => Some(
                            match apply_channel_packet(&p, &s_true, &cfg.channel, &mut channel_rng) {
                                PacketOutcome::Delivered(p) => Some(p),
                                PacketOutcome::Dropped => None,
                            },
                        ),
                    };
                    (pose, received)
                }
                SensingMode::Raster => match shown {
                    None => (None, None),
                    Some(p) => {
                        let frame = render_frame(&p, &cfg.layout, cfg.modulation).expect("layout holds the payload");
                        let captured = camera_view(&s_true, &cfg.camera, &cfg.screen, &cfg.layout).map(|h| {
                            let img = warp_frame(
                                &frame,
                                &h,
                                cfg.camera.width as usize,
                                cfg.camera.height as usize,
                                SCENE_BACKGROUND,
                            );
                            apply_channel_raster(&img, follower_accel, &cfg.channel, &mut channel_rng)
                        });
                        match captured {
                            Err(_) => (None, Some(None)),
                            Ok(img) => match detect_markers(&img, &cfg.layout, &detector) {
                                Err(_) => (None, Some(None)),
                                Ok(features) => {
                                    let pose = camera::estimate_pose(&features, &cfg.camera, &cfg.screen).ok();
                                    let payload = if reads_link {
                                        decode_payload(&img, &cfg.layout, cfg.modulation, &features)
                                            .ok()
                                            .map(|(p, _)| p)
                                    } else {
                                        None
                                    };
                                    (pose, Some(payload))
                                }
                            },
                        }
                    }
                },
            };

            let u_hat;
            let link;
            match cfg.estimator {
                EstimatorKind::Oisac => {
                    if let Some(p) = pose {
                        s_est = p;
                    }
                    let candidate = received.flatten().map(|p| codec.decode(&p));
                    let (u, decision) = gate.gate_velocity(candidate);
                    u_hat = u;
                    link = match (received, decision) {
                        (None, _) => LinkStatus::NoFrame,
                        (_, GateDecision::Accepted) => LinkStatus::Accepted,
                        (_, GateDecision::Rejected) => LinkStatus::Gated,
                        (_, GateDecision::Missing) => LinkStatus::Dropped,
                    };
                }
                EstimatorKind::Ekf => {
                    if let Some(z) = pose {
                        if let Ok(next) = ekf::update(&filter, &z, &cfg.ekf.noise) {
                            filter = next;
                        }
                    }
                    s_est = filter.pose();
                    u_hat = filter.leader_velocity();
                    link = LinkStatus::Unused;
                }
            }

            let desired = cfg.desired_at(t);
            u_cmd = control(&s_est, &desired, &u_hat, &cfg.gains);
            let eps = desired.error(&s_true);
            pending = Some(SimRecord {
                t,
                leader,
                follower,
                s_true,
                s_est,
                u_hat,
                u_l,
                u_cmd,
                u_f,
                link,
                pose_ok: pose.is_some(),
                eps,
                v: lyapunov(&eps),
            });
        }

        if k % fv_ticks == 0 {
            let prev = u_f;
            u_f = smoother.smooth(&u_cmd).clamped(&cfg.bounds);
            smoother.u_current = u_f;
            follower_accel = (u_f.v - prev.v).abs() * cfg.rates.f_v;
            if cfg.estimator == EstimatorKind::Ekf {
                filter = ekf::predict(&filter, &u_f, 1.0 / cfg.rates.f_v, &cfg.ekf.noise);
            }
        }

        if let Some(mut r) = pending {
            r.u_f = u_f;
            records.push(r);
        }

        let target = cfg.leader_target(t);
        u_l = Twist::new(
            rate_limit(u_l.v, target.v, cfg.bounds.vdot_max * dt),
            rate_limit(u_l.omega, target.omega, cfg.bounds.omegadot_max * dt),
        );
        leader = integrate_unicycle(&leader, &u_l, dt);
        follower = integrate_unicycle(&follower, &u_f, dt);
        braking.step(t + dt, &u_l, &target, &u_f, dt);
    }

    let metrics = compute_metrics(&records, braking.result(), lost);
    Ok(RunOutput { records, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{preset_braking, preset_circular, Segment};

    #[test]
    fn follower_placement_reproduces_initial_state() {
        let s = RelativeState::new(1.1, -0.2, 0.4);
        let back = relative_state(&Pose2D::new(0.0, 0.0, 0.0), &follower_pose_for(&s));
        assert!((back.x_lf - s.x_lf).abs() < 1e-12);
        assert!((back.y_lf - s.y_lf).abs() < 1e-12);
        assert!((back.gamma - s.gamma).abs() < 1e-12);
    }

    #[test]
    fn zero_length_profile_is_empty() {
        let cfg = ScenarioConfig {
            profile: Vec::new(),
            ..ScenarioConfig::default()
        };
        let out = run(&cfg).unwrap();
        assert!(out.records.is_empty());
        assert_eq!(out.metrics.records, 0);
        assert_eq!(out.metrics.steady_band, [0.0; 3]);
    }

    #[test]
    fn one_record_per_camera_tick() {
        let mut cfg = preset_circular();
        cfg.duration = Some(5.0);
        let out = run(&cfg).unwrap();
        assert_eq!(out.records.len(), 50);
        assert!((out.records[1].t - 0.1).abs() < 1e-12);
    }

    #[test]
    fn standing_leader_gives_zero_braking_distance() {
        let out = run(&preset_braking(0.0)).unwrap();
        assert_eq!(out.metrics.braking_distance, Some(0.0));
    }

    #[test]
    fn leaving_the_field_of_view_stops_the_run() {
        let mut cfg = preset_braking(0.3);
        cfg.profile = vec![Segment {
            duration: 20.0,
            twist: Twist::new(0.6, 0.0),
        }];
        cfg.accel = Some(Twist::new(1e-4, 1e-4));
        let out = run(&cfg).unwrap();
        let lost = out.metrics.visibility_lost.expect("leader escapes");
        assert_eq!(lost.violation, Violation::Range);
        assert!(out.records.len() < 200);
    }
}
