//! Scenario configuration and the three experiment presets.

use std::f64::consts::{FRAC_PI_6, PI};
use std::path::Path;

use oisac_core::camera::{check_visibility, Violation};
use oisac_core::{
    Bounds, CameraIntrinsics, DesiredPose, EkfNoise, FovLimits, GainConfig, RelativeState, ScreenGeometry, Twist,
};
use oisac_link::{ChannelConfig, DisplayQueueConfig, FrameLayout, Modulation};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SensingMode {
    /// Analytic projection of the feature points plus the packet-level channel.
    #[default]
    Ideal,
    /// Render, corrupt and decode every captured frame.
    Raster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// Leader velocity read from the screen.
    #[default]
    Oisac,
    /// Leader velocity inferred by the EKF from poses alone.
    Ekf,
}

/// Leader holds `twist` (reached under its acceleration limits) for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub duration: f64,
    pub twist: Twist,
}

/// Desired pose taking effect at `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesiredSwitch {
    pub start: f64,
    pub pose: DesiredPose,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub f_cam: f64,
    pub f_v: f64,
    pub f_pub: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            f_cam: 10.0,
            f_v: 20.0,
            f_pub: 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GateConfig {
    pub n: u32,
    pub delta_t: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self { n: 5, delta_t: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EkfConfig {
    pub noise: EkfNoise,
    pub p0: f64,
}

impl Default for EkfConfig {
    fn default() -> Self {
        Self {
            noise: EkfNoise::default(),
            p0: 0.1,
        }
    }
}

/// Pixel corruption for ideal sensing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PixelNoise {
    pub quantize: bool,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub name: String,
    pub profile: Vec<Segment>,
    pub s0: RelativeState,
    pub desired: Vec<DesiredSwitch>,
    pub sensing: SensingMode,
    pub estimator: EstimatorKind,
    pub channel: ChannelConfig,
    pub queue: DisplayQueueConfig,
    pub rates: Rates,
    /// Simulated time; `None` runs to the end of the profile.
    pub duration: Option<f64>,
    pub seed: u64,
    pub gains: GainConfig,
    pub bounds: Bounds,
    pub gate: GateConfig,
    /// Follower smoother accelerations; `None` uses the bounds.
    pub accel: Option<Twist>,
    pub ekf: EkfConfig,
    pub pixel_noise: PixelNoise,
    pub camera: CameraIntrinsics,
    pub screen: ScreenGeometry,
    pub fov: FovLimits,
    pub layout: FrameLayout,
    pub modulation: Modulation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "custom".into(),
            profile: Vec::new(),
            s0: RelativeState::new(0.75, 0.0, 0.0),
            desired: vec![DesiredSwitch {
                start: 0.0,
                pose: DesiredPose::new(0.75, 0.0, 0.0),
            }],
            sensing: SensingMode::Ideal,
            estimator: EstimatorKind::Oisac,
            channel: ChannelConfig::default(),
            queue: DisplayQueueConfig::default(),
            rates: Rates::default(),
            duration: None,
            seed: 0,
            gains: GainConfig::experimental(),
            bounds: Bounds::experimental(),
            gate: GateConfig::default(),
            accel: None,
            ekf: EkfConfig::default(),
            pixel_noise: PixelNoise::default(),
            camera: CameraIntrinsics::experimental(),
            screen: ScreenGeometry::experimental(),
            fov: FovLimits::experimental(),
            layout: FrameLayout::default(),
            modulation: Modulation::default(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("segment {0} has a non-positive duration")]
    Segment(usize),
    #[error("rates must be positive and divide the 1 kHz base clock")]
    Rates,
    #[error("initial state not visible: {0:?}")]
    Initial(Violation),
    #[error("desired pose {0} not visible: {1:?}")]
    Desired(usize, Violation),
    #[error("desired schedule must be non-empty, sorted and start at 0")]
    Schedule,
    #[error("invalid parameter: {0}")]
    Parameter(&'static str),
    #[error("reading config: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Base clock ticks per event period, if `rate` divides 1 kHz.
pub fn ticks_per(rate: f64) -> Option<u64> {
    if !(rate > 0.0) {
        return None;
    }
    let t = 1000.0 / rate;
    (t >= 1.0 && (t - t.round()).abs() < 1e-9).then(|| t.round() as u64)
}

impl ScenarioConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn profile_duration(&self) -> f64 {
        self.profile.iter().map(|s| s.duration).sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.duration.unwrap_or_else(|| self.profile_duration())
    }

    /// Segment target at time `t`; zero past the end of the profile.
    pub fn leader_target(&self, t: f64) -> Twist {
        let mut end = 0.0;
        for seg in &self.profile {
            end += seg.duration;
            if t < end {
                return seg.twist;
            }
        }
        Twist::zero()
    }

    pub fn desired_at(&self, t: f64) -> DesiredPose {
        self.desired
            .iter()
            .take_while(|d| d.start <= t)
            .last()
            .or(self.desired.first())
            .map(|d| d.pose)
            .unwrap_or_else(|| DesiredPose::new(self.s0.x_lf, self.s0.y_lf, self.s0.gamma))
    }

    pub fn smoother_accel(&self) -> Twist {
        self.accel
            .unwrap_or(Twist::new(self.bounds.vdot_max, self.bounds.omegadot_max))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(i) = self.profile.iter().position(|s| !(s.duration > 0.0)) {
            return Err(ConfigError::Segment(i));
        }
        let r = &self.rates;
        if ticks_per(r.f_cam).is_none() || ticks_per(r.f_v).is_none() || ticks_per(r.f_pub).is_none() {
            return Err(ConfigError::Rates);
        }
        if (self.queue.f_pub - r.f_pub).abs() > 1e-12 {
            return Err(ConfigError::Parameter("queue.f_pub must equal rates.f_pub"));
        }
        check_visibility(&self.s0, &self.fov, &self.screen).map_err(ConfigError::Initial)?;
        if self.desired.is_empty()
            || self.desired[0].start != 0.0
            || self.desired.windows(2).any(|w| w[1].start < w[0].start)
        {
            return Err(ConfigError::Schedule);
        }
        for (i, d) in self.desired.iter().enumerate() {
            check_visibility(&d.pose.as_state(), &self.fov, &self.screen).map_err(|v| ConfigError::Desired(i, v))?;
        }
        if !self.gains.is_valid() {
            return Err(ConfigError::Parameter("gains"));
        }
        if !self.bounds.is_valid() {
            return Err(ConfigError::Parameter("bounds"));
        }
        if self.gate.n == 0 || !(self.gate.delta_t > 0.0) {
            return Err(ConfigError::Parameter("gate"));
        }
        if !self.ekf.noise.is_valid() || !(self.ekf.p0 > 0.0) {
            return Err(ConfigError::Parameter("ekf"));
        }
        if !self.queue.is_valid() {
            return Err(ConfigError::Parameter("queue"));
        }
        if !self.camera.is_valid() || !self.screen.is_valid() || !self.fov.is_valid() {
            return Err(ConfigError::Parameter("camera"));
        }
        if self.layout.validate().is_err() {
            return Err(ConfigError::Parameter("layout"));
        }
        if self.channel.plr.validate().is_err() {
            return Err(ConfigError::Parameter("channel.plr"));
        }
        let a = self.smoother_accel();
        if !(a.v > 0.0 && a.omega > 0.0) {
            return Err(ConfigError::Parameter("accel"));
        }
        if self.duration.is_some_and(|d| !(d >= 0.0)) {
            return Err(ConfigError::Parameter("duration"));
        }
        Ok(())
    }

    pub fn with_estimator(mut self, e: EstimatorKind) -> Self {
        self.estimator = e;
        self
    }

    pub fn with_sensing(mut self, s: SensingMode) -> Self {
        self.sensing = s;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Circular,
    Braking,
    Ushape,
}

/// Leader on a circle, follower starting off to the side.
pub fn preset_circular() -> ScenarioConfig {
    ScenarioConfig {
        name: "circular".into(),
        profile: vec![Segment {
            duration: 90.0,
            twist: Twist::new(0.125, 0.1),
        }],
        s0: RelativeState::new(1.25, -0.3, 0.0),
        desired: vec![DesiredSwitch {
            start: 0.0,
            pose: DesiredPose::new(0.75, 0.0, FRAC_PI_6),
        }],
        ..ScenarioConfig::default()
    }
}

/// Straight-line cruise at `v_level` for 30 s, then a full stop at maximum
/// deceleration.
pub fn preset_braking(v_level: f64) -> ScenarioConfig {
    let mut profile = Vec::new();
    if v_level > 0.0 {
        profile.push(Segment {
            duration: 30.0,
            twist: Twist::new(v_level, 0.0),
        });
    }
    profile.push(Segment {
        duration: 10.0,
        twist: Twist::zero(),
    });
    ScenarioConfig {
        name: "braking".into(),
        profile,
        s0: RelativeState::new(0.75, 0.0, 0.0),
        desired: vec![DesiredSwitch {
            start: 0.0,
            pose: DesiredPose::new(0.75, 0.0, 0.0),
        }],
        ..ScenarioConfig::default()
    }
}

/// Braking levels of the sweep.
pub const BRAKING_LEVELS: [f64; 6] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];

/// Straight, half turn, straight.
pub fn preset_ushape() -> ScenarioConfig {
    let turn = PI / 30.0;
    let straight = 20.0;
    let half_turn = PI / turn;
    let a = DesiredPose::new(0.6, 0.0, 0.0);
    let b = DesiredPose::new(0.6, 0.15, FRAC_PI_6);
    ScenarioConfig {
        name: "ushape".into(),
        profile: vec![
            Segment {
                duration: straight,
                twist: Twist::new(0.3, 0.0),
            },
            Segment {
                duration: half_turn,
                twist: Twist::new(0.1, turn),
            },
            Segment {
                duration: straight,
                twist: Twist::new(0.3, 0.0),
            },
        ],
        s0: RelativeState::new(0.9, 0.1, 0.31),
        desired: vec![
            DesiredSwitch { start: 0.0, pose: a },
            DesiredSwitch {
                start: straight,
                pose: b,
            },
            DesiredSwitch {
                start: straight + half_turn,
                pose: a,
            },
        ],
        ..ScenarioConfig::default()
    }
}

pub fn preset(p: Preset) -> ScenarioConfig {
    match p {
        Preset::Circular => preset_circular(),
        Preset::Braking => preset_braking(0.3),
        Preset::Ushape => preset_ushape(),
    }
}
