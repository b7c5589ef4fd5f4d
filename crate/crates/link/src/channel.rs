//! Optical channel: packet loss from distance and view angle, and raster
//! corruption from motion blur and sensor noise.

use oisac_core::geometry::RelativeState;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::payload::VelocityPayload;
use crate::raster::FrameRaster;

/// Measured loss curves: distance in cm and view angle in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlrTable {
    pub distance: Vec<(f64, f64)>,
    pub angle: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlrTableError {
    #[error("{0} curve needs at least two points")]
    TooShort(&'static str),
    #[error("{0} curve abscissae must be strictly increasing")]
    NotIncreasing(&'static str),
    #[error("{0} curve has a probability outside [0, 1]")]
    BadProbability(&'static str),
}

impl Default for PlrTable {
    fn default() -> Self {
        Self {
            distance: vec![
                (50.0, 0.005),
                (60.0, 0.006),
                (70.0, 0.007),
                (80.0, 0.008),
                (90.0, 0.010),
                (100.0, 0.011),
                (110.0, 0.017),
                (120.0, 0.028),
                (130.0, 0.057),
                (140.0, 0.102),
                (150.0, 0.357),
            ],
            angle: vec![
                (0.0, 0.007),
                (10.0, 0.008),
                (20.0, 0.010),
                (30.0, 0.010),
                (40.0, 0.011),
                (50.0, 0.013),
            ],
        }
    }
}

/// Piecewise-linear lookup. Below the table it holds the first value; past
/// the end it ramps to certain loss over one more table step.
pub fn interpolate(curve: &[(f64, f64)], x: f64) -> f64 {
    // unit conversion can leave a query a few ulps off a table abscissa
    if let Some(&(_, p)) = curve.iter().find(|(xa, _)| (x - xa).abs() <= 1e-9 * xa.abs().max(1.0)) {
        return p;
    }
    let (x0, p0) = curve[0];
    if x <= x0 {
        return p0;
    }
    for w in curve.windows(2) {
        let ((xa, pa), (xb, pb)) = (w[0], w[1]);
        if x <= xb {
            return pa + (pb - pa) * (x - xa) / (xb - xa);
        }
    }
    let n = curve.len();
    let (xl, pl) = curve[n - 1];
    let step = xl - curve[n - 2].0;
    (pl + (1.0 - pl) * (x - xl) / step).min(1.0)
}

impl PlrTable {
    pub fn validate(&self) -> Result<(), PlrTableError> {
        for (name, curve) in [("distance", &self.distance), ("angle", &self.angle)] {
            if curve.len() < 2 {
                return Err(PlrTableError::TooShort(name));
            }
            if curve.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                return Err(PlrTableError::NotIncreasing(name));
            }
            if curve.iter().any(|(_, p)| !(0.0..=1.0).contains(p)) {
                return Err(PlrTableError::BadProbability(name));
            }
        }
        Ok(())
    }

    pub fn distance_loss(&self, distance_m: f64) -> f64 {
        interpolate(&self.distance, distance_m * 100.0)
    }

    pub fn angle_loss(&self, view_angle: f64) -> f64 {
        interpolate(&self.angle, view_angle.abs().to_degrees())
    }
}

/// Loss probability, treating distance and angle losses as independent.
pub fn plr(distance_m: f64, view_angle: f64, table: &PlrTable) -> f64 {
    let pd = table.distance_loss(distance_m);
    let pa = table.angle_loss(view_angle);
    1.0 - (1.0 - pd) * (1.0 - pa)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    #[default]
    Packet,
    Raster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelConfig {
    #[serde(default)]
    pub plr: PlrTable,
    /// Standard deviation of additive intensity noise.
    pub noise_sigma: f64,
    /// Motion-blur length in pixels per m/s^2 of acceleration.
    pub blur_gain: f64,
    pub mode: ChannelMode,
    pub seed: u64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            plr: PlrTable::default(),
            noise_sigma: 2.0,
            blur_gain: 10.0,
            mode: ChannelMode::Packet,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketOutcome {
    Delivered(VelocityPayload),
    Dropped,
}

pub fn apply_channel_packet<R: Rng + ?Sized>(
    payload: &VelocityPayload,
    s: &RelativeState<f64>,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> PacketOutcome {
    let p = plr(s.range(), s.gamma, &cfg.plr);
    if rng.random::<f64>() < p {
        PacketOutcome::Dropped
    } else {
        PacketOutcome::Delivered(*payload)
    }
}

/// Blur length in whole pixels for an acceleration magnitude.
pub fn blur_length(accel_mag: f64, blur_gain: f64) -> usize {
    (blur_gain * accel_mag.abs()).round() as usize
}

/// Horizontal box filter of `len` pixels with edge replication.
pub fn box_blur_horizontal(r: &FrameRaster, len: usize) -> FrameRaster {
    if len <= 1 {
        return r.clone();
    }
    let mut out = r.clone();
    let before = (len - 1) / 2;
    let w = r.width as i64;
    let mut row = vec![0u32; r.width];
    for y in 0..r.height {
        for (x, v) in row.iter_mut().enumerate() {
            *v = u32::from(r.get(x, y));
        }
        // running sum over the clamped window
        let at = |i: i64| row[i.clamp(0, w - 1) as usize];
        let mut sum: u32 = (0..len as i64).map(|k| at(k - before as i64)).sum();
        for x in 0..w {
            out.set(x as usize, y, ((sum + len as u32 / 2) / len as u32) as u8);
            sum += at(x + len as i64 - before as i64);
            sum -= at(x - before as i64);
        }
    }
    out
}

pub fn add_noise<R: Rng + ?Sized>(r: &mut FrameRaster, sigma: f64, rng: &mut R) {
    if sigma <= 0.0 {
        return;
    }
    let n = Normal::new(0.0, sigma).expect("finite sigma");
    for v in r.data.iter_mut() {
        *v = (f64::from(*v) + n.sample(rng)).round().clamp(0.0, 255.0) as u8;
    }
}

pub fn apply_channel_raster<R: Rng + ?Sized>(
    raster: &FrameRaster,
    accel_mag: f64,
    cfg: &ChannelConfig,
    rng: &mut R,
) -> FrameRaster {
    let mut out = box_blur_horizontal(raster, blur_length(accel_mag, cfg.blur_gain));
    add_noise(&mut out, cfg.noise_sigma, rng);
    out
}
