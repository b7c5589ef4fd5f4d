//! Receiver pipeline: markers, homography, rectification, demodulation.

use nalgebra::Matrix3;
use oisac_core::camera::FeaturePixels;
use thiserror::Error;

use crate::detect::{detect_markers, DetectionFailure, DetectorConfig};
use crate::homography::{estimate_homography, rectify, DegenerateConfiguration};
use crate::layout::{read_cells, FrameLayout};
use crate::modulation::{demodulate, Modulation};
use crate::payload::{VelocityPayload, PAYLOAD_BITS};
use crate::raster::FrameRaster;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum DecodeFailure {
    #[error("marker detection failed: {0}")]
    Detection(#[from] DetectionFailure),
    #[error("rectification failed: {0}")]
    Rectification(#[from] DegenerateConfiguration),
    #[error("data region carries no signal")]
    Demodulation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decoded {
    pub payload: VelocityPayload,
    /// Marker centers in the input raster.
    pub features: FeaturePixels<f64>,
    /// Smallest majority-vote margin over the data bits.
    pub margin: u8,
}

/// Homography taking layout coordinates to raster coordinates.
pub fn layout_to_image(layout: &FrameLayout, f: &FeaturePixels<f64>) -> Result<Matrix3<f64>, DegenerateConfiguration> {
    let dst = f.as_array().map(|p| [p.m, p.n]);
    estimate_homography(&layout.marker_centers, &dst)
}

pub fn decode_frame(raster: &FrameRaster, layout: &FrameLayout, mode: Modulation) -> Result<Decoded, DecodeFailure> {
    decode_frame_with(raster, layout, mode, &DetectorConfig::default())
}

pub fn decode_frame_with(
    raster: &FrameRaster,
    layout: &FrameLayout,
    mode: Modulation,
    cfg: &DetectorConfig,
) -> Result<Decoded, DecodeFailure> {
    let features = detect_markers(raster, layout, cfg)?;
    let (payload, margin) = decode_payload(raster, layout, mode, &features)?;
    Ok(Decoded {
        payload,
        features,
        margin,
    })
}

/// Demodulates the data region given already detected marker centers.
/// Returns the payload and its smallest majority-vote margin.
pub fn decode_payload(
    raster: &FrameRaster,
    layout: &FrameLayout,
    mode: Modulation,
    features: &FeaturePixels<f64>,
) -> Result<(VelocityPayload, u8), DecodeFailure> {
    let h = layout_to_image(layout, features)?;
    let upright = rectify(raster, &h, layout.width, layout.height, 255);
    let cells = read_cells(&upright, layout, mode);
    let lo = cells.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = cells.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(hi - lo > 1.0) {
        return Err(DecodeFailure::Demodulation);
    }
    let [rows, cols] = layout.grid(mode);
    let bits = demodulate(&cells, rows, cols, PAYLOAD_BITS, mode);
    VelocityPayload::from_bits(&bits, layout.interleaving).map_err(|_| DecodeFailure::Demodulation)
}
