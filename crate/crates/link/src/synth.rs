//! Synthetic captures: placing a rendered frame into a camera image.

use nalgebra::Matrix3;
use oisac_core::camera::{self, CameraIntrinsics, ScreenGeometry, SensingError};
use oisac_core::geometry::RelativeState;
use thiserror::Error;

use crate::homography::{apply_homography, estimate_homography, rectify, DegenerateConfiguration};
use crate::layout::FrameLayout;
use crate::raster::FrameRaster;

/// Intensity of everything around the screen.
pub const SCENE_BACKGROUND: u8 = 96;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum ViewError {
    #[error(transparent)]
    Sensing(#[from] SensingError),
    #[error(transparent)]
    Degenerate(#[from] DegenerateConfiguration),
}

/// Homography from layout coordinates to camera pixels for a screen seen
/// from relative state `s`. Marker centers land on the projected feature points.
pub fn camera_view(
    s: &RelativeState<f64>,
    k: &CameraIntrinsics<f64>,
    geom: &ScreenGeometry<f64>,
    layout: &FrameLayout,
) -> Result<Matrix3<f64>, ViewError> {
    let pts = camera::feature_points_camera(s, geom)?;
    let mut dst = [[0.0; 2]; 4];
    for (d, p) in dst.iter_mut().zip(pts.iter()) {
        let px = camera::project(p, k)?;
        *d = [px.m, px.n];
    }
    Ok(estimate_homography(&layout.marker_centers, &dst)?)
}

/// Homography for the frame turned by `angle` about its vertical center
/// line, viewed head-on from a pinhole whose focal length equals the viewing
/// distance `depth` (in layout pixels), centered in a `width x height` image.
pub fn view_angle_homography(
    layout: &FrameLayout,
    angle: f64,
    depth: f64,
    width: usize,
    height: usize,
) -> Result<Matrix3<f64>, DegenerateConfiguration> {
    let (cx, cy) = (layout.width as f64 / 2.0, layout.height as f64 / 2.0);
    let (sa, ca) = angle.sin_cos();
    let corners = [
        [0.0, 0.0],
        [layout.width as f64, 0.0],
        [0.0, layout.height as f64],
        [layout.width as f64, layout.height as f64],
    ];
    let project = |p: [f64; 2]| {
        let (x, y) = (p[0] - cx, p[1] - cy);
        let z = depth + x * sa;
        [
            depth * x * ca / z + width as f64 / 2.0,
            depth * y / z + height as f64 / 2.0,
        ]
    };
    estimate_homography(&corners, &corners.map(project))
}

/// Renders `frame` into a `width x height` image through `h` (layout to image).
pub fn warp_frame(frame: &FrameRaster, h: &Matrix3<f64>, width: usize, height: usize, background: u8) -> FrameRaster {
    match h.try_inverse() {
        Some(inv) => rectify(frame, &inv, width, height, background),
        None => FrameRaster::filled(width, height, background),
    }
}

/// Where the layout marker centers land under `h`.
pub fn projected_centers(layout: &FrameLayout, h: &Matrix3<f64>) -> [[f64; 2]; 4] {
    layout.marker_centers.map(|c| apply_homography(h, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use oisac_core::camera::{FovLimits, ObserveOptions};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn camera_view_matches_observation() {
        let (k, g) = (CameraIntrinsics::experimental(), ScreenGeometry::experimental());
        let s = RelativeState::new(0.9, 0.1, 0.3);
        let l = FrameLayout::default();
        let h = camera_view(&s, &k, &g, &l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let obs = camera::observe(
            &s,
            &k,
            &g,
            &FovLimits::experimental(),
            &ObserveOptions::default(),
            &mut rng,
        )
        .unwrap();
        for (p, q) in projected_centers(&l, &h).iter().zip(obs.as_array()) {
            assert!((p[0] - q.m).abs() < 1e-9 && (p[1] - q.n).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_angle_is_a_translation() {
        let l = FrameLayout::default();
        let h = view_angle_homography(&l, 0.0, 400.0, 640, 480).unwrap();
        let p = apply_homography(&h, [0.0, 0.0]);
        assert!((p[0] - 152.0).abs() < 1e-9 && (p[1] - 120.0).abs() < 1e-9);
    }
}
