//! Four-point homographies and perspective rectification.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use oisac_core::Real;
use thiserror::Error;

use crate::raster::FrameRaster;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("degenerate point configuration (condition {condition:e})")]
pub struct DegenerateConfiguration {
    pub condition: f64,
}

const CONDITION_LIMIT: f64 = 1e10;

/// Similarity that moves the centroid to the origin and the mean distance to sqrt(2).
fn normalizer<T: Real>(pts: &[[T; 2]; 4]) -> Option<Matrix3<T>> {
    let n = T::lit(4.0);
    let cx = pts.iter().fold(T::zero(), |a, p| a + p[0]) / n;
    let cy = pts.iter().fold(T::zero(), |a, p| a + p[1]) / n;
    let mean = pts.iter().fold(T::zero(), |a, p| a + (p[0] - cx).hypot(p[1] - cy)) / n;
    if !(mean > T::zero()) {
        return None;
    }
    let s = T::lit(2.0).sqrt() / mean;
    Some(Matrix3::new(
        s,
        T::zero(),
        -s * cx,
        T::zero(),
        s,
        -s * cy,
        T::zero(),
        T::zero(),
        T::one(),
    ))
}

pub fn apply_homography<T: Real>(h: &Matrix3<T>, p: [T; 2]) -> [T; 2] {
    let v = h * Vector3::new(p[0], p[1], T::one());
    [v[0] / v[2], v[1] / v[2]]
}

/// Homography `H` with `dst ~ H src`, scaled so `H[2][2] = 1`.
pub fn estimate_homography<T: Real>(
    src: &[[T; 2]; 4],
    dst: &[[T; 2]; 4],
) -> Result<Matrix3<T>, DegenerateConfiguration> {
    let degenerate = |condition: f64| DegenerateConfiguration { condition };
    let ns = normalizer(src).ok_or(degenerate(f64::INFINITY))?;
    let nd = normalizer(dst).ok_or(degenerate(f64::INFINITY))?;
    let mut a = SMatrix::<T, 8, 8>::zeros();
    let mut b = SVector::<T, 8>::zeros();
    for i in 0..4 {
        let [x, y] = apply_homography(&ns, src[i]);
        let [u, v] = apply_homography(&nd, dst[i]);
        let r = 2 * i;
        a[(r, 0)] = x;
        a[(r, 1)] = y;
        a[(r, 2)] = T::one();
        a[(r, 6)] = -u * x;
        a[(r, 7)] = -u * y;
        b[r] = u;
        a[(r + 1, 3)] = x;
        a[(r + 1, 4)] = y;
        a[(r + 1, 5)] = T::one();
        a[(r + 1, 6)] = -v * x;
        a[(r + 1, 7)] = -v * y;
        b[r + 1] = v;
    }
    let sv = a.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    let condition = if smin > T::zero() {
        (smax / smin).to_f64_lossy()
    } else {
        f64::INFINITY
    };
    if !(condition < CONDITION_LIMIT) {
        return Err(degenerate(condition));
    }
    let h = a.lu().solve(&b).ok_or(degenerate(condition))?;
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], T::one());
    let nd_inv = nd.try_inverse().ok_or(degenerate(condition))?;
    let full = nd_inv * hn * ns;
    let scale = full[(2, 2)];
    if scale == T::zero() {
        return Err(degenerate(condition));
    }
    Ok(full / scale)
}

/// Resamples `src` onto a `width x height` grid. `h` maps output pixel
/// coordinates into `src` coordinates.
pub fn rectify(src: &FrameRaster, h: &Matrix3<f64>, width: usize, height: usize, background: u8) -> FrameRaster {
    let mut out = FrameRaster::filled(width, height, background);
    let bg = f64::from(background);
    for y in 0..height {
        for x in 0..width {
            let [sx, sy] = apply_homography(h, [x as f64 + 0.5, y as f64 + 0.5]);
            if sx.is_finite() && sy.is_finite() {
                let v = src.sample_bilinear(sx, sy, bg);
                out.set(x, y, v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    out
}
