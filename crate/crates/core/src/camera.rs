//! Pinhole observation of the four screen feature points and the closed-form
//! relative pose estimator that inverts it.
//!
//! Frames: the follower frame has x forward and y to the left. The camera sits
//! at `(d_f, 0)` in that frame with `z` forward, `x` to the follower's right and
//! `y` pointing down. The screen center is at camera height and the screen
//! plane is perpendicular to the leader heading, `d_l` behind the leader
//! origin.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::RelativeState;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics<T> {
    pub f_m: T,
    pub f_n: T,
    pub m_0: T,
    pub n_0: T,
    pub width: u32,
    pub height: u32,
}

impl<T: Real> CameraIntrinsics<T> {
    /// 640x480 camera with 500 px focal scale.
    pub fn experimental() -> Self {
        Self {
            f_m: T::lit(500.0),
            f_n: T::lit(500.0),
            m_0: T::lit(320.0),
            n_0: T::lit(240.0),
            width: 640,
            height: 480,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.f_m > T::zero()
            && self.f_n > T::zero()
            && self.m_0 >= T::zero()
            && self.m_0 < T::lit(self.width as f64)
            && self.n_0 >= T::zero()
            && self.n_0 < T::lit(self.height as f64)
    }

    pub fn contains(&self, p: &Pixel<T>) -> bool {
        p.m >= T::zero() && p.n >= T::zero() && p.m < T::lit(self.width as f64) && p.n < T::lit(self.height as f64)
    }
}

/// Screen and robot mounting geometry (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreenGeometry<T> {
    /// Horizontal separation of the feature points.
    pub l1: T,
    /// Vertical separation of the feature points.
    pub l2: T,
    /// Leader origin to screen plane.
    pub d_l: T,
    /// Follower origin to camera principal point; may be negative.
    pub d_f: T,
    /// Collision radius of the leader.
    pub mu: T,
}

impl<T: Real> ScreenGeometry<T> {
    pub fn experimental() -> Self {
        Self {
            l1: T::lit(0.232),
            l2: T::lit(0.145),
            d_l: T::lit(0.275),
            d_f: T::lit(-0.017),
            mu: T::lit(0.2),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.l1 > T::zero() && self.l2 > T::zero() && self.d_l > T::zero() && self.mu > T::zero()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pixel<T> {
    pub m: T,
    pub n: T,
}

impl<T> Pixel<T> {
    pub fn new(m: T, n: T) -> Self {
        Self { m, n }
    }
}

/// Image positions of the four marker centers: A top-left, B top-right,
/// C bottom-left, D bottom-right.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FeaturePixels<T> {
    pub a: Pixel<T>,
    pub b: Pixel<T>,
    pub c: Pixel<T>,
    pub d: Pixel<T>,
}

impl<T: Copy> FeaturePixels<T> {
    pub fn as_array(&self) -> [Pixel<T>; 4] {
        [self.a, self.b, self.c, self.d]
    }

    pub fn from_array(p: [Pixel<T>; 4]) -> Self {
        Self {
            a: p[0],
            b: p[1],
            c: p[2],
            d: p[3],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FovLimits<T> {
    pub alpha_max: T,
    pub d_max: T,
    pub gamma_max: T,
}

impl<T: Real> FovLimits<T> {
    pub fn experimental() -> Self {
        Self {
            alpha_max: T::frac_pi_4(),
            d_max: T::lit(1.45),
            gamma_max: T::frac_pi_3(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.alpha_max > T::zero()
            && self.alpha_max < T::frac_pi_2()
            && self.gamma_max > T::zero()
            && self.gamma_max < T::frac_pi_2()
            && self.d_max > T::zero()
    }
}

/// A point in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CameraPoint<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

/// Which visibility condition failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Violation {
    /// Leader too close (inside the lower range bound).
    TooClose,
    /// Leader beyond `d_max - mu`.
    Range,
    /// Bearing outside the cone.
    Bearing,
    /// Relative heading beyond `gamma_max`.
    Orientation,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum SensingError {
    #[error("screen faces away from the camera")]
    BackFacing,
    #[error("point at non-positive depth")]
    NonPositiveDepth,
    #[error("leader not visible: {0:?}")]
    NotVisible(Violation),
    #[error("feature point outside the image")]
    OutOfImage,
    #[error("degenerate observation")]
    DegenerateObservation,
}

/// Camera-frame positions of A, B, C, D for the relative state `s`.
pub fn feature_points_camera<T: Real>(
    s: &RelativeState<T>,
    geom: &ScreenGeometry<T>,
) -> Result<[CameraPoint<T>; 4], SensingError> {
    if s.gamma.abs() >= T::frac_pi_2() {
        return Err(SensingError::BackFacing);
    }
    let (sg, cg) = s.gamma.sin_cos();
    let half = geom.l1 * T::lit(0.5);
    let center_x = s.x_lf - geom.d_l * cg;
    let center_y = s.y_lf - geom.d_l * sg;
    // A lies toward the leader's left, which is image-left when facing the camera
    let left_x = center_x - half * sg;
    let left_y = center_y + half * cg;
    let right_x = center_x + half * sg;
    let right_y = center_y - half * cg;
    let top = -geom.l2 * T::lit(0.5);
    let bottom = geom.l2 * T::lit(0.5);
    let cam = |fx: T, fy: T, h: T| CameraPoint {
        x: -fy,
        y: h,
        z: fx - geom.d_f,
    };
    Ok([
        cam(left_x, left_y, top),
        cam(right_x, right_y, top),
        cam(left_x, left_y, bottom),
        cam(right_x, right_y, bottom),
    ])
}

/// Pinhole projection.
pub fn project<T: Real>(p: &CameraPoint<T>, k: &CameraIntrinsics<T>) -> Result<Pixel<T>, SensingError> {
    if p.z <= T::zero() {
        return Err(SensingError::NonPositiveDepth);
    }
    Ok(Pixel::new(k.f_m * p.x / p.z + k.m_0, k.f_n * p.y / p.z + k.n_0))
}

/// Returns the first violated visibility condition, if any.
pub fn check_visibility<T: Real>(
    s: &RelativeState<T>,
    fov: &FovLimits<T>,
    geom: &ScreenGeometry<T>,
) -> Result<(), Violation> {
    let x = s.x_lf;
    let lower = T::lit(2.0) * geom.mu * (fov.alpha_max - T::frac_pi_6()).cos();
    if x <= lower {
        return Err(Violation::TooClose);
    }
    if x > fov.d_max - geom.mu {
        return Err(Violation::Range);
    }
    let alpha = s.y_lf.atan2(x);
    let limit = ((x * fov.alpha_max.sin() - geom.mu) / (x * fov.alpha_max.cos())).atan();
    if alpha.abs() > limit {
        return Err(Violation::Bearing);
    }
    if s.gamma.abs() >= fov.gamma_max {
        return Err(Violation::Orientation);
    }
    Ok(())
}

/// Options for synthetic observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObserveOptions<T> {
    /// Round projections to whole pixels.
    pub quantize: bool,
    /// Standard deviation of additive pixel noise.
    pub noise_sigma: T,
}

impl<T: Real> Default for ObserveOptions<T> {
    fn default() -> Self {
        Self {
            quantize: false,
            noise_sigma: T::zero(),
        }
    }
}

/// Synthesizes the feature pixels a camera would report for `s`.
pub fn observe<T: Real, R: Rng + ?Sized>(
    s: &RelativeState<T>,
    k: &CameraIntrinsics<T>,
    geom: &ScreenGeometry<T>,
    fov: &FovLimits<T>,
    opts: &ObserveOptions<T>,
    rng: &mut R,
) -> Result<FeaturePixels<T>, SensingError> {
    check_visibility(s, fov, geom).map_err(SensingError::NotVisible)?;
    let pts = feature_points_camera(s, geom)?;
    let mut out = [Pixel::default(); 4];
    for (o, p) in out.iter_mut().zip(pts.iter()) {
        let mut px = project(p, k)?;
        if opts.quantize {
            px = Pixel::new(px.m.round(), px.n.round());
        }
        if opts.noise_sigma > T::zero() {
            let nm: f64 = StandardNormal.sample(rng);
            let nn: f64 = StandardNormal.sample(rng);
            px.m += opts.noise_sigma * T::lit(nm);
            px.n += opts.noise_sigma * T::lit(nn);
        }
        if !k.contains(&px) {
            return Err(SensingError::OutOfImage);
        }
        *o = px;
    }
    Ok(FeaturePixels::from_array(out))
}

/// Intermediate camera-frame reconstruction of A, B and the screen center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScreenReconstruction<T> {
    pub z_a: T,
    pub z_b: T,
    pub x_a: T,
    pub x_b: T,
    pub z_o: T,
    pub x_o: T,
    /// Unnormalized sine and cosine of the relative heading.
    pub sin_gamma: T,
    pub cos_gamma: T,
}

/// Reconstructs A, B and the screen center from pixel coordinates.
pub fn reconstruct_screen<T: Real>(
    p: &FeaturePixels<T>,
    k: &CameraIntrinsics<T>,
    geom: &ScreenGeometry<T>,
) -> Result<ScreenReconstruction<T>, SensingError> {
    let dn = p.c.n - p.a.n;
    let na = p.a.n - k.n_0;
    let nb = p.b.n - k.n_0;
    let ma = p.a.m - k.m_0;
    let mb = p.b.m - k.m_0;
    let tiny = T::default_epsilon();
    if dn.abs() <= tiny || nb.abs() <= tiny {
        return Err(SensingError::DegenerateObservation);
    }
    let base = k.f_n * geom.l2 / dn;
    let z_a = base;
    let z_b = base * na / nb;
    let x_a = base * ma / k.f_m;
    let x_b = base * mb * na / (k.f_m * nb);
    if !(z_a > T::zero()) || !(z_b > T::zero()) {
        return Err(SensingError::DegenerateObservation);
    }
    let half = T::lit(0.5);
    Ok(ScreenReconstruction {
        z_a,
        z_b,
        x_a,
        x_b,
        z_o: half * (z_a + z_b),
        x_o: half * (x_a + x_b),
        sin_gamma: (z_b - z_a) / geom.l1,
        cos_gamma: (x_b - x_a) / geom.l1,
    })
}

/// Closed-form relative pose from the feature pixels.
pub fn estimate_pose<T: Real>(
    p: &FeaturePixels<T>,
    k: &CameraIntrinsics<T>,
    geom: &ScreenGeometry<T>,
) -> Result<RelativeState<T>, SensingError> {
    let r = reconstruct_screen(p, k, geom)?;
    let norm = (r.sin_gamma * r.sin_gamma + r.cos_gamma * r.cos_gamma).sqrt();
    // a back-facing heading cannot have produced this observation
    if !(norm > T::zero()) || r.cos_gamma <= T::zero() {
        return Err(SensingError::DegenerateObservation);
    }
    let (sg, cg) = (r.sin_gamma / norm, r.cos_gamma / norm);
    let gamma = sg.atan2(cg);
    Ok(RelativeState::new(
        r.z_o + geom.d_f + geom.d_l * cg,
        -r.x_o + geom.d_l * sg,
        gamma,
    ))
}
