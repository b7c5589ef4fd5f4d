//! Kinematics, camera sensing and control for a leader-follower pair of
//! unicycle robots that share one optical link: the follower's camera reads the
//! leader's screen both to estimate relative pose and to receive the leader's
//! velocity.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`). The aliases
//! at the crate root fix the scalar to `f64`, which is what the simulator uses.

pub mod camera;
pub mod controller;
pub mod ekf;
pub mod geometry;
pub mod quantize;
pub mod scalar;

pub use scalar::{angle_diff, wrap_angle, Real};

pub type Pose2D = geometry::Pose2D<f64>;
pub type Twist = geometry::Twist<f64>;
pub type RelativeState = geometry::RelativeState<f64>;
pub type Bounds = geometry::Bounds<f64>;

pub type CameraIntrinsics = camera::CameraIntrinsics<f64>;
pub type ScreenGeometry = camera::ScreenGeometry<f64>;
pub type FeaturePixels = camera::FeaturePixels<f64>;
pub type Pixel = camera::Pixel<f64>;
pub type FovLimits = camera::FovLimits<f64>;

pub type QuantizerSpec = quantize::QuantizerSpec<f64>;

pub type GainConfig = controller::GainConfig<f64>;
pub type DesiredPose = controller::DesiredPose<f64>;
pub type Smoother = controller::Smoother<f64>;
pub type VelocityGate = controller::VelocityGate<f64>;
pub type ErrorBoundConstants = controller::ErrorBoundConstants<f64>;

pub type EkfState = ekf::EkfState<f64>;
pub type EkfNoise = ekf::EkfNoise<f64>;

/// Single-precision variants.
pub mod f32 {
    pub type Pose2D = crate::geometry::Pose2D<f32>;
    pub type Twist = crate::geometry::Twist<f32>;
    pub type RelativeState = crate::geometry::RelativeState<f32>;
    pub type CameraIntrinsics = crate::camera::CameraIntrinsics<f32>;
    pub type ScreenGeometry = crate::camera::ScreenGeometry<f32>;
    pub type FeaturePixels = crate::camera::FeaturePixels<f32>;
    pub type GainConfig = crate::controller::GainConfig<f32>;
    pub type EkfState = crate::ekf::EkfState<f32>;
}
