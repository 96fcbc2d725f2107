//! Pose algebra, pinhole projection and label derivation.
//!
//! A [`Pose`] places the target in the camera frame: a body-frame point `p`
//! lands at `attitude.rotate(p) + position`. Labels for a known pose are the
//! projected wireframe keypoints ([`project`]), their clamped hull
//! ([`bbox_from_points`]), and the ROI-normalized landmark vector
//! ([`normalize_landmarks`]).

mod camera;
mod quaternion;
mod wireframe;

use serde::{Deserialize, Serialize};

pub use camera::CameraIntrinsics;
pub use quaternion::{UnitQuaternion, UNIT_TOLERANCE};
pub use wireframe::WireframeModel;
pub(crate) use wireframe::principal_axes;

use crate::roi::BBox;
use crate::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

/// Minimum camera-frame depth for a point to count as in front of the camera.
pub const MIN_DEPTH: f64 = 1e-6;

/// A 2-D image location in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl PixelPoint {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn distance(&self, other: &PixelPoint) -> f64 {
        (self.u - other.u).hypot(self.v - other.v)
    }
}

impl From<[f64; 2]> for PixelPoint {
    fn from(a: [f64; 2]) -> Self {
        Self::new(a[0], a[1])
    }
}

impl From<PixelPoint> for [f64; 2] {
    fn from(p: PixelPoint) -> Self {
        [p.u, p.v]
    }
}

/// Target position (meters, camera frame) and body-to-camera attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vec3,
    pub attitude: UnitQuaternion,
}

impl Pose {
    pub fn new(position: Vec3, attitude: UnitQuaternion) -> Self {
        Self { position, attitude }
    }

    /// Body frame to camera frame.
    pub fn transform(&self, p: &Vec3) -> Vec3 {
        self.attitude.rotate(p) + self.position
    }

    /// The camera as seen from the body frame.
    pub fn inverse(&self) -> Pose {
        let inv = self.attitude.inverse();
        Pose::new(-inv.rotate(&self.position), inv)
    }
}

/// Projects body-frame `points` through `pose` and `cam`. No clipping.
pub fn project(pose: &Pose, cam: &CameraIntrinsics, points: &[Vec3]) -> Result<Vec<PixelPoint>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            let pc = pose.transform(p);
            if !(pc.z > MIN_DEPTH) {
                return Err(Error::BehindCamera { index, depth: pc.z });
            }
            Ok(cam.project_camera_point(&pc))
        })
        .collect()
}

/// Tightest box around `points`, intersected with the image rectangle.
pub fn bbox_from_points(points: &[PixelPoint], cam: &CameraIntrinsics) -> Result<BBox> {
    let first = points
        .first()
        .ok_or_else(|| Error::invalid("bbox_from_points needs at least one point"))?;
    let (mut xmin, mut ymin, mut xmax, mut ymax) = (first.u, first.v, first.u, first.v);
    for p in &points[1..] {
        xmin = xmin.min(p.u);
        ymin = ymin.min(p.v);
        xmax = xmax.max(p.u);
        ymax = ymax.max(p.v);
    }
    let (w, h) = (cam.width() as f64, cam.height() as f64);
    if xmax < 0.0 || ymax < 0.0 || xmin > w || ymin > h {
        return Err(Error::OutOfFrame);
    }
    Ok(BBox::from_corners_unchecked(
        xmin.max(0.0),
        ymin.max(0.0),
        xmax.min(w),
        ymax.min(h),
    ))
}

/// Maps pixel landmarks into `[0, 1]²` relative to `roi`, keeping order.
pub fn normalize_landmarks(points: &[PixelPoint], roi: &BBox) -> Result<Vec<[f64; 2]>> {
    check_roi_area(roi)?;
    let (w, h) = (roi.width(), roi.height());
    Ok(points
        .iter()
        .map(|p| [(p.u - roi.xmin) / w, (p.v - roi.ymin) / h])
        .collect())
}

/// Inverse of [`normalize_landmarks`].
pub fn denormalize_landmarks(coords: &[[f64; 2]], roi: &BBox) -> Result<Vec<PixelPoint>> {
    check_roi_area(roi)?;
    Ok(coords.iter().map(|c| denormalize_point(*c, roi)).collect())
}

pub(crate) fn denormalize_point(c: [f64; 2], roi: &BBox) -> PixelPoint {
    PixelPoint::new(
        roi.xmin + c[0] * roi.width(),
        roi.ymin + c[1] * roi.height(),
    )
}

fn check_roi_area(roi: &BBox) -> Result<()> {
    if roi.width() > 0.0 && roi.height() > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid("roi has zero area"))
    }
}
