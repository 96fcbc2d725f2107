use serde::{Deserialize, Serialize};

use super::{PixelPoint, Vec3};
use crate::{Error, Result};

/// Distortion-free pinhole camera.
///
/// Pixel coordinates follow `u = fx·X/Z + cx`, `v = fy·Y/Z + cy` for a
/// camera-frame point `(X, Y, Z)` with `Z` along the optical axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawIntrinsics", into = "RawIntrinsics")]
pub struct CameraIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIntrinsics {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
}

impl TryFrom<RawIntrinsics> for CameraIntrinsics {
    type Error = Error;

    fn try_from(r: RawIntrinsics) -> Result<Self> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy, r.width, r.height)
    }
}

impl From<CameraIntrinsics> for RawIntrinsics {
    fn from(c: CameraIntrinsics) -> Self {
        RawIntrinsics {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
        }
    }
}

impl Default for CameraIntrinsics {
    /// 1920×1200 sensor, `fx = fy = 3000` px, centered principal point.
    fn default() -> Self {
        Self {
            fx: 3000.0,
            fy: 3000.0,
            cx: 960.0,
            cy: 600.0,
            width: 1920,
            height: 1200,
        }
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx.is_finite() && fy.is_finite() && fx > 0.0 && fy > 0.0) {
            return Err(Error::invalid(format!("focal lengths must be positive, got ({fx}, {fy})")));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if !(cx > 0.0 && cx < width as f64 && cy > 0.0 && cy < height as f64) {
            return Err(Error::invalid(format!(
                "principal point ({cx}, {cy}) outside {width}x{height} image"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn fx(&self) -> f64 {
        self.fx
    }
    pub fn fy(&self) -> f64 {
        self.fy
    }
    pub fn cx(&self) -> f64 {
        self.cx
    }
    pub fn cy(&self) -> f64 {
        self.cy
    }
    pub fn width(&self) -> u32 {
        self.width
    }
    pub fn height(&self) -> u32 {
        self.height
    }

    /// Projects a camera-frame point. The caller checks the depth.
    pub fn project_camera_point(&self, p: &Vec3) -> PixelPoint {
        PixelPoint::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Pixel to normalized image-plane coordinates `(X/Z, Y/Z)`.
    pub fn normalize(&self, p: &PixelPoint) -> (f64, f64) {
        ((p.u - self.cx) / self.fx, (p.v - self.cy) / self.fy)
    }

    /// Unit-free viewing direction `(x, y, 1)` through a pixel.
    pub fn back_project(&self, p: &PixelPoint) -> Vec3 {
        let (x, y) = self.normalize(p);
        Vec3::new(x, y, 1.0)
    }

    pub fn contains(&self, p: &PixelPoint, margin: f64) -> bool {
        p.u >= margin
            && p.v >= margin
            && p.u <= self.width as f64 - margin
            && p.v <= self.height as f64 - margin
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_preset() {
        let c = CameraIntrinsics::default();
        assert_eq!((c.width(), c.height()), (1920, 1200));
        assert_eq!((c.fx(), c.fy(), c.cx(), c.cy()), (3000.0, 3000.0, 960.0, 600.0));
    }

    #[test]
    fn rejects_bad_intrinsics() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 10.0, 10.0, 20, 20).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 20.0, 10.0, 20, 20).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 10.0, 0.0, 20, 20).is_err());
    }

    #[test]
    fn json_validates() {
        let ok: CameraIntrinsics =
            serde_json::from_str(r#"{"fx":1000,"fy":1000,"cx":960,"cy":600,"width":1920,"height":1200}"#).unwrap();
        assert_eq!(ok.fx(), 1000.0);
        let bad = serde_json::from_str::<CameraIntrinsics>(
            r#"{"fx":-1,"fy":1000,"cx":960,"cy":600,"width":1920,"height":1200}"#,
        );
        assert!(bad.is_err());
    }
}
