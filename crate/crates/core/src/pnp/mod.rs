//! Pose recovery from 2-D/3-D correspondences.
//!
//! [`epnp`] gives a closed-form estimate, [`ransac_pnp`] wraps it in a seeded
//! hypothesize-and-verify loop, and [`lm_refine`] polishes the result by
//! minimizing reprojection error. [`triangulate`] goes the other way and
//! rebuilds body-frame keypoints from several posed views.

mod epnp;
mod lm;
mod ransac;
mod triangulate;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

pub use epnp::epnp;
pub use lm::{apply_increment, lm_refine, lm_refine_report, pose_jacobian, LmReport, LmTermination};
pub use ransac::ransac_pnp;
pub use triangulate::{reconstruct_wireframe, triangulate};

use crate::geometry::{CameraIntrinsics, PixelPoint, Pose, Vec3, MIN_DEPTH};
use crate::{Error, Result};

/// An image landmark matched to wireframe keypoint `id`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub image: PixelPoint,
    pub world: Vec3,
    pub id: usize,
}

impl Correspondence {
    pub fn new(image: PixelPoint, world: Vec3, id: usize) -> Self {
        Self { image, world, id }
    }
}

/// Builds correspondences for every present landmark, id = keypoint index.
pub fn correspondences_from(landmarks: &[Option<PixelPoint>], keypoints: &[Vec3]) -> Vec<Correspondence> {
    landmarks
        .iter()
        .zip(keypoints)
        .enumerate()
        .filter_map(|(id, (lm, kp))| lm.map(|p| Correspondence::new(p, *kp, id)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacConfig {
    pub max_iterations: usize,
    /// Reprojection error (pixels) below which a point is an inlier.
    pub inlier_threshold: f64,
    pub confidence: f64,
    pub min_sample: usize,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            inlier_threshold: 5.0,
            confidence: 0.99,
            min_sample: 5,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_sample < 4 {
            return Err(Error::invalid("min_sample must be at least 4"));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(Error::invalid("confidence must lie in (0, 1)"));
        }
        if !(self.inlier_threshold > 0.0) {
            return Err(Error::invalid("inlier_threshold must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub max_iterations: usize,
    /// Stop when the largest gradient component falls below this.
    pub gradient_tol: f64,
    /// Stop when `|step| <= step_tol * (|t| + step_tol)`.
    pub step_tol: f64,
    /// Stop when an accepted step lowers the cost by less than this fraction.
    pub cost_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            gradient_tol: 1e-10,
            step_tol: 1e-12,
            cost_tol: 1e-14,
            initial_damping: 1e-3,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let tols = [self.gradient_tol, self.step_tol, self.cost_tol, self.initial_damping];
        if !tols.iter().all(|t| *t > 0.0 && t.is_finite()) {
            return Err(Error::invalid("LM tolerances and damping must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpResult {
    pub pose: Pose,
    /// Aligned with the input correspondences.
    pub inlier_mask: Vec<bool>,
    /// RMS reprojection error over the inliers, pixels.
    pub rms_reprojection: f64,
    pub iterations_used: usize,
}

impl PnpResult {
    pub fn inlier_count(&self) -> usize {
        self.inlier_mask.iter().filter(|&&b| b).count()
    }

    pub fn inliers(&self, corr: &[Correspondence]) -> Vec<Correspondence> {
        corr.iter()
            .zip(&self.inlier_mask)
            .filter(|(_, &keep)| keep)
            .map(|(c, _)| *c)
            .collect::<Vec<_>>()
    }
}

/// Per-point `(Δu, Δv)` = projected minus observed, and their RMS norm.
pub fn reprojection_residuals(
    pose: &Pose,
    corr: &[Correspondence],
    cam: &CameraIntrinsics,
) -> Result<(Vec<Vector2<f64>>, f64)> {
    let mut residuals = Vec::with_capacity(corr.len());
    let mut sq = 0.0;
    for (index, c) in corr.iter().enumerate() {
        let pc = pose.transform(&c.world);
        if !(pc.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { index, depth: pc.z });
        }
        let p = cam.project_camera_point(&pc);
        let r = Vector2::new(p.u - c.image.u, p.v - c.image.v);
        sq += r.norm_squared();
        residuals.push(r);
    }
    let rms = if corr.is_empty() {
        0.0
    } else {
        (sq / corr.len() as f64).sqrt()
    };
    Ok((residuals, rms))
}

/// Per-point reprojection error norm; points behind the camera get `+inf`.
pub(crate) fn point_errors(pose: &Pose, corr: &[Correspondence], cam: &CameraIntrinsics) -> Vec<f64> {
    corr.iter()
        .map(|c| {
            let pc = pose.transform(&c.world);
            if pc.z > MIN_DEPTH {
                cam.project_camera_point(&pc).distance(&c.image)
            } else {
                f64::INFINITY
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, UnitQuaternion, WireframeModel};

    #[test]
    fn residuals_zero_for_generating_pose() {
        let cam = CameraIntrinsics::default();
        let wf = WireframeModel::reference_satellite();
        let pose = Pose::new(Vec3::new(0.5, -0.3, 40.0), UnitQuaternion::new_normalize(0.9, 0.1, 0.3, -0.2).unwrap());
        let px = project(&pose, &cam, wf.keypoints()).unwrap();
        let corr: Vec<_> = px
            .iter()
            .zip(wf.keypoints())
            .enumerate()
            .map(|(i, (p, w))| Correspondence::new(*p, *w, i))
            .collect();
        let (res, rms) = reprojection_residuals(&pose, &corr, &cam).unwrap();
        assert_eq!(res.len(), corr.len());
        assert!(rms < 1e-12);
    }

    #[test]
    fn three_four_five() {
        let cam = CameraIntrinsics::default();
        let pose = Pose::new(Vec3::new(0.0, 0.0, 30.0), UnitQuaternion::IDENTITY);
        let c = Correspondence::new(PixelPoint::new(960.0 - 3.0, 600.0 - 4.0), Vec3::zeros(), 0);
        let (res, rms) = reprojection_residuals(&pose, &[c], &cam).unwrap();
        assert_eq!(res[0], Vector2::new(3.0, 4.0));
        assert_eq!(rms, 5.0);
    }

    #[test]
    fn residuals_name_behind_camera_index() {
        let cam = CameraIntrinsics::default();
        let pose = Pose::new(Vec3::new(0.0, 0.0, 1.0), UnitQuaternion::IDENTITY);
        let corr = [
            Correspondence::new(PixelPoint::default(), Vec3::zeros(), 0),
            Correspondence::new(PixelPoint::default(), Vec3::new(0.0, 0.0, -2.0), 1),
        ];
        assert!(matches!(
            reprojection_residuals(&pose, &corr, &cam),
            Err(Error::BehindCamera { index: 1, .. })
        ));
    }

    #[test]
    fn config_validation() {
        assert!(RansacConfig::default().validate().is_ok());
        assert!(RansacConfig { min_sample: 3, ..Default::default() }.validate().is_err());
        assert!(RansacConfig { confidence: 1.0, ..Default::default() }.validate().is_err());
        assert!(LmConfig::default().validate().is_ok());
        assert!(LmConfig { step_tol: 0.0, ..Default::default() }.validate().is_err());
    }
}
