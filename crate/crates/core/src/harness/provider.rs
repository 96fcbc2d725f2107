//! Landmark providers: where the pipeline gets its 2-D keypoints.
//!
//! Providers hand back ROI-normalized coordinates in wireframe order, the
//! same contract a landmark-regression network output would satisfy.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{stream_seed, SampleRecord};
use crate::geometry::{normalize_landmarks, PixelPoint};
use crate::roi::{make_roi, BBox, RoiConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutlierLaw {
    /// Replacement landmark drawn uniformly over the ground-truth ROI.
    #[default]
    UniformOverRoi,
}

/// Synthetic corruption applied to ground-truth landmarks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseModel {
    /// Per-coordinate Gaussian σ, pixels.
    pub sigma_px: f64,
    pub outlier_rate: f64,
    pub outlier_law: OutlierLaw,
    pub dropout_rate: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            sigma_px: 0.0,
            outlier_rate: 0.0,
            outlier_law: OutlierLaw::UniformOverRoi,
            dropout_rate: 0.0,
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_px >= 0.0 && self.sigma_px.is_finite()) {
            return Err(Error::invalid("sigma_px must be non-negative"));
        }
        for (name, r) in [("outlier_rate", self.outlier_rate), ("dropout_rate", self.dropout_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Corrupts `record.landmarks_gt` in pixel space.
///
/// Each landmark is dropped with probability `dropout_rate`, otherwise
/// replaced by a uniform draw over `gt_roi` with probability `outlier_rate`,
/// otherwise perturbed by `N(0, sigma_px²)` per coordinate. The random stream
/// depends only on `noise.seed` and the record id, and every landmark consumes
/// the same number of draws whatever the rates.
pub fn oracle_landmarks(record: &SampleRecord, noise: &NoiseModel, gt_roi: &BBox) -> Result<Vec<Option<PixelPoint>>> {
    noise.validate()?;
    let gt = record
        .landmarks_gt
        .as_ref()
        .ok_or_else(|| Error::schema(None, "landmarks", format!("record `{}` has no labels", record.id)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(noise.seed, &record.id));
    Ok(gt
        .iter()
        .map(|p| {
            let drop: f64 = rng.random();
            let outlier: f64 = rng.random();
            let ou: f64 = rng.random();
            let ov: f64 = rng.random();
            let nu: f64 = rng.sample(StandardNormal);
            let nv: f64 = rng.sample(StandardNormal);
            if drop < noise.dropout_rate {
                None
            } else if outlier < noise.outlier_rate {
                Some(PixelPoint::new(
                    gt_roi.xmin + ou * gt_roi.width(),
                    gt_roi.ymin + ov * gt_roi.height(),
                ))
            } else {
                Some(PixelPoint::new(p.u + noise.sigma_px * nu, p.v + noise.sigma_px * nv))
            }
        })
        .collect())
}

/// A source of ROI-normalized landmark predictions.
pub trait LandmarkProvider {
    fn name(&self) -> &str;

    /// Landmarks for `record` relative to `roi`, wireframe order, `None`
    /// where missing.
    fn predict(&self, record: &SampleRecord, roi: &BBox) -> Result<Vec<Option<[f64; 2]>>>;
}

/// Ground truth plus [`NoiseModel`] corruption, standing in for a network.
#[derive(Debug, Clone, Copy)]
pub struct OracleProvider {
    pub noise: NoiseModel,
    /// Builds the ground-truth ROI used by the outlier law.
    pub roi: RoiConfig,
}

impl LandmarkProvider for OracleProvider {
    fn name(&self) -> &str {
        "oracle"
    }

    fn predict(&self, record: &SampleRecord, roi: &BBox) -> Result<Vec<Option<[f64; 2]>>> {
        let bbox = record
            .bbox_gt
            .ok_or_else(|| Error::schema(None, "bbox", format!("record `{}` has no bbox", record.id)))?;
        let gt_roi = make_roi(&bbox, &self.roi)?;
        let pixels = oracle_landmarks(record, &self.noise, &gt_roi)?;
        let present: Vec<PixelPoint> = pixels.iter().flatten().copied().collect();
        let mut normalized = normalize_landmarks(&present, roi)?.into_iter();
        Ok(pixels
            .iter()
            .map(|p| p.and_then(|_| normalized.next()))
            .collect())
    }
}

/// Reads predictions stored in each record's `pred_landmarks`.
#[derive(Debug, Clone, Copy, Default)]
pub struct FileProvider;

impl LandmarkProvider for FileProvider {
    fn name(&self) -> &str {
        "file"
    }

    fn predict(&self, record: &SampleRecord, _roi: &BBox) -> Result<Vec<Option<[f64; 2]>>> {
        record.landmarks_pred.clone().ok_or_else(|| {
            Error::schema(None, "pred_landmarks", format!("record `{}` has no predictions", record.id))
        })
    }
}
