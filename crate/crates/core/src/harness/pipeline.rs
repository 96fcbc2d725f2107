//! The three-stage runner: ROI from a box, landmarks from a provider, pose
//! from RANSAC-EPnP plus LM, then scoring against ground truth.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{stream_seed, LandmarkProvider, SampleRecord};
use crate::geometry::{CameraIntrinsics, PixelPoint, Pose, WireframeModel};
use crate::metrics::{aggregate, image_score, AggregateReport, ImageScore};
use crate::pnp::{correspondences_from, lm_refine, ransac_pnp, LmConfig, RansacConfig};
use crate::roi::{make_roi, roi_transform, BBox, RoiConfig, RoiDirection};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Image dimensions are taken from the camera, not from here.
    pub roi: RoiConfig,
    /// `seed` is combined with each record id to give per-record streams.
    pub ransac: RansacConfig,
    pub lm: LmConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseEstimate {
    pub pose: Pose,
    pub score: ImageScore,
    pub inliers: usize,
    pub correspondences: usize,
}

#[derive(Debug)]
pub struct ImageOutcome {
    pub id: String,
    pub result: Result<PoseEstimate>,
}

/// Wall time per stage, milliseconds. Manifest loading is not included.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub detection_ms: f64,
    pub landmarks_ms: f64,
    pub pnp_ms: f64,
    pub total_ms: f64,
    /// Images per second over the whole run.
    pub fps: f64,
}

#[derive(Debug)]
pub struct PipelineOutput {
    pub outcomes: Vec<ImageOutcome>,
    /// `None` when every image failed.
    pub aggregate: Option<AggregateReport>,
    pub timing: TimingReport,
    pub failures: usize,
}

impl PipelineOutput {
    pub fn scores(&self) -> Vec<ImageScore> {
        self.outcomes
            .iter()
            .filter_map(|o| o.result.as_ref().ok().map(|e| e.score))
            .collect()
    }

    pub fn failure_rate(&self) -> f64 {
        if self.outcomes.is_empty() {
            0.0
        } else {
            self.failures as f64 / self.outcomes.len() as f64
        }
    }
}

fn roi_config(cfg: &RoiConfig, cam: &CameraIntrinsics) -> RoiConfig {
    RoiConfig {
        image_width: f64::from(cam.width()),
        image_height: f64::from(cam.height()),
        ..*cfg
    }
}

/// ROI from the predicted box when present, otherwise from ground truth.
fn record_roi(index: usize, record: &SampleRecord, cfg: &RoiConfig) -> Result<Result<BBox>> {
    let bbox = record
        .bbox_pred
        .or(record.bbox_gt)
        .ok_or_else(|| Error::schema(Some(index), "bbox", "record has neither a predicted nor a labeled box"))?;
    Ok(make_roi(&bbox, cfg))
}

fn with_record(index: usize, e: Error) -> Error {
    match e {
        Error::Schema { record: None, field, reason } => Error::Schema {
            record: Some(index),
            field,
            reason,
        },
        e => e,
    }
}

fn predict(
    index: usize,
    record: &SampleRecord,
    provider: &dyn LandmarkProvider,
    roi: &BBox,
    k: usize,
) -> Result<Vec<Option<[f64; 2]>>> {
    let pred = provider.predict(record, roi).map_err(|e| with_record(index, e))?;
    if pred.len() != k {
        return Err(Error::schema(
            Some(index),
            "pred_landmarks",
            format!("{} landmarks from provider `{}`, wireframe has {k}", pred.len(), provider.name()),
        ));
    }
    Ok(pred)
}

/// Runs every record through the pipeline.
///
/// Solver failures are kept per image and excluded from the aggregate.
/// Schema problems (missing boxes, landmark count differing from the
/// wireframe) abort the run.
pub fn run_pipeline(
    records: &[SampleRecord],
    provider: &dyn LandmarkProvider,
    wireframe: &WireframeModel,
    cam: &CameraIntrinsics,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    if records.is_empty() {
        return Err(Error::invalid("manifest has no records"));
    }
    let roi_cfg = roi_config(&cfg.roi, cam);
    roi_cfg.validate()?;
    cfg.ransac.validate()?;
    cfg.lm.validate()?;

    let (mut detection, mut landmarks, mut pnp) = (Duration::ZERO, Duration::ZERO, Duration::ZERO);
    let start = Instant::now();
    let mut outcomes = Vec::with_capacity(records.len());
    for (index, record) in records.iter().enumerate() {
        let t0 = Instant::now();
        let roi = record_roi(index, record, &roi_cfg)?;
        detection += t0.elapsed();
        let roi = match roi {
            Ok(roi) => roi,
            Err(e) => {
                outcomes.push(ImageOutcome {
                    id: record.id.clone(),
                    result: Err(e),
                });
                continue;
            }
        };

        let t1 = Instant::now();
        let pred = predict(index, record, provider, &roi, wireframe.len())?;
        let side = roi_cfg.target_side(&roi);
        let pixels = pred
            .iter()
            .map(|c| {
                c.map(|[x, y]| roi_transform(&PixelPoint::new(x * side, y * side), &roi, side, RoiDirection::ToImage))
                    .transpose()
            })
            .collect::<Result<Vec<_>>>();
        landmarks += t1.elapsed();

        let t2 = Instant::now();
        let estimate = pixels.and_then(|px| {
            let corr = correspondences_from(&px, wireframe.keypoints());
            let ransac = RansacConfig {
                seed: stream_seed(cfg.ransac.seed, &record.id),
                ..cfg.ransac
            };
            let coarse = ransac_pnp(&corr, cam, &ransac)?;
            let inliers = coarse.inliers(&corr);
            let pose = lm_refine(&coarse.pose, &inliers, cam, &cfg.lm)?;
            Ok((pose, inliers.len(), corr.len()))
        });
        pnp += t2.elapsed();

        let result = estimate.and_then(|(pose, inliers, correspondences)| {
            Ok(PoseEstimate {
                pose,
                score: image_score(&record.pose_gt, &pose)?,
                inliers,
                correspondences,
            })
        });
        if let Err(e) = &result {
            log::debug!("record {}: {e}", record.id);
        }
        outcomes.push(ImageOutcome {
            id: record.id.clone(),
            result,
        });
    }
    let total = start.elapsed();

    let failures = outcomes.iter().filter(|o| o.result.is_err()).count();
    let scores: Vec<ImageScore> = outcomes
        .iter()
        .filter_map(|o| o.result.as_ref().ok().map(|e| e.score))
        .collect();
    let aggregate = if scores.is_empty() { None } else { Some(aggregate(&scores)?) };
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    let total_s = total.as_secs_f64().max(f64::MIN_POSITIVE);
    Ok(PipelineOutput {
        outcomes,
        aggregate,
        timing: TimingReport {
            detection_ms: ms(detection),
            landmarks_ms: ms(landmarks),
            pnp_ms: ms(pnp),
            total_ms: ms(total),
            fps: records.len() as f64 / total_s,
        },
        failures,
    })
}

/// Stores `provider`'s output in each record's `landmarks_pred`, using the
/// same ROI the pipeline would. Feeding the result to a file provider
/// reproduces the original run.
pub fn export_predictions(
    records: &[SampleRecord],
    provider: &dyn LandmarkProvider,
    wireframe: &WireframeModel,
    cam: &CameraIntrinsics,
    roi: &RoiConfig,
) -> Result<Vec<SampleRecord>> {
    let roi_cfg = roi_config(roi, cam);
    records
        .iter()
        .enumerate()
        .map(|(index, record)| {
            let mut out = record.clone();
            if let Ok(roi) = record_roi(index, record, &roi_cfg)? {
                out.landmarks_pred = Some(predict(index, record, provider, &roi, wireframe.len())?);
            }
            Ok(out)
        })
        .collect()
}
