//! Pose scoring and aggregation.
//!
//! Per image: position error `e_t = |t_gt - t_est|`, its normalized form
//! `e_t / |t_gt|`, and attitude error `e_q = 2·acos(|<q_gt, q_est>|)`
//! (computed in an equivalent, better conditioned form).
//! The image score is normalized position error plus `e_q` in radians; the
//! dataset score `E` is the mean image score.

use serde::{Deserialize, Serialize};

use crate::geometry::{Pose, UnitQuaternion, Vec3};
use crate::roi::{contains, iou, make_roi, BBox, RoiConfig};
use crate::{Error, Result};

/// Unit-norm tolerance for quaternions handed to [`attitude_error`].
const QUATERNION_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    /// Position error, meters.
    pub e_t: f64,
    pub e_t_normalized: f64,
    /// Attitude error, radians.
    pub e_q: f64,
    pub score: f64,
}

/// Returns `(e_t, e_t / |t_gt|)`.
pub fn position_error(t_gt: &Vec3, t_est: &Vec3) -> Result<(f64, f64)> {
    let gt_norm = t_gt.norm();
    if !(gt_norm > 0.0) {
        return Err(Error::invalid("ground-truth position has zero norm"));
    }
    let e_t = (t_gt - t_est).norm();
    Ok((e_t, e_t / gt_norm))
}

/// Geodesic angle between two attitudes, in `[0, π]`. Sign-invariant.
///
/// Equal to `2·acos(|<q_gt, q_est>|)`, evaluated as
/// `2·atan2(|vec(q_gt⁻¹ q_est)|, |<q_gt, q_est>|)`: the arccos form loses
/// about eight digits near zero error, so `q` against `-q` would not give
/// exactly 0.
pub fn attitude_error(q_gt: &UnitQuaternion, q_est: &UnitQuaternion) -> Result<f64> {
    for (name, q) in [("q_gt", q_gt), ("q_est", q_est)] {
        let n = q.norm();
        if !n.is_finite() || (n - 1.0).abs() > QUATERNION_NORM_TOL {
            return Err(Error::invalid(format!("{name} is not unit (norm {n})")));
        }
    }
    let (w1, v1) = (q_gt.w(), Vec3::new(q_gt.x(), q_gt.y(), q_gt.z()));
    let (w2, v2) = (q_est.w(), Vec3::new(q_est.x(), q_est.y(), q_est.z()));
    let vec = v2 * w1 - v1 * w2 - v1.cross(&v2);
    Ok(2.0 * vec.norm().atan2(q_gt.dot(q_est).abs()))
}

pub fn image_score(gt: &Pose, est: &Pose) -> Result<ImageScore> {
    let (e_t, e_t_normalized) = position_error(&gt.position, &est.position)?;
    let e_q = attitude_error(&gt.attitude, &est.attitude)?;
    Ok(ImageScore {
        e_t,
        e_t_normalized,
        e_q,
        score: e_t_normalized + e_q,
    })
}

/// Mean, sample standard deviation (N−1) and median of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("cannot summarize an empty list"));
        }
        let n = values.len() as f64;
        // offsets from the first value keep constant lists exact
        let shift = values[0];
        let offsets: Vec<f64> = values.iter().map(|v| v - shift).collect();
        let mean = shift + pairwise_sum(&offsets) / n;
        let sq: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
        let std = if values.len() > 1 {
            (pairwise_sum(&sq) / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            mean,
            std,
            median: median(values),
        })
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            mean: self.mean * k,
            std: self.std * k,
            median: self.median * k,
        }
    }
}

impl std::fmt::Display for Summary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match f.precision() {
            Some(p) => write!(f, "{:.p$} ± {:.p$}", self.mean, self.std),
            None => write!(f, "{} ± {}", self.mean, self.std),
        }
    }
}

/// Dataset-level statistics. `e_q` is kept in radians and degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub n: usize,
    /// Dataset score `E`: mean of the per-image scores.
    pub score: Summary,
    pub e_t: Summary,
    pub e_t_normalized: Summary,
    pub e_q_rad: Summary,
    pub e_q_deg: Summary,
}

impl AggregateReport {
    #[allow(non_snake_case)]
    pub fn E(&self) -> f64 {
        self.score.mean
    }
}

pub fn aggregate(scores: &[ImageScore]) -> Result<AggregateReport> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty score list"));
    }
    let col = |f: fn(&ImageScore) -> f64| -> Vec<f64> { scores.iter().map(f).collect() };
    let e_q_rad = Summary::of(&col(|s| s.e_q))?;
    Ok(AggregateReport {
        n: scores.len(),
        score: Summary::of(&col(|s| s.score))?,
        e_t: Summary::of(&col(|s| s.e_t))?,
        e_t_normalized: Summary::of(&col(|s| s.e_t_normalized))?,
        e_q_deg: Summary::of(&col(|s| s.e_q.to_degrees()))?,
        e_q_rad,
    })
}

/// Detector quality over aligned prediction / ground-truth lists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    #[serde(rename = "IoU mean")]
    pub iou_mean: f64,
    #[serde(rename = "IoU median")]
    pub iou_median: f64,
    /// Percentage of images whose ground-truth box lies inside the ROI built
    /// from the prediction.
    #[serde(rename = "ROI accuracy")]
    pub roi_accuracy: f64,
}

pub fn detection_metrics(pred: &[BBox], gt: &[BBox], cfg: &RoiConfig) -> Result<DetectionReport> {
    if pred.len() != gt.len() {
        return Err(Error::invalid(format!(
            "prediction/ground-truth length mismatch: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("no boxes to evaluate"));
    }
    let ious: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect();
    let mut hits = 0usize;
    for (p, g) in pred.iter().zip(gt) {
        // a prediction that cannot even form an ROI counts as a miss
        if make_roi(p, cfg).is_ok_and(|roi| contains(&roi, g)) {
            hits += 1;
        }
    }
    Ok(DetectionReport {
        iou_mean: pairwise_sum(&ious) / ious.len() as f64,
        iou_median: median(&ious),
        roi_accuracy: 100.0 * hits as f64 / pred.len() as f64,
    })
}

/// Fixed-order pairwise summation.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 8;
    if values.len() <= LEAF {
        values.iter().sum()
    } else {
        let mid = values.len() / 2;
        pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn deg_about_z(deg: f64) -> UnitQuaternion {
        UnitQuaternion::from_axis_angle(&Vec3::z(), deg.to_radians()).unwrap()
    }

    #[test]
    fn position_examples() {
        let z10 = Vec3::new(0.0, 0.0, 10.0);
        assert_eq!(position_error(&z10, &z10).unwrap(), (0.0, 0.0));
        assert_eq!(position_error(&z10, &Vec3::new(0.0, 0.0, 10.5)).unwrap(), (0.5, 0.05));
        assert_eq!(position_error(&Vec3::new(3.0, 4.0, 0.0), &Vec3::zeros()).unwrap(), (5.0, 1.0));
        assert!(position_error(&Vec3::zeros(), &z10).is_err());
    }

    #[test]
    fn attitude_examples() {
        let q = UnitQuaternion::new_normalize(0.3, -0.1, 0.5, 0.2).unwrap();
        assert_eq!(attitude_error(&q, &q).unwrap(), 0.0);
        assert_eq!(attitude_error(&q, &-q).unwrap(), 0.0);
        let e = attitude_error(&UnitQuaternion::IDENTITY, &deg_about_z(10.0)).unwrap();
        assert!((e - 0.174_532_925_199_432_95).abs() < 1e-12);
    }

    #[test]
    fn non_unit_quaternion_rejected() {
        let bad = UnitQuaternion::try_from_unit(1.1, 0.0, 0.0, 0.0, 1.0).unwrap();
        assert!(attitude_error(&UnitQuaternion::IDENTITY, &bad).is_err());
    }

    #[test]
    fn score_examples() {
        let gt = Pose::new(Vec3::new(0.0, 0.0, 40.0), UnitQuaternion::IDENTITY);
        assert_eq!(image_score(&gt, &gt).unwrap().score, 0.0);

        let rot = Pose::new(gt.position, UnitQuaternion::from_rotation_vector(&Vec3::new(0.0, 0.01, 0.0)));
        assert!((image_score(&gt, &rot).unwrap().score - 0.01).abs() < 1e-12);

        let shifted = Pose::new(Vec3::new(0.0, 0.0, 40.4), UnitQuaternion::IDENTITY);
        assert!((image_score(&gt, &shifted).unwrap().score - 0.01).abs() < 1e-15);
    }

    #[test]
    fn aggregate_examples() {
        let one = ImageScore {
            e_t: 0.1,
            e_t_normalized: 0.002,
            e_q: 0.01,
            score: 0.012,
        };
        let r = aggregate(&[one]).unwrap();
        assert_eq!(r.e_t.std, 0.0);
        assert_eq!(r.e_t.mean, 0.1);
        assert_eq!(r.e_t.median, 0.1);

        let mk = |deg: f64| ImageScore {
            e_t: 0.0,
            e_t_normalized: 0.0,
            e_q: deg.to_radians(),
            score: deg.to_radians(),
        };
        let r = aggregate(&[mk(0.3), mk(0.7)]).unwrap();
        assert!((r.e_q_deg.mean - 0.5).abs() < 1e-12);
        assert!((r.e_q_deg.std - 0.2_f64.hypot(0.2)).abs() < 1e-12);
        assert!((r.E() - (mk(0.3).score + mk(0.7).score) / 2.0).abs() < 1e-15);

        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn summary_display() {
        let s = Summary {
            mean: 0.52,
            std: 0.52,
            median: 0.4,
        };
        assert_eq!(format!("{s:.2}"), "0.52 ± 0.52");
    }

    #[test]
    fn detection_examples() {
        let cfg = RoiConfig::default();
        let gt = vec![
            BBox::new(100.0, 100.0, 400.0, 300.0).unwrap(),
            BBox::new(800.0, 500.0, 1000.0, 800.0).unwrap(),
        ];
        let r = detection_metrics(&gt, &gt, &cfg).unwrap();
        assert_eq!((r.iou_mean, r.iou_median, r.roi_accuracy), (1.0, 1.0, 100.0));

        let far = vec![
            BBox::new(1500.0, 900.0, 1600.0, 1000.0).unwrap(),
            BBox::new(10.0, 10.0, 60.0, 60.0).unwrap(),
        ];
        let r = detection_metrics(&far, &gt, &cfg).unwrap();
        assert_eq!((r.iou_mean, r.roi_accuracy), (0.0, 0.0));

        assert!(detection_metrics(&gt[..1], &gt, &cfg).is_err());

        let json = serde_json::to_value(r).unwrap();
        for key in ["IoU mean", "IoU median", "ROI accuracy"] {
            assert!(json.get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_input() {
        let v: Vec<f64> = (1..=100).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&v), 5050.0);
    }
}
