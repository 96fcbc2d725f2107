use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{epnp, point_errors, Correspondence, PnpResult, RansacConfig};
use crate::geometry::CameraIntrinsics;
use crate::{Error, Result};

/// EPnP inside a seeded RANSAC loop.
///
/// Samples are drawn without replacement from a ChaCha8 stream seeded with
/// `cfg.seed`, so the result is a pure function of the inputs. The consensus
/// set with the most inliers wins (ties go to the lower inlier RMS) and the
/// final pose is re-estimated with EPnP on that whole set.
pub fn ransac_pnp(corr: &[Correspondence], cam: &CameraIntrinsics, cfg: &RansacConfig) -> Result<PnpResult> {
    cfg.validate()?;
    let n = corr.len();
    if n < cfg.min_sample {
        return Err(Error::invalid(format!(
            "ransac needs at least {} correspondences, got {n}",
            cfg.min_sample
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<bool>, usize, f64)> = None;
    let mut required = cfg.max_iterations;
    let mut iterations = 0;
    let mut subset = Vec::with_capacity(cfg.min_sample);

    while iterations < required {
        iterations += 1;
        subset.clear();
        subset.extend(sample(&mut rng, n, cfg.min_sample).iter().map(|i| corr[i]));
        let Ok(pose) = epnp(&subset, cam) else {
            continue;
        };
        let errs = point_errors(&pose, corr, cam);
        let mask: Vec<bool> = errs.iter().map(|e| *e < cfg.inlier_threshold).collect();
        let count = mask.iter().filter(|&&b| b).count();
        if count == 0 {
            continue;
        }
        let rms = inlier_rms(&errs, &mask);
        let better = match &best {
            None => true,
            Some((_, c, r)) => count > *c || (count == *c && rms < *r),
        };
        if better {
            best = Some((mask, count, rms));
            required = required.min(adaptive_iterations(
                count as f64 / n as f64,
                cfg.min_sample,
                cfg.confidence,
                cfg.max_iterations,
            ));
        }
    }

    let best_count = best.as_ref().map_or(0, |b| b.1);
    let Some((mask, count, _)) = best.filter(|b| b.1 >= cfg.min_sample) else {
        return Err(Error::ConsensusFailure {
            best: best_count,
            min_sample: cfg.min_sample,
        });
    };
    let inliers: Vec<Correspondence> = corr
        .iter()
        .zip(&mask)
        .filter(|(_, &m)| m)
        .map(|(c, _)| *c)
        .collect();
    debug_assert_eq!(inliers.len(), count);
    let pose = epnp(&inliers, cam)?;
    let errs = point_errors(&pose, corr, cam);
    Ok(PnpResult {
        pose,
        rms_reprojection: inlier_rms(&errs, &mask),
        inlier_mask: mask,
        iterations_used: iterations,
    })
}

fn inlier_rms(errs: &[f64], mask: &[bool]) -> f64 {
    let (sum, k) = errs
        .iter()
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, k), (e, _)| (s + e * e, k + 1));
    if k == 0 {
        0.0
    } else {
        (sum / k as f64).sqrt()
    }
}

/// Iterations needed to draw one all-inlier sample with probability
/// `confidence` given inlier ratio `ratio`.
fn adaptive_iterations(ratio: f64, sample_size: usize, confidence: f64, cap: usize) -> usize {
    let p_good = ratio.powi(sample_size as i32);
    if p_good >= 1.0 {
        return 1;
    }
    if p_good <= 0.0 {
        return cap;
    }
    let k = (1.0 - confidence).ln() / (1.0 - p_good).ln();
    if k.is_finite() {
        (k.ceil() as usize).clamp(1, cap)
    } else {
        cap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, PixelPoint, Pose, UnitQuaternion, Vec3, WireframeModel};

    fn clean(pose: &Pose, cam: &CameraIntrinsics) -> Vec<Correspondence> {
        let wf = WireframeModel::reference_satellite();
        project(pose, cam, wf.keypoints())
            .unwrap()
            .into_iter()
            .zip(wf.keypoints())
            .enumerate()
            .map(|(i, (p, w))| Correspondence::new(p, *w, i))
            .collect()
    }

    #[test]
    fn adaptive_count() {
        assert_eq!(adaptive_iterations(1.0, 5, 0.99, 1000), 1);
        assert_eq!(adaptive_iterations(0.0, 5, 0.99, 1000), 1000);
        // 0.5^4 = 1/16: ln(0.01)/ln(15/16) = 71.36
        assert_eq!(adaptive_iterations(0.5, 4, 0.99, 1000), 72);
    }

    #[test]
    fn clean_data_all_inliers() {
        let cam = CameraIntrinsics::default();
        let truth = Pose::new(Vec3::new(1.0, -0.5, 50.0), UnitQuaternion::new_normalize(0.1, 0.5, 0.5, 0.7).unwrap());
        let corr = clean(&truth, &cam);
        let res = ransac_pnp(&corr, &cam, &RansacConfig::default()).unwrap();
        assert!(res.inlier_mask.iter().all(|&b| b));
        assert!(res.rms_reprojection < 1e-6);
        assert_eq!(res.iterations_used, 1);
    }

    #[test]
    fn same_seed_same_result() {
        let cam = CameraIntrinsics::default();
        let truth = Pose::new(Vec3::new(0.0, 0.5, 40.0), UnitQuaternion::new_normalize(0.6, -0.2, 0.1, 0.7).unwrap());
        let mut corr = clean(&truth, &cam);
        corr[2].image = PixelPoint::new(100.0, 1000.0);
        corr[7].image = PixelPoint::new(1500.0, 80.0);
        let cfg = RansacConfig { seed: 99, ..Default::default() };
        let a = ransac_pnp(&corr, &cam, &cfg).unwrap();
        let b = ransac_pnp(&corr, &cam, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(!a.inlier_mask[2] && !a.inlier_mask[7]);
    }

    #[test]
    fn pure_outliers_fail_consensus() {
        let cam = CameraIntrinsics::default();
        let wf = WireframeModel::reference_satellite();
        let corr: Vec<_> = wf
            .keypoints()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let u = (i as f64 * 733.0) % 1920.0;
                let v = (i as f64 * 419.0 + 57.0) % 1200.0;
                Correspondence::new(PixelPoint::new(u, v), *w, i)
            })
            .collect();
        let err = ransac_pnp(&corr, &cam, &RansacConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ConsensusFailure { .. }), "{err:?}");
    }

    #[test]
    fn too_few_correspondences() {
        let cam = CameraIntrinsics::default();
        let c = Correspondence::new(PixelPoint::new(1.0, 1.0), Vec3::zeros(), 0);
        assert!(matches!(
            ransac_pnp(&[c; 4], &cam, &RansacConfig::default()),
            Err(Error::InvalidArgument(_))
        ));
    }
}
