use nalgebra::{DMatrix, Matrix2x3, Matrix3, RowVector4, Vector3};

use crate::geometry::{CameraIntrinsics, PixelPoint, Pose, Vec3, WireframeModel, MIN_DEPTH};
use crate::{Error, Result};

/// Minimum angular spread between viewing rays, radians.
const MIN_RAY_SEPARATION: f64 = 1e-4;
const REFINE_ITERATIONS: usize = 20;

/// Body-frame point seen at `pixel` in each view, where each view's pose
/// places the target in that camera.
///
/// Linear DLT estimate from the stacked cross-product constraints, then a
/// damped Gauss–Newton polish of the pixel reprojection error.
pub fn triangulate(observations: &[(Pose, PixelPoint)], cam: &CameraIntrinsics) -> Result<Vec3> {
    if observations.len() < 2 {
        return Err(Error::invalid(format!(
            "triangulation needs at least 2 views, got {}",
            observations.len()
        )));
    }
    let rays: Vec<Vec3> = observations
        .iter()
        .map(|(pose, px)| pose.attitude.inverse().rotate(&cam.back_project(px)).normalize())
        .collect();
    let mut spread: f64 = 0.0;
    for (i, a) in rays.iter().enumerate() {
        for b in &rays[i + 1..] {
            spread = spread.max(a.cross(b).norm().atan2(a.dot(b)));
        }
    }
    if !(spread > MIN_RAY_SEPARATION) {
        return Err(Error::DegenerateBaseline { angle: spread });
    }

    let mut a = DMatrix::<f64>::zeros(2 * observations.len(), 4);
    for (i, (pose, px)) in observations.iter().enumerate() {
        let (x, y) = cam.normalize(px);
        let r = pose.attitude.to_rotation_matrix();
        let t = pose.position;
        let row = |k: usize| RowVector4::new(r[(k, 0)], r[(k, 1)], r[(k, 2)], t[k]);
        a.set_row(2 * i, &(row(2) * x - row(0)));
        a.set_row(2 * i + 1, &(row(2) * y - row(1)));
    }
    let svd = a.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::NumericalFailure("svd failed during triangulation".into()))?;
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(3);
    let h = v_t.row(smallest);
    if h[3].abs() <= f64::EPSILON * h.norm() {
        return Err(Error::DegenerateBaseline { angle: spread });
    }
    let linear = Vec3::new(h[0] / h[3], h[1] / h[3], h[2] / h[3]);
    Ok(refine_point(linear, observations, cam))
}

fn point_cost(p: &Vec3, observations: &[(Pose, PixelPoint)], cam: &CameraIntrinsics) -> f64 {
    observations
        .iter()
        .map(|(pose, px)| {
            let pc = pose.transform(p);
            if pc.z > MIN_DEPTH {
                let q = cam.project_camera_point(&pc);
                (q.u - px.u).powi(2) + (q.v - px.v).powi(2)
            } else {
                f64::INFINITY
            }
        })
        .sum()
}

fn refine_point(start: Vec3, observations: &[(Pose, PixelPoint)], cam: &CameraIntrinsics) -> Vec3 {
    let mut p = start;
    let mut cost = point_cost(&p, observations, cam);
    if !cost.is_finite() {
        return p;
    }
    let mut damping = 1e-3;
    for _ in 0..REFINE_ITERATIONS {
        let mut h = Matrix3::<f64>::zeros();
        let mut g = Vector3::<f64>::zeros();
        for (pose, px) in observations {
            let r = pose.attitude.to_rotation_matrix();
            let pc = r * p + pose.position;
            let iz = 1.0 / pc.z;
            let q = cam.project_camera_point(&pc);
            let res = nalgebra::Vector2::new(q.u - px.u, q.v - px.v);
            let dproj = Matrix2x3::new(
                cam.fx() * iz,
                0.0,
                -cam.fx() * pc.x * iz * iz,
                0.0,
                cam.fy() * iz,
                -cam.fy() * pc.y * iz * iz,
            );
            let jac = dproj * r;
            h += jac.transpose() * jac;
            g += jac.transpose() * res;
        }
        if g.amax() < 1e-12 {
            break;
        }
        let mut accepted = false;
        while damping < 1e16 {
            let mut a = h;
            for k in 0..3 {
                a[(k, k)] += damping * h[(k, k)].max(1e-12);
            }
            let Some(ch) = a.cholesky() else {
                damping *= 10.0;
                continue;
            };
            let step = ch.solve(&(-g));
            let trial = p + step;
            let trial_cost = point_cost(&trial, observations, cam);
            if trial_cost < cost {
                p = trial;
                cost = trial_cost;
                damping *= 0.1;
                accepted = true;
                break;
            }
            damping *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    p
}

/// Rebuilds every keypoint of a wireframe from posed landmark observations.
///
/// `views` holds each image's target pose and its ordered landmarks, `None`
/// where a keypoint was not observed. All views must list the same number of
/// landmarks.
pub fn reconstruct_wireframe(
    name: &str,
    views: &[(Pose, Vec<Option<PixelPoint>>)],
    cam: &CameraIntrinsics,
) -> Result<WireframeModel> {
    let k = views
        .first()
        .map(|(_, lm)| lm.len())
        .ok_or_else(|| Error::invalid("no views to reconstruct from"))?;
    if let Some(i) = views.iter().position(|(_, lm)| lm.len() != k) {
        return Err(Error::invalid(format!(
            "view {i} has {} landmarks, expected {k}",
            views[i].1.len()
        )));
    }
    let keypoints = (0..k)
        .map(|idx| {
            let obs: Vec<(Pose, PixelPoint)> = views
                .iter()
                .filter_map(|(pose, lm)| lm[idx].map(|p| (*pose, p)))
                .collect();
            triangulate(&obs, cam)
        })
        .collect::<Result<Vec<_>>>()?;
    WireframeModel::new(name, keypoints)
}
