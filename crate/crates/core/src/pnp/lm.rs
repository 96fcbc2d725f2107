//! Levenberg–Marquardt refinement of a 6-DoF pose on reprojection error.
//!
//! Parameters are a local increment `[ω, δt]`: the attitude becomes
//! `q ⊗ exp(ω)` and the position `t + δt`. The Jacobian is analytic.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};

use super::{reprojection_residuals, Correspondence, LmConfig};
use crate::geometry::{CameraIntrinsics, Pose, UnitQuaternion, Vec3, MIN_DEPTH};
use crate::{Error, Result};

const DAMPING_UP: f64 = 10.0;
const DAMPING_DOWN: f64 = 0.1;
const DAMPING_MAX: f64 = 1e32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LmTermination {
    Gradient,
    Step,
    Cost,
    MaxIterations,
    /// Damping grew without finding a descent step.
    Stalled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub pose: Pose,
    /// Sum of squared residuals, pixels².
    pub initial_cost: f64,
    pub final_cost: f64,
    pub iterations: usize,
    pub termination: LmTermination,
}

/// Refines `initial`; see [`lm_refine_report`].
pub fn lm_refine(initial: &Pose, corr: &[Correspondence], cam: &CameraIntrinsics, cfg: &LmConfig) -> Result<Pose> {
    lm_refine_report(initial, corr, cam, cfg).map(|r| r.pose)
}

/// Minimizes `Σ |project(pose, X_i) - x_i|²`. Only strictly cheaper steps are
/// accepted, so `final_cost <= initial_cost` always holds.
pub fn lm_refine_report(
    initial: &Pose,
    corr: &[Correspondence],
    cam: &CameraIntrinsics,
    cfg: &LmConfig,
) -> Result<LmReport> {
    cfg.validate()?;
    if corr.is_empty() {
        return Err(Error::invalid("lm_refine needs at least one correspondence"));
    }
    let mut pose = *initial;
    let mut cost = cost_of(&pose, corr, cam)?;
    if !cost.is_finite() {
        return Err(Error::NumericalFailure("initial residuals are not finite".into()));
    }
    let initial_cost = cost;
    let mut damping = cfg.initial_damping;
    let mut iterations = 0;
    let mut termination = LmTermination::MaxIterations;

    'outer: while iterations < cfg.max_iterations {
        iterations += 1;
        let (r, j) = residuals_and_jacobian(&pose, corr, cam)?;
        let g: Vector6<f64> = (j.transpose() * &r).fixed_rows::<6>(0).into_owned();
        if !g.iter().all(|x| x.is_finite()) {
            return Err(Error::NumericalFailure("gradient is not finite".into()));
        }
        if g.amax() <= cfg.gradient_tol {
            termination = LmTermination::Gradient;
            break;
        }
        let h: Matrix6<f64> = (j.transpose() * &j).fixed_view::<6, 6>(0, 0).into_owned();
        loop {
            let mut a = h;
            for k in 0..6 {
                a[(k, k)] += damping * h[(k, k)].max(1e-12);
            }
            let step = match a.cholesky() {
                Some(ch) => ch.solve(&(-g)),
                None => {
                    damping *= DAMPING_UP;
                    if damping > DAMPING_MAX {
                        termination = LmTermination::Stalled;
                        break 'outer;
                    }
                    continue;
                }
            };
            if step.norm() <= cfg.step_tol * (pose.position.norm() + cfg.step_tol) {
                termination = LmTermination::Step;
                break 'outer;
            }
            let trial = apply_increment(&pose, &step);
            let trial_cost = cost_of(&trial, corr, cam).unwrap_or(f64::INFINITY);
            if trial_cost < cost {
                let decrease = (cost - trial_cost) / cost;
                pose = trial;
                cost = trial_cost;
                damping = (damping * DAMPING_DOWN).max(1e-300);
                if decrease <= cfg.cost_tol {
                    termination = LmTermination::Cost;
                    break 'outer;
                }
                break;
            }
            damping *= DAMPING_UP;
            if damping > DAMPING_MAX {
                termination = LmTermination::Stalled;
                break 'outer;
            }
        }
    }

    Ok(LmReport {
        pose,
        initial_cost,
        final_cost: cost,
        iterations,
        termination,
    })
}

/// `q ⊗ exp(ω)` and `t + δt` for `delta = [ω, δt]`.
pub fn apply_increment(pose: &Pose, delta: &Vector6<f64>) -> Pose {
    let omega = Vec3::new(delta[0], delta[1], delta[2]);
    let dt = Vec3::new(delta[3], delta[4], delta[5]);
    Pose::new(
        pose.position + dt,
        pose.attitude * UnitQuaternion::from_rotation_vector(&omega),
    )
}

/// Analytic `2n × 6` Jacobian of the stacked residuals `(Δu, Δv)` with
/// respect to `[ω, δt]` at zero increment.
pub fn pose_jacobian(pose: &Pose, corr: &[Correspondence], cam: &CameraIntrinsics) -> Result<DMatrix<f64>> {
    residuals_and_jacobian(pose, corr, cam).map(|(_, j)| j)
}

fn cost_of(pose: &Pose, corr: &[Correspondence], cam: &CameraIntrinsics) -> Result<f64> {
    let (res, _) = reprojection_residuals(pose, corr, cam)?;
    Ok(res.iter().map(|r| r.norm_squared()).sum())
}

fn residuals_and_jacobian(
    pose: &Pose,
    corr: &[Correspondence],
    cam: &CameraIntrinsics,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = corr.len();
    let rot = pose.attitude.to_rotation_matrix();
    let mut r = DVector::zeros(2 * n);
    let mut j = DMatrix::zeros(2 * n, 6);
    for (index, c) in corr.iter().enumerate() {
        let pc = rot * c.world + pose.position;
        if !(pc.z > MIN_DEPTH) {
            return Err(Error::BehindCamera { index, depth: pc.z });
        }
        let iz = 1.0 / pc.z;
        let px = cam.project_camera_point(&pc);
        r[2 * index] = px.u - c.image.u;
        r[2 * index + 1] = px.v - c.image.v;
        if !(r[2 * index].is_finite() && r[2 * index + 1].is_finite()) {
            return Err(Error::NumericalFailure(format!("residual {index} is not finite")));
        }
        // d(u, v)/d(X, Y, Z)
        let du = [cam.fx() * iz, 0.0, -cam.fx() * pc.x * iz * iz];
        let dv = [0.0, cam.fy() * iz, -cam.fy() * pc.y * iz * iz];
        for k in 0..3 {
            // d pc / d ω_k = R (e_k × X)
            let mut e = Vec3::zeros();
            e[k] = 1.0;
            let d = rot * e.cross(&c.world);
            j[(2 * index, k)] = du[0] * d.x + du[1] * d.y + du[2] * d.z;
            j[(2 * index + 1, k)] = dv[0] * d.x + dv[1] * d.y + dv[2] * d.z;
            j[(2 * index, 3 + k)] = du[k];
            j[(2 * index + 1, 3 + k)] = dv[k];
        }
    }
    Ok((r, j))
}
