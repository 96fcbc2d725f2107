//! EPnP: world points as barycentric combinations of a few control points,
//! whose camera-frame coordinates span the near null space of a linear
//! projection system.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use super::{point_errors, Correspondence};
use crate::geometry::{principal_axes, CameraIntrinsics, Pose, UnitQuaternion, Vec3, MIN_DEPTH};
use crate::{Error, Result};

/// Smallest-to-largest scatter ratio under which the points count as planar.
const PLANAR_RATIO: f64 = 1e-8;
const GAUSS_NEWTON_ITERATIONS: usize = 10;

/// Closed-form pose from four or more correspondences.
///
/// Tries null-space dimensions 1 to 3 (1 and 2 for planar layouts), refines
/// each set of weights with Gauss–Newton on the inter-control-point distances,
/// and returns the candidate with the lowest reprojection RMS among those
/// that put every point in front of the camera.
pub fn epnp(corr: &[Correspondence], cam: &CameraIntrinsics) -> Result<Pose> {
    let n = corr.len();
    if n < 4 {
        return Err(Error::invalid(format!("epnp needs at least 4 correspondences, got {n}")));
    }
    let world: Vec<Vec3> = corr.iter().map(|c| c.world).collect();
    if world.iter().any(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::invalid("world points must be finite"));
    }
    let control = ControlPoints::fit(&world)?;
    let alphas: Vec<Vec<f64>> = world.iter().map(|p| control.barycentric(p)).collect();
    let nc = control.points.len();

    let mut m = DMatrix::<f64>::zeros(2 * n, 3 * nc);
    for (i, (c, a)) in corr.iter().zip(&alphas).enumerate() {
        let (x, y) = cam.normalize(&c.image);
        if !(x.is_finite() && y.is_finite()) {
            return Err(Error::invalid(format!("image point {i} is not finite")));
        }
        for (j, &aij) in a.iter().enumerate() {
            m[(2 * i, 3 * j)] = aij;
            m[(2 * i, 3 * j + 2)] = -aij * x;
            m[(2 * i + 1, 3 * j + 1)] = aij;
            m[(2 * i + 1, 3 * j + 2)] = -aij * y;
        }
    }
    let mtm = m.transpose() * &m;
    let eig = SymmetricEigen::new(mtm);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let kernel: Vec<DVector<f64>> = order
        .iter()
        .take(4)
        .map(|&i| eig.eigenvectors.column(i).into_owned())
        .collect();

    let solver = BetaSolver::new(&control, &kernel);
    let max_dim = if nc == 4 { 3 } else { 2 };

    let mut best: Option<Candidate> = None;
    let mut seeds: Vec<Vec<f64>> = Vec::new();
    for dim in 1..=max_dim {
        let Some(mut betas) = solver.linearized(dim) else {
            continue;
        };
        solver.gauss_newton(&mut betas);
        seeds.push(betas.clone());
        if let Some(c) = solver.candidate(&betas, &alphas, &world, corr, cam) {
            keep_better(&mut best, c);
        }
    }
    // With exactly four non-coplanar points the null space is four
    // dimensional; the lower-dimensional weights seed a full 4-D refinement.
    if nc == 4 && n == 4 {
        for seed in seeds {
            let mut betas = seed;
            betas.resize(4, 0.0);
            solver.gauss_newton(&mut betas);
            if let Some(c) = solver.candidate(&betas, &alphas, &world, corr, cam) {
                keep_better(&mut best, c);
            }
        }
    }
    // The distance system can settle on a mirrored local solution when only
    // four points are given; closed-form three-point poses, ranked on all
    // four, always include the true one.
    if n == 4 {
        for skip in (0..4).rev() {
            let idx: Vec<usize> = (0..4).filter(|&i| i != skip).collect();
            for pose in p3p([&corr[idx[0]], &corr[idx[1]], &corr[idx[2]]], cam) {
                if let Some(c) = score_pose(pose, &world, corr, cam) {
                    keep_better(&mut best, c);
                }
            }
        }
    }
    best.map(|c| c.pose).ok_or(Error::NoValidPose)
}

struct Candidate {
    pose: Pose,
    rms: f64,
}

fn keep_better(best: &mut Option<Candidate>, c: Candidate) {
    if best.as_ref().is_none_or(|b| c.rms < b.rms) {
        *best = Some(c);
    }
}

/// Centroid plus one control point along each significant principal axis.
struct ControlPoints {
    points: Vec<Vec3>,
    /// Offsets `c_j - c_0` for `j >= 1`; mutually orthogonal.
    axes: Vec<Vec3>,
}

impl ControlPoints {
    fn fit(world: &[Vec3]) -> Result<Self> {
        let (centroid, dirs, scatter) = principal_axes(world);
        if !(scatter[0] > 0.0) {
            return Err(Error::DegenerateGeometry("all world points coincide".into()));
        }
        if scatter[1] < PLANAR_RATIO * scatter[0] {
            return Err(Error::DegenerateGeometry("world points are collinear".into()));
        }
        let planar = scatter[2] < PLANAR_RATIO * scatter[0];
        let used = if planar { 2 } else { 3 };
        let n = world.len() as f64;
        let axes: Vec<Vec3> = (0..used)
            .map(|k| dirs.column(k).into_owned() * (scatter[k] / n).sqrt())
            .collect();
        let mut points = vec![centroid];
        points.extend(axes.iter().map(|a| centroid + a));
        Ok(Self { points, axes })
    }

    fn barycentric(&self, p: &Vec3) -> Vec<f64> {
        let d = p - self.points[0];
        let mut a = Vec::with_capacity(self.points.len());
        a.push(0.0);
        a.extend(self.axes.iter().map(|ax| d.dot(ax) / ax.norm_squared()));
        a[0] = 1.0 - a[1..].iter().sum::<f64>();
        a
    }
}

/// Finds weights `β` so that `Σ β_k v_k` reproduces the world-frame distances
/// between control points.
struct BetaSolver {
    /// For every control-point pair, the difference `v_k[a] - v_k[b]` per
    /// kernel vector.
    pair_diffs: Vec<Vec<Vec3>>,
    /// Squared world-frame distance per pair.
    pair_dist2: Vec<f64>,
    kernel: Vec<DVector<f64>>,
    nc: usize,
}

impl BetaSolver {
    fn new(control: &ControlPoints, kernel: &[DVector<f64>]) -> Self {
        let nc = control.points.len();
        let mut pair_diffs = Vec::new();
        let mut pair_dist2 = Vec::new();
        for a in 0..nc {
            for b in a + 1..nc {
                pair_dist2.push((control.points[a] - control.points[b]).norm_squared());
                pair_diffs.push(
                    kernel
                        .iter()
                        .map(|v| {
                            Vec3::new(
                                v[3 * a] - v[3 * b],
                                v[3 * a + 1] - v[3 * b + 1],
                                v[3 * a + 2] - v[3 * b + 2],
                            )
                        })
                        .collect(),
                );
            }
        }
        Self {
            pair_diffs,
            pair_dist2,
            kernel: kernel.to_vec(),
            nc,
        }
    }

    /// Initial weights from the linear system in the products `β_k β_l`.
    fn linearized(&self, dim: usize) -> Option<Vec<f64>> {
        let products: Vec<(usize, usize)> = (0..dim).flat_map(|k| (k..dim).map(move |l| (k, l))).collect();
        if products.len() > self.pair_dist2.len() || dim > self.kernel.len() {
            return None;
        }
        let rows = self.pair_dist2.len();
        let mut l = DMatrix::<f64>::zeros(rows, products.len());
        for (p, diffs) in self.pair_diffs.iter().enumerate() {
            for (col, &(k, j)) in products.iter().enumerate() {
                let d = diffs[k].dot(&diffs[j]);
                l[(p, col)] = if k == j { d } else { 2.0 * d };
            }
        }
        let rho = DVector::from_column_slice(&self.pair_dist2);
        let mut b = l.svd(true, true).solve(&rho, 1e-14).ok()?;
        if b[0] < 0.0 {
            b.neg_mut();
        }
        let mut betas = vec![b[0].max(0.0).sqrt()];
        for k in 1..dim {
            let kk = products.iter().position(|&pr| pr == (k, k))?;
            let mag = b[kk].abs().sqrt();
            let sign = if b[k] < 0.0 { -1.0 } else { 1.0 };
            betas.push(sign * mag);
        }
        betas.iter().all(|v| v.is_finite()).then_some(betas)
    }

    fn gauss_newton(&self, betas: &mut [f64]) {
        let dim = betas.len();
        let rows = self.pair_dist2.len();
        for _ in 0..GAUSS_NEWTON_ITERATIONS {
            let mut jac = DMatrix::<f64>::zeros(rows, dim);
            let mut res = DVector::<f64>::zeros(rows);
            for (p, diffs) in self.pair_diffs.iter().enumerate() {
                let w: Vec3 = diffs.iter().zip(betas.iter()).map(|(d, b)| d * *b).sum();
                res[p] = w.norm_squared() - self.pair_dist2[p];
                for k in 0..dim {
                    jac[(p, k)] = 2.0 * w.dot(&diffs[k]);
                }
            }
            let Ok(step) = jac.svd(true, true).solve(&(-res), 1e-14) else {
                return;
            };
            if !step.iter().all(|s| s.is_finite()) {
                return;
            }
            let scale = betas.iter().map(|b| b.abs()).fold(0.0, f64::max).max(1e-300);
            for (b, s) in betas.iter_mut().zip(step.iter()) {
                *b += s;
            }
            if step.amax() <= 1e-15 * scale {
                return;
            }
        }
    }

    fn candidate(
        &self,
        betas: &[f64],
        alphas: &[Vec<f64>],
        world: &[Vec3],
        corr: &[Correspondence],
        cam: &CameraIntrinsics,
    ) -> Option<Candidate> {
        let control_cam: Vec<Vec3> = (0..self.nc)
            .map(|j| {
                betas
                    .iter()
                    .zip(&self.kernel)
                    .map(|(b, v)| Vec3::new(v[3 * j], v[3 * j + 1], v[3 * j + 2]) * *b)
                    .sum()
            })
            .collect();
        let mut camera_pts: Vec<Vec3> = alphas
            .iter()
            .map(|a| a.iter().zip(&control_cam).map(|(w, c)| c * *w).sum())
            .collect();
        // β and -β satisfy the same distance constraints; pick the sign that
        // puts the target in front of the camera.
        if camera_pts.iter().map(|p| p.z).sum::<f64>() < 0.0 {
            camera_pts.iter_mut().for_each(|p| *p = -*p);
        }
        score_pose(rigid_alignment(world, &camera_pts)?, world, corr, cam)
    }
}

/// Reprojection RMS of `pose`, or `None` if a point falls behind the camera.
fn score_pose(pose: Pose, world: &[Vec3], corr: &[Correspondence], cam: &CameraIntrinsics) -> Option<Candidate> {
    if world.iter().any(|p| !(pose.transform(p).z > MIN_DEPTH)) {
        return None;
    }
    let errs = point_errors(&pose, corr, cam);
    let rms = (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
    rms.is_finite().then_some(Candidate { pose, rms })
}

/// All poses consistent with three correspondences (Grunert's elimination).
///
/// With depths `s2 = u s1`, `s3 = v s1`, the law of cosines on the three
/// triangles gives two quadratics in `u`; their difference is linear in `u`,
/// and substituting back leaves a quartic in `v`.
fn p3p(corr: [&Correspondence; 3], cam: &CameraIntrinsics) -> Vec<Pose> {
    let f: Vec<Vec3> = corr.iter().map(|c| cam.back_project(&c.image).normalize()).collect();
    let w: Vec<Vec3> = corr.iter().map(|c| c.world).collect();
    let a2 = (w[1] - w[2]).norm_squared();
    let b2 = (w[0] - w[2]).norm_squared();
    let c2 = (w[0] - w[1]).norm_squared();
    if !(a2 > 0.0 && b2 > 0.0 && c2 > 0.0) {
        return Vec::new();
    }
    let (ca, cb, cg) = (f[1].dot(&f[2]), f[0].dot(&f[2]), f[0].dot(&f[1]));
    let k = (a2 - c2) / b2;
    // polynomials in v, lowest degree first
    let p = [1.0, -2.0 * cb, 1.0];
    let num = [1.0 + k * p[0], k * p[1], -1.0 + k * p[2]];
    let den = [2.0 * cg, -2.0 * ca];
    let e = [1.0 - c2 / b2 * p[0], -c2 / b2 * p[1], -c2 / b2 * p[2]];
    let quartic = poly_add(
        &poly_add(&poly_mul(&num, &num), &poly_scale(&poly_mul(&num, &den), -2.0 * cg)),
        &poly_mul(&e, &poly_mul(&den, &den)),
    );
    let mut poses = Vec::new();
    for v in real_roots(&quartic) {
        let d = poly_eval(&den, v);
        let pv = poly_eval(&p, v);
        if !(v > 0.0 && d.abs() > 1e-12 && pv > 0.0) {
            continue;
        }
        let u = poly_eval(&num, v) / d;
        let s1 = (b2 / pv).sqrt();
        let (s2, s3) = (u * s1, v * s1);
        if !(s2 > 0.0) {
            continue;
        }
        let pts = [f[0] * s1, f[1] * s2, f[2] * s3];
        if let Some(pose) = rigid_alignment(&w, &pts) {
            poses.push(pose);
        }
    }
    poses
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    (0..a.len().max(b.len()))
        .map(|i| a.get(i).unwrap_or(&0.0) + b.get(i).unwrap_or(&0.0))
        .collect()
}

fn poly_scale(a: &[f64], k: f64) -> Vec<f64> {
    a.iter().map(|x| x * k).collect()
}

fn poly_eval(a: &[f64], x: f64) -> f64 {
    a.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// Real roots from companion-matrix eigenvalues, polished with Newton steps.
fn real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c = coeffs.to_vec();
    while c.len() > 1 && c.last().is_some_and(|x| x.abs() <= 1e-14 * c.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = c[deg];
    let mut comp = DMatrix::<f64>::zeros(deg, deg);
    for i in 1..deg {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..deg {
        comp[(i, deg - 1)] = -c[i] / lead;
    }
    let deriv: Vec<f64> = c.iter().enumerate().skip(1).map(|(i, x)| i as f64 * x).collect();
    comp.complex_eigenvalues()
        .iter()
        .filter(|z| z.im.abs() <= 1e-6 * (1.0 + z.re.abs()))
        .map(|z| {
            let mut x = z.re;
            for _ in 0..5 {
                let d = poly_eval(&deriv, x);
                if d == 0.0 {
                    break;
                }
                x -= poly_eval(&c, x) / d;
            }
            if poly_eval(&c, x).abs() <= poly_eval(&c, z.re).abs() {
                x
            } else {
                z.re
            }
        })
        .filter(|x| x.is_finite())
        .collect()
}

/// Least-squares rigid motion taking `src` onto `dst` with `det(R) = +1`.
pub(crate) fn rigid_alignment(src: &[Vec3], dst: &[Vec3]) -> Option<Pose> {
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vec3>() / n;
    let cd = dst.iter().sum::<Vec3>() / n;
    let mut h = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (d - cd) * (s - cs).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u?;
    let v_t = svd.v_t?;
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u_fix = u;
        u_fix.column_mut(2).neg_mut();
        r = u_fix * v_t;
    }
    if !r.iter().all(|x| x.is_finite()) {
        return None;
    }
    let q = UnitQuaternion::from_rotation_matrix(&r);
    let t = cd - q.rotate(&cs);
    Some(Pose::new(t, q))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{project, PixelPoint, WireframeModel};
    use crate::metrics::attitude_error;

    fn synth(pose: &Pose, world: &[Vec3], cam: &CameraIntrinsics) -> Vec<Correspondence> {
        project(pose, cam, world)
            .unwrap()
            .into_iter()
            .zip(world)
            .enumerate()
            .map(|(i, (p, w))| Correspondence::new(p, *w, i))
            .collect()
    }

    fn check_recovery(truth: &Pose, est: &Pose, tol: f64) {
        let eq = attitude_error(&truth.attitude, &est.attitude).unwrap();
        let et = (truth.position - est.position).norm() / truth.position.norm();
        assert!(eq < tol, "attitude error {eq}");
        assert!(et < tol, "position error {et}");
    }

    #[test]
    fn recovers_reference_wireframe_pose() {
        let cam = CameraIntrinsics::default();
        let wf = WireframeModel::reference_satellite();
        let truth = Pose::new(
            Vec3::new(0.0, 0.0, 36.0),
            UnitQuaternion::new_normalize(0.2, -0.7, 0.4, 0.55).unwrap(),
        );
        let est = epnp(&synth(&truth, wf.keypoints(), &cam), &cam).unwrap();
        check_recovery(&truth, &est, 1e-6);
        assert!(est.position.z > 0.0);
    }

    #[test]
    fn p3p_contains_true_pose() {
        let cam = CameraIntrinsics::default();
        let pose = Pose::new(
            Vec3::new(0.4, -0.3, 45.0),
            UnitQuaternion::from_rotation_vector(&Vec3::new(0.7, -1.1, 0.4)),
        );
        let world = [Vec3::new(1.0, 0.2, -0.5), Vec3::new(-1.5, 0.8, 0.3), Vec3::new(0.2, -1.9, 1.1)];
        let px = project(&pose, &cam, &world).unwrap();
        let corr: Vec<_> = px
            .iter()
            .zip(&world)
            .enumerate()
            .map(|(i, (p, w))| Correspondence::new(*p, *w, i))
            .collect();
        let sols = p3p([&corr[0], &corr[1], &corr[2]], &cam);
        assert!(!sols.is_empty() && sols.len() <= 4);
        let best = sols
            .iter()
            .map(|s| s.attitude.dot(&pose.attitude).abs())
            .fold(0.0, f64::max);
        assert!(1.0 - best < 1e-12, "{best}");
    }

    #[test]
    fn real_roots_of_known_quartic() {
        // (x - 1)(x - 2)(x + 3)(x^2 + 1)
        let p = poly_mul(&poly_mul(&[-1.0, 1.0], &[-2.0, 1.0]), &poly_mul(&[3.0, 1.0], &[1.0, 0.0, 1.0]));
        let mut r = real_roots(&p);
        r.sort_by(f64::total_cmp);
        assert_eq!(r.len(), 3);
        for (got, want) in r.iter().zip([-3.0, 1.0, 2.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn minimal_four_point_case() {
        let cam = CameraIntrinsics::default();
        let world = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(2.0, 0.3, -0.4),
            Vec3::new(-0.5, 1.8, 0.6),
            Vec3::new(0.4, -0.3, 2.2),
        ];
        let truth = Pose::new(
            Vec3::new(0.8, -0.4, 30.0),
            UnitQuaternion::new_normalize(0.9, 0.2, -0.1, 0.3).unwrap(),
        );
        let corr = synth(&truth, &world, &cam);
        let est = epnp(&corr, &cam).unwrap();
        let (_, rms) = super::super::reprojection_residuals(&est, &corr, &cam).unwrap();
        assert!(rms < 1e-6, "rms {rms}");
    }

    #[test]
    fn planar_layout_uses_three_control_points() {
        let cam = CameraIntrinsics::default();
        let world: Vec<Vec3> = [(-3.0, -1.0), (3.0, -1.2), (2.5, 1.0), (-2.0, 1.5), (0.3, 0.2), (1.0, -0.5)]
            .iter()
            .map(|&(x, y)| Vec3::new(x, y, 0.0))
            .collect();
        let truth = Pose::new(
            Vec3::new(-1.0, 0.5, 45.0),
            UnitQuaternion::new_normalize(0.8, 0.3, 0.4, -0.1).unwrap(),
        );
        let est = epnp(&synth(&truth, &world, &cam), &cam).unwrap();
        check_recovery(&truth, &est, 1e-6);
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let cam = CameraIntrinsics::default();
        let pts = [Vec3::zeros(), Vec3::new(1.0, 1.0, 1.0), Vec3::new(2.0, 2.0, 2.0)];
        let corr: Vec<_> = pts
            .iter()
            .chain(pts.iter().take(2))
            .enumerate()
            .map(|(i, w)| Correspondence::new(PixelPoint::new(900.0 + i as f64, 600.0), *w, i))
            .collect();
        assert!(matches!(epnp(&corr, &cam), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn too_few_points() {
        let cam = CameraIntrinsics::default();
        let c = Correspondence::new(PixelPoint::new(1.0, 1.0), Vec3::zeros(), 0);
        assert!(matches!(epnp(&[c; 3], &cam), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn alignment_enforces_proper_rotation() {
        let src = [Vec3::x(), Vec3::y(), Vec3::z(), Vec3::new(1.0, 1.0, 1.0)];
        let q = UnitQuaternion::new_normalize(0.3, 0.3, -0.5, 0.7).unwrap();
        let t = Vec3::new(1.0, 2.0, 3.0);
        let dst: Vec<_> = src.iter().map(|p| q.rotate(p) + t).collect();
        let pose = rigid_alignment(&src, &dst).unwrap();
        assert!(pose.attitude.dot(&q).abs() > 1.0 - 1e-14);
        assert!((pose.position - t).norm() < 1e-12);
        assert!((pose.attitude.to_rotation_matrix().determinant() - 1.0).abs() < 1e-12);
    }
}
