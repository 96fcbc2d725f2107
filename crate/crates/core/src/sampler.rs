//! Synthetic pose and articulation distribution.
//!
//! Depth along the boresight comes from a normal law truncated by rejection,
//! lateral offsets from independent normals scaled to the visible extent at
//! that depth, and attitude from the Haar measure on SO(3). Poses whose
//! wireframe does not project fully inside the image are redrawn.
//!
//! Every sampled quantity reads its own ChaCha8 stream (same key, different
//! stream id), so adding a field never shifts the others' sequences.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::geometry::{project, CameraIntrinsics, Pose, UnitQuaternion, Vec3, WireframeModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoseSamplerConfig {
    pub dist_mean: f64,
    pub dist_sigma: f64,
    pub dist_min: f64,
    pub dist_max: f64,
    /// Lateral σ as a fraction of the half field of view at the sampled depth.
    pub offset_sigma_frac: f64,
    /// Keypoints must land at least this many pixels inside the image border.
    pub in_frame_margin: f64,
    pub max_rejects: usize,
}

impl Default for PoseSamplerConfig {
    fn default() -> Self {
        Self {
            dist_mean: 36.0,
            dist_sigma: 10.0,
            dist_min: 36.0,
            dist_max: 70.0,
            offset_sigma_frac: 0.25,
            in_frame_margin: 10.0,
            max_rejects: 10_000,
        }
    }
}

impl PoseSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dist_min <= self.dist_mean && self.dist_max > self.dist_min && self.dist_min > 0.0) {
            return Err(Error::invalid("need 0 < dist_min <= dist_mean and dist_max > dist_min"));
        }
        if !(self.dist_sigma >= 0.0 && self.offset_sigma_frac >= 0.0 && self.in_frame_margin >= 0.0) {
            return Err(Error::invalid("sigmas and margin must be non-negative"));
        }
        Ok(())
    }
}

/// Sun and Earth directions in the camera frame plus illumination limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneGeometry {
    pub sun_dir: Vec3,
    pub earth_dir: Vec3,
    pub min_sun_earth_angle: f64,
    pub min_sun_camera_angle: f64,
}

impl Default for SceneGeometry {
    fn default() -> Self {
        Self {
            sun_dir: Vec3::new(0.0, -1.0, -1.0).normalize(),
            earth_dir: Vec3::y(),
            min_sun_earth_angle: 10f64.to_radians(),
            min_sun_camera_angle: 10f64.to_radians(),
        }
    }
}

/// Solar-array hinge in the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PanelConfig {
    /// Longitudinal axis the array turns about.
    pub hinge_axis: Vec3,
    /// Array normal at zero rotation.
    pub reference_normal: Vec3,
}

impl Default for PanelConfig {
    fn default() -> Self {
        Self {
            hinge_axis: Vec3::x(),
            reference_normal: Vec3::z(),
        }
    }
}

impl PanelConfig {
    pub fn validate(&self) -> Result<()> {
        let a = &self.hinge_axis;
        let n = &self.reference_normal;
        if (a.norm() - 1.0).abs() > 1e-9 || (n.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("panel axes must be unit vectors"));
        }
        if a.dot(n).abs() > 1e-9 {
            return Err(Error::invalid("hinge axis must be perpendicular to the reference normal"));
        }
        Ok(())
    }
}

/// Independent random streams for each sampled quantity.
#[derive(Debug, Clone)]
pub struct SamplerStreams {
    pub distance: ChaCha8Rng,
    pub offset: ChaCha8Rng,
    pub attitude: ChaCha8Rng,
    pub lighting: ChaCha8Rng,
}

impl SamplerStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(id);
            rng
        };
        Self {
            distance: stream(1),
            offset: stream(2),
            attitude: stream(3),
            lighting: stream(4),
        }
    }
}

/// Boresight depth from `N(dist_mean, dist_sigma)` restricted to
/// `[dist_min, dist_max]` by rejection.
pub fn sample_distance<R: Rng + ?Sized>(rng: &mut R, cfg: &PoseSamplerConfig) -> Result<f64> {
    for _ in 0..=cfg.max_rejects {
        let z: f64 = rng.sample(StandardNormal);
        let d = cfg.dist_mean + cfg.dist_sigma * z;
        if d >= cfg.dist_min && d <= cfg.dist_max {
            return Ok(d);
        }
    }
    Err(Error::SamplingFailure(cfg.max_rejects))
}

/// Haar-uniform attitude from three uniforms (subgroup construction).
pub fn sample_attitude<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    let u1: f64 = rng.random();
    let u2: f64 = rng.random();
    let u3: f64 = rng.random();
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let (s2, c2) = (TAU * u2).sin_cos();
    let (s3, c3) = (TAU * u3).sin_cos();
    UnitQuaternion::new_normalize(b * c3, a * s2, a * c2, b * s3).expect("unit by construction")
}

/// Draws poses until the whole wireframe projects inside the image inset by
/// `in_frame_margin`.
pub fn sample_pose(
    streams: &mut SamplerStreams,
    cfg: &PoseSamplerConfig,
    cam: &CameraIntrinsics,
    wireframe: &WireframeModel,
) -> Result<Pose> {
    cfg.validate()?;
    let half_w = 0.5 * cam.width() as f64 / cam.fx();
    let half_h = 0.5 * cam.height() as f64 / cam.fy();
    for _ in 0..=cfg.max_rejects {
        let z = sample_distance(&mut streams.distance, cfg)?;
        let nx: f64 = streams.offset.sample(StandardNormal);
        let ny: f64 = streams.offset.sample(StandardNormal);
        let tx = cfg.offset_sigma_frac * half_w * z * nx;
        let ty = cfg.offset_sigma_frac * half_h * z * ny;
        let pose = Pose::new(Vec3::new(tx, ty, z), sample_attitude(&mut streams.attitude));
        if let Ok(px) = project(&pose, cam, wireframe.keypoints()) {
            if px.iter().all(|p| cam.contains(p, cfg.in_frame_margin)) {
                return Ok(pose);
            }
        }
    }
    Err(Error::SamplingFailure(cfg.max_rejects))
}

/// Uniform direction on the unit sphere.
pub fn sample_direction<R: Rng + ?Sized>(rng: &mut R) -> Vec3 {
    let z: f64 = 2.0 * rng.random::<f64>() - 1.0;
    let phi = TAU * rng.random::<f64>();
    let r = (1.0 - z * z).max(0.0).sqrt();
    Vec3::new(r * phi.cos(), r * phi.sin(), z)
}

/// Rotation of the array about its hinge that best faces `sun_dir_body`.
///
/// Rotating `n` by `φ` about `a` gives `n cos φ + (a × n) sin φ`, whose dot
/// product with `s` peaks at `φ = atan2(s·(a×n), s·n)`.
pub fn panel_track_angle(sun_dir_body: &Vec3, panel: &PanelConfig) -> Result<f64> {
    panel.validate()?;
    let a = panel.hinge_axis;
    let n = panel.reference_normal;
    let s = sun_dir_body;
    let in_plane = s - a * s.dot(&a);
    if in_plane.norm() <= 1e-6_f64.sin() * s.norm() {
        return Err(Error::UndefinedTracking);
    }
    let phi = s.dot(&a.cross(&n)).atan2(s.dot(&n));
    Ok(if phi <= -PI { PI } else { phi })
}

/// Array normal after turning by `angle` about the hinge.
pub fn panel_normal(panel: &PanelConfig, angle: f64) -> Vec3 {
    let a = panel.hinge_axis;
    let n = panel.reference_normal;
    n * angle.cos() + a.cross(&n) * angle.sin()
}

fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Whether the Sun–target–Earth and Sun–target–camera angles both clear their
/// minimums. The target-to-camera direction is `-position`.
pub fn lighting_feasible(pose: &Pose, scene: &SceneGeometry) -> bool {
    let to_camera = -pose.position;
    angle_between(&scene.sun_dir, &scene.earth_dir) >= scene.min_sun_earth_angle
        && angle_between(&scene.sun_dir, &to_camera) >= scene.min_sun_camera_angle
}

/// A sampled pose together with the lighting it was accepted under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LitSample {
    pub pose: Pose,
    /// Sun direction in the camera frame.
    pub sun_dir: Vec3,
    pub panel_angle: f64,
}

/// Samples a pose and a uniformly random Sun direction, keeping only
/// feasible illumination, then sets the array angle to track the Sun.
pub fn sample_lit_pose(
    streams: &mut SamplerStreams,
    cfg: &PoseSamplerConfig,
    cam: &CameraIntrinsics,
    wireframe: &WireframeModel,
    scene: &SceneGeometry,
    panel: &PanelConfig,
) -> Result<LitSample> {
    for _ in 0..=cfg.max_rejects {
        let pose = sample_pose(streams, cfg, cam, wireframe)?;
        let sun_dir = sample_direction(&mut streams.lighting);
        let lit = SceneGeometry { sun_dir, ..*scene };
        if !lighting_feasible(&pose, &lit) {
            continue;
        }
        let sun_body = pose.attitude.inverse().rotate(&sun_dir);
        let Ok(panel_angle) = panel_track_angle(&sun_body, panel) else {
            continue;
        };
        return Ok(LitSample {
            pose,
            sun_dir,
            panel_angle,
        });
    }
    Err(Error::SamplingFailure(cfg.max_rejects))
}
