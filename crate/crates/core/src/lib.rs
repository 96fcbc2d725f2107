//! Non-neural core of a three-stage monocular spacecraft pose pipeline.
//!
//! The crate covers everything around the two networks of a
//! detect → regress-landmarks → solve-pose pipeline:
//!
//! - [`geometry`]: quaternions, poses, pinhole projection, label derivation.
//! - [`roi`]: squaring/enlarging detector boxes, IoU and containment.
//! - [`pnp`]: EPnP, RANSAC, Levenberg–Marquardt refinement, triangulation.
//! - [`sampler`]: the synthetic pose/articulation distribution.
//! - [`metrics`]: per-image pose scores and their aggregation.
//! - [`harness`]: manifests, landmark providers, the end-to-end runner and reports.
//!
//! Attitude convention: scalar-first Hamilton quaternions mapping body-frame
//! vectors into the camera frame, `p_cam = R(q) p_body + t`.

// `!(x > 0.0)` is used on purpose so NaN inputs fail validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod pnp;
pub mod roi;
pub mod sampler;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, PixelPoint, Pose, UnitQuaternion, Vec3, WireframeModel};
pub use roi::{BBox, RoiConfig};
