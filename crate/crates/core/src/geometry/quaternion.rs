//! Scalar-first Hamilton unit quaternions.

use std::ops::{Mul, Neg};

use nalgebra::Matrix3;

use super::Vec3;
use crate::{Error, Result};

/// Tolerance on `|norm - 1|` accepted without renormalizing.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// A rotation stored as `(w, x, y, z)` with unit norm.
///
/// `q` and `-q` describe the same rotation; nothing here canonicalizes the
/// sign, so equality is on the stored components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Default for UnitQuaternion {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl UnitQuaternion {
    pub const IDENTITY: Self = Self {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// Normalizes `(w, x, y, z)`. Fails on zero or non-finite input.
    pub fn new_normalize(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || n < f64::EPSILON {
            return Err(Error::invalid(format!(
                "cannot normalize quaternion ({w}, {x}, {y}, {z})"
            )));
        }
        Ok(Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        })
    }

    /// Accepts components that are already unit to within `tol`, keeping them
    /// bit-for-bit.
    pub fn try_from_unit(w: f64, x: f64, y: f64, z: f64, tol: f64) -> Result<Self> {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        if !n.is_finite() || (n - 1.0).abs() > tol {
            return Err(Error::invalid(format!(
                "quaternion norm {n} is not within {tol:e} of 1"
            )));
        }
        Ok(Self { w, x, y, z })
    }

    /// Rotation by `angle` radians about the unit vector `axis`.
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Result<Self> {
        let n = axis.norm();
        if !n.is_finite() || (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::invalid(format!("axis norm {n} is not unit")));
        }
        if !angle.is_finite() {
            return Err(Error::invalid("rotation angle is not finite"));
        }
        let (s, c) = (0.5 * angle).sin_cos();
        Ok(Self::renormalized(c, axis.x * s, axis.y * s, axis.z * s))
    }

    /// Exponential map of a rotation vector (axis times angle).
    pub fn from_rotation_vector(v: &Vec3) -> Self {
        let theta = v.norm();
        let half = 0.5 * theta;
        // sin(θ/2)/θ, series near zero
        let k = if theta < 1e-6 {
            0.5 - theta * theta / 48.0
        } else {
            half.sin() / theta
        };
        Self::renormalized(half.cos(), v.x * k, v.y * k, v.z * k)
    }

    /// Logarithm map: the rotation vector with angle in `[0, π]`.
    pub fn to_rotation_vector(&self) -> Vec3 {
        let q = if self.w < 0.0 { -*self } else { *self };
        let vn = (q.x * q.x + q.y * q.y + q.z * q.z).sqrt();
        if vn < 1e-300 {
            return Vec3::zeros();
        }
        let angle = 2.0 * vn.atan2(q.w);
        Vec3::new(q.x, q.y, q.z) * (angle / vn)
    }

    /// Proper rotation matrix to quaternion (Shepperd's method).
    pub fn from_rotation_matrix(m: &Matrix3<f64>) -> Self {
        let trace = m[(0, 0)] + m[(1, 1)] + m[(2, 2)];
        let (w, x, y, z);
        if trace > m[(0, 0)] && trace > m[(1, 1)] && trace > m[(2, 2)] {
            let s = 2.0 * (1.0 + trace).sqrt();
            w = 0.25 * s;
            x = (m[(2, 1)] - m[(1, 2)]) / s;
            y = (m[(0, 2)] - m[(2, 0)]) / s;
            z = (m[(1, 0)] - m[(0, 1)]) / s;
        } else if m[(0, 0)] > m[(1, 1)] && m[(0, 0)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(0, 0)] - m[(1, 1)] - m[(2, 2)]).sqrt();
            w = (m[(2, 1)] - m[(1, 2)]) / s;
            x = 0.25 * s;
            y = (m[(0, 1)] + m[(1, 0)]) / s;
            z = (m[(0, 2)] + m[(2, 0)]) / s;
        } else if m[(1, 1)] > m[(2, 2)] {
            let s = 2.0 * (1.0 + m[(1, 1)] - m[(0, 0)] - m[(2, 2)]).sqrt();
            w = (m[(0, 2)] - m[(2, 0)]) / s;
            x = (m[(0, 1)] + m[(1, 0)]) / s;
            y = 0.25 * s;
            z = (m[(1, 2)] + m[(2, 1)]) / s;
        } else {
            let s = 2.0 * (1.0 + m[(2, 2)] - m[(0, 0)] - m[(1, 1)]).sqrt();
            w = (m[(1, 0)] - m[(0, 1)]) / s;
            x = (m[(0, 2)] + m[(2, 0)]) / s;
            y = (m[(1, 2)] + m[(2, 1)]) / s;
            z = 0.25 * s;
        }
        Self::renormalized(w, x, y, z)
    }

    fn renormalized(w: f64, x: f64, y: f64, z: f64) -> Self {
        let n = (w * w + x * x + y * y + z * z).sqrt();
        Self {
            w: w / n,
            x: x / n,
            y: y / n,
            z: z / n,
        }
    }

    pub fn w(&self) -> f64 {
        self.w
    }
    pub fn x(&self) -> f64 {
        self.x
    }
    pub fn y(&self) -> f64 {
        self.y
    }
    pub fn z(&self) -> f64 {
        self.z
    }

    /// Components as `[w, x, y, z]`.
    pub fn to_array(&self) -> [f64; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Four-vector inner product.
    pub fn dot(&self, other: &Self) -> f64 {
        self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Inverse rotation. Exact: only the vector part changes sign.
    pub fn inverse(&self) -> Self {
        Self {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    /// Rotates `v`; the result has the same length as `v`.
    pub fn rotate(&self, v: &Vec3) -> Vec3 {
        let u = Vec3::new(self.x, self.y, self.z);
        let uv = u.cross(v);
        let uuv = u.cross(&uv);
        v + (uv * self.w + uuv) * 2.0
    }

    pub fn to_rotation_matrix(&self) -> Matrix3<f64> {
        let (w, x, y, z) = (self.w, self.x, self.y, self.z);
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - z * w),
            2.0 * (x * z + y * w),
            2.0 * (x * y + z * w),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - x * w),
            2.0 * (x * z - y * w),
            2.0 * (y * z + x * w),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    /// Rotation angle in `[0, π]`.
    pub fn angle(&self) -> f64 {
        let vn = (self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        2.0 * vn.atan2(self.w.abs())
    }
}

impl Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product; `(a * b).rotate(v) == a.rotate(&b.rotate(v))`.
    fn mul(self, b: Self) -> Self {
        let a = self;
        Self::renormalized(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

impl Neg for UnitQuaternion {
    type Output = UnitQuaternion;

    fn neg(self) -> Self {
        Self {
            w: -self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }
}
