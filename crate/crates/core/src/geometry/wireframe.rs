use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Vec3;
use crate::{Error, Result};

/// Smallest accepted ratio between the second and first principal variance.
const COLLINEAR_RATIO: f64 = 1e-8;

/// Ordered 3-D keypoints of the target in its body frame (meters).
///
/// Keypoint order is the landmark order everywhere else: label `i`, predicted
/// landmark `i` and correspondence id `i` all refer to `keypoints[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct WireframeModel {
    name: String,
    keypoints: Vec<Vec3>,
}

#[derive(Serialize, Deserialize)]
struct WireframeFile {
    name: String,
    keypoints: Vec<[f64; 3]>,
}

impl WireframeModel {
    /// Needs at least four finite keypoints spanning more than a line.
    pub fn new(name: impl Into<String>, keypoints: Vec<Vec3>) -> Result<Self> {
        if keypoints.len() < 4 {
            return Err(Error::invalid(format!(
                "wireframe needs at least 4 keypoints, got {}",
                keypoints.len()
            )));
        }
        if let Some(i) = keypoints.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid(format!("keypoint {i} is not finite")));
        }
        let spread = principal_variances(&keypoints);
        if spread[0] <= 0.0 || spread[1] < COLLINEAR_RATIO * spread[0] {
            return Err(Error::DegenerateGeometry(
                "wireframe keypoints are collinear".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            keypoints,
        })
    }

    /// Eleven non-coplanar keypoints of a generic box-bus satellite with two
    /// solar-array tips and an antenna tip: eight bus corners first, then
    /// `+x` array tip, `-x` array tip, antenna tip.
    pub fn reference_satellite() -> Self {
        let mut kp = Vec::with_capacity(11);
        for &z in &[-1.6, 1.4] {
            for &(x, y) in &[(-1.2, -0.9), (1.2, -0.9), (1.2, 0.9), (-1.2, 0.9)] {
                kp.push(Vec3::new(x, y, z));
            }
        }
        kp.push(Vec3::new(5.5, 0.3, 0.2));
        kp.push(Vec3::new(-5.5, -0.3, 0.2));
        kp.push(Vec3::new(0.4, 0.2, -2.6));
        Self::new("reference-satellite", kp).expect("reference wireframe is valid")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn keypoints(&self) -> &[Vec3] {
        &self.keypoints
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: WireframeFile = serde_json::from_str(text)?;
        let kp = file.keypoints.iter().map(|p| Vec3::new(p[0], p[1], p[2])).collect();
        Self::new(file.name, kp)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = WireframeFile {
            name: self.name.clone(),
            keypoints: self.keypoints.iter().map(|p| [p.x, p.y, p.z]).collect(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

/// Eigenvalues of the (unnormalized) scatter matrix, largest first.
pub(crate) fn principal_variances(points: &[Vec3]) -> [f64; 3] {
    let (_, _, values) = principal_axes(points);
    values
}

/// Centroid, principal directions (columns, largest variance first) and the
/// matching scatter eigenvalues.
pub(crate) fn principal_axes(points: &[Vec3]) -> (Vec3, Matrix3<f64>, [f64; 3]) {
    let n = points.len() as f64;
    let centroid = points.iter().fold(Vec3::zeros(), |acc, p| acc + p) / n;
    let mut scatter = Matrix3::zeros();
    for p in points {
        let d = p - centroid;
        scatter += d * d.transpose();
    }
    let eig = SymmetricEigen::new(scatter);
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut axes = Matrix3::zeros();
    let mut values = [0.0; 3];
    for (k, &i) in order.iter().enumerate() {
        axes.set_column(k, &eig.eigenvectors.column(i));
        values[k] = eig.eigenvalues[i].max(0.0);
    }
    (centroid, axes, values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_model_is_eleven_non_coplanar_points() {
        let w = WireframeModel::reference_satellite();
        assert_eq!(w.len(), 11);
        let v = principal_variances(w.keypoints());
        assert!(v[2] > 1e-2 * v[0]);
    }

    #[test]
    fn rejects_collinear_and_short() {
        let line: Vec<Vec3> = (0..5).map(|i| Vec3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(
            WireframeModel::new("line", line),
            Err(Error::DegenerateGeometry(_))
        ));
        let three = vec![Vec3::x(), Vec3::y(), Vec3::z()];
        assert!(WireframeModel::new("three", three).is_err());
    }

    #[test]
    fn json_round_trip() {
        let w = WireframeModel::reference_satellite();
        let back = WireframeModel::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(w, back);
        let parsed = WireframeModel::from_json(
            r#"{"name": "t", "keypoints": [[0,0,0],[1,0,0],[0,1,0],[0,0,1]]}"#,
        )
        .unwrap();
        assert_eq!(parsed.keypoints()[3], Vec3::z());
    }
}
