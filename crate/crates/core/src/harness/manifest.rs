//! Dataset manifest: camera, wireframe reference and per-image records.
//!
//! ```json
//! {
//!   "camera": {"fx": 3000, "fy": 3000, "cx": 960, "cy": 600, "width": 1920, "height": 1200},
//!   "wireframe": "wireframe.json",
//!   "attitude_convention": "body_to_camera",
//!   "records": [
//!     {"id": "img000000", "q": [w, x, y, z], "t": [x, y, z],
//!      "bbox": [xmin, ymin, xmax, ymax], "landmarks": [[u, v], ...],
//!      "pred_landmarks": [[x, y] | null, ...], "pred_bbox": [...],
//!      "sun_dir": [x, y, z], "panel_angle": phi}
//!   ]
//! }
//! ```
//!
//! Only `id`, `q` and `t` are required per record. `pred_landmarks` are
//! ROI-normalized, `null` marking a missing landmark. With
//! `"attitude_convention": "camera_to_body"` the stored quaternions are the
//! inverse of the in-memory body-to-camera attitude.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::geometry::{CameraIntrinsics, PixelPoint, Pose, UnitQuaternion, Vec3, UNIT_TOLERANCE};
use crate::roi::BBox;
use crate::{Error, Result};

/// Norm deviation above which a loaded quaternion triggers a warning.
const QUATERNION_WARN_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttitudeConvention {
    /// `q` maps body-frame vectors into the camera frame.
    #[default]
    BodyToCamera,
    /// `q` maps camera-frame vectors into the body frame.
    CameraToBody,
}

impl AttitudeConvention {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "body_to_camera" => Some(Self::BodyToCamera),
            "camera_to_body" => Some(Self::CameraToBody),
            _ => None,
        }
    }

    /// Stored quaternion to/from the in-memory body-to-camera attitude.
    fn apply(self, q: UnitQuaternion) -> UnitQuaternion {
        match self {
            Self::BodyToCamera => q,
            Self::CameraToBody => q.inverse(),
        }
    }
}

/// One dataset image.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub pose_gt: Pose,
    pub bbox_gt: Option<BBox>,
    /// Projected keypoints, pixels, wireframe order.
    pub landmarks_gt: Option<Vec<PixelPoint>>,
    /// Landmark-stage output in ROI-normalized coordinates.
    pub landmarks_pred: Option<Vec<Option<[f64; 2]>>>,
    pub bbox_pred: Option<BBox>,
    /// Sun direction in the camera frame, when lighting was sampled.
    pub sun_dir: Option<Vec3>,
    pub panel_angle: Option<f64>,
}

impl SampleRecord {
    pub fn new(id: impl Into<String>, pose_gt: Pose) -> Self {
        Self {
            id: id.into(),
            pose_gt,
            bbox_gt: None,
            landmarks_gt: None,
            landmarks_pred: None,
            bbox_pred: None,
            sun_dir: None,
            panel_angle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub camera: CameraIntrinsics,
    /// Path of the wireframe file, relative to the manifest.
    pub wireframe: Option<String>,
    pub attitude_convention: AttitudeConvention,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(camera: CameraIntrinsics, records: Vec<SampleRecord>) -> Self {
        Self {
            camera,
            wireframe: None,
            attitude_convention: AttitudeConvention::default(),
            records,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let root: Value = serde_json::from_str(text)?;
        parse_manifest(&root)
    }

    pub fn to_json(&self) -> Result<String> {
        let out = ManifestOut {
            camera: &self.camera,
            wireframe: self.wireframe.as_deref(),
            attitude_convention: self.attitude_convention,
            records: self
                .records
                .iter()
                .map(|r| RecordOut::new(r, self.attitude_convention))
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&out)?)
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Manifest::from_json(&text)
}

pub fn save_manifest(manifest: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, manifest.to_json()?).map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct ManifestOut<'a> {
    camera: &'a CameraIntrinsics,
    #[serde(skip_serializing_if = "Option::is_none")]
    wireframe: Option<&'a str>,
    attitude_convention: AttitudeConvention,
    records: Vec<RecordOut<'a>>,
}

#[derive(Serialize)]
struct RecordOut<'a> {
    id: &'a str,
    q: [f64; 4],
    t: [f64; 3],
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox: Option<BBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    landmarks: Option<&'a [PixelPoint]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pred_landmarks: Option<&'a [Option<[f64; 2]>]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pred_bbox: Option<BBox>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sun_dir: Option<[f64; 3]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    panel_angle: Option<f64>,
}

impl<'a> RecordOut<'a> {
    fn new(r: &'a SampleRecord, convention: AttitudeConvention) -> Self {
        let t = r.pose_gt.position;
        Self {
            id: &r.id,
            q: convention.apply(r.pose_gt.attitude).to_array(),
            t: [t.x, t.y, t.z],
            bbox: r.bbox_gt,
            landmarks: r.landmarks_gt.as_deref(),
            pred_landmarks: r.landmarks_pred.as_deref(),
            pred_bbox: r.bbox_pred,
            sun_dir: r.sun_dir.map(|s| [s.x, s.y, s.z]),
            panel_angle: r.panel_angle,
        }
    }
}

const RECORD_FIELDS: [&str; 9] = [
    "id",
    "q",
    "t",
    "bbox",
    "landmarks",
    "pred_landmarks",
    "pred_bbox",
    "sun_dir",
    "panel_angle",
];

fn parse_manifest(root: &Value) -> Result<Manifest> {
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema(None, "<root>", "expected an object"))?;
    let camera_value = obj
        .get("camera")
        .ok_or_else(|| Error::schema(None, "camera", "missing"))?;
    let camera: CameraIntrinsics = serde_json::from_value(camera_value.clone())
        .map_err(|e| Error::schema(None, "camera", e.to_string()))?;
    let wireframe = match obj.get("wireframe") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(Error::schema(None, "wireframe", "expected a string path")),
    };
    let attitude_convention = match obj.get("attitude_convention") {
        None | Some(Value::Null) => AttitudeConvention::default(),
        Some(Value::String(s)) => AttitudeConvention::parse(s).ok_or_else(|| {
            Error::schema(None, "attitude_convention", format!("unknown convention `{s}`"))
        })?,
        Some(_) => return Err(Error::schema(None, "attitude_convention", "expected a string")),
    };
    let records = obj
        .get("records")
        .and_then(Value::as_array)
        .ok_or_else(|| Error::schema(None, "records", "missing or not an array"))?;

    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (i, rv) in records.iter().enumerate() {
        let rec = parse_record(i, rv, attitude_convention)?;
        if !seen.insert(rec.id.clone()) {
            return Err(Error::schema(Some(i), "id", format!("duplicate id `{}`", rec.id)));
        }
        out.push(rec);
    }
    Ok(Manifest {
        camera,
        wireframe,
        attitude_convention,
        records: out,
    })
}

fn parse_record(i: usize, v: &Value, convention: AttitudeConvention) -> Result<SampleRecord> {
    let obj = v
        .as_object()
        .ok_or_else(|| Error::schema(Some(i), "<record>", "expected an object"))?;
    if let Some(k) = obj.keys().find(|k| !RECORD_FIELDS.contains(&k.as_str())) {
        return Err(Error::schema(Some(i), k.clone(), "unknown field"));
    }
    let id = match obj.get("id") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(Error::schema(Some(i), "id", "expected a string")),
        None => return Err(Error::schema(Some(i), "id", "missing")),
    };
    let q = required::<4>(i, obj, "q")?;
    let t = required::<3>(i, obj, "t")?;
    let attitude = convention.apply(unit_quaternion(i, q)?);

    let bbox_gt = optional(obj, "bbox", |v| bbox(i, "bbox", v))?;
    let bbox_pred = optional(obj, "pred_bbox", |v| bbox(i, "pred_bbox", v))?;
    let landmarks_gt = optional(obj, "landmarks", |v| {
        list(i, "landmarks", v, |e| numbers::<2>(i, "landmarks", e).map(PixelPoint::from))
    })?;
    let landmarks_pred = optional(obj, "pred_landmarks", |v| {
        list(i, "pred_landmarks", v, |e| match e {
            Value::Null => Ok(None),
            _ => numbers::<2>(i, "pred_landmarks", e).map(Some),
        })
    })?;
    let sun_dir = optional(obj, "sun_dir", |v| {
        numbers::<3>(i, "sun_dir", v).map(|a| Vec3::new(a[0], a[1], a[2]))
    })?;
    let panel_angle = optional(obj, "panel_angle", |v| {
        v.as_f64()
            .ok_or_else(|| Error::schema(Some(i), "panel_angle", "expected a number"))
    })?;

    Ok(SampleRecord {
        id,
        pose_gt: Pose::new(Vec3::new(t[0], t[1], t[2]), attitude),
        bbox_gt,
        landmarks_gt,
        landmarks_pred,
        bbox_pred,
        sun_dir,
        panel_angle,
    })
}

fn unit_quaternion(i: usize, q: [f64; 4]) -> Result<UnitQuaternion> {
    let n = q.iter().map(|c| c * c).sum::<f64>().sqrt();
    let dev = (n - 1.0).abs();
    if dev <= UNIT_TOLERANCE {
        return UnitQuaternion::try_from_unit(q[0], q[1], q[2], q[3], UNIT_TOLERANCE)
            .map_err(|e| Error::schema(Some(i), "q", e.to_string()));
    }
    let unit = UnitQuaternion::new_normalize(q[0], q[1], q[2], q[3])
        .map_err(|e| Error::schema(Some(i), "q", e.to_string()))?;
    if dev > QUATERNION_WARN_TOL {
        log::warn!("record {i}: quaternion norm {n} normalized on load");
    }
    Ok(unit)
}

fn required<const N: usize>(i: usize, obj: &Map<String, Value>, field: &str) -> Result<[f64; N]> {
    let v = obj
        .get(field)
        .ok_or_else(|| Error::schema(Some(i), field, "missing"))?;
    numbers::<N>(i, field, v)
}

fn optional<T>(obj: &Map<String, Value>, field: &str, f: impl FnOnce(&Value) -> Result<T>) -> Result<Option<T>> {
    match obj.get(field) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => f(v).map(Some),
    }
}

fn numbers<const N: usize>(i: usize, field: &str, v: &Value) -> Result<[f64; N]> {
    let arr = v
        .as_array()
        .filter(|a| a.len() == N)
        .ok_or_else(|| Error::schema(Some(i), field, format!("expected an array of {N} numbers")))?;
    let mut out = [0.0; N];
    for (o, e) in out.iter_mut().zip(arr) {
        *o = e
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| Error::schema(Some(i), field, "expected finite numbers"))?;
    }
    Ok(out)
}

fn list<T>(i: usize, field: &str, v: &Value, f: impl Fn(&Value) -> Result<T>) -> Result<Vec<T>> {
    v.as_array()
        .ok_or_else(|| Error::schema(Some(i), field, "expected an array"))?
        .iter()
        .map(f)
        .collect()
}

fn bbox(i: usize, field: &str, v: &Value) -> Result<BBox> {
    let a = numbers::<4>(i, field, v)?;
    BBox::new(a[0], a[1], a[2], a[3]).map_err(|e| Error::schema(Some(i), field, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "camera": {"fx": 3000, "fy": 3000, "cx": 960, "cy": 600, "width": 1920, "height": 1200},
        "records": [{"id": "a", "q": [1, 0, 0, 0], "t": [0, 0, 40]}]
    }"#;

    #[test]
    fn parses_minimal_manifest() {
        let m = Manifest::from_json(MINIMAL).unwrap();
        assert_eq!(m.records.len(), 1);
        assert_eq!(m.records[0].pose_gt.position, Vec3::new(0.0, 0.0, 40.0));
        assert_eq!(m.attitude_convention, AttitudeConvention::BodyToCamera);
    }

    #[test]
    fn missing_quaternion_names_field() {
        let text = MINIMAL.replace(r#""q": [1, 0, 0, 0], "#, "");
        match Manifest::from_json(&text) {
            Err(Error::Schema { record, field, .. }) => {
                assert_eq!(record, Some(0));
                assert_eq!(field, "q");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_unit_quaternion_normalized() {
        let text = MINIMAL.replace("[1, 0, 0, 0]", "[2, 0, 0, 0]");
        let m = Manifest::from_json(&text).unwrap();
        assert_eq!(m.records[0].pose_gt.attitude, UnitQuaternion::IDENTITY);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let text = MINIMAL.replace(
            r#"[{"id": "a", "q": [1, 0, 0, 0], "t": [0, 0, 40]}]"#,
            r#"[{"id": "a", "q": [1, 0, 0, 0], "t": [0, 0, 40]}, {"id": "a", "q": [1, 0, 0, 0], "t": [0, 0, 41]}]"#,
        );
        assert!(matches!(
            Manifest::from_json(&text),
            Err(Error::Schema { record: Some(1), .. })
        ));
    }

    #[test]
    fn convention_flag_inverts_attitude() {
        let q = UnitQuaternion::new_normalize(0.5, 0.5, -0.5, 0.5).unwrap();
        let a = q.to_array();
        let text = MINIMAL
            .replace("[1, 0, 0, 0]", &format!("[{}, {}, {}, {}]", a[0], a[1], a[2], a[3]))
            .replace(r#""records""#, r#""attitude_convention": "camera_to_body", "records""#);
        let m = Manifest::from_json(&text).unwrap();
        assert_eq!(m.records[0].pose_gt.attitude, q.inverse());
        let back = Manifest::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn unknown_field_rejected() {
        let text = MINIMAL.replace(r#""id": "a","#, r#""id": "a", "qq": 1,"#);
        assert!(matches!(Manifest::from_json(&text), Err(Error::Schema { .. })));
    }
}
