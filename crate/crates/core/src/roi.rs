//! Detection-stage box geometry.
//!
//! The detector's box is squared, enlarged, grown to the landmark network's
//! input side if needed and shifted back inside the image ([`make_roi`]).
//! [`roi_transform`] maps points between full-image pixels and the resized
//! crop; [`iou`] and [`contains`] score detections.

use serde::{Deserialize, Serialize};

use crate::geometry::PixelPoint;
use crate::{Error, Result};

/// Axis-aligned box in continuous pixel coordinates.
///
/// Serializes as `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub xmin: f64,
    pub ymin: f64,
    pub xmax: f64,
    pub ymax: f64,
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = Error;

    fn try_from(a: [f64; 4]) -> Result<Self> {
        BBox::new(a[0], a[1], a[2], a[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

impl BBox {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self> {
        if ![xmin, ymin, xmax, ymax].iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("box corners must be finite"));
        }
        if xmin > xmax || ymin > ymax {
            return Err(Error::invalid(format!(
                "box corners out of order: ({xmin}, {ymin})-({xmax}, {ymax})"
            )));
        }
        Ok(Self::from_corners_unchecked(xmin, ymin, xmax, ymax))
    }

    pub(crate) const fn from_corners_unchecked(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Self {
        Self {
            xmin,
            ymin,
            xmax,
            ymax,
        }
    }

    /// Square of side `side` centered on `(cx, cy)`.
    pub fn square(cx: f64, cy: f64, side: f64) -> Result<Self> {
        let h = 0.5 * side;
        Self::new(cx - h, cy - h, cx + h, cy + h)
    }

    pub fn width(&self) -> f64 {
        self.xmax - self.xmin
    }

    pub fn height(&self) -> f64 {
        self.ymax - self.ymin
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.xmin + self.xmax), 0.5 * (self.ymin + self.ymax))
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.xmin, self.ymin, self.xmax, self.ymax]
    }

    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let xmin = self.xmin.max(other.xmin);
        let ymin = self.ymin.max(other.ymin);
        let xmax = self.xmax.min(other.xmax);
        let ymax = self.ymax.min(other.ymax);
        (xmin <= xmax && ymin <= ymax).then(|| BBox::from_corners_unchecked(xmin, ymin, xmax, ymax))
    }
}

/// ROI construction parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RoiConfig {
    /// Multiplier applied to the longer side of the detected box.
    pub enlargement_factor: f64,
    /// Input side of the landmark stage, in pixels.
    pub min_side: f64,
    pub image_width: f64,
    pub image_height: f64,
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            enlargement_factor: 1.15,
            min_side: 224.0,
            image_width: 1920.0,
            image_height: 1200.0,
        }
    }
}

impl RoiConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.enlargement_factor >= 1.0 && self.enlargement_factor.is_finite()) {
            return Err(Error::invalid("enlargement_factor must be >= 1"));
        }
        if !(self.min_side >= 0.0 && self.min_side.is_finite()) {
            return Err(Error::invalid("min_side must be non-negative"));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        Ok(())
    }

    /// Side of the crop the landmark stage sees; falls back to the ROI side
    /// when no minimum input size is configured.
    pub fn target_side(&self, roi: &BBox) -> f64 {
        if self.min_side > 0.0 {
            self.min_side
        } else {
            roi.width()
        }
    }
}

/// Squares, enlarges and places a detected box inside the image.
///
/// Side is `max(factor · max(w, h), min_side)`, capped at the smaller image
/// dimension. The square keeps the detection's center unless that would push
/// it across a border, in which case it is translated (never shrunk) inward.
pub fn make_roi(detected: &BBox, cfg: &RoiConfig) -> Result<BBox> {
    cfg.validate()?;
    if !(detected.area() > 0.0) {
        return Err(Error::invalid("detected box has zero area"));
    }
    let (iw, ih) = (cfg.image_width, cfg.image_height);
    if detected.xmax < 0.0 || detected.ymax < 0.0 || detected.xmin > iw || detected.ymin > ih {
        return Err(Error::invalid("detected box does not intersect the image"));
    }
    let side = (cfg.enlargement_factor * detected.width().max(detected.height()))
        .max(cfg.min_side)
        .min(iw.min(ih));
    let (cx, cy) = detected.center();
    let xmin = shift_inside(cx - 0.5 * side, side, iw);
    let ymin = shift_inside(cy - 0.5 * side, side, ih);
    Ok(BBox::from_corners_unchecked(xmin, ymin, xmin + side, ymin + side))
}

fn shift_inside(start: f64, side: f64, extent: f64) -> f64 {
    if start < 0.0 {
        0.0
    } else if start + side > extent {
        extent - side
    } else {
        start
    }
}

/// Intersection over union; 0 for disjoint boxes or a zero-area union.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection(b).map_or(0.0, |i| i.area());
    let union = a.area() + b.area() - inter;
    if union > 0.0 {
        (inter / union).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Whether `inner` lies within `outer`, boundary included.
pub fn contains(outer: &BBox, inner: &BBox) -> bool {
    outer.xmin <= inner.xmin
        && outer.ymin <= inner.ymin
        && inner.xmax <= outer.xmax
        && inner.ymax <= outer.ymax
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RoiDirection {
    /// Full-image pixels to resized-crop pixels.
    ToRoi,
    /// Resized-crop pixels back to full-image pixels.
    ToImage,
}

/// Affine map between image pixels and a `target_side`-square resized crop.
pub fn roi_transform(p: &PixelPoint, roi: &BBox, target_side: f64, direction: RoiDirection) -> Result<PixelPoint> {
    let side = roi.width();
    if !(side > 0.0 && roi.height() > 0.0) {
        return Err(Error::invalid("roi has zero area"));
    }
    if (side - roi.height()).abs() > 1e-9 * side.max(1.0) {
        return Err(Error::invalid(format!(
            "roi is not square ({} x {})",
            side,
            roi.height()
        )));
    }
    if !(target_side > 0.0 && target_side.is_finite()) {
        return Err(Error::invalid("target side must be positive"));
    }
    let scale = target_side / side;
    Ok(match direction {
        RoiDirection::ToRoi => PixelPoint::new((p.u - roi.xmin) * scale, (p.v - roi.ymin) * scale),
        RoiDirection::ToImage => PixelPoint::new(p.u / scale + roi.xmin, p.v / scale + roi.ymin),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(a: f64, b: f64, c: f64, d: f64) -> BBox {
        BBox::new(a, b, c, d).unwrap()
    }

    fn large_image(factor: f64, min_side: f64) -> RoiConfig {
        RoiConfig {
            enlargement_factor: factor,
            min_side,
            image_width: 10_000.0,
            image_height: 10_000.0,
        }
    }

    #[test]
    fn make_roi_squares_and_enlarges() {
        let roi = make_roi(&bb(100.0, 100.0, 200.0, 150.0), &large_image(1.15, 0.0)).unwrap();
        assert_eq!(roi.to_array(), [92.5, 67.5, 207.5, 182.5]);
    }

    #[test]
    fn make_roi_min_side_then_translate() {
        let cfg = RoiConfig {
            min_side: 224.0,
            ..RoiConfig::default()
        };
        let roi = make_roi(&bb(0.0, 0.0, 10.0, 10.0), &cfg).unwrap();
        assert_eq!(roi.to_array(), [0.0, 0.0, 224.0, 224.0]);
    }

    #[test]
    fn make_roi_identity_case() {
        let b = bb(400.0, 400.0, 600.0, 600.0);
        assert_eq!(make_roi(&b, &large_image(1.0, 0.0)).unwrap(), b);
    }

    #[test]
    fn make_roi_clamps_to_smaller_dimension() {
        let roi = make_roi(&bb(100.0, 100.0, 1800.0, 1100.0), &RoiConfig::default()).unwrap();
        assert_eq!(roi.width(), 1200.0);
        assert_eq!(roi.height(), 1200.0);
        assert_eq!((roi.ymin, roi.ymax), (0.0, 1200.0));
    }

    #[test]
    fn make_roi_translates_off_far_border() {
        let roi = make_roi(&bb(1900.0, 1150.0, 1920.0, 1200.0), &RoiConfig::default()).unwrap();
        assert_eq!(roi.to_array(), [1696.0, 976.0, 1920.0, 1200.0]);
    }

    #[test]
    fn make_roi_rejects_degenerate() {
        let cfg = RoiConfig::default();
        assert!(make_roi(&bb(5.0, 5.0, 5.0, 50.0), &cfg).is_err());
        assert!(make_roi(&bb(3000.0, 5.0, 3010.0, 50.0), &cfg).is_err());
    }

    #[test]
    fn iou_examples() {
        let a = bb(0.0, 0.0, 10.0, 10.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &bb(20.0, 20.0, 30.0, 30.0)), 0.0);
        let v = iou(&a, &bb(5.0, 5.0, 15.0, 15.0));
        assert!((v - 25.0 / 175.0).abs() < 1e-12);
        assert_eq!(iou(&bb(1.0, 1.0, 1.0, 1.0), &bb(1.0, 1.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn containment_examples() {
        let outer = bb(0.0, 0.0, 100.0, 100.0);
        assert!(contains(&outer, &bb(10.0, 10.0, 20.0, 20.0)));
        assert!(contains(&outer, &outer));
        assert!(!contains(&outer, &bb(90.0, 90.0, 110.0, 110.0)));
    }

    #[test]
    fn roi_transform_corners_and_center() {
        let roi = bb(100.0, 50.0, 400.0, 350.0);
        let to = |p| roi_transform(&p, &roi, 224.0, RoiDirection::ToRoi).unwrap();
        assert_eq!(to(PixelPoint::new(100.0, 50.0)), PixelPoint::new(0.0, 0.0));
        assert_eq!(to(PixelPoint::new(250.0, 200.0)), PixelPoint::new(112.0, 112.0));
        let back = roi_transform(&PixelPoint::new(112.0, 112.0), &roi, 224.0, RoiDirection::ToImage).unwrap();
        assert_eq!(back, PixelPoint::new(250.0, 200.0));
        assert!(roi_transform(&PixelPoint::default(), &bb(0.0, 0.0, 0.0, 0.0), 224.0, RoiDirection::ToRoi).is_err());
    }

    #[test]
    fn bbox_json_is_four_numbers() {
        let b = bb(1.5, 2.0, 3.0, 4.25);
        assert_eq!(serde_json::to_string(&b).unwrap(), "[1.5,2.0,3.0,4.25]");
        assert!(serde_json::from_str::<BBox>("[3,0,1,1]").is_err());
    }
}
