//! Boxes, the normalized 8-d spatial descriptor, and IoU hit testing.

use serde::{Deserialize, Serialize};

use crate::error::{Result, ScrcError};

/// Minimum IoU for a retrieved box to count as correct (inclusive).
pub const HIT_IOU: f64 = 0.5;

/// Dimensionality of [`SpatialFeature`].
pub const SPATIAL_DIM: usize = 8;

/// Axis-aligned box in pixel coordinates, origin top-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 4]", try_from = "[f64; 4]")]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let b = BoundingBox {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<()> {
        let coords = [self.x_min, self.y_min, self.x_max, self.y_max];
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(ScrcError::Input(format!("non-finite box {coords:?}")));
        }
        if self.x_max <= self.x_min || self.y_max <= self.y_min {
            return Err(ScrcError::Input(format!("degenerate box {coords:?}")));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn fits_in(&self, img: ImageSize) -> bool {
        self.x_min >= 0.0 && self.y_min >= 0.0 && self.x_max <= img.width && self.y_max <= img.height
    }
}

impl From<BoundingBox> for [f64; 4] {
    fn from(b: BoundingBox) -> Self {
        b.to_array()
    }
}

impl TryFrom<[f64; 4]> for BoundingBox {
    type Error = ScrcError;

    fn try_from(v: [f64; 4]) -> Result<Self> {
        BoundingBox::new(v[0], v[1], v[2], v[3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImageSize {
    pub width: f64,
    pub height: f64,
}

impl ImageSize {
    pub fn new(width: f64, height: f64) -> Result<Self> {
        if !(width > 0.0 && height > 0.0 && width.is_finite() && height.is_finite()) {
            return Err(ScrcError::Input(format!("invalid image size {width}x{height}")));
        }
        Ok(ImageSize { width, height })
    }

    pub fn full_box(&self) -> BoundingBox {
        BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: self.width,
            y_max: self.height,
        }
    }
}

/// `[x_min, y_min, x_max, y_max, x_center, y_center, w_box, h_box]` in a frame where the
/// image spans `[-1, 1]` on both axes with the origin at its center.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialFeature(pub [f64; SPATIAL_DIM]);

impl SpatialFeature {
    pub fn values(&self) -> &[f64; SPATIAL_DIM] {
        &self.0
    }
}

pub fn encode_spatial(bbox: &BoundingBox, img: ImageSize) -> Result<SpatialFeature> {
    bbox.validate()?;
    if !bbox.fits_in(img) {
        return Err(ScrcError::Input(format!(
            "box {:?} lies outside {}x{} image",
            bbox.to_array(),
            img.width,
            img.height
        )));
    }
    let nx = |x: f64| 2.0 * x / img.width - 1.0;
    let ny = |y: f64| 2.0 * y / img.height - 1.0;
    let (x0, y0, x1, y1) = (nx(bbox.x_min), ny(bbox.y_min), nx(bbox.x_max), ny(bbox.y_max));
    Ok(SpatialFeature([
        x0,
        y0,
        x1,
        y1,
        (x0 + x1) / 2.0,
        (y0 + y1) / 2.0,
        x1 - x0,
        y1 - y0,
    ]))
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let ih = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = iw * ih;
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    (inter / union).min(1.0)
}

pub fn is_hit(candidate: &BoundingBox, gt: &BoundingBox) -> bool {
    iou(candidate, gt) >= HIT_IOU
}
