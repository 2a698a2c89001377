//! Pixel-space boxes, overlap measures and the head-feet line rule.
//!
//! All coordinates are continuous (sub-pixel); nothing here rounds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Width/height ratio used by the Caltech toolbox for pedestrian boxes.
pub const DEFAULT_ASPECT: f64 = 0.41;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(&self, other: &Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

#[derive(Serialize, Deserialize)]
struct RawBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

/// Axis-aligned box given by its top-left corner and size.
///
/// Width and height are always finite and strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBox", into = "RawBox")]
pub struct BBox {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

impl TryFrom<RawBox> for BBox {
    type Error = Error;

    fn try_from(raw: RawBox) -> Result<Self> {
        BBox::new(raw.x, raw.y, raw.w, raw.h)
    }
}

impl From<BBox> for RawBox {
    fn from(b: BBox) -> Self {
        RawBox {
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
        }
    }
}

impl BBox {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        if !(x.is_finite() && y.is_finite() && w.is_finite() && h.is_finite()) {
            return Err(Error::Geometry(format!(
                "non-finite box ({x}, {y}, {w}, {h})"
            )));
        }
        if w <= 0.0 || h <= 0.0 {
            return Err(Error::Geometry(format!(
                "box must have positive size, got w={w} h={h}"
            )));
        }
        if !(w * h).is_finite() {
            return Err(Error::Geometry(format!("box area overflows: w={w} h={h}")));
        }
        Ok(BBox { x, y, w, h })
    }

    /// Builds a box from its edges (left, top, right, bottom).
    pub fn from_edges(left: f64, top: f64, right: f64, bottom: f64) -> Result<Self> {
        BBox::new(left, top, right - left, bottom - top)
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn w(&self) -> f64 {
        self.w
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn center(&self) -> Point {
        Point::new(self.x + self.w * 0.5, self.y + self.h * 0.5)
    }

    pub fn aspect(&self) -> f64 {
        self.w / self.h
    }

    /// Same size, shifted by `(dx, dy)`.
    pub fn translated(&self, dx: f64, dy: f64) -> Result<Self> {
        BBox::new(self.x + dx, self.y + dy, self.w, self.h)
    }

    /// Intersection with `other`, or `None` when the interiors are disjoint.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let left = self.x.max(other.x);
        let top = self.y.max(other.y);
        let right = self.right().min(other.right());
        let bottom = self.bottom().min(other.bottom());
        if right <= left || bottom <= top {
            return None;
        }
        BBox::from_edges(left, top, right, bottom).ok()
    }

    pub fn contains(&self, other: &BBox) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

fn edge_area(left: f64, top: f64, right: f64, bottom: f64) -> f64 {
    (right - left).max(0.0) * (bottom - top).max(0.0)
}

fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    edge_area(
        a.x.max(b.x),
        a.y.max(b.y),
        a.right().min(b.right()),
        a.bottom().min(b.bottom()),
    )
}

/// Intersection over union. Symmetric, in `[0, 1]`.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    if a == b {
        return 1.0;
    }
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    // Areas from edges so that inter <= each area holds bit-for-bit.
    let area_a = edge_area(a.x, a.y, a.right(), a.bottom());
    let area_b = edge_area(b.x, b.y, b.right(), b.bottom());
    (inter / (area_a + area_b - inter)).clamp(0.0, 1.0)
}

/// Fraction of `det` covered by `region`: `area(det ∩ region) / area(det)`.
///
/// This is the ignore-region criterion and is not symmetric.
pub fn overlap_over_detection(det: &BBox, region: &BBox) -> f64 {
    let inter = intersection_area(det, region);
    let area = edge_area(det.x, det.y, det.right(), det.bottom());
    (inter / area).clamp(0.0, 1.0)
}

/// Returns an origin `o` such that `o + extent / 2` evaluates to `centre`
/// exactly when some representable origin allows it, and to a neighbouring
/// float otherwise.
fn centred_origin(centre: f64, extent: f64) -> f64 {
    let half = extent * 0.5;
    let mut origin = centre - half;
    // Coarse correction first: the residual is exact when origin has a finer
    // ulp than centre, which is the case for in-image boxes.
    for _ in 0..4 {
        let residual = (origin + half) - centre;
        if residual == 0.0 {
            return origin;
        }
        origin -= residual;
    }
    for _ in 0..8 {
        let c = origin + half;
        if c == centre {
            break;
        }
        origin = if c < centre {
            origin.next_up()
        } else {
            origin.next_down()
        };
    }
    origin
}

/// Width/height ratio. Any finite positive value is accepted; pedestrian
/// boxes use values below one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AspectRatio(f64);

impl AspectRatio {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() || value <= 0.0 {
            return Err(Error::Geometry(format!(
                "aspect ratio must be finite and positive, got {value}"
            )));
        }
        Ok(AspectRatio(value))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for AspectRatio {
    fn default() -> Self {
        AspectRatio(DEFAULT_ASPECT)
    }
}

/// Axis drawn from the top of the head to the point between the feet.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadFeetLine {
    head: Point,
    feet: Point,
}

impl HeadFeetLine {
    pub fn new(head: Point, feet: Point) -> Result<Self> {
        if !(head.x.is_finite() && head.y.is_finite() && feet.x.is_finite() && feet.y.is_finite())
        {
            return Err(Error::Geometry("non-finite line endpoint".into()));
        }
        if head.distance(&feet) <= 0.0 {
            return Err(Error::Geometry("head-feet line has zero length".into()));
        }
        Ok(HeadFeetLine { head, feet })
    }

    pub fn head(&self) -> Point {
        self.head
    }

    pub fn feet(&self) -> Point {
        self.feet
    }

    pub fn length(&self) -> f64 {
        self.head.distance(&self.feet)
    }

    pub fn midpoint(&self) -> Point {
        Point::new(
            (self.head.x + self.feet.x) * 0.5,
            (self.head.y + self.feet.y) * 0.5,
        )
    }
}

/// Box of height equal to the line length (Euclidean, so leaning lines keep
/// their full length), width `aspect * height`, centred on the line midpoint.
pub fn line_to_bbox(line: &HeadFeetLine, aspect: AspectRatio) -> Result<BBox> {
    let h = line.length();
    let w = aspect.value() * h;
    let c = line.midpoint();
    BBox::new(centred_origin(c.x, w), centred_origin(c.y, h), w, h)
}

/// Vertical line through the box centre from the top edge to the bottom edge.
pub fn bbox_to_line(b: &BBox) -> HeadFeetLine {
    let cx = b.center().x;
    HeadFeetLine {
        head: Point::new(cx, b.y),
        feet: Point::new(cx, b.bottom()),
    }
}

/// Rescales the width to `aspect * h`, keeping the height, vertical extent
/// and centre.
pub fn normalize_aspect(b: &BBox, aspect: AspectRatio) -> BBox {
    let w = aspect.value() * b.h;
    if w == b.w {
        return *b;
    }
    let cx = b.center().x;
    BBox {
        x: centred_origin(cx, w),
        y: b.y,
        w,
        h: b.h,
    }
}

/// Clips `visible` to `full`. The second value is true when clipping changed
/// the box (a data-quality problem in the input).
pub fn clip_visible(full: &BBox, visible: &BBox) -> (Option<BBox>, bool) {
    if full.contains(visible) {
        return (Some(*visible), false);
    }
    (full.intersection(visible), true)
}

/// `1 - area(visible) / area(full)`, or 0 when there is no visible box.
pub fn occlusion_fraction(full: &BBox, visible: Option<&BBox>) -> f64 {
    let Some(visible) = visible else {
        return 0.0;
    };
    let (clipped, changed) = clip_visible(full, visible);
    if changed {
        log::warn!("visible box {visible:?} extends outside full box {full:?}; clipped");
    }
    match clipped {
        Some(v) => (1.0 - v.area() / full.area()).clamp(0.0, 1.0),
        None => 1.0,
    }
}
