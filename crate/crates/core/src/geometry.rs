//! Axis-aligned pixel rectangles, overlap measures, and overlap resolution.
//!
//! Boxes use half-open pixel ranges: a box `(c0, r0, c1, r1)` covers columns
//! `c0..c1` and rows `r0..r1`. Two boxes that share an edge have zero
//! intersection area.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GeometryError {
    #[error("InvalidBBox: [{0}, {1}, {2}, {3}] requires col_min < col_max and row_min < row_max")]
    InvalidBBox(i64, i64, i64, i64),
    #[error("FixpointNotReached: overlap resolution did not settle within {0} passes")]
    FixpointNotReached(usize),
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[i64; 4]", into = "[u32; 4]")]
pub struct BBox {
    col_min: u32,
    row_min: u32,
    col_max: u32,
    row_max: u32,
}

impl BBox {
    pub fn new(col_min: u32, row_min: u32, col_max: u32, row_max: u32) -> Result<Self, GeometryError> {
        if col_min >= col_max || row_min >= row_max {
            return Err(GeometryError::InvalidBBox(col_min as i64, row_min as i64, col_max as i64, row_max as i64));
        }
        Ok(Self { col_min, row_min, col_max, row_max })
    }

    pub fn col_min(&self) -> u32 {
        self.col_min
    }

    pub fn row_min(&self) -> u32 {
        self.row_min
    }

    pub fn col_max(&self) -> u32 {
        self.col_max
    }

    pub fn row_max(&self) -> u32 {
        self.row_max
    }

    pub fn width(&self) -> u32 {
        self.col_max - self.col_min
    }

    pub fn height(&self) -> u32 {
        self.row_max - self.row_min
    }

    pub fn area(&self) -> u64 {
        self.width() as u64 * self.height() as u64
    }

    /// Smallest box covering both `self` and `other`.
    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            col_min: self.col_min.min(other.col_min),
            row_min: self.row_min.min(other.row_min),
            col_max: self.col_max.max(other.col_max),
            row_max: self.row_max.max(other.row_max),
        }
    }

    /// Interior intersection, or `None` when the boxes are disjoint or only touch.
    pub fn intersection(&self, other: &BBox) -> Option<BBox> {
        let c0 = self.col_min.max(other.col_min);
        let r0 = self.row_min.max(other.row_min);
        let c1 = self.col_max.min(other.col_max);
        let r1 = self.row_max.min(other.row_max);
        BBox::new(c0, r0, c1, r1).ok()
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.col_min <= other.col_min
            && self.row_min <= other.row_min
            && self.col_max >= other.col_max
            && self.row_max >= other.row_max
    }

    pub fn contains_point(&self, col: u32, row: u32) -> bool {
        col >= self.col_min && col < self.col_max && row >= self.row_min && row < self.row_max
    }

    /// Shift by a signed offset. Fails if any coordinate would become negative.
    pub fn translate(&self, dc: i64, dr: i64) -> Result<BBox, GeometryError> {
        let c0 = self.col_min as i64 + dc;
        let r0 = self.row_min as i64 + dr;
        let c1 = self.col_max as i64 + dc;
        let r1 = self.row_max as i64 + dr;
        if c0 < 0 || r0 < 0 || c1 > u32::MAX as i64 || r1 > u32::MAX as i64 {
            return Err(GeometryError::InvalidBBox(c0, r0, c1, r1));
        }
        BBox::new(c0 as u32, r0 as u32, c1 as u32, r1 as u32)
    }

    /// Ordering used everywhere boxes are sorted: `(row_min, col_min)`, then
    /// the far corner so that the order is total.
    pub fn reading_order(&self, other: &BBox) -> Ordering {
        (self.row_min, self.col_min, self.row_max, self.col_max).cmp(&(
            other.row_min,
            other.col_min,
            other.row_max,
            other.col_max,
        ))
    }

    pub fn to_array(&self) -> [u32; 4] {
        [self.col_min, self.row_min, self.col_max, self.row_max]
    }
}

impl fmt::Debug for BBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.col_min, self.row_min, self.col_max, self.row_max)
    }
}

impl TryFrom<[i64; 4]> for BBox {
    type Error = GeometryError;

    fn try_from(v: [i64; 4]) -> Result<Self, Self::Error> {
        let invalid = || GeometryError::InvalidBBox(v[0], v[1], v[2], v[3]);
        if v.iter().any(|&x| x < 0 || x > u32::MAX as i64) {
            return Err(invalid());
        }
        BBox::new(v[0] as u32, v[1] as u32, v[2] as u32, v[3] as u32).map_err(|_| invalid())
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        b.to_array()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapKind {
    Disjoint,
    Containment,
    PartialIntersection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub inter_area: u64,
    pub iou: f64,
    /// Intersection over the area of the first box.
    pub ioa: f64,
    /// Intersection over the area of the second box.
    pub iob: f64,
    pub kind: OverlapKind,
}

pub fn intersection_area(a: &BBox, b: &BBox) -> u64 {
    a.intersection(b).map_or(0, |i| i.area())
}

pub fn overlap_report(a: &BBox, b: &BBox) -> OverlapReport {
    let inter = a.intersection(b);
    let inter_area = inter.map_or(0, |i| i.area());
    let area_a = a.area() as f64;
    let area_b = b.area() as f64;
    let ia = inter_area as f64;
    let iou = ia / (area_a + area_b - ia);
    let ioa = ia / area_a;
    let iob = ia / area_b;
    // Containment is decided on integer coordinates so it never depends on
    // floating-point ratios landing exactly on 1.0.
    let kind = match inter {
        None => OverlapKind::Disjoint,
        Some(_) if a.contains(b) || b.contains(a) => OverlapKind::Containment,
        Some(_) => OverlapKind::PartialIntersection,
    };
    OverlapReport { inter_area, iou, ioa, iob, kind }
}

/// Remove overlaps between boxes until every pair is interior-disjoint.
///
/// Boxes are sorted by `(row_min, col_min)` and each pair is examined in
/// order. A contained box is dropped in favour of the larger one; two
/// partially intersecting boxes are replaced by their enclosing rectangle.
/// Passes repeat until a pass makes no change.
pub fn resolve_overlaps(boxes: &[BBox]) -> Result<Vec<BBox>, GeometryError> {
    resolve_overlaps_by(boxes.to_vec(), |b| *b, |_, _, merged| merged)
}

/// [`resolve_overlaps`] over arbitrary items carrying a box.
///
/// `merge(kept, absorbed, bbox)` builds the surviving item: for containment
/// `kept` is the larger item and `bbox` its box; for partial intersection
/// `kept` is the earlier item in sort order and `bbox` the enclosing box.
pub fn resolve_overlaps_by<T, B, M>(items: Vec<T>, bbox: B, merge: M) -> Result<Vec<T>, GeometryError>
where
    B: Fn(&T) -> BBox,
    M: Fn(T, T, BBox) -> T,
{
    let max_passes = items.len().max(1);
    let mut items: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let sort = |items: &mut Vec<Option<T>>| {
        items.retain(Option::is_some);
        items.sort_by(|a, b| {
            let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
            bbox(a).reading_order(&bbox(b))
        });
    };
    sort(&mut items);

    for _ in 0..max_passes {
        let mut changed = false;
        for i in 0..items.len() {
            let mut j = i + 1;
            while j < items.len() {
                let (Some(a), Some(b)) = (items[i].as_ref(), items[j].as_ref()) else {
                    j += 1;
                    continue;
                };
                let (ba, bb) = (bbox(a), bbox(b));
                match overlap_report(&ba, &bb).kind {
                    OverlapKind::Disjoint => {}
                    OverlapKind::Containment => {
                        let a = items[i].take().unwrap();
                        let b = items[j].take().unwrap();
                        // Ties (identical boxes) keep the earlier item.
                        items[i] = Some(if ba.contains(&bb) { merge(a, b, ba) } else { merge(b, a, bb) });
                        changed = true;
                    }
                    OverlapKind::PartialIntersection => {
                        let a = items[i].take().unwrap();
                        let b = items[j].take().unwrap();
                        items[i] = Some(merge(a, b, ba.union(&bb)));
                        changed = true;
                    }
                }
                j += 1;
            }
        }
        sort(&mut items);
        if !changed {
            return Ok(items.into_iter().flatten().collect());
        }
    }
    Err(GeometryError::FixpointNotReached(max_passes))
}
