//! Element boxes: a simple edge-based detector for raster pages and the
//! element JSON format used to hand boxes between pipeline stages.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{self, BBox, GeometryError};

#[derive(Debug, Error)]
pub enum DetectionError {
    #[error("EmptyImage: image has zero width or height")]
    EmptyImage,
    #[error("SchemaError: record {index}: {message}")]
    SchemaError { index: usize, message: String },
    #[error("InvalidBBox: record {index}: {source}")]
    InvalidBBox {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("DuplicateId: id {0} appears more than once")]
    DuplicateId(u32),
    #[error("BufferSize: expected {expected} bytes, got {actual}")]
    BufferSize { expected: usize, actual: usize },
    #[error("Geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("Image: {0}")]
    Image(#[from] image::ImageError),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ElementKind {
    Text,
    #[serde(rename = "nontext")]
    NonText,
    Unknown,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Element {
    pub id: u32,
    pub kind: ElementKind,
    pub bbox: BBox,
}

impl Element {
    pub fn new(id: u32, kind: ElementKind, bbox: BBox) -> Self {
        Self { id, kind, bbox }
    }
}

/// Row-major 8-bit RGB raster.
#[derive(Clone, PartialEq, Eq)]
pub struct PageImage {
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for PageImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PageImage({}x{})", self.width, self.height)
    }
}

impl PageImage {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Result<Self, DetectionError> {
        if width == 0 || height == 0 {
            return Err(DetectionError::EmptyImage);
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(DetectionError::BufferSize { expected, actual: pixels.len() });
        }
        Ok(Self { width, height, pixels })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self, DetectionError> {
        let n = width as usize * height as usize;
        let pixels = rgb.iter().copied().cycle().take(n * 3).collect();
        Self::new(width, height, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn bounds(&self) -> BBox {
        BBox::new(0, 0, self.width, self.height).expect("non-empty image")
    }

    pub fn get(&self, col: u32, row: u32) -> [u8; 3] {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, col: u32, row: u32, rgb: [u8; 3]) {
        let i = (row as usize * self.width as usize + col as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fill the part of `bbox` that lies inside the image.
    pub fn fill_rect(&mut self, bbox: &BBox, rgb: [u8; 3]) {
        for r in bbox.row_min()..bbox.row_max().min(self.height) {
            for c in bbox.col_min()..bbox.col_max().min(self.width) {
                self.set(c, r, rgb);
            }
        }
    }

    /// Copy out a sub-rectangle. Returns `None` if `bbox` leaves the image.
    pub fn crop(&self, bbox: &BBox) -> Option<PageImage> {
        if !self.bounds().contains(bbox) {
            return None;
        }
        let mut pixels = Vec::with_capacity(bbox.area() as usize * 3);
        for r in bbox.row_min()..bbox.row_max() {
            let start = (r as usize * self.width as usize + bbox.col_min() as usize) * 3;
            let end = start + bbox.width() as usize * 3;
            pixels.extend_from_slice(&self.pixels[start..end]);
        }
        Some(PageImage { width: bbox.width(), height: bbox.height(), pixels })
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, DetectionError> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), DetectionError> {
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer size checked at construction");
        buf.save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, DetectionError> {
        let mut out = std::io::Cursor::new(Vec::new());
        let buf = image::RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("buffer size checked at construction");
        buf.write_to(&mut out, image::ImageFormat::Png)?;
        Ok(out.into_inner())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    /// Minimum gray-level difference to a 4-neighbour, in 0..=255.
    pub gradient_threshold: u8,
    pub dilation_radius: u32,
    /// Components whose box area is below this are discarded.
    pub min_area: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { gradient_threshold: 25, dilation_radius: 2, min_area: 25 }
    }
}

fn grayscale(image: &PageImage) -> Vec<u8> {
    image
        .pixels
        .chunks_exact(3)
        .map(|p| ((299 * p[0] as u32 + 587 * p[1] as u32 + 114 * p[2] as u32 + 500) / 1000) as u8)
        .collect()
}

/// Marks pixels whose gray level differs from some 4-neighbour by at least `threshold`.
fn edge_mask(gray: &[u8], width: usize, height: usize, threshold: u8) -> Vec<bool> {
    let mut mask = vec![false; gray.len()];
    let t = threshold.max(1) as i16;
    for r in 0..height {
        for c in 0..width {
            let i = r * width + c;
            let v = gray[i] as i16;
            let differs = |j: usize| (v - gray[j] as i16).abs() >= t;
            mask[i] = (c > 0 && differs(i - 1))
                || (c + 1 < width && differs(i + 1))
                || (r > 0 && differs(i - width))
                || (r + 1 < height && differs(i + width));
        }
    }
    mask
}

/// Square dilation, done as two separable 1-D passes.
fn dilate(mask: &[bool], width: usize, height: usize, radius: usize) -> Vec<bool> {
    if radius == 0 {
        return mask.to_vec();
    }
    let mut horiz = vec![false; mask.len()];
    for r in 0..height {
        let row = &mask[r * width..(r + 1) * width];
        // distance to the last set pixel on the left, swept both ways
        let mut last: Option<usize> = None;
        for c in 0..width {
            if row[c] {
                last = Some(c);
            }
            if last.is_some_and(|l| c - l <= radius) {
                horiz[r * width + c] = true;
            }
        }
        last = None;
        for c in (0..width).rev() {
            if row[c] {
                last = Some(c);
            }
            if last.is_some_and(|l| l - c <= radius) {
                horiz[r * width + c] = true;
            }
        }
    }
    let mut out = vec![false; mask.len()];
    for c in 0..width {
        let mut last: Option<usize> = None;
        for r in 0..height {
            if horiz[r * width + c] {
                last = Some(r);
            }
            if last.is_some_and(|l| r - l <= radius) {
                out[r * width + c] = true;
            }
        }
        last = None;
        for r in (0..height).rev() {
            if horiz[r * width + c] {
                last = Some(r);
            }
            if last.is_some_and(|l| l - r <= radius) {
                out[r * width + c] = true;
            }
        }
    }
    out
}

/// Detect element boxes as connected regions of strong gradient.
///
/// Pipeline: grayscale, edge thresholding, dilation, 8-connected labelling
/// of the dilated mask, min-area filtering, then overlap resolution. A
/// component's box is taken from its undilated edge pixels so that dilation
/// only joins fragments without inflating boxes. Every element gets
/// `ElementKind::Unknown`; ids follow reading order.
pub fn detect_elements(image: &PageImage, config: &DetectorConfig) -> Result<Vec<Element>, DetectionError> {
    let (w, h) = (image.width as usize, image.height as usize);
    if w == 0 || h == 0 {
        return Err(DetectionError::EmptyImage);
    }
    let gray = grayscale(image);
    let edges = edge_mask(&gray, w, h, config.gradient_threshold);
    let grown = dilate(&edges, w, h, config.dilation_radius as usize);

    let mut labelled = vec![false; w * h];
    let mut boxes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..w * h {
        if !grown[start] || labelled[start] {
            continue;
        }
        labelled[start] = true;
        stack.push(start);
        let (mut c0, mut r0, mut c1, mut r1) = (usize::MAX, usize::MAX, 0usize, 0usize);
        while let Some(i) = stack.pop() {
            let (r, c) = (i / w, i % w);
            if edges[i] {
                c0 = c0.min(c);
                r0 = r0.min(r);
                c1 = c1.max(c + 1);
                r1 = r1.max(r + 1);
            }
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if grown[j] && !labelled[j] {
                        labelled[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        // A dilated component always contains at least one edge pixel.
        let bbox = BBox::new(c0 as u32, r0 as u32, c1 as u32, r1 as u32)?;
        if bbox.area() >= config.min_area {
            boxes.push(bbox);
        }
    }

    let resolved = geometry::resolve_overlaps(&boxes)?;
    Ok(resolved.into_iter().enumerate().map(|(i, b)| Element::new(i as u32, ElementKind::Unknown, b)).collect())
}

/// Overlap resolution on elements. Merged elements keep the smaller id; the
/// kind survives only if both sides agree.
pub fn resolve_element_overlaps(elements: Vec<Element>) -> Result<Vec<Element>, GeometryError> {
    geometry::resolve_overlaps_by(
        elements,
        |e| e.bbox,
        |kept, absorbed, bbox| Element {
            id: kept.id.min(absorbed.id),
            kind: if kept.kind == absorbed.kind { kept.kind } else { ElementKind::Unknown },
            bbox,
        },
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElement {
    id: u32,
    kind: ElementKind,
    bbox: [i64; 4],
}

pub fn parse_elements(json: &str) -> Result<Vec<Element>, DetectionError> {
    let records: Vec<serde_json::Value> = serde_json::from_str(json)
        .map_err(|e| DetectionError::SchemaError { index: 0, message: format!("expected a JSON array: {e}") })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for (index, rec) in records.into_iter().enumerate() {
        let raw: RawElement =
            serde_json::from_value(rec).map_err(|e| DetectionError::SchemaError { index, message: e.to_string() })?;
        let bbox = BBox::try_from(raw.bbox).map_err(|source| DetectionError::InvalidBBox { index, source })?;
        if !seen.insert(raw.id) {
            return Err(DetectionError::DuplicateId(raw.id));
        }
        out.push(Element::new(raw.id, raw.kind, bbox));
    }
    Ok(out)
}

pub fn load_elements(path: impl AsRef<Path>) -> Result<Vec<Element>, DetectionError> {
    parse_elements(&fs::read_to_string(path)?)
}

pub fn elements_to_json(elements: &[Element]) -> String {
    serde_json::to_string_pretty(elements).expect("elements always serialize")
}

pub fn save_elements(path: impl AsRef<Path>, elements: &[Element]) -> Result<(), DetectionError> {
    fs::write(path, elements_to_json(elements) + "\n")?;
    Ok(())
}
