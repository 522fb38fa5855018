//! Seeded synthetic layouts with known structure, for round-trip testing of
//! the layout parser.
//!
//! A generated tree alternates row and column containers whose children
//! tile their parent exactly. Rendering insets every leaf so that the
//! whitespace between neighbouring leaves is the only whitespace spanning a
//! container; generation rejects trees where that would not hold, or where
//! boxes from different leaves could pass for one repeated group.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{Element, ElementKind, PageImage};
use crate::geometry::BBox;
use crate::layout::{LayoutConfig, LayoutNode, LayoutTree, NodeType};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SynthError {
    #[error("PageTooSmall: {width}x{height} cannot hold a {min_leaf}px leaf")]
    PageTooSmall { width: u32, height: u32, min_leaf: u32 },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("GenerationFailed: no separable layout after {0} attempts")]
    GenerationFailed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeafFill {
    /// One box per leaf.
    OneBox,
    /// Two rows of three equal, equally spaced boxes per leaf.
    AlignedGrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub max_depth: u32,
    pub max_children: u32,
    /// Whitespace budget around each leaf; boxes are inset by a quarter of it.
    pub gap_px: u32,
    pub min_leaf_px: u32,
    pub leaf_fill: LeafFill,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self { seed: 0, max_depth: 4, max_children: 4, gap_px: 24, min_leaf_px: 64, leaf_fill: LeafFill::OneBox }
    }
}

/// Sibling extents differ by at least this much.
const SIBLING_SPREAD_PX: u32 = 30;
/// Boxes from different leaves must not be this close in both size and (left or top) edge.
const LOOKALIKE_MARGIN_PX: u32 = 8;
const MAX_ATTEMPTS: usize = 500;
const EARLY_LEAF_PROBABILITY: f64 = 0.25;

impl SynthConfig {
    fn inset(&self) -> u32 {
        self.gap_px / 4
    }

    pub fn validate(&self, layout: &LayoutConfig) -> Result<(), SynthError> {
        if self.gap_px <= layout.min_gap_px {
            return Err(SynthError::InvalidConfig(format!(
                "gap_px {} must exceed min_gap_px {}",
                self.gap_px, layout.min_gap_px
            )));
        }
        if self.inset() < layout.min_gap_px {
            return Err(SynthError::InvalidConfig(format!(
                "gap_px / 4 = {} must be at least min_gap_px {} so grid cells stay separable",
                self.inset(),
                layout.min_gap_px
            )));
        }
        if self.min_leaf_px <= 2 * self.gap_px {
            return Err(SynthError::InvalidConfig(format!(
                "min_leaf_px {} must exceed 2 x gap_px = {}",
                self.min_leaf_px,
                2 * self.gap_px
            )));
        }
        if self.max_children < 2 && self.max_depth > 0 {
            return Err(SynthError::InvalidConfig("max_children must be at least 2".into()));
        }
        Ok(())
    }
}

fn stacking(kind: NodeType, b: &BBox) -> (u32, u32) {
    match kind {
        NodeType::Row => (b.col_min(), b.col_max()),
        _ => (b.row_min(), b.row_max()),
    }
}

fn sibling_sizes(rng: &mut ChaCha8Rng, extent: u32, config: &SynthConfig) -> Option<Vec<u32>> {
    let min = config.min_leaf_px;
    let fits = |k: u32| k * min + SIBLING_SPREAD_PX * k * (k - 1) / 2 <= extent;
    let k_max = (2..=config.max_children).take_while(|&k| fits(k)).last()?;
    let k = rng.random_range(2..=k_max);
    let slack = extent - k * min;
    for _ in 0..64 {
        let mut cuts: Vec<u32> = (0..k - 1).map(|_| rng.random_range(0..=slack)).collect();
        cuts.sort_unstable();
        let mut sizes = Vec::with_capacity(k as usize);
        let mut prev = 0;
        for c in cuts.iter().copied().chain([slack]) {
            sizes.push(min + c - prev);
            prev = c;
        }
        let spread =
            sizes.iter().enumerate().all(|(i, a)| sizes[i + 1..].iter().all(|b| a.abs_diff(*b) >= SIBLING_SPREAD_PX));
        if spread {
            return Some(sizes);
        }
    }
    None
}

fn grow(rng: &mut ChaCha8Rng, region: BBox, kind: NodeType, depth: u32, config: &SynthConfig) -> LayoutNode {
    let leaf = depth >= config.max_depth || (depth > 0 && rng.random_bool(EARLY_LEAF_PROBABILITY));
    if leaf {
        return LayoutNode::atomic(region);
    }
    let (start, end) = stacking(kind, &region);
    let Some(sizes) = sibling_sizes(rng, end - start, config) else {
        return LayoutNode::atomic(region);
    };
    let child_kind = if kind == NodeType::Row { NodeType::Column } else { NodeType::Row };
    let mut cursor = start;
    let children = sizes
        .into_iter()
        .map(|s| {
            let r = match kind {
                NodeType::Row => BBox::new(cursor, region.row_min(), cursor + s, region.row_max()),
                _ => BBox::new(region.col_min(), cursor, region.col_max(), cursor + s),
            }
            .expect("positive extent");
            cursor += s;
            grow(rng, r, child_kind, depth + 1, config)
        })
        .collect();
    LayoutNode::container(kind, region, children)
}

/// Boxes drawn for one leaf.
fn leaf_boxes(leaf: &BBox, config: &SynthConfig) -> Vec<BBox> {
    let inset = config.inset();
    let outer =
        BBox::new(leaf.col_min() + inset, leaf.row_min() + inset, leaf.col_max() - inset, leaf.row_max() - inset)
            .expect("min_leaf_px exceeds twice the inset");
    match config.leaf_fill {
        LeafFill::OneBox => vec![outer],
        LeafFill::AlignedGrid => {
            let s = inset;
            let cw = (outer.width() - 2 * s) / 3;
            let ch = (outer.height() - s) / 2;
            let mut out = Vec::with_capacity(6);
            for r in 0..2 {
                for c in 0..3 {
                    let c0 = outer.col_min() + c * (cw + s);
                    let r0 = outer.row_min() + r * (ch + s);
                    out.push(BBox::new(c0, r0, c0 + cw, r0 + ch).expect("cells are non-empty"));
                }
            }
            out
        }
    }
}

fn hull(boxes: &[BBox]) -> BBox {
    boxes[1..].iter().fold(boxes[0], |h, b| h.union(b))
}

/// True when the union of `[start, end)` intervals has a hole.
fn has_hole(mut spans: Vec<(u32, u32)>) -> bool {
    spans.sort_unstable();
    let mut reach = spans[0].1;
    for (s, e) in &spans[1..] {
        if *s > reach {
            return true;
        }
        reach = reach.max(*e);
    }
    false
}

/// Content hull of every leaf under `node`.
fn leaf_hulls(node: &LayoutNode, config: &SynthConfig, out: &mut Vec<BBox>) {
    if node.is_leaf() {
        out.push(hull(&leaf_boxes(&node.position, config)));
    } else {
        node.children.iter().for_each(|c| leaf_hulls(c, config, out));
    }
}

/// Every contiguous run of siblings must have gap-free content across the
/// container's cross axis; otherwise the parser could legitimately cut there.
fn separable(node: &LayoutNode, config: &SynthConfig) -> bool {
    if node.is_leaf() {
        return true;
    }
    let per_child: Vec<Vec<BBox>> = node
        .children
        .iter()
        .map(|c| {
            let mut v = Vec::new();
            leaf_hulls(c, config, &mut v);
            v
        })
        .collect();
    let k = per_child.len();
    for i in 0..k {
        for j in i + 1..k {
            let spans: Vec<(u32, u32)> = per_child[i..=j]
                .iter()
                .flatten()
                .map(|b| match node.node_type {
                    NodeType::Row => (b.row_min(), b.row_max()),
                    _ => (b.col_min(), b.col_max()),
                })
                .collect();
            if has_hole(spans) {
                return false;
            }
        }
    }
    node.children.iter().all(|c| separable(c, config))
}

fn distinct_leaves(boxes_per_leaf: &[Vec<BBox>]) -> bool {
    let m = LOOKALIKE_MARGIN_PX;
    for (i, a_set) in boxes_per_leaf.iter().enumerate() {
        for b_set in &boxes_per_leaf[i + 1..] {
            for a in a_set {
                for b in b_set {
                    let same_size = a.width().abs_diff(b.width()) <= m && a.height().abs_diff(b.height()) <= m;
                    let aligned = a.col_min().abs_diff(b.col_min()) <= m || a.row_min().abs_diff(b.row_min()) <= m;
                    if same_size && aligned {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Generate a random tree for a `page_width` x `page_height` page.
pub fn random_layout(config: &SynthConfig, page_width: u32, page_height: u32) -> Result<LayoutTree, SynthError> {
    config.validate(&LayoutConfig::default())?;
    if page_width < config.min_leaf_px || page_height < config.min_leaf_px {
        return Err(SynthError::PageTooSmall { width: page_width, height: page_height, min_leaf: config.min_leaf_px });
    }
    let page = BBox::new(0, 0, page_width, page_height).expect("checked above");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for _ in 0..MAX_ATTEMPTS {
        let kind = if rng.random_bool(0.5) { NodeType::Row } else { NodeType::Column };
        let mut root = grow(&mut rng, page, kind, 0, config);
        if !separable(&root, config) {
            continue;
        }
        let per_leaf: Vec<Vec<BBox>> = root.leaves().iter().map(|l| leaf_boxes(&l.position, config)).collect();
        if !distinct_leaves(&per_leaf) {
            continue;
        }
        root.assign_portions();
        return Ok(LayoutTree { root, page_width, page_height });
    }
    Err(SynthError::GenerationFailed(MAX_ATTEMPTS))
}

/// Element boxes for every leaf, in depth-first leaf order.
pub fn render_boxes(tree: &LayoutTree, config: &SynthConfig) -> Vec<Element> {
    tree.root
        .leaves()
        .iter()
        .flat_map(|l| leaf_boxes(&l.position, config))
        .enumerate()
        .map(|(i, b)| Element::new(i as u32, ElementKind::Unknown, b))
        .collect()
}

/// Black boxes on a white page.
pub fn render_png(tree: &LayoutTree, config: &SynthConfig) -> PageImage {
    let mut img = PageImage::filled(tree.page_width, tree.page_height, [255, 255, 255]).expect("page is non-empty");
    for e in render_boxes(tree, config) {
        img.fill_rect(&e.bbox, [0, 0, 0]);
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::intersection_area;

    #[test]
    fn depth_zero_is_a_single_leaf() {
        let cfg = SynthConfig { max_depth: 0, ..SynthConfig::default() };
        let t = random_layout(&cfg, 800, 600).unwrap();
        assert!(t.root.is_leaf());
        assert_eq!(render_boxes(&t, &cfg).len(), 1);
    }

    #[test]
    fn same_seed_same_tree() {
        let cfg = SynthConfig { seed: 42, ..SynthConfig::default() };
        assert_eq!(random_layout(&cfg, 1512, 1000).unwrap(), random_layout(&cfg, 1512, 1000).unwrap());
        let other = SynthConfig { seed: 43, ..cfg };
        assert_ne!(random_layout(&cfg, 1512, 1000).unwrap(), random_layout(&other, 1512, 1000).unwrap());
    }

    #[test]
    fn trees_are_valid_and_respect_limits() {
        for seed in 0..50 {
            let cfg = SynthConfig { seed, max_depth: 1 + (seed % 4) as u32, ..SynthConfig::default() };
            let t = random_layout(&cfg, 1512, 1000).unwrap();
            t.root.validate().unwrap();
            assert!(t.root.depth() as u32 <= cfg.max_depth + 1);
            for l in t.root.leaves() {
                assert!(l.position.width() >= cfg.min_leaf_px && l.position.height() >= cfg.min_leaf_px);
            }
        }
    }

    #[test]
    fn small_page_is_rejected() {
        let r = random_layout(&SynthConfig::default(), 50, 500);
        assert!(matches!(r, Err(SynthError::PageTooSmall { .. })));
    }

    #[test]
    fn config_invariants() {
        let bad = SynthConfig { gap_px: 4, ..SynthConfig::default() };
        assert!(matches!(random_layout(&bad, 800, 800), Err(SynthError::InvalidConfig(_))));
        let bad = SynthConfig { min_leaf_px: 40, ..SynthConfig::default() };
        assert!(matches!(random_layout(&bad, 800, 800), Err(SynthError::InvalidConfig(_))));
    }

    #[test]
    fn rendered_boxes_are_disjoint() {
        for fill in [LeafFill::OneBox, LeafFill::AlignedGrid] {
            let cfg = SynthConfig { seed: 5, leaf_fill: fill, ..SynthConfig::default() };
            let t = random_layout(&cfg, 1512, 1000).unwrap();
            let els = render_boxes(&t, &cfg);
            let per_leaf = if fill == LeafFill::OneBox { 1 } else { 6 };
            assert_eq!(els.len(), t.leaf_count() * per_leaf);
            for (i, a) in els.iter().enumerate() {
                for b in &els[i + 1..] {
                    assert_eq!(intersection_area(&a.bbox, &b.bbox), 0);
                }
            }
        }
    }

    #[test]
    fn aligned_grid_cells() {
        let cfg = SynthConfig { leaf_fill: LeafFill::AlignedGrid, ..SynthConfig::default() };
        let cells = leaf_boxes(&BBox::new(0, 0, 150, 100).unwrap(), &cfg);
        assert_eq!(cells.len(), 6);
        assert!(cells.windows(2).all(|w| w[0].width() == w[1].width() && w[0].height() == w[1].height()));
        assert_eq!(cells[1].col_min() - cells[0].col_max(), 6);
        assert_eq!(cells[3].row_min() - cells[0].row_max(), 6);
    }

    #[test]
    fn hole_detection() {
        assert!(!has_hole(vec![(0, 10), (5, 20), (20, 30)]));
        assert!(has_hole(vec![(0, 10), (12, 20)]));
    }
}
