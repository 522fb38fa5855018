//! Block projection, recursive midpoint division, and the layout tree.
//!
//! A region is divided by projecting its blocks onto both axes, choosing the
//! widest uncovered interval, and cutting at its midpoint. Each side is then
//! divided again. A horizontal cut line stacks its sides top to bottom (a
//! column container); a vertical cut line places them side by side (a row
//! container). Chains of same-axis cuts collapse into one container.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{Element, PageImage};
use crate::geometry::{BBox, GeometryError};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("NoBlocks: region {0:?} contains no block")]
    NoBlocks(BBox),
    #[error("EmptyPage: no blocks to lay out")]
    EmptyPage,
    #[error("BlockOutOfBounds: element {id} at {bbox:?} lies outside the {width}x{height} page")]
    BlockOutOfBounds { id: u32, bbox: BBox, width: u32, height: u32 },
    #[error("BoundsError: node at {0:?} lies outside the image")]
    BoundsError(BBox),
    #[error("InvalidTree: {0}")]
    InvalidTree(String),
    #[error("Geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("Io: {0}")]
    Io(#[from] std::io::Error),
    #[error("Json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Orientation of a cut line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutAxis {
    /// A horizontal line; gap coordinates are rows.
    Horizontal,
    /// A vertical line; gap coordinates are columns.
    Vertical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GapInterval {
    pub axis: CutAxis,
    pub start: u32,
    pub end: u32,
}

impl GapInterval {
    pub fn size(&self) -> u32 {
        self.end - self.start
    }

    pub fn midpoint(&self) -> u32 {
        self.start + self.size() / 2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LayoutConfig {
    /// Narrower gaps are padding, not dividers.
    pub min_gap_px: u32,
}

impl Default for LayoutConfig {
    fn default() -> Self {
        Self { min_gap_px: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeType {
    Row,
    Column,
    Atomic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutNode {
    #[serde(rename = "type")]
    pub node_type: NodeType,
    pub position: BBox,
    pub portion: f64,
    #[serde(default)]
    pub children: Vec<LayoutNode>,
    #[serde(default)]
    pub code: Option<String>,
}

impl LayoutNode {
    pub fn atomic(position: BBox) -> Self {
        Self { node_type: NodeType::Atomic, position, portion: 1.0, children: Vec::new(), code: None }
    }

    pub fn container(node_type: NodeType, position: BBox, children: Vec<LayoutNode>) -> Self {
        Self { node_type, position, portion: 1.0, children, code: None }
    }

    pub fn is_leaf(&self) -> bool {
        self.node_type == NodeType::Atomic
    }

    /// Number of levels below and including this node.
    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(LayoutNode::depth).max().unwrap_or(0)
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(LayoutNode::node_count).sum::<usize>()
    }

    /// Atomic leaves in depth-first order; the index is the leaf id.
    pub fn leaves(&self) -> Vec<&LayoutNode> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a LayoutNode, out: &mut Vec<&'a LayoutNode>) {
            if n.is_leaf() {
                out.push(n);
            }
            n.children.iter().for_each(|c| walk(c, out));
        }
        walk(self, &mut out);
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut LayoutNode> {
        let mut out = Vec::new();
        fn walk<'a>(n: &'a mut LayoutNode, out: &mut Vec<&'a mut LayoutNode>) {
            if n.node_type == NodeType::Atomic {
                out.push(n);
            } else {
                n.children.iter_mut().for_each(|c| walk(c, out));
            }
        }
        walk(self, &mut out);
        out
    }

    /// Set every child's portion to its share of this node's extent along
    /// the stacking direction.
    pub fn assign_portions(&mut self) {
        let node_type = self.node_type;
        let extent = |p: &BBox| if node_type == NodeType::Row { p.width() } else { p.height() };
        let total = extent(&self.position) as f64;
        for child in &mut self.children {
            child.portion = round_portion(extent(&child.position) as f64 / total);
            child.assign_portions();
        }
    }

    /// Check the structural invariants of this subtree.
    pub fn validate(&self) -> Result<(), LayoutError> {
        let bad = |msg: String| Err(LayoutError::InvalidTree(msg));
        if !(self.portion > 0.0 && self.portion <= 1.0) {
            return bad(format!("node at {:?} has portion {} outside (0, 1]", self.position, self.portion));
        }
        match self.node_type {
            NodeType::Atomic => {
                if !self.children.is_empty() {
                    return bad(format!("atomic node at {:?} has children", self.position));
                }
                return Ok(());
            }
            _ if self.children.is_empty() => {
                return bad(format!("container at {:?} has no children", self.position));
            }
            _ if self.code.is_some() => {
                return bad(format!("container at {:?} carries code", self.position));
            }
            _ => {}
        }
        let p = &self.position;
        let mut cursor = match self.node_type {
            NodeType::Row => p.col_min(),
            _ => p.row_min(),
        };
        let mut portion_sum = 0.0;
        for c in &self.children {
            if c.node_type == self.node_type {
                return bad(format!("{:?} container at {:?} nests a {:?}", self.node_type, p, c.node_type));
            }
            let q = &c.position;
            let (start, end, cross_ok) = match self.node_type {
                NodeType::Row => (q.col_min(), q.col_max(), q.row_min() == p.row_min() && q.row_max() == p.row_max()),
                _ => (q.row_min(), q.row_max(), q.col_min() == p.col_min() && q.col_max() == p.col_max()),
            };
            if start != cursor || !cross_ok {
                return bad(format!("children of {:?} do not tile it (at {:?})", p, q));
            }
            cursor = end;
            portion_sum += c.portion;
            c.validate()?;
        }
        let end = match self.node_type {
            NodeType::Row => p.col_max(),
            _ => p.row_max(),
        };
        if cursor != end {
            return bad(format!("children of {:?} stop at {} instead of {}", p, cursor, end));
        }
        if (portion_sum - 1.0).abs() > 1e-3 {
            return bad(format!("children of {:?} have portions summing to {}", p, portion_sum));
        }
        Ok(())
    }
}

pub fn round_portion(x: f64) -> f64 {
    ((x * 10_000.0).round() / 10_000.0).clamp(0.0001, 1.0)
}

/// A layout tree whose root spans the whole page. Serializes as its root node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LayoutNode", into = "LayoutNode")]
pub struct LayoutTree {
    pub root: LayoutNode,
    pub page_width: u32,
    pub page_height: u32,
}

impl TryFrom<LayoutNode> for LayoutTree {
    type Error = LayoutError;

    fn try_from(root: LayoutNode) -> Result<Self, Self::Error> {
        let p = root.position;
        if p.col_min() != 0 || p.row_min() != 0 {
            return Err(LayoutError::InvalidTree(format!("root position {:?} must start at the origin", p)));
        }
        if (root.portion - 1.0).abs() > 1e-9 {
            return Err(LayoutError::InvalidTree(format!("root portion is {}, expected 1", root.portion)));
        }
        root.validate()?;
        Ok(LayoutTree { page_width: p.col_max(), page_height: p.row_max(), root })
    }
}

impl From<LayoutTree> for LayoutNode {
    fn from(t: LayoutTree) -> Self {
        t.root
    }
}

impl LayoutTree {
    pub fn leaf_count(&self) -> usize {
        self.root.leaves().len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout trees always serialize")
    }

    pub fn from_json(json: &str) -> Result<Self, LayoutError> {
        let root: LayoutNode = serde_json::from_str(json)?;
        LayoutTree::try_from(root)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LayoutError> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LayoutError> {
        fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

/// Uncovered intervals between block shadows inside `region`.
///
/// Shadows are the blocks' extents along the axis perpendicular to the cut
/// line, clipped to the region. Whitespace between the region boundary and
/// the outermost shadows is not reported.
pub fn project(blocks: &[Element], region: &BBox, axis: CutAxis) -> Result<Vec<GapInterval>, LayoutError> {
    let mut shadows: Vec<(u32, u32)> = blocks
        .iter()
        .filter_map(|b| b.bbox.intersection(region))
        .map(|i| match axis {
            CutAxis::Horizontal => (i.row_min(), i.row_max()),
            CutAxis::Vertical => (i.col_min(), i.col_max()),
        })
        .collect();
    if shadows.is_empty() {
        return Err(LayoutError::NoBlocks(*region));
    }
    shadows.sort_unstable();
    let mut gaps = Vec::new();
    let mut covered_to = shadows[0].1;
    for &(start, end) in &shadows[1..] {
        if start > covered_to {
            gaps.push(GapInterval { axis, start: covered_to, end: start });
        }
        covered_to = covered_to.max(end);
    }
    Ok(gaps)
}

/// Widest gap; ties prefer horizontal cuts, then the smaller start.
fn widest_gap(gaps: &[GapInterval]) -> Option<GapInterval> {
    gaps.iter().copied().min_by_key(|g| (std::cmp::Reverse(g.size()), g.axis != CutAxis::Horizontal, g.start))
}

fn split(region: BBox, blocks: Vec<Element>, config: &LayoutConfig) -> LayoutNode {
    let min_gap = config.min_gap_px;
    let too_small = region.width() < 2 * min_gap && region.height() < 2 * min_gap;
    if blocks.len() <= 1 || too_small {
        return LayoutNode::atomic(region);
    }
    let mut gaps = project(&blocks, &region, CutAxis::Horizontal).unwrap_or_default();
    gaps.extend(project(&blocks, &region, CutAxis::Vertical).unwrap_or_default());
    let Some(gap) = widest_gap(&gaps).filter(|g| g.size() >= min_gap.max(1)) else {
        return LayoutNode::atomic(region);
    };

    let mid = gap.midpoint();
    let (first, second, kind) = match gap.axis {
        CutAxis::Horizontal => (
            BBox::new(region.col_min(), region.row_min(), region.col_max(), mid),
            BBox::new(region.col_min(), mid, region.col_max(), region.row_max()),
            NodeType::Column,
        ),
        CutAxis::Vertical => (
            BBox::new(region.col_min(), region.row_min(), mid, region.row_max()),
            BBox::new(mid, region.row_min(), region.col_max(), region.row_max()),
            NodeType::Row,
        ),
    };
    // An internal gap lies strictly inside the region, so both halves are non-empty.
    let (first, second) = (first.expect("non-empty half"), second.expect("non-empty half"));
    let (before, after): (Vec<Element>, Vec<Element>) = blocks.into_iter().partition(|b| match gap.axis {
        CutAxis::Horizontal => b.bbox.row_max() <= mid,
        CutAxis::Vertical => b.bbox.col_max() <= mid,
    });

    let mut children = Vec::new();
    for child in [split(first, before, config), split(second, after, config)] {
        if child.node_type == kind {
            children.extend(child.children);
        } else {
            children.push(child);
        }
    }
    LayoutNode::container(kind, region, children)
}

/// Recursively divide `region`. Portions are left at 1; see
/// [`LayoutNode::assign_portions`].
pub fn divide(region: BBox, blocks: &[Element], config: &LayoutConfig) -> LayoutNode {
    let inside: Vec<Element> = blocks.iter().filter(|b| b.bbox.intersection(&region).is_some()).copied().collect();
    split(region, inside, config)
}

pub fn build_layout_tree(
    blocks: &[Element],
    page_width: u32,
    page_height: u32,
    config: &LayoutConfig,
) -> Result<LayoutTree, LayoutError> {
    if blocks.is_empty() {
        return Err(LayoutError::EmptyPage);
    }
    let page = BBox::new(0, 0, page_width, page_height)?;
    if let Some(b) = blocks.iter().find(|b| !page.contains(&b.bbox)) {
        return Err(LayoutError::BlockOutOfBounds { id: b.id, bbox: b.bbox, width: page_width, height: page_height });
    }
    let mut root = divide(page, blocks, config);
    root.portion = 1.0;
    root.assign_portions();
    Ok(LayoutTree { root, page_width, page_height })
}

const DEPTH_COLORS: [[u8; 3]; 6] =
    [[230, 25, 75], [60, 180, 75], [0, 130, 200], [245, 130, 48], [145, 30, 180], [70, 240, 240]];

/// Copy of `image` with every node's outline drawn, coloured by depth.
pub fn render_division_overlay(tree: &LayoutTree, image: &PageImage) -> Result<PageImage, LayoutError> {
    let mut out = image.clone();
    fn draw(node: &LayoutNode, depth: usize, img: &mut PageImage) -> Result<(), LayoutError> {
        let p = node.position;
        if !img.bounds().contains(&p) {
            return Err(LayoutError::BoundsError(p));
        }
        let color = DEPTH_COLORS[depth % DEPTH_COLORS.len()];
        for c in p.col_min()..p.col_max() {
            img.set(c, p.row_min(), color);
            img.set(c, p.row_max() - 1, color);
        }
        for r in p.row_min()..p.row_max() {
            img.set(p.col_min(), r, color);
            img.set(p.col_max() - 1, r, color);
        }
        node.children.iter().try_for_each(|c| draw(c, depth + 1, img))
    }
    draw(&tree.root, 0, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::ElementKind;

    fn b(c0: u32, r0: u32, c1: u32, r1: u32) -> BBox {
        BBox::new(c0, r0, c1, r1).unwrap()
    }

    fn el(id: u32, c0: u32, r0: u32, c1: u32, r1: u32) -> Element {
        Element::new(id, ElementKind::Unknown, b(c0, r0, c1, r1))
    }

    /// Independent 1-D sweep: mark covered integer cells and read off runs.
    fn sweep_gaps(shadows: &[(u32, u32)], lo: u32, hi: u32) -> Vec<(u32, u32)> {
        let mut covered = vec![false; (hi - lo) as usize];
        for &(s, e) in shadows {
            for x in s..e {
                covered[(x - lo) as usize] = true;
            }
        }
        let first = covered.iter().position(|&c| c).unwrap() as u32;
        let last = covered.iter().rposition(|&c| c).unwrap() as u32;
        let mut out = Vec::new();
        let mut x = first;
        while x <= last {
            if !covered[x as usize] {
                let s = x;
                while !covered[x as usize] {
                    x += 1;
                }
                out.push((s + lo, x + lo));
            }
            x += 1;
        }
        out
    }

    #[test]
    fn single_gap() {
        let blocks = [el(0, 0, 0, 30, 10), el(1, 0, 20, 30, 30)];
        let gaps = project(&blocks, &b(0, 0, 30, 30), CutAxis::Horizontal).unwrap();
        assert_eq!(gaps, vec![GapInterval { axis: CutAxis::Horizontal, start: 10, end: 20 }]);
        assert_eq!(gaps[0].size(), 10);
    }

    #[test]
    fn overlapping_shadows_merge() {
        let blocks = [el(0, 0, 0, 5, 10), el(1, 10, 5, 15, 15)];
        assert!(project(&blocks, &b(0, 0, 15, 15), CutAxis::Horizontal).unwrap().is_empty());
    }

    #[test]
    fn gaps_match_sweep_oracle() {
        let shadows = [(0, 10), (14, 20), (40, 60)];
        let expected = sweep_gaps(&shadows, 0, 60);
        assert_eq!(expected, vec![(10, 14), (20, 40)]);
        let blocks: Vec<Element> = shadows.iter().enumerate().map(|(i, &(s, e))| el(i as u32, 0, s, 10, e)).collect();
        let got: Vec<(u32, u32)> =
            project(&blocks, &b(0, 0, 10, 60), CutAxis::Horizontal).unwrap().iter().map(|g| (g.start, g.end)).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn boundary_whitespace_is_not_a_gap() {
        let blocks = [el(0, 10, 10, 20, 20)];
        assert!(project(&blocks, &b(0, 0, 100, 100), CutAxis::Vertical).unwrap().is_empty());
    }

    #[test]
    fn empty_region_errors() {
        let blocks = [el(0, 50, 50, 60, 60)];
        assert!(matches!(project(&blocks, &b(0, 0, 10, 10), CutAxis::Vertical), Err(LayoutError::NoBlocks(_))));
    }

    #[test]
    fn single_block_is_atomic() {
        let node = divide(b(0, 0, 100, 100), &[el(0, 10, 10, 50, 50)], &LayoutConfig::default());
        assert_eq!(node.node_type, NodeType::Atomic);
        assert_eq!(node.position, b(0, 0, 100, 100));
    }

    #[test]
    fn three_bands_flatten_into_one_column() {
        // band gaps of 8 then 30
        let blocks = [el(0, 0, 0, 100, 20), el(1, 0, 28, 100, 50), el(2, 0, 80, 100, 100)];
        let node = divide(b(0, 0, 100, 100), &blocks, &LayoutConfig::default());
        assert_eq!(node.node_type, NodeType::Column);
        assert_eq!(node.children.len(), 3);
        assert!(node.children.iter().all(LayoutNode::is_leaf));
        // 30-px gap (50..80) cut at 65, 8-px gap (20..28) cut at 24
        let spans: Vec<(u32, u32)> =
            node.children.iter().map(|c| (c.position.row_min(), c.position.row_max())).collect();
        assert_eq!(spans, vec![(0, 24), (24, 65), (65, 100)]);
    }

    #[test]
    fn larger_gap_is_cut_first() {
        // 2x2 grid: row gap 20, column gap 10
        let blocks = [el(0, 0, 0, 45, 40), el(1, 55, 0, 100, 40), el(2, 0, 60, 45, 100), el(3, 55, 60, 100, 100)];
        let node = divide(b(0, 0, 100, 100), &blocks, &LayoutConfig::default());
        assert_eq!(node.node_type, NodeType::Column);
        assert_eq!(node.children.len(), 2);
        for row in &node.children {
            assert_eq!(row.node_type, NodeType::Row);
            assert_eq!(row.children.len(), 2);
            assert!(row.children.iter().all(LayoutNode::is_leaf));
        }
    }

    #[test]
    fn narrow_gaps_are_ignored() {
        let blocks = [el(0, 0, 0, 100, 20), el(1, 0, 24, 100, 50)];
        let node = divide(b(0, 0, 100, 50), &blocks, &LayoutConfig::default());
        assert!(node.is_leaf());
    }

    #[test]
    fn horizontal_cut_wins_ties() {
        let blocks = [el(0, 0, 0, 40, 40), el(1, 50, 0, 90, 40), el(2, 0, 50, 40, 90)];
        let node = divide(b(0, 0, 90, 90), &blocks, &LayoutConfig::default());
        assert_eq!(node.node_type, NodeType::Column);
    }

    #[test]
    fn single_block_page() {
        let t = build_layout_tree(&[el(0, 10, 10, 20, 20)], 100, 80, &LayoutConfig::default()).unwrap();
        assert!(t.root.is_leaf());
        assert_eq!(t.root.portion, 1.0);
        assert_eq!(t.root.position, b(0, 0, 100, 80));
    }

    #[test]
    fn portions_from_extents() {
        // bands cut at 200 and 500 on a 1000-px page
        let blocks = [el(0, 0, 10, 100, 190), el(1, 0, 210, 100, 490), el(2, 0, 510, 100, 990)];
        let t = build_layout_tree(&blocks, 100, 1000, &LayoutConfig::default()).unwrap();
        let portions: Vec<f64> = t.root.children.iter().map(|c| c.portion).collect();
        assert_eq!(portions, vec![0.2, 0.3, 0.5]);
        t.root.validate().unwrap();
    }

    #[test]
    fn empty_page_and_out_of_bounds() {
        assert!(matches!(build_layout_tree(&[], 10, 10, &LayoutConfig::default()), Err(LayoutError::EmptyPage)));
        assert!(matches!(
            build_layout_tree(&[el(0, 0, 0, 20, 5)], 10, 10, &LayoutConfig::default()),
            Err(LayoutError::BlockOutOfBounds { id: 0, .. })
        ));
    }

    #[test]
    fn tree_json_contract() {
        let blocks = [el(0, 0, 0, 40, 40), el(1, 60, 0, 100, 40)];
        let t = build_layout_tree(&blocks, 100, 40, &LayoutConfig::default()).unwrap();
        let v: serde_json::Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v["type"], "row");
        assert_eq!(v["position"], serde_json::json!([0, 0, 100, 40]));
        assert_eq!(v["portion"], 1.0);
        assert_eq!(v["code"], serde_json::Value::Null);
        assert_eq!(v["children"][0]["type"], "atomic");
        assert_eq!(v["children"][0]["portion"], 0.5);
        assert_eq!(LayoutTree::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn malformed_tree_json_is_rejected() {
        let j = r#"{"type":"row","position":[0,0,100,40],"portion":1,"children":[
            {"type":"atomic","position":[0,0,40,40],"portion":0.4,"children":[],"code":null}],"code":null}"#;
        assert!(matches!(LayoutTree::from_json(j), Err(LayoutError::InvalidTree(_))));
    }

    #[test]
    fn overlay_draws_outlines() {
        let blocks = [el(0, 0, 0, 40, 40), el(1, 60, 0, 100, 40)];
        let t = build_layout_tree(&blocks, 100, 40, &LayoutConfig::default()).unwrap();
        let img = PageImage::filled(100, 40, [255, 255, 255]).unwrap();
        let over = render_division_overlay(&t, &img).unwrap();
        assert_eq!(over.get(0, 0), DEPTH_COLORS[1]);
        assert_eq!(over.get(50, 20), DEPTH_COLORS[1]);
        assert_eq!(over.get(25, 20), [255, 255, 255]);
        let small = PageImage::filled(50, 40, [255, 255, 255]).unwrap();
        assert!(matches!(render_division_overlay(&t, &small), Err(LayoutError::BoundsError(_))));
    }
}
