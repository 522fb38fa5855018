//! Direct-neighbour relation graph and alignment/spacing based group search.

use std::collections::{BTreeMap, HashMap, HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::{Element, ElementKind};
use crate::geometry::{intersection_area, BBox};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelationError {
    #[error("OverlappingInput: elements {0} and {1} overlap")]
    OverlappingInput(u32, u32),
    #[error("UnknownElement: id {0} is not part of the element set")]
    UnknownElement(u32),
}

/// Neighbour ids of one element, each list in reading order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Neighbors {
    pub up: Vec<u32>,
    pub down: Vec<u32>,
    pub left: Vec<u32>,
    pub right: Vec<u32>,
}

impl Neighbors {
    /// Traversal order used by group expansion.
    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        self.up.iter().chain(&self.down).chain(&self.left).chain(&self.right).copied()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationGraph {
    nodes: BTreeMap<u32, Neighbors>,
}

impl RelationGraph {
    pub fn neighbors(&self, id: u32) -> Option<&Neighbors> {
        self.nodes.get(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.nodes.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UIGroup {
    /// Sorted ascending.
    #[serde(rename = "ids")]
    pub member_ids: Vec<u32>,
    pub hull: BBox,
}

impl UIGroup {
    pub fn singleton(element: &Element) -> Self {
        Self { member_ids: vec![element.id], hull: element.bbox }
    }

    pub fn len(&self) -> usize {
        self.member_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.member_ids.is_empty()
    }

    fn push(&mut self, element: &Element) {
        let pos = self.member_ids.binary_search(&element.id).unwrap_or_else(|p| p);
        self.member_ids.insert(pos, element.id);
        self.hull = self.hull.union(&element.bbox);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GroupingConfig {
    /// Left/top edges closer than this count as aligned.
    pub align_tol_px: u32,
    /// Gaps within one column or row may differ by at most this much.
    pub spacing_tol_px: u32,
    /// Members must match each other's width and height within this much.
    pub size_tol_px: u32,
}

impl Default for GroupingConfig {
    fn default() -> Self {
        Self { align_tol_px: 3, spacing_tol_px: 4, size_tol_px: 3 }
    }
}

fn intervals_overlap(a0: u32, a1: u32, b0: u32, b1: u32) -> bool {
    a0.max(b0) < a1.min(b1)
}

/// For every element, the elements directly above it: boxes ending at or
/// before its top edge, sharing some column range, with nothing in between.
fn direct_upper(elements: &[Element]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); elements.len()];
    for (ai, a) in elements.iter().enumerate() {
        let ab = &a.bbox;
        let candidates: Vec<usize> = elements
            .iter()
            .enumerate()
            .filter(|(bi, b)| {
                *bi != ai
                    && b.bbox.row_max() <= ab.row_min()
                    && intervals_overlap(ab.col_min(), ab.col_max(), b.bbox.col_min(), b.bbox.col_max())
            })
            .map(|(bi, _)| bi)
            .collect();
        // Any occluder is itself a candidate, so the search stays within them.
        for &bi in &candidates {
            let bb = &elements[bi].bbox;
            if bb.row_max() == ab.row_min() {
                out[ai].push(bi);
                continue;
            }
            let gap =
                BBox::new(ab.col_min().max(bb.col_min()), bb.row_max(), ab.col_max().min(bb.col_max()), ab.row_min())
                    .expect("overlapping column interval and positive row gap");
            let occluded = candidates.iter().any(|&ci| ci != bi && intersection_area(&elements[ci].bbox, &gap) > 0);
            if !occluded {
                out[ai].push(bi);
            }
        }
    }
    out
}

fn transpose(e: &Element) -> Element {
    let b = &e.bbox;
    let t = BBox::new(b.row_min(), b.col_min(), b.row_max(), b.col_max()).expect("valid box");
    Element::new(e.id, e.kind, t)
}

/// Build the four-direction direct-neighbour graph.
///
/// Input boxes must be pairwise interior-disjoint.
pub fn build_relation_graph(elements: &[Element]) -> Result<RelationGraph, RelationError> {
    for (i, a) in elements.iter().enumerate() {
        for b in &elements[i + 1..] {
            if intersection_area(&a.bbox, &b.bbox) > 0 {
                return Err(RelationError::OverlappingInput(a.id, b.id));
            }
        }
    }
    let up = direct_upper(elements);
    let transposed: Vec<Element> = elements.iter().map(transpose).collect();
    let left = direct_upper(&transposed);

    let mut nodes: BTreeMap<u32, Neighbors> = elements.iter().map(|e| (e.id, Neighbors::default())).collect();
    for (ai, a) in elements.iter().enumerate() {
        for &bi in &up[ai] {
            let b = elements[bi].id;
            nodes.get_mut(&a.id).unwrap().up.push(b);
            nodes.get_mut(&b).unwrap().down.push(a.id);
        }
        for &bi in &left[ai] {
            let b = elements[bi].id;
            nodes.get_mut(&a.id).unwrap().left.push(b);
            nodes.get_mut(&b).unwrap().right.push(a.id);
        }
    }

    let boxes: HashMap<u32, BBox> = elements.iter().map(|e| (e.id, e.bbox)).collect();
    let order = |list: &mut Vec<u32>| list.sort_by(|x, y| boxes[x].reading_order(&boxes[y]));
    for n in nodes.values_mut() {
        order(&mut n.up);
        order(&mut n.down);
        order(&mut n.left);
        order(&mut n.right);
    }
    Ok(RelationGraph { nodes })
}

/// Clusters values that chain together within `tol`; returns, for each
/// input index, its cluster number.
fn cluster_by(values: &[u32], tol: u32) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by_key(|&i| values[i]);
    let mut cluster = vec![0; values.len()];
    let mut current = 0;
    for w in 0..idx.len() {
        if w > 0 && values[idx[w]] - values[idx[w - 1]] > tol {
            current += 1;
        }
        cluster[idx[w]] = current;
    }
    cluster
}

/// Gaps between consecutive boxes of every line must agree within `tol`.
/// Lines are clusters of `key` values; `start`/`end` measure along the line.
/// Lines with at most two boxes are exempt.
fn spacing_consistent(
    boxes: &[BBox],
    key: impl Fn(&BBox) -> u32,
    start: impl Fn(&BBox) -> u32,
    end: impl Fn(&BBox) -> u32,
    align_tol: u32,
    spacing_tol: u32,
) -> bool {
    let keys: Vec<u32> = boxes.iter().map(&key).collect();
    let clusters = cluster_by(&keys, align_tol);
    let n_clusters = clusters.iter().max().map_or(0, |m| m + 1);
    for c in 0..n_clusters {
        let mut line: Vec<&BBox> = boxes.iter().zip(&clusters).filter(|(_, &k)| k == c).map(|(b, _)| b).collect();
        if line.len() <= 2 {
            continue;
        }
        line.sort_by_key(|b| start(b));
        let gaps: Vec<i64> = line.windows(2).map(|w| start(w[1]) as i64 - end(w[0]) as i64).collect();
        let lo = *gaps.iter().min().unwrap();
        let hi = *gaps.iter().max().unwrap();
        if hi - lo > spacing_tol as i64 {
            return false;
        }
    }
    true
}

fn admits(candidate: &BBox, members: &[BBox], config: &GroupingConfig) -> bool {
    let close = |a: u32, b: u32, tol: u32| a.abs_diff(b) <= tol;
    let congruent = members.iter().all(|m| {
        close(m.width(), candidate.width(), config.size_tol_px)
            && close(m.height(), candidate.height(), config.size_tol_px)
    });
    if !congruent {
        return false;
    }
    let aligned = members.iter().any(|m| {
        close(m.col_min(), candidate.col_min(), config.align_tol_px)
            || close(m.row_min(), candidate.row_min(), config.align_tol_px)
    });
    if !aligned {
        return false;
    }
    let mut all = members.to_vec();
    all.push(*candidate);
    let (at, st) = (config.align_tol_px, config.spacing_tol_px);
    // columns share a left edge and stack vertically; rows share a top edge
    spacing_consistent(&all, BBox::col_min, BBox::row_min, BBox::row_max, at, st)
        && spacing_consistent(&all, BBox::row_min, BBox::col_min, BBox::col_max, at, st)
}

/// Membership test for group expansion.
///
/// A candidate joins when it has the same size as every member (repeated
/// structure), its left edge or top edge lines up with some member, and
/// after adding it the gaps inside every column and every row of the group
/// stay equal. Columns or rows holding two boxes or fewer skip the gap check.
pub fn can_add_to_group(
    candidate: &Element,
    group: &UIGroup,
    elements: &[Element],
    config: &GroupingConfig,
) -> Result<bool, RelationError> {
    let members = group
        .member_ids
        .iter()
        .map(|id| elements.iter().find(|e| e.id == *id).map(|e| e.bbox).ok_or(RelationError::UnknownElement(*id)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(admits(&candidate.bbox, &members, config))
}

/// Breadth-first group search over the relation graph.
///
/// Seeds are taken in reading order (the lowest unvisited `(row_min,
/// col_min)`), and neighbours are visited up, down, left, right. The result
/// partitions the element set.
pub fn search_ui_groups(
    elements: &[Element],
    graph: &RelationGraph,
    config: &GroupingConfig,
) -> Result<Vec<UIGroup>, RelationError> {
    let by_id: HashMap<u32, &Element> = elements.iter().map(|e| (e.id, e)).collect();
    let mut seeds: Vec<&Element> = elements.iter().collect();
    seeds.sort_by(|a, b| a.bbox.reading_order(&b.bbox));

    let mut visited: HashSet<u32> = HashSet::with_capacity(elements.len());
    let mut groups = Vec::new();
    for seed in seeds {
        if !visited.insert(seed.id) {
            continue;
        }
        let mut group = UIGroup::singleton(seed);
        let mut members = vec![seed.bbox];
        let mut queue = VecDeque::from([seed.id]);
        while let Some(current) = queue.pop_front() {
            let Some(neighbors) = graph.neighbors(current) else {
                return Err(RelationError::UnknownElement(current));
            };
            for id in neighbors.iter() {
                if visited.contains(&id) {
                    continue;
                }
                let neighbor = by_id.get(&id).ok_or(RelationError::UnknownElement(id))?;
                if admits(&neighbor.bbox, &members, config) {
                    group.push(neighbor);
                    members.push(neighbor.bbox);
                    visited.insert(id);
                    queue.push_back(id);
                }
            }
        }
        groups.push(group);
    }
    Ok(groups)
}

/// Replace every multi-member group by one block covering it. The block
/// takes the smallest member id; singletons pass through unchanged. Output
/// is in reading order.
pub fn merge_groups(elements: &[Element], groups: &[UIGroup]) -> Result<Vec<Element>, RelationError> {
    let by_id: HashMap<u32, &Element> = elements.iter().map(|e| (e.id, e)).collect();
    let mut blocks = Vec::with_capacity(groups.len());
    for g in groups {
        let first = *g.member_ids.first().ok_or(RelationError::UnknownElement(u32::MAX))?;
        let first = by_id.get(&first).ok_or(RelationError::UnknownElement(first))?;
        if g.len() == 1 {
            blocks.push(**first);
            continue;
        }
        let mut kind = first.kind;
        let mut hull = first.bbox;
        for id in &g.member_ids[1..] {
            let e = by_id.get(id).ok_or(RelationError::UnknownElement(*id))?;
            hull = hull.union(&e.bbox);
            if e.kind != kind {
                kind = ElementKind::Unknown;
            }
        }
        blocks.push(Element::new(first.id, kind, hull));
    }
    blocks.sort_by(|a, b| a.bbox.reading_order(&b.bbox));
    Ok(blocks)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupsDump {
    pub groups: Vec<UIGroup>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(id: u32, c0: u32, r0: u32, c1: u32, r1: u32) -> Element {
        Element::new(id, ElementKind::Unknown, BBox::new(c0, r0, c1, r1).unwrap())
    }

    /// 2 rows x 3 columns of 40x30 boxes, 10 px apart.
    fn grid_2x3() -> Vec<Element> {
        let mut out = Vec::new();
        for r in 0..2 {
            for c in 0..3 {
                let (x, y) = (c * 50, r * 40);
                out.push(el(out.len() as u32, x, y, x + 40, y + 30));
            }
        }
        out
    }

    #[test]
    fn fig3_style_neighbours() {
        // 1 and 2 sit above 4, 3 sits to its left.
        let els = vec![el(1, 40, 0, 70, 20), el(2, 80, 0, 110, 20), el(3, 0, 30, 30, 60), el(4, 40, 30, 110, 60)];
        let g = build_relation_graph(&els).unwrap();
        assert_eq!(g.neighbors(4).unwrap().up, vec![1, 2]);
        assert_eq!(g.neighbors(4).unwrap().left, vec![3]);
        assert_eq!(g.neighbors(1).unwrap().down, vec![4]);
        assert_eq!(g.neighbors(3).unwrap().right, vec![4]);
    }

    #[test]
    fn lone_element_has_no_neighbours() {
        let g = build_relation_graph(&[el(0, 5, 5, 10, 10)]).unwrap();
        assert_eq!(g.neighbors(0).unwrap(), &Neighbors::default());
    }

    #[test]
    fn stacked_column_is_occluded() {
        let els = vec![el(0, 0, 0, 10, 10), el(1, 0, 20, 10, 30), el(2, 0, 40, 10, 50)];
        let g = build_relation_graph(&els).unwrap();
        assert_eq!(g.neighbors(1).unwrap().up, vec![0]);
        assert_eq!(g.neighbors(1).unwrap().down, vec![2]);
        assert_eq!(g.neighbors(0).unwrap().down, vec![1]);
    }

    #[test]
    fn overlapping_input_is_rejected() {
        let els = vec![el(0, 0, 0, 10, 10), el(1, 5, 5, 15, 15)];
        assert_eq!(build_relation_graph(&els), Err(RelationError::OverlappingInput(0, 1)));
    }

    #[test]
    fn grid_candidate_completes_group() {
        let els = grid_2x3();
        let cfg = GroupingConfig::default();
        let mut group = UIGroup::singleton(&els[0]);
        for e in &els[1..5] {
            group.push(e);
        }
        assert!(can_add_to_group(&els[5], &group, &els, &cfg).unwrap());
    }

    #[test]
    fn misaligned_candidate_is_rejected() {
        let els = vec![el(0, 0, 0, 40, 30), el(1, 50, 50, 90, 80)];
        let group = UIGroup::singleton(&els[0]);
        assert!(!can_add_to_group(&els[1], &group, &els, &GroupingConfig::default()).unwrap());
    }

    #[test]
    fn uneven_spacing_is_rejected() {
        // gaps 10 then 40
        let els = vec![el(0, 0, 0, 40, 30), el(1, 0, 40, 40, 70), el(2, 0, 110, 40, 140)];
        let mut group = UIGroup::singleton(&els[0]);
        group.push(&els[1]);
        assert!(!can_add_to_group(&els[2], &group, &els, &GroupingConfig::default()).unwrap());

        // equal gaps are fine
        let els = vec![el(0, 0, 0, 40, 30), el(1, 0, 40, 40, 70), el(2, 0, 80, 40, 110)];
        let mut group = UIGroup::singleton(&els[0]);
        group.push(&els[1]);
        assert!(can_add_to_group(&els[2], &group, &els, &GroupingConfig::default()).unwrap());
    }

    #[test]
    fn two_box_lines_skip_the_spacing_test() {
        let els = vec![el(0, 0, 0, 40, 30), el(1, 0, 90, 40, 120)];
        let group = UIGroup::singleton(&els[0]);
        assert!(can_add_to_group(&els[1], &group, &els, &GroupingConfig::default()).unwrap());
    }

    #[test]
    fn different_sizes_do_not_group() {
        let els = vec![el(0, 0, 0, 40, 30), el(1, 50, 0, 140, 30)];
        let group = UIGroup::singleton(&els[0]);
        assert!(!can_add_to_group(&els[1], &group, &els, &GroupingConfig::default()).unwrap());
    }

    #[test]
    fn grid_forms_one_group() {
        let els = grid_2x3();
        let g = build_relation_graph(&els).unwrap();
        let groups = search_ui_groups(&els, &g, &GroupingConfig::default()).unwrap();
        assert_eq!(groups.len(), 1);
        assert_eq!(groups[0].member_ids, vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(groups[0].hull, BBox::new(0, 0, 140, 70).unwrap());
    }

    #[test]
    fn unaligned_pair_stays_apart() {
        let els = vec![el(0, 0, 0, 40, 30), el(1, 55, 12, 95, 42)];
        let g = build_relation_graph(&els).unwrap();
        let groups = search_ui_groups(&els, &g, &GroupingConfig::default()).unwrap();
        assert_eq!(groups.len(), 2);
    }

    #[test]
    fn grid_of_four_plus_outlier() {
        let mut els = vec![el(0, 0, 0, 40, 30), el(1, 50, 0, 90, 30), el(2, 0, 40, 40, 70), el(3, 50, 40, 90, 70)];
        els.push(el(4, 117, 55, 157, 85));
        let g = build_relation_graph(&els).unwrap();
        let groups = search_ui_groups(&els, &g, &GroupingConfig::default()).unwrap();
        let sizes: Vec<usize> = groups.iter().map(UIGroup::len).collect();
        assert_eq!(sizes, vec![4, 1]);
        let blocks = merge_groups(&els, &groups).unwrap();
        assert_eq!(blocks.len(), 2);
    }

    #[test]
    fn merge_replaces_groups_by_hulls() {
        let els = grid_2x3();
        let g = build_relation_graph(&els).unwrap();
        let groups = search_ui_groups(&els, &g, &GroupingConfig::default()).unwrap();
        let blocks = merge_groups(&els, &groups).unwrap();
        assert_eq!(blocks, vec![el(0, 0, 0, 140, 70)]);

        let singles: Vec<UIGroup> = els.iter().map(UIGroup::singleton).collect();
        let mut sorted = els.clone();
        sorted.sort_by(|a, b| a.bbox.reading_order(&b.bbox));
        assert_eq!(merge_groups(&els, &singles).unwrap(), sorted);
    }

    #[test]
    fn merge_counts_blocks_per_group() {
        let mut els = vec![el(0, 0, 0, 40, 30), el(1, 50, 0, 90, 30), el(2, 0, 40, 40, 70), el(3, 50, 40, 90, 70)];
        els.push(el(4, 200, 0, 260, 20));
        els.push(el(5, 200, 200, 210, 290));
        let g = build_relation_graph(&els).unwrap();
        let groups = search_ui_groups(&els, &g, &GroupingConfig::default()).unwrap();
        assert_eq!(merge_groups(&els, &groups).unwrap().len(), 3);
    }

    #[test]
    fn groups_dump_format() {
        let dump = GroupsDump { groups: vec![UIGroup::singleton(&el(3, 1, 2, 3, 4))] };
        assert_eq!(serde_json::to_string(&dump).unwrap(), r#"{"groups":[{"ids":[3],"hull":[1,2,3,4]}]}"#);
    }
}
