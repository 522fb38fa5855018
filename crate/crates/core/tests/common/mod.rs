//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use layoutfuse::detection::{Element, ElementKind, PageImage};
use layoutfuse::geometry::BBox;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bx(c0: u32, r0: u32, c1: u32, r1: u32) -> BBox {
    BBox::new(c0, r0, c1, r1).unwrap()
}

pub fn el(id: u32, b: BBox) -> Element {
    Element::new(id, ElementKind::Unknown, b)
}

/// Pixel-count overlap, by enumeration.
pub fn shared_cells(a: &BBox, b: &BBox) -> u64 {
    let mut n = 0;
    for r in a.row_min()..a.row_max() {
        for c in a.col_min()..a.col_max() {
            if c >= b.col_min() && c < b.col_max() && r >= b.row_min() && r < b.row_max() {
                n += 1;
            }
        }
    }
    n
}

pub fn interiors_overlap(a: &BBox, b: &BBox) -> bool {
    a.col_min() < b.col_max() && b.col_min() < a.col_max() && a.row_min() < b.row_max() && b.row_min() < a.row_max()
}

pub fn random_boxes(rng: &mut ChaCha8Rng, n: usize, extent: u32) -> Vec<BBox> {
    (0..n)
        .map(|_| {
            let c0 = rng.random_range(0..extent - 1);
            let r0 = rng.random_range(0..extent - 1);
            let w = rng.random_range(1..=(extent - c0).min(extent / 3).max(1));
            let h = rng.random_range(1..=(extent - r0).min(extent / 3).max(1));
            bx(c0, r0, c0 + w, r0 + h)
        })
        .collect()
}

/// Boxes placed one per cell of a jittered grid, so none overlap.
pub fn disjoint_boxes(rng: &mut ChaCha8Rng, cols: u32, rows: u32, cell: u32) -> Vec<BBox> {
    let mut out = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(0.3) {
                continue;
            }
            let w = rng.random_range(2..cell - 2);
            let h = rng.random_range(2..cell - 2);
            let dc = rng.random_range(1..=cell - w - 1);
            let dr = rng.random_range(1..=cell - h - 1);
            out.push(bx(c * cell + dc, r * cell + dr, c * cell + dc + w, r * cell + dr + h));
        }
    }
    out
}

/// BLEU by direct enumeration: n-gram lists as vectors, counts by linear scan.
/// Orders with no candidate n-grams are left out and the other weights
/// rescaled; zero matches are replaced by `eps`.
pub fn bleu_oracle(cand: &[String], reference: &[String], weights: &[f64], eps: Option<f64>) -> f64 {
    let c = cand.len();
    let r = reference.len();
    if c == 0 {
        return 0.0;
    }
    let grams = |t: &[String], n: usize| -> Vec<Vec<String>> {
        let mut v = Vec::new();
        let mut i = 0;
        while i + n <= t.len() {
            v.push(t[i..i + n].to_vec());
            i += 1;
        }
        v
    };
    let mut acc = 0.0;
    let mut wsum = 0.0;
    for (k, w) in weights.iter().enumerate() {
        let n = k + 1;
        let cg = grams(cand, n);
        if cg.is_empty() {
            continue;
        }
        let rg = grams(reference, n);
        let mut seen: Vec<&Vec<String>> = Vec::new();
        let mut matched = 0usize;
        for g in &cg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let in_c = cg.iter().filter(|x| *x == g).count();
            let in_r = rg.iter().filter(|x| *x == g).count();
            matched += in_c.min(in_r);
        }
        let p = if matched == 0 {
            match eps {
                Some(e) => e / cg.len() as f64,
                None => return 0.0,
            }
        } else {
            matched as f64 / cg.len() as f64
        };
        acc += w * p.ln();
        wsum += w;
    }
    let bp = if c >= r { 1.0 } else { (1.0 - r as f64 / c as f64).exp() };
    bp * (acc / wsum).exp()
}

pub fn random_tokens(rng: &mut ChaCha8Rng, min: usize, max: usize) -> Vec<String> {
    const VOCAB: [&str; 8] = ["<div", ">", "</div", "class", "row", "a", "b", "flex"];
    let n = rng.random_range(min..=max);
    (0..n).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_string()).collect()
}

/// A random well-formed document kept as a tree.
#[derive(Debug, Clone)]
pub struct DocNode {
    pub tag: &'static str,
    pub children: Vec<DocNode>,
}

const CONTAINER_TAGS: [&str; 6] = ["div", "section", "p", "span", "ul", "li"];
const VOID_TAGS: [&str; 2] = ["br", "img"];

pub fn random_doc(rng: &mut ChaCha8Rng, depth: u32) -> Vec<DocNode> {
    let n = rng.random_range(0..=4);
    (0..n)
        .map(|_| {
            if depth == 0 || rng.random_bool(0.2) {
                DocNode { tag: VOID_TAGS[rng.random_range(0..2)], children: vec![] }
            } else {
                DocNode { tag: CONTAINER_TAGS[rng.random_range(0..6)], children: random_doc(rng, depth - 1) }
            }
        })
        .collect()
}

pub fn render_doc(nodes: &[DocNode], out: &mut String) {
    for n in nodes {
        if VOID_TAGS.contains(&n.tag) {
            out.push_str(&format!("<{} alt=\"x\">", n.tag));
        } else {
            out.push_str(&format!("<{} class=\"c\">text ", n.tag));
            render_doc(&n.children, out);
            out.push_str(&format!("</{}>", n.tag));
        }
    }
}

/// (depth, breadth, tag count, distinct tags) by recursion over the tree.
pub fn walk_doc(nodes: &[DocNode]) -> (usize, usize, usize, std::collections::BTreeSet<&'static str>) {
    let mut depth = 0;
    let mut breadth = nodes.len();
    let mut count = nodes.len();
    let mut tags = std::collections::BTreeSet::new();
    for n in nodes {
        tags.insert(n.tag);
        let (d, b, c, t) = walk_doc(&n.children);
        depth = depth.max(d + 1);
        breadth = breadth.max(b);
        count += c;
        tags.extend(t);
    }
    (depth, breadth, count, tags)
}

/// White page with separated solid rectangles, one per chosen grid cell.
/// Returns the image and the drawn rectangles.
pub fn rectangle_page(rng: &mut ChaCha8Rng, width: u32, height: u32) -> (PageImage, Vec<BBox>) {
    let (cols, rows) = (4u32, 3u32);
    let (cw, ch) = (width / cols, height / rows);
    let mut img = PageImage::filled(width, height, [255, 255, 255]).unwrap();
    let mut drawn = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if rng.random_bool(0.35) {
                continue;
            }
            let w = rng.random_range(8..cw - 12);
            let h = rng.random_range(8..ch - 12);
            let c0 = c * cw + rng.random_range(6..=cw - w - 6);
            let r0 = r * ch + rng.random_range(6..=ch - h - 6);
            let b = bx(c0, r0, c0 + w, r0 + h);
            let shade = rng.random_range(0..150u8);
            img.fill_rect(&b, [shade, rng.random_range(0..150), shade / 2]);
            drawn.push(b);
        }
    }
    if drawn.is_empty() {
        let b = bx(10, 10, 30, 30);
        img.fill_rect(&b, [0, 0, 0]);
        drawn.push(b);
    }
    (img, drawn)
}

/// Each drawn box has exactly one detected box within `tol` on every side.
pub fn boxes_match(drawn: &[BBox], found: &[BBox], tol: u32) -> bool {
    let close = |a: &BBox, b: &BBox| a.to_array().iter().zip(b.to_array()).all(|(x, y)| x.abs_diff(y) <= tol);
    drawn.len() == found.len() && drawn.iter().all(|d| found.iter().filter(|f| close(d, f)).count() == 1)
}
