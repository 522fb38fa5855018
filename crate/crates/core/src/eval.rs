//! Evaluation: HTML tokenization, BLEU, page-complexity statistics and
//! layout-tree comparison.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detection::PageImage;
use crate::layout::{LayoutNode, LayoutTree};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("EmptyReference: the reference has no tokens")]
    EmptyReference,
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("EmbeddingError: {0}")]
    Embedding(String),
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Split free text into words and single punctuation marks.
fn push_words(text: &str, out: &mut Vec<String>) {
    let mut word = String::new();
    for c in text.chars() {
        if is_word_char(c) {
            word.push(c);
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !c.is_whitespace() {
            out.push(c.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
}

/// Tokens of an HTML string.
///
/// Tags become `<name` / `</name` plus a closing `>` (or `/>`); attribute
/// names and values are separate tokens with `=` and quotes dropped, and
/// values and text are split into words and punctuation. Comments are
/// skipped.
///
/// ```
/// use layoutfuse::eval::tokenize_html;
/// assert_eq!(tokenize_html("<p>hi</p>"), ["<p", ">", "hi", "</p", ">"]);
/// ```
pub fn tokenize_html(html: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut rest = html;
    while !rest.is_empty() {
        if let Some(after) = rest.strip_prefix("<!--") {
            rest = after.find("-->").map_or("", |i| &after[i + 3..]);
            continue;
        }
        let starts_tag = rest.starts_with('<')
            && rest[1..].chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '/' || c == '!');
        if !starts_tag {
            let end = rest[1..].find('<').map_or(rest.len(), |i| i + 1);
            push_words(&rest[..end], &mut out);
            rest = &rest[end..];
            continue;
        }
        let close = rest.find('>').unwrap_or(rest.len());
        let inner = &rest[1..close];
        let (slash, body) = match inner.strip_prefix('/') {
            Some(b) => ("/", b),
            None => ("", inner),
        };
        let name_len = body.find(|c: char| c.is_whitespace() || c == '/').unwrap_or(body.len());
        out.push(format!("<{slash}{}", &body[..name_len]));
        let mut attrs = &body[name_len..];
        let self_closing = attrs.trim_end().ends_with('/');
        if self_closing {
            attrs = attrs.trim_end().strip_suffix('/').unwrap_or(attrs);
        }
        push_attributes(attrs, &mut out);
        if close < rest.len() {
            out.push(if self_closing { "/>".into() } else { ">".into() });
            rest = &rest[close + 1..];
        } else {
            rest = "";
        }
    }
    out
}

fn push_attributes(attrs: &str, out: &mut Vec<String>) {
    let mut chars = attrs.char_indices().peekable();
    while let Some(&(i, c)) = chars.peek() {
        if c.is_whitespace() || c == '=' {
            chars.next();
            continue;
        }
        if c == '"' || c == '\'' {
            chars.next();
            let start = i + 1;
            let end = attrs[start..].find(c).map_or(attrs.len(), |j| start + j);
            push_words(&attrs[start..end], out);
            while chars.peek().is_some_and(|&(j, _)| j <= end) {
                chars.next();
            }
            continue;
        }
        let start = i;
        while chars.peek().is_some_and(|&(_, d)| !d.is_whitespace() && d != '=') {
            chars.next();
        }
        let end = chars.peek().map_or(attrs.len(), |&(j, _)| j);
        out.push(attrs[start..end].to_string());
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Smoothing {
    None,
    /// Zero match counts are replaced by this value.
    AddEpsilon(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuConfig {
    pub max_n: usize,
    /// One weight per order; uniform when absent.
    pub weights: Option<Vec<f64>>,
    pub smoothing: Smoothing,
}

impl Default for BleuConfig {
    fn default() -> Self {
        Self { max_n: 4, weights: None, smoothing: Smoothing::AddEpsilon(1e-9) }
    }
}

impl BleuConfig {
    pub fn with_max_n(max_n: usize) -> Self {
        Self { max_n, ..Self::default() }
    }

    fn resolved_weights(&self) -> Result<Vec<f64>, EvalError> {
        if self.max_n == 0 {
            return Err(EvalError::InvalidConfig("max_n must be at least 1".into()));
        }
        match &self.weights {
            None => Ok(vec![1.0 / self.max_n as f64; self.max_n]),
            Some(w) if w.len() != self.max_n => {
                Err(EvalError::InvalidConfig(format!("{} weights for max_n {}", w.len(), self.max_n)))
            }
            Some(w) if (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 || w.iter().any(|x| *x < 0.0) => {
                Err(EvalError::InvalidConfig("weights must be non-negative and sum to 1".into()))
            }
            Some(w) => Ok(w.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuReport {
    pub score: f64,
    /// Clipped precision per order; `None` where the candidate is too short
    /// to have n-grams of that order.
    pub precisions: Vec<Option<f64>>,
    pub bp: f64,
    pub candidate_len: usize,
    pub reference_len: usize,
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    for g in tokens.windows(n) {
        *m.entry(g).or_insert(0) += 1;
    }
    m
}

/// Sentence-level BLEU of `candidate` against a single `reference`.
///
/// Orders longer than the candidate have no n-grams at all; they are
/// dropped and the remaining weights renormalized. An empty candidate
/// scores 0.
pub fn bleu(candidate: &[String], reference: &[String], config: &BleuConfig) -> Result<BleuReport, EvalError> {
    let weights = config.resolved_weights()?;
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let (c, r) = (candidate.len(), reference.len());
    let bp = if c == 0 {
        0.0
    } else if c >= r {
        1.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let mut precisions = Vec::with_capacity(config.max_n);
    let mut log_sum = 0.0;
    let mut weight_used = 0.0;
    let mut zero = false;
    for (i, w) in weights.iter().enumerate() {
        let n = i + 1;
        if c < n {
            precisions.push(None);
            continue;
        }
        let cand = ngram_counts(candidate, n);
        let refc = if r >= n { ngram_counts(reference, n) } else { HashMap::new() };
        let matched: usize = cand.iter().map(|(g, k)| (*k).min(refc.get(g).copied().unwrap_or(0))).sum();
        let total = c + 1 - n;
        let p = match (matched, config.smoothing) {
            (0, Smoothing::AddEpsilon(eps)) => eps / total as f64,
            (0, Smoothing::None) => {
                zero = true;
                0.0
            }
            (m, _) => m as f64 / total as f64,
        };
        precisions.push(Some(p));
        if p > 0.0 {
            log_sum += w * p.ln();
        }
        weight_used += w;
    }
    let score = if c == 0 || zero || weight_used == 0.0 { 0.0 } else { bp * (log_sum / weight_used).exp() };
    Ok(BleuReport { score: score.clamp(0.0, 1.0), precisions, bp, candidate_len: c, reference_len: r })
}

/// BLEU on raw HTML strings, tokenized with [`tokenize_html`].
pub fn bleu_html(candidate: &str, reference: &str, config: &BleuConfig) -> Result<BleuReport, EvalError> {
    bleu(&tokenize_html(candidate), &tokenize_html(reference), config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageStats {
    pub dom_depth: usize,
    pub dom_breadth: usize,
    pub tag_count: usize,
    pub unique_tags: usize,
    pub length_tokens: usize,
    pub aspect_ratio: f64,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

const VOID_ELEMENTS: &[&str] =
    &["area", "base", "br", "col", "embed", "hr", "img", "input", "link", "meta", "param", "source", "track", "wbr"];

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tag {
    Open { name: String, self_closing: bool },
    Close(String),
}

/// Start and end tags in document order. Comments, doctype and the contents
/// of `script` / `style` are skipped.
fn scan_tags(html: &str) -> Vec<Tag> {
    let mut tags = Vec::new();
    let mut rest = html;
    while let Some(lt) = rest.find('<') {
        rest = &rest[lt..];
        if let Some(after) = rest.strip_prefix("<!--") {
            rest = after.find("-->").map_or("", |i| &after[i + 3..]);
            continue;
        }
        let Some(gt) = rest.find('>') else { break };
        let inner = &rest[1..gt];
        rest = &rest[gt + 1..];
        if inner.starts_with('!') || inner.starts_with('?') {
            continue;
        }
        let (closing, body) = match inner.strip_prefix('/') {
            Some(b) => (true, b),
            None => (false, inner),
        };
        let name: String =
            body.chars().take_while(|c| !c.is_whitespace() && *c != '/').collect::<String>().to_ascii_lowercase();
        if name.is_empty() || !name.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        if closing {
            tags.push(Tag::Close(name));
            continue;
        }
        let raw_text = name == "script" || name == "style";
        tags.push(Tag::Open { name: name.clone(), self_closing: body.trim_end().ends_with('/') });
        if raw_text {
            let end = format!("</{name}");
            match rest.to_ascii_lowercase().find(&end) {
                Some(i) => rest = &rest[i..],
                None => rest = "",
            }
        }
    }
    tags
}

/// Complexity statistics of an HTML document rendered at
/// `image_width` x `image_height`.
pub fn page_stats(html: &str, image_height: u32, image_width: u32) -> PageStats {
    let mut warnings = Vec::new();
    let mut stack: Vec<(String, usize)> = Vec::new();
    let mut top_children = 0usize;
    let (mut depth, mut breadth, mut tag_count) = (0, 0, 0);
    let mut names = BTreeSet::new();

    fn bump(stack: &mut [(String, usize)], top: &mut usize, breadth: &mut usize) {
        let slot = match stack.last_mut() {
            Some((_, k)) => k,
            None => top,
        };
        *slot += 1;
        *breadth = (*breadth).max(*slot);
    }

    for tag in scan_tags(html) {
        match tag {
            Tag::Open { name, self_closing } => {
                tag_count += 1;
                names.insert(name.clone());
                bump(&mut stack, &mut top_children, &mut breadth);
                depth = depth.max(stack.len() + 1);
                if !self_closing && !VOID_ELEMENTS.contains(&name.as_str()) {
                    stack.push((name, 0));
                }
            }
            Tag::Close(name) => {
                if VOID_ELEMENTS.contains(&name.as_str()) {
                    continue;
                }
                match stack.iter().rposition(|(n, _)| *n == name) {
                    Some(pos) => {
                        for (n, _) in stack.drain(pos + 1..).rev() {
                            warnings.push(format!("auto-closed <{n}> before </{name}>"));
                        }
                        stack.pop();
                    }
                    None => warnings.push(format!("ignored stray </{name}>")),
                }
            }
        }
    }
    for (n, _) in stack.iter().rev() {
        warnings.push(format!("auto-closed <{n}> at end of document"));
    }
    PageStats {
        dom_depth: depth,
        dom_breadth: breadth,
        tag_count,
        unique_tags: names.len(),
        length_tokens: tokenize_html(html).len(),
        aspect_ratio: if image_width == 0 { 0.0 } else { image_height as f64 / image_width as f64 },
        warnings,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSimilarity {
    pub structural_equal: bool,
    pub node_count_a: usize,
    pub node_count_b: usize,
    /// Child-index path to the first differing node, `[]` for the root.
    pub first_divergence: Option<Vec<usize>>,
}

pub const PORTION_TOLERANCE: f64 = 0.05;

fn first_difference(a: &LayoutNode, b: &LayoutNode, path: &mut Vec<usize>) -> bool {
    if a.node_type != b.node_type
        || a.children.len() != b.children.len()
        || (a.portion - b.portion).abs() > PORTION_TOLERANCE
    {
        return true;
    }
    for (i, (x, y)) in a.children.iter().zip(&b.children).enumerate() {
        path.push(i);
        if first_difference(x, y, path) {
            return true;
        }
        path.pop();
    }
    false
}

/// Depth-first comparison of node types, child counts and portions.
pub fn tree_similarity(a: &LayoutTree, b: &LayoutTree) -> TreeSimilarity {
    let mut path = Vec::new();
    let differs = first_difference(&a.root, &b.root, &mut path);
    TreeSimilarity {
        structural_equal: !differs,
        node_count_a: a.root.node_count(),
        node_count_b: b.root.node_count(),
        first_divergence: differs.then_some(path),
    }
}

/// Largest coordinate difference between corresponding node positions, or
/// `None` when the trees differ in shape.
pub fn max_position_deviation(a: &LayoutTree, b: &LayoutTree) -> Option<u32> {
    fn walk(a: &LayoutNode, b: &LayoutNode) -> Option<u32> {
        if a.children.len() != b.children.len() {
            return None;
        }
        let here = a.position.to_array().iter().zip(b.position.to_array()).map(|(x, y)| x.abs_diff(y)).max()?;
        a.children.iter().zip(&b.children).try_fold(here, |m, (x, y)| Some(m.max(walk(x, y)?)))
    }
    walk(&a.root, &b.root)
}

/// Maps a rendered page to a feature vector, e.g. an external CLIP encoder.
pub trait ImageEmbedder {
    fn embed(&self, image: &PageImage) -> Result<Vec<f32>, EvalError>;
}

pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f64, EvalError> {
    if a.len() != b.len() || a.is_empty() {
        return Err(EvalError::Embedding(format!("cannot compare vectors of length {} and {}", a.len(), b.len())));
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    let na: f64 = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(EvalError::Embedding("zero vector".into()));
    }
    Ok(dot / (na * nb))
}

/// Cosine similarity of two screenshots under `embedder`.
pub fn embedding_similarity(embedder: &dyn ImageEmbedder, a: &PageImage, b: &PageImage) -> Result<f64, EvalError> {
    cosine_similarity(&embedder.embed(a)?, &embedder.embed(b)?)
}
