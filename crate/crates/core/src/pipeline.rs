//! End-to-end orchestration: detection, grouping, division, generation and
//! fusion. Errors carry the name of the stage that raised them.

use std::fs;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{code_fusion, generate_snippets, CodegenError, GeneratedPage, GenerationConfig, SnippetClient};
use crate::detection::{
    detect_elements, elements_to_json, resolve_element_overlaps, DetectionError, DetectorConfig, Element, PageImage,
};
use crate::geometry::GeometryError;
use crate::layout::{build_layout_tree, LayoutConfig, LayoutError, LayoutTree};
use crate::relations::{
    build_relation_graph, merge_groups, search_ui_groups, GroupingConfig, GroupsDump, RelationError, UIGroup,
};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("detection: {0}")]
    Detection(#[from] DetectionError),
    #[error("geometry: {0}")]
    Geometry(#[from] GeometryError),
    #[error("relations: {0}")]
    Relations(#[from] RelationError),
    #[error("layout: {0}")]
    Layout(#[from] LayoutError),
    #[error("codegen: {0}")]
    Codegen(#[from] CodegenError),
    #[error("artifacts: {0}")]
    Artifacts(#[from] std::io::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub detector: DetectorConfig,
    pub grouping: GroupingConfig,
    pub layout: LayoutConfig,
    pub generation: GenerationConfig,
    /// When set, every intermediate result is written here as JSON.
    pub artifacts_dir: Option<PathBuf>,
}

/// Everything produced between element detection and code generation.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLayout {
    pub elements: Vec<Element>,
    pub groups: Vec<UIGroup>,
    pub blocks: Vec<Element>,
    pub tree: LayoutTree,
}

/// Smallest page that holds every element.
pub fn page_extent(elements: &[Element]) -> (u32, u32) {
    elements.iter().fold((0, 0), |(w, h), e| (w.max(e.bbox.col_max()), h.max(e.bbox.row_max())))
}

/// Overlap resolution, grouping, merging and division.
pub fn parse_layout(
    elements: Vec<Element>,
    page_width: u32,
    page_height: u32,
    config: &PipelineConfig,
) -> Result<ParsedLayout, PipelineError> {
    let elements = resolve_element_overlaps(elements)?;
    let graph = build_relation_graph(&elements)?;
    let groups = search_ui_groups(&elements, &graph, &config.grouping)?;
    let blocks = merge_groups(&elements, &groups)?;
    let tree = build_layout_tree(&blocks, page_width, page_height, &config.layout)?;
    Ok(ParsedLayout { elements, groups, blocks, tree })
}

pub enum PipelineInput<'a> {
    /// Detect elements from the screenshot itself.
    Image(&'a PageImage),
    /// Use a precomputed element list. Without an image, leaves get blank crops.
    Elements { elements: Vec<Element>, image: Option<&'a PageImage>, page_width: u32, page_height: u32 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub parsed: ParsedLayout,
    pub page: GeneratedPage,
}

pub fn pipeline(
    input: PipelineInput<'_>,
    client: &dyn SnippetClient,
    config: &PipelineConfig,
) -> Result<PipelineOutput, PipelineError> {
    let (elements, image, w, h) = match input {
        PipelineInput::Image(img) => (detect_elements(img, &config.detector)?, Some(img), img.width(), img.height()),
        PipelineInput::Elements { elements, image, page_width, page_height } => {
            (elements, image, page_width, page_height)
        }
    };
    let parsed = parse_layout(elements, w, h, config)?;
    let with_code = generate_snippets(&parsed.tree, image, client, &config.generation)?;
    let page = code_fusion(&with_code)?;
    let out = PipelineOutput { parsed, page };
    if let Some(dir) = &config.artifacts_dir {
        write_artifacts(dir, &out)?;
    }
    Ok(out)
}

fn write_artifacts(dir: &std::path::Path, out: &PipelineOutput) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let groups = GroupsDump { groups: out.parsed.groups.clone() };
    fs::write(dir.join("elements.json"), elements_to_json(&out.parsed.elements) + "\n")?;
    fs::write(dir.join("groups.json"), serde_json::to_string_pretty(&groups).expect("groups serialize") + "\n")?;
    fs::write(dir.join("blocks.json"), elements_to_json(&out.parsed.blocks) + "\n")?;
    fs::write(dir.join("tree.json"), out.parsed.tree.to_json() + "\n")?;
    fs::write(dir.join("tree_with_code.json"), out.page.tree.to_json() + "\n")?;
    fs::write(dir.join("page.html"), &out.page.html)?;
    Ok(())
}
