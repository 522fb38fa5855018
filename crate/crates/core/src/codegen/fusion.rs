use std::fmt::Write as _;

use super::CodegenError;
use crate::layout::{LayoutNode, LayoutTree, NodeType};

/// Fused document plus the tree it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedPage {
    pub html: String,
    pub tree: LayoutTree,
}

pub const STYLESHEET: &str = "\
body{margin:0;padding:0;}
.row{display:flex;flex-direction:row;}
.column{display:flex;flex-direction:column;}
.atomic{overflow:hidden;}
.root{width:100%;}
";

/// Shortest decimal with at most four fraction digits: `1`, `0.3`, `0.1235`.
pub fn format_portion(portion: f64) -> String {
    let s = format!("{portion:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    s.to_string()
}

fn process_node(
    node: &LayoutNode,
    is_root: bool,
    next_leaf: &mut usize,
    html: &mut String,
) -> Result<(), CodegenError> {
    let portion = format_portion(node.portion);
    match node.node_type {
        NodeType::Row | NodeType::Column => {
            let class = if node.node_type == NodeType::Row { "row" } else { "column" };
            let root = if is_root { " root" } else { "" };
            writeln!(html, "<div class=\"{class}{root}\" style=\"flex: {portion};\">").unwrap();
            for child in &node.children {
                process_node(child, false, next_leaf, html)?;
            }
            html.push_str("</div>\n");
        }
        NodeType::Atomic => {
            let id = *next_leaf;
            *next_leaf += 1;
            let code = node.code.as_deref().ok_or(CodegenError::MissingCode(id))?;
            writeln!(html, "<div class=\"atomic\" style=\"flex: {portion};\">{code}</div>").unwrap();
        }
    }
    Ok(())
}

/// Body markup for a code-bearing tree: nested flex containers with each
/// leaf's snippet wrapped in an atomic div.
pub fn fuse_body(tree: &LayoutTree) -> Result<String, CodegenError> {
    let mut html = String::new();
    let mut next_leaf = 0;
    process_node(&tree.root, true, &mut next_leaf, &mut html)?;
    Ok(html)
}

/// Full HTML document for a tree whose leaves all carry code.
pub fn code_fusion(tree: &LayoutTree) -> Result<GeneratedPage, CodegenError> {
    let body = fuse_body(tree)?;
    let mut html = String::with_capacity(body.len() + 256);
    html.push_str("<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<style>\n");
    html.push_str(STYLESHEET);
    html.push_str("</style>\n</head>\n<body>\n");
    html.push_str(&body);
    html.push_str("</body>\n</html>\n");
    Ok(GeneratedPage { html, tree: tree.clone() })
}
