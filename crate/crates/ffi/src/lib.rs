//! C ABI over the layoutfuse pipeline.
//!
//! Every fallible function returns an [`LfStatus`]; on failure the message is
//! kept per thread and can be read with [`lf_last_error_message`]. Handles are
//! opaque and must be released with their matching `*_free` function. Strings
//! returned through out-parameters are owned by the caller and released with
//! [`lf_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use layoutfuse::codegen::{code_fusion, generate_snippets, GenerationConfig, MockClient};
use layoutfuse::detection::{parse_elements, Element};
use layoutfuse::eval::{bleu_html, BleuConfig};
use layoutfuse::layout::LayoutTree;
use layoutfuse::pipeline::{parse_layout, PipelineConfig, PipelineError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LfStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    /// JSON input did not match its schema.
    InvalidInput = 3,
    Layout = 4,
    Codegen = 5,
    Eval = 6,
    OutOfRange = 7,
    Panic = 99,
}

/// Element list parsed from JSON.
pub struct LfElements {
    inner: Vec<Element>,
}

/// Layout tree, optionally carrying per-leaf code.
pub struct LfTree {
    inner: LayoutTree,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

type Outcome = Result<(), (LfStatus, String)>;

fn guard(f: impl FnOnce() -> Outcome) -> LfStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LfStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside layoutfuse");
            LfStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, (LfStatus, String)> {
    if p.is_null() {
        return Err((LfStatus::NullArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (LfStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn null(what: &str) -> (LfStatus, String) {
    (LfStatus::NullArgument, format!("{what} is null"))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Outcome {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|e| (LfStatus::InvalidInput, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn stage_status(e: &PipelineError) -> LfStatus {
    match e {
        PipelineError::Codegen(_) => LfStatus::Codegen,
        PipelineError::Detection(_) => LfStatus::InvalidInput,
        _ => LfStatus::Layout,
    }
}

/// Message of the last failed call on this thread, or NULL. The pointer is
/// valid until the next layoutfuse call on the same thread.
#[no_mangle]
pub extern "C" fn lf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must come from a layoutfuse out-parameter and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn lf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parse an element list (`[{"id", "kind", "bbox"}]`).
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn lf_elements_from_json(json: *const c_char, out: *mut *mut LfElements) -> LfStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = parse_elements(text).map_err(|e| (LfStatus::InvalidInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(LfElements { inner }));
        Ok(())
    })
}

/// # Safety
/// `elements` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_elements_len(elements: *const LfElements) -> usize {
    elements.as_ref().map_or(0, |e| e.inner.len())
}

/// # Safety
/// `elements` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lf_elements_free(elements: *mut LfElements) {
    if !elements.is_null() {
        drop(Box::from_raw(elements));
    }
}

/// Group and divide `elements` on a `width` x `height` page. `config_json`
/// may be NULL for defaults, or a JSON object with any of the `grouping`,
/// `layout` and `generation` sections.
///
/// # Safety
/// `elements` must be a live handle, `config_json` NULL or NUL-terminated,
/// and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lf_layout_parse(
    elements: *const LfElements,
    width: u32,
    height: u32,
    config_json: *const c_char,
    out: *mut *mut LfTree,
) -> LfStatus {
    guard(|| {
        let elements = elements.as_ref().ok_or_else(|| null("elements"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let config: PipelineConfig = if config_json.is_null() {
            PipelineConfig::default()
        } else {
            serde_json::from_str(read_str(config_json, "config_json")?)
                .map_err(|e| (LfStatus::InvalidInput, e.to_string()))?
        };
        let parsed = parse_layout(elements.inner.clone(), width, height, &config)
            .map_err(|e| (stage_status(&e), e.to_string()))?;
        *out = Box::into_raw(Box::new(LfTree { inner: parsed.tree }));
        Ok(())
    })
}

/// # Safety
/// `json` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_from_json(json: *const c_char, out: *mut *mut LfTree) -> LfStatus {
    guard(|| {
        let text = read_str(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = LayoutTree::from_json(text).map_err(|e| (LfStatus::InvalidInput, e.to_string()))?;
        *out = Box::into_raw(Box::new(LfTree { inner }));
        Ok(())
    })
}

/// # Safety
/// `tree` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_to_json(tree: *const LfTree, out: *mut *mut c_char) -> LfStatus {
    guard(|| {
        let tree = tree.as_ref().ok_or_else(|| null("tree"))?;
        write_string(out, tree.inner.to_json())
    })
}

/// # Safety
/// `tree` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_leaf_count(tree: *const LfTree) -> usize {
    tree.as_ref().map_or(0, |t| t.inner.leaf_count())
}

/// Attach `code` to the leaf with depth-first index `leaf`.
///
/// # Safety
/// `tree` must be a live handle and `code` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_set_leaf_code(tree: *mut LfTree, leaf: usize, code: *const c_char) -> LfStatus {
    guard(|| {
        let tree = tree.as_mut().ok_or_else(|| null("tree"))?;
        let code = read_str(code, "code")?.to_string();
        let mut leaves = tree.inner.root.leaves_mut();
        let n = leaves.len();
        let slot = leaves
            .get_mut(leaf)
            .ok_or_else(|| (LfStatus::OutOfRange, format!("leaf {leaf} out of range, tree has {n}")))?;
        slot.code = Some(code);
        Ok(())
    })
}

/// Fill every leaf with deterministic placeholder code.
///
/// # Safety
/// `tree` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_generate_mock(tree: *mut LfTree) -> LfStatus {
    guard(|| {
        let tree = tree.as_mut().ok_or_else(|| null("tree"))?;
        let with_code = generate_snippets(&tree.inner, None, &MockClient, &GenerationConfig::default())
            .map_err(|e| (LfStatus::Codegen, e.to_string()))?;
        tree.inner = with_code;
        Ok(())
    })
}

/// Fuse a tree whose leaves all carry code into an HTML document.
///
/// # Safety
/// `tree` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_fuse(tree: *const LfTree, out: *mut *mut c_char) -> LfStatus {
    guard(|| {
        let tree = tree.as_ref().ok_or_else(|| null("tree"))?;
        let page = code_fusion(&tree.inner).map_err(|e| (LfStatus::Codegen, e.to_string()))?;
        write_string(out, page.html)
    })
}

/// # Safety
/// `tree` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lf_tree_free(tree: *mut LfTree) {
    if !tree.is_null() {
        drop(Box::from_raw(tree));
    }
}

/// BLEU-`max_n` of two HTML strings with uniform weights.
///
/// # Safety
/// Both strings must be NUL-terminated and `score` writable.
#[no_mangle]
pub unsafe extern "C" fn lf_bleu_html(
    candidate: *const c_char,
    reference: *const c_char,
    max_n: usize,
    score: *mut f64,
) -> LfStatus {
    guard(|| {
        let cand = read_str(candidate, "candidate")?;
        let refr = read_str(reference, "reference")?;
        if score.is_null() {
            return Err(null("score"));
        }
        let r = bleu_html(cand, refr, &BleuConfig::with_max_n(max_n)).map_err(|e| (LfStatus::Eval, e.to_string()))?;
        *score = r.score;
        Ok(())
    })
}
