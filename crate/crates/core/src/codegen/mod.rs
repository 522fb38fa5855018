//! Snippet generation for atomic regions and code fusion into one document.

mod client;
mod fusion;

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use client::{extract_text, ClientError, MockClient, RemoteClient, SnippetClient, SnippetRequest};
pub use fusion::{code_fusion, format_portion, fuse_body, GeneratedPage, STYLESHEET};

use crate::detection::PageImage;
use crate::layout::LayoutTree;

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("ClientError: leaf {node_id}: {source}")]
    Client {
        node_id: usize,
        #[source]
        source: ClientError,
    },
    #[error("MissingCode: leaf {0} has no code")]
    MissingCode(usize),
    #[error("BoundsError: leaf {0} lies outside the image")]
    BoundsError(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationConfig {
    /// Extra attempts after the first failed call.
    pub retries: u32,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_ms: u64,
    /// Upper bound on concurrent requests.
    pub parallelism: usize,
    /// Minimum spacing between request starts, across all workers.
    pub min_interval_ms: u64,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self { retries: 2, backoff_ms: 500, parallelism: 4, min_interval_ms: 0 }
    }
}

const SNIPPET_PROMPT: &str = "\
You are given a screenshot of one rectangular region cut out of a webpage. \
Write the HTML and CSS that reproduces this region. The code will be placed \
inside an existing flex layout, so follow these rules:
1. The code must start with a <div> tag and end with a </div> tag. Return a fragment, never a full document.
2. Do not give any element a fixed width or height; let the surrounding container decide the size.
3. The image proportions should be preserved. Scale images with width: 100% and height: auto instead of pixel sizes.
4. The margin and padding should be set to 0 on the outermost div.
5. Make sure the code does not conflict with the outer divs in layout and style: use inline styles or uniquely prefixed classes, and never style html, body, or generic selectors.
Reply with the code only.";

/// Prompt sent with every region crop.
pub fn build_snippet_prompt() -> &'static str {
    SNIPPET_PROMPT
}

fn fenced_block(text: &str) -> Option<&str> {
    let open = text.find("```")?;
    let after = &text[open + 3..];
    // skip the info string ("html", "jsx", ...)
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    Some(match body.find("```") {
        Some(close) => &body[..close],
        None => body,
    })
}

fn body_inner(text: &str) -> Option<&str> {
    let lower = text.to_ascii_lowercase();
    let open = lower.find("<body")?;
    let content_start = open + lower[open..].find('>')? + 1;
    let close = lower.rfind("</body>").unwrap_or(text.len());
    (close >= content_start).then(|| &text[content_start..close])
}

fn starts_with_div(text: &str) -> bool {
    let lower = text.get(..5).unwrap_or("").to_ascii_lowercase();
    lower.starts_with("<div") && matches!(lower.as_bytes().get(4), Some(b'>' | b' ' | b'\t' | b'\n' | b'\r' | b'/'))
}

/// Reduce raw generator output to a single `<div>...</div>` fragment.
///
/// Takes the first fenced code block if there is one, unwraps a full
/// document to its body, trims prose before the first tag and after the
/// last one, and wraps the result in a div when it is not one already.
pub fn sanitize_snippet(raw: &str) -> Result<String, ClientError> {
    let mut text = raw.trim();
    if let Some(block) = fenced_block(text) {
        text = block.trim();
    }
    if let Some(body) = body_inner(text) {
        text = body.trim();
    }
    let (Some(start), Some(end)) = (text.find('<'), text.rfind('>')) else {
        return Err(ClientError::EmptyResponse);
    };
    if end < start {
        return Err(ClientError::EmptyResponse);
    }
    let text = text[start..=end].trim();
    if starts_with_div(text) && text.to_ascii_lowercase().ends_with("</div>") {
        Ok(text.to_string())
    } else {
        Ok(format!("<div>{text}</div>"))
    }
}

struct RateLimiter {
    interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn wait(&self) {
        if self.interval.is_zero() {
            return;
        }
        let mut last = self.last.lock().unwrap();
        if let Some(prev) = *last {
            let ready = prev + self.interval;
            let now = Instant::now();
            if ready > now {
                thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }
}

fn generate_one(
    node_id: usize,
    request: SnippetRequest,
    client: &dyn SnippetClient,
    config: &GenerationConfig,
    limiter: &RateLimiter,
) -> Result<String, CodegenError> {
    let mut attempt = 0;
    loop {
        limiter.wait();
        let result = client.generate(&request).and_then(|raw| sanitize_snippet(&raw));
        match result {
            Ok(html) => return Ok(html),
            Err(e) if attempt < config.retries => {
                let delay = config.backoff_ms.saturating_mul(1 << attempt.min(16));
                warn!("leaf {node_id}: attempt {} failed ({e}); retrying in {delay} ms", attempt + 1);
                thread::sleep(Duration::from_millis(delay));
                attempt += 1;
            }
            Err(source) => return Err(CodegenError::Client { node_id, source }),
        }
    }
}

/// Generate and attach code for every atomic leaf.
///
/// Leaves are cropped from `image` at their positions; without an image a
/// blank crop of the right size is used. Requests run on up to
/// `config.parallelism` threads and results are keyed by leaf index, so the
/// returned tree does not depend on completion order. Any leaf that still
/// fails after its retries aborts the whole run.
pub fn generate_snippets(
    tree: &LayoutTree,
    image: Option<&PageImage>,
    client: &dyn SnippetClient,
    config: &GenerationConfig,
) -> Result<LayoutTree, CodegenError> {
    let prompt = build_snippet_prompt();
    let positions: Vec<_> = tree.root.leaves().iter().map(|l| l.position).collect();
    let mut requests = Vec::with_capacity(positions.len());
    for (node_id, pos) in positions.iter().enumerate() {
        let crop = match image {
            Some(img) => img.crop(pos).ok_or(CodegenError::BoundsError(node_id))?,
            None => PageImage::filled(pos.width(), pos.height(), [255, 255, 255]).expect("leaf boxes are non-empty"),
        };
        requests.push(Mutex::new(Some(SnippetRequest { node_id, crop, prompt: prompt.to_string() })));
    }

    let n = requests.len();
    let results: Vec<Mutex<Option<Result<String, CodegenError>>>> = (0..n).map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let limiter = RateLimiter { interval: Duration::from_millis(config.min_interval_ms), last: Mutex::new(None) };
    let workers = config.parallelism.clamp(1, n.max(1));

    thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if failed.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let request = requests[i].lock().unwrap().take().expect("each request is taken once");
                let r = generate_one(i, request, client, config, &limiter);
                if r.is_err() {
                    failed.store(true, Ordering::SeqCst);
                }
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    // Workers take indices in order, so the lowest failing index is always
    // among the attempted ones.
    let mut codes = Vec::with_capacity(n);
    for (i, slot) in results.into_iter().enumerate() {
        match slot.into_inner().unwrap() {
            Some(Ok(code)) => codes.push(code),
            Some(Err(e)) => return Err(e),
            None => unreachable!("leaf {i} skipped without an earlier failure"),
        }
    }

    let mut out = tree.clone();
    for (leaf, code) in out.root.leaves_mut().into_iter().zip(codes) {
        leaf.code = Some(code);
    }
    Ok(out)
}
