//! Command-line front end. Each stage reads and writes the JSON artifacts of
//! its neighbours, and `run` chains them in-process.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::{
    code_fusion, generate_snippets, CodegenError, GenerationConfig, MockClient, RemoteClient, SnippetClient,
};
use crate::detection::{detect_elements, load_elements, save_elements, DetectionError, DetectorConfig, PageImage};
use crate::eval::{bleu_html, page_stats, BleuConfig, EvalError};
use crate::layout::{render_division_overlay, LayoutConfig, LayoutError, LayoutTree};
use crate::pipeline::{page_extent, parse_layout, ParsedLayout, PipelineConfig, PipelineError};
use crate::relations::{GroupingConfig, GroupsDump};
use crate::synth::{random_layout, render_boxes, render_png, LeafFill, SynthConfig, SynthError};

pub const DEFAULT_KEY_ENV: &str = "LAYOUTFUSE_API_KEY";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Pipeline(#[from] PipelineError),
    #[error("config: {0}")]
    Config(String),
    #[error("synth: {0}")]
    Synth(#[from] SynthError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

macro_rules! stage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Pipeline(e.into())
            }
        }
    )*};
}
stage_from!(DetectionError, LayoutError, CodegenError);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ClientKind {
    Mock,
    #[default]
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClientConfig {
    pub kind: ClientKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    pub key_env: String,
    pub timeout_secs: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            kind: ClientKind::Remote,
            endpoint: None,
            model: None,
            key_env: DEFAULT_KEY_ENV.into(),
            timeout_secs: 120,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputConfig {
    /// Directory for intermediate JSON of `run`.
    pub artifacts_dir: Option<PathBuf>,
    /// Division overlay written by `parse`.
    pub overlay: Option<PathBuf>,
}

/// Everything the config file can set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub detector: DetectorConfig,
    pub grouping: GroupingConfig,
    pub layout: LayoutConfig,
    pub generation: GenerationConfig,
    pub client: ClientConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            detector: self.detector,
            grouping: self.grouping,
            layout: self.layout,
            generation: self.generation,
            artifacts_dir: self.output.artifacts_dir.clone(),
        }
    }

    pub fn build_client(&self) -> Result<Box<dyn SnippetClient>, CliError> {
        match self.client.kind {
            ClientKind::Mock => Ok(Box::new(MockClient)),
            ClientKind::Remote => {
                let endpoint = self.client.endpoint.clone().ok_or_else(|| {
                    CliError::Config("the remote client needs an endpoint (client.endpoint or --endpoint); use --mock for offline runs".into())
                })?;
                let model = self
                    .client
                    .model
                    .clone()
                    .ok_or_else(|| CliError::Config("the remote client needs a model name".into()))?;
                let c = RemoteClient::from_env(
                    endpoint,
                    model,
                    &self.client.key_env,
                    Duration::from_secs(self.client.timeout_secs),
                )
                .map_err(|e| CliError::Config(e.to_string()))?;
                Ok(Box::new(c))
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "layoutfuse", version, about = "Turn webpage screenshots into flex-layout HTML")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Log at info level (RUST_LOG takes precedence).
    #[arg(short, long, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect UI elements in a screenshot.
    Detect {
        #[arg(long)]
        image: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: DetectFlags,
    },
    /// Group elements and divide the page into a layout tree.
    Parse {
        #[arg(long)]
        elements: PathBuf,
        #[command(flatten)]
        page: PageFlags,
        /// Write the division overlay here (requires --image).
        #[arg(long)]
        overlay: Option<PathBuf>,
        /// Also write groups.json and blocks.json here.
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        tuning: ParseFlags,
    },
    /// Generate code for every leaf of a layout tree.
    Generate {
        #[arg(long)]
        tree: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientFlags,
    },
    /// Fuse a code-bearing tree into one HTML document.
    Fuse {
        #[arg(long)]
        tree: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline from a screenshot or an element list.
    Run {
        #[arg(long, required_unless_present = "elements")]
        image: Option<PathBuf>,
        #[arg(long)]
        elements: Option<PathBuf>,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        artifacts: Option<PathBuf>,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        detect: DetectFlags,
        #[command(flatten)]
        tuning: ParseFlags,
        #[command(flatten)]
        client: ClientFlags,
    },
    /// Write a random synthetic layout with its rendered elements.
    Synth {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        #[arg(long, value_enum, default_value_t = FillArg::OneBox)]
        fill: FillArg,
        #[arg(long, default_value_t = 1512)]
        width: u32,
        #[arg(long, default_value_t = 1000)]
        height: u32,
        #[arg(long)]
        max_children: Option<u32>,
        #[arg(long)]
        gap: Option<u32>,
        #[arg(long)]
        min_leaf: Option<u32>,
        #[arg(long)]
        tree_out: PathBuf,
        #[arg(long)]
        elements_out: PathBuf,
        #[arg(long)]
        png_out: Option<PathBuf>,
    },
    /// Scoring and page statistics.
    Eval {
        #[command(subcommand)]
        what: EvalCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// BLEU of a generated page against a reference page.
    Bleu {
        #[arg(long = "ref")]
        reference: PathBuf,
        #[arg(long = "gen")]
        generated: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_n: usize,
    },
    /// Complexity statistics of a page and its screenshot.
    Stats {
        #[arg(long)]
        html: PathBuf,
        #[arg(long)]
        image: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FillArg {
    OneBox,
    AlignedGrid,
}

impl From<FillArg> for LeafFill {
    fn from(f: FillArg) -> Self {
        match f {
            FillArg::OneBox => LeafFill::OneBox,
            FillArg::AlignedGrid => LeafFill::AlignedGrid,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct DetectFlags {
    #[arg(long)]
    pub gradient_threshold: Option<u8>,
    #[arg(long)]
    pub dilation_radius: Option<u32>,
    #[arg(long)]
    pub min_area: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct PageFlags {
    /// Screenshot; sets the page size.
    #[arg(long)]
    pub image: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ParseFlags {
    #[arg(long)]
    pub align_tol: Option<u32>,
    #[arg(long)]
    pub spacing_tol: Option<u32>,
    #[arg(long)]
    pub size_tol: Option<u32>,
    #[arg(long)]
    pub min_gap: Option<u32>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct ClientFlags {
    /// Use the offline placeholder generator.
    #[arg(long)]
    pub mock: bool,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable that holds the API key.
    #[arg(long)]
    pub key_env: Option<String>,
    #[arg(long)]
    pub parallelism: Option<usize>,
    #[arg(long)]
    pub retries: Option<u32>,
}

impl DetectFlags {
    fn apply(&self, c: &mut RunConfig) {
        let d = &mut c.detector;
        d.gradient_threshold = self.gradient_threshold.unwrap_or(d.gradient_threshold);
        d.dilation_radius = self.dilation_radius.unwrap_or(d.dilation_radius);
        d.min_area = self.min_area.unwrap_or(d.min_area);
    }
}

impl ParseFlags {
    fn apply(&self, c: &mut RunConfig) {
        let g = &mut c.grouping;
        g.align_tol_px = self.align_tol.unwrap_or(g.align_tol_px);
        g.spacing_tol_px = self.spacing_tol.unwrap_or(g.spacing_tol_px);
        g.size_tol_px = self.size_tol.unwrap_or(g.size_tol_px);
        c.layout.min_gap_px = self.min_gap.unwrap_or(c.layout.min_gap_px);
    }
}

impl ClientFlags {
    fn apply(&self, c: &mut RunConfig) {
        if self.mock {
            c.client.kind = ClientKind::Mock;
        }
        if let Some(e) = &self.endpoint {
            c.client.endpoint = Some(e.clone());
        }
        if let Some(m) = &self.model {
            c.client.model = Some(m.clone());
        }
        if let Some(k) = &self.key_env {
            c.client.key_env = k.clone();
        }
        c.generation.parallelism = self.parallelism.unwrap_or(c.generation.parallelism);
        c.generation.retries = self.retries.unwrap_or(c.generation.retries);
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => fs::write(p, text).map_err(|source| CliError::Io { path: p.into(), source }),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("result types serialize") + "\n"
}

fn page_size(page: &PageFlags, image: Option<&PageImage>, elements: &[crate::detection::Element]) -> (u32, u32) {
    let (ew, eh) = page_extent(elements);
    let (iw, ih) = image.map_or((ew, eh), |i| (i.width(), i.height()));
    (page.width.unwrap_or(iw), page.height.unwrap_or(ih))
}

fn parse_stage(
    elements: &Path,
    page: &PageFlags,
    config: &RunConfig,
) -> Result<(ParsedLayout, Option<PageImage>), CliError> {
    let elements = load_elements(elements)?;
    let image = page.image.as_ref().map(PageImage::load_png).transpose()?;
    let (w, h) = page_size(page, image.as_ref(), &elements);
    Ok((parse_layout(elements, w, h, &config.pipeline_config())?, image))
}

fn synth_config(
    depth: u32,
    seed: u64,
    fill: FillArg,
    max_children: Option<u32>,
    gap: Option<u32>,
    min_leaf: Option<u32>,
) -> SynthConfig {
    let d = SynthConfig::default();
    SynthConfig {
        seed,
        max_depth: depth,
        max_children: max_children.unwrap_or(d.max_children),
        gap_px: gap.unwrap_or(d.gap_px),
        min_leaf_px: min_leaf.unwrap_or(d.min_leaf_px),
        leaf_fill: fill.into(),
    }
}

/// Execute one parsed command line.
pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Detect { image, out, tuning } => {
            tuning.apply(&mut config);
            let img = PageImage::load_png(&image)?;
            let elements = detect_elements(&img, &config.detector)?;
            emit(out.as_deref(), &(crate::detection::elements_to_json(&elements) + "\n"))
        }
        Command::Parse { elements, page, overlay, artifacts, out, tuning } => {
            tuning.apply(&mut config);
            let (parsed, image) = parse_stage(&elements, &page, &config)?;
            if let Some(p) = overlay.or(config.output.overlay.clone()) {
                let img = image.ok_or_else(|| CliError::Config("--overlay needs --image".into()))?;
                render_division_overlay(&parsed.tree, &img)?.save_png(&p)?;
            }
            if let Some(dir) = artifacts {
                fs::create_dir_all(&dir).map_err(|source| CliError::Io { path: dir.clone(), source })?;
                let groups = GroupsDump { groups: parsed.groups.clone() };
                emit(Some(&dir.join("groups.json")), &json_line(&groups))?;
                save_elements(dir.join("blocks.json"), &parsed.blocks)?;
            }
            emit(out.as_deref(), &(parsed.tree.to_json() + "\n"))
        }
        Command::Generate { tree, image, out, client } => {
            client.apply(&mut config);
            let tree = LayoutTree::load(&tree)?;
            let image = image.as_ref().map(PageImage::load_png).transpose()?;
            let generator = config.build_client()?;
            let with_code = generate_snippets(&tree, image.as_ref(), generator.as_ref(), &config.generation)?;
            emit(out.as_deref(), &(with_code.to_json() + "\n"))
        }
        Command::Fuse { tree, out } => {
            let tree = LayoutTree::load(&tree)?;
            emit(out.as_deref(), &code_fusion(&tree)?.html)
        }
        Command::Run { image, elements, width, height, artifacts, out, detect, tuning, client } => {
            detect.apply(&mut config);
            tuning.apply(&mut config);
            client.apply(&mut config);
            if artifacts.is_some() {
                config.output.artifacts_dir = artifacts;
            }
            let generator = config.build_client()?;
            let img = image.as_ref().map(PageImage::load_png).transpose()?;
            let els = match (&elements, &img) {
                (Some(p), _) => load_elements(p)?,
                (None, Some(i)) => detect_elements(i, &config.detector)?,
                (None, None) => unreachable!("clap requires --image or --elements"),
            };
            let page = PageFlags { image: None, width, height };
            let (w, h) = page_size(&page, img.as_ref(), &els);
            let input = crate::pipeline::PipelineInput::Elements {
                elements: els,
                image: img.as_ref(),
                page_width: w,
                page_height: h,
            };
            let result = crate::pipeline::pipeline(input, generator.as_ref(), &config.pipeline_config())?;
            emit(out.as_deref(), &result.page.html)
        }
        Command::Synth {
            seed,
            depth,
            fill,
            width,
            height,
            max_children,
            gap,
            min_leaf,
            tree_out,
            elements_out,
            png_out,
        } => {
            let sc = synth_config(depth, seed, fill, max_children, gap, min_leaf);
            let tree = random_layout(&sc, width, height)?;
            emit(Some(&tree_out), &(tree.to_json() + "\n"))?;
            save_elements(&elements_out, &render_boxes(&tree, &sc))?;
            if let Some(p) = png_out {
                render_png(&tree, &sc).save_png(&p)?;
            }
            Ok(())
        }
        Command::Eval { what: EvalCommand::Bleu { reference, generated, max_n } } => {
            let report = bleu_html(&read_text(&generated)?, &read_text(&reference)?, &BleuConfig::with_max_n(max_n))?;
            emit(None, &json_line(&report))
        }
        Command::Eval { what: EvalCommand::Stats { html, image } } => {
            let img = PageImage::load_png(&image)?;
            let stats = page_stats(&read_text(&html)?, img.height(), img.width());
            emit(None, &json_line(&stats))
        }
    }
}

/// Entry point used by the binary.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_file_round_trips() {
        let mut c = RunConfig::default();
        c.grouping.align_tol_px = 7;
        c.client.kind = ClientKind::Mock;
        c.output.artifacts_dir = Some("out".into());
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), c);
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let c: RunConfig = toml::from_str("[layout]\nmin_gap_px = 9\n").unwrap();
        assert_eq!(c.layout.min_gap_px, 9);
        assert_eq!(c.grouping, GroupingConfig::default());
        assert!(toml::from_str::<RunConfig>("api_key = \"x\"\n").is_err());
    }

    #[test]
    fn flags_override_config() {
        let mut c = RunConfig::default();
        c.generation.parallelism = 8;
        ClientFlags { mock: true, parallelism: Some(2), ..ClientFlags::default() }.apply(&mut c);
        assert_eq!(c.client.kind, ClientKind::Mock);
        assert_eq!(c.generation.parallelism, 2);
        ParseFlags { min_gap: Some(11), ..ParseFlags::default() }.apply(&mut c);
        assert_eq!(c.layout.min_gap_px, 11);
        assert_eq!(c.grouping.align_tol_px, GroupingConfig::default().align_tol_px);
    }

    #[test]
    fn remote_without_endpoint_is_a_config_error() {
        let err = RunConfig::default().build_client().err().unwrap();
        assert!(err.to_string().starts_with("config:"));
    }

    #[test]
    fn stage_errors_keep_their_tag() {
        let e: CliError = LayoutError::EmptyPage.into();
        assert!(e.to_string().starts_with("layout: EmptyPage"));
        let e: CliError = CodegenError::MissingCode(0).into();
        assert!(e.to_string().starts_with("codegen: MissingCode"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
