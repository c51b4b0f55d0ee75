//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "splatlift", version, about = "Uplift 2D features onto Gaussian splatting scenes")]
pub struct Cli {
    /// Log progress at info level.
    #[arg(long, short, global = true)]
    pub verbose: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Uplift per-view feature maps to per-Gaussian features.
    Uplift(UpliftArgs),
    /// Render RGB, features or their PCA colors for one view.
    Render(RenderArgs),
    /// Diffuse an uplifted foreground hint over the feature graph.
    Diffuse(DiffuseArgs),
    /// Segment an object in target views from a foreground hint.
    Segment(SegmentArgs),
    /// Open-vocabulary relevancy maps and localization.
    #[command(visible_alias = "relevancy")]
    Localize(LocalizeArgs),
    /// Time uplifting against the channel count.
    Bench(BenchArgs),
    /// Write the two-cluster synthetic scene and its ground truth.
    GenSynthetic(GenSyntheticArgs),
    /// Run the HTTP service behind the scribble interface.
    Serve(ServeArgs),
}

#[derive(Debug, Args, Clone)]
pub struct SceneArgs {
    /// Gaussian scene in 3DGS PLY layout.
    #[arg(long)]
    pub scene: PathBuf,
    /// Camera registry JSON.
    #[arg(long)]
    pub cameras: PathBuf,
}

#[derive(Debug, Args)]
pub struct UpliftArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Directory of feature maps named `<camera_id>.splf`.
    #[arg(long)]
    pub features_dir: PathBuf,
    /// Output per-Gaussian features.
    #[arg(long)]
    pub out: PathBuf,
    /// Keep this fraction of Gaussians ranked by importance; needs --pruned-scene.
    #[arg(long)]
    pub keep_fraction: Option<f64>,
    /// Where the pruned scene is written when --keep-fraction is set.
    #[arg(long)]
    pub pruned_scene: Option<PathBuf>,
    /// Normalize by fragment count instead of accumulated weight.
    #[arg(long)]
    pub count_normalize: bool,
    /// Preconditioned gradient steps applied after uplifting.
    #[arg(long, default_value_t = 0)]
    pub refine_steps: usize,
    /// Optional output of the per-Gaussian importance.
    #[arg(long)]
    pub beta_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Camera id to render.
    #[arg(long)]
    pub view: String,
    /// Output file: PNG for images, `.splf` for raw feature maps.
    #[arg(long)]
    pub out: PathBuf,
    /// Per-Gaussian features for the `features` and `pca` layers.
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// One of rgb, features, pca.
    #[arg(long, default_value = "rgb")]
    pub layer: String,
    /// RGB background as `r,g,b` in [0, 1].
    #[arg(long, default_value = "0,0,0")]
    pub background: String,
}

#[derive(Debug, Args, Clone)]
pub struct HintArgs {
    /// Foreground mask (PNG or PGM); nonzero pixels are foreground.
    #[arg(long)]
    pub fg_mask: PathBuf,
    /// Camera id of the mask; defaults to the mask file stem.
    #[arg(long)]
    pub fg_view: Option<String>,
    /// scribbles or reference_mask.
    #[arg(long, default_value = "scribbles")]
    pub fg_kind: String,
}

#[derive(Debug, Args)]
pub struct DiffuseArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Per-Gaussian features defining the graph.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub hint: HintArgs,
    /// Diffusion steps.
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
    /// Neighbours per Gaussian.
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth_edge: f64,
    #[arg(long, default_value_t = 1.0)]
    pub bandwidth_unary: f64,
    /// none, cosine_to_mean or logistic; defaults to the choice for --fg-kind.
    #[arg(long)]
    pub unary_mode: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub g0_threshold: f64,
    /// Use max(A, Aᵀ) instead of the directed graph.
    #[arg(long)]
    pub symmetrize: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output per-Gaussian weights (one channel).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Per-Gaussian features.
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub hint: HintArgs,
    /// Comma-separated camera ids; all cameras when omitted.
    #[arg(long)]
    pub targets: Option<String>,
    /// Segmentation configuration JSON; missing fields take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Ground-truth masks named `<camera_id>.png` for IoU reporting.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Also write prompt files for an external mask predictor here.
    #[arg(long)]
    pub prompts_dir: Option<PathBuf>,
    /// Receives masks/, scores/ and summary.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Per-Gaussian language features.
    #[arg(long)]
    pub clip_features: PathBuf,
    /// Per-Gaussian self-supervised features defining the graph.
    #[arg(long)]
    pub dino_features: PathBuf,
    /// Query embeddings (one or more rows).
    #[arg(long)]
    pub query_emb: PathBuf,
    /// Four canonical phrase embeddings.
    #[arg(long)]
    pub canon_emb: PathBuf,
    /// Comma-separated bandwidth candidates.
    #[arg(long)]
    pub bandwidths: Option<String>,
    /// Comma-separated camera ids; all cameras when omitted.
    #[arg(long)]
    pub views: Option<String>,
    #[arg(long, default_value_t = 10.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 11)]
    pub kernel: usize,
    #[arg(long, default_value_t = 10)]
    pub steps: usize,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    /// Optional directory for relevancy PNGs `<query>_<camera_id>.png`.
    #[arg(long)]
    pub maps_dir: Option<PathBuf>,
    /// Output JSON report.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 20_000)]
    pub gaussians: usize,
    #[arg(long, default_value_t = 640)]
    pub width: usize,
    #[arg(long, default_value_t = 480)]
    pub height: usize,
    #[arg(long, default_value_t = 2)]
    pub views: usize,
    /// Comma-separated channel counts.
    #[arg(long, default_value = "1,8,40")]
    pub channels: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenSyntheticArgs {
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Feature noise standard deviation.
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 12)]
    pub views: usize,
    #[arg(long, default_value_t = 500)]
    pub per_cluster: usize,
    /// View index used for the example scribble.
    #[arg(long, default_value_t = 3)]
    pub reference_view: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scene: SceneArgs,
    /// Per-Gaussian features.
    #[arg(long)]
    pub features: PathBuf,
    /// Ground-truth masks named `<camera_id>.png`, reported as IoU.
    #[arg(long)]
    pub gt_dir: Option<PathBuf>,
    /// Segmentation defaults JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Built UI assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    /// Origin allowed by CORS.
    #[arg(long, default_value = "http://localhost:5173")]
    pub cors_origin: String,
}
