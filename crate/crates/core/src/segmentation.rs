//! Multi-view segmentation from a foreground hint in one reference view.
//!
//! The main pipeline uplifts the hint onto the Gaussians, spreads it with
//! graph diffusion and renders the diffused weights into the target views.
//! Helpers cover 2D foreground scoring, prompt generation for an external
//! mask predictor, mask averaging, hyperparameter search and IoU.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::mask::{read_mask, write_mask};
use crate::features::threshold::{threshold_li, threshold_otsu};
use crate::features::{FeatureMap, GaussianFeatures};
use crate::graph::{
    build_graph, diffuse, fit_logistic, median_pairwise_distance, GraphParams, LogisticConfig, UnaryMode,
    DEFAULT_SEGMENT_STEPS,
};
use crate::raster::{render, RasterConfig};
use crate::rng;
use crate::scene::{Camera, GaussianScene};
use crate::uplift::{reproject_mask, uplift, Frame};

/// How the foreground hint was drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForegroundKind {
    Scribbles,
    ReferenceMask,
}

impl std::str::FromStr for ForegroundKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scribbles" => Ok(ForegroundKind::Scribbles),
            "reference_mask" | "mask" => Ok(ForegroundKind::ReferenceMask),
            other => Err(Error::validation(format!(
                "unknown foreground kind '{other}' (expected scribbles or reference_mask)"
            ))),
        }
    }
}

/// Foreground hint: a single-channel mask in the view `camera_id`. Nonzero
/// pixels are foreground.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundSpec {
    pub camera_id: String,
    pub mask: FeatureMap,
    pub kind: ForegroundKind,
}

impl ForegroundSpec {
    pub fn new(camera_id: impl Into<String>, mask: FeatureMap, kind: ForegroundKind) -> Result<ForegroundSpec> {
        let fg = ForegroundSpec {
            camera_id: camera_id.into(),
            mask,
            kind,
        };
        fg.validate()?;
        Ok(fg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mask.channels != 1 {
            return Err(Error::validation(format!(
                "foreground mask must have one channel, got {}",
                self.mask.channels
            )));
        }
        if !self.mask.is_finite() || self.mask.data.iter().any(|&v| v < 0.0) {
            return Err(Error::validation("foreground mask values must be finite and nonnegative"));
        }
        if !self.mask.data.iter().any(|&v| v > 0.0) {
            return Err(Error::validation("foreground mask has no positive pixel"));
        }
        Ok(())
    }

    /// Indices of nonzero mask pixels.
    pub fn positive_pixels(&self) -> Vec<usize> {
        (0..self.mask.pixel_count())
            .filter(|&p| self.mask.data[p] > 0.0)
            .collect()
    }
}

/// Rule turning mean-normalized scores into a binary mask.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdMode {
    Fixed(f64),
    Li,
    Otsu,
}

impl ThresholdMode {
    /// Foreground flags for `values`. Automatic modes on constant input
    /// yield an empty mask.
    pub fn binarize(&self, values: &[f64]) -> Result<Vec<bool>> {
        let t = match self {
            ThresholdMode::Fixed(t) => *t,
            ThresholdMode::Li | ThresholdMode::Otsu => {
                let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                if values.is_empty() || lo == hi {
                    log::warn!("scores are constant; automatic threshold yields an empty mask");
                    return Ok(vec![false; values.len()]);
                }
                if *self == ThresholdMode::Li {
                    threshold_li(values)?
                } else {
                    threshold_otsu(values)?
                }
            }
        };
        Ok(values.iter().map(|&v| v >= t).collect())
    }
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "li" => Ok(ThresholdMode::Li),
            "otsu" => Ok(ThresholdMode::Otsu),
            other => other
                .parse::<f64>()
                .map(ThresholdMode::Fixed)
                .map_err(|_| Error::validation(format!("threshold '{other}' is not li, otsu or a number"))),
        }
    }
}

/// Unary term used when building the diffusion graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scorer {
    /// Logistic for reference masks, cosine for scribbles.
    #[default]
    Auto,
    Cosine,
    Logistic,
    None,
}

impl Scorer {
    pub fn unary_mode(self, kind: ForegroundKind) -> UnaryMode {
        match (self, kind) {
            (Scorer::Auto, ForegroundKind::ReferenceMask) | (Scorer::Logistic, _) => UnaryMode::Logistic,
            (Scorer::Auto, ForegroundKind::Scribbles) | (Scorer::Cosine, _) => UnaryMode::CosineToMean,
            (Scorer::None, _) => UnaryMode::None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentationConfig {
    /// Prompt threshold on the mean-normalized reprojected mask.
    pub tau: f64,
    pub n_prompts: usize,
    pub n_repeats: usize,
    pub threshold_mode: ThresholdMode,
    pub scorer: Scorer,
    pub graph: GraphParams,
    /// Diffusion steps.
    pub steps: usize,
    /// Threshold on the mean-normalized uplifted mask selecting anchors.
    pub g0_threshold: f64,
    /// Binarization level for averaged external masks.
    pub mask_threshold: f64,
    pub seed: u64,
    #[serde(skip)]
    pub raster: RasterConfig,
}

impl Default for SegmentationConfig {
    fn default() -> Self {
        SegmentationConfig {
            tau: 0.4,
            n_prompts: 3,
            n_repeats: 10,
            threshold_mode: ThresholdMode::Otsu,
            scorer: Scorer::Auto,
            graph: GraphParams::default(),
            steps: DEFAULT_SEGMENT_STEPS,
            g0_threshold: 0.5,
            mask_threshold: 0.5,
            seed: 0,
            raster: RasterConfig::default(),
        }
    }
}

impl SegmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_prompts == 0 {
            return Err(Error::validation("n_prompts must be at least 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::validation(format!("tau must be positive, got {}", self.tau)));
        }
        if !self.g0_threshold.is_finite() {
            return Err(Error::validation("g0_threshold must be finite"));
        }
        if let ThresholdMode::Fixed(t) = self.threshold_mode {
            if !t.is_finite() {
                return Err(Error::validation("fixed threshold must be finite"));
            }
        }
        self.graph.validate()
    }
}

/// Masks and soft scores for each target view.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub camera_ids: Vec<String>,
    /// Binary masks (0 or 1).
    pub masks: Vec<FeatureMap>,
    /// Mean-normalized rendered scores.
    pub scores: Vec<FeatureMap>,
    /// Diffused weight per Gaussian, zero for inactive ones.
    pub node_scores: Vec<f64>,
    /// Anchor Gaussians, as scene indices.
    pub anchors: Vec<usize>,
    pub config: SegmentationConfig,
    pub iou: Option<Vec<f64>>,
}

impl SegmentationResult {
    /// Fills `iou` against ground-truth masks given in target order.
    pub fn evaluate(&mut self, ground_truth: &[FeatureMap]) -> Result<&[f64]> {
        if ground_truth.len() != self.masks.len() {
            return Err(Error::validation(format!(
                "{} ground-truth masks for {} views",
                ground_truth.len(),
                self.masks.len()
            )));
        }
        let v = self
            .masks
            .iter()
            .zip(ground_truth)
            .map(|(m, g)| iou(m, g))
            .collect::<Result<Vec<f64>>>()?;
        Ok(self.iou.insert(v))
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values {
        s += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

/// Uplifts the foreground mask from its reference view, divides it by its
/// mean over active Gaussians and zeroes entries below `g0_threshold`.
/// Returns `g0` and the anchors `{i : g0_i > 0}`.
pub fn init_g0(
    scene: &GaussianScene,
    fg: &ForegroundSpec,
    g0_threshold: f64,
    cfg: &RasterConfig,
) -> Result<(Vec<f64>, Vec<usize>)> {
    init_g0_multi(scene, std::slice::from_ref(fg), g0_threshold, cfg)
}

/// Like [`init_g0`] with hints in several views, uplifted jointly.
pub fn init_g0_multi(
    scene: &GaussianScene,
    hints: &[ForegroundSpec],
    g0_threshold: f64,
    cfg: &RasterConfig,
) -> Result<(Vec<f64>, Vec<usize>)> {
    if hints.is_empty() {
        return Err(Error::validation("at least one foreground hint is required"));
    }
    let mut frames = Vec::with_capacity(hints.len());
    for fg in hints {
        fg.validate()?;
        frames.push(Frame::new(scene.camera(&fg.camera_id)?, &fg.mask));
    }
    let up = uplift(scene, &frames, cfg)?;
    let raw = up.features.column(0);
    let active = scene.active_indices();
    let m = mean(active.iter().map(|&i| raw[i]));
    let views: Vec<&str> = hints.iter().map(|h| h.camera_id.as_str()).collect();
    if !(m > 0.0) {
        return Err(Error::validation(format!(
            "foreground mask in views {views:?} does not reach any Gaussian"
        )));
    }
    let mut g0 = vec![0.0; scene.len()];
    for &i in &active {
        let v = raw[i] / m;
        if v >= g0_threshold && v > 0.0 {
            g0[i] = v;
        }
    }
    let anchors: Vec<usize> = (0..g0.len()).filter(|&i| g0[i] > 0.0).collect();
    if anchors.is_empty() {
        let max = active.iter().map(|&i| raw[i] / m).fold(0.0, f64::max);
        return Err(Error::validation(format!(
            "no anchor Gaussian reaches g0 threshold {g0_threshold} (max normalized value {max:.4}); lower the threshold"
        )));
    }
    Ok((g0, anchors))
}

/// Divides by the mean; an all-zero map stays zero.
fn mean_normalize(values: &[f32]) -> Vec<f64> {
    let m = mean(values.iter().map(|&v| v as f64));
    if m > 0.0 {
        values.iter().map(|&v| v as f64 / m).collect()
    } else {
        vec![0.0; values.len()]
    }
}

fn mask_map(flags: &[bool], like: &FeatureMap) -> FeatureMap {
    let data = flags.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let mut m = FeatureMap::from_vec(like.height, like.width, 1, data).expect("mask dims match");
    m.camera_id = like.camera_id.clone();
    m
}

/// Mean-normalizes rendered scores and thresholds them.
fn scores_to_masks(rendered: FeatureMap, mode: ThresholdMode) -> Result<(FeatureMap, FeatureMap)> {
    let norm = mean_normalize(&rendered.data);
    let flags = mode.binarize(&norm)?;
    let mask = mask_map(&flags, &rendered);
    let mut scores = rendered;
    scores.data = norm.iter().map(|&v| v as f32).collect();
    Ok((mask, scores))
}

/// Diffusion segmentation: anchors from the foreground hint, a feature
/// graph with the configured unary term, `cfg.steps` diffusion steps and
/// per-view rendering of the result.
pub fn segment_by_diffusion(
    scene: &GaussianScene,
    features: &GaussianFeatures,
    fg: &ForegroundSpec,
    cfg: &SegmentationConfig,
    targets: &[&Camera],
) -> Result<SegmentationResult> {
    segment_with_hints(scene, features, std::slice::from_ref(fg), &[], cfg, targets)
}

/// Diffusion segmentation from foreground hints in any number of views plus
/// optional background hints. Gaussians anchored by a background hint get a
/// zero unary term, which removes every edge touching them.
pub fn segment_with_hints(
    scene: &GaussianScene,
    features: &GaussianFeatures,
    foreground: &[ForegroundSpec],
    background: &[ForegroundSpec],
    cfg: &SegmentationConfig,
    targets: &[&Camera],
) -> Result<SegmentationResult> {
    cfg.validate()?;
    if features.rows != scene.len() {
        return Err(Error::validation(format!(
            "{} feature rows for {} Gaussians",
            features.rows,
            scene.len()
        )));
    }
    let kind = foreground
        .first()
        .map(|f| f.kind)
        .ok_or_else(|| Error::validation("at least one foreground hint is required"))?;
    let (sc, kept) = scene.compact();
    let feats = features.select_rows(&kept);
    let (mut g0, mut anchors) = init_g0_multi(&sc, foreground, cfg.g0_threshold, &cfg.raster)?;
    let suppressed = if background.is_empty() {
        Vec::new()
    } else {
        init_g0_multi(&sc, background, cfg.g0_threshold, &cfg.raster)?.1
    };
    for &i in &suppressed {
        g0[i] = 0.0;
    }
    anchors.retain(|&i| g0[i] > 0.0);
    if anchors.is_empty() {
        return Err(Error::validation("background hints cover every foreground anchor"));
    }
    let mut params = cfg.graph.clone();
    params.unary_mode = cfg.scorer.unary_mode(kind);
    let mut graph = build_graph(&sc.centers(), &feats, &params, Some(&anchors))?;
    graph.suppress(&suppressed);
    let state = diffuse(&graph, &g0, cfg.steps)?;

    let values: Vec<f32> = state.g.iter().map(|&v| v as f32).collect();
    let views = targets
        .par_iter()
        .map(|cam| {
            let out = render(&sc, cam, &values, 1, &cfg.raster)?;
            scores_to_masks(out.map, cfg.threshold_mode)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut node_scores = vec![0.0; scene.len()];
    for (k, &i) in kept.iter().enumerate() {
        node_scores[i] = state.g[k];
    }
    let (masks, scores) = views.into_iter().unzip();
    Ok(SegmentationResult {
        camera_ids: targets.iter().map(|c| c.id.clone()).collect(),
        masks,
        scores,
        node_scores,
        anchors: anchors.iter().map(|&k| kept[k]).collect(),
        config: cfg.clone(),
        iou: None,
    })
}

/// Geometry-only baseline: the hint uplifted from its single view and
/// rendered into each target, mean-normalized and thresholded.
pub fn segment_geometry_only(
    scene: &GaussianScene,
    fg: &ForegroundSpec,
    mode: ThresholdMode,
    targets: &[&Camera],
    cfg: &RasterConfig,
) -> Result<Vec<FeatureMap>> {
    fg.validate()?;
    let ref_cam = scene.camera(&fg.camera_id)?;
    targets
        .par_iter()
        .map(|cam| {
            let r = reproject_mask(scene, ref_cam, &fg.mask, cam, cfg)?;
            Ok(scores_to_masks(r, mode)?.0)
        })
        .collect()
}

/// Unit-normalized pixel features; zero pixels stay zero.
fn normalized_pixels(map: &FeatureMap) -> Vec<f64> {
    let c = map.channels;
    let mut out: Vec<f64> = map.data.iter().map(|&v| v as f64).collect();
    for px in out.chunks_mut(c) {
        let n = px.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 0.0 {
            px.iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}

/// Median pairwise distance between unit-normalized nonzero pixel features,
/// estimated from at most `sample_size` pairs.
pub fn pixel_feature_scale(map: &FeatureMap, sample_size: usize, seed: u64) -> Result<f64> {
    let c = map.channels;
    let rows: Vec<f64> = normalized_pixels(map)
        .chunks(c)
        .filter(|px| px.iter().any(|&v| v != 0.0))
        .flatten()
        .copied()
        .collect();
    median_pairwise_distance(&rows, c, sample_size, seed)
}

/// Per-pixel `exp(−‖f̂ − f̄‖² / (b s²))` on unit-normalized features, with
/// `f̄` the mean of the normalized reference rows. Zero pixels score 0.
pub fn score_foreground_cosine(rendered: &FeatureMap, ref_rows: &[f32], bandwidth: f64, scale: f64) -> Result<FeatureMap> {
    let c = rendered.channels;
    if ref_rows.is_empty() || !ref_rows.len().is_multiple_of(c) {
        return Err(Error::validation("reference features must be a non-empty set of rows"));
    }
    if !(bandwidth > 0.0 && scale > 0.0) {
        return Err(Error::validation("bandwidth and scale must be positive"));
    }
    let refs = FeatureMap::from_vec(1, ref_rows.len() / c, c, ref_rows.to_vec())?;
    let normalized_refs = normalized_pixels(&refs);
    let mut fbar = vec![0.0; c];
    for r in normalized_refs.chunks(c) {
        for (m, v) in fbar.iter_mut().zip(r) {
            *m += v;
        }
    }
    let count = (ref_rows.len() / c) as f64;
    fbar.iter_mut().for_each(|m| *m /= count);
    let denom = bandwidth * scale * scale;
    let data = normalized_pixels(rendered)
        .chunks(c)
        .map(|px| {
            if px.iter().all(|&v| v == 0.0) {
                0.0
            } else {
                let d2: f64 = px.iter().zip(&fbar).map(|(a, b)| (a - b) * (a - b)).sum();
                (-d2 / denom).exp() as f32
            }
        })
        .collect();
    let mut out = FeatureMap::from_vec(rendered.height, rendered.width, 1, data)?;
    out.camera_id = rendered.camera_id.clone();
    Ok(out)
}

/// Cap on training pixels per class for logistic scoring.
const MAX_TRAIN_PER_CLASS: usize = 20_000;

/// Trains a balanced logistic model on the reference render (positives at
/// `fg_pixels`) and returns per-pixel probabilities on `rendered_target`.
pub fn score_foreground_logistic(
    rendered_ref: &FeatureMap,
    fg_pixels: &[usize],
    rendered_target: &FeatureMap,
) -> Result<FeatureMap> {
    let c = rendered_ref.channels;
    if rendered_target.channels != c {
        return Err(Error::validation("reference and target renders differ in channels"));
    }
    let n = rendered_ref.pixel_count();
    let mut is_pos = vec![false; n];
    for &p in fg_pixels {
        if p >= n {
            return Err(Error::validation(format!("foreground pixel {p} out of range {n}")));
        }
        is_pos[p] = true;
    }
    let pos: Vec<usize> = (0..n).filter(|&p| is_pos[p]).collect();
    let neg: Vec<usize> = (0..n).filter(|&p| !is_pos[p]).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::validation(
            "foreground pixels must be a non-empty proper subset of the reference view",
        ));
    }
    let mut r = rng::seeded(0);
    let pick = |set: &[usize], r: &mut _| -> Vec<usize> {
        if set.len() <= MAX_TRAIN_PER_CLASS {
            set.to_vec()
        } else {
            rng::sample_without_replacement(r, set.len(), MAX_TRAIN_PER_CLASS)
                .into_iter()
                .map(|i| set[i])
                .collect()
        }
    };
    let (tp, tn) = (pick(&pos, &mut r), pick(&neg, &mut r));
    let ref_px: Vec<f64> = rendered_ref.data.iter().map(|&v| v as f64).collect();
    let mut rows = Vec::with_capacity((tp.len() + tn.len()) * c);
    for &p in tp.iter().chain(&tn) {
        rows.extend_from_slice(&ref_px[p * c..(p + 1) * c]);
    }
    let positive: Vec<usize> = (0..tp.len()).collect();
    let mut model = fit_logistic(&rows, c, &positive, &LogisticConfig::default())?;
    let prior = pos.len() as f64 / n as f64;
    model.prior_shift = (prior / (1.0 - prior)).ln();
    let data = rendered_target
        .data
        .chunks(c)
        .map(|px| {
            let x: Vec<f64> = px.iter().map(|&v| v as f64).collect();
            model.predict(&x) as f32
        })
        .collect();
    let mut out = FeatureMap::from_vec(rendered_target.height, rendered_target.width, 1, data)?;
    out.camera_id = rendered_target.camera_id.clone();
    Ok(out)
}

/// One batch of point prompts for an external mask predictor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSet {
    pub camera_id: String,
    /// Pixel coordinates `[x, y]`.
    pub points: Vec<[usize; 2]>,
    pub repeat_index: usize,
}

/// Samples `n_repeats` sets of `n_prompts` distinct pixels whose
/// mean-normalized reprojected foreground value exceeds `tau`.
#[allow(clippy::too_many_arguments)]
pub fn generate_prompts(
    scene: &GaussianScene,
    fg: &ForegroundSpec,
    target: &Camera,
    tau: f64,
    n_prompts: usize,
    n_repeats: usize,
    seed: u64,
    cfg: &RasterConfig,
) -> Result<Vec<PromptSet>> {
    if n_prompts == 0 {
        return Err(Error::validation("n_prompts must be at least 1"));
    }
    fg.validate()?;
    let ref_cam = scene.camera(&fg.camera_id)?;
    let r = reproject_mask(scene, ref_cam, &fg.mask, target, cfg)?;
    let norm = mean_normalize(&r.data);
    let candidates: Vec<usize> = (0..norm.len()).filter(|&p| norm[p] > tau).collect();
    if candidates.is_empty() {
        let max = norm.iter().cloned().fold(0.0, f64::max);
        return Err(Error::validation(format!(
            "no pixel of view {:?} exceeds tau = {tau} (max normalized value {max:.4})",
            target.id
        )));
    }
    let mut rng = rng::seeded(seed);
    Ok((0..n_repeats)
        .map(|repeat_index| PromptSet {
            camera_id: target.id.clone(),
            points: rng::sample_without_replacement(&mut rng, candidates.len(), n_prompts)
                .into_iter()
                .map(|i| {
                    let p = candidates[i];
                    [p % target.width, p / target.width]
                })
                .collect(),
            repeat_index,
        })
        .collect())
}

fn file_stem(set: &PromptSet) -> String {
    let safe: String = set
        .camera_id
        .chars()
        .map(|ch| if ch.is_ascii_alphanumeric() || ch == '-' || ch == '_' { ch } else { '_' })
        .collect();
    format!("{safe}_{:03}", set.repeat_index)
}

/// Path where the predictor writes the mask answering `set`.
pub fn predicted_mask_path(dir: &Path, set: &PromptSet) -> PathBuf {
    dir.join(format!("mask_{}.png", file_stem(set)))
}

/// Writes one `prompts_<camera>_<repeat>.json` file per set.
pub fn write_prompt_files(dir: &Path, sets: &[PromptSet]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    sets.iter()
        .map(|s| {
            let p = dir.join(format!("prompts_{}.json", file_stem(s)));
            let text = serde_json::to_string_pretty(s).expect("prompt sets serialize");
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
            Ok(p)
        })
        .collect()
}

pub fn read_prompt_file(path: &Path) -> Result<PromptSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

/// Reads the predictor's answers to `sets` from `dir`.
pub fn read_predicted_masks(dir: &Path, sets: &[PromptSet]) -> Result<Vec<FeatureMap>> {
    sets.iter().map(|s| read_mask(&predicted_mask_path(dir, s))).collect()
}

/// Pixel-wise mean of same-sized masks, optionally binarized.
pub fn average_external_masks(masks: &[FeatureMap], threshold: Option<ThresholdMode>) -> Result<FeatureMap> {
    let first = masks
        .first()
        .ok_or_else(|| Error::validation("no masks to average"))?;
    for m in masks {
        if (m.height, m.width, m.channels) != (first.height, first.width, 1) {
            return Err(Error::validation(format!(
                "mask of {}x{}x{} does not match {}x{}x1",
                m.height, m.width, m.channels, first.height, first.width
            )));
        }
    }
    let n = masks.len() as f64;
    let avg: Vec<f64> = (0..first.pixel_count())
        .map(|p| masks.iter().map(|m| m.data[p] as f64).sum::<f64>() / n)
        .collect();
    let mut out = match threshold {
        None => FeatureMap::from_vec(first.height, first.width, 1, avg.iter().map(|&v| v as f32).collect())?,
        Some(mode) => mask_map(&mode.binarize(&avg)?, first),
    };
    out.camera_id = first.camera_id.clone();
    Ok(out)
}

/// Test stand-in for an external mask predictor: answers a prompt set with
/// the dilated ground-truth mask when any prompt hits the object, otherwise
/// with the dilated prompt points, then flips pixels at random.
#[derive(Debug, Clone)]
pub struct MockPredictor {
    pub ground_truth: BTreeMap<String, FeatureMap>,
    /// Square dilation radius in pixels.
    pub dilation: usize,
    pub flip_probability: f64,
    pub seed: u64,
}

impl MockPredictor {
    pub fn predict(&self, set: &PromptSet) -> Result<FeatureMap> {
        let gt = self
            .ground_truth
            .get(&set.camera_id)
            .ok_or_else(|| Error::validation(format!("no ground truth for view {:?}", set.camera_id)))?;
        let (w, h) = (gt.width, gt.height);
        let hit = set
            .points
            .iter()
            .any(|&[x, y]| x < w && y < h && gt.value(x, y) >= 0.5);
        let mut base = vec![false; w * h];
        if hit {
            for (b, &v) in base.iter_mut().zip(&gt.data) {
                *b = v >= 0.5;
            }
        } else {
            for &[x, y] in &set.points {
                if x < w && y < h {
                    base[y * w + x] = true;
                }
            }
        }
        let r = self.dilation as isize;
        let mut out = base.clone();
        if r > 0 {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    if base[(y as usize) * w + x as usize] {
                        for dy in -r..=r {
                            for dx in -r..=r {
                                let (xx, yy) = (x + dx, y + dy);
                                if xx >= 0 && yy >= 0 && (xx as usize) < w && (yy as usize) < h {
                                    out[yy as usize * w + xx as usize] = true;
                                }
                            }
                        }
                    }
                }
            }
        }
        if self.flip_probability > 0.0 {
            let mut rng = rng::seeded(self.seed ^ (set.repeat_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let cut = (self.flip_probability.clamp(0.0, 1.0) * u64::MAX as f64) as u64;
            for v in out.iter_mut() {
                if rand::RngCore::next_u64(&mut rng) < cut {
                    *v = !*v;
                }
            }
        }
        Ok(mask_map(&out, gt))
    }

    /// Answers every prompt file of `sets` by writing the mask files.
    pub fn serve_directory(&self, dir: &Path, sets: &[PromptSet]) -> Result<()> {
        for s in sets {
            write_mask(&self.predict(s)?, &predicted_mask_path(dir, s))?;
        }
        Ok(())
    }
}

/// Outcome of a hyperparameter search.
#[derive(Debug, Clone, PartialEq)]
pub struct Tuning {
    pub best_index: usize,
    pub config: SegmentationConfig,
    pub ious: Vec<f64>,
}

/// Evaluates every candidate with `pipeline` and keeps the one whose mask
/// best matches `objective` (first on ties).
pub fn tune_hyperparameters<F>(candidates: &[SegmentationConfig], objective: &FeatureMap, pipeline: F) -> Result<Tuning>
where
    F: Fn(&SegmentationConfig) -> Result<FeatureMap> + Sync,
{
    if candidates.is_empty() {
        return Err(Error::validation("hyperparameter grid is empty"));
    }
    let ious = candidates
        .par_iter()
        .map(|c| iou(&pipeline(c)?, objective))
        .collect::<Result<Vec<f64>>>()?;
    let mut best = 0;
    for (i, &v) in ious.iter().enumerate() {
        if v > ious[best] {
            best = i;
        }
    }
    Ok(Tuning {
        best_index: best,
        config: candidates[best].clone(),
        ious,
    })
}

/// Intersection over union of masks binarized at 0.5; 1 when both are empty.
pub fn iou(pred: &FeatureMap, gt: &FeatureMap) -> Result<f64> {
    if (pred.height, pred.width, pred.channels) != (gt.height, gt.width, gt.channels) {
        return Err(Error::validation(format!(
            "mask dims differ: {}x{}x{} vs {}x{}x{}",
            pred.height, pred.width, pred.channels, gt.height, gt.width, gt.channels
        )));
    }
    let (mut inter, mut union) = (0usize, 0usize);
    for (&a, &b) in pred.data.iter().zip(&gt.data) {
        let (a, b) = (a >= 0.5, b >= 0.5);
        inter += (a && b) as usize;
        union += (a || b) as usize;
    }
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}
