//! Open-vocabulary localization on uplifted language embeddings.
//!
//! Language features are refined by diffusion on a graph built from
//! self-supervised features, rendered, turned into relevancy maps against a
//! text query and smoothed with a box filter.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::container::{Tensor, TensorData};
use crate::features::sliding::{sidecar_path, sliding_window_aggregate, PatchGrid};
use crate::features::{FeatureMap, GaussianFeatures};
use crate::graph::{build_graph, diffuse_matrix, GraphParams, MatrixNorm, UnaryMode, DEFAULT_REFINE_STEPS};
use crate::raster::{render, RasterConfig};
use crate::rng;
use crate::scene::{Camera, GaussianScene};
use crate::segmentation::PromptSet;

/// Softmax temperature of the relevancy score.
pub const DEFAULT_TEMPERATURE: f64 = 10.0;
/// Side of the box filter smoothing relevancy maps.
pub const DEFAULT_KERNEL: usize = 11;
/// Edge bandwidth candidates for language feature refinement.
pub const DEFAULT_BANDWIDTHS: [f64; 4] = [0.0004, 0.002, 0.01, 0.05];
/// Canonical phrases contrasted against every query.
pub const CANONICAL_PHRASES: [&str; 4] = ["object", "things", "stuff", "texture"];

/// A text embedding scaled to unit length.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryEmbedding {
    pub text: String,
    pub vector: Vec<f64>,
}

impl QueryEmbedding {
    pub fn new(text: impl Into<String>, vector: Vec<f64>) -> Result<QueryEmbedding> {
        let n = vector.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::validation("embedding must be finite and nonzero"));
        }
        Ok(QueryEmbedding {
            text: text.into(),
            vector: vector.iter().map(|v| v / n).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Deterministic stand-in for a text encoder: a unit Gaussian vector seeded
/// by the FNV-1a hash of `text`.
pub fn mock_embedding(text: &str, dim: usize) -> QueryEmbedding {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in text.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    let mut r = ChaCha8Rng::seed_from_u64(h);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
        if let Ok(q) = QueryEmbedding::new(text, v) {
            return q;
        }
    }
}

/// The four canonical phrase embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalSet {
    pub entries: Vec<QueryEmbedding>,
}

impl CanonicalSet {
    pub fn new(entries: Vec<QueryEmbedding>) -> Result<CanonicalSet> {
        if entries.len() != 4 {
            return Err(Error::validation(format!(
                "canonical set needs exactly 4 embeddings, got {}",
                entries.len()
            )));
        }
        let d = entries[0].dim();
        if entries.iter().any(|e| e.dim() != d) {
            return Err(Error::validation("canonical embeddings differ in dimension"));
        }
        Ok(CanonicalSet { entries })
    }

    /// Mock embeddings of the canonical phrases.
    pub fn mock(dim: usize) -> CanonicalSet {
        CanonicalSet {
            entries: CANONICAL_PHRASES.iter().map(|t| mock_embedding(t, dim)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries[0].dim()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum SidecarText {
    One(String),
    Many(Vec<String>),
}

#[derive(Serialize, Deserialize)]
struct EmbeddingSidecar {
    text: SidecarText,
}

/// Reads embeddings from an SPLF tensor (rank 1 for one, rank 2 for one per
/// row) and the optional `<path>.json` sidecar `{"text": ...}`.
pub fn read_embeddings(path: &Path) -> Result<Vec<QueryEmbedding>> {
    let t = Tensor::read(path)?;
    let ctx = || path.display().to_string();
    let TensorData::F32(data) = &t.data else {
        return Err(Error::format(ctx(), "embeddings must be stored as f32"));
    };
    let (rows, dim) = match t.dims.as_slice() {
        [d] => (1, *d as usize),
        [r, d] => (*r as usize, *d as usize),
        _ => return Err(Error::format(ctx(), format!("embedding tensor has rank {}", t.dims.len()))),
    };
    let side = sidecar_path(path);
    let texts: Vec<String> = if side.exists() {
        let s = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let parsed: EmbeddingSidecar =
            serde_json::from_str(&s).map_err(|e| Error::format(side.display().to_string(), e.to_string()))?;
        match parsed.text {
            SidecarText::One(s) => vec![s],
            SidecarText::Many(v) => v,
        }
    } else {
        Vec::new()
    };
    (0..rows)
        .map(|r| {
            let v = data[r * dim..(r + 1) * dim].iter().map(|&x| x as f64).collect();
            QueryEmbedding::new(texts.get(r).cloned().unwrap_or_default(), v)
        })
        .collect()
}

/// Writes embeddings as a rank-2 tensor (rank 1 for a single one) plus sidecar.
pub fn write_embeddings(path: &Path, embeddings: &[QueryEmbedding]) -> Result<()> {
    let first = embeddings
        .first()
        .ok_or_else(|| Error::validation("no embeddings to write"))?;
    let dim = first.dim();
    let data: Vec<f32> = embeddings.iter().flat_map(|e| e.vector.iter().map(|&v| v as f32)).collect();
    let (dims, text) = if embeddings.len() == 1 {
        (vec![dim as u64], SidecarText::One(first.text.clone()))
    } else {
        (
            vec![embeddings.len() as u64, dim as u64],
            SidecarText::Many(embeddings.iter().map(|e| e.text.clone()).collect()),
        )
    };
    Tensor::f32(dims, data)?.write(path)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&EmbeddingSidecar { text }).expect("sidecar serializes");
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `σ(z)` evaluated without overflow.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `min_i exp(T f·q) / (exp(T f·q) + exp(T f·c_i))`, evaluated as the
/// sigmoid of the logit difference.
pub fn relevancy(feat: &[f64], q: &QueryEmbedding, canon: &CanonicalSet, temperature: f64) -> f64 {
    let a = dot(feat, &q.vector);
    canon
        .entries
        .iter()
        .map(|c| sigmoid(temperature * (a - dot(feat, &c.vector))))
        .fold(f64::INFINITY, f64::min)
}

/// Mean filter with a `k × k` window; out-of-range pixels take the value of
/// the nearest edge pixel.
pub fn box_filter(values: &[f64], height: usize, width: usize, k: usize) -> Result<Vec<f64>> {
    if k.is_multiple_of(2) {
        return Err(Error::validation(format!("box filter size must be odd, got {k}")));
    }
    let r = (k / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut horiz = vec![0.0; values.len()];
    for y in 0..height {
        let row = &values[y * width..(y + 1) * width];
        for x in 0..width {
            let s: f64 = (-r..=r).map(|d| row[clamp(x as isize + d, width)]).sum();
            horiz[y * width + x] = s / k as f64;
        }
    }
    let mut out = vec![0.0; values.len()];
    for y in 0..height {
        for x in 0..width {
            let s: f64 = (-r..=r).map(|d| horiz[clamp(y as isize + d, height) * width + x]).sum();
            out[y * width + x] = s / k as f64;
        }
    }
    Ok(out)
}

/// Smoothed relevancy of one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct RelevancyMap {
    pub scores: FeatureMap,
    pub query: String,
    pub bandwidth: Option<f64>,
}

/// Per-pixel relevancy of unit-normalized rendered features, box filtered.
pub fn relevancy_map(
    rendered: &FeatureMap,
    q: &QueryEmbedding,
    canon: &CanonicalSet,
    temperature: f64,
    kernel: usize,
) -> Result<RelevancyMap> {
    if rendered.channels != q.dim() || canon.dim() != q.dim() {
        return Err(Error::validation(format!(
            "feature dimension {} does not match embedding dimension {} / {}",
            rendered.channels,
            q.dim(),
            canon.dim()
        )));
    }
    if !(temperature > 0.0) {
        return Err(Error::validation("temperature must be positive"));
    }
    if kernel.is_multiple_of(2) {
        return Err(Error::validation(format!("box filter size must be odd, got {kernel}")));
    }
    let c = rendered.channels;
    let raw: Vec<f64> = rendered
        .data
        .par_chunks(c)
        .map(|px| {
            let mut f: Vec<f64> = px.iter().map(|&v| v as f64).collect();
            let n = dot(&f, &f).sqrt();
            if n > 0.0 {
                f.iter_mut().for_each(|v| *v /= n);
            }
            relevancy(&f, q, canon, temperature)
        })
        .collect();
    let smooth = box_filter(&raw, rendered.height, rendered.width, kernel)?;
    let mut scores = FeatureMap::from_vec(
        rendered.height,
        rendered.width,
        1,
        smooth.iter().map(|&v| v as f32).collect(),
    )?;
    scores.camera_id = rendered.camera_id.clone();
    Ok(RelevancyMap {
        scores,
        query: q.text.clone(),
        bandwidth: None,
    })
}

/// Row-major argmax `(x, y)`; the first maximum wins.
pub fn localize(map: &RelevancyMap) -> Result<(usize, usize)> {
    let s = &map.scores;
    if s.data.is_empty() {
        return Err(Error::validation("relevancy map is empty"));
    }
    let mut best = 0;
    for (p, &v) in s.data.iter().enumerate() {
        if v > s.data[best] {
            best = p;
        }
    }
    Ok((best % s.width, best / s.width))
}

/// Pixels ranked in the top `q = 0.4 · mean` fraction of scores, with
/// `⌈q · H · W⌉` candidates (ties by row-major order).
pub fn top_q_candidates(map: &RelevancyMap) -> Result<Vec<usize>> {
    let s = &map.scores.data;
    let mean = s.iter().map(|&v| v as f64).sum::<f64>() / s.len().max(1) as f64;
    let q = 0.4 * mean;
    let count = ((q * s.len() as f64).ceil() as usize).min(s.len());
    if count == 0 {
        return Err(Error::validation(format!(
            "top-q candidate set is empty (mean relevancy {mean})"
        )));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    order.truncate(count);
    Ok(order)
}

/// `n_repeats` sets of `n_prompts` distinct pixels drawn from the top-q
/// candidates.
pub fn top_q_prompts(map: &RelevancyMap, n_prompts: usize, n_repeats: usize, seed: u64) -> Result<Vec<PromptSet>> {
    if n_prompts == 0 {
        return Err(Error::validation("n_prompts must be at least 1"));
    }
    let cand = top_q_candidates(map)?;
    let w = map.scores.width;
    let mut r = rng::seeded(seed);
    Ok((0..n_repeats)
        .map(|repeat_index| PromptSet {
            camera_id: map.scores.camera_id.clone(),
            points: rng::sample_without_replacement(&mut r, cand.len(), n_prompts)
                .into_iter()
                .map(|i| [cand[i] % w, cand[i] / w])
                .collect(),
            repeat_index,
        })
        .collect())
}

/// Aggregates each scale's crops and averages the scales per pixel.
pub fn pool_multiscale(scales: &[Vec<PatchGrid>], height: usize, width: usize) -> Result<FeatureMap> {
    if scales.is_empty() {
        return Err(Error::validation("no scales to pool"));
    }
    let maps = scales
        .iter()
        .map(|g| sliding_window_aggregate(g, height, width))
        .collect::<Result<Vec<_>>>()?;
    let c = maps[0].channels;
    if maps.iter().any(|m| m.channels != c) {
        return Err(Error::validation("scales differ in embedding dimension"));
    }
    if maps.len() == 1 {
        return Ok(maps.into_iter().next().unwrap());
    }
    let n = maps.len() as f64;
    let mut out = FeatureMap::zeros(height, width, c);
    out.camera_id = maps[0].camera_id.clone();
    for (i, v) in out.data.iter_mut().enumerate() {
        *v = (maps.iter().map(|m| m.data[i] as f64).sum::<f64>() / n) as f32;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OpenVocabConfig {
    pub temperature: f64,
    pub kernel: usize,
    pub steps: usize,
    pub bandwidths: Vec<f64>,
    pub k: usize,
    pub norm: MatrixNorm,
    pub seed: u64,
}

impl Default for OpenVocabConfig {
    fn default() -> Self {
        OpenVocabConfig {
            temperature: DEFAULT_TEMPERATURE,
            kernel: DEFAULT_KERNEL,
            steps: DEFAULT_REFINE_STEPS,
            bandwidths: DEFAULT_BANDWIDTHS.to_vec(),
            k: crate::graph::DEFAULT_K,
            norm: MatrixNorm::Frobenius,
            seed: 0,
        }
    }
}

/// Outcome of the bandwidth search.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthSelection {
    pub best_index: usize,
    pub bandwidth: f64,
    /// Peak relevancy over all views, per candidate.
    pub peaks: Vec<f64>,
    /// Maps of the selected bandwidth, one per camera.
    pub maps: Vec<RelevancyMap>,
}

/// Language features diffused on the self-supervised feature graph with
/// edge bandwidth `b` and no unary term.
pub fn refine_language_features(
    scene: &GaussianScene,
    clip: &GaussianFeatures,
    dino: &GaussianFeatures,
    bandwidth: f64,
    cfg: &OpenVocabConfig,
) -> Result<GaussianFeatures> {
    if clip.rows != scene.len() || dino.rows != scene.len() {
        return Err(Error::validation(format!(
            "feature rows ({}, {}) do not match {} Gaussians",
            clip.rows,
            dino.rows,
            scene.len()
        )));
    }
    let params = GraphParams {
        k: cfg.k,
        bandwidth_edge: bandwidth,
        unary_mode: UnaryMode::None,
        seed: cfg.seed,
        ..GraphParams::default()
    };
    let graph = build_graph(&scene.centers(), dino, &params, None)?;
    let out = diffuse_matrix(&graph, &clip.to_f64(), clip.channels, cfg.steps, cfg.norm)?;
    GaussianFeatures::from_vec(clip.rows, clip.channels, out.iter().map(|&v| v as f32).collect())
}

/// Tries each bandwidth and keeps the one whose relevancy maps reach the
/// highest peak over `cams` (first on ties).
pub fn select_bandwidth(
    scene: &GaussianScene,
    clip: &GaussianFeatures,
    dino: &GaussianFeatures,
    q: &QueryEmbedding,
    canon: &CanonicalSet,
    cams: &[&Camera],
    cfg: &OpenVocabConfig,
) -> Result<BandwidthSelection> {
    if cfg.bandwidths.is_empty() {
        return Err(Error::validation("bandwidth candidate list is empty"));
    }
    if cams.is_empty() {
        return Err(Error::validation("no cameras to evaluate"));
    }
    let raster = RasterConfig::default();
    let (sc, kept) = scene.compact();
    let clip = clip.select_rows(&kept);
    let dino = dino.select_rows(&kept);
    let evaluated = cfg
        .bandwidths
        .par_iter()
        .map(|&b| {
            let refined = refine_language_features(&sc, &clip, &dino, b, cfg)?;
            let maps = cams
                .iter()
                .map(|cam| {
                    let r = render(&sc, cam, &refined.values, refined.channels, &raster)?;
                    let mut m = relevancy_map(&r.map, q, canon, cfg.temperature, cfg.kernel)?;
                    m.bandwidth = Some(b);
                    Ok(m)
                })
                .collect::<Result<Vec<_>>>()?;
            let peak = maps
                .iter()
                .flat_map(|m| m.scores.data.iter())
                .fold(f64::NEG_INFINITY, |a, &v| a.max(v as f64));
            Ok((peak, maps))
        })
        .collect::<Result<Vec<_>>>()?;
    let peaks: Vec<f64> = evaluated.iter().map(|e| e.0).collect();
    let mut best = 0;
    for (i, &p) in peaks.iter().enumerate() {
        if p > peaks[best] {
            best = i;
        }
    }
    let maps = evaluated.into_iter().nth(best).unwrap().1;
    Ok(BandwidthSelection {
        best_index: best,
        bandwidth: cfg.bandwidths[best],
        peaks,
        maps,
    })
}
