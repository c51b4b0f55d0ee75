//! Feature-similarity kNN graph over Gaussian centers and power-iteration
//! diffusion on it.
//!
//! Node features are ℓ₂-normalized before any similarity is computed. The
//! adjacency is `A_ij = S(f_i, f_j) · √(P_i P_j)` for `j` among the `k`
//! nearest centers of `i`, where `S(a, b) = exp(−‖a − b‖² / (b_e · s²))`, `s`
//! is the median pairwise feature distance and `P` an optional unary term.

mod knn;
mod logistic;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::container::Tensor;
use crate::features::GaussianFeatures;

pub use knn::knn_graph;
pub use logistic::{fit_logistic, LogisticConfig, LogisticModel};

/// Default neighbour count.
pub const DEFAULT_K: usize = 16;
/// Default number of sampled pairs for the median distance.
pub const DEFAULT_MEDIAN_SAMPLES: usize = 1_000_000;
/// Default diffusion steps for mask segmentation.
pub const DEFAULT_SEGMENT_STEPS: usize = 100;
/// Default diffusion steps for refining language embeddings.
pub const DEFAULT_REFINE_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum UnaryMode {
    #[default]
    None,
    CosineToMean,
    Logistic,
}

impl std::str::FromStr for UnaryMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(UnaryMode::None),
            "cosine_to_mean" | "cosine" => Ok(UnaryMode::CosineToMean),
            "logistic" => Ok(UnaryMode::Logistic),
            other => Err(Error::validation(format!(
                "unknown unary mode '{other}' (expected none, cosine_to_mean or logistic)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphParams {
    pub k: usize,
    pub bandwidth_edge: f64,
    pub bandwidth_unary: f64,
    pub unary_mode: UnaryMode,
    pub median_sample_size: usize,
    /// Replace `A` by `max(A, Aᵀ)`.
    pub symmetrize: bool,
    /// Seed for the median pair sample.
    pub seed: u64,
}

impl Default for GraphParams {
    fn default() -> Self {
        GraphParams {
            k: DEFAULT_K,
            bandwidth_edge: 1.0,
            bandwidth_unary: 1.0,
            unary_mode: UnaryMode::None,
            median_sample_size: DEFAULT_MEDIAN_SAMPLES,
            symmetrize: false,
            seed: 0,
        }
    }
}

impl GraphParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::validation("k must be at least 1"));
        }
        for (name, b) in [("edge", self.bandwidth_edge), ("unary", self.bandwidth_unary)] {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::validation(format!(
                    "{name} bandwidth must be positive and finite, got {b}"
                )));
            }
        }
        if self.median_sample_size == 0 {
            return Err(Error::validation("median sample size must be positive"));
        }
        Ok(())
    }
}

/// Sparse nonnegative adjacency in compressed row form plus the unary term.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureGraph {
    pub n: usize,
    pub offsets: Vec<usize>,
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
    /// `P(f_i)` per node, all ones without a unary term.
    pub unary: Vec<f64>,
    /// Median pairwise feature distance used by the edge kernel.
    pub scale: f64,
    pub k: usize,
}

impl FeatureGraph {
    /// Sets `P` to zero on `nodes`, which zeroes every edge touching them.
    pub fn suppress(&mut self, nodes: &[usize]) {
        if nodes.is_empty() {
            return;
        }
        let mut off = vec![false; self.n];
        for &i in nodes {
            if i < self.n {
                off[i] = true;
                self.unary[i] = 0.0;
            }
        }
        for i in 0..self.n {
            for e in self.offsets[i]..self.offsets[i + 1] {
                if off[i] || off[self.indices[e] as usize] {
                    self.values[e] = 0.0;
                }
            }
        }
    }
}

/// `exp(−‖f_i − f_j‖² / (b · s²))`.
pub fn rbf_similarity(fi: &[f64], fj: &[f64], scale: f64, bandwidth: f64) -> Result<f64> {
    if !(scale > 0.0) || !(bandwidth > 0.0) {
        return Err(Error::validation(format!(
            "similarity needs positive scale and bandwidth, got {scale} and {bandwidth}"
        )));
    }
    Ok(kernel(dist2(fi, fj), scale, bandwidth))
}

fn kernel(d2: f64, scale: f64, bandwidth: f64) -> f64 {
    (-d2 / (bandwidth * scale * scale)).exp()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Rows of `features` scaled to unit ℓ₂ norm; zero rows stay zero.
pub fn normalized_rows(features: &GaussianFeatures) -> Vec<f64> {
    let mut out = features.to_f64();
    let c = features.channels;
    for row in out.chunks_mut(c.max(1)) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Median of `‖f_i − f_j‖` over all pairs `i < j`, or over `sample_size`
/// uniformly drawn pairs when there are more pairs than that. An even count
/// averages the two middle values.
pub fn median_pairwise_distance(rows: &[f64], dim: usize, sample_size: usize, seed: u64) -> Result<f64> {
    if dim == 0 || !rows.len().is_multiple_of(dim) {
        return Err(Error::validation("feature rows do not match the channel count"));
    }
    let n = rows.len() / dim;
    if n < 2 {
        return Err(Error::validation("median distance needs at least two nodes"));
    }
    let row = |i: usize| &rows[i * dim..(i + 1) * dim];
    let pairs = n as u128 * (n as u128 - 1) / 2;
    let mut d: Vec<f64> = if pairs <= sample_size as u128 {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|i| (i + 1..n).map(move |j| dist2(row(i), row(j)).sqrt()))
            .collect()
    } else {
        let mut rng = crate::rng::seeded(seed);
        (0..sample_size)
            .map(|_| {
                let i = crate::rng::index(&mut rng, n);
                let mut j = crate::rng::index(&mut rng, n - 1);
                if j >= i {
                    j += 1;
                }
                dist2(row(i), row(j)).sqrt()
            })
            .collect()
    };
    let m = d.len();
    let (_, hi, _) = d.select_nth_unstable_by(m / 2, f64::total_cmp);
    let hi = *hi;
    if m % 2 == 1 {
        return Ok(hi);
    }
    let lo = d[..m / 2].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (lo + hi))
}

/// Builds the graph of Gaussians at `centers` with per-row `features`.
///
/// `anchors` supplies the foreground nodes for the unary term and must be
/// non-empty unless `params.unary_mode` is `None`.
pub fn build_graph(
    centers: &[[f64; 3]],
    features: &GaussianFeatures,
    params: &GraphParams,
    anchors: Option<&[usize]>,
) -> Result<FeatureGraph> {
    params.validate()?;
    let n = centers.len();
    if features.rows != n {
        return Err(Error::validation(format!(
            "{} feature rows for {n} Gaussians",
            features.rows
        )));
    }
    let c = features.channels;
    let rows = normalized_rows(features);
    let row = |i: usize| &rows[i * c..(i + 1) * c];

    let mut scale = median_pairwise_distance(&rows, c, params.median_sample_size, params.seed)?;
    if !(scale > 0.0) {
        log::warn!("all sampled feature distances are zero; using unit kernel scale");
        scale = 1.0;
    }

    let anchors = anchors.unwrap_or(&[]);
    if let Some(&bad) = anchors.iter().find(|&&a| a >= n) {
        return Err(Error::validation(format!("anchor {bad} out of range {n}")));
    }
    let unary: Vec<f64> = match params.unary_mode {
        UnaryMode::None => vec![1.0; n],
        UnaryMode::CosineToMean => {
            if anchors.is_empty() {
                return Err(Error::validation("cosine_to_mean unary term needs anchors"));
            }
            let mut mean = vec![0.0; c];
            for &a in anchors {
                for (m, v) in mean.iter_mut().zip(row(a)) {
                    *m += v;
                }
            }
            mean.iter_mut().for_each(|m| *m /= anchors.len() as f64);
            (0..n)
                .map(|i| kernel(dist2(row(i), &mean), scale, params.bandwidth_unary).max(f64::MIN_POSITIVE))
                .collect()
        }
        UnaryMode::Logistic => {
            if anchors.is_empty() {
                return Err(Error::validation("logistic unary term needs anchors"));
            }
            let model = fit_logistic(&rows, c, anchors, &LogisticConfig::default())?;
            (0..n)
                .map(|i| {
                    model
                        .predict(row(i))
                        .powf(1.0 / params.bandwidth_unary)
                        .max(f64::MIN_POSITIVE)
                })
                .collect()
        }
    };

    let neighbours = knn_graph(centers, params.k)?;
    let sqrt_p: Vec<f64> = unary.iter().map(|p| p.sqrt()).collect();
    let weights: Vec<Vec<(u32, f64)>> = neighbours
        .par_iter()
        .enumerate()
        .map(|(i, nb)| {
            let mut w: Vec<(u32, f64)> = nb
                .iter()
                .map(|&j| {
                    let j_us = j as usize;
                    let s = kernel(dist2(row(i), row(j_us)), scale, params.bandwidth_edge);
                    (j, s * sqrt_p[i] * sqrt_p[j_us])
                })
                .collect();
            w.sort_by_key(|e| e.0);
            w
        })
        .collect();
    let weights = if params.symmetrize { symmetrize(weights) } else { weights };

    let mut offsets = Vec::with_capacity(n + 1);
    offsets.push(0);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    for w in weights {
        for (j, v) in w {
            indices.push(j);
            values.push(v);
        }
        offsets.push(indices.len());
    }
    Ok(FeatureGraph {
        n,
        offsets,
        indices,
        values,
        unary,
        scale,
        k: params.k,
    })
}

/// `max(A, Aᵀ)` on sorted adjacency lists.
fn symmetrize(rows: Vec<Vec<(u32, f64)>>) -> Vec<Vec<(u32, f64)>> {
    let mut out = rows.clone();
    for (i, row) in rows.iter().enumerate() {
        for &(j, v) in row {
            let target = &mut out[j as usize];
            match target.binary_search_by_key(&(i as u32), |e| e.0) {
                Ok(pos) => target[pos].1 = target[pos].1.max(v),
                Err(pos) => target.insert(pos, (i as u32, v)),
            }
        }
    }
    out
}

impl FeatureGraph {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let r = self.offsets[i]..self.offsets[i + 1];
        (&self.indices[r.clone()], &self.values[r])
    }

    /// `A x`.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "vector length must equal node count");
        (0..self.n)
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                let (idx, val) = self.row(i);
                idx.iter().zip(val).map(|(&j, &v)| v * x[j as usize]).sum()
            })
            .collect()
    }

    /// `A X` for row-major `X` with `channels` columns.
    pub fn apply_matrix(&self, x: &[f64], channels: usize) -> Vec<f64> {
        assert_eq!(x.len(), self.n * channels, "matrix must have one row per node");
        let mut out = vec![0.0; x.len()];
        out.par_chunks_mut(channels.max(1))
            .with_min_len(64)
            .enumerate()
            .for_each(|(i, dst)| {
                let (idx, val) = self.row(i);
                for (&j, &v) in idx.iter().zip(val) {
                    let src = &x[j as usize * channels..(j as usize + 1) * channels];
                    for (d, s) in dst.iter_mut().zip(src) {
                        *d += v * s;
                    }
                }
            });
        out
    }

    /// Dense row-major copy, for inspection and tests.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            let (idx, val) = self.row(i);
            for (&j, &v) in idx.iter().zip(val) {
                d[i * self.n + j as usize] = v;
            }
        }
        d
    }

    /// Writes `<prefix>.offsets.splf`, `<prefix>.indices.splf` (u32) and
    /// `<prefix>.values.splf` (f32).
    pub fn write_csr(&self, prefix: &Path) -> Result<()> {
        let with_suffix = |s: &str| {
            let mut p = prefix.as_os_str().to_owned();
            p.push(s);
            std::path::PathBuf::from(p)
        };
        let u32s = |v: Vec<u32>| Tensor::u32(vec![v.len() as u64], v);
        let offsets = self
            .offsets
            .iter()
            .map(|&o| u32::try_from(o).map_err(|_| Error::validation("graph too large for u32 offsets")))
            .collect::<Result<Vec<u32>>>()?;
        u32s(offsets)?.write(&with_suffix(".offsets.splf"))?;
        u32s(self.indices.clone())?.write(&with_suffix(".indices.splf"))?;
        let values: Vec<f32> = self.values.iter().map(|&v| v as f32).collect();
        Tensor::f32(vec![values.len() as u64], values)?.write(&with_suffix(".values.splf"))
    }
}

/// Diffusion iterate `g_t` after `step` multiplies.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionState {
    pub g: Vec<f64>,
    pub step: usize,
    pub anchors: Vec<usize>,
}

impl DiffusionState {
    pub fn new(g0: Vec<f64>, anchors: Vec<usize>) -> Result<DiffusionState> {
        if g0.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("initial diffusion vector is not finite"));
        }
        Ok(DiffusionState { g: g0, step: 0, anchors })
    }

    /// Runs `steps` more iterations `g ← A (g / ‖g‖₂)`. A zero iterate
    /// stays zero.
    pub fn advance(&mut self, graph: &FeatureGraph, steps: usize) -> Result<()> {
        if self.g.len() != graph.n {
            return Err(Error::validation(format!(
                "diffusion vector has {} entries for {} nodes",
                self.g.len(),
                graph.n
            )));
        }
        for _ in 0..steps {
            let norm = self.g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                log::warn!("diffusion vector is zero; diffusion is undefined");
                self.step += 1;
                continue;
            }
            let unit: Vec<f64> = self.g.iter().map(|v| v / norm).collect();
            self.g = graph.apply(&unit);
            self.step += 1;
            if self.g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!(
                    "diffusion diverged at step {}",
                    self.step
                )));
            }
        }
        Ok(())
    }
}

/// `T` power-method steps from `g0`; the result is the raw final product.
pub fn diffuse(graph: &FeatureGraph, g0: &[f64], steps: usize) -> Result<DiffusionState> {
    let mut s = DiffusionState::new(g0.to_vec(), Vec::new())?;
    s.advance(graph, steps)?;
    Ok(s)
}

/// How a multi-channel iterate is renormalized before each multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixNorm {
    #[default]
    Frobenius,
    PerColumn,
}

/// Matrix-valued diffusion of row-major `g0` with `channels` columns.
pub fn diffuse_matrix(
    graph: &FeatureGraph,
    g0: &[f64],
    channels: usize,
    steps: usize,
    norm: MatrixNorm,
) -> Result<Vec<f64>> {
    if channels == 0 || g0.len() != graph.n * channels {
        return Err(Error::validation(format!(
            "matrix of {} values does not have {} rows of {channels} channels",
            g0.len(),
            graph.n
        )));
    }
    if g0.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("initial diffusion matrix is not finite"));
    }
    let mut g = g0.to_vec();
    for step in 0..steps {
        let mut scale = vec![0.0; channels];
        match norm {
            MatrixNorm::Frobenius => {
                let f = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                scale.iter_mut().for_each(|s| *s = f);
            }
            MatrixNorm::PerColumn => {
                for row in g.chunks(channels) {
                    for (s, v) in scale.iter_mut().zip(row) {
                        *s += v * v;
                    }
                }
                scale.iter_mut().for_each(|s| *s = s.sqrt());
            }
        }
        if scale.iter().all(|&s| s == 0.0) {
            log::warn!("diffusion matrix is zero; diffusion is undefined");
            return Ok(g);
        }
        for row in g.chunks_mut(channels) {
            for (v, &s) in row.iter_mut().zip(&scale) {
                if s > 0.0 {
                    *v /= s;
                }
            }
        }
        g = graph.apply_matrix(&g, channels);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("diffusion diverged at step {}", step + 1)));
        }
    }
    Ok(g)
}
