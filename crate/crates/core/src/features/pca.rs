//! Principal component reduction of patch or pixel embeddings.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Upper bound on rows used to estimate the covariance.
pub const DEFAULT_MAX_SAMPLES: usize = 2_000_000;
/// Reduced feature dimension used by the feature-map pipeline.
pub const DEFAULT_OUT_DIM: usize = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dim × out_dim`, row-major; columns are orthonormal principal axes.
    pub components: Vec<f64>,
    pub dim: usize,
    pub out_dim: usize,
    /// Variance along each component, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Total variance of the centered data.
    pub total_variance: f64,
}

impl Pca {
    /// Fits on `samples` (`rows × dim`, row-major). At most `max_samples`
    /// rows, drawn uniformly with `seed`, enter the covariance.
    pub fn fit(samples: &[f32], dim: usize, out_dim: usize, max_samples: usize, seed: u64) -> Result<Pca> {
        if dim == 0 || !samples.len().is_multiple_of(dim) {
            return Err(Error::validation(format!(
                "{} values do not form rows of dimension {dim}",
                samples.len()
            )));
        }
        let rows = samples.len() / dim;
        if out_dim == 0 || out_dim > rows.min(dim) {
            return Err(Error::validation(format!(
                "output dimension {out_dim} must be in 1..={} (rows {rows}, dim {dim})",
                rows.min(dim)
            )));
        }
        let picked: Vec<usize> = if rows > max_samples {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, rows, max_samples).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..rows).collect()
        };
        let m = picked.len() as f64;

        let mut mean = vec![0.0; dim];
        for &r in &picked {
            for (a, &v) in mean.iter_mut().zip(&samples[r * dim..(r + 1) * dim]) {
                *a += v as f64;
            }
        }
        mean.iter_mut().for_each(|a| *a /= m);

        let mut cov = DMatrix::<f64>::zeros(dim, dim);
        let mut centered = vec![0.0; dim];
        for &r in &picked {
            for ((c, &v), mu) in centered.iter_mut().zip(&samples[r * dim..(r + 1) * dim]).zip(&mean) {
                *c = v as f64 - mu;
            }
            for i in 0..dim {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..dim {
                    cov[(i, j)] += ci * centered[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[(i, j)] / m;
                cov[(i, j)] = v;
                cov[(j, i)] = v;
            }
        }
        let total_variance = cov.trace();

        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

        let mut components = vec![0.0; dim * out_dim];
        let mut explained_variance = Vec::with_capacity(out_dim);
        for (k, &e) in order.iter().take(out_dim).enumerate() {
            let col = eig.eigenvectors.column(e);
            let pivot = col.iter().copied().max_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap_or(1.0);
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for i in 0..dim {
                components[i * out_dim + k] = sign * col[i];
            }
            explained_variance.push(eig.eigenvalues[e].max(0.0));
        }
        Ok(Pca {
            mean,
            components,
            dim,
            out_dim,
            explained_variance,
            total_variance,
        })
    }

    /// Fraction of total variance captured by each component.
    pub fn explained_ratio(&self) -> Vec<f64> {
        if self.total_variance <= 0.0 {
            return vec![0.0; self.out_dim];
        }
        self.explained_variance
            .iter()
            .map(|v| v / self.total_variance)
            .collect()
    }

    /// Projects rows of dimension `dim` onto the components.
    pub fn project(&self, samples: &[f32]) -> Vec<f32> {
        let rows = samples.len() / self.dim;
        let mut out = vec![0.0f32; rows * self.out_dim];
        for r in 0..rows {
            let src = &samples[r * self.dim..(r + 1) * self.dim];
            let dst = &mut out[r * self.out_dim..(r + 1) * self.out_dim];
            for k in 0..self.out_dim {
                let mut acc = 0.0;
                for i in 0..self.dim {
                    acc += (src[i] as f64 - self.mean[i]) * self.components[i * self.out_dim + k];
                }
                dst[k] = acc as f32;
            }
        }
        out
    }

    /// Maps projected rows back to the input space.
    pub fn reconstruct(&self, projected: &[f32]) -> Vec<f64> {
        let rows = projected.len() / self.out_dim;
        let mut out = Vec::with_capacity(rows * self.dim);
        for r in 0..rows {
            let z = &projected[r * self.out_dim..(r + 1) * self.out_dim];
            for i in 0..self.dim {
                let mut v = self.mean[i];
                for (k, &zk) in z.iter().enumerate() {
                    v += zk as f64 * self.components[i * self.out_dim + k];
                }
                out.push(v);
            }
        }
        out
    }
}

/// Fits PCA on all rows (subsampled beyond [`DEFAULT_MAX_SAMPLES`]) and
/// returns the model with the projected rows.
pub fn pca_reduce(samples: &[f32], dim: usize, out_dim: usize) -> Result<(Pca, Vec<f32>)> {
    let pca = Pca::fit(samples, dim, out_dim, DEFAULT_MAX_SAMPLES, 0)?;
    let projected = pca.project(samples);
    Ok((pca, projected))
}
