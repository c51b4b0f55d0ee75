//! Dense 2D feature maps, per-Gaussian feature matrices and the utilities
//! that produce or post-process them.

pub mod container;
pub mod mask;
pub mod pca;
pub mod sliding;
pub mod threshold;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Per-pixel features, row-major `height × width × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
    pub camera_id: String,
    pub meta: BTreeMap<String, String>,
}

impl FeatureMap {
    pub fn zeros(height: usize, width: usize, channels: usize) -> FeatureMap {
        FeatureMap {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
            camera_id: String::new(),
            meta: BTreeMap::new(),
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<FeatureMap> {
        if channels == 0 {
            return Err(Error::validation("feature map needs at least one channel"));
        }
        if data.len() != height * width * channels {
            return Err(Error::validation(format!(
                "feature map data has {} values, expected {height}x{width}x{channels}",
                data.len()
            )));
        }
        Ok(FeatureMap {
            height,
            width,
            channels,
            data,
            camera_id: String::new(),
            meta: BTreeMap::new(),
        })
    }

    pub fn with_camera(mut self, id: impl Into<String>) -> FeatureMap {
        self.camera_id = id.into();
        self
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let o = (y * self.width + x) * self.channels;
        &self.data[o..o + self.channels]
    }

    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let o = (y * self.width + x) * self.channels;
        &mut self.data[o..o + self.channels]
    }

    /// Features of the pixel with row-major index `p`.
    pub fn at(&self, p: usize) -> &[f32] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    /// Scalar value of a single-channel map.
    pub fn value(&self, x: usize, y: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bilinear resize with half-pixel centers and clamped borders.
    pub fn resize_bilinear(&self, height: usize, width: usize) -> FeatureMap {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let c = self.channels;
        let mut out = FeatureMap::zeros(height, width, c);
        out.camera_id = self.camera_id.clone();
        out.meta = self.meta.clone();
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        for y in 0..height {
            let (y0, y1, fy) = sample_coord((y as f64 + 0.5) * sy - 0.5, self.height);
            for x in 0..width {
                let (x0, x1, fx) = sample_coord((x as f64 + 0.5) * sx - 0.5, self.width);
                let dst = out.pixel_mut(x, y);
                for (ch, d) in dst.iter_mut().enumerate() {
                    let v00 = self.pixel(x0, y0)[ch] as f64;
                    let v01 = self.pixel(x1, y0)[ch] as f64;
                    let v10 = self.pixel(x0, y1)[ch] as f64;
                    let v11 = self.pixel(x1, y1)[ch] as f64;
                    let top = v00 + (v01 - v00) * fx;
                    let bot = v10 + (v11 - v10) * fx;
                    *d = (top + (bot - top) * fy) as f32;
                }
            }
        }
        out
    }
}

/// Neighbor indices and interpolation fraction for a continuous source
/// coordinate, clamped to `[0, len - 1]`.
pub(crate) fn sample_coord(s: f64, len: usize) -> (usize, usize, f64) {
    let s = s.clamp(0.0, (len - 1) as f64);
    let i0 = s.floor() as usize;
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, s - i0 as f64)
}

/// Per-Gaussian features, row-major `rows × channels`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFeatures {
    pub rows: usize,
    pub channels: usize,
    pub values: Vec<f32>,
    pub channel_names: Option<Vec<String>>,
}

impl GaussianFeatures {
    pub fn zeros(rows: usize, channels: usize) -> GaussianFeatures {
        GaussianFeatures {
            rows,
            channels,
            values: vec![0.0; rows * channels],
            channel_names: None,
        }
    }

    pub fn from_vec(rows: usize, channels: usize, values: Vec<f32>) -> Result<GaussianFeatures> {
        if values.len() != rows * channels {
            return Err(Error::validation(format!(
                "feature matrix has {} values, expected {rows}x{channels}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("feature matrix has non-finite entries"));
        }
        Ok(GaussianFeatures {
            rows,
            channels,
            values,
            channel_names: None,
        })
    }

    /// Single-channel features from a vector.
    pub fn from_scalars(values: &[f64]) -> GaussianFeatures {
        GaussianFeatures {
            rows: values.len(),
            channels: 1,
            values: values.iter().map(|&v| v as f32).collect(),
            channel_names: None,
        }
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f32] {
        &mut self.values[i * self.channels..(i + 1) * self.channels]
    }

    pub fn column(&self, ch: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.row(i)[ch] as f64).collect()
    }

    /// Rows restricted to `indices`, in that order.
    pub fn select_rows(&self, indices: &[usize]) -> GaussianFeatures {
        let mut values = Vec::with_capacity(indices.len() * self.channels);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        GaussianFeatures {
            rows: indices.len(),
            channels: self.channels,
            values,
            channel_names: self.channel_names.clone(),
        }
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.values.iter().map(|&v| v as f64).collect()
    }
}
