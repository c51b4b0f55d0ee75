//! Pixel-level feature maps from patch embeddings of overlapping crops.
//!
//! Each crop's patch grid is bilinearly upsampled onto its pixel rectangle
//! and overlapping crops are averaged with uniform weights.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::container::Tensor;
use super::{sample_coord, FeatureMap};
use crate::error::{Error, Result};

/// Pixel rectangle `[x, x + width) × [y, y + height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Embeddings of one crop, `rows × cols × channels`, one per patch.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    pub rows: usize,
    pub cols: usize,
    pub channels: usize,
    pub patches: Vec<f32>,
    pub crop: CropRect,
    pub patch_size: usize,
    pub camera_id: String,
}

#[derive(Serialize, Deserialize)]
struct PatchSidecar {
    camera_id: String,
    crop_rect: [usize; 4],
    patch_size: usize,
}

impl PatchGrid {
    pub fn new(
        rows: usize,
        cols: usize,
        channels: usize,
        patches: Vec<f32>,
        crop: CropRect,
        patch_size: usize,
    ) -> Result<PatchGrid> {
        let g = PatchGrid {
            rows,
            cols,
            channels,
            patches,
            crop,
            patch_size,
            camera_id: String::new(),
        };
        g.validate()?;
        Ok(g)
    }

    /// Grid whose every patch holds `value`.
    pub fn constant(rows: usize, cols: usize, value: &[f32], crop: CropRect, patch_size: usize) -> Result<PatchGrid> {
        let patches = value.iter().copied().cycle().take(rows * cols * value.len()).collect();
        PatchGrid::new(rows, cols, value.len(), patches, crop, patch_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 || self.channels == 0 || self.patch_size == 0 {
            return Err(Error::validation("patch grid dimensions must be positive"));
        }
        if self.patches.len() != self.rows * self.cols * self.channels {
            return Err(Error::validation(format!(
                "patch grid holds {} values, expected {}x{}x{}",
                self.patches.len(),
                self.rows,
                self.cols,
                self.channels
            )));
        }
        if self.crop.width != self.cols * self.patch_size || self.crop.height != self.rows * self.patch_size {
            return Err(Error::validation(format!(
                "crop {}x{} is not covered exactly by {}x{} patches of {} px",
                self.crop.width, self.crop.height, self.cols, self.rows, self.patch_size
            )));
        }
        Ok(())
    }

    fn patch(&self, r: usize, c: usize) -> &[f32] {
        let o = (r * self.cols + c) * self.channels;
        &self.patches[o..o + self.channels]
    }

    /// Reads `<path>` (SPLF, rank 3) and its `<path>.json` sidecar.
    pub fn read(path: &Path) -> Result<PatchGrid> {
        let t = Tensor::read(path)?;
        let map = FeatureMap::try_from(t)?;
        let side_path = sidecar_path(path);
        let text = std::fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
        let side: PatchSidecar = serde_json::from_str(&text)
            .map_err(|e| Error::format(side_path.display().to_string(), e.to_string()))?;
        let [x, y, width, height] = side.crop_rect;
        let mut g = PatchGrid::new(
            map.height,
            map.width,
            map.channels,
            map.data,
            CropRect { x, y, width, height },
            side.patch_size,
        )?;
        g.camera_id = side.camera_id;
        Ok(g)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let map = FeatureMap::from_vec(self.rows, self.cols, self.channels, self.patches.clone())?;
        Tensor::from(&map).write(path)?;
        let side = PatchSidecar {
            camera_id: self.camera_id.clone(),
            crop_rect: [self.crop.x, self.crop.y, self.crop.width, self.crop.height],
            patch_size: self.patch_size,
        };
        let side_path = sidecar_path(path);
        std::fs::write(&side_path, serde_json::to_string_pretty(&side).unwrap())
            .map_err(|e| Error::io(&side_path, e))
    }
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// Averages upsampled crops into a `height × width` map. Pixels outside
/// every crop stay zero; their count is stored in `meta["uncovered_pixels"]`.
pub fn sliding_window_aggregate(grids: &[PatchGrid], height: usize, width: usize) -> Result<FeatureMap> {
    let first = grids
        .first()
        .ok_or_else(|| Error::validation("no patch grids to aggregate"))?;
    let c = first.channels;
    for g in grids {
        g.validate()?;
        if g.channels != c {
            return Err(Error::validation(format!(
                "patch grids mix {} and {c} channels",
                g.channels
            )));
        }
        if g.crop.x + g.crop.width > width || g.crop.y + g.crop.height > height {
            return Err(Error::validation(format!(
                "crop {:?} exceeds the {width}x{height} image",
                g.crop
            )));
        }
    }

    let mut sum = vec![0.0f64; height * width * c];
    let mut hits = vec![0u32; height * width];
    for g in grids {
        let ps = g.patch_size as f64;
        for ly in 0..g.crop.height {
            let (r0, r1, fy) = sample_coord((ly as f64 + 0.5) / ps - 0.5, g.rows);
            for lx in 0..g.crop.width {
                let (c0, c1, fx) = sample_coord((lx as f64 + 0.5) / ps - 0.5, g.cols);
                let p = (g.crop.y + ly) * width + g.crop.x + lx;
                hits[p] += 1;
                let dst = &mut sum[p * c..(p + 1) * c];
                let (a, b, d, e) = (g.patch(r0, c0), g.patch(r0, c1), g.patch(r1, c0), g.patch(r1, c1));
                for ch in 0..c {
                    let top = a[ch] as f64 * (1.0 - fx) + b[ch] as f64 * fx;
                    let bot = d[ch] as f64 * (1.0 - fx) + e[ch] as f64 * fx;
                    dst[ch] += top * (1.0 - fy) + bot * fy;
                }
            }
        }
    }

    let mut out = FeatureMap::zeros(height, width, c);
    out.camera_id = first.camera_id.clone();
    let mut uncovered = 0usize;
    for (p, &n) in hits.iter().enumerate() {
        if n == 0 {
            uncovered += 1;
            continue;
        }
        for ch in 0..c {
            out.data[p * c + ch] = (sum[p * c + ch] / n as f64) as f32;
        }
    }
    if uncovered > 0 {
        log::warn!("{uncovered} pixels are not covered by any crop");
    }
    out.meta.insert("uncovered_pixels".into(), uncovered.to_string());
    Ok(out)
}
