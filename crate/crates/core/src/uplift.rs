//! Learning-free uplifting: per-Gaussian features as the weight-normalized
//! transpose of the rendering operator, `f = D⁻¹ Wᵀ F`.
//!
//! `W` is never materialized. Each view is rasterized into a
//! [`FragmentBuffer`], its fragments are regrouped by Gaussian, and every
//! Gaussian row accumulates `Σ w · F_p` and `β = Σ w` independently. Rows
//! are summed in view order then pixel order, so results do not depend on
//! the number of worker threads.

use std::borrow::Cow;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::{FeatureMap, GaussianFeatures};
use crate::raster::{rasterize_weights, render_buffer, FragmentBuffer, RasterConfig};
use crate::scene::{Camera, GaussianScene};

/// One training view: a camera and the 2D features observed from it.
#[derive(Debug, Clone, Copy)]
pub struct Frame<'a> {
    pub camera: &'a Camera,
    pub features: &'a FeatureMap,
}

impl<'a> Frame<'a> {
    pub fn new(camera: &'a Camera, features: &'a FeatureMap) -> Frame<'a> {
        Frame { camera, features }
    }

    /// Feature map at the camera resolution (bilinear if it differs).
    fn resized(&self) -> Cow<'a, FeatureMap> {
        let f = self.features;
        if f.height == self.camera.height && f.width == self.camera.width {
            Cow::Borrowed(f)
        } else {
            Cow::Owned(f.resize_bilinear(self.camera.height, self.camera.width))
        }
    }
}

fn check_frames(frames: &[Frame]) -> Result<usize> {
    let first = frames
        .first()
        .ok_or_else(|| Error::validation("uplifting needs at least one frame"))?;
    let c = first.features.channels;
    for f in frames {
        if f.features.channels != c {
            return Err(Error::validation(format!(
                "channel mismatch: view {:?} has {} channels, expected {c}",
                f.camera.id, f.features.channels
            )));
        }
        if !f.features.is_finite() {
            return Err(Error::validation(format!(
                "feature map for view {:?} has non-finite values",
                f.camera.id
            )));
        }
    }
    Ok(c)
}

/// Running sums `Σ w·F`, `Σ w` and `Σ 1` per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct UpliftAccumulator {
    pub rows: usize,
    pub channels: usize,
    pub numerator: Vec<f64>,
    pub beta: Vec<f64>,
    pub count: Vec<f64>,
}

impl UpliftAccumulator {
    pub fn new(rows: usize, channels: usize) -> UpliftAccumulator {
        UpliftAccumulator {
            rows,
            channels,
            numerator: vec![0.0; rows * channels],
            beta: vec![0.0; rows],
            count: vec![0.0; rows],
        }
    }

    /// Adds `Wᵀ F` for one view. `features` must match the buffer size.
    pub fn add_view(&mut self, buffer: &FragmentBuffer, features: &FeatureMap) -> Result<()> {
        let c = self.channels;
        if features.channels != c {
            return Err(Error::validation(format!(
                "feature map has {} channels, accumulator {c}",
                features.channels
            )));
        }
        if features.width != buffer.width || features.height != buffer.height {
            return Err(Error::validation(format!(
                "feature map is {}x{}, fragment buffer {}x{}",
                features.width, features.height, buffer.width, buffer.height
            )));
        }

        // regroup fragments by Gaussian, keeping pixel order within a row
        let mut start = vec![0usize; self.rows + 1];
        for f in &buffer.fragments {
            let g = f.gaussian as usize;
            if g >= self.rows {
                return Err(Error::validation(format!(
                    "fragment references Gaussian {g} but accumulator has {} rows",
                    self.rows
                )));
            }
            start[g + 1] += 1;
        }
        for i in 0..self.rows {
            start[i + 1] += start[i];
        }
        let mut cursor = start.clone();
        let mut entries = vec![(0u32, 0f32); buffer.fragments.len()];
        for p in 0..buffer.pixel_count() {
            for f in buffer.pixel(p) {
                let slot = &mut cursor[f.gaussian as usize];
                entries[*slot] = (p as u32, f.weight);
                *slot += 1;
            }
        }

        let data = &features.data;
        self.numerator
            .par_chunks_mut(c)
            .zip(self.beta.par_iter_mut())
            .zip(self.count.par_iter_mut())
            .enumerate()
            .with_min_len(64)
            .for_each(|(g, ((num, beta), count))| {
                for &(p, w) in &entries[start[g]..start[g + 1]] {
                    let w = w as f64;
                    *beta += w;
                    *count += 1.0;
                    let px = &data[p as usize * c..][..c];
                    for (n, &v) in num.iter_mut().zip(px) {
                        *n += w * v as f64;
                    }
                }
            });
        Ok(())
    }

    /// `D⁻¹ Wᵀ F`; rows with `β = 0` stay zero.
    pub fn finish_weighted(&self) -> GaussianFeatures {
        self.normalized_by(&self.beta)
    }

    /// Numerator divided by the number of fragments instead of `β`.
    pub fn finish_count(&self) -> GaussianFeatures {
        self.normalized_by(&self.count)
    }

    fn normalized_by(&self, denom: &[f64]) -> GaussianFeatures {
        let c = self.channels;
        let mut out = GaussianFeatures::zeros(self.rows, c);
        for (i, &d) in denom.iter().enumerate() {
            if d > 0.0 {
                for (o, &n) in out.row_mut(i).iter_mut().zip(&self.numerator[i * c..(i + 1) * c]) {
                    *o = (n / d) as f32;
                }
            }
        }
        out
    }
}

/// Accumulates all frames in view order.
pub fn accumulate(scene: &GaussianScene, frames: &[Frame], cfg: &RasterConfig) -> Result<UpliftAccumulator> {
    let c = check_frames(frames)?;
    let mut acc = UpliftAccumulator::new(scene.len(), c);
    for frame in frames {
        let buffer = rasterize_weights(scene, frame.camera, cfg);
        acc.add_view(&buffer, &frame.resized())?;
    }
    Ok(acc)
}

/// Uplifted features together with the per-Gaussian importance `β`.
#[derive(Debug, Clone, PartialEq)]
pub struct Uplifted {
    pub features: GaussianFeatures,
    pub beta: Vec<f64>,
}

impl Uplifted {
    /// Gaussians never rendered in any frame; their features are zero.
    pub fn unseen(&self) -> Vec<usize> {
        (0..self.beta.len()).filter(|&i| self.beta[i] == 0.0).collect()
    }
}

pub fn uplift(scene: &GaussianScene, frames: &[Frame], cfg: &RasterConfig) -> Result<Uplifted> {
    let acc = accumulate(scene, frames, cfg)?;
    Ok(Uplifted {
        features: acc.finish_weighted(),
        beta: acc.beta,
    })
}

/// Ablation baseline normalizing by fragment count rather than by weight.
pub fn uplift_count_normalized(
    scene: &GaussianScene,
    frames: &[Frame],
    cfg: &RasterConfig,
) -> Result<GaussianFeatures> {
    Ok(accumulate(scene, frames, cfg)?.finish_count())
}

/// Keeps the `ceil(keep_fraction · n_active)` active Gaussians with the
/// largest `β` (ties by index) and deactivates the rest.
pub fn prune_by_importance(scene: &GaussianScene, beta: &[f64], keep_fraction: f64) -> Result<GaussianScene> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::validation(format!(
            "keep fraction {keep_fraction} outside (0, 1]"
        )));
    }
    if beta.len() != scene.len() {
        return Err(Error::validation(format!(
            "beta has {} entries for {} Gaussians",
            beta.len(),
            scene.len()
        )));
    }
    let mut order = scene.active_indices();
    let keep = (keep_fraction * order.len() as f64).ceil() as usize;
    order.sort_by(|&a, &b| beta[b].total_cmp(&beta[a]).then(a.cmp(&b)));
    let mut out = scene.clone();
    for &i in &order[keep.min(order.len())..] {
        out.active[i] = false;
    }
    Ok(out)
}

/// Result of gradient refinement.
#[derive(Debug, Clone)]
pub struct Refinement {
    pub features: GaussianFeatures,
    /// `½‖F − W f‖²` before each step and after the last one.
    pub loss: Vec<f64>,
}

/// Preconditioned gradient descent on `½‖F − W f‖²`:
/// `f ← f − step · D⁻¹ Wᵀ (W f − F)`.
///
/// Starting from zero, one unit step reproduces [`uplift`].
pub fn refine_by_gradient(
    scene: &GaussianScene,
    frames: &[Frame],
    f0: &GaussianFeatures,
    steps: usize,
    step_size: f64,
    cfg: &RasterConfig,
) -> Result<Refinement> {
    let c = check_frames(frames)?;
    if f0.rows != scene.len() || f0.channels != c {
        return Err(Error::validation(format!(
            "initial features are {}x{}, expected {}x{c}",
            f0.rows,
            f0.channels,
            scene.len()
        )));
    }
    let views: Vec<(FragmentBuffer, Cow<FeatureMap>)> = frames
        .iter()
        .map(|f| (rasterize_weights(scene, f.camera, cfg), f.resized()))
        .collect();

    let mut f = f0.clone();
    let mut loss = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let mut acc = UpliftAccumulator::new(scene.len(), c);
        let mut total = 0.0;
        for (buffer, target) in &views {
            let mut residual = render_buffer(buffer, &f.values, c)?.map;
            for (r, &t) in residual.data.iter_mut().zip(&target.data) {
                *r -= t;
                total += 0.5 * (*r as f64) * (*r as f64);
            }
            if step < steps {
                acc.add_view(buffer, &residual)?;
            }
        }
        if !total.is_finite() {
            return Err(Error::Numeric(format!("non-finite loss at step {step}")));
        }
        loss.push(total);
        if step == steps {
            break;
        }
        for i in 0..scene.len() {
            let b = acc.beta[i];
            if b <= 0.0 {
                continue;
            }
            let grad = &acc.numerator[i * c..(i + 1) * c];
            for (v, g) in f.row_mut(i).iter_mut().zip(grad) {
                *v = (*v as f64 - step_size * g / b) as f32;
            }
        }
        if f.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite features after step {}",
                step + 1
            )));
        }
    }
    Ok(Refinement { features: f, loss })
}

/// Geometry-only baseline: uplift a single-view mask and render it elsewhere.
pub fn reproject_mask(
    scene: &GaussianScene,
    ref_cam: &Camera,
    ref_mask: &FeatureMap,
    target_cam: &Camera,
    cfg: &RasterConfig,
) -> Result<FeatureMap> {
    if ref_mask.channels != 1 {
        return Err(Error::validation("reference mask must have one channel"));
    }
    let up = uplift(scene, &[Frame::new(ref_cam, ref_mask)], cfg)?;
    let out = render_buffer(&rasterize_weights(scene, target_cam, cfg), &up.features.values, 1)?;
    Ok(out.map.with_camera(target_cam.id.clone()))
}
