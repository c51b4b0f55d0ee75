//! Synthetic scenes, brute-force reference implementations and timing.
//!
//! The dense reference builds the rendering weight matrix `W` one pixel at a
//! time from its own projection and blending loops. It shares no code with
//! the tiled rasterizer and serves as the ground truth for it.

use std::time::Instant;

use nalgebra::{Matrix2, Matrix3, Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::raster::{rasterize_weights, render, RasterConfig};
use crate::scene::{sh, Camera, Gaussian, GaussianScene};
use crate::uplift::{uplift, Frame};

/// Layout of the two-cluster benchmark scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_per_cluster: usize,
    pub cluster_centers: [[f64; 3]; 2],
    pub cluster_radius: f64,
    pub gaussian_sigma: f64,
    pub opacity: f64,
    pub colors: [[f64; 3]; 2],
    pub feature_dim: usize,
    /// Per-pixel standard deviation of the noise added to feature maps.
    pub noise: f64,
    pub n_views: usize,
    pub width: usize,
    pub height: usize,
    pub focal: f64,
    pub ring_radius: f64,
    pub ring_height: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_per_cluster: 500,
            cluster_centers: [[-0.6, 0.0, 0.0], [0.6, 0.0, 0.0]],
            cluster_radius: 0.35,
            gaussian_sigma: 0.06,
            opacity: 0.9,
            colors: [[0.85, 0.2, 0.15], [0.15, 0.3, 0.85]],
            feature_dim: 8,
            noise: 0.1,
            n_views: 12,
            width: 96,
            height: 96,
            focal: 100.0,
            ring_radius: 3.0,
            ring_height: 1.6,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_cluster == 0 || self.n_views == 0 || self.width == 0 || self.height == 0 {
            return Err(Error::validation("synthetic spec sizes must be positive"));
        }
        if self.feature_dim < 2 {
            return Err(Error::validation("feature_dim must be at least 2"));
        }
        if !(self.opacity > 0.0 && self.opacity < 1.0) {
            return Err(Error::validation("opacity must lie in (0, 1)"));
        }
        if !(self.cluster_radius > 0.0 && self.gaussian_sigma > 0.0 && self.noise >= 0.0) {
            return Err(Error::validation("radius and sigma must be positive, noise nonnegative"));
        }
        let [a, b] = self.cluster_centers;
        let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
        if d <= 2.0 * self.cluster_radius {
            return Err(Error::validation(format!(
                "clusters overlap: center distance {d:.3} is not above twice the radius {:.3}",
                self.cluster_radius
            )));
        }
        if self.ring_radius <= self.cluster_radius + d / 2.0 {
            return Err(Error::validation("camera ring intersects the clusters"));
        }
        Ok(())
    }

    /// Unit feature vector of `cluster`: the corresponding basis vector.
    pub fn cluster_feature(&self, cluster: usize) -> Vec<f32> {
        let mut v = vec![0.0; self.feature_dim];
        v[cluster] = 1.0;
        v
    }

    /// Cameras on a horizontal ring around the origin, looking inwards.
    pub fn cameras(&self) -> Vec<Camera> {
        (0..self.n_views)
            .map(|v| {
                let phi = std::f64::consts::TAU * v as f64 / self.n_views as f64 + 0.3;
                let eye = Point3::new(
                    self.ring_radius * phi.cos(),
                    self.ring_radius * phi.sin(),
                    self.ring_height,
                );
                Camera::look_at(
                    format!("view_{v:02}"),
                    self.width,
                    self.height,
                    self.focal,
                    eye,
                    Point3::origin(),
                    Vector3::z(),
                )
            })
            .collect()
    }
}

/// Generated scene with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub spec: SyntheticSpec,
    pub scene: GaussianScene,
    /// Cluster of each Gaussian.
    pub labels: Vec<usize>,
    /// Per view, mask of pixels dominated by cluster 0.
    pub gt_masks: Vec<FeatureMap>,
    /// Per view, rendered cluster features plus noise.
    pub feature_maps: Vec<FeatureMap>,
}

/// Two separated balls of isotropic Gaussians with distinct colors and
/// feature vectors, seen from a ring of cameras.
pub fn make_two_cluster_scene(spec: &SyntheticSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut gaussians = Vec::with_capacity(2 * spec.n_per_cluster);
    let mut labels = Vec::with_capacity(2 * spec.n_per_cluster);
    for (cluster, center) in spec.cluster_centers.iter().enumerate() {
        for _ in 0..spec.n_per_cluster {
            let offset = loop {
                let p = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                );
                if p.norm_squared() <= 1.0 {
                    break p * spec.cluster_radius;
                }
            };
            let jitter: f64 = rng.random_range(-0.05..0.05);
            let rgb = spec.colors[cluster].map(|c| (c + jitter).clamp(0.0, 1.0));
            gaussians.push(Gaussian::isotropic(
                Point3::from(Vector3::from(*center) + offset),
                spec.gaussian_sigma,
                spec.opacity,
                rgb,
            ));
            labels.push(cluster);
        }
    }
    let scene = GaussianScene::new(gaussians, spec.cameras())?;
    let cfg = RasterConfig::default();
    let values: Vec<f32> = labels.iter().flat_map(|&l| spec.cluster_feature(l)).collect();
    let noise = Normal::new(0.0, spec.noise).map_err(|e| Error::validation(e.to_string()))?;
    let mut gt_masks = Vec::with_capacity(spec.n_views);
    let mut feature_maps = Vec::with_capacity(spec.n_views);
    for cam in &scene.cameras {
        gt_masks.push(cluster_mask(&scene, &labels, cam, 0, &cfg));
        let mut map = render(&scene, cam, &values, spec.feature_dim, &cfg)?.map;
        if spec.noise > 0.0 {
            for v in map.data.iter_mut() {
                *v += noise.sample(&mut rng) as f32;
            }
        }
        feature_maps.push(map);
    }
    Ok(SyntheticScene {
        spec: spec.clone(),
        scene,
        labels,
        gt_masks,
        feature_maps,
    })
}

/// Pixels where `cluster` carries more weight than every other cluster and
/// than the residual transmittance.
pub fn cluster_mask(scene: &GaussianScene, labels: &[usize], cam: &Camera, cluster: usize, cfg: &RasterConfig) -> FeatureMap {
    let buffer = rasterize_weights(scene, cam, cfg);
    let n_clusters = labels.iter().max().map_or(1, |m| m + 1).max(cluster + 1);
    let mut mask = FeatureMap::zeros(cam.height, cam.width, 1).with_camera(cam.id.clone());
    let mut per = vec![0.0f64; n_clusters];
    for p in 0..buffer.pixel_count() {
        per.iter_mut().for_each(|v| *v = 0.0);
        for f in buffer.pixel(p) {
            per[labels[f.gaussian as usize]] += f.weight as f64;
        }
        let residual = 1.0 - per.iter().sum::<f64>();
        let others = per
            .iter()
            .enumerate()
            .filter(|&(c, _)| c != cluster)
            .map(|(_, &v)| v)
            .fold(residual, f64::max);
        if per[cluster] > others {
            mask.data[p] = 1.0;
        }
    }
    mask
}

impl SyntheticScene {
    /// Short horizontal stroke through the ground-truth pixel of `cluster`
    /// closest to the mask centroid, clipped to the mask.
    pub fn scribble(&self, view: usize, cluster: usize, half_length: usize) -> FeatureMap {
        let cam = &self.scene.cameras[view];
        let gt = cluster_mask(&self.scene, &self.labels, cam, cluster, &RasterConfig::default());
        let w = gt.width;
        let pix: Vec<usize> = (0..gt.pixel_count()).filter(|&p| gt.data[p] > 0.0).collect();
        let mut out = FeatureMap::zeros(gt.height, w, 1).with_camera(cam.id.clone());
        if pix.is_empty() {
            return out;
        }
        let n = pix.len() as f64;
        let cx = pix.iter().map(|&p| (p % w) as f64).sum::<f64>() / n;
        let cy = pix.iter().map(|&p| (p / w) as f64).sum::<f64>() / n;
        let seed = *pix
            .iter()
            .min_by(|&&a, &&b| {
                let d = |p: usize| ((p % w) as f64 - cx).powi(2) + ((p / w) as f64 - cy).powi(2);
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        let (sx, sy) = (seed % w, seed / w);
        for x in sx.saturating_sub(half_length)..=(sx + half_length).min(w - 1) {
            if gt.value(x, sy) > 0.0 {
                out.pixel_mut(x, sy)[0] = 1.0;
            }
        }
        out
    }

    /// Per-view cluster-0 masks for the views in `views`.
    pub fn gt_for(&self, views: &[usize]) -> Vec<FeatureMap> {
        views.iter().map(|&v| self.gt_masks[v].clone()).collect()
    }
}

/// Peak signal-to-noise ratio for signals in `[0, 1]`.
pub fn psnr(a: &[f32], b: &[f32]) -> f64 {
    let mse = a
        .iter()
        .zip(b)
        .map(|(x, y)| (*x as f64 - *y as f64).powi(2))
        .sum::<f64>()
        / a.len().max(1) as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// Three overlapping Gaussians seen by two 4×4 cameras.
pub fn oracle_3g() -> GaussianScene {
    let gaussians = vec![
        Gaussian {
            mean: Point3::new(-0.25, 0.05, 0.0),
            scale: Vector3::new(0.35, 0.2, 0.25),
            rotation: UnitQuaternion::from_euler_angles(0.3, -0.2, 0.5),
            opacity: 0.8,
            sh: vec![sh::dc_from_rgb([0.9, 0.1, 0.1])],
        },
        Gaussian {
            mean: Point3::new(0.2, -0.1, 0.3),
            scale: Vector3::new(0.25, 0.3, 0.2),
            rotation: UnitQuaternion::from_euler_angles(-0.4, 0.1, 0.2),
            opacity: 0.6,
            sh: vec![sh::dc_from_rgb([0.1, 0.8, 0.2])],
        },
        Gaussian {
            mean: Point3::new(0.05, 0.2, -0.3),
            scale: Vector3::new(0.2, 0.2, 0.4),
            rotation: UnitQuaternion::from_euler_angles(0.7, 0.3, -0.1),
            opacity: 0.95,
            sh: vec![sh::dc_from_rgb([0.2, 0.2, 0.9])],
        },
    ];
    let cams = vec![
        Camera::look_at("cam_a", 4, 4, 4.0, Point3::new(0.0, 0.0, -3.0), Point3::origin(), -Vector3::y()),
        Camera::look_at("cam_b", 4, 4, 4.0, Point3::new(2.5, 0.4, -1.5), Point3::origin(), -Vector3::y()),
    ];
    GaussianScene::new(gaussians, cams).expect("oracle scene is valid")
}

/// Random scene with up to 10 Gaussians and up to 3 cameras of at most 8×8.
pub fn random_oracle_scene(seed: u64) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(1..=10);
    let gaussians = (0..n)
        .map(|_| Gaussian {
            mean: Point3::new(
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
                rng.random_range(-0.6..0.6),
            ),
            scale: Vector3::new(
                rng.random_range(0.05..0.4),
                rng.random_range(0.05..0.4),
                rng.random_range(0.05..0.4),
            ),
            rotation: UnitQuaternion::from_euler_angles(
                rng.random_range(-3.0..3.0),
                rng.random_range(-1.5..1.5),
                rng.random_range(-3.0..3.0),
            ),
            opacity: rng.random_range(0.05..0.99),
            sh: vec![sh::dc_from_rgb([rng.random(), rng.random(), rng.random()])],
        })
        .collect();
    let views = rng.random_range(1..=3);
    let cams = (0..views)
        .map(|v| {
            let (w, h) = (rng.random_range(2..=8), rng.random_range(2..=8));
            let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let eye = Point3::new(2.5 * theta.cos(), rng.random_range(-0.8..0.8), 2.5 * theta.sin());
            Camera::look_at(format!("v{v}"), w, h, w.max(h) as f64 * 0.9, eye, Point3::origin(), -Vector3::y())
        })
        .collect();
    GaussianScene::new(gaussians, cams).expect("random oracle scene is valid")
}

/// Largest `gaussians × total pixels` the dense reference accepts.
pub const DENSE_ORACLE_CAP: usize = 1_000_000;

/// Explicit rendering weights: one row per (view, pixel), one column per
/// Gaussian, plus `D = diag(Wᵀ 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseOracle {
    pub n: usize,
    /// Pixel count of each view, in camera order.
    pub view_pixels: Vec<usize>,
    /// Row-major `Σ pixels × n`.
    pub w: Vec<f64>,
    pub d: Vec<f64>,
}

struct Splat {
    id: usize,
    depth: f64,
    mx: f64,
    my: f64,
    inv: Matrix2<f64>,
    reach: f64,
    opacity: f64,
}

fn splats_for(scene: &GaussianScene, cam: &Camera, cfg: &RasterConfig) -> Vec<Splat> {
    let m = &cam.world_to_camera;
    let r = Matrix3::from_fn(|i, j| m[(i, j)]);
    let mut out = Vec::new();
    for (id, g) in scene.gaussians.iter().enumerate() {
        if !scene.active[id] {
            continue;
        }
        let x = m[(0, 0)] * g.mean.x + m[(0, 1)] * g.mean.y + m[(0, 2)] * g.mean.z + m[(0, 3)];
        let y = m[(1, 0)] * g.mean.x + m[(1, 1)] * g.mean.y + m[(1, 2)] * g.mean.z + m[(1, 3)];
        let z = m[(2, 0)] * g.mean.x + m[(2, 1)] * g.mean.y + m[(2, 2)] * g.mean.z + m[(2, 3)];
        if z <= cfg.near {
            continue;
        }
        let rot = g.rotation.to_rotation_matrix().into_inner();
        let s2 = Matrix3::from_diagonal(&g.scale.component_mul(&g.scale));
        let sigma_cam = r * rot * s2 * rot.transpose() * r.transpose();
        // rows of the perspective Jacobian
        let j0 = Vector3::new(cam.fx / z, 0.0, -cam.fx * x / (z * z));
        let j1 = Vector3::new(0.0, cam.fy / z, -cam.fy * y / (z * z));
        let a = j0.dot(&(sigma_cam * j0)) + cfg.cov2d_blur;
        let b = 0.5 * (j0.dot(&(sigma_cam * j1)) + j1.dot(&(sigma_cam * j0)));
        let c = j1.dot(&(sigma_cam * j1)) + cfg.cov2d_blur;
        let det = a * c - b * b;
        if !(det > 0.0 && det.is_finite()) {
            continue;
        }
        let mid = 0.5 * (a + c);
        let lambda = mid + (mid * mid - det).max(0.0).sqrt();
        out.push(Splat {
            id,
            depth: z,
            mx: cam.fx * x / z + cam.cx,
            my: cam.fy * y / z + cam.cy,
            inv: Matrix2::new(c / det, -b / det, -b / det, a / det),
            reach: (cfg.extent_sigma * lambda.sqrt()).ceil(),
            opacity: g.opacity,
        });
    }
    out.sort_by(|p, q| p.depth.total_cmp(&q.depth).then(p.id.cmp(&q.id)));
    out
}

/// Builds `W` and `D` by blending every pixel independently.
pub fn dense_oracle(scene: &GaussianScene, cams: &[&Camera], cfg: &RasterConfig) -> Result<DenseOracle> {
    let n = scene.len();
    let total: usize = cams.iter().map(|c| c.pixel_count()).sum();
    if n.saturating_mul(total) > DENSE_ORACLE_CAP {
        return Err(Error::validation(format!(
            "dense oracle of {n} Gaussians x {total} pixels exceeds the cap of {DENSE_ORACLE_CAP}"
        )));
    }
    let mut w = vec![0.0; total * n];
    let mut row = 0;
    for cam in cams {
        let splats = splats_for(scene, cam, cfg);
        for py in 0..cam.height {
            for px in 0..cam.width {
                let (sx, sy) = (px as f64 + 0.5, py as f64 + 0.5);
                let mut t = 1.0;
                for s in &splats {
                    let (dx, dy) = (sx - s.mx, sy - s.my);
                    if dx.abs() > s.reach || dy.abs() > s.reach {
                        continue;
                    }
                    let q = s.inv[(0, 0)] * dx * dx + 2.0 * s.inv[(0, 1)] * dx * dy + s.inv[(1, 1)] * dy * dy;
                    let alpha = (s.opacity * (-0.5 * q).exp()).min(cfg.alpha_max);
                    if alpha < cfg.alpha_min {
                        continue;
                    }
                    if t * (1.0 - alpha) < cfg.min_transmittance {
                        break;
                    }
                    w[row * n + s.id] = alpha * t;
                    t *= 1.0 - alpha;
                }
                row += 1;
            }
        }
    }
    let mut d = vec![0.0; n];
    for r in 0..total {
        for i in 0..n {
            d[i] += w[r * n + i];
        }
    }
    Ok(DenseOracle {
        n,
        view_pixels: cams.iter().map(|c| c.pixel_count()).collect(),
        w,
        d,
    })
}

impl DenseOracle {
    pub fn rows(&self) -> usize {
        self.view_pixels.iter().sum()
    }

    /// `W f` for row-major `f` (`n × c`), concatenated over views.
    pub fn render(&self, f: &[f64], c: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.rows() * c];
        for r in 0..self.rows() {
            for i in 0..self.n {
                let wt = self.w[r * self.n + i];
                if wt != 0.0 {
                    for ch in 0..c {
                        out[r * c + ch] += wt * f[i * c + ch];
                    }
                }
            }
        }
        out
    }

    fn transpose_apply(&self, features: &[f64], c: usize, weight: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut num = vec![0.0; self.n * c];
        for r in 0..self.rows() {
            for i in 0..self.n {
                let wt = weight(self.w[r * self.n + i]);
                if wt != 0.0 {
                    for ch in 0..c {
                        num[i * c + ch] += wt * features[r * c + ch];
                    }
                }
            }
        }
        num
    }

    /// `D⁻¹ Wᵀ F` for per-pixel features concatenated over views; rows with
    /// `D = 0` are zero.
    pub fn uplift(&self, features: &[f64], c: usize) -> Vec<f64> {
        let mut num = self.transpose_apply(features, c, |w| w);
        for i in 0..self.n {
            for ch in 0..c {
                num[i * c + ch] = if self.d[i] > 0.0 { num[i * c + ch] / self.d[i] } else { 0.0 };
            }
        }
        num
    }

    /// `Wᵀ F` divided by the number of pixels each Gaussian contributes to.
    pub fn uplift_count(&self, features: &[f64], c: usize) -> Vec<f64> {
        let mut num = self.transpose_apply(features, c, |w| w);
        for i in 0..self.n {
            let count = (0..self.rows()).filter(|&r| self.w[r * self.n + i] > 0.0).count();
            for ch in 0..c {
                num[i * c + ch] = if count > 0 { num[i * c + ch] / count as f64 } else { 0.0 };
            }
        }
        num
    }
}

/// Timing of one channel count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTiming {
    pub channels: usize,
    pub median_seconds: f64,
    pub ms_per_view_per_channel: f64,
}

/// Least-squares fit `seconds ≈ intercept + slope · channels`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub schema: String,
    pub gaussians: usize,
    pub views: usize,
    pub width: usize,
    pub height: usize,
    pub repeats: usize,
    pub threads: usize,
    pub os: String,
    pub arch: String,
    pub timings: Vec<ChannelTiming>,
    pub fit: Option<LinearFit>,
}

pub const BENCH_SCHEMA: &str = "splatlift-bench/1";

/// Ordinary least squares of `y` on `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<LinearFit> {
    let n = x.len() as f64;
    if x.len() < 2 || x.len() != y.len() {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Some(LinearFit { slope, intercept, r_squared })
}

/// Median wall time of `uplift` over all scene cameras with random feature
/// maps of each channel count, after one warm-up run.
pub fn benchmark_uplift(scene: &GaussianScene, channel_counts: &[usize], repeats: usize, seed: u64) -> Result<BenchReport> {
    if repeats == 0 {
        return Err(Error::validation("repeats must be at least 1"));
    }
    if channel_counts.is_empty() || channel_counts.contains(&0) {
        return Err(Error::validation("channel counts must be positive"));
    }
    let cams = &scene.cameras;
    let first = cams
        .first()
        .ok_or_else(|| Error::validation("benchmark scene has no cameras"))?;
    let cfg = RasterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut timings = Vec::new();
    for &c in channel_counts {
        let maps: Vec<FeatureMap> = cams
            .iter()
            .map(|cam| {
                let data = (0..cam.pixel_count() * c).map(|_| rng.random::<f32>()).collect();
                FeatureMap::from_vec(cam.height, cam.width, c, data)
            })
            .collect::<Result<_>>()?;
        let frames: Vec<Frame> = cams.iter().zip(&maps).map(|(cam, m)| Frame::new(cam, m)).collect();
        uplift(scene, &frames, &cfg)?;
        let mut times: Vec<f64> = (0..repeats)
            .map(|_| {
                let t = Instant::now();
                uplift(scene, &frames, &cfg).map(|_| t.elapsed().as_secs_f64())
            })
            .collect::<Result<_>>()?;
        times.sort_by(f64::total_cmp);
        let m = times.len();
        let median = if m % 2 == 1 { times[m / 2] } else { 0.5 * (times[m / 2 - 1] + times[m / 2]) };
        timings.push(ChannelTiming {
            channels: c,
            median_seconds: median,
            ms_per_view_per_channel: 1e3 * median / (cams.len() * c) as f64,
        });
    }
    let xs: Vec<f64> = timings.iter().map(|t| t.channels as f64).collect();
    let ys: Vec<f64> = timings.iter().map(|t| t.median_seconds).collect();
    Ok(BenchReport {
        schema: BENCH_SCHEMA.into(),
        gaussians: scene.active_count(),
        views: cams.len(),
        width: first.width,
        height: first.height,
        repeats,
        threads: rayon::current_num_threads(),
        os: std::env::consts::OS.into(),
        arch: std::env::consts::ARCH.into(),
        timings,
        fit: linear_fit(&xs, &ys),
    })
}

/// Random Gaussians filling the view frustums of a camera ring, for timing.
pub fn make_bench_scene(n: usize, width: usize, height: usize, views: usize, seed: u64) -> Result<GaussianScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gaussians = (0..n)
        .map(|_| {
            let mean = Point3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            let rgb = [rng.random(), rng.random(), rng.random()];
            Gaussian::isotropic(mean, rng.random_range(0.01..0.05), rng.random_range(0.2..0.9), rgb)
        })
        .collect();
    let focal = width.max(height) as f64;
    let cams = (0..views)
        .map(|v| {
            let phi = std::f64::consts::TAU * v as f64 / views.max(1) as f64;
            let eye = Point3::new(3.0 * phi.cos(), 3.0 * phi.sin(), 0.5);
            Camera::look_at(format!("bench_{v:02}"), width, height, focal, eye, Point3::origin(), Vector3::z())
        })
        .collect();
    GaussianScene::new(gaussians, cams)
}
