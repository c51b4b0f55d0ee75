//! Tile-based software rasterizer.
//!
//! The central product is the [`FragmentBuffer`]: for every pixel, the
//! ordered list of Gaussians that contribute to it together with their
//! opacity `alpha` and blending weight `weight = alpha * prod(1 - alpha_j)`
//! over the nearer contributors. Rendering any per-Gaussian quantity is a
//! weighted sum over that list, and uplifting is its transpose, so both
//! share one buffer.
//!
//! Numeric conventions follow the reference CUDA renderer: alpha clamped to
//! 0.99, contributions below 1/255 skipped, blending stopped once the
//! transmittance would fall under 1e-4, a 0.3 px² blur added to every 2D
//! covariance, 16×16 tiles and a 3σ square footprint. A Gaussian touches a
//! pixel only if the pixel center lies inside its footprint square.

use nalgebra::{Matrix2, Matrix2x3, Vector2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::features::FeatureMap;
use crate::scene::{sh, Camera, GaussianScene};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RasterConfig {
    pub alpha_max: f64,
    pub alpha_min: f64,
    pub min_transmittance: f64,
    pub cov2d_blur: f64,
    pub near: f64,
    pub extent_sigma: f64,
    pub tile_size: usize,
}

impl Default for RasterConfig {
    fn default() -> Self {
        RasterConfig {
            alpha_max: 0.99,
            alpha_min: 1.0 / 255.0,
            min_transmittance: 1e-4,
            cov2d_blur: 0.3,
            near: 0.2,
            extent_sigma: 3.0,
            tile_size: 16,
        }
    }
}

/// A Gaussian after EWA projection into one camera.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedGaussian {
    pub gaussian_id: usize,
    pub mean2d: Vector2<f64>,
    pub cov2d: Matrix2<f64>,
    /// Inverse of `cov2d`.
    pub conic: Matrix2<f64>,
    pub depth: f64,
    pub opacity: f64,
    /// Half-width of the square footprint, in pixels.
    pub radius: f64,
}

impl ProjectedGaussian {
    /// Whether the center of pixel `(px, py)` lies inside the footprint.
    #[inline]
    pub fn covers(&self, px: usize, py: usize) -> bool {
        let dx = px as f64 + 0.5 - self.mean2d.x;
        let dy = py as f64 + 0.5 - self.mean2d.y;
        dx.abs() <= self.radius && dy.abs() <= self.radius
    }

    /// Unclamped `opacity * exp(-½ Δᵀ Σ⁻¹ Δ)` at the center of `(px, py)`.
    #[inline]
    pub fn raw_alpha(&self, px: usize, py: usize) -> f64 {
        let dx = px as f64 + 0.5 - self.mean2d.x;
        let dy = py as f64 + 0.5 - self.mean2d.y;
        let c = &self.conic;
        let power = -0.5 * (c[(0, 0)] * dx * dx + 2.0 * c[(0, 1)] * dx * dy + c[(1, 1)] * dy * dy);
        self.opacity * power.exp()
    }

    /// Inclusive pixel ranges touched by the footprint, clipped to the image.
    fn pixel_range(&self, width: usize, height: usize) -> Option<(usize, usize, usize, usize)> {
        let lo = |m: f64| (m - self.radius - 0.5).ceil();
        let hi = |m: f64| (m + self.radius - 0.5).floor();
        let (x0, x1) = (lo(self.mean2d.x).max(0.0), hi(self.mean2d.x).min(width as f64 - 1.0));
        let (y0, y1) = (lo(self.mean2d.y).max(0.0), hi(self.mean2d.y).min(height as f64 - 1.0));
        if x0 > x1 || y0 > y1 {
            return None;
        }
        Some((x0 as usize, x1 as usize, y0 as usize, y1 as usize))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RasterStats {
    pub projected: usize,
    pub culled: usize,
    pub singular: usize,
    pub fragments: usize,
}

struct Projection {
    splats: Vec<ProjectedGaussian>,
    culled: usize,
    singular: usize,
}

fn project_counted(scene: &GaussianScene, cam: &Camera, cfg: &RasterConfig) -> Projection {
    let rot = cam.rotation();
    let mut splats = Vec::new();
    let (mut culled, mut singular) = (0, 0);
    for (id, g) in scene.gaussians.iter().enumerate() {
        if !scene.active[id] {
            continue;
        }
        let t = cam.to_camera(&g.mean);
        if t.z <= cfg.near {
            culled += 1;
            continue;
        }
        let (x, y, z) = (t.x, t.y, t.z);
        let jac = Matrix2x3::new(
            cam.fx / z,
            0.0,
            -cam.fx * x / (z * z),
            0.0,
            cam.fy / z,
            -cam.fy * y / (z * z),
        );
        let cov_cam = rot * g.covariance() * rot.transpose();
        let mut cov2d = jac * cov_cam * jac.transpose();
        cov2d = (cov2d + cov2d.transpose()) * 0.5;
        cov2d[(0, 0)] += cfg.cov2d_blur;
        cov2d[(1, 1)] += cfg.cov2d_blur;

        let det = cov2d.determinant();
        let conic = match cov2d.try_inverse() {
            Some(inv) if det > 0.0 && det.is_finite() && inv.iter().all(|v| v.is_finite()) => inv,
            _ => {
                singular += 1;
                continue;
            }
        };
        let mid = 0.5 * (cov2d[(0, 0)] + cov2d[(1, 1)]);
        let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
        let splat = ProjectedGaussian {
            gaussian_id: id,
            mean2d: Vector2::new(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy),
            cov2d,
            conic,
            depth: z,
            opacity: g.opacity,
            radius: (cfg.extent_sigma * lambda_max.sqrt()).ceil(),
        };
        if splat.pixel_range(cam.width, cam.height).is_none() {
            culled += 1;
            continue;
        }
        splats.push(splat);
    }
    Projection {
        splats,
        culled,
        singular,
    }
}

/// EWA projection of every active Gaussian; culled and singular ones omitted.
pub fn project(scene: &GaussianScene, cam: &Camera, cfg: &RasterConfig) -> Vec<ProjectedGaussian> {
    project_counted(scene, cam, cfg).splats
}

/// Depth order with ties broken by Gaussian index.
pub fn depth_order(a: &ProjectedGaussian, b: &ProjectedGaussian) -> std::cmp::Ordering {
    a.depth
        .total_cmp(&b.depth)
        .then(a.gaussian_id.cmp(&b.gaussian_id))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fragment {
    pub gaussian: u32,
    pub alpha: f32,
    pub weight: f32,
}

/// Per-pixel contribution lists in front-to-back order (CSR layout).
#[derive(Debug, Clone, PartialEq)]
pub struct FragmentBuffer {
    pub width: usize,
    pub height: usize,
    /// `offsets[p]..offsets[p + 1]` indexes the fragments of pixel `p`.
    pub offsets: Vec<usize>,
    pub fragments: Vec<Fragment>,
    pub stats: RasterStats,
}

impl FragmentBuffer {
    pub fn empty(width: usize, height: usize) -> FragmentBuffer {
        FragmentBuffer {
            width,
            height,
            offsets: vec![0; width * height + 1],
            fragments: Vec::new(),
            stats: RasterStats::default(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Fragments of row-major pixel `p`.
    pub fn pixel(&self, p: usize) -> &[Fragment] {
        &self.fragments[self.offsets[p]..self.offsets[p + 1]]
    }

    /// Accumulated opacity `Σ w` at pixel `p`.
    pub fn coverage(&self, p: usize) -> f64 {
        self.pixel(p).iter().map(|f| f.weight as f64).sum()
    }
}

struct TileOutput {
    x0: usize,
    y0: usize,
    w: usize,
    counts: Vec<usize>,
    fragments: Vec<Fragment>,
}

fn blend_tile(
    splats: &[ProjectedGaussian],
    list: &[u32],
    (x0, x1, y0, y1): (usize, usize, usize, usize),
    cfg: &RasterConfig,
) -> TileOutput {
    let w = x1 - x0;
    let mut counts = Vec::with_capacity(w * (y1 - y0));
    let mut fragments = Vec::new();
    for py in y0..y1 {
        for px in x0..x1 {
            let before = fragments.len();
            let mut transmittance = 1.0f64;
            for &si in list {
                let s = &splats[si as usize];
                if !s.covers(px, py) {
                    continue;
                }
                let alpha = s.raw_alpha(px, py).min(cfg.alpha_max);
                if alpha < cfg.alpha_min {
                    continue;
                }
                let next = transmittance * (1.0 - alpha);
                if next < cfg.min_transmittance {
                    break;
                }
                fragments.push(Fragment {
                    gaussian: s.gaussian_id as u32,
                    alpha: alpha as f32,
                    weight: (alpha * transmittance) as f32,
                });
                transmittance = next;
            }
            counts.push(fragments.len() - before);
        }
    }
    TileOutput {
        x0,
        y0,
        w,
        counts,
        fragments,
    }
}

/// Rasterizes the α-blending weights of every active Gaussian into `cam`.
pub fn rasterize_weights(scene: &GaussianScene, cam: &Camera, cfg: &RasterConfig) -> FragmentBuffer {
    let (width, height) = (cam.width, cam.height);
    let proj = project_counted(scene, cam, cfg);
    let mut splats = proj.splats;
    splats.sort_by(depth_order);

    let ts = cfg.tile_size.max(1);
    let (tiles_x, tiles_y) = (width.div_ceil(ts), height.div_ceil(ts));
    let mut tile_lists: Vec<Vec<u32>> = vec![Vec::new(); tiles_x * tiles_y];
    for (si, s) in splats.iter().enumerate() {
        let (x0, x1, y0, y1) = s.pixel_range(width, height).expect("culled during projection");
        for ty in y0 / ts..=y1 / ts {
            for tx in x0 / ts..=x1 / ts {
                tile_lists[ty * tiles_x + tx].push(si as u32);
            }
        }
    }

    let tiles: Vec<TileOutput> = tile_lists
        .par_iter()
        .enumerate()
        .map(|(t, list)| {
            let (tx, ty) = (t % tiles_x, t / tiles_x);
            let rect = (
                tx * ts,
                ((tx + 1) * ts).min(width),
                ty * ts,
                ((ty + 1) * ts).min(height),
            );
            blend_tile(&splats, list, rect, cfg)
        })
        .collect();

    let mut counts = vec![0usize; width * height];
    for tile in &tiles {
        for (k, &c) in tile.counts.iter().enumerate() {
            let (lx, ly) = (k % tile.w, k / tile.w);
            counts[(tile.y0 + ly) * width + tile.x0 + lx] = c;
        }
    }
    let mut offsets = Vec::with_capacity(width * height + 1);
    offsets.push(0);
    for c in &counts {
        offsets.push(offsets.last().unwrap() + c);
    }
    let total = *offsets.last().unwrap();
    let mut fragments = vec![
        Fragment {
            gaussian: 0,
            alpha: 0.0,
            weight: 0.0
        };
        total
    ];
    for tile in &tiles {
        let mut src = 0;
        for (k, &c) in tile.counts.iter().enumerate() {
            let (lx, ly) = (k % tile.w, k / tile.w);
            let p = (tile.y0 + ly) * width + tile.x0 + lx;
            fragments[offsets[p]..offsets[p] + c].copy_from_slice(&tile.fragments[src..src + c]);
            src += c;
        }
    }

    FragmentBuffer {
        width,
        height,
        offsets,
        fragments,
        stats: RasterStats {
            projected: splats.len(),
            culled: proj.culled,
            singular: proj.singular,
            fragments: total,
        },
    }
}

/// Rendered channels plus accumulated opacity per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub map: FeatureMap,
    pub alpha: Vec<f32>,
}

/// `F̂ = W f` for one view: weighted sum of per-Gaussian `values`
/// (`rows × channels`, row-major) over each pixel's fragments.
pub fn render_buffer(buffer: &FragmentBuffer, values: &[f32], channels: usize) -> Result<RenderOutput> {
    if channels == 0 || !values.len().is_multiple_of(channels) {
        return Err(Error::validation(format!(
            "{} values do not form rows of {channels} channels",
            values.len()
        )));
    }
    let rows = values.len() / channels;
    if let Some(f) = buffer.fragments.iter().find(|f| f.gaussian as usize >= rows) {
        return Err(Error::validation(format!(
            "feature rows ({rows}) do not cover Gaussian {}",
            f.gaussian
        )));
    }
    let (w, h) = (buffer.width, buffer.height);
    let mut data = vec![0.0f32; w * h * channels];
    let mut alpha = vec![0.0f32; w * h];
    data.par_chunks_mut(w * channels)
        .zip(alpha.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (row, arow))| {
            let mut acc = vec![0.0f64; channels];
            for x in 0..w {
                let p = y * w + x;
                acc.iter_mut().for_each(|a| *a = 0.0);
                let mut cov = 0.0f64;
                for f in buffer.pixel(p) {
                    let wt = f.weight as f64;
                    cov += wt;
                    let src = &values[f.gaussian as usize * channels..][..channels];
                    for (a, &v) in acc.iter_mut().zip(src) {
                        *a += wt * v as f64;
                    }
                }
                for (d, a) in row[x * channels..(x + 1) * channels].iter_mut().zip(&acc) {
                    *d = *a as f32;
                }
                arow[x] = cov as f32;
            }
        });
    let map = FeatureMap::from_vec(h, w, channels, data)?;
    Ok(RenderOutput { map, alpha })
}

/// Renders per-Gaussian features (`scene.len()` rows) into `cam`.
pub fn render(
    scene: &GaussianScene,
    cam: &Camera,
    values: &[f32],
    channels: usize,
    cfg: &RasterConfig,
) -> Result<RenderOutput> {
    if channels == 0 || values.len() != scene.len() * channels {
        return Err(Error::validation(format!(
            "expected {} x {channels} feature values, got {}",
            scene.len(),
            values.len()
        )));
    }
    let buffer = rasterize_weights(scene, cam, cfg);
    let mut out = render_buffer(&buffer, values, channels)?;
    out.map.camera_id = cam.id.clone();
    Ok(out)
}

/// Per-Gaussian RGB for the view direction from `cam` to each mean.
pub fn view_colors(scene: &GaussianScene, cam: &Camera) -> Vec<f32> {
    let center = cam.center();
    let degree = scene.sh_degree();
    let mut out = Vec::with_capacity(scene.len() * 3);
    for g in &scene.gaussians {
        let d = g.mean - center;
        let n = d.norm();
        let dir = if n > 0.0 { d / n } else { d };
        let rgb = sh::eval_color(&g.sh, degree, &dir);
        out.extend(rgb.iter().map(|&v| v as f32));
    }
    out
}

/// SH color render composited over `background`.
pub fn render_rgb(
    scene: &GaussianScene,
    cam: &Camera,
    background: [f32; 3],
    cfg: &RasterConfig,
) -> Result<RenderOutput> {
    let colors = view_colors(scene, cam);
    let mut out = render(scene, cam, &colors, 3, cfg)?;
    for (px, &a) in out.map.data.chunks_mut(3).zip(&out.alpha) {
        let t = 1.0 - a;
        for (v, b) in px.iter_mut().zip(background) {
            *v += t * b;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::Gaussian;
    use nalgebra::{Matrix4, Point3};

    fn identity_cam(w: usize, h: usize, f: f64, cx: f64, cy: f64) -> Camera {
        Camera {
            id: "c".into(),
            width: w,
            height: h,
            fx: f,
            fy: f,
            cx,
            cy,
            world_to_camera: Matrix4::identity(),
        }
    }

    fn scene_of(gs: Vec<Gaussian>, cam: Camera) -> GaussianScene {
        GaussianScene::new(gs, vec![cam]).unwrap()
    }

    #[test]
    fn on_axis_projects_to_principal_point() {
        let cam = identity_cam(8, 8, 100.0, 4.0, 4.0);
        let g = Gaussian::isotropic(Point3::new(0.0, 0.0, 1.0), 1e-2, 0.5, [1.0; 3]);
        let s = scene_of(vec![g], cam.clone());
        let p = project(&s, &cam, &RasterConfig::default());
        assert_eq!(p.len(), 1);
        assert!((p[0].mean2d - Vector2::new(4.0, 4.0)).norm() < 1e-12);
        // Σ = 1e-4 I, J = 100/z → 1 px² plus blur
        assert!((p[0].cov2d - Matrix2::identity() * 1.3).abs().max() < 1e-12);
    }

    #[test]
    fn behind_camera_and_offscreen_are_culled() {
        let cam = identity_cam(8, 8, 100.0, 4.0, 4.0);
        let behind = Gaussian::isotropic(Point3::new(0.0, 0.0, -1.0), 1e-2, 0.5, [1.0; 3]);
        let near = Gaussian::isotropic(Point3::new(0.0, 0.0, 0.15), 1e-2, 0.5, [1.0; 3]);
        let off = Gaussian::isotropic(Point3::new(5.0, 0.0, 1.0), 1e-3, 0.5, [1.0; 3]);
        let s = scene_of(vec![behind, near, off], cam.clone());
        assert!(project(&s, &cam, &RasterConfig::default()).is_empty());
        let b = rasterize_weights(&s, &cam, &RasterConfig::default());
        assert_eq!(b.stats.culled, 3);
        assert!(b.fragments.is_empty());
    }

    #[test]
    fn single_gaussian_at_pixel_center() {
        let cam = identity_cam(5, 5, 100.0, 2.5, 2.5);
        let g = Gaussian::isotropic(Point3::new(0.0, 0.0, 1.0), 1e-2, 0.5, [1.0; 3]);
        let s = scene_of(vec![g], cam.clone());
        let b = rasterize_weights(&s, &cam, &RasterConfig::default());
        let frags = b.pixel(2 * 5 + 2);
        assert_eq!(frags.len(), 1);
        assert_eq!(frags[0].alpha, 0.5);
        assert_eq!(frags[0].weight, 0.5);
    }

    #[test]
    fn coincident_pair_blends_front_to_back() {
        let cam = identity_cam(5, 5, 100.0, 2.5, 2.5);
        let g = Gaussian::isotropic(Point3::new(0.0, 0.0, 1.0), 1e-2, 0.5, [1.0; 3]);
        let s = scene_of(vec![g.clone(), g], cam.clone());
        let b = rasterize_weights(&s, &cam, &RasterConfig::default());
        let frags = b.pixel(12);
        assert_eq!(frags.len(), 2);
        assert_eq!((frags[0].gaussian, frags[1].gaussian), (0, 1));
        assert_eq!((frags[0].weight, frags[1].weight), (0.5, 0.25));
    }

    #[test]
    fn transmittance_cutoff_stops_blending() {
        let cam = identity_cam(3, 3, 100.0, 1.5, 1.5);
        let gs = (0..5)
            .map(|i| Gaussian::isotropic(Point3::new(0.0, 0.0, 1.0 + i as f64 * 0.1), 1e-4, 0.99, [1.0; 3]))
            .collect();
        let s = scene_of(gs, cam.clone());
        let b = rasterize_weights(&s, &cam, &RasterConfig::default());
        // 0.01² = 1e-4 is not below the cutoff, 0.01³ is
        assert_eq!(b.pixel(4).len(), 2);
    }

    #[test]
    fn render_constant_and_zero_features() {
        let cam = identity_cam(6, 6, 50.0, 3.0, 3.0);
        let gs = vec![
            Gaussian::isotropic(Point3::new(0.0, 0.0, 2.0), 0.05, 0.7, [1.0; 3]),
            Gaussian::isotropic(Point3::new(0.02, 0.01, 2.5), 0.08, 0.6, [1.0; 3]),
        ];
        let s = scene_of(gs, cam.clone());
        let cfg = RasterConfig::default();
        let v = [0.25f32, -2.0];
        let out = render(&s, &cam, &[v[0], v[1], v[0], v[1]], 2, &cfg).unwrap();
        for p in 0..36 {
            let a = out.alpha[p];
            let px = out.map.at(p);
            assert!((px[0] - a * v[0]).abs() < 1e-6);
            assert!((px[1] - a * v[1]).abs() < 1e-6);
        }
        let zero = render(&s, &cam, &[0.0; 4], 2, &cfg).unwrap();
        assert!(zero.map.data.iter().all(|&x| x == 0.0));
        assert!(render(&s, &cam, &[0.0; 3], 1, &cfg).is_err());
    }

    #[test]
    fn rgb_background_fills_uncovered() {
        let cam = identity_cam(4, 4, 10.0, 2.0, 2.0);
        let s = scene_of(vec![], cam.clone());
        let out = render_rgb(&s, &cam, [0.1, 0.2, 0.3], &RasterConfig::default()).unwrap();
        assert!(out.map.data.chunks(3).all(|p| p == [0.1, 0.2, 0.3]));
    }
}
