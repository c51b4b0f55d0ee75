//! Shared checks for the acceptance target and the integration tests.
//!
//! Every check returns an [`Outcome`] so the acceptance target can print one
//! line per criterion while the focused test files assert on the same code.

#![allow(dead_code)]

use std::time::Instant;

use nalgebra::{DMatrix, Point3, SymmetricEigen, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use splatlift::features::FeatureMap;
use splatlift::graph::{build_graph, diffuse, GraphParams, UnaryMode};
use splatlift::raster::{rasterize_weights, render, render_rgb, RasterConfig};
use splatlift::scene::{Camera, Gaussian, GaussianScene};
use splatlift::segmentation::{
    iou, segment_by_diffusion, segment_geometry_only, ForegroundKind, ForegroundSpec, SegmentationConfig,
};
use splatlift::synthetic::{
    dense_oracle, make_bench_scene, make_two_cluster_scene, psnr, random_oracle_scene, SyntheticScene,
    SyntheticSpec,
};
use splatlift::uplift::{prune_by_importance, refine_by_gradient, uplift, Frame};

#[derive(Debug, Clone)]
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Outcome {
        Outcome { pass, detail: detail.into() }
    }

    pub fn assert(&self) {
        assert!(self.pass, "{}", self.detail);
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random feature map with values in `[-1, 1)`.
pub fn random_map(rng: &mut ChaCha8Rng, cam: &Camera, c: usize) -> FeatureMap {
    let data = (0..cam.pixel_count() * c).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureMap::from_vec(cam.height, cam.width, c, data).unwrap()
}

/// Per-view feature maps concatenated in camera order as `f64`.
pub fn stack(maps: &[FeatureMap]) -> Vec<f64> {
    maps.iter().flat_map(|m| m.data.iter().map(|&v| v as f64)).collect()
}

/// `max |a − b| / max(max |b|, 1e-12)`.
pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

pub fn max_abs_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

pub fn to_f64(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Streaming uplift against the dense `D⁻¹WᵀF` oracle on random scenes.
pub fn check_uplift_oracle(scenes: u64) -> Outcome {
    let cfg = RasterConfig::default();
    let start = Instant::now();
    let mut worst = 0.0f64;
    for seed in 0..scenes {
        let scene = random_oracle_scene(seed);
        let mut r = rng(1000 + seed);
        let c = 1 + (seed as usize % 4);
        let maps: Vec<FeatureMap> = scene.cameras.iter().map(|cam| random_map(&mut r, cam, c)).collect();
        let frames: Vec<Frame> = scene.cameras.iter().zip(&maps).map(|(cam, m)| Frame::new(cam, m)).collect();
        let up = uplift(&scene, &frames, &cfg).unwrap();
        let cams: Vec<&Camera> = scene.cameras.iter().collect();
        let oracle = dense_oracle(&scene, &cams, &cfg).unwrap();
        let expected = oracle.uplift(&stack(&maps), c);
        worst = worst.max(max_rel_err(&to_f64(&up.features.values), &expected));
        worst = worst.max(max_rel_err(&up.beta, &oracle.d));
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        worst < 1e-5 && secs < 5.0,
        format!("{scenes} scenes, max relative error {worst:.2e}, {secs:.3} s"),
    )
}

/// One unit gradient step from zero reproduces uplift.
pub fn check_one_step_identity(scenes: u64) -> Outcome {
    let cfg = RasterConfig::default();
    let mut worst = 0.0f64;
    for seed in 0..scenes {
        let scene = random_oracle_scene(seed);
        let mut r = rng(2000 + seed);
        let c = 1 + (seed as usize % 3);
        let maps: Vec<FeatureMap> = scene.cameras.iter().map(|cam| random_map(&mut r, cam, c)).collect();
        let frames: Vec<Frame> = scene.cameras.iter().zip(&maps).map(|(cam, m)| Frame::new(cam, m)).collect();
        let up = uplift(&scene, &frames, &cfg).unwrap();
        let zero = splatlift::features::GaussianFeatures::zeros(scene.len(), c);
        let refined = refine_by_gradient(&scene, &frames, &zero, 1, 1.0, &cfg).unwrap();
        worst = worst.max(max_abs_err(&to_f64(&refined.features.values), &to_f64(&up.features.values)));
    }
    Outcome::new(worst <= 1e-6, format!("{scenes} scenes, max abs difference {worst:.2e}"))
}

/// Copy of `scene` with the Gaussians reordered by `perm` (new slot k holds
/// old Gaussian `perm[k]`).
pub fn permuted(scene: &GaussianScene, perm: &[usize]) -> GaussianScene {
    let gaussians = perm.iter().map(|&i| scene.gaussians[i].clone()).collect();
    GaussianScene::new(gaussians, scene.cameras.clone()).unwrap()
}

/// Weight simplex, linearity and permutation invariance of rendering.
pub fn check_render_invariants(scenes: u64) -> Outcome {
    let cfg = RasterConfig::default();
    let (mut simplex, mut linear, mut perm_err) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..scenes {
        let scene = random_oracle_scene(10_000 + seed);
        let n = scene.len();
        let mut r = rng(3000 + seed);
        let c = 2;
        let f: Vec<f32> = (0..n * c).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let g: Vec<f32> = (0..n * c).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let (a, b) = (r.random_range(-2.0f32..2.0), r.random_range(-2.0f32..2.0));
        let combo: Vec<f32> = f.iter().zip(&g).map(|(x, y)| a * x + b * y).collect();
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, r.random_range(0..=i));
        }
        let pscene = permuted(&scene, &perm);
        let pf: Vec<f32> = perm.iter().flat_map(|&i| f[i * c..(i + 1) * c].to_vec()).collect();
        for cam in &scene.cameras {
            let buffer = rasterize_weights(&scene, cam, &cfg);
            for p in 0..buffer.pixel_count() {
                let s: f64 = buffer.pixel(p).iter().map(|fr| fr.weight as f64).sum();
                if buffer.pixel(p).iter().any(|fr| fr.weight < 0.0) {
                    simplex = f64::INFINITY;
                }
                simplex = simplex.max(s - 1.0);
            }
            let rf = render(&scene, cam, &f, c, &cfg).unwrap().map;
            let rg = render(&scene, cam, &g, c, &cfg).unwrap().map;
            let rc = render(&scene, cam, &combo, c, &cfg).unwrap().map;
            let expect: Vec<f64> = rf.data.iter().zip(&rg.data).map(|(x, y)| (a * x + b * y) as f64).collect();
            linear = linear.max(max_abs_err(&to_f64(&rc.data), &expect));
            let rp = render(&pscene, cam, &pf, c, &cfg).unwrap().map;
            perm_err = perm_err.max(max_abs_err(&to_f64(&rp.data), &to_f64(&rf.data)));
        }
    }
    Outcome::new(
        simplex <= 1e-6 && linear <= 1e-5 && perm_err <= 1e-6,
        format!(
            "{scenes} scenes, weight-sum excess {simplex:.2e}, linearity {linear:.2e}, permutation {perm_err:.2e}"
        ),
    )
}

/// Angle in radians between two vectors, ignoring sign.
pub fn angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot.abs() / (na * nb)).clamp(0.0, 1.0).acos()
}

/// Random symmetric feature graph on `n` nodes.
pub fn random_graph(seed: u64, n: usize, k: usize) -> splatlift::graph::FeatureGraph {
    let mut r = rng(seed);
    let centers: Vec<[f64; 3]> = (0..n)
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    let c = 4;
    let vals: Vec<f32> = (0..n * c).map(|_| r.random_range(0.0f32..1.0)).collect();
    let feats = splatlift::features::GaussianFeatures::from_vec(n, c, vals).unwrap();
    let params = GraphParams { k, symmetrize: true, bandwidth_edge: r.random_range(0.5..4.0), ..Default::default() };
    build_graph(&centers, &feats, &params, None).unwrap()
}

/// Dominant eigenpair and relative gap `1 − |λ₂| / λ₁` of a symmetric matrix.
pub fn dominant_eigen(dense: &[f64], n: usize) -> (Vec<f64>, f64) {
    let m = DMatrix::from_row_slice(n, n, dense);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].abs().total_cmp(&eig.eigenvalues[a].abs()));
    let l1 = eig.eigenvalues[order[0]].abs();
    let l2 = eig.eigenvalues[order[1]].abs();
    let v = eig.eigenvectors.column(order[0]).iter().cloned().collect();
    (v, 1.0 - l2 / l1)
}

/// Diffusion converges to the dominant eigenvector like the power method.
pub fn check_power_method(graphs: usize) -> Outcome {
    let n = 30;
    let (mut accepted, mut tried) = (0usize, 0u64);
    let mut worst = 0.0f64;
    let mut monotone = true;
    while accepted < graphs && tried < 10_000 {
        let graph = random_graph(50_000 + tried, n, 6);
        tried += 1;
        let (v, gap) = dominant_eigen(&graph.to_dense(), n);
        if gap <= 0.1 {
            continue;
        }
        accepted += 1;
        let mut r = rng(tried);
        let g0: Vec<f64> = (0..n).map(|_| r.random_range(0.1..1.0)).collect();
        let a10 = angle(&diffuse(&graph, &g0, 10).unwrap().g, &v);
        let a100 = angle(&diffuse(&graph, &g0, 100).unwrap().g, &v);
        monotone &= a100 <= a10 + 1e-12;
        worst = worst.max(a100);
    }
    Outcome::new(
        accepted == graphs && monotone && worst < 1e-3,
        format!("{accepted} graphs with gap > 0.1 ({tried} drawn), max angle at T=100 {worst:.2e} rad, monotone {monotone}"),
    )
}

/// Direct dense evaluation of the edge weights for all three unary modes.
pub fn check_graph_fidelity(instances: u64) -> Outcome {
    let n = 50;
    let c = 6;
    let mut worst = 0.0f64;
    for seed in 0..instances {
        let mut r = rng(7000 + seed);
        let mut centers = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            let cl = if i < n / 2 { 0.0 } else { 3.0 };
            centers.push([cl + r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)]);
            for ch in 0..c {
                let base = if (ch < c / 2) == (i < n / 2) { 1.0 } else { 0.1 };
                vals.push(base + r.random_range(-0.3f32..0.3));
            }
        }
        let feats = splatlift::features::GaussianFeatures::from_vec(n, c, vals.clone()).unwrap();
        let anchors: Vec<usize> = (0..8).collect();
        for mode in [UnaryMode::None, UnaryMode::CosineToMean, UnaryMode::Logistic] {
            let params = GraphParams {
                k: 7,
                bandwidth_edge: 0.7,
                bandwidth_unary: 1.5,
                unary_mode: mode,
                ..Default::default()
            };
            let graph = build_graph(&centers, &feats, &params, Some(&anchors)).unwrap();
            let expected = dense_edge_oracle(&centers, &vals, c, &params, &anchors);
            worst = worst.max(max_abs_err(&graph.to_dense(), &expected));
        }
    }
    Outcome::new(
        worst <= 1e-10,
        format!("{instances} instances x 3 unary modes, max entry error {worst:.2e}"),
    )
}

/// Dense `A_ij = 1[j ∈ N(i)] S(f_i, f_j) √(P_i P_j)` built from scratch.
pub fn dense_edge_oracle(centers: &[[f64; 3]], vals: &[f32], c: usize, params: &GraphParams, anchors: &[usize]) -> Vec<f64> {
    let n = centers.len();
    let feats: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let row: Vec<f64> = vals[i * c..(i + 1) * c].iter().map(|&v| v as f64).collect();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            row.iter().map(|v| v / norm).collect()
        })
        .collect();
    let d2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut dists = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            dists.push(d2(&feats[i], &feats[j]).sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let s = if m % 2 == 1 { dists[m / 2] } else { 0.5 * (dists[m / 2 - 1] + dists[m / 2]) };
    let p: Vec<f64> = match params.unary_mode {
        UnaryMode::None => vec![1.0; n],
        UnaryMode::CosineToMean => {
            let mut mean = vec![0.0; c];
            for &a in anchors {
                for ch in 0..c {
                    mean[ch] += feats[a][ch] / anchors.len() as f64;
                }
            }
            feats
                .iter()
                .map(|f| (-d2(f, &mean) / (params.bandwidth_unary * s * s)).exp())
                .collect()
        }
        UnaryMode::Logistic => {
            let rows: Vec<f64> = feats.iter().flatten().cloned().collect();
            let model =
                splatlift::graph::fit_logistic(&rows, c, anchors, &Default::default()).unwrap();
            feats
                .iter()
                .map(|f| {
                    let z = model.bias + model.prior_shift + f.iter().zip(&model.weights).map(|(x, w)| x * w).sum::<f64>();
                    (1.0 / (1.0 + (-z).exp())).powf(1.0 / params.bandwidth_unary)
                })
                .collect()
        }
    };
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d: f64 = (0..3).map(|t| (centers[i][t] - centers[j][t]).powi(2)).sum();
                (d, j)
            })
            .collect();
        others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        for &(_, j) in others.iter().take(params.k) {
            let sim = (-d2(&feats[i], &feats[j]) / (params.bandwidth_edge * s * s)).exp();
            a[i * n + j] = sim * (p[i] * p[j]).sqrt();
        }
    }
    a
}

/// Random 8-bit histogram with a random number of occupied levels.
pub fn random_histogram(r: &mut ChaCha8Rng) -> [u64; 256] {
    let mut h = [0u64; 256];
    let style = r.random_range(0..3);
    let occupied = r.random_range(2..=256usize);
    let mut levels: Vec<usize> = (0..256).collect();
    for i in 0..occupied {
        let j = r.random_range(i..256);
        levels.swap(i, j);
    }
    for &l in &levels[..occupied] {
        h[l] = match style {
            0 => r.random_range(1..1000),
            1 => r.random_range(1..20),
            _ => {
                let x = l as f64;
                let bump = (-(x - 60.0).powi(2) / 400.0).exp() + 0.6 * (-(x - 180.0).powi(2) / 900.0).exp();
                1 + (5000.0 * bump) as u64 + r.random_range(0..10)
            }
        };
    }
    if h.iter().filter(|&&v| v > 0).count() < 2 {
        h[0] += 1;
        h[255] += 1;
    }
    h
}

/// Exhaustive Li scan: minimize `Σ_i i h_i [ln(i/μ_a) or ln(i/μ_b)]`.
pub fn li_brute(h: &[u64; 256]) -> usize {
    let mut best = (f64::INFINITY, 0usize);
    for t in 1..256 {
        let (na, nb): (u64, u64) = (h[..t].iter().sum(), h[t..].iter().sum());
        if na == 0 || nb == 0 {
            continue;
        }
        let ma = (0..t).map(|i| (i as u64 * h[i]) as f64).sum::<f64>() / na as f64;
        let mb = (t..256).map(|i| (i as u64 * h[i]) as f64).sum::<f64>() / nb as f64;
        let mut eta = 0.0;
        for i in 1..256 {
            if h[i] == 0 {
                continue;
            }
            let mu = if i < t { ma } else { mb };
            eta += (i as u64 * h[i]) as f64 * ((i as f64) / mu).ln();
        }
        if eta < best.0 - 1e-9 * eta.abs().max(1.0) {
            best = (eta, t);
        }
    }
    best.1
}

/// Exhaustive Otsu scan: maximize `ω_a ω_b (μ_a − μ_b)²`.
pub fn otsu_brute(h: &[u64; 256]) -> usize {
    let total: u64 = h.iter().sum();
    let mut best = (f64::NEG_INFINITY, 0usize);
    for t in 1..256 {
        let (na, nb): (u64, u64) = (h[..t].iter().sum(), h[t..].iter().sum());
        if na == 0 || nb == 0 {
            continue;
        }
        let ma = (0..t).map(|i| (i as u64 * h[i]) as f64).sum::<f64>() / na as f64;
        let mb = (t..256).map(|i| (i as u64 * h[i]) as f64).sum::<f64>() / nb as f64;
        let (wa, wb) = (na as f64 / total as f64, nb as f64 / total as f64);
        let v = wa * wb * (ma - mb).powi(2);
        if v > best.0 + 1e-12 * v.abs().max(1e-300) {
            best = (v, t);
        }
    }
    best.1
}

pub fn check_threshold_oracles(histograms: u64) -> Outcome {
    use splatlift::features::threshold::{li_level, otsu_level};
    let mut r = rng(424242);
    let mut mismatches = Vec::new();
    for k in 0..histograms {
        let h = random_histogram(&mut r);
        let (li, li_b) = (li_level(&h).unwrap(), li_brute(&h));
        let (ot, ot_b) = (otsu_level(&h).unwrap(), otsu_brute(&h));
        if li != li_b || ot != ot_b {
            mismatches.push(format!("#{k}: li {li}/{li_b} otsu {ot}/{ot_b}"));
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!("{histograms} histograms, mismatches: {}", if mismatches.is_empty() { "none".into() } else { mismatches.join(", ") }),
    )
}

/// Direct `K × K` mean filter with clamped borders.
pub fn direct_box(values: &[f64], h: usize, w: usize, k: usize) -> Vec<f64> {
    let r = (k / 2) as i64;
    let mut out = vec![0.0; h * w];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut s = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let yy = (y + dy).clamp(0, h as i64 - 1) as usize;
                    let xx = (x + dx).clamp(0, w as i64 - 1) as usize;
                    s += values[yy * w + xx];
                }
            }
            out[y as usize * w + x as usize] = s / (k * k) as f64;
        }
    }
    out
}

pub fn check_relevancy_closed_forms() -> Outcome {
    use splatlift::openvocab::{box_filter, relevancy, CanonicalSet, QueryEmbedding};
    // Orthonormal basis: feature e0, query e0, canonicals e1..e4.
    let e = |i: usize| {
        let mut v = vec![0.0; 6];
        v[i] = 1.0;
        v
    };
    let q = QueryEmbedding::new("q", e(0)).unwrap();
    let canon = CanonicalSet::new((1..5).map(|i| QueryEmbedding::new(format!("c{i}"), e(i)).unwrap()).collect()).unwrap();
    let one_vs_zero = relevancy(&e(0), &q, &canon, 10.0);
    let err_closed = (one_vs_zero - 1.0 / (1.0 + (-10.0f64).exp())).abs();
    // Feature orthogonal to the query and every canonical gives equal logits.
    let equal = relevancy(&e(5), &q, &canon, 10.0);
    let err_equal = (equal - 0.5).abs();
    let mut r = rng(99);
    let mut err_box = 0.0f64;
    for (h, w, k) in [(17, 23, 11), (5, 4, 11), (30, 31, 3), (12, 12, 1)] {
        let vals: Vec<f64> = (0..h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        let fast = box_filter(&vals, h, w, k).unwrap();
        err_box = err_box.max(max_abs_err(&fast, &direct_box(&vals, h, w, k)));
    }
    Outcome::new(
        err_equal <= 1e-12 && err_closed <= 1e-9 && err_box <= 1e-6,
        format!("equal logits {err_equal:.1e}, one-vs-zero {err_closed:.1e}, box filter {err_box:.1e}"),
    )
}

/// The two-cluster benchmark used by segmentation checks.
pub fn two_cluster(seed: u64) -> SyntheticScene {
    make_two_cluster_scene(&SyntheticSpec { seed, ..Default::default() }).unwrap()
}

pub const REFERENCE_VIEW: usize = 3;

/// Scribble on cluster 0 in the reference view, diffusion versus the
/// geometry-only baseline on every view.
pub fn run_two_cluster_segmentation(s: &SyntheticScene) -> (Vec<f64>, Vec<f64>) {
    let cfg = RasterConfig::default();
    let frames: Vec<Frame> = s.scene.cameras.iter().zip(&s.feature_maps).map(|(c, m)| Frame::new(c, m)).collect();
    let up = uplift(&s.scene, &frames, &cfg).unwrap();
    let scribble = s.scribble(REFERENCE_VIEW, 0, 3);
    let fg = ForegroundSpec::new(s.scene.cameras[REFERENCE_VIEW].id.clone(), scribble, ForegroundKind::Scribbles).unwrap();
    let targets: Vec<&Camera> = s.scene.cameras.iter().collect();
    let seg_cfg = SegmentationConfig::default();
    let mut result = segment_by_diffusion(&s.scene, &up.features, &fg, &seg_cfg, &targets).unwrap();
    let diffusion = result.evaluate(&s.gt_masks).unwrap().to_vec();
    let geo = segment_geometry_only(&s.scene, &fg, seg_cfg.threshold_mode, &targets, &cfg).unwrap();
    let geometry = geo.iter().zip(&s.gt_masks).map(|(m, g)| iou(m, g).unwrap()).collect();
    (diffusion, geometry)
}

pub fn check_synthetic_segmentation() -> Outcome {
    let start = Instant::now();
    let s = two_cluster(0);
    let (diffusion, geometry) = run_two_cluster_segmentation(&s);
    let secs = start.elapsed().as_secs_f64();
    let held_out_min = diffusion
        .iter()
        .enumerate()
        .filter(|&(v, _)| v != REFERENCE_VIEW)
        .map(|(_, &x)| x)
        .fold(f64::INFINITY, f64::min);
    let ordered = diffusion.iter().zip(&geometry).all(|(d, g)| d >= g);
    let geo_max = geometry.iter().cloned().fold(0.0, f64::max);
    Outcome::new(
        held_out_min >= 0.95 && ordered && secs < 60.0,
        format!(
            "{} Gaussians, {} views, min held-out IoU {held_out_min:.4}, max geometry-only IoU {geo_max:.4}, diffusion >= geometry on every view: {ordered}, {secs:.2} s",
            s.scene.len(),
            s.scene.cameras.len()
        ),
    )
}

/// Noise level of the stand-in training images for the pruning check.
pub const TRAINING_NOISE: f64 = 0.02;
pub const BACKGROUND: [f32; 3] = [0.0, 0.0, 0.0];

/// PSNR of unpruned and pruned renders against noisy training images, plus
/// the PSNR of pruned against unpruned, per view.
pub fn pruning_psnr(s: &SyntheticScene, keep: f64) -> Vec<(f64, f64, f64)> {
    let cfg = RasterConfig::default();
    let frames: Vec<Frame> = s.scene.cameras.iter().zip(&s.feature_maps).map(|(c, m)| Frame::new(c, m)).collect();
    let up = uplift(&s.scene, &frames, &cfg).unwrap();
    let pruned = prune_by_importance(&s.scene, &up.beta, keep).unwrap();
    let mut r = rng(77);
    let noise = rand_distr::Normal::new(0.0, TRAINING_NOISE).unwrap();
    s.scene
        .cameras
        .iter()
        .map(|cam| {
            let full = render_rgb(&s.scene, cam, BACKGROUND, &cfg).unwrap().map.data;
            let cut = render_rgb(&pruned, cam, BACKGROUND, &cfg).unwrap().map.data;
            let truth: Vec<f32> = full
                .iter()
                .map(|&v| (v as f64 + rand_distr::Distribution::sample(&noise, &mut r)).clamp(0.0, 1.0) as f32)
                .collect();
            (psnr(&full, &truth), psnr(&cut, &truth), psnr(&cut, &full))
        })
        .collect()
}

pub fn check_pruning() -> Outcome {
    let s = two_cluster(0);
    let per_view = pruning_psnr(&s, 0.5);
    let worst_drop = per_view.iter().map(|(a, b, _)| a - b).fold(f64::NEG_INFINITY, f64::max);
    let worst_direct = per_view.iter().map(|t| t.2).fold(f64::INFINITY, f64::min);
    Outcome::new(
        worst_drop < 3.0,
        format!(
            "keep 0.5 of {}, worst PSNR drop {worst_drop:.3} dB on {} views (pruned vs unpruned at least {worst_direct:.2} dB)",
            s.scene.len(),
            per_view.len()
        ),
    )
}

pub const BENCH_GAUSSIANS: usize = 20_000;
pub const BENCH_VIEWS: usize = 2;

pub fn check_throughput() -> Outcome {
    let scene = make_bench_scene(BENCH_GAUSSIANS, 640, 480, BENCH_VIEWS, 5).unwrap();
    let report = splatlift::synthetic::benchmark_uplift(&scene, &[1, 8, 40], 5, 11).unwrap();
    let fit = report.fit.clone().unwrap();
    let marginal_ms = 1e3 * fit.slope / report.views as f64;
    let at40 = report.timings.iter().find(|t| t.channels == 40).unwrap().ms_per_view_per_channel;
    Outcome::new(
        fit.r_squared > 0.95 && at40 <= 50.0,
        format!(
            "{} Gaussians at 640x480, {} threads, R² {:.4}, marginal {marginal_ms:.2} ms/view/channel, {at40:.2} ms/view/channel at c=40, timings {:?}",
            report.gaussians,
            report.threads,
            fit.r_squared,
            report.timings.iter().map(|t| (t.channels, (t.median_seconds * 1e3).round())).collect::<Vec<_>>()
        ),
    )
}

/// Small helpers shared by scene tests.
pub fn isotropic_scene(points: &[([f64; 3], f64, f64)], cams: Vec<Camera>) -> GaussianScene {
    let gaussians = points
        .iter()
        .map(|&(p, sigma, o)| Gaussian::isotropic(Point3::new(p[0], p[1], p[2]), sigma, o, [0.5; 3]))
        .collect();
    GaussianScene::new(gaussians, cams).unwrap()
}

pub fn random_rotation(r: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
        r.random_range(-1.0..1.0),
    ))
}

pub fn front_camera(id: &str, w: usize, h: usize, focal: f64) -> Camera {
    Camera::look_at(id, w, h, focal, Point3::new(0.0, 0.0, -3.0), Point3::origin(), -Vector3::y())
}
