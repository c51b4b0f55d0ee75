mod common;

use splatlift::features::{FeatureMap, GaussianFeatures};
use splatlift::raster::{rasterize_weights, RasterConfig};
use splatlift::scene::Camera;
use splatlift::synthetic::{cluster_mask, dense_oracle, oracle_3g};
use splatlift::uplift::{refine_by_gradient, reproject_mask, uplift, uplift_count_normalized, Frame};

fn random_frames(scene: &splatlift::scene::GaussianScene, c: usize, seed: u64) -> Vec<FeatureMap> {
    let mut r = common::rng(seed);
    scene.cameras.iter().map(|cam| common::random_map(&mut r, cam, c)).collect()
}

#[test]
fn oracle_3g_uplift_matches_dense_inverse_rendering() {
    let scene = oracle_3g();
    let cfg = RasterConfig::default();
    let maps = random_frames(&scene, 4, 8);
    let frames: Vec<Frame> = scene.cameras.iter().zip(&maps).map(|(c, m)| Frame::new(c, m)).collect();
    let up = uplift(&scene, &frames, &cfg).unwrap();
    let cams: Vec<&Camera> = scene.cameras.iter().collect();
    let oracle = dense_oracle(&scene, &cams, &cfg).unwrap();
    let expected = oracle.uplift(&common::stack(&maps), 4);
    assert!(common::max_abs_err(&common::to_f64(&up.features.values), &expected) < 1e-5);

    let count = uplift_count_normalized(&scene, &frames, &cfg).unwrap();
    let expected = oracle.uplift_count(&common::stack(&maps), 4);
    assert!(common::max_abs_err(&common::to_f64(&count.values), &expected) < 1e-5);
}

#[test]
fn random_scenes_match_dense_oracle() {
    common::check_uplift_oracle(20).assert();
}

#[test]
fn one_step_from_zero_is_uplift() {
    common::check_one_step_identity(20).assert();
}

#[test]
fn refinement_loss_never_increases() {
    let scene = oracle_3g();
    let cfg = RasterConfig::default();
    let maps = random_frames(&scene, 3, 12);
    let frames: Vec<Frame> = scene.cameras.iter().zip(&maps).map(|(c, m)| Frame::new(c, m)).collect();
    let zero = GaussianFeatures::zeros(scene.len(), 3);
    let refined = refine_by_gradient(&scene, &frames, &zero, 50, 1.0, &cfg).unwrap();
    assert_eq!(refined.loss.len(), 51);
    for pair in refined.loss.windows(2) {
        assert!(pair[1] <= pair[0] * (1.0 + 1e-6) + 1e-9, "loss rose from {} to {}", pair[0], pair[1]);
    }
    assert!(refined.loss[50] < refined.loss[0]);
}

#[test]
fn uplifted_features_are_convex_combinations() {
    for seed in 0..20 {
        let scene = splatlift::synthetic::random_oracle_scene(500 + seed);
        let cfg = RasterConfig::default();
        let c = 3;
        let maps = random_frames(&scene, c, seed);
        let frames: Vec<Frame> = scene.cameras.iter().zip(&maps).map(|(cam, m)| Frame::new(cam, m)).collect();
        let up = uplift(&scene, &frames, &cfg).unwrap();
        let mut lo = vec![vec![f32::INFINITY; c]; scene.len()];
        let mut hi = vec![vec![f32::NEG_INFINITY; c]; scene.len()];
        for (cam, map) in scene.cameras.iter().zip(&maps) {
            let buffer = rasterize_weights(&scene, cam, &cfg);
            for p in 0..buffer.pixel_count() {
                for f in buffer.pixel(p) {
                    let g = f.gaussian as usize;
                    for ch in 0..c {
                        lo[g][ch] = lo[g][ch].min(map.at(p)[ch]);
                        hi[g][ch] = hi[g][ch].max(map.at(p)[ch]);
                    }
                }
            }
        }
        for g in 0..scene.len() {
            if up.beta[g] == 0.0 {
                continue;
            }
            for ch in 0..c {
                let v = up.features.row(g)[ch];
                assert!(v >= lo[g][ch] - 1e-6 && v <= hi[g][ch] + 1e-6);
            }
        }
    }
}

#[test]
fn pruning_half_keeps_renders_close() {
    let s = common::two_cluster(0);
    let per_view = common::pruning_psnr(&s, 0.5);
    for (_, _, direct) in per_view {
        assert!(direct >= 30.0, "pruned vs unpruned PSNR {direct}");
    }
}

#[test]
fn reprojected_mask_agrees_with_ground_truth_in_a_neighbouring_view() {
    let s = common::two_cluster(1);
    let cfg = RasterConfig::default();
    let (src, dst) = (3, 4);
    let reference = cluster_mask(&s.scene, &s.labels, &s.scene.cameras[src], 0, &cfg);
    let projected = reproject_mask(&s.scene, &s.scene.cameras[src], &reference, &s.scene.cameras[dst], &cfg).unwrap();
    let binary = splatlift::features::mask::binarize(&projected, 0.5);
    let iou = splatlift::segmentation::iou(&binary, &s.gt_masks[dst]).unwrap();
    assert!(iou >= 0.9, "IoU {iou}");
}

#[test]
fn count_normalization_ignores_weights() {
    // One pixel seen through two stacked Gaussians. Weight normalization
    // returns the pixel value for both, while dividing by the fragment count
    // leaves each Gaussian scaled by its own weight.
    let cam = common::front_camera("c", 1, 1, 1.0);
    let scene = common::isotropic_scene(&[([0.0; 3], 0.3, 0.5), ([0.0, 0.0, 0.2], 0.3, 0.5)], vec![cam.clone()]);
    let map = FeatureMap::from_vec(1, 1, 1, vec![2.0]).unwrap();
    let cfg = RasterConfig::default();
    let w = uplift(&scene, &[Frame::new(&cam, &map)], &cfg).unwrap();
    let c = uplift_count_normalized(&scene, &[Frame::new(&cam, &map)], &cfg).unwrap();
    assert_eq!(w.features.values, vec![2.0, 2.0]);
    let rows: Vec<f32> = (0..2).map(|i| c.row(i)[0]).collect();
    let beta = &w.beta;
    assert!((rows[0] as f64 - 2.0 * beta[0]).abs() < 1e-6);
    assert!((rows[1] as f64 - 2.0 * beta[1]).abs() < 1e-6);
}
