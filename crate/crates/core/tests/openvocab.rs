mod common;

use nalgebra::Point3;
use rand::Rng;

use splatlift::features::{FeatureMap, GaussianFeatures};
use splatlift::openvocab::{
    localize, relevancy, relevancy_map, select_bandwidth, top_q_candidates, top_q_prompts, CanonicalSet,
    OpenVocabConfig, QueryEmbedding, RelevancyMap, DEFAULT_BANDWIDTHS,
};
use splatlift::raster::{render, RasterConfig};
use splatlift::scene::{Camera, Gaussian, GaussianScene};

fn unit(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn basis_canon(dim: usize) -> CanonicalSet {
    CanonicalSet::new((1..5).map(|i| QueryEmbedding::new(format!("c{i}"), unit(dim, i)).unwrap()).collect()).unwrap()
}

fn random_unit(r: &mut rand_chacha::ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

fn map_from(values: Vec<f32>, h: usize, w: usize) -> RelevancyMap {
    RelevancyMap { scores: FeatureMap::from_vec(h, w, 1, values).unwrap(), query: "q".into(), bandwidth: None }
}

#[test]
fn closed_forms_and_box_filter() {
    common::check_relevancy_closed_forms().assert();
}

#[test]
fn relevancy_matches_naive_formula() {
    let mut r = common::rng(1);
    let dim = 16;
    for _ in 0..200 {
        let q = QueryEmbedding::new("q", random_unit(&mut r, dim)).unwrap();
        let canon = CanonicalSet::new(
            (0..4).map(|i| QueryEmbedding::new(format!("c{i}"), random_unit(&mut r, dim)).unwrap()).collect(),
        )
        .unwrap();
        let f = random_unit(&mut r, dim);
        let t = r.random_range(1.0..30.0);
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let eq = (t * dot(&f, &q.vector)).exp();
        let naive = canon
            .entries
            .iter()
            .map(|c| eq / (eq + (t * dot(&f, &c.vector)).exp()))
            .fold(f64::INFINITY, f64::min);
        assert!((relevancy(&f, &q, &canon, t) - naive).abs() < 1e-9);
    }
}

#[test]
fn relevancy_is_monotone_in_the_query_dot_product() {
    let dim = 6;
    let q = QueryEmbedding::new("q", unit(dim, 0)).unwrap();
    let canon = basis_canon(dim);
    let mut last = 0.0;
    for k in 0..20 {
        let mut f = vec![0.1, 0.3, -0.2, 0.05, 0.4, 0.0];
        f[0] = -1.0 + 0.1 * k as f64;
        let v = relevancy(&f, &q, &canon, 10.0);
        assert!(v > last);
        last = v;
    }
}

#[test]
fn localization_ignores_monotone_transforms() {
    let mut r = common::rng(4);
    let (h, w) = (13, 17);
    let vals: Vec<f32> = (0..h * w).map(|_| r.random_range(0.0f32..1.0)).collect();
    let a = localize(&map_from(vals.clone(), h, w)).unwrap();
    let b = localize(&map_from(vals.iter().map(|v| (3.0 * v).exp() + 2.0).collect(), h, w)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn planted_object_is_localized_inside_its_footprint() {
    let s = common::two_cluster(0);
    let dim = 6;
    let q = QueryEmbedding::new("planted", unit(dim, 0)).unwrap();
    let canon = basis_canon(dim);
    let clip: Vec<f32> = s.labels.iter().flat_map(|&l| unit(dim, if l == 0 { 0 } else { 1 }).into_iter().map(|v| v as f32)).collect();
    for (view, cam) in s.scene.cameras.iter().enumerate() {
        let rendered = render(&s.scene, cam, &clip, dim, &RasterConfig::default()).unwrap().map;
        let map = relevancy_map(&rendered, &q, &canon, 10.0, 11).unwrap();
        let (x, y) = localize(&map).unwrap();
        assert!(s.gt_masks[view].value(x, y) > 0.5, "view {view}: ({x}, {y})");
    }
}

#[test]
fn top_q_uses_the_mean_relevancy_fraction() {
    let (h, w) = (10, 10);
    let vals: Vec<f32> = (0..h * w).map(|p| if p % 2 == 0 { 0.25 } else { 0.75 }).collect();
    let map = map_from(vals, h, w);
    assert_eq!(top_q_candidates(&map).unwrap().len(), 20);

    let mut r = common::rng(3);
    let (h, w) = (40, 50);
    let high: Vec<bool> = (0..h * w).map(|_| r.random_bool(0.3)).collect();
    let vals: Vec<f32> = high
        .iter()
        .map(|&hi| if hi { r.random_range(0.85f32..0.95) } else { r.random_range(0.05f32..0.15) })
        .collect();
    let map = map_from(vals, h, w);
    let cand = top_q_candidates(&map).unwrap();
    assert!(!cand.is_empty());
    assert!(cand.iter().all(|&p| high[p]));
    for set in top_q_prompts(&map, 3, 10, 5).unwrap() {
        assert!(set.points.iter().all(|&[x, y]| high[y * w + x]));
    }
}

/// Blob split at x = 0: the left half carries the query
/// direction, the right half a canonical one, and their self-supervised
/// features differ.
fn split_blob() -> (GaussianScene, GaussianFeatures, GaussianFeatures) {
    let mut r = common::rng(10);
    let mut gaussians = Vec::new();
    let (mut clip, mut dino) = (Vec::new(), Vec::new());
    for i in 0..400 {
        let left = i < 200;
        let x = if left { r.random_range(-1.0..0.0) } else { r.random_range(0.0..1.0) };
        let mean = Point3::new(x, r.random_range(-0.5..0.5), r.random_range(-0.5..0.5));
        gaussians.push(Gaussian::isotropic(mean, 0.05, 0.8, [0.5; 3]));
        clip.extend(unit(6, if left { 0 } else { 1 }).iter().map(|&v| v as f32));
        dino.extend(if left { [1.0f32, 0.0, 0.0] } else { [0.0, 1.0, 0.0] });
    }
    let cam = common::front_camera("front", 32, 32, 24.0);
    let scene = GaussianScene::new(gaussians, vec![cam]).unwrap();
    (
        scene,
        GaussianFeatures::from_vec(400, 6, clip).unwrap(),
        GaussianFeatures::from_vec(400, 3, dino).unwrap(),
    )
}

#[test]
fn bandwidth_that_keeps_regions_apart_wins() {
    let (scene, clip, dino) = split_blob();
    let q = QueryEmbedding::new("q", unit(6, 0)).unwrap();
    let canon = basis_canon(6);
    let cams: Vec<&Camera> = scene.cameras.iter().collect();
    let cfg = OpenVocabConfig { bandwidths: vec![1000.0, 0.01], k: 32, steps: 60, ..Default::default() };
    let sel = select_bandwidth(&scene, &clip, &dino, &q, &canon, &cams, &cfg).unwrap();
    assert_eq!(sel.best_index, 1);
    assert!(sel.peaks[1] > sel.peaks[0] + 0.1, "{:?}", sel.peaks);
    assert_eq!(sel.maps.len(), 1);

    let single = OpenVocabConfig { bandwidths: vec![0.05], ..Default::default() };
    assert_eq!(select_bandwidth(&scene, &clip, &dino, &q, &canon, &cams, &single).unwrap().best_index, 0);
    assert_eq!(OpenVocabConfig::default().bandwidths, DEFAULT_BANDWIDTHS.to_vec());
    assert_eq!(DEFAULT_BANDWIDTHS, [0.0004, 0.002, 0.01, 0.05]);
}
