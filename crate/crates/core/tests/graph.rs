mod common;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use splatlift::features::GaussianFeatures;
use splatlift::graph::{
    build_graph, diffuse, fit_logistic, knn_graph, median_pairwise_distance, normalized_rows, GraphParams,
    LogisticConfig,
};

#[test]
fn knn_matches_exhaustive_search() {
    let mut r = common::rng(5);
    let pts: Vec<[f64; 3]> = (0..200)
        .map(|_| [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
        .collect();
    let nb = knn_graph(&pts, 8).unwrap();
    for (i, row) in nb.iter().enumerate() {
        let mut all: Vec<(f64, usize)> = (0..pts.len())
            .filter(|&j| j != i)
            .map(|j| ((0..3).map(|t| (pts[i][t] - pts[j][t]).powi(2)).sum(), j))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let expected: Vec<u32> = all[..8].iter().map(|e| e.1 as u32).collect();
        let mut got = row.clone();
        let mut exp_sorted = expected.clone();
        got.sort_unstable();
        exp_sorted.sort_unstable();
        assert_eq!(got, exp_sorted, "node {i}");
    }
}

#[test]
fn sampled_median_is_close_to_exact() {
    let mut r = common::rng(17);
    let n = 100;
    let c = 8;
    let vals: Vec<f32> = (0..n * c).map(|_| r.random_range(0.0f32..1.0)).collect();
    let rows = normalized_rows(&GaussianFeatures::from_vec(n, c, vals).unwrap());
    let exact = median_pairwise_distance(&rows, c, usize::MAX, 0).unwrap();
    let mut dists = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d: f64 = (0..c).map(|t| (rows[i * c + t] - rows[j * c + t]).powi(2)).sum();
            dists.push(d.sqrt());
        }
    }
    dists.sort_by(f64::total_cmp);
    let m = dists.len();
    let oracle = if m % 2 == 1 { dists[m / 2] } else { 0.5 * (dists[m / 2 - 1] + dists[m / 2]) };
    assert!((exact - oracle).abs() < 1e-12);
    for seed in 0..5 {
        let sampled = median_pairwise_distance(&rows, c, 500, seed).unwrap();
        assert!((sampled - oracle).abs() / oracle < 0.1, "seed {seed}: {sampled} vs {oracle}");
    }
}

#[test]
fn edge_weights_match_dense_evaluation() {
    common::check_graph_fidelity(3).assert();
}

#[test]
fn diffusion_approaches_dominant_eigenvector() {
    common::check_power_method(8).assert();
}

#[test]
fn disconnected_component_stays_zero() {
    let mut centers = Vec::new();
    for i in 0..20 {
        let off = if i < 10 { 0.0 } else { 100.0 };
        centers.push([off + i as f64 * 0.1, 0.0, 0.0]);
    }
    let vals: Vec<f32> = (0..20).flat_map(|i| [1.0, (i % 3) as f32 * 0.2]).collect();
    let feats = GaussianFeatures::from_vec(20, 2, vals).unwrap();
    let graph = build_graph(&centers, &feats, &GraphParams { k: 4, ..Default::default() }, None).unwrap();
    let mut g0 = vec![0.0; 20];
    g0[2] = 1.0;
    for t in [1, 5, 50] {
        let g = diffuse(&graph, &g0, t).unwrap().g;
        assert!(g[10..].iter().all(|&v| v == 0.0));
        assert!(g[..10].iter().any(|&v| v > 0.0));
    }
}

#[test]
fn diffusion_direction_is_scale_invariant() {
    let graph = common::random_graph(4, 40, 5);
    let mut r = common::rng(9);
    let g0: Vec<f64> = (0..40).map(|_| r.random_range(-1.0..1.0)).collect();
    let base = diffuse(&graph, &g0, 7).unwrap().g;
    for scale in [3.5, 1e-3, -2.0] {
        let scaled: Vec<f64> = g0.iter().map(|v| v * scale).collect();
        let g = diffuse(&graph, &scaled, 7).unwrap().g;
        let ratio: Vec<f64> = g.iter().zip(&base).filter(|(_, b)| b.abs() > 1e-9).map(|(a, b)| a / b).collect();
        let first = ratio[0];
        assert!(first * scale > 0.0);
        assert!(ratio.iter().all(|x| (x - first).abs() < 1e-9 * first.abs()));
    }
}

/// Plain gradient descent on the class-balanced, ridge-penalized logistic
/// loss, used as an independent reference fit.
fn reference_fit(x: &[[f64; 2]], y: &[bool], lambda: f64) -> ([f64; 2], f64) {
    let npos = y.iter().filter(|&&v| v).count() as f64;
    let nneg = y.len() as f64 - npos;
    let (mut w, mut b) = ([0.0; 2], 0.0);
    for _ in 0..20_000 {
        let (mut gw, mut gb) = ([0.0; 2], 0.0);
        for (xi, &yi) in x.iter().zip(y) {
            let z = b + w[0] * xi[0] + w[1] * xi[1];
            let p = 1.0 / (1.0 + (-z).exp());
            let (t, c) = if yi { (1.0, 0.5 / npos) } else { (0.0, 0.5 / nneg) };
            let d = c * (p - t);
            gw[0] += d * xi[0];
            gw[1] += d * xi[1];
            gb += d;
        }
        w[0] -= 0.5 * (gw[0] + lambda * w[0]);
        w[1] -= 0.5 * (gw[1] + lambda * w[1]);
        b -= 0.5 * gb;
    }
    (w, b)
}

#[test]
fn logistic_fit_agrees_with_reference_solver() {
    let mut r = common::rng(31);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for i in 0..400 {
        let pos = i % 3 == 0;
        let (cx, cy) = if pos { (1.0, 0.8) } else { (-0.5, -0.4) };
        x.push([cx + noise.sample(&mut r), cy + noise.sample(&mut r)]);
        y.push(pos);
    }
    let rows: Vec<f64> = x.iter().flatten().cloned().collect();
    let positive: Vec<usize> = (0..y.len()).filter(|&i| y[i]).collect();
    let model = fit_logistic(&rows, 2, &positive, &LogisticConfig::default()).unwrap();
    let (w, b) = reference_fit(&x, &y, 1e-4);
    let accuracy = |pred: &dyn Fn(&[f64; 2]) -> bool| {
        x.iter().zip(&y).filter(|(xi, &yi)| pred(xi) == yi).count() as f64 / y.len() as f64
    };
    let ours = accuracy(&|xi| model.raw_logit(xi) > 0.0);
    let reference = accuracy(&|xi| b + w[0] * xi[0] + w[1] * xi[1] > 0.0);
    assert!((ours - reference).abs() <= 0.02, "ours {ours}, reference {reference}");
    assert!(ours > 0.7);
}

#[test]
fn suppressed_nodes_lose_all_edges() {
    let mut g = common::random_graph(21, 40, 6);
    let before = g.clone();
    g.suppress(&[3, 17]);
    assert_eq!(g.unary[3], 0.0);
    assert_eq!(g.unary[17], 0.0);
    for i in 0..g.n {
        for e in g.offsets[i]..g.offsets[i + 1] {
            let j = g.indices[e] as usize;
            if [3, 17].contains(&i) || [3, 17].contains(&j) {
                assert_eq!(g.values[e], 0.0);
            } else {
                assert_eq!(g.values[e], before.values[e]);
            }
        }
    }
    let mut g0 = vec![0.0; g.n];
    g0[3] = 1.0;
    g0[0] = 1.0;
    let state = splatlift::graph::diffuse(&g, &g0, 5).unwrap();
    assert_eq!(state.g[3], 0.0);
    assert_eq!(state.g[17], 0.0);
}
