//! Implementations of the subcommands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use splatlift::features::container::{
    read_feature_map, read_gaussian_features, write_feature_map, write_gaussian_features,
};
use splatlift::features::mask::{read_mask, write_mask, write_rgb_png};
use splatlift::features::{FeatureMap, GaussianFeatures};
use splatlift::graph::{build_graph, diffuse, GraphParams, UnaryMode};
use splatlift::openvocab::{
    localize, read_embeddings, select_bandwidth, CanonicalSet, OpenVocabConfig,
};
use splatlift::raster::{render, render_rgb, RasterConfig};
use splatlift::scene::{load_scene, save_cameras, save_scene, Camera, GaussianScene};
use splatlift::segmentation::{
    generate_prompts, init_g0, segment_by_diffusion, write_prompt_files, ForegroundKind, ForegroundSpec,
    SegmentationConfig,
};
use splatlift::synthetic::{benchmark_uplift, make_bench_scene, make_two_cluster_scene, SyntheticSpec};
use splatlift::uplift::{prune_by_importance, refine_by_gradient, uplift, uplift_count_normalized, Frame};
use splatlift::{Error, Result};

use crate::args::*;
use crate::viz::{pca_colors, parse_list, scaled_to_unit};

pub fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Uplift(a) => cmd_uplift(&a),
        Command::Render(a) => cmd_render(&a),
        Command::Diffuse(a) => cmd_diffuse(&a),
        Command::Segment(a) => cmd_segment(&a),
        Command::Localize(a) => cmd_localize(&a),
        Command::Bench(a) => cmd_bench(&a),
        Command::GenSynthetic(a) => cmd_gen_synthetic(&a),
        Command::Serve(a) => crate::service::serve_blocking(&a),
    }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}

pub fn load(args: &SceneArgs) -> Result<GaussianScene> {
    load_scene(&args.scene, &args.cameras)
}

/// Feature rows must match the scene.
pub fn load_features(path: &Path, scene: &GaussianScene) -> Result<GaussianFeatures> {
    let f = read_gaussian_features(path)?;
    if f.rows != scene.len() {
        return Err(Error::validation(format!(
            "{} has {} rows but the scene has {} Gaussians",
            path.display(),
            f.rows,
            scene.len()
        )));
    }
    Ok(f)
}

/// Cameras named in a comma-separated list, or all of them.
pub fn select_cameras<'a>(scene: &'a GaussianScene, list: Option<&str>) -> Result<Vec<&'a Camera>> {
    match list {
        None => Ok(scene.cameras.iter().collect()),
        Some(ids) => {
            let ids: Vec<&str> = ids.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
            if ids.is_empty() {
                return Err(Error::validation("camera list is empty"));
            }
            ids.into_iter().map(|id| scene.camera(id)).collect()
        }
    }
}

/// Masks `<camera_id>.png` (or `.pgm`) present in `dir`.
pub fn load_ground_truth(dir: &Path, scene: &GaussianScene) -> Result<BTreeMap<String, FeatureMap>> {
    let mut out = BTreeMap::new();
    for cam in &scene.cameras {
        for ext in ["png", "pgm"] {
            let path = dir.join(format!("{}.{ext}", cam.id));
            if path.exists() {
                out.insert(cam.id.clone(), read_mask(&path)?);
                break;
            }
        }
    }
    Ok(out)
}

pub fn load_hint(scene: &GaussianScene, hint: &HintArgs) -> Result<ForegroundSpec> {
    let mask = read_mask(&hint.fg_mask)?;
    let view = match &hint.fg_view {
        Some(v) => v.clone(),
        None => hint
            .fg_mask
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::validation("--fg-view is required when the mask file name is not a camera id"))?
            .to_string(),
    };
    let cam = scene.camera(&view)?;
    if (mask.width, mask.height) != (cam.width, cam.height) {
        return Err(Error::validation(format!(
            "mask is {}x{} but view {view:?} is {}x{}",
            mask.width, mask.height, cam.width, cam.height
        )));
    }
    ForegroundSpec::new(view, mask, hint.fg_kind.parse()?)
}

fn cmd_uplift(a: &UpliftArgs) -> Result<()> {
    let scene = load(&a.scene)?;
    let mut maps = Vec::new();
    for cam in &scene.cameras {
        let path = a.features_dir.join(format!("{}.splf", cam.id));
        if path.exists() {
            maps.push((cam, read_feature_map(&path)?));
        }
    }
    if maps.is_empty() {
        return Err(Error::validation(format!(
            "no feature map named <camera_id>.splf in {}",
            a.features_dir.display()
        )));
    }
    let frames: Vec<Frame> = maps.iter().map(|(c, m)| Frame::new(c, m)).collect();
    let cfg = RasterConfig::default();
    let up = uplift(&scene, &frames, &cfg)?;
    let mut features = if a.count_normalize {
        uplift_count_normalized(&scene, &frames, &cfg)?
    } else {
        up.features.clone()
    };
    let mut loss = None;
    if a.refine_steps > 0 {
        let r = refine_by_gradient(&scene, &frames, &features, a.refine_steps, 1.0, &cfg)?;
        loss = r.loss.last().copied();
        features = r.features;
    }
    if let Some(b) = &a.beta_out {
        write_gaussian_features(&GaussianFeatures::from_scalars(&up.beta), b)?;
    }
    let mut kept = scene.len();
    match (a.keep_fraction, &a.pruned_scene) {
        (Some(kf), Some(out_scene)) => {
            let pruned = prune_by_importance(&scene, &up.beta, kf)?;
            let keep = pruned.active_indices();
            kept = keep.len();
            save_scene(&pruned, out_scene)?;
            features = features.select_rows(&keep);
        }
        (Some(_), None) => return Err(Error::validation("--keep-fraction needs --pruned-scene")),
        (None, Some(_)) => return Err(Error::validation("--pruned-scene needs --keep-fraction")),
        (None, None) => {}
    }
    write_gaussian_features(&features, &a.out)?;
    let summary = json!({
        "views": frames.len(),
        "gaussians": kept,
        "channels": features.channels,
        "unseen": up.unseen().len(),
        "final_loss": loss,
    });
    println!("{summary}");
    Ok(())
}

fn cmd_render(a: &RenderArgs) -> Result<()> {
    let scene = load(&a.scene)?;
    let cam = scene.camera(&a.view)?;
    let cfg = RasterConfig::default();
    let features = || -> Result<GaussianFeatures> {
        let path = a
            .features
            .as_ref()
            .ok_or_else(|| Error::validation(format!("layer {} needs --features", a.layer)))?;
        load_features(path, &scene)
    };
    match a.layer.as_str() {
        "rgb" => {
            let bg: Vec<f32> = parse_list(&a.background, "--background")?;
            let bg: [f32; 3] = bg
                .try_into()
                .map_err(|_| Error::validation("--background needs three values r,g,b"))?;
            write_rgb_png(&render_rgb(&scene, cam, bg, &cfg)?.map, &a.out)
        }
        "pca" => {
            let colors = pca_colors(&features()?)?;
            write_rgb_png(&render(&scene, cam, &colors, 3, &cfg)?.map, &a.out)
        }
        "features" => {
            let f = features()?;
            let map = render(&scene, cam, &f.values, f.channels, &cfg)?.map.with_camera(cam.id.clone());
            let is_png = a.out.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
            if is_png {
                if f.channels != 1 {
                    return Err(Error::validation("PNG output of the features layer needs one channel"));
                }
                write_mask(&scaled_to_unit(&map), &a.out)
            } else {
                write_feature_map(&map, &a.out)
            }
        }
        other => Err(Error::validation(format!("unknown layer '{other}' (expected rgb, features or pca)"))),
    }
}

fn cmd_diffuse(a: &DiffuseArgs) -> Result<()> {
    let scene = load(&a.scene)?;
    let features = load_features(&a.features, &scene)?;
    let fg = load_hint(&scene, &a.hint)?;
    let unary_mode = match &a.unary_mode {
        Some(m) => m.parse()?,
        None => match fg.kind {
            ForegroundKind::Scribbles => UnaryMode::CosineToMean,
            ForegroundKind::ReferenceMask => UnaryMode::Logistic,
        },
    };
    let params = GraphParams {
        k: a.k,
        bandwidth_edge: a.bandwidth_edge,
        bandwidth_unary: a.bandwidth_unary,
        unary_mode,
        symmetrize: a.symmetrize,
        seed: a.seed,
        ..GraphParams::default()
    };
    let (g0, anchors) = init_g0(&scene, &fg, a.g0_threshold, &RasterConfig::default())?;
    let graph = build_graph(&scene.centers(), &features, &params, Some(&anchors))?;
    let state = diffuse(&graph, &g0, a.steps)?;
    write_gaussian_features(&GaussianFeatures::from_scalars(&state.g), &a.out)?;
    println!(
        "{}",
        json!({ "anchors": anchors.len(), "steps": a.steps, "edges": graph.nnz(), "kernel_scale": graph.scale })
    );
    Ok(())
}

#[derive(Serialize)]
struct SegmentSummary {
    reference_view: String,
    camera_ids: Vec<String>,
    anchors: usize,
    foreground_pixels: Vec<usize>,
    iou: BTreeMap<String, f64>,
    mean_iou: Option<f64>,
    config: SegmentationConfig,
}

fn cmd_segment(a: &SegmentArgs) -> Result<()> {
    let scene = load(&a.scene)?;
    let features = load_features(&a.features, &scene)?;
    let fg = load_hint(&scene, &a.hint)?;
    let cfg: SegmentationConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SegmentationConfig::default(),
    };
    let targets = select_cameras(&scene, a.targets.as_deref())?;
    let result = segment_by_diffusion(&scene, &features, &fg, &cfg, &targets)?;

    let masks_dir = a.out_dir.join("masks");
    let scores_dir = a.out_dir.join("scores");
    create_dir(&masks_dir)?;
    create_dir(&scores_dir)?;
    for ((id, mask), score) in result.camera_ids.iter().zip(&result.masks).zip(&result.scores) {
        write_mask(mask, &masks_dir.join(format!("{id}.png")))?;
        write_feature_map(score, &scores_dir.join(format!("{id}.splf")))?;
    }
    let mut iou = BTreeMap::new();
    if let Some(dir) = &a.gt_dir {
        let gt = load_ground_truth(dir, &scene)?;
        for (id, mask) in result.camera_ids.iter().zip(&result.masks) {
            if let Some(g) = gt.get(id) {
                iou.insert(id.clone(), splatlift::segmentation::iou(mask, g)?);
            }
        }
    }
    if let Some(dir) = &a.prompts_dir {
        create_dir(dir)?;
        for cam in &targets {
            let sets = generate_prompts(&scene, &fg, cam, cfg.tau, cfg.n_prompts, cfg.n_repeats, cfg.seed, &cfg.raster)?;
            write_prompt_files(dir, &sets)?;
        }
    }
    let mean_iou = (!iou.is_empty()).then(|| iou.values().sum::<f64>() / iou.len() as f64);
    let summary = SegmentSummary {
        reference_view: fg.camera_id.clone(),
        camera_ids: result.camera_ids.clone(),
        anchors: result.anchors.len(),
        foreground_pixels: result
            .masks
            .iter()
            .map(|m| m.data.iter().filter(|&&v| v > 0.5).count())
            .collect(),
        iou,
        mean_iou,
        config: cfg,
    };
    write_json(&a.out_dir.join("summary.json"), &summary)?;
    if let Some(m) = summary.mean_iou {
        println!("mean IoU {m:.4} over {} views", summary.iou.len());
    }
    Ok(())
}

fn cmd_localize(a: &LocalizeArgs) -> Result<()> {
    let scene = load(&a.scene)?;
    let clip = load_features(&a.clip_features, &scene)?;
    let dino = load_features(&a.dino_features, &scene)?;
    let queries = read_embeddings(&a.query_emb)?;
    let canon = CanonicalSet::new(read_embeddings(&a.canon_emb)?)?;
    if canon.dim() != clip.channels {
        return Err(Error::validation(format!(
            "embeddings have dimension {} but language features have {} channels",
            canon.dim(),
            clip.channels
        )));
    }
    let mut cfg = OpenVocabConfig {
        temperature: a.temperature,
        kernel: a.kernel,
        steps: a.steps,
        k: a.k,
        ..OpenVocabConfig::default()
    };
    if let Some(b) = &a.bandwidths {
        cfg.bandwidths = parse_list(b, "--bandwidths")?;
    }
    let cams = select_cameras(&scene, a.views.as_deref())?;
    if let Some(dir) = &a.maps_dir {
        create_dir(dir)?;
    }
    let mut reports = Vec::new();
    for (qi, q) in queries.iter().enumerate() {
        let sel = select_bandwidth(&scene, &clip, &dino, q, &canon, &cams, &cfg)?;
        let mut views = Vec::new();
        for (cam, map) in cams.iter().zip(&sel.maps) {
            let (x, y) = localize(map)?;
            let peak = map.scores.data.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
            views.push(json!({ "camera_id": cam.id, "x": x, "y": y, "peak": peak }));
            if let Some(dir) = &a.maps_dir {
                let name = if q.text.is_empty() { format!("query{qi}") } else { sanitize(&q.text) };
                write_mask(&map.scores, &dir.join(format!("{name}_{}.png", cam.id)))?;
            }
        }
        reports.push(json!({
            "query": q.text,
            "bandwidth": sel.bandwidth,
            "best_index": sel.best_index,
            "peaks": sel.peaks,
            "views": views,
        }));
    }
    write_json(&a.out, &reports)
}

fn sanitize(text: &str) -> String {
    text.chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '_' }).collect()
}

fn cmd_bench(a: &BenchArgs) -> Result<()> {
    let channels: Vec<usize> = parse_list(&a.channels, "--channels")?;
    let scene = make_bench_scene(a.gaussians, a.width, a.height, a.views, a.seed)?;
    let report = benchmark_uplift(&scene, &channels, a.repeats, a.seed)?;
    match &a.out {
        Some(p) => write_json(p, &report),
        None => {
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
    }
}

/// Files written by `gen-synthetic`, relative to its output directory.
pub struct SyntheticLayout {
    pub scene: PathBuf,
    pub cameras: PathBuf,
    pub features_dir: PathBuf,
    pub gt_dir: PathBuf,
    pub scribbles_dir: PathBuf,
}

impl SyntheticLayout {
    pub fn new(root: &Path) -> SyntheticLayout {
        SyntheticLayout {
            scene: root.join("scene.ply"),
            cameras: root.join("cameras.json"),
            features_dir: root.join("features"),
            gt_dir: root.join("gt"),
            scribbles_dir: root.join("scribbles"),
        }
    }
}

fn cmd_gen_synthetic(a: &GenSyntheticArgs) -> Result<()> {
    let spec = SyntheticSpec {
        seed: a.seed,
        noise: a.noise,
        n_views: a.views,
        n_per_cluster: a.per_cluster,
        ..SyntheticSpec::default()
    };
    if a.reference_view >= a.views {
        return Err(Error::validation(format!(
            "reference view {} out of range for {} views",
            a.reference_view, a.views
        )));
    }
    let s = make_two_cluster_scene(&spec)?;
    let layout = SyntheticLayout::new(&a.out_dir);
    for d in [&layout.features_dir, &layout.gt_dir, &layout.scribbles_dir] {
        create_dir(d)?;
    }
    save_scene(&s.scene, &layout.scene)?;
    save_cameras(&s.scene.cameras, &layout.cameras)?;
    for ((cam, map), gt) in s.scene.cameras.iter().zip(&s.feature_maps).zip(&s.gt_masks) {
        write_feature_map(map, &layout.features_dir.join(format!("{}.splf", cam.id)))?;
        write_mask(gt, &layout.gt_dir.join(format!("{}.png", cam.id)))?;
    }
    let ref_id = &s.scene.cameras[a.reference_view].id;
    write_mask(&s.scribble(a.reference_view, 0, 3), &layout.scribbles_dir.join(format!("{ref_id}.png")))?;
    write_json(
        &a.out_dir.join("synthetic.json"),
        &json!({ "spec": spec, "labels": s.labels, "reference_view": ref_id }),
    )
}
