//! Visualization helpers shared by `render` and the service.

use splatlift::features::pca::Pca;
use splatlift::features::{FeatureMap, GaussianFeatures};
use splatlift::Result;

const PCA_SAMPLES: usize = 200_000;

/// First three principal components of the per-Gaussian features, each
/// min-max scaled to `[0, 1]`, as row-major RGB. Missing components stay 0.
pub fn pca_colors(features: &GaussianFeatures) -> Result<Vec<f32>> {
    let n = features.rows;
    let mut colors = vec![0.0f32; n * 3];
    if n == 0 {
        return Ok(colors);
    }
    let k = features.channels.min(3);
    let pca = Pca::fit(&features.values, features.channels, k, PCA_SAMPLES, 0)?;
    let proj = pca.project(&features.values);
    for comp in 0..k {
        let column = (0..n).map(|i| proj[i * k + comp]);
        let (lo, hi) = column.fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        let span = hi - lo;
        for i in 0..n {
            colors[i * 3 + comp] = if span > 0.0 { (proj[i * k + comp] - lo) / span } else { 0.5 };
        }
    }
    Ok(colors)
}

/// Single-channel map divided by its maximum, for display.
pub fn scaled_to_unit(map: &FeatureMap) -> FeatureMap {
    let max = map.data.iter().cloned().fold(0.0f32, f32::max);
    let mut out = map.clone();
    if max > 0.0 {
        out.data.iter_mut().for_each(|v| *v = (*v / max).max(0.0));
    }
    out
}

/// Parses `a,b,c` into numbers.
pub fn parse_list<T: std::str::FromStr>(text: &str, what: &str) -> Result<Vec<T>> {
    text.split(',')
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<T>()
                .map_err(|_| splatlift::Error::validation(format!("{what}: cannot parse '{s}'")))
        })
        .collect()
}
