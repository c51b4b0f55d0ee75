//! 8-bit grayscale masks (PNG or binary PGM) as single-channel feature maps.

use std::path::Path;

use image::{DynamicImage, GrayImage};
pub use image::ImageFormat;

use super::FeatureMap;
use crate::error::{Error, Result};

fn format_for(path: &Path) -> Result<ImageFormat> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "png" => Ok(ImageFormat::Png),
        Some(e) if e == "pgm" || e == "pnm" => Ok(ImageFormat::Pnm),
        _ => Err(Error::format(
            path.display().to_string(),
            "mask files must end in .png or .pgm",
        )),
    }
}

/// Decodes an 8-bit grayscale image; values are scaled to `[0, 1]`.
pub fn decode_mask(bytes: &[u8], format: ImageFormat) -> Result<FeatureMap> {
    let img = image::load_from_memory_with_format(bytes, format)
        .map_err(|e| Error::format("mask", e.to_string()))?;
    let gray = match img {
        DynamicImage::ImageLuma8(g) => g,
        other => {
            return Err(Error::format(
                "mask",
                format!("expected 8-bit grayscale, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = gray.dimensions();
    let data = gray.into_raw().into_iter().map(|v| v as f32 / 255.0).collect();
    FeatureMap::from_vec(h as usize, w as usize, 1, data)
}

pub fn read_mask(path: &Path) -> Result<FeatureMap> {
    let format = format_for(path)?;
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes, format).map_err(|e| match e {
        Error::Format { message, .. } => Error::format(path.display().to_string(), message),
        other => other,
    })
}

/// Quantizes channel 0 of `map` (clamped to `[0, 1]`) to 8 bits.
pub fn to_gray(map: &FeatureMap) -> GrayImage {
    let data = (0..map.pixel_count())
        .map(|p| (map.at(p)[0].clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    GrayImage::from_raw(map.width as u32, map.height as u32, data).expect("buffer sized to image")
}

pub fn encode_mask(map: &FeatureMap, format: ImageFormat) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    to_gray(map)
        .write_to(&mut out, format)
        .map_err(|e| Error::format("mask", e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_mask(map: &FeatureMap, path: &Path) -> Result<()> {
    let bytes = encode_mask(map, format_for(path)?)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Encodes a three-channel map (clamped to `[0, 1]`) as an 8-bit RGB PNG.
pub fn encode_rgb_png(map: &FeatureMap) -> Result<Vec<u8>> {
    if map.channels != 3 {
        return Err(Error::validation(format!(
            "RGB images need 3 channels, got {}",
            map.channels
        )));
    }
    let data = map.data.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect();
    let img = image::RgbImage::from_raw(map.width as u32, map.height as u32, data).expect("buffer sized to image");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::format("rgb image", e.to_string()))?;
    Ok(out.into_inner())
}

pub fn write_rgb_png(map: &FeatureMap, path: &Path) -> Result<()> {
    let bytes = encode_rgb_png(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Binary mask `value ≥ threshold` as a 0/1 map.
pub fn binarize(map: &FeatureMap, threshold: f64) -> FeatureMap {
    let mut out = FeatureMap::zeros(map.height, map.width, 1);
    out.camera_id = map.camera_id.clone();
    for p in 0..map.pixel_count() {
        out.data[p] = if map.at(p)[0] as f64 >= threshold { 1.0 } else { 0.0 };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_white_png_is_ones() {
        let img = GrayImage::from_pixel(3, 2, image::Luma([255]));
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        let m = decode_mask(buf.get_ref(), ImageFormat::Png).unwrap();
        assert_eq!((m.height, m.width, m.channels), (2, 3, 1));
        assert!(m.data.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn binary_round_trip_and_cross_format() {
        let dir = tempfile::tempdir().unwrap();
        let data: Vec<f32> = (0..20).map(|i| if i % 3 == 0 { 1.0 } else { 0.0 }).collect();
        let m = FeatureMap::from_vec(4, 5, 1, data).unwrap();
        let png = dir.path().join("m.png");
        let pgm = dir.path().join("m.pgm");
        write_mask(&m, &png).unwrap();
        write_mask(&m, &pgm).unwrap();
        let a = read_mask(&png).unwrap();
        let b = read_mask(&pgm).unwrap();
        assert_eq!(a.data, m.data);
        assert_eq!(a, b);
    }

    #[test]
    fn rgb_png_is_rejected() {
        let img = image::RgbImage::from_pixel(2, 2, image::Rgb([1, 2, 3]));
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).unwrap();
        assert!(matches!(decode_mask(buf.get_ref(), ImageFormat::Png), Err(Error::Format { .. })));
    }
}
