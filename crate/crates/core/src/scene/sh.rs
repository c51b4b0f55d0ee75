//! Real spherical harmonics up to degree 3, using the coefficient ordering and
//! constants of the reference Gaussian Splatting renderer.

use nalgebra::Vector3;

const C0: f64 = 0.282_094_791_773_878_14;
const C1: f64 = 0.488_602_511_902_919_9;
const C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Number of coefficients for a given degree.
pub fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Degree whose coefficient count is `count`, if any.
pub fn degree_for_count(count: usize) -> Option<usize> {
    (0..=3).find(|&d| coeff_count(d) == count)
}

/// Evaluates RGB color from SH coefficients along the unit direction `dir`.
///
/// `degree` is clamped to what `coeffs` holds. The `+0.5` offset and the
/// clamp at zero follow the reference renderer.
pub fn eval_color(coeffs: &[[f64; 3]], degree: usize, dir: &Vector3<f64>) -> [f64; 3] {
    let available = degree_for_count(coeffs.len()).unwrap_or(0);
    let degree = degree.min(available);
    let (x, y, z) = (dir.x, dir.y, dir.z);

    let mut basis = [0.0f64; 16];
    basis[0] = C0;
    if degree >= 1 {
        basis[1] = -C1 * y;
        basis[2] = C1 * z;
        basis[3] = -C1 * x;
    }
    if degree >= 2 {
        let (xx, yy, zz) = (x * x, y * y, z * z);
        let (xy, yz, xz) = (x * y, y * z, x * z);
        basis[4] = C2[0] * xy;
        basis[5] = C2[1] * yz;
        basis[6] = C2[2] * (2.0 * zz - xx - yy);
        basis[7] = C2[3] * xz;
        basis[8] = C2[4] * (xx - yy);
        if degree >= 3 {
            basis[9] = C3[0] * y * (3.0 * xx - yy);
            basis[10] = C3[1] * xy * z;
            basis[11] = C3[2] * y * (4.0 * zz - xx - yy);
            basis[12] = C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
            basis[13] = C3[4] * x * (4.0 * zz - xx - yy);
            basis[14] = C3[5] * z * (xx - yy);
            basis[15] = C3[6] * x * (xx - 3.0 * yy);
        }
    }

    let mut rgb = [0.0; 3];
    for (k, b) in basis.iter().enumerate().take(coeff_count(degree)) {
        for ch in 0..3 {
            rgb[ch] += b * coeffs[k][ch];
        }
    }
    rgb.map(|v| (v + 0.5).max(0.0))
}

/// DC coefficient that reproduces `rgb` for every view direction.
pub fn dc_from_rgb(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|v| (v - 0.5) / C0)
}
