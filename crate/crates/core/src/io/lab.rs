//! sRGB (D65) to CIE Lab conversion.

/// D65 reference white, derived from the row sums of the sRGB→XYZ matrix.
const WHITE: [f64; 3] = [0.950_470, 1.0, 1.088_830];

const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

const EPSILON: f64 = 216.0 / 24389.0;
const KAPPA: f64 = 24389.0 / 27.0;

#[inline]
fn srgb_to_linear(channel: u8) -> f64 {
    let c = f64::from(channel) / 255.0;
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

#[inline]
fn lab_f(t: f64) -> f64 {
    if t > EPSILON {
        t.cbrt()
    } else {
        (KAPPA * t + 16.0) / 116.0
    }
}

/// Converts one 8-bit sRGB triplet to Lab. L is clamped to [0, 100].
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let lin = rgb.map(srgb_to_linear);
    let mut xyz = [0.0; 3];
    for (row, out) in SRGB_TO_XYZ.iter().zip(xyz.iter_mut()) {
        *out = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
    }
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    let l = (116.0 * fy - 16.0).clamp(0.0, 100.0);
    [l, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}
