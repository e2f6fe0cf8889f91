//! sRGB (8-bit, D65) to CIELAB.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

/// CIE L*a*b* triple. L in [0, 100]; a and b unbounded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl Lab {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn chroma(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn distance_sq(&self, other: &Lab) -> f64 {
        let (dl, da, db) = (self.l - other.l, self.a - other.a, self.b - other.b);
        dl * dl + da * da + db * db
    }
}

// Linear sRGB -> XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// Reference white = XYZ of linear (1, 1, 1), so sRGB white maps to a = b = 0.
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

fn linear_table() -> &'static [f64; 256] {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut t = [0.0; 256];
        for (i, v) in t.iter_mut().enumerate() {
            *v = srgb_to_linear(i as f64 / 255.0);
        }
        t
    })
}

/// sRGB transfer-function inverse for a channel in [0, 1].
pub fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts an 8-bit sRGB pixel to CIELAB (D65).
pub fn srgb_to_lab(rgb: [u8; 3]) -> Lab {
    let lut = linear_table();
    let lin = [lut[rgb[0] as usize], lut[rgb[1] as usize], lut[rgb[2] as usize]];
    linear_rgb_to_lab(lin)
}

pub fn linear_rgb_to_lab(lin: [f64; 3]) -> Lab {
    let mut f = [0.0; 3];
    for (k, row) in RGB_TO_XYZ.iter().enumerate() {
        let v = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        f[k] = lab_f(v / WHITE[k]);
    }
    Lab {
        l: 116.0 * f[1] - 16.0,
        a: 500.0 * (f[0] - f[1]),
        b: 200.0 * (f[1] - f[2]),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_and_black() {
        let w = srgb_to_lab([255, 255, 255]);
        assert!((w.l - 100.0).abs() < 1e-9);
        assert!(w.a.abs() < 0.01 && w.b.abs() < 0.01);
        let k = srgb_to_lab([0, 0, 0]);
        assert_eq!((k.l, k.a, k.b), (0.0, 0.0, 0.0));
    }

    #[test]
    fn primary_red() {
        // Frozen from an independent float64 script (same standard constants).
        let r = srgb_to_lab([255, 0, 0]);
        assert!((r.l - 53.240_79).abs() < 0.05);
        assert!((r.a - 80.092_47).abs() < 0.05);
        assert!((r.b - 67.203_19).abs() < 0.05);
    }

    #[test]
    fn lightness_is_monotone_in_gray() {
        let mut prev = -1.0;
        for v in 0..=255u8 {
            let l = srgb_to_lab([v, v, v]).l;
            assert!(l > prev);
            prev = l;
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn lab_stays_in_gamut(r in any::<u8>(), g in any::<u8>(), b in any::<u8>()) {
                let lab = srgb_to_lab([r, g, b]);
                prop_assert!((0.0..=100.0 + 1e-9).contains(&lab.l));
                prop_assert!(lab.a.abs() < 130.0 && lab.b.abs() < 130.0);
            }

            #[test]
            fn greys_are_neutral(v in any::<u8>()) {
                let lab = srgb_to_lab([v, v, v]);
                prop_assert!(lab.a.abs() < 1e-6 && lab.b.abs() < 1e-6);
            }
        }
    }
}
