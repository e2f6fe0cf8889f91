//! Monk Skin Tone (MST 1–10) by nearest reference swatch in Lab.

use std::sync::OnceLock;

use super::color::{srgb_to_lab, Lab};

/// Published MST swatches, MST-1 (lightest) to MST-10.
pub const MONK_SRGB: [[u8; 3]; 10] = [
    [0xf6, 0xed, 0xe4],
    [0xf3, 0xe7, 0xdb],
    [0xf7, 0xea, 0xd0],
    [0xea, 0xda, 0xba],
    [0xd7, 0xbd, 0x96],
    [0xa0, 0x7e, 0x56],
    [0x82, 0x5c, 0x43],
    [0x60, 0x41, 0x34],
    [0x3a, 0x31, 0x2a],
    [0x29, 0x24, 0x20],
];

pub fn monk_reference_lab() -> &'static [Lab; 10] {
    static REF: OnceLock<[Lab; 10]> = OnceLock::new();
    REF.get_or_init(|| MONK_SRGB.map(srgb_to_lab))
}

/// MST tone (1–10) whose swatch is nearest in Euclidean Lab distance.
/// Equidistant swatches resolve to the lighter tone.
pub fn lab_to_monk(lab: &Lab) -> u8 {
    const TIE: f64 = 1e-9;
    let refs = monk_reference_lab();
    let mut best = 0;
    let mut best_d = lab.distance_sq(&refs[0]);
    for (i, r) in refs.iter().enumerate().skip(1) {
        let d = lab.distance_sq(r);
        if d < best_d - TIE * best_d.max(1.0) {
            best = i;
            best_d = d;
        }
    }
    best as u8 + 1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn swatches_map_to_themselves() {
        for (i, lab) in monk_reference_lab().iter().enumerate() {
            assert_eq!(lab_to_monk(lab) as usize, i + 1);
        }
    }

    #[test]
    fn midpoint_goes_lighter() {
        let r = monk_reference_lab();
        for i in 0..9 {
            let (a, b) = (r[i], r[i + 1]);
            let mid = Lab::new((a.l + b.l) / 2.0, (a.a + b.a) / 2.0, (a.b + b.b) / 2.0);
            let got = lab_to_monk(&mid) as usize;
            // Some other swatch may be nearer than either endpoint; when the
            // endpoints win, the lighter one must.
            if got == i + 1 || got == i + 2 {
                assert_eq!(got, i + 1, "midpoint of MST-{} and MST-{}", i + 1, i + 2);
            }
        }
        let mid45 = Lab::new(
            (r[3].l + r[4].l) / 2.0,
            (r[3].a + r[4].a) / 2.0,
            (r[3].b + r[4].b) / 2.0,
        );
        assert_eq!(lab_to_monk(&mid45), 4);
    }
}
