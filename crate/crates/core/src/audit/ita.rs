//! Individual Typology Angle and its Fitzpatrick banding.

use crate::scheme::FitzpatrickType;

/// Lower (exclusive) ITA bound of types I–V, in degrees. Anything at or below
/// the last bound is type VI.
pub const ITA_BANDS: [(FitzpatrickType, f64); 5] = [
    (FitzpatrickType::I, 55.0),
    (FitzpatrickType::II, 41.0),
    (FitzpatrickType::III, 28.0),
    (FitzpatrickType::IV, 10.0),
    (FitzpatrickType::V, -30.0),
];

/// `atan((L − 50) / b)` in degrees.
///
/// With `b = 0` the angle is +90° above mid-lightness and −90° below it;
/// `None` when both `L = 50` and `b = 0`.
pub fn ita_degrees(l: f64, b: f64) -> Option<f64> {
    let dl = l - 50.0;
    if b == 0.0 {
        return match dl.partial_cmp(&0.0)? {
            std::cmp::Ordering::Greater => Some(90.0),
            std::cmp::Ordering::Less => Some(-90.0),
            std::cmp::Ordering::Equal => None,
        };
    }
    let deg = (dl / b).atan().to_degrees();
    deg.is_finite().then_some(deg)
}

pub fn ita_to_fitzpatrick(ita: f64) -> FitzpatrickType {
    ITA_BANDS
        .iter()
        .find(|(_, lower)| ita > *lower)
        .map(|(t, _)| *t)
        .unwrap_or(FitzpatrickType::VI)
}

#[cfg(test)]
mod tests {
    use super::*;
    use FitzpatrickType::*;

    #[test]
    fn hand_trigonometry() {
        assert!((ita_degrees(70.0, 15.0).unwrap() - 53.130_102).abs() < 0.01);
        assert_eq!(ita_degrees(50.0, 10.0).unwrap(), 0.0);
        assert!((ita_degrees(80.0, 12.0).unwrap() - 68.198_591).abs() < 0.01);
    }

    #[test]
    fn zero_b() {
        assert_eq!(ita_degrees(60.0, 0.0), Some(90.0));
        assert_eq!(ita_degrees(40.0, 0.0), Some(-90.0));
        assert_eq!(ita_degrees(50.0, 0.0), None);
    }

    #[test]
    fn band_table() {
        assert_eq!(ita_to_fitzpatrick(60.0), I);
        assert_eq!(ita_to_fitzpatrick(0.0), V);
        assert_eq!(ita_to_fitzpatrick(-40.0), VI);
        let edges = [(55.0, I, II), (41.0, II, III), (28.0, III, IV), (10.0, IV, V), (-30.0, V, VI)];
        for (edge, above, at) in edges {
            assert_eq!(ita_to_fitzpatrick(edge + 0.001), above);
            assert_eq!(ita_to_fitzpatrick(edge), at);
            assert_eq!(ita_to_fitzpatrick(edge - 0.001), at);
        }
    }

    #[test]
    fn ita_increases_with_lightness() {
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=100 {
            let v = ita_degrees(i as f64, 12.0).unwrap();
            assert!(v > prev);
            prev = v;
        }
    }
}
