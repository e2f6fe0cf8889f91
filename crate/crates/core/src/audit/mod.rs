//! Skin-tone audit: face region, skin mask, mean Lab, ITA, Fitzpatrick and
//! Monk classification, and the observed distribution over a run.

pub mod batch;
pub mod color;
pub mod face;
pub mod ita;
pub mod monk;

use std::path::PathBuf;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheme::{AttributeScheme, FitzpatrickType, SchemeKind};
use crate::target::{Distribution, TargetError};

pub use batch::{audit_image, audit_run, AuditOptions, AuditReport, ImageAudit, ObservedDistributions};
pub use color::{srgb_to_lab, Lab};
pub use face::{center_crop, face_region, BBox, ExternalDetector, FaceDetector, FaceOrigin, FaceRegion};
pub use ita::{ita_degrees, ita_to_fitzpatrick};
pub use monk::lab_to_monk;

#[derive(Debug, Error)]
pub enum AuditError {
    #[error("cannot decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image {0} has zero size")]
    EmptyImage(PathBuf),
    #[error("face box {0:?} lies outside the image")]
    BoxOutOfBounds(BBox),
    #[error("face detector failed: {0}")]
    Detector(String),
    #[error("no usable readings: all {discarded} images were discarded")]
    NoUsableReadings { discarded: usize },
    #[error("cannot estimate a distribution over scheme {0}")]
    UnsupportedScheme(String),
    #[error("manifest has no records; run `generate` first")]
    EmptyManifest,
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Artifact(#[from] crate::artifact::ArtifactError),
}

/// Skin-mask bounds: pixels outside are treated as hair, eyes or background.
pub const MASK_MIN_L: f64 = 10.0;
pub const MASK_MAX_L: f64 = 95.0;
pub const MASK_MAX_CHROMA: f64 = 60.0;
/// Fewer masked pixels than this makes a reading degenerate.
pub const MIN_SKIN_PIXELS: usize = 64;

pub fn is_skin(lab: &Lab) -> bool {
    lab.l >= MASK_MIN_L && lab.l <= MASK_MAX_L && lab.chroma() <= MASK_MAX_CHROMA
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReadingStatus {
    Ok,
    NoFace,
    Degenerate,
}

/// Skin-tone measurement for one image. Only `Ok` readings carry a type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkinToneReading {
    pub status: ReadingStatus,
    pub lab: Option<Lab>,
    pub ita_degrees: Option<f64>,
    pub fitzpatrick: Option<FitzpatrickType>,
    pub monk: Option<u8>,
    pub pixel_count: usize,
    pub region: Option<FaceRegion>,
}

impl SkinToneReading {
    pub fn no_face() -> Self {
        Self {
            status: ReadingStatus::NoFace,
            lab: None,
            ita_degrees: None,
            fitzpatrick: None,
            monk: None,
            pixel_count: 0,
            region: None,
        }
    }

    /// Classifies an aggregated Lab value measured over `pixel_count` skin pixels.
    pub fn from_mean_lab(lab: Lab, pixel_count: usize, region: Option<FaceRegion>) -> Self {
        let ita = if pixel_count >= MIN_SKIN_PIXELS {
            ita_degrees(lab.l, lab.b)
        } else {
            None
        };
        match ita {
            Some(deg) => Self {
                status: ReadingStatus::Ok,
                lab: Some(lab),
                ita_degrees: Some(deg),
                fitzpatrick: Some(ita_to_fitzpatrick(deg)),
                monk: Some(lab_to_monk(&lab)),
                pixel_count,
                region,
            },
            None => Self {
                status: ReadingStatus::Degenerate,
                lab: Some(lab),
                ita_degrees: None,
                fitzpatrick: None,
                monk: None,
                pixel_count,
                region,
            },
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ReadingStatus::Ok
    }
}

/// Mean Lab over the skin-masked pixels of `region`, and how many pixels passed.
pub fn masked_mean_lab(image: &RgbImage, region: &BBox) -> (Option<Lab>, usize) {
    let (mut sl, mut sa, mut sb, mut n) = (0.0, 0.0, 0.0, 0usize);
    for y in region.y..region.y + region.h {
        for x in region.x..region.x + region.w {
            let lab = srgb_to_lab(image.get_pixel(x, y).0);
            if is_skin(&lab) {
                sl += lab.l;
                sa += lab.a;
                sb += lab.b;
                n += 1;
            }
        }
    }
    if n == 0 {
        return (None, 0);
    }
    let k = n as f64;
    (Some(Lab::new(sl / k, sa / k, sb / k)), n)
}

pub fn classify_region(image: &RgbImage, region: FaceRegion) -> SkinToneReading {
    match masked_mean_lab(image, &region.bbox) {
        (Some(lab), n) => SkinToneReading::from_mean_lab(lab, n, Some(region)),
        (None, _) => SkinToneReading {
            status: ReadingStatus::Degenerate,
            region: Some(region),
            ..SkinToneReading::no_face()
        },
    }
}

/// Images excluded from the observed distribution, by cause.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardTally {
    pub no_face: usize,
    pub degenerate: usize,
    pub failed_generation: usize,
}

impl DiscardTally {
    pub fn total(&self) -> usize {
        self.no_face + self.degenerate + self.failed_generation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Estimate {
    pub distribution: Distribution,
    pub n_ok: usize,
    pub discards: DiscardTally,
}

fn category_index(reading: &SkinToneReading, kind: SchemeKind) -> Option<usize> {
    match kind {
        SchemeKind::SkinToneFitzpatrick => reading.fitzpatrick.map(FitzpatrickType::index),
        SchemeKind::SkinToneBins3 => reading.fitzpatrick.map(FitzpatrickType::bin3),
        SchemeKind::SkinToneMonk => reading.monk.map(|m| usize::from(m) - 1),
        _ => None,
    }
}

/// Observed frequencies over `Ok` readings; others are tallied as discards.
pub fn estimate_distribution(
    readings: &[SkinToneReading],
    scheme: &AttributeScheme,
) -> Result<Estimate, AuditError> {
    let expected_len = match scheme.kind() {
        SchemeKind::SkinToneFitzpatrick => 6,
        SchemeKind::SkinToneBins3 => 3,
        SchemeKind::SkinToneMonk => 10,
        _ => 0,
    };
    if expected_len == 0 || scheme.len() != expected_len {
        return Err(AuditError::UnsupportedScheme(scheme.to_string()));
    }
    let mut counts = vec![0usize; scheme.len()];
    let mut discards = DiscardTally::default();
    for r in readings {
        match r.status {
            ReadingStatus::Ok => {
                if let Some(i) = category_index(r, scheme.kind()) {
                    counts[i] += 1;
                } else {
                    discards.degenerate += 1;
                }
            }
            ReadingStatus::NoFace => discards.no_face += 1,
            ReadingStatus::Degenerate => discards.degenerate += 1,
        }
    }
    let n_ok: usize = counts.iter().sum();
    if n_ok == 0 {
        return Err(AuditError::NoUsableReadings {
            discarded: discards.total(),
        });
    }
    Ok(Estimate {
        distribution: Distribution::from_counts(scheme.clone(), &counts)?,
        n_ok,
        discards,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::target::aggregate_to_bins;

    fn ok_reading(t: FitzpatrickType) -> SkinToneReading {
        SkinToneReading {
            status: ReadingStatus::Ok,
            lab: None,
            ita_degrees: None,
            fitzpatrick: Some(t),
            monk: Some(1),
            pixel_count: 100,
            region: None,
        }
    }

    #[test]
    fn counting() {
        use FitzpatrickType::*;
        let readings = vec![ok_reading(I), ok_reading(I), ok_reading(II), ok_reading(VI)];
        let est = estimate_distribution(&readings, &AttributeScheme::fitzpatrick()).unwrap();
        assert_eq!(est.distribution.probs(), &[0.5, 0.25, 0.0, 0.0, 0.0, 0.25]);
        assert_eq!(est.n_ok, 4);

        let bins = estimate_distribution(&readings, &AttributeScheme::bins3()).unwrap();
        assert_eq!(
            bins.distribution.probs(),
            aggregate_to_bins(&est.distribution).unwrap().probs()
        );
    }

    #[test]
    fn discards_are_tallied() {
        let mut readings = vec![ok_reading(FitzpatrickType::III)];
        readings.push(SkinToneReading::no_face());
        readings.push(SkinToneReading::from_mean_lab(Lab::new(50.0, 0.0, 0.0), 500, None));
        let est = estimate_distribution(&readings, &AttributeScheme::fitzpatrick()).unwrap();
        assert_eq!(est.discards.no_face, 1);
        assert_eq!(est.discards.degenerate, 1);
        assert_eq!(est.n_ok, 1);
    }

    #[test]
    fn all_discarded_is_an_error() {
        let readings = vec![SkinToneReading::no_face(), SkinToneReading::no_face()];
        assert!(matches!(
            estimate_distribution(&readings, &AttributeScheme::fitzpatrick()),
            Err(AuditError::NoUsableReadings { discarded: 2 })
        ));
    }

    #[test]
    fn too_few_pixels_is_degenerate() {
        let r = SkinToneReading::from_mean_lab(Lab::new(70.0, 10.0, 15.0), MIN_SKIN_PIXELS - 1, None);
        assert_eq!(r.status, ReadingStatus::Degenerate);
        let r = SkinToneReading::from_mean_lab(Lab::new(70.0, 10.0, 15.0), MIN_SKIN_PIXELS, None);
        assert_eq!(r.fitzpatrick, Some(FitzpatrickType::II));
    }

    #[test]
    fn mask_drops_dark_bright_and_saturated() {
        let mut img = RgbImage::from_pixel(20, 20, image::Rgb([204, 158, 118]));
        for x in 0..20 {
            img.put_pixel(x, 0, image::Rgb([5, 5, 5]));
            img.put_pixel(x, 1, image::Rgb([255, 255, 255]));
            img.put_pixel(x, 2, image::Rgb([255, 0, 0]));
        }
        let (lab, n) = masked_mean_lab(&img, &BBox { x: 0, y: 0, w: 20, h: 20 });
        assert_eq!(n, 20 * 17);
        let expect = srgb_to_lab([204, 158, 118]);
        let lab = lab.unwrap();
        assert!((lab.l - expect.l).abs() < 1e-9 && (lab.b - expect.b).abs() < 1e-9);
    }

    #[test]
    fn unsupported_scheme() {
        let s = AttributeScheme::demographic("g", ["a", "b"]).unwrap();
        assert!(matches!(
            estimate_distribution(&[ok_reading(FitzpatrickType::I)], &s),
            Err(AuditError::UnsupportedScheme(_))
        ));
    }
}
