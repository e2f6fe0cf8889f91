//! Face-region providers: external detector process, sidecar box, center crop.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use super::AuditError;

/// Pixel rectangle `(x, y)` top-left, `w × h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl BBox {
    pub fn area(&self) -> u64 {
        u64::from(self.w) * u64::from(self.h)
    }

    /// Intersection with a `width × height` image; `None` if empty.
    pub fn clamp_to(&self, width: u32, height: u32) -> Option<BBox> {
        let x0 = self.x.min(width);
        let y0 = self.y.min(height);
        let x1 = self.x.saturating_add(self.w).min(width);
        let y1 = self.y.saturating_add(self.h).min(height);
        let b = BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        };
        (b.area() > 0).then_some(b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaceOrigin {
    ExternalDetector,
    SidecarBbox,
    CenterCrop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaceRegion {
    pub bbox: BBox,
    pub origin: FaceOrigin,
}

/// Fraction of width and height covered by the fallback crop.
pub const CENTER_CROP_WIDTH: f64 = 0.6;
pub const CENTER_CROP_HEIGHT: f64 = 0.7;

pub fn center_crop(width: u32, height: u32) -> BBox {
    let w = ((f64::from(width) * CENTER_CROP_WIDTH).round() as u32).max(1).min(width);
    let h = ((f64::from(height) * CENTER_CROP_HEIGHT).round() as u32).max(1).min(height);
    BBox {
        x: (width - w) / 2,
        y: (height - h) / 2,
        w,
        h,
    }
}

/// A face detector. Returns every face box found; an empty list means no face.
pub trait FaceDetector: Send + Sync {
    fn detect(&self, image_path: &Path, width: u32, height: u32) -> Result<Vec<BBox>, AuditError>;
}

/// Runs `program [args..] <image>` and reads a JSON array of
/// `{"x","y","w","h"}` boxes from stdout.
#[derive(Debug, Clone)]
pub struct ExternalDetector {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ExternalDetector {
    pub fn new(program: impl Into<PathBuf>, args: Vec<String>) -> Self {
        Self {
            program: program.into(),
            args,
        }
    }
}

impl FaceDetector for ExternalDetector {
    fn detect(&self, image_path: &Path, _width: u32, _height: u32) -> Result<Vec<BBox>, AuditError> {
        let out = Command::new(&self.program)
            .args(&self.args)
            .arg(image_path)
            .output()
            .map_err(|e| AuditError::Detector(format!("{}: {e}", self.program.display())))?;
        if !out.status.success() {
            return Err(AuditError::Detector(format!(
                "{} exited with {}: {}",
                self.program.display(),
                out.status,
                String::from_utf8_lossy(&out.stderr).trim()
            )));
        }
        serde_json::from_slice(&out.stdout)
            .map_err(|e| AuditError::Detector(format!("bad detector output: {e}")))
    }
}

/// Picks the region to measure. Precedence: detector, then sidecar box, then
/// center crop. `Ok(None)` when the detector reports no face.
pub fn face_region(
    image_path: &Path,
    width: u32,
    height: u32,
    detector: Option<&dyn FaceDetector>,
    sidecar: Option<BBox>,
) -> Result<Option<FaceRegion>, AuditError> {
    if width == 0 || height == 0 {
        return Err(AuditError::EmptyImage(image_path.to_path_buf()));
    }
    if let Some(det) = detector {
        let faces = det.detect(image_path, width, height)?;
        let best = faces
            .iter()
            .filter_map(|b| b.clamp_to(width, height))
            .max_by_key(BBox::area);
        return Ok(best.map(|bbox| FaceRegion {
            bbox,
            origin: FaceOrigin::ExternalDetector,
        }));
    }
    if let Some(b) = sidecar {
        let bbox = b
            .clamp_to(width, height)
            .ok_or(AuditError::BoxOutOfBounds(b))?;
        return Ok(Some(FaceRegion {
            bbox,
            origin: FaceOrigin::SidecarBbox,
        }));
    }
    Ok(Some(FaceRegion {
        bbox: center_crop(width, height),
        origin: FaceOrigin::CenterCrop,
    }))
}
