//! Audits every image of a generation run.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{classify_region, estimate_distribution, face_region, AuditError, DiscardTally, FaceDetector, SkinToneReading};
use crate::artifact::{read_upstream, timestamp_now, write_json, AUDIT_FILE, MANIFEST_FILE};
use crate::generation::{sidecar_for, GenerationRecord, RecordStatus, RunManifest};
use crate::prompts::Condition;
use crate::scheme::AttributeScheme;
use crate::target::Distribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageAudit {
    pub image: String,
    pub category: String,
    pub seed: u64,
    pub generation: RecordStatus,
    /// Absent for images that failed to generate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reading: Option<SkinToneReading>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedDistributions {
    pub fitzpatrick: Distribution,
    pub bins3: Distribution,
    pub monk: Distribution,
}

impl ObservedDistributions {
    pub fn for_scheme(&self, scheme: &AttributeScheme) -> Option<&Distribution> {
        [&self.fitzpatrick, &self.bins3, &self.monk]
            .into_iter()
            .find(|d| d.scheme().same_categories(scheme))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub manifest: String,
    pub condition: Condition,
    pub base_prompt: String,
    pub n_images: usize,
    pub n_ok: usize,
    pub discards: DiscardTally,
    pub observed: ObservedDistributions,
    pub images: Vec<ImageAudit>,
    pub created_at: String,
}

#[derive(Clone, Copy, Default)]
pub struct AuditOptions<'a> {
    pub detector: Option<&'a dyn FaceDetector>,
    /// Ignore face boxes recorded by the backend and use the centre crop.
    pub ignore_sidecar_bbox: bool,
}

/// Reads and classifies one image.
pub fn audit_image(path: &Path, sidecar: Option<super::BBox>, opts: &AuditOptions<'_>) -> Result<SkinToneReading, AuditError> {
    let img = image::open(path)
        .map_err(|source| AuditError::Decode {
            path: path.to_path_buf(),
            source,
        })?
        .to_rgb8();
    let sidecar = if opts.ignore_sidecar_bbox { None } else { sidecar };
    match face_region(path, img.width(), img.height(), opts.detector, sidecar)? {
        Some(region) => Ok(classify_region(&img, region)),
        None => Ok(SkinToneReading::no_face()),
    }
}

fn audit_record(run_dir: &Path, rec: &GenerationRecord, opts: &AuditOptions<'_>) -> Result<ImageAudit, AuditError> {
    let reading = if rec.is_ok() {
        let path = run_dir.join(&rec.image);
        let reading = audit_image(&path, rec.face_bbox, opts)?;
        Some(reading)
    } else {
        None
    };
    let audit = ImageAudit {
        image: rec.image.clone(),
        category: rec.category.clone(),
        seed: rec.seed,
        generation: rec.status,
        reading,
    };
    if audit.reading.is_some() {
        write_json(&sidecar_for(&run_dir.join(&rec.image), "audit.json"), &audit)?;
    }
    Ok(audit)
}

/// Audits the run in `run_dir`, writing `<image>.audit.json` per image and
/// `audit.json` with the observed distributions under all three skin-tone
/// schemes.
pub fn audit_run(run_dir: &Path, opts: &AuditOptions<'_>) -> Result<AuditReport, AuditError> {
    let manifest: RunManifest = read_upstream(&run_dir.join(MANIFEST_FILE), "generate")?;
    if manifest.records.is_empty() {
        return Err(AuditError::EmptyManifest);
    }
    let images = manifest
        .records
        .par_iter()
        .map(|rec| audit_record(run_dir, rec, opts))
        .collect::<Result<Vec<_>, _>>()?;
    let readings: Vec<SkinToneReading> = images.iter().filter_map(|a| a.reading.clone()).collect();
    let failed = images.iter().filter(|a| a.generation == RecordStatus::Failed).count();
    let with_failed = |mut d: DiscardTally| {
        d.failed_generation = failed;
        d
    };
    let none_usable = |e: AuditError| match e {
        AuditError::NoUsableReadings { discarded } => AuditError::NoUsableReadings {
            discarded: discarded + failed,
        },
        other => other,
    };
    let fitz = estimate_distribution(&readings, &AttributeScheme::fitzpatrick()).map_err(none_usable)?;
    let bins = estimate_distribution(&readings, &AttributeScheme::bins3())?;
    let monk = estimate_distribution(&readings, &AttributeScheme::monk())?;
    let report = AuditReport {
        manifest: MANIFEST_FILE.into(),
        condition: manifest.condition,
        base_prompt: manifest.base_prompt.clone(),
        n_images: images.len(),
        n_ok: fitz.n_ok,
        discards: with_failed(fitz.discards),
        observed: ObservedDistributions {
            fitzpatrick: fitz.distribution,
            bins3: bins.distribution,
            monk: monk.distribution,
        },
        images,
        created_at: timestamp_now(),
    };
    write_json(&run_dir.join(AUDIT_FILE), &report)?;
    Ok(report)
}
