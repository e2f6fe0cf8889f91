//! Executes a generation plan against a text-to-image backend, writing PNGs,
//! per-image metadata sidecars and a run manifest.

mod http;
mod synthetic;

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::artifact::{self, timestamp_now, write_bytes, write_json, ArtifactError, IMAGES_DIR, MANIFEST_FILE};
use crate::audit::BBox;
use crate::prompts::{Condition, GenerationPlan, PromptError};

pub use http::{A1111Backend, OpenAiImagesBackend, OpenAiImagesConfig};
pub use synthetic::{
    encode_png, face_box, preset_baseline, render_face, BaselineRule, SyntheticBackend, SyntheticBackendConfig,
    DEFAULT_PALETTE, PRESETS,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendParams {
    pub width: u32,
    pub height: u32,
    pub steps: u32,
    pub guidance: f64,
    pub precision: String,
    /// Backend-specific options forwarded as-is.
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub extra: BTreeMap<String, Value>,
}

impl Default for BackendParams {
    fn default() -> Self {
        Self {
            width: 768,
            height: 512,
            steps: 40,
            guidance: 7.5,
            precision: "fp16".into(),
            extra: BTreeMap::new(),
        }
    }
}

impl BackendParams {
    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.width == 0 || self.height == 0 || self.steps == 0 {
            return Err(GenerationError::InvalidParams(
                "width, height and steps must be positive".into(),
            ));
        }
        if !self.guidance.is_finite() {
            return Err(GenerationError::InvalidParams("guidance must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    /// Connection failure, timeout, rate limit or server error. Retried once.
    #[error("transport error: {0}")]
    Transport(String),
    /// The service refused the request, e.g. a content-policy rejection.
    #[error("request rejected: {0}")]
    Rejected(String),
    #[error("invalid backend response: {0}")]
    InvalidResponse(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedImage {
    pub png: Vec<u8>,
    /// Face box known to the backend, saved to the sidecar.
    pub face_bbox: Option<BBox>,
    /// False when the service ignores seeds, making the recorded seed advisory.
    pub seed_honored: bool,
}

/// Prompt and seed in, one image out.
pub trait ImageBackend: Send + Sync {
    fn id(&self) -> String;
    fn generate(&self, prompt: &str, seed: u64, params: &BackendParams) -> Result<GeneratedImage, BackendError>;
}

/// Generates a single image.
pub fn generate_one(
    backend: &dyn ImageBackend,
    prompt: &str,
    seed: u64,
    params: &BackendParams,
) -> Result<GeneratedImage, BackendError> {
    backend.generate(prompt, seed, params)
}

/// Re-encodes any decodable image as PNG; PNG input passes through.
pub(crate) fn ensure_png(bytes: Vec<u8>) -> Result<Vec<u8>, BackendError> {
    match image::guess_format(&bytes) {
        Ok(image::ImageFormat::Png) => Ok(bytes),
        _ => {
            let img = image::load_from_memory(&bytes)
                .map_err(|e| BackendError::InvalidResponse(format!("undecodable image: {e}")))?;
            let mut out = Vec::new();
            img.write_to(&mut Cursor::new(&mut out), image::ImageFormat::Png)
                .map_err(|e| BackendError::InvalidResponse(e.to_string()))?;
            Ok(out)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    Failed,
}

/// What the image was meant to depict, for the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Intent {
    pub condition: Condition,
    /// Target variant name, absent for baseline runs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    /// Path relative to the run directory.
    pub image: String,
    pub category: String,
    pub prompt: String,
    pub seed: u64,
    pub seed_honored: bool,
    pub backend: String,
    pub params: BackendParams,
    pub intent: Intent,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub face_bbox: Option<BBox>,
    pub attempts: u32,
    pub timestamp: String,
}

impl GenerationRecord {
    pub fn is_ok(&self) -> bool {
        self.status == RecordStatus::Ok
    }

    pub fn sidecar_path(&self, run_dir: &Path) -> PathBuf {
        sidecar_for(&run_dir.join(&self.image), "json")
    }
}

/// `<dir>/<stem>.<ext>` next to `image`.
pub fn sidecar_for(image: &Path, ext: &str) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}.{ext}"))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSummary {
    pub planned: usize,
    pub ok: usize,
    pub failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    /// Plan file this run executed, relative to the run directory.
    pub plan: String,
    pub condition: Condition,
    pub base_prompt: String,
    pub backend: String,
    pub params: BackendParams,
    pub summary: RunSummary,
    pub records: Vec<GenerationRecord>,
    pub created_at: String,
}

impl RunManifest {
    pub fn ok_records(&self) -> impl Iterator<Item = &GenerationRecord> {
        self.records.iter().filter(|r| r.is_ok())
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    InvalidPlan(#[from] PromptError),
    #[error("invalid backend parameters: {0}")]
    InvalidParams(String),
    #[error("invalid synthetic backend configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("cannot start worker pool: {0}")]
    Pool(String),
}

pub const DEFAULT_CONCURRENCY: usize = 4;

#[derive(Debug, Clone)]
pub struct ExecuteOptions {
    /// Maximum requests in flight.
    pub concurrency: usize,
    /// Extra attempts after a transport error.
    pub retries: u32,
    pub plan_file: String,
}

impl Default for ExecuteOptions {
    fn default() -> Self {
        Self {
            concurrency: DEFAULT_CONCURRENCY,
            retries: 1,
            plan_file: artifact::PLAN_FILE.into(),
        }
    }
}

fn slug(label: &str) -> String {
    let s: String = label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    let parts: Vec<&str> = s.split('-').filter(|p| !p.is_empty()).collect();
    if parts.is_empty() {
        "x".into()
    } else {
        parts.join("-")
    }
}

fn image_name(item: usize, category: &str, image: usize) -> String {
    format!("{IMAGES_DIR}/{item:03}-{}-{image:04}.png", slug(category))
}

/// Runs every planned image, writing `images/*.png`, a `.json` sidecar per
/// image and `manifest.json` under `run_dir`. Backend failures become failed
/// records; only I/O and invalid input abort the run.
pub fn execute(
    plan: &GenerationPlan,
    backend: &dyn ImageBackend,
    params: &BackendParams,
    run_dir: &Path,
    opts: &ExecuteOptions,
) -> Result<RunManifest, GenerationError> {
    plan.validate()?;
    params.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.concurrency.max(1))
        .build()
        .map_err(|e| GenerationError::Pool(e.to_string()))?;
    let backend_id = backend.id();
    let target_name = plan.target.as_ref().map(|t| t.setting.name().to_string());
    let slots: Vec<(usize, usize, u64)> = plan.image_slots().collect();

    let results: Vec<Result<GenerationRecord, GenerationError>> = pool.install(|| {
        slots
            .par_iter()
            .map(|&(i, j, seed)| {
                let item = &plan.items[i];
                let rel = image_name(i, &item.category, j);
                let mut attempts = 0;
                let outcome = loop {
                    attempts += 1;
                    match backend.generate(&item.prompt, seed, params) {
                        Err(e) if e.is_retryable() && attempts <= opts.retries => continue,
                        other => break other,
                    }
                };
                let (status, error, face_bbox, seed_honored) = match outcome {
                    Ok(img) => {
                        write_bytes(&run_dir.join(&rel), &img.png)?;
                        (RecordStatus::Ok, None, img.face_bbox, img.seed_honored)
                    }
                    Err(e) => (RecordStatus::Failed, Some(e.to_string()), None, false),
                };
                let record = GenerationRecord {
                    image: rel,
                    category: item.category.clone(),
                    prompt: item.prompt.clone(),
                    seed,
                    seed_honored,
                    backend: backend_id.clone(),
                    params: params.clone(),
                    intent: Intent {
                        condition: plan.condition,
                        target: target_name.clone(),
                        category: item.category.clone(),
                    },
                    status,
                    error,
                    face_bbox,
                    attempts,
                    timestamp: timestamp_now(),
                };
                write_json(&record.sidecar_path(run_dir), &record)?;
                Ok(record)
            })
            .collect()
    });
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let ok = records.iter().filter(|r| r.is_ok()).count();
    let manifest = RunManifest {
        plan: opts.plan_file.clone(),
        condition: plan.condition,
        base_prompt: plan.base_prompt.clone(),
        backend: backend_id,
        params: params.clone(),
        summary: RunSummary {
            planned: records.len(),
            ok,
            failed: records.len() - ok,
        },
        records,
        created_at: timestamp_now(),
    };
    write_json(&run_dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}
