//! Deterministic biased backend: draws a Fitzpatrick type per image and
//! renders a flat-coloured oval "face" in that type's palette colour.

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, BackendParams, GeneratedImage, GenerationError, ImageBackend};
use crate::audit::{ita_degrees, ita_to_fitzpatrick, srgb_to_lab, BBox};
use crate::prompts::PromptVocabulary;
use crate::scheme::{AttributeScheme, FitzpatrickType};
use crate::target::Distribution;

/// Palette colours for Fitzpatrick I–VI, each well inside its ITA band.
pub const DEFAULT_PALETTE: [[u8; 3]; 6] = [
    [241, 214, 190],
    [220, 178, 144],
    [204, 158, 118],
    [184, 136, 94],
    [130, 86, 60],
    [80, 52, 40],
];

const BACKGROUND: [u8; 3] = [250, 250, 250];
const EYES: [u8; 3] = [20, 20, 20];

/// Baseline skews over Fitzpatrick I–VI.
///
/// `high-status`: Type II at 0.69 and V–VI at 0.02 combined.
/// `moderate-status`: Type II at 0.33, V–VI at 0.18.
/// `low-status`: V–VI at 0.48 (VI alone 0.34), I–II at 0.24.
/// `smiling`: I–II at 0.82.
pub const PRESETS: [(&str, [f64; 6]); 4] = [
    ("high-status", [0.12, 0.69, 0.12, 0.05, 0.015, 0.005]),
    ("moderate-status", [0.10, 0.33, 0.22, 0.17, 0.10, 0.08]),
    ("low-status", [0.04, 0.20, 0.13, 0.15, 0.14, 0.34]),
    ("smiling", [0.30, 0.52, 0.10, 0.05, 0.02, 0.01]),
];

pub fn preset_baseline(name: &str) -> Option<Distribution> {
    PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, p)| Distribution::new(AttributeScheme::fitzpatrick(), p.to_vec()).expect("preset sums to one"))
}

/// Baseline used for prompts containing `keyword` (case-insensitive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineRule {
    pub keyword: String,
    pub baseline: [f64; 6],
}

fn default_palette() -> [[u8; 3]; 6] {
    DEFAULT_PALETTE
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticBackendConfig {
    /// Probability that a skin-tone descriptor in the prompt decides the type.
    pub descriptor_fidelity: f64,
    /// Baseline for prompts that match no rule.
    pub default_baseline: [f64; 6],
    #[serde(default)]
    pub conditionals: Vec<BaselineRule>,
    #[serde(default = "default_palette")]
    pub palette: [[u8; 3]; 6],
    #[serde(default)]
    pub vocabulary: PromptVocabulary,
    /// Report the rendered face box so audits can use it as a sidecar box.
    #[serde(default = "default_true")]
    pub emit_face_bbox: bool,
}

impl Default for SyntheticBackendConfig {
    fn default() -> Self {
        Self {
            descriptor_fidelity: 0.9,
            default_baseline: PRESETS[0].1,
            conditionals: vec![
                BaselineRule {
                    keyword: "smiling".into(),
                    baseline: PRESETS[3].1,
                },
            ],
            palette: DEFAULT_PALETTE,
            vocabulary: PromptVocabulary::default(),
            emit_face_bbox: true,
        }
    }
}

impl SyntheticBackendConfig {
    /// A config with one baseline for every prompt.
    pub fn with_baseline(baseline: &Distribution, fidelity: f64) -> Self {
        let mut b = [0.0; 6];
        b.copy_from_slice(baseline.probs());
        Self {
            descriptor_fidelity: fidelity,
            default_baseline: b,
            conditionals: Vec::new(),
            ..Self::default()
        }
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self, GenerationError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GenerationError::InvalidConfig(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        parsed.map_err(|e| GenerationError::InvalidConfig(format!("{}: {e}", path.display())))
    }
}

pub struct SyntheticBackend {
    config: SyntheticBackendConfig,
    default_baseline: Distribution,
    /// Longest keyword first.
    rules: Vec<(String, Distribution)>,
}

fn fitz(probs: &[f64; 6], what: &str) -> Result<Distribution, GenerationError> {
    Distribution::new(AttributeScheme::fitzpatrick(), probs.to_vec())
        .map_err(|e| GenerationError::InvalidConfig(format!("{what}: {e}")))
}

impl SyntheticBackend {
    /// Validates every baseline, the fidelity, and that each palette colour
    /// audits back to its own Fitzpatrick type.
    pub fn new(config: SyntheticBackendConfig) -> Result<Self, GenerationError> {
        let f = config.descriptor_fidelity;
        if !(0.0..=1.0).contains(&f) {
            return Err(GenerationError::InvalidConfig(format!("descriptor_fidelity {f} outside [0, 1]")));
        }
        for (i, rgb) in config.palette.iter().enumerate() {
            let lab = srgb_to_lab(*rgb);
            let got = ita_degrees(lab.l, lab.b).map(ita_to_fitzpatrick);
            let want = FitzpatrickType::from_index(i).expect("six palette entries");
            if got != Some(want) {
                return Err(GenerationError::InvalidConfig(format!(
                    "palette colour {rgb:?} for type {} classifies as {:?}",
                    want.label(),
                    got.map(FitzpatrickType::label)
                )));
            }
        }
        let default_baseline = fitz(&config.default_baseline, "default_baseline")?;
        let mut rules = Vec::with_capacity(config.conditionals.len());
        for r in &config.conditionals {
            if r.keyword.trim().is_empty() {
                return Err(GenerationError::InvalidConfig("empty keyword".into()));
            }
            rules.push((r.keyword.to_lowercase(), fitz(&r.baseline, &r.keyword)?));
        }
        rules.sort_by(|a, b| b.0.len().cmp(&a.0.len()));
        Ok(Self {
            config,
            default_baseline,
            rules,
        })
    }

    pub fn config(&self) -> &SyntheticBackendConfig {
        &self.config
    }

    /// Baseline conditional for a prompt.
    pub fn baseline_for(&self, prompt: &str) -> &Distribution {
        let lower = prompt.to_lowercase();
        self.rules
            .iter()
            .find(|(k, _)| lower.contains(k.as_str()))
            .map(|(_, d)| d)
            .unwrap_or(&self.default_baseline)
    }

    /// Fitzpatrick index drawn for `(prompt, seed)`.
    pub fn sample_type(&self, prompt: &str, seed: u64) -> usize {
        let mut h = Sha256::new();
        h.update(prompt.as_bytes());
        h.update(seed.to_le_bytes());
        let digest = h.finalize();
        let mut key = [0u8; 8];
        key.copy_from_slice(&digest[..8]);
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(key));

        let forced: f64 = rng.random();
        if let Some(t) = self.config.vocabulary.fitzpatrick_in_prompt(prompt) {
            if forced < self.config.descriptor_fidelity {
                return t;
            }
        }
        let u: f64 = rng.random();
        let probs = self.baseline_for(prompt).probs();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Face oval semi-axes as fractions of width and height.
const OVAL_A: f64 = 0.45;
const OVAL_B: f64 = 0.49;

/// Near-white background, a `skin` oval, and two dark eyes. The default
/// centre crop lies entirely inside the oval.
pub fn render_face(skin: [u8; 3], width: u32, height: u32) -> RgbImage {
    let (w, h) = (f64::from(width), f64::from(height));
    let (cx, cy) = (w / 2.0, h / 2.0);
    let (a, b) = (OVAL_A * w, OVAL_B * h);
    let eye_r = 0.03 * w.min(h);
    let eyes = [(cx - 0.12 * w, cy - 0.1 * h), (cx + 0.12 * w, cy - 0.1 * h)];
    RgbImage::from_fn(width, height, |x, y| {
        let (px, py) = (f64::from(x) + 0.5, f64::from(y) + 0.5);
        let in_oval = ((px - cx) / a).powi(2) + ((py - cy) / b).powi(2) <= 1.0;
        if !in_oval {
            return Rgb(BACKGROUND);
        }
        if eyes.iter().any(|(ex, ey)| (px - ex).powi(2) + (py - ey).powi(2) <= eye_r * eye_r) {
            Rgb(EYES)
        } else {
            Rgb(skin)
        }
    })
}

/// Axis-aligned box inscribed in the rendered oval.
pub fn face_box(width: u32, height: u32) -> BBox {
    let (w, h) = (f64::from(width), f64::from(height));
    let hw = OVAL_A * w / std::f64::consts::SQRT_2;
    let hh = OVAL_B * h / std::f64::consts::SQRT_2;
    let x = (w / 2.0 - hw).ceil() as u32;
    let y = (h / 2.0 - hh).ceil() as u32;
    let x1 = (w / 2.0 + hw).floor() as u32;
    let y1 = (h / 2.0 + hh).floor() as u32;
    BBox {
        x,
        y,
        w: x1.saturating_sub(x).max(1),
        h: y1.saturating_sub(y).max(1),
    }
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    img.write_to(&mut Cursor::new(&mut out), ImageFormat::Png)
        .expect("in-memory PNG encoding");
    out
}

impl ImageBackend for SyntheticBackend {
    fn id(&self) -> String {
        "synthetic".into()
    }

    fn generate(&self, prompt: &str, seed: u64, params: &BackendParams) -> Result<GeneratedImage, BackendError> {
        let t = self.sample_type(prompt, seed);
        let img = render_face(self.config.palette[t], params.width, params.height);
        Ok(GeneratedImage {
            png: encode_png(&img),
            face_bbox: self.config.emit_face_bbox.then(|| face_box(params.width, params.height)),
            seed_honored: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audit::{center_crop, classify_region, FaceOrigin, FaceRegion};

    fn backend(f: f64) -> SyntheticBackend {
        SyntheticBackend::new(SyntheticBackendConfig {
            descriptor_fidelity: f,
            ..SyntheticBackendConfig::default()
        })
        .unwrap()
    }

    fn params() -> BackendParams {
        BackendParams {
            width: 96,
            height: 64,
            ..BackendParams::default()
        }
    }

    #[test]
    fn deterministic_bytes() {
        let b = backend(0.9);
        let x = b.generate("a doctor", 7, &params()).unwrap();
        let y = b.generate("a doctor", 7, &params()).unwrap();
        assert_eq!(x.png, y.png);
    }

    #[test]
    fn full_fidelity_forces_descriptor() {
        let b = backend(1.0);
        for seed in 0..200 {
            assert_eq!(b.sample_type("A full-color headshot of a doctor with dark skin", seed), 5);
        }
        let img = image::load_from_memory(
            &b.generate("A full-color headshot of a doctor with dark skin", 3, &params()).unwrap().png,
        )
        .unwrap()
        .to_rgb8();
        let c = img.get_pixel(48, 45).0;
        assert_eq!(c, DEFAULT_PALETTE[5]);
    }

    #[test]
    fn zero_fidelity_ignores_descriptor() {
        let cfg = SyntheticBackendConfig {
            descriptor_fidelity: 0.0,
            default_baseline: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            conditionals: vec![],
            ..SyntheticBackendConfig::default()
        };
        let b = SyntheticBackend::new(cfg).unwrap();
        assert!((0..100).all(|s| b.sample_type("x with dark skin", s) == 0));
    }

    #[test]
    fn keyword_rules_longest_first() {
        let cfg = SyntheticBackendConfig {
            conditionals: vec![
                BaselineRule { keyword: "worker".into(), baseline: [1.0, 0.0, 0.0, 0.0, 0.0, 0.0] },
                BaselineRule { keyword: "farm worker".into(), baseline: [0.0, 0.0, 0.0, 0.0, 0.0, 1.0] },
            ],
            ..SyntheticBackendConfig::default()
        };
        let b = SyntheticBackend::new(cfg).unwrap();
        assert_eq!(b.baseline_for("a Farm Worker").probs()[5], 1.0);
        assert_eq!(b.baseline_for("a factory worker").probs()[0], 1.0);
        assert_eq!(b.baseline_for("a doctor").probs()[1], 0.69);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = SyntheticBackendConfig::default();
        cfg.palette[0] = [80, 52, 40];
        assert!(SyntheticBackend::new(cfg).is_err());
        let cfg = SyntheticBackendConfig {
            default_baseline: [0.5, 0.0, 0.0, 0.0, 0.0, 0.0],
            ..SyntheticBackendConfig::default()
        };
        assert!(SyntheticBackend::new(cfg).is_err());
        let cfg = SyntheticBackendConfig {
            descriptor_fidelity: 1.5,
            ..SyntheticBackendConfig::default()
        };
        assert!(SyntheticBackend::new(cfg).is_err());
    }

    #[test]
    fn mixture_frequencies_converge() {
        let f = 0.6;
        let b = backend(f);
        let prompt = "A full-color headshot of a lawyer with brown skin";
        let n = 6000;
        let mut counts = [0usize; 6];
        for s in 0..n {
            counts[b.sample_type(prompt, s as u64)] += 1;
        }
        let base = b.baseline_for(prompt).probs().to_vec();
        for t in 0..6 {
            let p = f * if t == 4 { 1.0 } else { 0.0 } + (1.0 - f) * base[t];
            let tol = 4.0 * (p * (1.0 - p) / n as f64).sqrt();
            let obs = counts[t] as f64 / n as f64;
            assert!((obs - p).abs() <= tol, "type {t}: {obs} vs {p} ± {tol}");
        }
    }

    #[test]
    fn crop_and_face_box_lie_inside_oval() {
        for (w, h) in [(96, 64), (192, 128), (768, 512), (64, 64)] {
            for (i, rgb) in DEFAULT_PALETTE.iter().enumerate() {
                let img = render_face(*rgb, w, h);
                for bbox in [center_crop(w, h), face_box(w, h)] {
                    let r = classify_region(&img, FaceRegion { bbox, origin: FaceOrigin::CenterCrop });
                    assert_eq!(r.fitzpatrick.map(|t| t.index()), Some(i), "{w}x{h} {bbox:?}");
                    let lab = srgb_to_lab(*rgb);
                    assert!((r.lab.unwrap().l - lab.l).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn config_file_formats() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("s.toml");
        std::fs::write(
            &toml_path,
            "descriptor_fidelity = 0.8\ndefault_baseline = [0.1, 0.5, 0.2, 0.1, 0.05, 0.05]\n\n[[conditionals]]\nkeyword = \"janitor\"\nbaseline = [0.0, 0.0, 0.0, 0.0, 0.5, 0.5]\n",
        )
        .unwrap();
        let cfg = SyntheticBackendConfig::from_path(&toml_path).unwrap();
        assert_eq!(cfg.descriptor_fidelity, 0.8);
        assert_eq!(cfg.palette, DEFAULT_PALETTE);
        SyntheticBackend::new(cfg.clone()).unwrap();

        let json_path = dir.path().join("s.json");
        std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(SyntheticBackendConfig::from_path(&json_path).unwrap(), cfg);
    }

    #[test]
    fn presets_are_valid() {
        for (name, _) in PRESETS {
            assert!(preset_baseline(name).is_some());
        }
        let high = preset_baseline("high-status").unwrap();
        assert_eq!(high.probs()[1], 0.69);
        assert!((high.probs()[4] + high.probs()[5] - 0.02).abs() < 1e-12);
        let low = preset_baseline("low-status").unwrap();
        assert!((low.probs()[4] + low.probs()[5] - 0.48).abs() < 1e-12);
        let smile = preset_baseline("smiling").unwrap();
        assert!(smile.probs()[0] + smile.probs()[1] >= 0.80);
    }
}
