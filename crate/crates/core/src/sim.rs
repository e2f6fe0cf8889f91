//! Desk-scale experiments on the synthetic backend: baseline vs
//! target-conditioned runs, audited and checked against the analytic mixture.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::{self, write_bytes, write_json, PLAN_FILE};
use crate::audit::{audit_run, AuditError, AuditOptions, AuditReport};
use crate::generation::{
    execute, preset_baseline, BackendParams, ExecuteOptions, GenerationError, SyntheticBackend,
    SyntheticBackendConfig, PRESETS,
};
use crate::metrics::{
    alignment_error, headshot_prompt, reference_distribution, AuditComparison, MetricsError, OccupationTable,
    PromptRow, Report, Status,
};
use crate::prompts::{plan_baseline, plan_with, DeclaredTarget, GenerationPlan, PromptError, PromptVocabulary};
use crate::scheme::{AttributeScheme, FitzpatrickType};
use crate::target::{aggregate_to_bins, Distribution, TargetError, TargetSetting};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Config(String),
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Artifact(#[from] artifact::ArtifactError),
}

/// Baseline skew for a prompt: explicit Fitzpatrick I–VI weights or a preset name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BaselineSpec {
    Probs([f64; 6]),
    Preset(String),
}

impl BaselineSpec {
    pub fn resolve(&self) -> Result<Distribution, SimError> {
        match self {
            BaselineSpec::Probs(p) => Ok(Distribution::new(AttributeScheme::fitzpatrick(), p.to_vec())?),
            BaselineSpec::Preset(name) => {
                preset_baseline(name).ok_or_else(|| SimError::Config(format!("unknown baseline preset {name:?}")))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioPrompt {
    pub prompt: String,
    pub baseline: BaselineSpec,
}

fn default_width() -> u32 {
    192
}

fn default_height() -> u32 {
    128
}

fn default_concurrency() -> usize {
    crate::generation::DEFAULT_CONCURRENCY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub prompts: Vec<ScenarioPrompt>,
    pub descriptor_fidelity: f64,
    /// Declared target over Fitzpatrick I–VI.
    pub target: TargetSetting,
    /// Reference `r` for intermediate and extreme targets; each prompt's
    /// baseline when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<[f64; 6]>,
    /// Images per prompt and condition.
    pub images_per_condition: usize,
    pub seed_root: u64,
    #[serde(default = "default_width")]
    pub width: u32,
    #[serde(default = "default_height")]
    pub height: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
}

/// Headline prompt per shipped preset, plus the multi-prompt `occupations` preset.
pub const PRESET_NAMES: [&str; 5] = ["high-status", "moderate-status", "low-status", "smiling", "occupations"];

fn status_preset(s: Status) -> &'static str {
    match s {
        Status::High => "high-status",
        Status::Moderate => "moderate-status",
        Status::Low => "low-status",
    }
}

impl ScenarioConfig {
    /// Uniform Fitzpatrick target, fidelity 0.9.
    pub fn preset(name: &str, images_per_condition: usize, seed_root: u64) -> Option<Self> {
        let prompts = match name {
            "high-status" => vec![("doctor", name)],
            "moderate-status" => vec![("nurse", name)],
            "low-status" => vec![("janitor", name)],
            "smiling" => vec![("someone smiling", name)],
            "occupations" => {
                return Some(Self {
                    prompts: OccupationTable::builtin()
                        .entries()
                        .iter()
                        .map(|e| ScenarioPrompt {
                            prompt: headshot_prompt(&e.occupation),
                            baseline: BaselineSpec::Preset(status_preset(e.status).into()),
                        })
                        .collect(),
                    ..Self::preset("high-status", images_per_condition, seed_root)?
                }
                .named(name))
            }
            _ => return None,
        };
        Some(Self {
            name: name.to_string(),
            prompts: prompts
                .into_iter()
                .map(|(subject, preset)| ScenarioPrompt {
                    prompt: headshot_prompt(subject),
                    baseline: BaselineSpec::Preset(preset.into()),
                })
                .collect(),
            descriptor_fidelity: 0.9,
            target: TargetSetting::Uniform,
            reference: None,
            images_per_condition,
            seed_root,
            width: default_width(),
            height: default_height(),
            concurrency: default_concurrency(),
        })
    }

    fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    /// Reads TOML, or JSON when the extension is `.json`.
    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        let parsed = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| e.to_string())
        } else {
            toml::from_str(&text).map_err(|e| e.to_string())
        };
        let cfg: Self = parsed.map_err(|e| SimError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.prompts.is_empty() {
            return Err(SimError::Config("no prompts".into()));
        }
        if self.images_per_condition == 0 {
            return Err(SimError::Config("images_per_condition must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.descriptor_fidelity) {
            return Err(SimError::Config(format!(
                "descriptor_fidelity {} outside [0, 1]",
                self.descriptor_fidelity
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(SimError::Config("width and height must be positive".into()));
        }
        for p in &self.prompts {
            p.baseline.resolve()?;
        }
        if let Some(r) = &self.reference {
            Distribution::new(AttributeScheme::fitzpatrick(), r.to_vec())?;
        }
        self.target.validate()?;
        Ok(())
    }

    /// Declared target for one prompt.
    pub fn resolve_target(&self, prompt_baseline: &Distribution) -> Result<Distribution, SimError> {
        let fitz = AttributeScheme::fitzpatrick();
        let reference = match &self.reference {
            Some(r) => Distribution::new(fitz.clone(), r.to_vec())?,
            None => prompt_baseline.clone(),
        };
        let needs_ref = matches!(self.target, TargetSetting::Intermediate { .. } | TargetSetting::Extreme { .. });
        let q = self.target.resolve(&fitz, needs_ref.then_some(&reference))?;
        if !q.scheme().is_fitzpatrick() {
            return Err(SimError::Config("scenario targets must be over Fitzpatrick I–VI".into()));
        }
        Ok(q)
    }
}

/// Expected observed distribution: each subgroup prompt yields its own type
/// with probability `f` and a baseline draw otherwise.
pub fn expected_observed(baseline: &Distribution, q: &Distribution, fidelity: f64) -> Result<Distribution, SimError> {
    if !baseline.scheme().is_fitzpatrick() {
        return Err(TargetError::NotFitzpatrick(baseline.scheme().to_string()).into());
    }
    Ok(q.mix(baseline, fidelity)?)
}

/// Four standard errors of a multinomial proportion.
pub fn multinomial_tolerance(p: f64, n: usize) -> f64 {
    4.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeCheck {
    pub prompt: String,
    pub condition: String,
    pub category: String,
    pub expected: f64,
    pub observed: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptOutcome {
    pub prompt: String,
    pub baseline_dir: PathBuf,
    pub treated_dir: PathBuf,
    pub baseline: Distribution,
    pub target: Distribution,
    pub expected_treated: Distribution,
    pub observed_baseline: Distribution,
    pub observed_treated: Distribution,
    /// Alignment errors over three bins against the declared target.
    pub baseline_error: f64,
    pub treated_error: f64,
    pub expected_baseline_error: f64,
    pub expected_treated_error: f64,
    pub treated_below_baseline: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario: ScenarioConfig,
    pub prompts: Vec<PromptOutcome>,
    pub checks: Vec<TypeCheck>,
    pub report: Report,
    pub pass: bool,
}

impl ScenarioOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &TypeCheck> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn summary_text(&self) -> String {
        let mut out = self.report.to_text();
        out.push('\n');
        for c in self.failures() {
            out.push_str(&format!(
                "FAIL {} [{}] type {}: observed {:.4}, expected {:.4} ± {:.4}\n",
                c.prompt, c.condition, c.category, c.observed, c.expected, c.tolerance
            ));
        }
        for p in self.prompts.iter().filter(|p| !p.treated_below_baseline) {
            out.push_str(&format!(
                "FAIL {}: treated error {:.4} not below baseline {:.4}\n",
                p.prompt, p.treated_error, p.baseline_error
            ));
        }
        let n = self.checks.len();
        let failed = self.failures().count();
        out.push_str(&format!(
            "{}: {} of {n} per-type checks within 4σ\n",
            if self.pass { "PASS" } else { "FAIL" },
            n - failed
        ));
        out
    }
}

fn slug(s: &str) -> String {
    let s: String = s
        .to_lowercase()
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '-' })
        .collect();
    s.split('-').filter(|p| !p.is_empty()).collect::<Vec<_>>().join("-")
}

fn checks_for(prompt: &str, condition: &str, expected: &Distribution, observed: &Distribution, n: usize) -> Vec<TypeCheck> {
    expected
        .iter()
        .zip(observed.probs())
        .map(|((label, e), &o)| {
            let tolerance = multinomial_tolerance(e, n);
            TypeCheck {
                prompt: prompt.to_string(),
                condition: condition.to_string(),
                category: label.to_string(),
                expected: e,
                observed: o,
                tolerance,
                pass: (o - e).abs() <= tolerance + 1e-12,
            }
        })
        .collect()
}

fn run_condition(
    plan: &GenerationPlan,
    backend: &SyntheticBackend,
    params: &BackendParams,
    dir: &Path,
    concurrency: usize,
) -> Result<AuditReport, SimError> {
    write_json(&dir.join(PLAN_FILE), plan)?;
    let opts = ExecuteOptions {
        concurrency,
        ..ExecuteOptions::default()
    };
    execute(plan, backend, params, dir, &opts)?;
    Ok(audit_run(dir, &AuditOptions::default())?)
}

/// Runs every prompt of the scenario under `out_dir`, writing the usual
/// plan/manifest/audit artifacts per condition and `report.json`,
/// `report.csv`, `histogram.csv` and `scenario.json` at the top.
pub fn run_scenario(cfg: &ScenarioConfig, out_dir: &Path) -> Result<ScenarioOutcome, SimError> {
    cfg.validate()?;
    let params = BackendParams {
        width: cfg.width,
        height: cfg.height,
        ..BackendParams::default()
    };
    let bins = AttributeScheme::bins3();
    let table = OccupationTable::builtin();
    let vocab = PromptVocabulary::default();
    let mut outcomes = Vec::new();
    let mut checks = Vec::new();
    let mut rows = Vec::new();
    let mut declared = None;

    for (idx, sp) in cfg.prompts.iter().enumerate() {
        let baseline = sp.baseline.resolve()?;
        let q = cfg.resolve_target(&baseline)?;
        let backend = SyntheticBackend::new(SyntheticBackendConfig::with_baseline(&baseline, cfg.descriptor_fidelity))?;
        let dir = out_dir.join(format!("{idx:02}-{}", slug(&crate::prompts::extract_concept(&sp.prompt))));
        let seed_root = cfg.seed_root.wrapping_add(idx as u64);

        let base_plan = plan_baseline(&sp.prompt, cfg.images_per_condition, seed_root)?;
        let treated_plan = plan_with(&sp.prompt, &cfg.target, &q, cfg.images_per_condition, seed_root, &vocab)?;
        let realized = treated_plan
            .allocation()
            .and_then(|a| a.fractions())
            .ok_or_else(|| SimError::Config("empty allocation".into()))?;
        let expected = expected_observed(&baseline, &realized, cfg.descriptor_fidelity)?;

        let base_audit = run_condition(&base_plan, &backend, &params, &dir.join("baseline"), cfg.concurrency)?;
        let treated_audit = run_condition(&treated_plan, &backend, &params, &dir.join("treated"), cfg.concurrency)?;

        let label = crate::prompts::extract_concept(&sp.prompt);
        checks.extend(checks_for(&label, "baseline", &baseline, &base_audit.observed.fitzpatrick, base_audit.n_ok));
        checks.extend(checks_for(&label, "treated", &expected, &treated_audit.observed.fitzpatrick, treated_audit.n_ok));

        let (q3, reference) = reference_distribution(Some(&q), &bins);
        let base_cmp = AuditComparison::new(
            q3.clone(),
            base_audit.observed.bins3.clone(),
            base_audit.n_images,
            base_audit.discards.total(),
        )?;
        let treated_cmp = AuditComparison::new(
            q3.clone(),
            treated_audit.observed.bins3.clone(),
            treated_audit.n_images,
            treated_audit.discards.total(),
        )?;
        debug_assert_eq!(reference, crate::metrics::Reference::DeclaredTarget);
        outcomes.push(PromptOutcome {
            prompt: sp.prompt.clone(),
            baseline_dir: dir.join("baseline"),
            treated_dir: dir.join("treated"),
            expected_baseline_error: alignment_error(&aggregate_to_bins(&baseline)?, &q3)?,
            expected_treated_error: alignment_error(&aggregate_to_bins(&expected)?, &q3)?,
            baseline_error: base_cmp.alignment_error,
            treated_error: treated_cmp.alignment_error,
            treated_below_baseline: treated_cmp.alignment_error < base_cmp.alignment_error
                || base_cmp.alignment_error == 0.0,
            baseline,
            target: q.clone(),
            expected_treated: expected,
            observed_baseline: base_audit.observed.fitzpatrick.clone(),
            observed_treated: treated_audit.observed.fitzpatrick.clone(),
        });
        rows.push(PromptRow::new(&label, base_cmp, treated_cmp, &table));
        if cfg.prompts.len() == 1 {
            declared = Some(DeclaredTarget {
                setting: cfg.target.clone(),
                distribution: q,
            });
        }
    }

    let report = Report::build(bins, crate::metrics::Reference::DeclaredTarget, declared, rows, &table)?;
    let pass = checks.iter().all(|c| c.pass) && outcomes.iter().all(|o| o.treated_below_baseline);
    let outcome = ScenarioOutcome {
        scenario: cfg.clone(),
        prompts: outcomes,
        checks,
        report,
        pass,
    };
    write_json(&out_dir.join(artifact::REPORT_JSON), &outcome.report)?;
    write_bytes(&out_dir.join(artifact::REPORT_CSV), outcome.report.to_csv().as_bytes())?;
    write_bytes(&out_dir.join(artifact::HISTOGRAM_CSV), outcome.report.histogram_csv().as_bytes())?;
    write_json(&out_dir.join("scenario.json"), &outcome)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    /// Three-bin error of the observed treated distribution against uniform.
    pub observed_error: f64,
    pub expected_error: f64,
}

/// Runs the scenario's first prompt under intermediate targets for each
/// `alpha` and measures the treated error against the uniform target.
pub fn alpha_sweep(cfg: &ScenarioConfig, alphas: &[f64], out_dir: &Path) -> Result<Vec<SweepPoint>, SimError> {
    let uniform3 = crate::target::uniform_target(&AttributeScheme::bins3());
    let mut points = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut c = cfg.clone();
        c.prompts.truncate(1);
        c.target = TargetSetting::Intermediate { alpha };
        let o = run_scenario(&c, &out_dir.join(format!("alpha-{alpha}")))?;
        let p = &o.prompts[0];
        points.push(SweepPoint {
            alpha,
            observed_error: alignment_error(&aggregate_to_bins(&p.observed_treated)?, &uniform3)?,
            expected_error: alignment_error(&aggregate_to_bins(&p.expected_treated)?, &uniform3)?,
        });
    }
    Ok(points)
}

/// Observed treated mass on `focal` for the scenario's first prompt.
pub fn focal_mass(outcome: &ScenarioOutcome, focal: FitzpatrickType) -> f64 {
    outcome.prompts[0].observed_treated.probs()[focal.index()]
}

/// Names of the shipped baseline presets.
pub fn baseline_preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}
