use std::path::Path;

use anyhow::{Context, Result};

use fairtarget::artifact::{read_upstream, write_bytes, write_json, AUDIT_FILE, HISTOGRAM_CSV, PLAN_FILE, REPORT_CSV, REPORT_JSON};
use fairtarget::audit::{audit_run, AuditOptions, AuditReport, ExternalDetector, FaceDetector};
use fairtarget::demographics::{
    retrieve_demographics, route, DemographicCache, DemographicQuery, DemographicResult, FixtureProvider,
    LlmProvider, OpenAiChatProvider, ProviderConfig, RetrievalLog, RoutingDecision, RoutingSummary, Scope,
};
use fairtarget::generation::{
    execute, A1111Backend, BackendParams, ExecuteOptions, ImageBackend, OpenAiImagesBackend, OpenAiImagesConfig,
    SyntheticBackend, SyntheticBackendConfig,
};
use fairtarget::metrics::{reference_distribution, AuditComparison, OccupationTable, PromptRow, Reference, Report};
use fairtarget::prompts::{extract_concept, plan_baseline, plan_with, GenerationPlan, PromptVocabulary};
use fairtarget::sim::{run_scenario, ScenarioConfig};
use fairtarget::{fallback_target, AttributeScheme, Distribution, TargetSetting};

use crate::exit::{Config, ToleranceFailure, Usage};
use crate::{AuditArgs, BackendKind, GenerateArgs, PlanArgs, ProviderArgs, ReportArgs, RetrieveArgs, SchemeArg, SimulateArgs, TargetKind};

impl SchemeArg {
    fn scheme(self) -> AttributeScheme {
        match self {
            SchemeArg::Bins3 => AttributeScheme::bins3(),
            SchemeArg::Fitzpatrick => AttributeScheme::fitzpatrick(),
            SchemeArg::Monk => AttributeScheme::monk(),
        }
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn provider(args: &ProviderArgs) -> Result<Box<dyn LlmProvider>> {
    if let Some(path) = &args.fixture {
        return Ok(Box::new(FixtureProvider::from_file(path)?));
    }
    let mut cfg = match &args.provider_config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| Config(format!("{}: {e}", path.display())))?;
            toml::from_str::<ProviderConfig>(&text).map_err(|e| Config(format!("{}: {e}", path.display())))?
        }
        None => ProviderConfig::default(),
    };
    if let Some(m) = &args.model {
        cfg.model = m.clone();
    }
    Ok(Box::new(OpenAiChatProvider::from_env(cfg)?))
}

fn retrieve_result(prompt: &str, args: &ProviderArgs) -> Result<(DemographicQuery, String, DemographicResult)> {
    let query = DemographicQuery::from_prompt(prompt, Scope::from(args.scope.clone()))?;
    let provider = provider(args)?;
    let result = if args.no_cache {
        retrieve_demographics(&query, provider.as_ref())?
    } else {
        DemographicCache::new(&args.cache_dir).retrieve(&query, provider.as_ref())?
    };
    Ok((query, provider.id(), result))
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn fallback_hint(decision: &RoutingDecision, concept: &str) {
    if let Some(reason) = decision.fallback_reason() {
        eprintln!(
            "note: no usable statistics for {concept:?} ({}); plan with --target fallback or --fallback",
            serde_json::to_value(reason).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
        );
    }
}

pub fn retrieve(a: RetrieveArgs) -> Result<()> {
    let (query, _, result) = retrieve_result(&a.prompt, &a.provider)?;
    let decision = route(&result, a.provider.threshold, a.provider.fallback);
    print_json(&serde_json::json!({ "result": result, "routing": decision }))?;
    fallback_hint(&decision, &query.concept);
    Ok(())
}

fn explicit_setting(a: &PlanArgs, scheme: &AttributeScheme) -> Result<TargetSetting> {
    let probs = a
        .distribution
        .clone()
        .ok_or_else(|| usage("--target explicit needs --distribution"))?;
    let distribution = Distribution::new(scheme.clone(), probs).map_err(|e| usage(e.to_string()))?;
    Ok(TargetSetting::Explicit { distribution })
}

fn setting_for(a: &PlanArgs, scheme: &AttributeScheme) -> Result<TargetSetting> {
    let setting = match a.target {
        TargetKind::Uniform => TargetSetting::Uniform,
        TargetKind::Intermediate => TargetSetting::Intermediate {
            alpha: a.alpha.unwrap_or(TargetSetting::DEFAULT_INTERMEDIATE_ALPHA),
        },
        TargetKind::Extreme => TargetSetting::Extreme {
            focal: a.focal.clone().ok_or_else(|| usage("--target extreme needs --focal"))?,
            alpha: a.alpha.unwrap_or(1.0),
        },
        TargetKind::Fallback => TargetSetting::Fallback { fallback_override: None },
        TargetKind::Explicit => explicit_setting(a, scheme)?,
        TargetKind::Baseline => unreachable!("baseline plans carry no target"),
    };
    setting.validate().map_err(|e| usage(e.to_string()))?;
    Ok(setting)
}

pub fn plan(a: PlanArgs) -> Result<()> {
    let path = a.out.join(PLAN_FILE);
    if a.target == TargetKind::Baseline {
        let p = plan_baseline(&a.prompt, a.n, a.seed)?;
        write_json(&path, &p)?;
        return summarize_plan(&p, &path);
    }
    let forced = a.provider.fallback || a.target == TargetKind::Fallback;
    let needs_retrieval = !forced && (a.retrieve || a.target == TargetKind::Intermediate);

    let mut log = None;
    let mut reference = None;
    if needs_retrieval {
        let (query, provider_id, result) = retrieve_result(&a.prompt, &a.provider)?;
        let decision = route(&result, a.provider.threshold, false);
        fallback_hint(&decision, &query.concept);
        reference = decision.demographics().and_then(|r| r.proportions.clone());
        log = Some(RetrievalLog {
            query,
            provider: provider_id,
            routing: RoutingSummary::from(&decision),
            result: Some(result),
        });
    }

    let (setting, q) = match (&reference, forced || (needs_retrieval && reference.is_none())) {
        (_, true) => {
            let s = TargetSetting::Fallback { fallback_override: None };
            let q = fallback_target(None)?;
            (s, q)
        }
        (Some(r), false) => {
            let s = setting_for(&a, r.scheme())?;
            let q = s.resolve(r.scheme(), Some(r)).map_err(|e| usage(e.to_string()))?;
            (s, q)
        }
        (None, false) => {
            let scheme = a.scheme.scheme();
            let s = setting_for(&a, &scheme)?;
            let q = s.resolve(&scheme, None).map_err(|e| usage(e.to_string()))?;
            (s, q)
        }
    };
    let mut p = plan_with(&a.prompt, &setting, &q, a.n, a.seed, &PromptVocabulary::default())?;
    if let Some(log) = log {
        p = p.with_retrieval(log);
    }
    write_json(&path, &p)?;
    summarize_plan(&p, &path)
}

fn summarize_plan(p: &GenerationPlan, path: &Path) -> Result<()> {
    match &p.target {
        Some(t) => println!("target: {} over {}", t.setting.name(), p.scheme),
        None => println!("baseline: base prompt only"),
    }
    for e in &p.alloc {
        println!("  {:<12} {}", e.label, e.count);
    }
    println!("{} images planned; wrote {}", p.planned_images(), path.display());
    Ok(())
}

pub fn generate(a: GenerateArgs) -> Result<()> {
    let plan: GenerationPlan = read_upstream(&a.run.join(PLAN_FILE), "plan")?;
    let mut params = BackendParams::default();
    if let Some(w) = a.width {
        params.width = w;
    }
    if let Some(h) = a.height {
        params.height = h;
    }
    if let Some(s) = a.steps {
        params.steps = s;
    }
    if let Some(g) = a.guidance {
        params.guidance = g;
    }
    let backend: Box<dyn ImageBackend> = match a.backend {
        BackendKind::Synthetic => {
            let mut cfg = match &a.synthetic_config {
                Some(path) => SyntheticBackendConfig::from_path(path)?,
                None => SyntheticBackendConfig::default(),
            };
            if let Some(f) = a.fidelity {
                cfg.descriptor_fidelity = f;
            }
            Box::new(SyntheticBackend::new(cfg)?)
        }
        BackendKind::A1111 => Box::new(A1111Backend::new(a.url.clone(), a.timeout)),
        BackendKind::OpenaiImages => {
            let mut cfg = OpenAiImagesConfig {
                timeout_secs: a.timeout,
                ..OpenAiImagesConfig::default()
            };
            if let Some(m) = &a.model {
                cfg.model = m.clone();
            }
            Box::new(OpenAiImagesBackend::from_env(cfg).map_err(Config)?)
        }
    };
    let opts = ExecuteOptions {
        concurrency: a.concurrency,
        retries: a.retries,
        ..ExecuteOptions::default()
    };
    let m = execute(&plan, backend.as_ref(), &params, &a.run, &opts)?;
    println!(
        "{}: {} of {} images generated, {} failed",
        m.backend, m.summary.ok, m.summary.planned, m.summary.failed
    );
    Ok(())
}

pub fn audit(a: AuditArgs) -> Result<()> {
    let detector = a.detector.clone().map(|p| ExternalDetector::new(p, a.detector_args.clone()));
    let opts = AuditOptions {
        detector: detector.as_ref().map(|d| d as &dyn FaceDetector),
        ignore_sidecar_bbox: a.ignore_sidecar_bbox,
    };
    let r = audit_run(&a.run, &opts)?;
    let d = r.discards;
    println!(
        "{} images, {} classified; discarded: {} no face, {} degenerate, {} failed generation",
        r.n_images, r.n_ok, d.no_face, d.degenerate, d.failed_generation
    );
    for dist in [&r.observed.bins3, &r.observed.fitzpatrick] {
        let cells: Vec<String> = dist.iter().map(|(l, p)| format!("{l}={p:.3}")).collect();
        println!("  {}", cells.join("  "));
    }
    Ok(())
}

fn observed<'a>(audit: &'a AuditReport, scheme: &AttributeScheme, dir: &Path) -> Result<&'a Distribution> {
    audit
        .observed
        .for_scheme(scheme)
        .with_context(|| format!("{}: no observed distribution over {scheme}", dir.display()))
}

pub fn report(a: ReportArgs) -> Result<()> {
    if a.baseline.len() != a.treated.len() {
        return Err(usage("give one --baseline per --treated"));
    }
    if !a.label.is_empty() && a.label.len() != a.treated.len() {
        return Err(usage("give one --label per pair, or none"));
    }
    let table = match &a.occupations {
        Some(p) => OccupationTable::from_path(p)?,
        None => OccupationTable::builtin(),
    };
    let scheme = a.scheme.scheme();
    let mut rows = Vec::new();
    let mut all_declared = true;
    let mut declared_target = None;
    for (i, (bdir, tdir)) in a.baseline.iter().zip(&a.treated).enumerate() {
        let base: AuditReport = read_upstream(&bdir.join(AUDIT_FILE), "audit")?;
        let treated: AuditReport = read_upstream(&tdir.join(AUDIT_FILE), "audit")?;
        let plan: GenerationPlan = read_upstream(&tdir.join(PLAN_FILE), "plan")?;
        let declared = plan
            .target
            .as_ref()
            .filter(|t| t.setting.is_skin_tone_space(t.distribution.scheme()))
            .map(|t| &t.distribution);
        let (q, reference) = reference_distribution(declared, &scheme);
        all_declared &= reference == Reference::DeclaredTarget;
        let label = a.label.get(i).cloned().unwrap_or_else(|| extract_concept(&treated.base_prompt));
        let b = AuditComparison::new(q.clone(), observed(&base, &scheme, bdir)?.clone(), base.n_images, base.discards.total())?;
        let t = AuditComparison::new(q, observed(&treated, &scheme, tdir)?.clone(), treated.n_images, treated.discards.total())?;
        rows.push(PromptRow::new(&label, b, t, &table));
        if a.treated.len() == 1 {
            declared_target = plan.target.clone();
        }
    }
    let reference = if all_declared { Reference::DeclaredTarget } else { Reference::Uniform };
    let report = Report::build(scheme, reference, declared_target, rows, &table)?;
    write_json(&a.out.join(REPORT_JSON), &report)?;
    write_bytes(&a.out.join(REPORT_CSV), report.to_csv().as_bytes())?;
    write_bytes(&a.out.join(HISTOGRAM_CSV), report.histogram_csv().as_bytes())?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let mut cfg = match (&a.preset, &a.config) {
        (Some(name), _) => ScenarioConfig::preset(name, a.n.unwrap_or(50), a.seed.unwrap_or(0))
            .ok_or_else(|| usage(format!("unknown preset {name:?}")))?,
        (None, Some(path)) => ScenarioConfig::from_path(path)?,
        (None, None) => return Err(usage("give --preset or --config")),
    };
    if let Some(n) = a.n {
        cfg.images_per_condition = n;
    }
    if let Some(s) = a.seed {
        cfg.seed_root = s;
    }
    if let Some(f) = a.fidelity {
        cfg.descriptor_fidelity = f;
    }
    let outcome = run_scenario(&cfg, &a.out)?;
    print!("{}", outcome.summary_text());
    if outcome.pass {
        Ok(())
    } else {
        Err(ToleranceFailure(format!("scenario {:?} missed its expectation", cfg.name)).into())
    }
}
