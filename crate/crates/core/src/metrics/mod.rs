//! Alignment error, improvement and status-group report tables.

pub mod occupations;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifact::timestamp_now;
use crate::prompts::DeclaredTarget;
use crate::scheme::{AttributeScheme, SchemeKind};
use crate::target::{aggregate_to_bins, uniform_target, Distribution, TargetError};

pub use occupations::{
    headshot_prompt, non_occupational_prompts, NonOccupationalPrompt, OccupationEntry, OccupationTable, Status,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error(transparent)]
    Target(#[from] TargetError),
    #[error("baseline error is zero; improvement is undefined")]
    ZeroBaseline,
    #[error("occupation {0:?} is not in the occupation table")]
    UnknownOccupation(String),
    #[error("occupation table: {0}")]
    Table(String),
}

/// Σ (p_i − q_i)² over a shared scheme.
pub fn alignment_error(p: &Distribution, q: &Distribution) -> Result<f64, MetricsError> {
    p.ensure_same_scheme(q)?;
    Ok(p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// Relative reduction in alignment error, in percent.
pub fn improvement(baseline_err: f64, treated_err: f64) -> Result<f64, MetricsError> {
    if baseline_err <= 0.0 {
        return Err(MetricsError::ZeroBaseline);
    }
    Ok(100.0 * (1.0 - treated_err / baseline_err))
}

/// What observed proportions were compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// The run's declared skin-tone target, expressed in the report scheme.
    DeclaredTarget,
    /// Uniform over the report scheme, used when the declared target is not
    /// in skin-tone space or cannot be expressed in the report scheme.
    Uniform,
}

/// `declared` expressed in `scheme`, or uniform over `scheme` when that is
/// not possible. Six Fitzpatrick types aggregate to three bins.
pub fn reference_distribution(declared: Option<&Distribution>, scheme: &AttributeScheme) -> (Distribution, Reference) {
    if let Some(d) = declared {
        if d.scheme().same_categories(scheme) {
            return (d.clone(), Reference::DeclaredTarget);
        }
        if scheme.kind() == SchemeKind::SkinToneBins3 && d.scheme().is_fitzpatrick() {
            if let Ok(b) = aggregate_to_bins(d) {
                return (b, Reference::DeclaredTarget);
            }
        }
    }
    (uniform_target(scheme), Reference::Uniform)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditComparison {
    pub declared: Distribution,
    pub observed: Distribution,
    pub alignment_error: f64,
    pub n_images: usize,
    pub discards: usize,
}

impl AuditComparison {
    pub fn new(declared: Distribution, observed: Distribution, n_images: usize, discards: usize) -> Result<Self, MetricsError> {
        let alignment_error = alignment_error(&observed, &declared)?;
        Ok(Self {
            declared,
            observed,
            alignment_error,
            n_images,
            discards,
        })
    }
}

/// One status group (or average) line of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRow {
    pub group: String,
    pub n: usize,
    pub mean_baseline: f64,
    pub mean_treated: f64,
    /// Computed from the two means.
    pub improvement: Option<f64>,
    /// Mean of the per-prompt improvements.
    pub mean_improvement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    /// High, moderate and low status, for groups with at least one prompt.
    pub groups: Vec<GroupRow>,
    /// Average of the group means; the headline average.
    pub average: GroupRow,
    /// Average over individual prompts.
    pub average_over_prompts: GroupRow,
}

impl GroupReport {
    /// Table rows in display order.
    pub fn rows(&self) -> impl Iterator<Item = &GroupRow> {
        self.groups.iter().chain([&self.average, &self.average_over_prompts])
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn mean_opt(xs: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = xs.into_iter().collect();
    v.filter(|v| !v.is_empty()).map(mean)
}

fn row(group: &str, pairs: &[(f64, f64)]) -> GroupRow {
    let mb = mean(pairs.iter().map(|p| p.0));
    let mt = mean(pairs.iter().map(|p| p.1));
    GroupRow {
        group: group.to_string(),
        n: pairs.len(),
        mean_baseline: mb,
        mean_treated: mt,
        improvement: improvement(mb, mt).ok(),
        mean_improvement: mean_opt(pairs.iter().map(|&(b, t)| improvement(b, t).ok())),
    }
}

/// Groups `(occupation, baseline error, treated error)` rows by status.
pub fn group_report<'a>(
    rows: impl IntoIterator<Item = (&'a str, f64, f64)>,
    table: &OccupationTable,
) -> Result<GroupReport, MetricsError> {
    let mut by_status: [Vec<(f64, f64)>; 3] = Default::default();
    let mut all = Vec::new();
    for (label, b, t) in rows {
        let entry = table.resolve(label)?;
        let idx = Status::ALL.iter().position(|s| *s == entry.status).expect("known status");
        by_status[idx].push((b, t));
        all.push((b, t));
    }
    let groups: Vec<GroupRow> = Status::ALL
        .iter()
        .zip(&by_status)
        .filter(|(_, v)| !v.is_empty())
        .map(|(s, v)| row(s.row_label(), v))
        .collect();
    let group_means: Vec<(f64, f64)> = groups.iter().map(|g| (g.mean_baseline, g.mean_treated)).collect();
    let mut average = row("Average", &group_means);
    average.n = all.len();
    average.mean_improvement = mean_opt(groups.iter().map(|g| g.improvement));
    Ok(GroupReport {
        groups,
        average,
        average_over_prompts: row("Average (all prompts)", &all),
    })
}

/// Baseline vs treated outcome for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRow {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<Status>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub siops: Option<f64>,
    pub baseline: AuditComparison,
    pub treated: AuditComparison,
    pub improvement: Option<f64>,
}

impl PromptRow {
    pub fn new(label: &str, baseline: AuditComparison, treated: AuditComparison, table: &OccupationTable) -> Self {
        let entry = table.lookup(label);
        Self {
            label: label.to_string(),
            status: entry.map(|e| e.status),
            siops: entry.map(|e| e.siops),
            improvement: improvement(baseline.alignment_error, treated.alignment_error).ok(),
            baseline,
            treated,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub scheme: AttributeScheme,
    pub reference: Reference,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub declared_target: Option<DeclaredTarget>,
    pub prompts: Vec<PromptRow>,
    /// Present when at least one prompt is a known occupation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groups: Option<GroupReport>,
    pub created_at: String,
}

impl Report {
    /// Assembles rows and, over the rows that are known occupations, the
    /// status-group summary.
    pub fn build(
        scheme: AttributeScheme,
        reference: Reference,
        declared_target: Option<DeclaredTarget>,
        prompts: Vec<PromptRow>,
        table: &OccupationTable,
    ) -> Result<Self, MetricsError> {
        let occ: Vec<(&str, f64, f64)> = prompts
            .iter()
            .filter(|r| r.status.is_some())
            .map(|r| (r.label.as_str(), r.baseline.alignment_error, r.treated.alignment_error))
            .collect();
        let groups = if occ.is_empty() {
            None
        } else {
            Some(group_report(occ, table)?)
        };
        Ok(Self {
            scheme,
            reference,
            declared_target,
            prompts,
            groups,
            created_at: timestamp_now(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let pct = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_default();
        w.write_record([
            "kind", "label", "status", "siops", "baseline_error", "treated_error", "improvement_pct",
            "mean_improvement_pct", "n_baseline", "n_treated", "discards_baseline", "discards_treated",
        ])
        .expect("in-memory csv");
        for r in &self.prompts {
            w.write_record([
                "prompt".to_string(),
                r.label.clone(),
                r.status.map(|s| format!("{s:?}").to_lowercase()).unwrap_or_default(),
                r.siops.map(|s| s.to_string()).unwrap_or_default(),
                format!("{:.6}", r.baseline.alignment_error),
                format!("{:.6}", r.treated.alignment_error),
                pct(r.improvement),
                String::new(),
                r.baseline.n_images.to_string(),
                r.treated.n_images.to_string(),
                r.baseline.discards.to_string(),
                r.treated.discards.to_string(),
            ])
            .expect("in-memory csv");
        }
        if let Some(g) = &self.groups {
            for row in g.rows() {
                w.write_record([
                    "group".to_string(),
                    row.group.clone(),
                    String::new(),
                    String::new(),
                    format!("{:.6}", row.mean_baseline),
                    format!("{:.6}", row.mean_treated),
                    pct(row.improvement),
                    pct(row.mean_improvement),
                    row.n.to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])
                .expect("in-memory csv");
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }

    /// Aligned plain-text tables for the terminal.
    pub fn to_text(&self) -> String {
        let pct = |x: Option<f64>| x.map(|v| format!("{v:.1}%")).unwrap_or_else(|| "n/a".into());
        let mut out = String::new();
        let reference = match self.reference {
            Reference::DeclaredTarget => "declared target",
            Reference::Uniform => "uniform",
        };
        let _ = writeln!(out, "Alignment error over {} (reference: {reference})", self.scheme);
        let width = self.prompts.iter().map(|r| r.label.len()).chain([6, 22]).max().unwrap_or(22);
        let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>11}  {:>9}", "Prompt", "Baseline", "Treated", "Improvement", "Discards");
        for r in &self.prompts {
            let _ = writeln!(
                out,
                "{:<width$}  {:>9.4}  {:>9.4}  {:>11}  {:>9}",
                r.label,
                r.baseline.alignment_error,
                r.treated.alignment_error,
                pct(r.improvement),
                r.baseline.discards + r.treated.discards
            );
        }
        if let Some(g) = &self.groups {
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<width$}  {:>9}  {:>9}  {:>11}  {:>9}", "Group", "Baseline", "Treated", "Improvement", "Mean impr.");
            for row in g.rows() {
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>9.4}  {:>9.4}  {:>11}  {:>9}",
                    row.group,
                    row.mean_baseline,
                    row.mean_treated,
                    pct(row.improvement),
                    pct(row.mean_improvement)
                );
            }
        }
        out
    }

    /// Long-format per-category frequencies for plotting.
    pub fn histogram_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["prompt", "series", "category", "frequency"]).expect("in-memory csv");
        for r in &self.prompts {
            let series = [
                ("baseline", &r.baseline.observed),
                ("treated", &r.treated.observed),
                ("reference", &r.treated.declared),
            ];
            for (name, d) in series {
                for (label, p) in d.iter() {
                    w.write_record([r.label.as_str(), name, label, &format!("{p:.6}")])
                        .expect("in-memory csv");
                }
            }
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
    }
}
