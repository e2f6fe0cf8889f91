//! Context-scoped demographic proportions from an LLM provider, with a strict
//! response contract, a persistent cache and confidence-based routing.

mod cache;
mod provider;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheme::AttributeScheme;
use crate::target::Distribution;

pub use cache::DemographicCache;
pub use provider::{
    instruction_for, rewrite_prompt, FixtureProvider, LlmProvider, OpenAiChatProvider,
    ProviderConfig, DEFAULT_API_KEY_ENV,
};

pub const DEFAULT_CONFIDENCE_THRESHOLD: f64 = 0.5;
/// Proportions may miss unit sum by at most this much before rejection.
pub const PROPORTION_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DemographicsError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("provider transport error: {0}")]
    Transport(String),
    #[error("provider response violates schema: {0}")]
    Schema(String),
    #[error("provider response violates the confidence contract: {0}")]
    Contract(String),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("cache error: {0}")]
    Cache(String),
}

/// Population the statistics should describe.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Scope {
    Global,
    Us,
    /// Free-text scope passed through to the provider.
    Custom(String),
}

impl From<String> for Scope {
    fn from(s: String) -> Self {
        match s.trim().to_lowercase().as_str() {
            "global" | "" => Scope::Global,
            "us" | "u.s." | "usa" => Scope::Us,
            _ => Scope::Custom(s.trim().to_string()),
        }
    }
}

impl From<Scope> for String {
    fn from(s: Scope) -> Self {
        s.to_string()
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scope::Global => f.write_str("global"),
            Scope::Us => f.write_str("us"),
            Scope::Custom(s) => f.write_str(s),
        }
    }
}

impl Scope {
    /// Wording used in the provider instruction.
    pub fn describe(&self) -> String {
        match self {
            Scope::Global => "the global population".to_string(),
            Scope::Us => "the United States".to_string(),
            Scope::Custom(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicQuery {
    pub concept: String,
    pub scope: Scope,
    pub base_prompt: String,
}

impl DemographicQuery {
    pub fn new(concept: impl Into<String>, scope: Scope, base_prompt: impl Into<String>) -> Result<Self, DemographicsError> {
        let concept = concept.into().trim().to_string();
        if concept.is_empty() {
            return Err(DemographicsError::Query("concept is empty".into()));
        }
        Ok(Self {
            concept,
            scope,
            base_prompt: base_prompt.into(),
        })
    }

    /// Query for `base_prompt` with the concept extracted from it.
    pub fn from_prompt(base_prompt: &str, scope: Scope) -> Result<Self, DemographicsError> {
        if base_prompt.trim().is_empty() {
            return Err(DemographicsError::Query("prompt is empty".into()));
        }
        Self::new(crate::prompts::extract_concept(base_prompt), scope, base_prompt)
    }
}

/// Wire format the provider must return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderResponse {
    pub concept: String,
    pub scope: String,
    pub groups: Vec<GroupShare>,
    pub confidence: f64,
    pub sources: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupShare {
    pub label: String,
    pub proportion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemographicResult {
    pub concept: String,
    pub scope: Scope,
    pub groups: Vec<String>,
    /// `None` exactly when `groups` is empty.
    pub proportions: Option<Distribution>,
    pub confidence: f64,
    pub sources: Vec<String>,
    pub raw_response: String,
}

impl DemographicResult {
    pub fn has_data(&self) -> bool {
        !self.groups.is_empty()
    }
}

/// Strips a surrounding Markdown code fence, which chat models often add.
fn unfence(raw: &str) -> &str {
    let t = raw.trim();
    let Some(rest) = t.strip_prefix("```") else {
        return t;
    };
    let rest = rest.strip_prefix("json").unwrap_or(rest);
    rest.strip_suffix("```").unwrap_or(rest).trim()
}

/// Validates a raw provider response against the schema and the confidence
/// contract. Groups become a demographic scheme named after the concept.
pub fn parse_response(query: &DemographicQuery, raw: &str) -> Result<DemographicResult, DemographicsError> {
    let resp: ProviderResponse =
        serde_json::from_str(unfence(raw)).map_err(|e| DemographicsError::Schema(e.to_string()))?;
    if !resp.confidence.is_finite() || !(0.0..=1.0).contains(&resp.confidence) {
        return Err(DemographicsError::Schema(format!(
            "confidence {} outside [0, 1]",
            resp.confidence
        )));
    }
    let mut seen = HashSet::new();
    for g in &resp.groups {
        if g.label.trim().is_empty() {
            return Err(DemographicsError::Schema("empty group label".into()));
        }
        if !seen.insert(g.label.as_str()) {
            return Err(DemographicsError::Schema(format!("duplicate group {:?}", g.label)));
        }
        if !g.proportion.is_finite() || !(0.0..=1.0).contains(&g.proportion) {
            return Err(DemographicsError::Schema(format!(
                "proportion {} for {:?} outside [0, 1]",
                g.proportion, g.label
            )));
        }
    }
    if resp.confidence == 0.0 && !resp.groups.is_empty() {
        return Err(DemographicsError::Contract(
            "confidence 0.0 must come with no demographic groups".into(),
        ));
    }
    let proportions = if resp.groups.is_empty() {
        None
    } else {
        let sum: f64 = resp.groups.iter().map(|g| g.proportion).sum();
        if (sum - 1.0).abs() > PROPORTION_SUM_TOLERANCE {
            return Err(DemographicsError::Schema(format!("proportions sum to {sum}, not 1")));
        }
        let scheme = AttributeScheme::demographic(
            resp.concept.trim().to_string(),
            resp.groups.iter().map(|g| g.label.clone()),
        )
        .map_err(|e| DemographicsError::Schema(e.to_string()))?;
        let probs = resp.groups.iter().map(|g| g.proportion).collect();
        Some(Distribution::normalized(scheme, probs).map_err(|e| DemographicsError::Schema(e.to_string()))?)
    };
    Ok(DemographicResult {
        concept: query.concept.clone(),
        scope: query.scope.clone(),
        groups: resp.groups.into_iter().map(|g| g.label).collect(),
        proportions,
        confidence: resp.confidence,
        sources: resp.sources,
        raw_response: raw.to_string(),
    })
}

/// One uncached provider round trip.
pub fn retrieve_demographics(
    query: &DemographicQuery,
    provider: &dyn LlmProvider,
) -> Result<DemographicResult, DemographicsError> {
    let raw = provider.complete(&instruction_for(query))?;
    parse_response(query, &raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FallbackReason {
    NoData,
    LowConfidence,
    UserForced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum RoutingOutcome {
    UseDemographics { result: DemographicResult },
    UseFallback { reason: FallbackReason },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    #[serde(flatten)]
    pub outcome: RoutingOutcome,
    pub threshold: f64,
}

impl RoutingDecision {
    pub fn fallback_reason(&self) -> Option<FallbackReason> {
        match self.outcome {
            RoutingOutcome::UseFallback { reason } => Some(reason),
            RoutingOutcome::UseDemographics { .. } => None,
        }
    }

    pub fn demographics(&self) -> Option<&DemographicResult> {
        match &self.outcome {
            RoutingOutcome::UseDemographics { result } => Some(result),
            RoutingOutcome::UseFallback { .. } => None,
        }
    }
}

/// Decides between retrieved demographics and the fallback target.
/// A user-forced fallback wins over everything else.
pub fn route(result: &DemographicResult, threshold: f64, user_forced_fallback: bool) -> RoutingDecision {
    let threshold = threshold.clamp(0.0, 1.0);
    let outcome = if user_forced_fallback {
        RoutingOutcome::UseFallback {
            reason: FallbackReason::UserForced,
        }
    } else if !result.has_data() || result.confidence == 0.0 {
        RoutingOutcome::UseFallback {
            reason: FallbackReason::NoData,
        }
    } else if result.confidence < threshold {
        RoutingOutcome::UseFallback {
            reason: FallbackReason::LowConfidence,
        }
    } else {
        RoutingOutcome::UseDemographics { result: result.clone() }
    };
    RoutingDecision { outcome, threshold }
}

/// What the plan records about retrieval: the query, the provider's answer
/// verbatim, and the routing decision taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalLog {
    pub query: DemographicQuery,
    pub provider: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<DemographicResult>,
    pub routing: RoutingSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingSummary {
    pub use_demographics: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<FallbackReason>,
    pub threshold: f64,
}

impl From<&RoutingDecision> for RoutingSummary {
    fn from(d: &RoutingDecision) -> Self {
        Self {
            use_demographics: d.demographics().is_some(),
            reason: d.fallback_reason(),
            threshold: d.threshold,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn query(concept: &str) -> DemographicQuery {
        DemographicQuery::new(concept, Scope::Us, format!("A full-color headshot of a {concept}")).unwrap()
    }

    fn raw(groups: serde_json::Value, confidence: f64) -> String {
        json!({"concept": "doctor", "scope": "us", "groups": groups, "confidence": confidence, "sources": ["AAMC 2022"]})
            .to_string()
    }

    fn doctor_raw() -> String {
        raw(
            json!([
                {"label": "White", "proportion": 0.56},
                {"label": "Black or African American", "proportion": 0.06},
                {"label": "Asian", "proportion": 0.19},
                {"label": "Other", "proportion": 0.19}
            ]),
            0.9,
        )
    }

    #[test]
    fn parses_and_keeps_other_bucket() {
        let r = parse_response(&query("doctor"), &doctor_raw()).unwrap();
        assert_eq!(r.groups.len(), 4);
        assert_eq!(r.groups[3], "Other");
        assert_eq!(r.sources, vec!["AAMC 2022"]);
        assert_eq!(r.raw_response, doctor_raw());
        let p = r.proportions.unwrap();
        assert!((p.prob("Asian").unwrap() - 0.19).abs() < 1e-12);
    }

    #[test]
    fn sum_off_by_more_than_tolerance_is_schema_violation() {
        let bad = raw(json!([{"label": "A", "proportion": 0.5}, {"label": "B", "proportion": 0.3}]), 0.8);
        assert!(matches!(parse_response(&query("doctor"), &bad), Err(DemographicsError::Schema(_))));
        let close = raw(json!([{"label": "A", "proportion": 0.5}, {"label": "B", "proportion": 0.5000005}]), 0.8);
        assert!(parse_response(&query("doctor"), &close).is_ok());
    }

    #[test]
    fn schema_and_contract_violations_are_distinct() {
        let q = query("doctor");
        assert!(matches!(parse_response(&q, "not json"), Err(DemographicsError::Schema(_))));
        let extra = r#"{"concept":"x","scope":"us","groups":[],"confidence":0.0,"sources":[],"note":1}"#;
        assert!(matches!(parse_response(&q, extra), Err(DemographicsError::Schema(_))));
        let over = raw(json!([]), 1.5);
        assert!(matches!(parse_response(&q, &over), Err(DemographicsError::Schema(_))));
        let zero_with_groups = raw(json!([{"label": "A", "proportion": 1.0}]), 0.0);
        assert!(matches!(parse_response(&q, &zero_with_groups), Err(DemographicsError::Contract(_))));
        let dup = raw(json!([{"label": "A", "proportion": 0.5}, {"label": "A", "proportion": 0.5}]), 0.5);
        assert!(matches!(parse_response(&q, &dup), Err(DemographicsError::Schema(_))));
    }

    #[test]
    fn fenced_response_is_accepted() {
        let fenced = format!("```json\n{}\n```", doctor_raw());
        assert!(parse_response(&query("doctor"), &fenced).is_ok());
    }

    #[test]
    fn routing() {
        let q = query("doctor");
        let good = parse_response(&q, &doctor_raw()).unwrap();
        assert!(route(&good, 0.5, false).demographics().is_some());
        assert_eq!(route(&good, 0.5, true).fallback_reason(), Some(FallbackReason::UserForced));

        let none = parse_response(&q, &raw(json!([]), 0.0)).unwrap();
        assert_eq!(route(&none, 0.5, false).fallback_reason(), Some(FallbackReason::NoData));

        let mut low = good.clone();
        low.confidence = 0.4;
        assert_eq!(route(&low, 0.5, false).fallback_reason(), Some(FallbackReason::LowConfidence));
        low.confidence = 0.5;
        assert!(route(&low, 0.5, false).demographics().is_some());
    }

    #[test]
    fn scope_round_trip() {
        for (s, scope) in [("global", Scope::Global), ("us", Scope::Us), ("rural Kenya", Scope::Custom("rural Kenya".into()))] {
            let parsed: Scope = serde_json::from_value(json!(s)).unwrap();
            assert_eq!(parsed, scope);
            assert_eq!(serde_json::to_value(&scope).unwrap(), json!(s));
        }
    }

    #[test]
    fn query_from_prompt() {
        let q = DemographicQuery::from_prompt("A full-color headshot of a doctor", Scope::Us).unwrap();
        assert_eq!(q.concept, "doctor");
        assert!(DemographicQuery::from_prompt("  ", Scope::Us).is_err());
    }
}
