//! Probability distributions over attribute schemes and the declared-target
//! constructors (uniform, intermediate, extreme, fallback, explicit).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scheme::AttributeScheme;

/// Maximum allowed deviation of Σp from 1.
pub const UNIT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TargetError {
    #[error("attribute scheme has no categories")]
    EmptyScheme,
    #[error("attribute scheme has an empty label")]
    EmptyLabel,
    #[error("duplicate category label {0:?}")]
    DuplicateLabel(String),
    #[error("expected {expected} probabilities, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probability for {label:?} is {value}, must be finite and non-negative")]
    InvalidProbability { label: String, value: f64 },
    #[error("probabilities sum to {sum}, expected 1 (tolerance {UNIT_SUM_TOLERANCE})")]
    NotNormalized { sum: f64 },
    #[error("weights sum to zero and cannot be normalized")]
    ZeroMass,
    #[error("alpha {alpha} outside {range}")]
    AlphaOutOfRange { alpha: f64, range: &'static str },
    #[error("category {0:?} is not in the scheme")]
    UnknownCategory(String),
    #[error("reference distribution puts all mass on focal group {focal:?}; extreme target with alpha < 1 is undefined")]
    DegenerateReference { focal: String },
    #[error("scheme mismatch: expected {expected}, found {found}")]
    SchemeMismatch { expected: String, found: String },
    #[error("operation requires the six-type Fitzpatrick scheme, got {0}")]
    NotFitzpatrick(String),
    #[error("{0} target requires a reference distribution")]
    MissingReference(&'static str),
}

/// Probabilities over the categories of an [`AttributeScheme`].
///
/// Every value is finite and non-negative and the total is 1 within
/// [`UNIT_SUM_TOLERANCE`]. Construction never renormalizes silently; use
/// [`Distribution::normalized`] when rescaling is wanted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionRepr")]
pub struct Distribution {
    scheme: AttributeScheme,
    probs: Vec<f64>,
}

#[derive(Deserialize)]
struct DistributionRepr {
    scheme: AttributeScheme,
    probs: Vec<f64>,
}

impl TryFrom<DistributionRepr> for Distribution {
    type Error = TargetError;

    fn try_from(r: DistributionRepr) -> Result<Self, Self::Error> {
        Distribution::new(r.scheme, r.probs)
    }
}

fn check_weights(scheme: &AttributeScheme, probs: &[f64]) -> Result<(), TargetError> {
    if probs.len() != scheme.len() {
        return Err(TargetError::LengthMismatch {
            expected: scheme.len(),
            got: probs.len(),
        });
    }
    for (label, &p) in scheme.labels().iter().zip(probs) {
        if !p.is_finite() || p < 0.0 {
            return Err(TargetError::InvalidProbability {
                label: label.clone(),
                value: p,
            });
        }
    }
    Ok(())
}

impl Distribution {
    pub fn new(scheme: AttributeScheme, probs: Vec<f64>) -> Result<Self, TargetError> {
        check_weights(&scheme, &probs)?;
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > UNIT_SUM_TOLERANCE {
            return Err(TargetError::NotNormalized { sum });
        }
        Ok(Self { scheme, probs })
    }

    /// Rescales non-negative weights to unit mass. Only for explicit user requests.
    pub fn normalized(scheme: AttributeScheme, weights: Vec<f64>) -> Result<Self, TargetError> {
        check_weights(&scheme, &weights)?;
        let sum: f64 = weights.iter().sum();
        if sum <= 0.0 {
            return Err(TargetError::ZeroMass);
        }
        let probs = weights.into_iter().map(|w| w / sum).collect();
        Self::new(scheme, probs)
    }

    /// All mass on one category.
    pub fn one_hot(scheme: AttributeScheme, label: &str) -> Result<Self, TargetError> {
        let idx = scheme
            .index_of(label)
            .ok_or_else(|| TargetError::UnknownCategory(label.to_string()))?;
        let mut probs = vec![0.0; scheme.len()];
        probs[idx] = 1.0;
        Self::new(scheme, probs)
    }

    /// Empirical frequencies from per-category counts.
    pub fn from_counts(scheme: AttributeScheme, counts: &[usize]) -> Result<Self, TargetError> {
        let weights = counts.iter().map(|&c| c as f64).collect();
        Self::normalized(scheme, weights)
    }

    pub fn scheme(&self) -> &AttributeScheme {
        &self.scheme
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn prob(&self, label: &str) -> Option<f64> {
        self.scheme.index_of(label).map(|i| self.probs[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.scheme
            .labels()
            .iter()
            .map(String::as_str)
            .zip(self.probs.iter().copied())
    }

    pub fn ensure_same_scheme(&self, other: &Distribution) -> Result<(), TargetError> {
        if self.scheme.same_categories(&other.scheme) {
            Ok(())
        } else {
            Err(TargetError::SchemeMismatch {
                expected: self.scheme.to_string(),
                found: other.scheme.to_string(),
            })
        }
    }

    /// `alpha·self + (1−alpha)·other`, for `alpha` in `[0, 1]`.
    pub fn mix(&self, other: &Distribution, alpha: f64) -> Result<Distribution, TargetError> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(TargetError::AlphaOutOfRange {
                alpha,
                range: "[0, 1]",
            });
        }
        self.ensure_same_scheme(other)?;
        let probs = self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| alpha * a + (1.0 - alpha) * b)
            .collect();
        Distribution::new(self.scheme.clone(), probs)
    }

    /// Reorders nothing; relabels onto an equivalent scheme (same ordered labels).
    pub fn with_scheme(&self, scheme: AttributeScheme) -> Result<Distribution, TargetError> {
        if !self.scheme.same_categories(&scheme) {
            return Err(TargetError::SchemeMismatch {
                expected: scheme.to_string(),
                found: self.scheme.to_string(),
            });
        }
        Distribution::new(scheme, self.probs.clone())
    }
}

/// Equal weight on every category.
pub fn uniform_target(scheme: &AttributeScheme) -> Distribution {
    let m = scheme.len();
    // m ≥ 1 is a scheme invariant, so the sum is 1 up to rounding.
    Distribution {
        scheme: scheme.clone(),
        probs: vec![1.0 / m as f64; m],
    }
}

/// Convex mixture `alpha·r + (1−alpha)·uniform`.
///
/// Accepts the closed interval `[0, 1]`; the endpoints collapse to uniform and
/// to `r`. [`TargetSetting::Intermediate`] enforces the open interval.
pub fn intermediate_target(r: &Distribution, alpha: f64) -> Result<Distribution, TargetError> {
    if !(0.0..=1.0).contains(&alpha) || alpha.is_nan() {
        return Err(TargetError::AlphaOutOfRange {
            alpha,
            range: "[0, 1]",
        });
    }
    r.mix(&uniform_target(r.scheme()), alpha)
}

/// Concentrates `alpha` on `focal`; the remaining mass follows the reference
/// `s` renormalized over the other groups.
pub fn extreme_target(s: &Distribution, focal: &str, alpha: f64) -> Result<Distribution, TargetError> {
    if !(alpha > 0.5 && alpha <= 1.0) {
        return Err(TargetError::AlphaOutOfRange {
            alpha,
            range: "(0.5, 1]",
        });
    }
    let focal_idx = s
        .scheme()
        .index_of(focal)
        .ok_or_else(|| TargetError::UnknownCategory(focal.to_string()))?;
    let s_focal = s.probs()[focal_idx];
    let rest = 1.0 - s_focal;
    if alpha == 1.0 {
        return Distribution::one_hot(s.scheme().clone(), focal);
    }
    if rest <= UNIT_SUM_TOLERANCE {
        return Err(TargetError::DegenerateReference {
            focal: focal.to_string(),
        });
    }
    let probs = s
        .probs()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if i == focal_idx {
                alpha
            } else {
                (1.0 - alpha) * p / rest
            }
        })
        .collect();
    Distribution::new(s.scheme().clone(), probs)
}

/// The user override when given, otherwise uniform over Fitzpatrick I–VI.
pub fn fallback_target(override_dist: Option<&Distribution>) -> Result<Distribution, TargetError> {
    match override_dist {
        // Re-validate: the override may have been built by hand.
        Some(d) => Distribution::new(d.scheme().clone(), d.probs().to_vec()),
        None => Ok(uniform_target(&AttributeScheme::fitzpatrick())),
    }
}

/// Label with maximal probability; ties go to the lowest category index.
pub fn majority_group(r: &Distribution) -> &str {
    let mut best = 0;
    for (i, &p) in r.probs().iter().enumerate() {
        if p > r.probs()[best] {
            best = i;
        }
    }
    &r.scheme().labels()[best]
}

/// Smallest non-zero group among the `k` most probable groups. Candidate focal
/// group for a non-majority extreme target; `k` is the caller's choice.
pub fn smallest_nonzero_in_top_k(r: &Distribution, k: usize) -> Option<&str> {
    let mut order: Vec<usize> = (0..r.len()).collect();
    // Stable sort keeps index order among equal probabilities.
    order.sort_by(|&a, &b| r.probs()[b].total_cmp(&r.probs()[a]));
    order
        .into_iter()
        .take(k)
        .filter(|&i| r.probs()[i] > 0.0)
        .min_by(|&a, &b| r.probs()[a].total_cmp(&r.probs()[b]).then(b.cmp(&a)))
        .map(|i| r.scheme().labels()[i].as_str())
}

/// Sums Fitzpatrick pairs into Light (I+II), Medium (III+IV), Dark (V+VI).
pub fn aggregate_to_bins(d: &Distribution) -> Result<Distribution, TargetError> {
    if !d.scheme().is_fitzpatrick() {
        return Err(TargetError::NotFitzpatrick(d.scheme().to_string()));
    }
    let p = d.probs();
    Distribution::new(
        AttributeScheme::bins3(),
        vec![p[0] + p[1], p[2] + p[3], p[4] + p[5]],
    )
}

/// Which declared target a run uses. Serialized with a `variant` tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum TargetSetting {
    Uniform,
    Intermediate {
        alpha: f64,
    },
    Extreme {
        focal: String,
        alpha: f64,
    },
    Explicit {
        distribution: Distribution,
    },
    Fallback {
        #[serde(rename = "override", default, skip_serializing_if = "Option::is_none")]
        fallback_override: Option<Distribution>,
    },
}

impl TargetSetting {
    pub const DEFAULT_INTERMEDIATE_ALPHA: f64 = 0.5;

    pub fn name(&self) -> &'static str {
        match self {
            TargetSetting::Uniform => "uniform",
            TargetSetting::Intermediate { .. } => "intermediate",
            TargetSetting::Extreme { .. } => "extreme",
            TargetSetting::Explicit { .. } => "explicit",
            TargetSetting::Fallback { .. } => "fallback",
        }
    }

    pub fn validate(&self) -> Result<(), TargetError> {
        match self {
            TargetSetting::Intermediate { alpha } if !(*alpha > 0.0 && *alpha < 1.0) => {
                Err(TargetError::AlphaOutOfRange {
                    alpha: *alpha,
                    range: "(0, 1)",
                })
            }
            TargetSetting::Extreme { alpha, .. } if !(*alpha > 0.5 && *alpha <= 1.0) => {
                Err(TargetError::AlphaOutOfRange {
                    alpha: *alpha,
                    range: "(0.5, 1]",
                })
            }
            _ => Ok(()),
        }
    }

    /// Resolves the setting to a concrete distribution.
    ///
    /// `scheme` is the scheme for uniform targets and the one an extreme focal
    /// label is checked against; `reference` is the LLM distribution `r`
    /// (required for intermediate, optional for extreme where it defaults to
    /// uniform). Explicit and fallback targets carry their own scheme.
    pub fn resolve(
        &self,
        scheme: &AttributeScheme,
        reference: Option<&Distribution>,
    ) -> Result<Distribution, TargetError> {
        self.validate()?;
        let check_ref = |r: &Distribution| -> Result<(), TargetError> {
            if r.scheme().same_categories(scheme) {
                Ok(())
            } else {
                Err(TargetError::SchemeMismatch {
                    expected: scheme.to_string(),
                    found: r.scheme().to_string(),
                })
            }
        };
        match self {
            TargetSetting::Uniform => Ok(uniform_target(scheme)),
            TargetSetting::Intermediate { alpha } => {
                let r = reference.ok_or(TargetError::MissingReference("intermediate"))?;
                check_ref(r)?;
                intermediate_target(r, *alpha)
            }
            TargetSetting::Extreme { focal, alpha } => {
                if !scheme.contains(focal) {
                    return Err(TargetError::UnknownCategory(focal.clone()));
                }
                let uniform;
                let s = match reference {
                    Some(r) => {
                        check_ref(r)?;
                        r
                    }
                    None => {
                        uniform = uniform_target(scheme);
                        &uniform
                    }
                };
                extreme_target(s, focal, *alpha)
            }
            TargetSetting::Explicit { distribution } => {
                Distribution::new(distribution.scheme().clone(), distribution.probs().to_vec())
            }
            TargetSetting::Fallback { fallback_override } => {
                fallback_target(fallback_override.as_ref())
            }
        }
    }

    /// True when the resolved distribution lives in skin-tone space, so
    /// alignment error against observed skin tone is meaningful.
    pub fn is_skin_tone_space(&self, scheme: &AttributeScheme) -> bool {
        match self {
            TargetSetting::Explicit { distribution } => distribution.scheme().kind().is_skin_tone(),
            TargetSetting::Fallback { fallback_override } => fallback_override
                .as_ref()
                .map(|d| d.scheme().kind().is_skin_tone())
                .unwrap_or(true),
            _ => scheme.kind().is_skin_tone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn groups(n: usize) -> AttributeScheme {
        AttributeScheme::demographic("g", (1..=n).map(|i| format!("g{i}"))).unwrap()
    }

    fn dist(probs: &[f64]) -> Distribution {
        Distribution::new(groups(probs.len()), probs.to_vec()).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn uniform_examples() {
        close(uniform_target(&groups(4)).probs(), &[0.25; 4], 0.0);
        close(
            uniform_target(&AttributeScheme::bins3()).probs(),
            &[1.0 / 3.0; 3],
            1e-15,
        );
        close(uniform_target(&groups(1)).probs(), &[1.0], 0.0);
    }

    #[test]
    fn intermediate_examples() {
        let r = dist(&[0.7, 0.2, 0.1]);
        // α·r + (1−α)/m by hand: 0.35+1/6, 0.1+1/6, 0.05+1/6
        close(
            intermediate_target(&r, 0.5).unwrap().probs(),
            &[0.516_666_666_666_666_7, 0.266_666_666_666_666_7, 0.216_666_666_666_666_7],
            1e-12,
        );
        close(intermediate_target(&r, 0.0).unwrap().probs(), &[1.0 / 3.0; 3], 1e-15);
        close(intermediate_target(&r, 1.0).unwrap().probs(), &[0.7, 0.2, 0.1], 1e-15);
        assert!(intermediate_target(&r, 1.2).is_err());
        assert!(intermediate_target(&r, -0.1).is_err());
    }

    #[test]
    fn intermediate_keeps_full_support() {
        let r = dist(&[1.0, 0.0, 0.0]);
        let q = intermediate_target(&r, 0.5).unwrap();
        assert!(q.probs().iter().all(|&p| p > 0.0));
    }

    #[test]
    fn extreme_examples() {
        let s = dist(&[0.6, 0.3, 0.1]);
        close(extreme_target(&s, "g1", 0.8).unwrap().probs(), &[0.8, 0.15, 0.05], 1e-12);
        close(extreme_target(&s, "g2", 1.0).unwrap().probs(), &[0.0, 1.0, 0.0], 0.0);
        assert!(matches!(
            extreme_target(&s, "g9", 0.8),
            Err(TargetError::UnknownCategory(_))
        ));
        assert!(matches!(
            extreme_target(&s, "g1", 0.5),
            Err(TargetError::AlphaOutOfRange { .. })
        ));
        let degenerate = dist(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            extreme_target(&degenerate, "g1", 0.9),
            Err(TargetError::DegenerateReference { .. })
        ));
        assert!(extreme_target(&degenerate, "g1", 1.0).is_ok());
    }

    #[test]
    fn extreme_reproduces_stress_test_target() {
        let scheme =
            AttributeScheme::demographic("race", ["Black", "Indian", "White", "Asian"]).unwrap();
        let s = Distribution::new(scheme.clone(), vec![0.2, 0.4, 0.2, 0.2]).unwrap();
        let q = extreme_target(&s, "Black", 0.8).unwrap();
        close(q.probs(), &[0.80, 0.10, 0.05, 0.05], 1e-12);
        let explicit = TargetSetting::Explicit {
            distribution: Distribution::new(scheme.clone(), vec![0.80, 0.10, 0.05, 0.05]).unwrap(),
        };
        close(explicit.resolve(&scheme, None).unwrap().probs(), q.probs(), 1e-12);
    }

    #[test]
    fn fallback_examples() {
        let q = fallback_target(None).unwrap();
        assert!(q.scheme().is_fitzpatrick());
        close(q.probs(), &[1.0 / 6.0; 6], 1e-15);
        let o = Distribution::new(
            AttributeScheme::fitzpatrick(),
            vec![0.5, 0.1, 0.1, 0.1, 0.1, 0.1],
        )
        .unwrap();
        assert_eq!(fallback_target(Some(&o)).unwrap(), o);
        assert!(matches!(
            Distribution::new(AttributeScheme::fitzpatrick(), vec![0.4, 0.1, 0.1, 0.1, 0.1, 0.1]),
            Err(TargetError::NotNormalized { .. })
        ));
    }

    #[test]
    fn majority_tie_breaks_by_index() {
        assert_eq!(majority_group(&dist(&[0.7, 0.2, 0.1])), "g1");
        assert_eq!(majority_group(&dist(&[0.4, 0.4, 0.2])), "g1");
        assert_eq!(majority_group(&dist(&[1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0])), "g1");
        assert_eq!(majority_group(&dist(&[0.1, 0.45, 0.45])), "g2");
    }

    #[test]
    fn smallest_in_top_k() {
        let r = dist(&[0.5, 0.3, 0.15, 0.05, 0.0]);
        assert_eq!(smallest_nonzero_in_top_k(&r, 2), Some("g2"));
        assert_eq!(smallest_nonzero_in_top_k(&r, 5), Some("g4"));
        assert_eq!(smallest_nonzero_in_top_k(&r, 0), None);
    }

    #[test]
    fn aggregate_examples() {
        let fitz = AttributeScheme::fitzpatrick();
        let u = uniform_target(&fitz);
        close(aggregate_to_bins(&u).unwrap().probs(), &[1.0 / 3.0; 3], 1e-15);
        let d = Distribution::new(fitz.clone(), vec![0.1, 0.2, 0.15, 0.15, 0.2, 0.2]).unwrap();
        close(aggregate_to_bins(&d).unwrap().probs(), &[0.3, 0.3, 0.4], 1e-15);
        let one = Distribution::one_hot(fitz, "I").unwrap();
        close(aggregate_to_bins(&one).unwrap().probs(), &[1.0, 0.0, 0.0], 0.0);
        assert!(matches!(
            aggregate_to_bins(&dist(&[0.5, 0.5])),
            Err(TargetError::NotFitzpatrick(_))
        ));
    }

    #[test]
    fn setting_resolution_and_validation() {
        let scheme = groups(3);
        let r = dist(&[0.7, 0.2, 0.1]);
        assert!(TargetSetting::Intermediate { alpha: 1.0 }.validate().is_err());
        assert!(matches!(
            TargetSetting::Intermediate { alpha: 0.5 }.resolve(&scheme, None),
            Err(TargetError::MissingReference(_))
        ));
        let ext = TargetSetting::Extreme {
            focal: "g3".into(),
            alpha: 0.9,
        };
        // uniform reference by default
        close(ext.resolve(&scheme, None).unwrap().probs(), &[0.05, 0.05, 0.9], 1e-12);
        close(
            ext.resolve(&scheme, Some(&r)).unwrap().probs(),
            &[0.1 * 0.7 / 0.9, 0.1 * 0.2 / 0.9, 0.9],
            1e-12,
        );
        assert!(TargetSetting::Extreme {
            focal: "nope".into(),
            alpha: 0.9
        }
        .resolve(&scheme, None)
        .is_err());
    }

    #[test]
    fn json_form() {
        let setting = TargetSetting::Extreme {
            focal: "VI".into(),
            alpha: 1.0,
        };
        let v = serde_json::to_value(&setting).unwrap();
        assert_eq!(v["variant"], "extreme");
        assert_eq!(v["focal"], "VI");
        let fb: TargetSetting = serde_json::from_str(r#"{"variant":"fallback"}"#).unwrap();
        assert_eq!(
            fb,
            TargetSetting::Fallback {
                fallback_override: None
            }
        );
        let d = uniform_target(&AttributeScheme::bins3());
        let v = serde_json::to_value(&d).unwrap();
        assert_eq!(v["scheme"]["labels"][0], "Light");
        let bad = r#"{"scheme":{"name":"bins3","kind":"skin_tone_bins3","labels":["Light","Medium","Dark"]},"probs":[0.5,0.3,0.1]}"#;
        assert!(serde_json::from_str::<Distribution>(bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn weights() -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.001f64..1.0, 2..12)
        }

        fn dist(w: Vec<f64>) -> Distribution {
            Distribution::normalized(groups(w.len()), w).unwrap()
        }

        fn sums_to_one(d: &Distribution) -> bool {
            (d.probs().iter().sum::<f64>() - 1.0).abs() <= UNIT_SUM_TOLERANCE && d.probs().iter().all(|p| *p >= 0.0)
        }

        proptest! {
            #[test]
            fn constructed_targets_are_distributions(w in weights(), alpha in 0.001f64..0.999, ext in 0.501f64..=1.0, pick in 0usize..12) {
                let r = dist(w);
                let focal = r.scheme().labels()[pick % r.len()].clone();
                prop_assert!(sums_to_one(&uniform_target(r.scheme())));
                prop_assert!(sums_to_one(&intermediate_target(&r, alpha).unwrap()));
                let e = extreme_target(&r, &focal, ext).unwrap();
                prop_assert!(sums_to_one(&e));
                prop_assert!((e.prob(&focal).unwrap() - ext).abs() < 1e-12);
            }

            #[test]
            fn mix_is_convex(a in weights(), alpha in 0.0f64..=1.0) {
                let a = dist(a);
                let u = uniform_target(a.scheme());
                let m = a.mix(&u, alpha).unwrap();
                prop_assert!(sums_to_one(&m));
                for ((x, y), z) in a.probs().iter().zip(u.probs()).zip(m.probs()) {
                    prop_assert!(*z >= x.min(*y) - 1e-15 && *z <= x.max(*y) + 1e-15);
                }
            }

            #[test]
            fn bins_preserve_mass(w in prop::collection::vec(0.001f64..1.0, 6)) {
                let d = Distribution::normalized(AttributeScheme::fitzpatrick(), w).unwrap();
                let b = aggregate_to_bins(&d).unwrap();
                prop_assert!(sums_to_one(&b));
                prop_assert!((b.probs()[0] - d.probs()[0] - d.probs()[1]).abs() < 1e-15);
            }
        }
    }
}
