//! Ordered attribute schemes: the category sets distributions are defined over.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::target::TargetError;

/// What a scheme's categories describe. Drives prompt phrasing and which
/// operations (binning, Monk mapping) apply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    SkinToneFitzpatrick,
    SkinToneBins3,
    SkinToneMonk,
    DemographicLabels,
    Custom,
}

impl SchemeKind {
    pub fn is_skin_tone(self) -> bool {
        matches!(
            self,
            SchemeKind::SkinToneFitzpatrick | SchemeKind::SkinToneBins3 | SchemeKind::SkinToneMonk
        )
    }
}

/// A named, ordered, non-empty set of unique category labels.
///
/// Order is significant: it fixes the layout of every [`Distribution`](crate::Distribution)
/// over the scheme and is used for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemeRepr")]
pub struct AttributeScheme {
    name: String,
    kind: SchemeKind,
    labels: Vec<String>,
}

#[derive(Deserialize)]
struct SchemeRepr {
    name: String,
    kind: SchemeKind,
    labels: Vec<String>,
}

impl TryFrom<SchemeRepr> for AttributeScheme {
    type Error = TargetError;

    fn try_from(r: SchemeRepr) -> Result<Self, Self::Error> {
        AttributeScheme::new(r.name, r.kind, r.labels)
    }
}

pub const FITZPATRICK_LABELS: [&str; 6] = ["I", "II", "III", "IV", "V", "VI"];
pub const BIN3_LABELS: [&str; 3] = ["Light", "Medium", "Dark"];

impl AttributeScheme {
    pub fn new<S: Into<String>>(
        name: impl Into<String>,
        kind: SchemeKind,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self, TargetError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(TargetError::EmptyScheme);
        }
        let mut seen = HashSet::with_capacity(labels.len());
        for label in &labels {
            if label.trim().is_empty() {
                return Err(TargetError::EmptyLabel);
            }
            if !seen.insert(label.as_str()) {
                return Err(TargetError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            kind,
            labels,
        })
    }

    /// Fitzpatrick types I–VI.
    pub fn fitzpatrick() -> Self {
        Self::new("fitzpatrick", SchemeKind::SkinToneFitzpatrick, FITZPATRICK_LABELS)
            .expect("static scheme")
    }

    /// Light (I–II), Medium (III–IV), Dark (V–VI).
    pub fn bins3() -> Self {
        Self::new("bins3", SchemeKind::SkinToneBins3, BIN3_LABELS).expect("static scheme")
    }

    /// Monk Skin Tone scale, MST-1 (lightest) to MST-10.
    pub fn monk() -> Self {
        Self::new(
            "monk",
            SchemeKind::SkinToneMonk,
            (1..=10).map(|i| format!("MST-{i}")),
        )
        .expect("static scheme")
    }

    /// Race/ethnicity or other group labels returned by a demographic provider.
    pub fn demographic<S: Into<String>>(
        name: impl Into<String>,
        labels: impl IntoIterator<Item = S>,
    ) -> Result<Self, TargetError> {
        Self::new(name, SchemeKind::DemographicLabels, labels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> SchemeKind {
        self.kind
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.index_of(label).is_some()
    }

    /// Two schemes are interchangeable for arithmetic when their ordered labels agree.
    pub fn same_categories(&self, other: &AttributeScheme) -> bool {
        self.labels == other.labels
    }

    pub fn is_fitzpatrick(&self) -> bool {
        self.kind == SchemeKind::SkinToneFitzpatrick && self.labels.len() == 6
    }
}

impl fmt::Display for AttributeScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]", self.name, self.labels.join(", "))
    }
}

/// Fitzpatrick skin phototype, I (lightest) through VI (darkest).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FitzpatrickType {
    I,
    II,
    III,
    IV,
    V,
    VI,
}

impl FitzpatrickType {
    pub const ALL: [FitzpatrickType; 6] = [
        FitzpatrickType::I,
        FitzpatrickType::II,
        FitzpatrickType::III,
        FitzpatrickType::IV,
        FitzpatrickType::V,
        FitzpatrickType::VI,
    ];

    /// Zero-based position in [`AttributeScheme::fitzpatrick`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn label(self) -> &'static str {
        FITZPATRICK_LABELS[self.index()]
    }

    pub fn from_label(label: &str) -> Option<Self> {
        FITZPATRICK_LABELS
            .iter()
            .position(|l| *l == label)
            .and_then(Self::from_index)
    }

    /// Light / Medium / Dark bin index.
    pub fn bin3(self) -> usize {
        self.index() / 2
    }
}

impl fmt::Display for FitzpatrickType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}
