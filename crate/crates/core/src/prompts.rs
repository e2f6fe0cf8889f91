//! Subgroup prompt variants and the per-run generation plan.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::allocate::{allocate, AllocEntry, AllocationPlan};
use crate::artifact::timestamp_now;
use crate::demographics::RetrievalLog;
use crate::scheme::{AttributeScheme, SchemeKind};
use crate::target::{Distribution, TargetSetting};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("category {category:?} is not in scheme {scheme}")]
    UnknownCategory { category: String, scheme: String },
    #[error("no descriptor for category {category:?} of {kind:?} scheme")]
    MissingDescriptor { category: String, kind: SchemeKind },
    #[error("base prompt is empty")]
    EmptyPrompt,
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
}

/// Controlled vocabulary for skin-tone phrasing, `"<base> with <descriptor> skin"`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptVocabulary {
    pub fitzpatrick: [String; 6],
    pub bins3: [String; 3],
    pub monk: [String; 10],
}

impl Default for PromptVocabulary {
    fn default() -> Self {
        Self {
            fitzpatrick: ["very light", "light", "medium", "olive", "brown", "dark"].map(String::from),
            bins3: ["light", "medium", "dark"].map(String::from),
            monk: [
                "very fair",
                "fair",
                "light",
                "light beige",
                "beige",
                "tan",
                "medium brown",
                "brown",
                "dark brown",
                "very dark",
            ]
            .map(String::from),
        }
    }
}

impl PromptVocabulary {
    pub fn descriptor(&self, scheme: &AttributeScheme, category: &str) -> Option<&str> {
        let i = scheme.index_of(category)?;
        let table: &[String] = match scheme.kind() {
            SchemeKind::SkinToneFitzpatrick => &self.fitzpatrick,
            SchemeKind::SkinToneBins3 => &self.bins3,
            SchemeKind::SkinToneMonk => &self.monk,
            _ => return None,
        };
        (table.len() == scheme.len()).then(|| table[i].as_str())
    }

    /// Fitzpatrick index whose descriptor appears in `"... with <descriptor> skin"`.
    /// Used by the synthetic backend to read back the requested tone.
    pub fn fitzpatrick_in_prompt(&self, prompt: &str) -> Option<usize> {
        let lower = prompt.to_lowercase();
        let start = lower.rfind(" with ")? + " with ".len();
        let rest = &lower[start..];
        let end = rest.find(" skin")?;
        let phrase = rest[..end].trim();
        self.fitzpatrick.iter().position(|d| d.to_lowercase() == phrase)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubgroupPrompt {
    pub text: String,
    pub category: String,
    pub base_prompt: String,
}

fn clean_base(base: &str) -> Result<&str, PromptError> {
    let b = base.trim().trim_end_matches('.').trim_end();
    if b.is_empty() {
        Err(PromptError::EmptyPrompt)
    } else {
        Ok(b)
    }
}

/// Rewrites `base` for one category using the default vocabulary.
pub fn build_subgroup_prompt(
    base: &str,
    category: &str,
    scheme: &AttributeScheme,
) -> Result<SubgroupPrompt, PromptError> {
    build_subgroup_prompt_with(base, category, scheme, &PromptVocabulary::default())
}

pub fn build_subgroup_prompt_with(
    base: &str,
    category: &str,
    scheme: &AttributeScheme,
    vocab: &PromptVocabulary,
) -> Result<SubgroupPrompt, PromptError> {
    if !scheme.contains(category) {
        return Err(PromptError::UnknownCategory {
            category: category.to_string(),
            scheme: scheme.to_string(),
        });
    }
    let b = clean_base(base)?;
    let text = match scheme.kind() {
        SchemeKind::DemographicLabels => format!("{b} who is {category}"),
        SchemeKind::Custom => format!("{b}, {category}"),
        kind => {
            let d = vocab
                .descriptor(scheme, category)
                .ok_or_else(|| PromptError::MissingDescriptor {
                    category: category.to_string(),
                    kind,
                })?;
            format!("{b} with {d} skin")
        }
    };
    Ok(SubgroupPrompt {
        text,
        category: category.to_string(),
        base_prompt: base.to_string(),
    })
}

/// Seeds are kept below 2^53 so they survive any JSON reader.
pub const SEED_MASK: u64 = (1 << 53) - 1;
const BASELINE_STREAM: u64 = u64::MAX;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Per-image seed from `(root, subgroup, image)`.
///
/// Each subgroup gets its own stream keyed by its category index, so adding
/// categories never changes the seeds of existing ones. The root itself is
/// never emitted.
pub fn derive_seed(seed_root: u64, subgroup: u64, image: u64) -> u64 {
    let stream = splitmix64(splitmix64(seed_root) ^ splitmix64(subgroup.wrapping_add(1)));
    splitmix64(stream ^ image) & SEED_MASK
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Original prompt only, no target.
    Baseline,
    /// Subgroup prompts allocated by a declared target.
    Targeted,
}

/// The declared target as logged: how it was specified and what it resolved to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeclaredTarget {
    pub setting: TargetSetting,
    pub distribution: Distribution,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanItem {
    pub prompt: String,
    pub category: String,
    pub count: usize,
    pub seeds: Vec<u64>,
}

/// Everything needed to reproduce a run: prompts, counts and seeds, plus the
/// declared target and (when used) the demographic retrieval behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationPlan {
    pub base_prompt: String,
    pub condition: Condition,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<DeclaredTarget>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub retrieval: Option<RetrievalLog>,
    pub scheme: AttributeScheme,
    pub total: usize,
    pub alloc: Vec<AllocEntry>,
    pub seed_root: u64,
    pub items: Vec<PlanItem>,
    pub created_at: String,
}

impl GenerationPlan {
    pub fn allocation(&self) -> Option<AllocationPlan> {
        AllocationPlan::from_entries(self.scheme.clone(), &self.alloc)
    }

    pub fn planned_images(&self) -> usize {
        self.items.iter().map(|i| i.count).sum()
    }

    /// `(item index, image index within item, seed)` in plan order.
    pub fn image_slots(&self) -> impl Iterator<Item = (usize, usize, u64)> + '_ {
        self.items
            .iter()
            .enumerate()
            .flat_map(|(i, item)| item.seeds.iter().enumerate().map(move |(j, &s)| (i, j, s)))
    }

    pub fn with_retrieval(mut self, log: RetrievalLog) -> Self {
        self.retrieval = Some(log);
        self
    }

    /// Checks internal consistency of a loaded plan.
    pub fn validate(&self) -> Result<(), PromptError> {
        let bad = |m: String| Err(PromptError::InvalidPlan(m));
        let Some(alloc) = self.allocation() else {
            return bad("allocation rows do not match the scheme".into());
        };
        if alloc.total() != self.total {
            return bad(format!("allocation sums to {}, total is {}", alloc.total(), self.total));
        }
        if self.planned_images() != self.total {
            return bad(format!(
                "items plan {} images, total is {}",
                self.planned_images(),
                self.total
            ));
        }
        let mut seen = HashSet::new();
        for item in &self.items {
            if item.prompt.trim().is_empty() {
                return bad(format!("empty prompt for {}", item.category));
            }
            if !self.scheme.contains(&item.category) {
                return bad(format!("item category {} not in scheme", item.category));
            }
            if item.seeds.len() != item.count {
                return bad(format!("{} has {} seeds for {} images", item.category, item.seeds.len(), item.count));
            }
            if alloc.count(&item.category) != Some(item.count) {
                return bad(format!("{} count disagrees with allocation", item.category));
            }
            for s in &item.seeds {
                if !seen.insert(*s) {
                    return bad(format!("seed {s} repeated"));
                }
            }
        }
        Ok(())
    }
}

/// Seeds for one subgroup, skipping any value already used in the plan.
fn seeds_for(seed_root: u64, stream: u64, count: usize, used: &mut HashSet<u64>) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut j = 0u64;
    while out.len() < count {
        let s = derive_seed(seed_root, stream, j);
        j += 1;
        if used.insert(s) {
            out.push(s);
        }
    }
    out
}

/// Plan for an already-resolved target `q` (logged as an explicit target).
pub fn plan(base: &str, q: &Distribution, total: usize, seed_root: u64) -> Result<GenerationPlan, PromptError> {
    let setting = TargetSetting::Explicit {
        distribution: q.clone(),
    };
    plan_with(base, &setting, q, total, seed_root, &PromptVocabulary::default())
}

/// Plan for `q` resolved from `setting`: allocate, phrase each non-empty
/// subgroup, and derive its seeds.
pub fn plan_with(
    base: &str,
    setting: &TargetSetting,
    q: &Distribution,
    total: usize,
    seed_root: u64,
    vocab: &PromptVocabulary,
) -> Result<GenerationPlan, PromptError> {
    clean_base(base)?;
    let allocation = allocate(q, total);
    let scheme = q.scheme();
    let mut used = HashSet::with_capacity(total);
    let mut items = Vec::new();
    for (idx, (label, &count)) in scheme.labels().iter().zip(allocation.counts()).enumerate() {
        if count == 0 {
            continue;
        }
        let sp = build_subgroup_prompt_with(base, label, scheme, vocab)?;
        items.push(PlanItem {
            prompt: sp.text,
            category: sp.category,
            count,
            seeds: seeds_for(seed_root, idx as u64, count, &mut used),
        });
    }
    Ok(GenerationPlan {
        base_prompt: base.to_string(),
        condition: Condition::Targeted,
        target: Some(DeclaredTarget {
            setting: setting.clone(),
            distribution: q.clone(),
        }),
        retrieval: None,
        scheme: scheme.clone(),
        total,
        alloc: allocation.entries(),
        seed_root,
        items,
        created_at: timestamp_now(),
    })
}

pub const BASELINE_CATEGORY: &str = "baseline";

/// `total` images of the unmodified prompt.
pub fn plan_baseline(base: &str, total: usize, seed_root: u64) -> Result<GenerationPlan, PromptError> {
    let b = clean_base(base)?;
    let scheme = AttributeScheme::new("baseline", SchemeKind::Custom, [BASELINE_CATEGORY])
        .expect("static scheme");
    let mut used = HashSet::with_capacity(total);
    let items = if total == 0 {
        Vec::new()
    } else {
        vec![PlanItem {
            prompt: b.to_string(),
            category: BASELINE_CATEGORY.to_string(),
            count: total,
            seeds: seeds_for(seed_root, BASELINE_STREAM, total, &mut used),
        }]
    };
    Ok(GenerationPlan {
        base_prompt: base.to_string(),
        condition: Condition::Baseline,
        target: None,
        retrieval: None,
        alloc: vec![AllocEntry {
            label: BASELINE_CATEGORY.to_string(),
            count: total,
        }],
        scheme,
        total,
        seed_root,
        items,
        created_at: timestamp_now(),
    })
}

/// Lower-cased concept from the standard headshot template, or the whole
/// prompt lower-cased when it does not follow the template.
pub fn extract_concept(base_prompt: &str) -> String {
    let p = base_prompt.trim().trim_end_matches('.').trim();
    let lower = p.to_lowercase();
    const TEMPLATE: &str = "a full-color headshot of ";
    if let Some(rest) = lower.strip_prefix(TEMPLATE) {
        let rest = rest.trim();
        for article in ["a ", "an "] {
            if let Some(c) = rest.strip_prefix(article) {
                return c.trim().to_string();
            }
        }
        return rest.to_string();
    }
    lower
}
