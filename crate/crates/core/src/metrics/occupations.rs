//! Occupation prestige table and the evaluation prompt sets.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsError;

/// Lowest and highest SIOPS scores.
pub const SIOPS_RANGE: (f64, f64) = (12.0, 78.0);

const OCCUPATIONS_CSV: &str = include_str!("../../assets/occupations.csv");
const PROMPTS_CSV: &str = include_str!("../../assets/prompts.csv");

/// Prompt template shared by every evaluation prompt.
pub const HEADSHOT_TEMPLATE: &str = "A full-color headshot of";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    High,
    Moderate,
    Low,
}

impl Status {
    pub const ALL: [Status; 3] = [Status::High, Status::Moderate, Status::Low];

    pub fn row_label(self) -> &'static str {
        match self {
            Status::High => "High-Status",
            Status::Moderate => "Moderate-Status",
            Status::Low => "Low-Status",
        }
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.row_label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationEntry {
    pub occupation: String,
    pub status: Status,
    pub siops: f64,
    #[serde(default)]
    pub aliases: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    occupation: String,
    status: Status,
    siops: f64,
    #[serde(default)]
    aliases: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OccupationTable {
    entries: Vec<OccupationEntry>,
}

/// Lower case, single spaces, no leading article.
fn normalize(label: &str) -> String {
    let words: Vec<String> = label.split_whitespace().map(str::to_lowercase).collect();
    let words = match words.first().map(String::as_str) {
        Some("a" | "an" | "the") if words.len() > 1 => &words[1..],
        _ => &words[..],
    };
    words.join(" ")
}

impl OccupationTable {
    /// The shipped table.
    pub fn builtin() -> Self {
        Self::from_csv(OCCUPATIONS_CSV.as_bytes()).expect("shipped occupation table is valid")
    }

    pub fn from_path(path: &Path) -> Result<Self, MetricsError> {
        let bytes = std::fs::read(path).map_err(|e| MetricsError::Table(format!("{}: {e}", path.display())))?;
        Self::from_csv(&bytes[..])
    }

    /// Reads `occupation,status,siops,aliases` rows; aliases are `;`-separated.
    pub fn from_csv(reader: impl std::io::Read) -> Result<Self, MetricsError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut entries = Vec::new();
        for row in rdr.deserialize::<CsvRow>() {
            let row = row.map_err(|e| MetricsError::Table(e.to_string()))?;
            if !(SIOPS_RANGE.0..=SIOPS_RANGE.1).contains(&row.siops) {
                return Err(MetricsError::Table(format!(
                    "{}: SIOPS {} outside {}–{}",
                    row.occupation, row.siops, SIOPS_RANGE.0, SIOPS_RANGE.1
                )));
            }
            let aliases = row
                .aliases
                .split(';')
                .map(str::trim)
                .filter(|a| !a.is_empty())
                .map(String::from)
                .collect();
            entries.push(OccupationEntry {
                occupation: row.occupation.trim().to_string(),
                status: row.status,
                siops: row.siops,
                aliases,
            });
        }
        let table = Self { entries };
        let mut seen = std::collections::HashSet::new();
        for e in &table.entries {
            for name in std::iter::once(&e.occupation).chain(&e.aliases) {
                if !seen.insert(normalize(name)) {
                    return Err(MetricsError::Table(format!("{name:?} listed twice")));
                }
            }
        }
        Ok(table)
    }

    pub fn entries(&self) -> &[OccupationEntry] {
        &self.entries
    }

    /// Case-insensitive lookup by name or alias; accepts a leading article
    /// and the full headshot prompt.
    pub fn lookup(&self, label: &str) -> Option<&OccupationEntry> {
        let key = normalize(&crate::prompts::extract_concept(label));
        self.entries.iter().find(|e| {
            normalize(&e.occupation) == key || e.aliases.iter().any(|a| normalize(a) == key)
        })
    }

    pub fn resolve(&self, label: &str) -> Result<&OccupationEntry, MetricsError> {
        self.lookup(label)
            .ok_or_else(|| MetricsError::UnknownOccupation(label.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonOccupationalPrompt {
    pub category: String,
    pub description: String,
}

pub fn non_occupational_prompts() -> Vec<NonOccupationalPrompt> {
    csv::Reader::from_reader(PROMPTS_CSV.as_bytes())
        .deserialize()
        .collect::<Result<Vec<_>, _>>()
        .expect("shipped prompt list is valid")
}

/// `"A full-color headshot of a doctor"` style prompt.
pub fn headshot_prompt(subject: &str) -> String {
    let s = subject.trim();
    let lower = s.to_lowercase();
    let has_determiner = ["a ", "an ", "the ", "someone", "person "].iter().any(|d| lower.starts_with(d));
    if has_determiner {
        format!("{HEADSHOT_TEMPLATE} {s}")
    } else {
        let article = if lower.starts_with(['a', 'e', 'i', 'o', 'u']) { "an" } else { "a" };
        format!("{HEADSHOT_TEMPLATE} {article} {lower}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_lookups() {
        let t = OccupationTable::builtin();
        assert_eq!(t.entries().len(), 30);
        let d = t.resolve("doctor").unwrap();
        assert_eq!((d.status, d.siops), (Status::High, 78.0));
        let j = t.resolve("janitor").unwrap();
        assert_eq!((j.status, j.siops), (Status::Low, 15.0));
        assert_eq!(t.resolve("A full-color headshot of a nurse").unwrap().siops, 66.0);
        assert_eq!(t.resolve("Teacher").unwrap().occupation, "Teacher (High School)");
        assert_eq!(t.resolve("a University  professor").unwrap().siops, 71.0);
        assert!(t.resolve("astronaut").is_err());
    }

    #[test]
    fn ten_per_status() {
        let t = OccupationTable::builtin();
        for s in Status::ALL {
            assert_eq!(t.entries().iter().filter(|e| e.status == s).count(), 10);
        }
    }

    #[test]
    fn rejects_out_of_scale_scores() {
        let bad = "occupation,status,siops,aliases\nX,high,90,\n";
        assert!(OccupationTable::from_csv(bad.as_bytes()).is_err());
        let dup = "occupation,status,siops,aliases\nX,high,50,\nY,low,20,x\n";
        assert!(OccupationTable::from_csv(dup.as_bytes()).is_err());
    }

    #[test]
    fn prompts() {
        assert_eq!(non_occupational_prompts().len(), 6);
        assert_eq!(headshot_prompt("Doctor"), "A full-color headshot of a doctor");
        assert_eq!(headshot_prompt("Engineer"), "A full-color headshot of an engineer");
        assert_eq!(headshot_prompt("someone smiling"), "A full-color headshot of someone smiling");
    }
}
