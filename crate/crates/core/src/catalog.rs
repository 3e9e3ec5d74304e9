//! The 18 propaganda techniques, their canonical index order and their
//! natural-language definitions.
//!
//! Index order follows descending training-set frequency in the reference
//! corpus. Token and sentence classes are offset by one: class 0 is
//! "none of them" (tokens) or "any propaganda" (sentence head 0), and
//! technique `i` maps to class `i + 1`.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_TECHNIQUES: usize = 18;
/// Techniques plus the "none"/"any" slot.
pub const NUM_CLASSES: usize = NUM_TECHNIQUES + 1;

pub const TECHNIQUE_NAMES: [&str; NUM_TECHNIQUES] = [
    "Loaded Language",
    "Name Calling,Labeling",
    "Repetition",
    "Doubt",
    "Exaggeration,Minimisation",
    "Flag-Waving",
    "Appeal to fear-prejudice",
    "Causal Oversimplification",
    "Slogans",
    "Black-and-White Fallacy",
    "Appeal to Authority",
    "Thought-terminating Cliches",
    "Whataboutism",
    "Reductio ad hitlerum",
    "Red Herring",
    "Straw Men",
    "Obfus.,Int. Vagueness,Confusion",
    "Bandwagon",
];

/// Training-split fragment counts of the reference corpus, in index order.
pub const REFERENCE_TRAIN_COUNTS: [usize; NUM_TECHNIQUES] = [
    1811, 931, 456, 423, 398, 206, 187, 170, 120, 97, 91, 70, 55, 44, 24, 11, 10, 10,
];

const DEFAULT_DEFINITIONS: [&str; NUM_TECHNIQUES] = [
    "Using words or phrases with strong emotional implications to influence an audience.",
    "Labeling the object of the propaganda campaign as something the target audience fears, hates or finds undesirable.",
    "Repeating the same message over and over again so that the audience eventually accepts it.",
    "Questioning the credibility of someone or something.",
    "Representing something in an excessive manner, making it larger or better or worse, or making it seem less important than it really is.",
    "Playing on strong national feeling or on any group feeling to justify or promote an action or idea.",
    "Seeking to build support for an idea by instilling anxiety or panic in the population towards an alternative.",
    "Assuming one single cause or reason when there are multiple causes behind an issue.",
    "A brief and striking phrase that may include labeling and stereotyping, acting as an emotional appeal.",
    "Presenting two alternative options as the only possibilities when in fact more possibilities exist.",
    "Stating that a claim is true simply because a valid authority or expert on the issue supports it.",
    "Words or phrases that discourage critical thought and meaningful discussion about a given topic.",
    "Discrediting an opponent's position by charging them with hypocrisy without directly disproving their argument.",
    "Persuading an audience to disapprove an action or idea by suggesting that it is popular with groups hated by the audience.",
    "Introducing irrelevant material to the issue being discussed so that everyone's attention is diverted away from the points made.",
    "Substituting an opponent's proposition with a similar one which is then refuted in place of the original.",
    "Using deliberately unclear words so that the audience may have its own interpretations.",
    "Attempting to persuade the audience to join in and take the course of action because everyone else is taking the same action.",
];

/// Zero-based technique index (0..18).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TechniqueId(usize);

impl TechniqueId {
    pub fn new(index: usize) -> Result<Self> {
        if index < NUM_TECHNIQUES {
            Ok(TechniqueId(index))
        } else {
            Err(Error::Input(format!("technique index {index} out of range")))
        }
    }

    /// Technique for a class id in 1..=18.
    pub fn from_class(class: usize) -> Option<Self> {
        (1..NUM_CLASSES).contains(&class).then(|| TechniqueId(class - 1))
    }

    pub fn index(self) -> usize {
        self.0
    }

    /// Token / sentence-head class id (1..=18).
    pub fn class(self) -> usize {
        self.0 + 1
    }

    pub fn name(self) -> &'static str {
        TECHNIQUE_NAMES[self.0]
    }

    pub fn all() -> impl Iterator<Item = TechniqueId> {
        (0..NUM_TECHNIQUES).map(TechniqueId)
    }
}

impl fmt::Display for TechniqueId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

fn normalize(name: &str) -> String {
    name.trim()
        .replace('_', " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Resolve a technique name as written in label files. Accepts the
/// canonical names, underscore-separated variants and the long form of the
/// abbreviated vagueness label.
pub fn resolve_technique(name: &str) -> Result<TechniqueId> {
    let norm = normalize(name);
    if let Some(i) = TECHNIQUE_NAMES.iter().position(|n| normalize(n) == norm) {
        return Ok(TechniqueId(i));
    }
    let alias = match norm.as_str() {
        "obfuscation,intentional vagueness,confusion" => Some(16),
        "name calling, labeling" => Some(1),
        "exaggeration, minimisation" => Some(4),
        "appeal to fear/prejudice" => Some(6),
        "thought-terminating cliché" | "thought-terminating cliches" => Some(11),
        "black-and-white fallacy/dictatorship" => Some(9),
        _ => None,
    };
    alias
        .map(TechniqueId)
        .ok_or_else(|| Error::UnknownTechnique(name.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub definition: String,
}

/// Ordered technique names and definitions, always in canonical index order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TechniqueCatalog {
    entries: Vec<CatalogEntry>,
}

impl Default for TechniqueCatalog {
    fn default() -> Self {
        let entries = TECHNIQUE_NAMES
            .iter()
            .zip(DEFAULT_DEFINITIONS.iter())
            .map(|(n, d)| CatalogEntry {
                name: n.to_string(),
                definition: d.to_string(),
            })
            .collect();
        TechniqueCatalog { entries }
    }
}

impl TechniqueCatalog {
    /// Build from entries in any order; every technique must appear exactly once.
    pub fn from_entries(entries: Vec<CatalogEntry>) -> Result<Self> {
        if entries.len() != NUM_TECHNIQUES {
            return Err(Error::Catalog(format!(
                "expected {NUM_TECHNIQUES} entries, found {}",
                entries.len()
            )));
        }
        let mut slots: Vec<Option<CatalogEntry>> = vec![None; NUM_TECHNIQUES];
        let mut seen = HashSet::new();
        for e in entries {
            if e.definition.trim().is_empty() {
                return Err(Error::Catalog(format!("empty definition for {:?}", e.name)));
            }
            let id = resolve_technique(&e.name)?;
            if !seen.insert(id) {
                return Err(Error::Catalog(format!("duplicate technique {:?}", e.name)));
            }
            slots[id.index()] = Some(CatalogEntry {
                name: TECHNIQUE_NAMES[id.index()].to_string(),
                definition: e.definition,
            });
        }
        Ok(TechniqueCatalog {
            entries: slots.into_iter().map(|e| e.expect("all slots filled")).collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let entries: Vec<CatalogEntry> = serde_json::from_str(&text)
            .map_err(|e| Error::Catalog(format!("{}: {e}", path.display())))?;
        Self::from_entries(entries)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.entries).expect("catalog serializes");
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn definition(&self, id: TechniqueId) -> &str {
        &self.entries[id.index()].definition
    }

    pub fn definitions(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.definition.as_str())
    }
}
