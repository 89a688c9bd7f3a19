//! Slot ontology and aligner lexicon.
//!
//! One TOML file per dataset describes every slot: its category, the stems
//! that realize it in text, alternative expressions for specific values, and
//! the matching mode used by the aligner. The same file doubles as the
//! ontology consulted when parsing MRs. See `data/lexicons/README.md` for the
//! full schema.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::DatasetFormat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlotCategory {
    Boolean,
    Numeric,
    Scalar,
    Categorical,
    List,
}

impl fmt::Display for SlotCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SlotCategory::Boolean => "boolean",
            SlotCategory::Numeric => "numeric",
            SlotCategory::Scalar => "scalar",
            SlotCategory::Categorical => "categorical",
            SlotCategory::List => "list",
        };
        f.write_str(s)
    }
}

/// How strictly a categorical value (or list item) must appear in the text.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchMode {
    /// The whole value, case-insensitive.
    #[default]
    Exact,
    /// Every value token somewhere in the text, any order.
    AllWords,
    /// At least one value token.
    AnyWord,
    /// The first value token.
    FirstWord,
}

impl FromStr for MatchMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(MatchMode::Exact),
            "all_words" => Ok(MatchMode::AllWords),
            "any_word" => Ok(MatchMode::AnyWord),
            "first_word" => Ok(MatchMode::FirstWord),
            other => Err(Error::Config(format!("unknown matching mode `{other}`"))),
        }
    }
}

/// One alternative realization of a value. Multi-part alternatives match
/// only when every part is present.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Alternative {
    Phrase(String),
    Parts(Vec<String>),
}

impl Alternative {
    pub fn parts(&self) -> &[String] {
        match self {
            Alternative::Phrase(p) => std::slice::from_ref(p),
            Alternative::Parts(parts) => parts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlotEntry {
    pub category: SlotCategory,
    /// Words or phrases that realize the slot itself (Boolean and scalar slots).
    #[serde(default)]
    pub stems: Vec<String>,
    /// Realizations that express the slot with inverted polarity, such as
    /// "single-player" for a multiplayer flag.
    #[serde(default)]
    pub negative_stems: Vec<String>,
    #[serde(default)]
    pub mode: Option<MatchMode>,
    /// Name of the synonym scale used by a scalar slot.
    #[serde(default)]
    pub scale: Option<String>,
    /// Numeric slot holding a year; enables abbreviated forms like '97.
    #[serde(default)]
    pub year: bool,
    /// Known values; a different known value found in place of the expected
    /// one makes the mention incorrect rather than missed.
    #[serde(default)]
    pub values: Vec<String>,
    #[serde(default)]
    pub alternatives: BTreeMap<String, Vec<Alternative>>,
}

impl SlotEntry {
    pub fn new(category: SlotCategory) -> Self {
        SlotEntry {
            category,
            stems: Vec::new(),
            negative_stems: Vec::new(),
            mode: None,
            scale: None,
            year: false,
            values: Vec::new(),
            alternatives: BTreeMap::new(),
        }
    }

    pub fn mode(&self) -> MatchMode {
        self.mode.unwrap_or_default()
    }

    /// Alternatives registered for `value`, compared case-insensitively.
    pub fn alternatives_for(&self, value: &str) -> &[Alternative] {
        self.alternatives.iter().find(|(k, _)| k.eq_ignore_ascii_case(value)).map(|(_, v)| v.as_slice()).unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Lexicon {
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default = "default_list_separator")]
    pub list_separator: String,
    #[serde(default = "default_negation_cues")]
    pub negation_cues: Vec<String>,
    #[serde(default = "default_contrast_cues")]
    pub contrast_cues: Vec<String>,
    /// Values that mark a slot as Boolean when it is inferred from data.
    #[serde(default = "default_binary_vocabulary")]
    pub binary_vocabulary: Vec<String>,
    /// Word-level casing overrides applied when humanizing slot names.
    #[serde(default)]
    pub humanize: BTreeMap<String, String>,
    /// Scale name -> scale value -> alternative expressions.
    #[serde(default)]
    pub scales: BTreeMap<String, BTreeMap<String, Vec<String>>>,
    #[serde(default)]
    pub slots: BTreeMap<String, SlotEntry>,
}

fn default_list_separator() -> String {
    ", ".to_string()
}

fn default_negation_cues() -> Vec<String> {
    ["no", "not", "n't", "non", "never", "without", "lacks", "lacking"].map(String::from).to_vec()
}

fn default_contrast_cues() -> Vec<String> {
    ["but", "though", "although", "however", "yet"].map(String::from).to_vec()
}

fn default_binary_vocabulary() -> Vec<String> {
    ["yes", "no", "true", "false"].map(String::from).to_vec()
}

impl Default for Lexicon {
    fn default() -> Self {
        Lexicon {
            dataset: None,
            list_separator: default_list_separator(),
            negation_cues: default_negation_cues(),
            contrast_cues: default_contrast_cues(),
            binary_vocabulary: default_binary_vocabulary(),
            humanize: BTreeMap::new(),
            scales: BTreeMap::new(),
            slots: BTreeMap::new(),
        }
    }
}

const VIGGO_TOML: &str = include_str!("../data/lexicons/viggo.toml");
const E2E_TOML: &str = include_str!("../data/lexicons/e2e.toml");
const MULTIWOZ_TOML: &str = include_str!("../data/lexicons/multiwoz.toml");

impl Lexicon {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let lex: Lexicon = toml::from_str(text)?;
        lex.validate()?;
        Ok(lex)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::from(e).with_context(format!("reading lexicon {}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| e.with_context(format!("lexicon {}", path.display())))
    }

    /// The lexicon shipped with the crate for a dataset.
    pub fn builtin(format: DatasetFormat) -> Self {
        let text = match format {
            DatasetFormat::Viggo => VIGGO_TOML,
            DatasetFormat::E2e => E2E_TOML,
            DatasetFormat::MultiWoz => MULTIWOZ_TOML,
        };
        Self::from_toml_str(text).expect("builtin lexicon is valid")
    }

    pub fn validate(&self) -> Result<()> {
        for (name, entry) in &self.slots {
            match entry.category {
                SlotCategory::Boolean | SlotCategory::Scalar if entry.stems.is_empty() => {
                    return Err(Error::Config(format!("{} slot `{name}` needs at least one stem", entry.category)));
                }
                SlotCategory::Scalar => {
                    if let Some(scale) = &entry.scale {
                        if !self.scales.contains_key(scale) {
                            return Err(Error::Config(format!("slot `{name}` refers to unknown scale `{scale}`")));
                        }
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Slot entry by name; falls back to a case-insensitive match.
    pub fn entry(&self, slot: &str) -> Option<&SlotEntry> {
        self.slots.get(slot).or_else(|| self.slots.iter().find(|(k, _)| k.eq_ignore_ascii_case(slot)).map(|(_, v)| v))
    }

    pub fn category_of(&self, slot: &str) -> Option<SlotCategory> {
        self.entry(slot).map(|e| e.category)
    }

    /// The value scale of a scalar slot, as (scale value, expressions) pairs.
    /// Each scale value also counts as an expression of itself.
    pub fn scale_of(&self, entry: &SlotEntry) -> Vec<(&str, Vec<&str>)> {
        let Some(scale) = entry.scale.as_ref().and_then(|s| self.scales.get(s)) else {
            return Vec::new();
        };
        scale
            .iter()
            .map(|(value, syns)| {
                let mut exprs = vec![value.as_str()];
                exprs.extend(syns.iter().map(String::as_str));
                (value.as_str(), exprs)
            })
            .collect()
    }

    pub fn is_negation_cue(&self, word: &str) -> bool {
        let w = word.to_ascii_lowercase().replace('\u{2019}', "'");
        self.negation_cues.iter().any(|cue| {
            let cue = cue.to_ascii_lowercase();
            if cue.starts_with('\'') || cue == "n't" {
                w.ends_with(&cue)
            } else {
                w == cue
            }
        })
    }

    pub fn is_contrast_cue(&self, word: &str) -> bool {
        self.contrast_cues.iter().any(|c| c.eq_ignore_ascii_case(word))
    }
}
