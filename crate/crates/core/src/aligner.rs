//! Rule-based slot aligner: locates slot mentions in surface text and
//! classifies missed, incorrect and repeated mentions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Alternative, Lexicon, MatchMode, SlotCategory, SlotEntry};
use crate::mr::{MeaningRepresentation, Slot, SlotId};
use crate::text::{self, Hit, Word};

/// Words before a Boolean stem searched for a negation cue.
pub const NEGATION_WINDOW: usize = 6;
/// Words on either side of a scalar stem searched for the value.
pub const SCALAR_WINDOW: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Positive,
    Negative,
}

impl Polarity {
    fn flip(self) -> Self {
        match self {
            Polarity::Positive => Polarity::Negative,
            Polarity::Negative => Polarity::Positive,
        }
    }

    /// Polarity a Boolean value asserts; `None` for values outside yes/no.
    pub fn of_value(value: &str) -> Option<Self> {
        match value.trim().to_ascii_lowercase().as_str() {
            "yes" | "true" => Some(Polarity::Positive),
            "no" | "false" => Some(Polarity::Negative),
            _ => None,
        }
    }
}

/// Negative iff some negation cue lies within `window` words before the stem
/// and no contrast cue lies strictly between that cue and the stem.
pub fn decide_polarity(stem: usize, negations: &[usize], contrasts: &[usize], window: usize) -> Polarity {
    let negated = negations
        .iter()
        .any(|&cue| cue < stem && stem - cue <= window && !contrasts.iter().any(|&k| cue < k && k < stem));
    if negated {
        Polarity::Negative
    } else {
        Polarity::Positive
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    pub slot: SlotId,
    pub slot_name: String,
    /// Character offset of the mention (leftmost item for lists).
    pub position: usize,
    pub matched_text: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Missed,
    Incorrect,
    Repeated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlotError {
    pub slot: SlotId,
    pub slot_name: String,
    pub kind: ErrorKind,
    /// The value or list item concerned.
    pub value: String,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotErrorBreakdown {
    pub missed: usize,
    pub incorrect: usize,
    pub repeated: usize,
    pub total_slots: usize,
}

impl SlotErrorBreakdown {
    pub fn errors(&self) -> usize {
        self.missed + self.incorrect + self.repeated
    }

    pub fn add(&mut self, other: &SlotErrorBreakdown) {
        self.missed += other.missed;
        self.incorrect += other.incorrect;
        self.repeated += other.repeated;
        self.total_slots += other.total_slots;
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceAlignment {
    /// Sorted by position.
    pub alignments: Vec<Alignment>,
    pub errors: Vec<SlotError>,
    pub breakdown: SlotErrorBreakdown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AlignOptions {
    /// Scalar slots align on the stem alone.
    pub soft_scalar: bool,
    /// Per-slot overrides of the lexicon's matching mode.
    pub modes: BTreeMap<String, MatchMode>,
}

/// Result of searching for one value.
#[derive(Clone, Debug, PartialEq)]
pub enum Found {
    /// Located; `pattern` is the phrase that matched verbatim, if any.
    Match {
        hit: Hit,
        pattern: Option<Vec<char>>,
    },
    /// A conflicting expression was found instead.
    Conflict {
        hit: Hit,
    },
    Missing,
}

impl Found {
    pub fn position(&self) -> Option<usize> {
        match self {
            Found::Match { hit, .. } => Some(hit.start()),
            _ => None,
        }
    }
}

/// A normalized utterance with its word and sentence segmentation.
pub struct Utterance<'a> {
    pub raw: &'a str,
    pub chars: Vec<char>,
    raw_chars: Vec<char>,
    pub words: Vec<Word>,
    pub sentences: Vec<std::ops::Range<usize>>,
}

impl<'a> Utterance<'a> {
    pub fn new(raw: &'a str) -> Self {
        let chars = text::normalize(raw);
        let words = text::words(&chars);
        let sentences = text::sentences(&chars);
        Utterance { raw, raw_chars: raw.chars().collect(), chars, words, sentences }
    }

    fn find(&self, pattern: &str) -> Option<Hit> {
        text::find_phrase(&self.chars, &text::normalize_pattern(pattern), 0)
    }

    fn surface(&self, hit: &Hit) -> String {
        self.raw_chars[hit.range.clone()].iter().collect()
    }

    fn word_at(&self, pos: usize) -> usize {
        text::word_index_at(&self.words, pos)
    }

    fn sentence_of(&self, pos: usize) -> usize {
        text::sentence_index(&self.sentences, pos)
    }
}

/// Finds a stem and decides whether it is negated. Negative stems invert
/// the decision.
pub fn align_boolean(utt: &Utterance, entry: &SlotEntry, lex: &Lexicon) -> Option<(Hit, Polarity)> {
    let positive = entry.stems.iter().map(|s| (s.as_str(), false));
    let negative = entry.negative_stems.iter().map(|s| (s.as_str(), true));
    let (hit, inverted) = positive
        .chain(negative)
        .filter_map(|(stem, inv)| utt.find(stem).map(|h| (h, inv, stem.len())))
        .min_by_key(|(h, _, len)| (h.start(), std::cmp::Reverse(*len)))
        .map(|(h, inv, _)| (h, inv))?;
    let stem_word = utt.word_at(hit.start());
    let sentence = utt.sentence_of(hit.start());
    let in_sentence = |w: &Word| utt.sentence_of(w.range.start) == sentence;
    let negations: Vec<usize> = utt
        .words
        .iter()
        .enumerate()
        .filter(|(_, w)| in_sentence(w) && lex.is_negation_cue(&w.text))
        .map(|(i, _)| i)
        .collect();
    let contrasts: Vec<usize> = utt
        .words
        .iter()
        .enumerate()
        .filter(|(_, w)| in_sentence(w) && lex.is_contrast_cue(&w.text))
        .map(|(i, _)| i)
        .collect();
    let polarity = decide_polarity(stem_word, &negations, &contrasts, NEGATION_WINDOW);
    Some((hit, if inverted { polarity.flip() } else { polarity }))
}

/// Exact value match; year slots also try the apostrophe abbreviation.
pub fn align_numeric(utt: &Utterance, slot: &Slot, entry: &SlotEntry) -> Found {
    let value = slot.value.trim();
    if let Some(hit) = utt.find(value) {
        return Found::Match { hit, pattern: Some(text::normalize_pattern(value)) };
    }
    if entry.year && value.len() == 4 && value.chars().all(|c| c.is_ascii_digit()) {
        let short = format!("'{}", &value[2..]);
        if let Some(hit) = utt.find(&short) {
            return Found::Match { hit, pattern: Some(text::normalize_pattern(&short)) };
        }
    }
    Found::Missing
}

/// Finds a stem, then the value or one of its scale equivalents within
/// [`SCALAR_WINDOW`] words in the same sentence. An expression of a
/// different scale value near the stem makes the mention incorrect. With
/// `soft`, the stem alone suffices.
pub fn align_scalar(utt: &Utterance, slot: &Slot, entry: &SlotEntry, lex: &Lexicon, soft: bool) -> Found {
    let mut stem_hits: Vec<Hit> =
        entry.stems.iter().flat_map(|s| text::find_all(&utt.chars, &text::normalize_pattern(s))).collect();
    stem_hits.sort_by_key(|h| (h.start(), std::cmp::Reverse(h.range.len())));
    if soft {
        return match stem_hits.into_iter().next() {
            Some(hit) => Found::Match { hit, pattern: None },
            None => Found::Missing,
        };
    }

    let scale = lex.scale_of(entry);
    let value = slot.value.trim();
    let own: Vec<&str> = scale
        .iter()
        .find(|(v, _)| v.eq_ignore_ascii_case(value))
        .map(|(_, exprs)| exprs.clone())
        .unwrap_or_else(|| vec![value]);
    let own_norm: Vec<Vec<char>> = own.iter().map(|e| text::normalize_pattern(e)).collect();
    let conflicting: Vec<Vec<char>> = scale
        .iter()
        .filter(|(v, _)| !v.eq_ignore_ascii_case(value))
        .flat_map(|(_, exprs)| exprs.iter().map(|e| text::normalize_pattern(e)))
        .filter(|e| !own_norm.contains(e))
        .collect();

    let near = |stem: &Hit, patterns: &[Vec<char>]| -> bool {
        let sw = utt.word_at(stem.start()) as isize;
        let sentence = utt.sentence_of(stem.start());
        patterns.iter().any(|p| {
            text::find_all(&utt.chars, p).iter().any(|h| {
                let w = utt.word_at(h.start()) as isize;
                utt.sentence_of(h.start()) == sentence && (w - sw).unsigned_abs() <= SCALAR_WINDOW
            })
        })
    };

    let mut conflict = None;
    for stem in stem_hits {
        if near(&stem, &own_norm) {
            return Found::Match { hit: stem, pattern: None };
        }
        if conflict.is_none() && near(&stem, &conflicting) {
            conflict = Some(stem);
        }
    }
    match conflict {
        Some(hit) => Found::Conflict { hit },
        None => Found::Missing,
    }
}

/// Matches one value per `mode`, consulting the value's alternatives when
/// the value itself is not found.
fn match_value(utt: &Utterance, value: &str, mode: MatchMode, alternatives: &[Alternative]) -> Found {
    let pattern = text::normalize_pattern(value);
    let words = text::pattern_words(value);
    let word_hits = || -> Vec<Option<Hit>> {
        words.iter().map(|w| text::find_phrase(&utt.chars, &w.chars().collect::<Vec<_>>(), 0)).collect()
    };
    let direct = match mode {
        _ if words.len() <= 1 => text::find_phrase(&utt.chars, &pattern, 0).map(|h| (h, Some(pattern.clone()))),
        MatchMode::Exact => text::find_phrase(&utt.chars, &pattern, 0).map(|h| (h, Some(pattern.clone()))),
        MatchMode::AllWords => {
            let hits = word_hits();
            if hits.iter().all(Option::is_some) {
                hits.into_iter().flatten().min_by_key(Hit::start).map(|h| (h, None))
            } else {
                None
            }
        }
        MatchMode::AnyWord => word_hits().into_iter().flatten().min_by_key(Hit::start).map(|h| (h, None)),
        MatchMode::FirstWord => word_hits().into_iter().next().flatten().map(|h| (h, None)),
    };
    if let Some((hit, pattern)) = direct {
        return Found::Match { hit, pattern };
    }
    alternatives
        .iter()
        .filter_map(|alt| match alt {
            Alternative::Phrase(p) => {
                let pat = text::normalize_pattern(p);
                text::find_phrase(&utt.chars, &pat, 0).map(|h| (h, Some(pat)))
            }
            Alternative::Parts(parts) => {
                let hits: Option<Vec<Hit>> = parts.iter().map(|p| utt.find(p)).collect();
                hits?.into_iter().min_by_key(Hit::start).map(|h| (h, None))
            }
        })
        .min_by_key(|(h, _)| h.start())
        .map(|(hit, pattern)| Found::Match { hit, pattern })
        .unwrap_or(Found::Missing)
}

/// Aligns a categorical value; when absent, another known value of the same
/// slot found in the text makes the mention incorrect.
pub fn align_categorical(utt: &Utterance, value: &str, entry: &SlotEntry, mode: MatchMode) -> Found {
    let found = match_value(utt, value, mode, entry.alternatives_for(value));
    if !matches!(found, Found::Missing) {
        return found;
    }
    let own = text::normalize_pattern(value);
    entry
        .values
        .iter()
        .filter(|v| text::normalize_pattern(v) != own)
        .filter_map(|v| match match_value(utt, v, MatchMode::Exact, entry.alternatives_for(v)) {
            Found::Match { hit, .. } => Some(hit),
            _ => None,
        })
        .min_by_key(Hit::start)
        .map(|hit| Found::Conflict { hit })
        .unwrap_or(Found::Missing)
}

/// Aligns every list item categorically; returns one result per item.
pub fn align_list(utt: &Utterance, slot: &Slot, entry: &SlotEntry, mode: MatchMode) -> Vec<(String, Found)> {
    let items: Vec<String> =
        if slot.list_items.is_empty() { vec![slot.value.clone()] } else { slot.list_items.clone() };
    items
        .into_iter()
        .map(|item| {
            let found = align_categorical(utt, &item, entry, mode);
            (item, found)
        })
        .collect()
}

/// Additional non-overlapping verbatim occurrences of a matched pattern.
fn repetitions(utt: &Utterance, hit: &Hit, pattern: &Option<Vec<char>>) -> usize {
    let Some(pattern) = pattern else { return 0 };
    text::find_all(&utt.chars, pattern).iter().filter(|h| !h.overlaps(hit)).count()
}

/// Aligns every slot of `mr` against `utterance`.
pub fn evaluate_utterance(
    utterance: &str,
    mr: &MeaningRepresentation,
    lex: &Lexicon,
    opts: &AlignOptions,
) -> Result<UtteranceAlignment> {
    let utt = Utterance::new(utterance);
    let mut alignments = Vec::new();
    let mut errors = Vec::new();
    let mut breakdown = SlotErrorBreakdown::default();

    for id in mr.slot_ids() {
        let slot = mr.slot(id);
        let entry = lex.entry(&slot.name).ok_or_else(|| Error::UnknownSlot(slot.name.clone()))?;
        let mode = opts.modes.get(&slot.name).copied().unwrap_or_else(|| entry.mode());
        let mut error = |kind: ErrorKind, value: &str| {
            errors.push(SlotError { slot: id, slot_name: slot.name.clone(), kind, value: value.to_string() });
        };
        let mut align = |hit: &Hit| {
            alignments.push(Alignment {
                slot: id,
                slot_name: slot.name.clone(),
                position: hit.start(),
                matched_text: utt.surface(hit),
            });
        };

        match entry.category {
            SlotCategory::Boolean => {
                breakdown.total_slots += 1;
                match align_boolean(&utt, entry, lex) {
                    None => error(ErrorKind::Missed, &slot.value),
                    Some((hit, polarity)) => match Polarity::of_value(&slot.value) {
                        Some(expected) if expected != polarity => error(ErrorKind::Incorrect, &slot.value),
                        _ => align(&hit),
                    },
                }
            }
            SlotCategory::Scalar => {
                breakdown.total_slots += 1;
                match align_scalar(&utt, slot, entry, lex, opts.soft_scalar) {
                    Found::Match { hit, .. } => align(&hit),
                    Found::Conflict { .. } => error(ErrorKind::Incorrect, &slot.value),
                    Found::Missing => error(ErrorKind::Missed, &slot.value),
                }
            }
            SlotCategory::Numeric | SlotCategory::Categorical => {
                breakdown.total_slots += 1;
                let found = if entry.category == SlotCategory::Numeric {
                    align_numeric(&utt, slot, entry)
                } else {
                    align_categorical(&utt, &slot.value, entry, mode)
                };
                match found {
                    Found::Match { hit, pattern } => {
                        for _ in 0..repetitions(&utt, &hit, &pattern) {
                            error(ErrorKind::Repeated, &slot.value);
                        }
                        align(&hit);
                    }
                    Found::Conflict { .. } => error(ErrorKind::Incorrect, &slot.value),
                    Found::Missing => error(ErrorKind::Missed, &slot.value),
                }
            }
            SlotCategory::List => {
                let items = align_list(&utt, slot, entry, mode);
                breakdown.total_slots += items.len();
                let mut leftmost: Option<Hit> = None;
                let mut complete = true;
                for (item, found) in &items {
                    match found {
                        Found::Match { hit, pattern } => {
                            for _ in 0..repetitions(&utt, hit, pattern) {
                                error(ErrorKind::Repeated, item);
                            }
                            if leftmost.as_ref().is_none_or(|l| hit.start() < l.start()) {
                                leftmost = Some(hit.clone());
                            }
                        }
                        Found::Conflict { .. } => {
                            complete = false;
                            error(ErrorKind::Incorrect, item);
                        }
                        Found::Missing => {
                            complete = false;
                            error(ErrorKind::Missed, item);
                        }
                    }
                }
                if let (true, Some(hit)) = (complete, leftmost) {
                    align(&hit);
                }
            }
        }
    }

    for e in &errors {
        match e.kind {
            ErrorKind::Missed => breakdown.missed += 1,
            ErrorKind::Incorrect => breakdown.incorrect += 1,
            ErrorKind::Repeated => breakdown.repeated += 1,
        }
    }
    alignments.sort_by_key(|a| (a.position, a.slot));
    Ok(UtteranceAlignment { alignments, errors, breakdown })
}
