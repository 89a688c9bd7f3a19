//! Meaning representations: parsing dataset-native MRs, linearizing them into
//! model input strings, and locating each slot's token span in that input.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, SlotCategory};

/// Name of the pseudo-slot carrying the dialogue act in linearized input.
pub const INTENT_NAME: &str = "intent";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetFormat {
    Viggo,
    E2e,
    MultiWoz,
}

impl FromStr for DatasetFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "viggo" => Ok(DatasetFormat::Viggo),
            "e2e" => Ok(DatasetFormat::E2e),
            "multiwoz" => Ok(DatasetFormat::MultiWoz),
            _ => Err(Error::UnknownFormat(s.to_string())),
        }
    }
}

impl fmt::Display for DatasetFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetFormat::Viggo => "viggo",
            DatasetFormat::E2e => "e2e",
            DatasetFormat::MultiWoz => "multiwoz",
        })
    }
}

impl DatasetFormat {
    /// Proper-noun casing applied to humanized slot names unless a lexicon
    /// provides its own map.
    pub fn default_humanize_overrides(self) -> BTreeMap<String, String> {
        let pairs: &[(&str, &str)] = match self {
            DatasetFormat::Viggo => &[("mac", "Mac"), ("linux", "Linux"), ("steam", "Steam"), ("esrb", "ESRB")],
            DatasetFormat::E2e | DatasetFormat::MultiWoz => &[],
        };
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }
}

/// Index of a content slot within its MR.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SlotId(pub usize);

impl fmt::Display for SlotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub name: String,
    pub human_name: String,
    pub value: String,
    pub category: SlotCategory,
    /// Individual items of a list value; empty unless `category` is list.
    pub list_items: Vec<String>,
}

impl Slot {
    pub fn new(name: impl Into<String>, value: impl Into<String>) -> Self {
        let name = name.into();
        Slot {
            human_name: humanize_slot_name(&name, &BTreeMap::new()),
            name,
            value: value.into(),
            category: SlotCategory::Categorical,
            list_items: Vec::new(),
        }
    }

    /// Number of units this slot contributes to slot error rates: one per
    /// list item, otherwise one.
    pub fn unit_count(&self) -> usize {
        if self.category == SlotCategory::List {
            self.list_items.len().max(1)
        } else {
            1
        }
    }
}

/// A dialogue act marker; its slots start at `first_slot`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueAct {
    pub da_type: String,
    pub first_slot: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeaningRepresentation {
    /// Dialogue acts in input order. Empty for DA-less datasets; several for
    /// multi-act MultiWOZ turns.
    pub acts: Vec<DialogueAct>,
    pub slots: Vec<Slot>,
    pub source: DatasetFormat,
}

impl MeaningRepresentation {
    pub fn da_type(&self) -> Option<&str> {
        self.acts.first().map(|a| a.da_type.as_str())
    }

    pub fn slot(&self, id: SlotId) -> &Slot {
        &self.slots[id.0]
    }

    pub fn slot_ids(&self) -> impl Iterator<Item = SlotId> {
        (0..self.slots.len()).map(SlotId)
    }

    /// Total slot units (list items counted individually).
    pub fn unit_count(&self) -> usize {
        self.slots.iter().map(Slot::unit_count).sum()
    }

    /// Assigns categories, list items, and humanized names from a lexicon.
    /// Slots the lexicon does not know stay categorical.
    pub fn apply_lexicon(&mut self, lex: &Lexicon) {
        let mut overrides = self.source.default_humanize_overrides();
        overrides.extend(lex.humanize.clone());
        for slot in &mut self.slots {
            slot.human_name = humanize_slot_name(&slot.name, &overrides);
            slot.category = lex.category_of(&slot.name).unwrap_or(SlotCategory::Categorical);
            slot.list_items = if slot.category == SlotCategory::List {
                split_list(&slot.value, &lex.list_separator)
            } else {
                Vec::new()
            };
        }
    }

    /// Marks the named slots Boolean, as produced by [`infer_boolean_slots`].
    pub fn mark_boolean(&mut self, boolean_slots: &BTreeSet<String>) {
        for slot in &mut self.slots {
            if boolean_slots.contains(&slot.name) {
                slot.category = SlotCategory::Boolean;
                slot.list_items.clear();
            }
        }
    }
}

fn split_list(value: &str, separator: &str) -> Vec<String> {
    let sep = separator.trim();
    let items: Vec<String> = if sep.is_empty() {
        vec![value.to_string()]
    } else {
        value.split(sep).map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
    };
    if items.is_empty() {
        vec![value.to_string()]
    } else {
        items
    }
}

fn malformed(span: &str, reason: impl Into<String>) -> Error {
    let span: String = span.chars().take(40).collect();
    Error::MalformedMr { span, reason: reason.into() }
}

/// Parses an MR in the given dataset's native notation.
///
/// * ViGGO: `da(slot[value], slot[value])`
/// * E2E: `slot[value], slot[value]`
/// * MultiWOZ: `act ( slot = value ; slot = value ) & act ( ... )`
///
/// Slot names are humanized with the dataset's default casing overrides;
/// categories are left categorical until [`MeaningRepresentation::apply_lexicon`].
pub fn parse_mr(raw: &str, format: DatasetFormat) -> Result<MeaningRepresentation> {
    let raw = raw.trim();
    let (acts, slots) = match format {
        DatasetFormat::Viggo => {
            let open = raw.find('(').ok_or_else(|| malformed(raw, "expected `da(...)`"))?;
            let da = raw[..open].trim();
            if da.is_empty() || !da.chars().all(|c| c.is_alphanumeric() || c == '_' || c == '-') {
                return Err(malformed(raw, "invalid dialogue act name"));
            }
            if !raw.ends_with(')') {
                return Err(malformed(&raw[open..], "missing closing `)`"));
            }
            let slots = parse_bracket_slots(&raw[open + 1..raw.len() - 1])?;
            (vec![DialogueAct { da_type: da.to_string(), first_slot: 0 }], slots)
        }
        DatasetFormat::E2e => (Vec::new(), parse_bracket_slots(raw)?),
        DatasetFormat::MultiWoz => parse_multiwoz(raw)?,
    };
    let overrides = format.default_humanize_overrides();
    let slots = slots
        .into_iter()
        .map(|(name, value)| Slot {
            human_name: humanize_slot_name(&name, &overrides),
            name,
            value,
            category: SlotCategory::Categorical,
            list_items: Vec::new(),
        })
        .collect();
    Ok(MeaningRepresentation { acts, slots, source: format })
}

fn parse_bracket_slots(s: &str) -> Result<Vec<(String, String)>> {
    let mut slots = Vec::new();
    let mut rest = s;
    loop {
        rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == ',');
        if rest.is_empty() {
            break;
        }
        let open = rest.find('[').ok_or_else(|| malformed(rest, "expected `slot[value]`"))?;
        let name = rest[..open].trim();
        if name.is_empty() || name.contains([']', '(', ')', ',']) {
            return Err(malformed(rest, "invalid slot name"));
        }
        let close =
            rest[open..].find(']').map(|i| i + open).ok_or_else(|| malformed(&rest[open..], "unterminated `[`"))?;
        let value = rest[open + 1..close].trim();
        slots.push((name.to_string(), value.to_string()));
        rest = &rest[close + 1..];
        let after = rest.trim_start();
        if !after.is_empty() && !after.starts_with(',') {
            return Err(malformed(after, "expected `,` between slots"));
        }
    }
    Ok(slots)
}

type ParsedActs = (Vec<DialogueAct>, Vec<(String, String)>);

fn parse_multiwoz(raw: &str) -> Result<ParsedActs> {
    let mut acts = Vec::new();
    let mut slots = Vec::new();
    let mut rest = raw;
    loop {
        rest = rest.trim_start_matches(|c: char| c.is_whitespace() || c == '&');
        if rest.is_empty() {
            break;
        }
        let open = rest.find('(').ok_or_else(|| malformed(rest, "expected `act ( ... )`"))?;
        let act = rest[..open].trim();
        if act.is_empty() || act.contains([')', ';', '=']) {
            return Err(malformed(rest, "invalid dialogue act name"));
        }
        let close =
            rest[open..].find(')').map(|i| i + open).ok_or_else(|| malformed(&rest[open..], "unterminated `(`"))?;
        acts.push(DialogueAct { da_type: act.to_string(), first_slot: slots.len() });
        for pair in rest[open + 1..close].split(';') {
            let pair = pair.trim();
            if pair.is_empty() {
                continue;
            }
            let (name, value) = pair.split_once('=').ok_or_else(|| malformed(pair, "expected `slot = value`"))?;
            let name = name.trim();
            if name.is_empty() {
                return Err(malformed(pair, "empty slot name"));
            }
            slots.push((name.to_string(), value.trim().to_string()));
        }
        rest = &rest[close + 1..];
    }
    if acts.is_empty() {
        return Err(malformed(raw, "no dialogue act found"));
    }
    Ok((acts, slots))
}

/// Writes an MR back in its dataset's native notation.
pub fn serialize_mr(mr: &MeaningRepresentation) -> String {
    let bracketed =
        |slots: &[Slot]| slots.iter().map(|s| format!("{}[{}]", s.name, s.value)).collect::<Vec<_>>().join(", ");
    match mr.source {
        DatasetFormat::Viggo => {
            format!("{}({})", mr.da_type().unwrap_or_default(), bracketed(&mr.slots))
        }
        DatasetFormat::E2e => bracketed(&mr.slots),
        DatasetFormat::MultiWoz => {
            let mut parts = Vec::new();
            for (i, act) in mr.acts.iter().enumerate() {
                let end = mr.acts.get(i + 1).map_or(mr.slots.len(), |a| a.first_slot);
                let pairs = mr.slots[act.first_slot..end]
                    .iter()
                    .map(|s| format!("{} = {}", s.name, s.value))
                    .collect::<Vec<_>>()
                    .join(" ; ");
                parts.push(format!("{} ( {} )", act.da_type, pairs));
            }
            parts.join(" & ")
        }
    }
}

/// Turns a code-style slot name into natural-language words: camelCase is
/// split, underscores become spaces, words are lowercased unless the override
/// map supplies a casing for them.
pub fn humanize_slot_name(name: &str, overrides: &BTreeMap<String, String>) -> String {
    let mut words: Vec<String> = Vec::new();
    for chunk in name.split(|c: char| c == '_' || c.is_whitespace()) {
        let mut current = String::new();
        let mut prev: Option<char> = None;
        for c in chunk.chars() {
            if c.is_uppercase() && prev.is_some_and(|p| p.is_lowercase() || p.is_ascii_digit()) {
                words.push(std::mem::take(&mut current));
            }
            current.push(c);
            prev = Some(c);
        }
        if !current.is_empty() {
            words.push(current);
        }
    }
    words
        .into_iter()
        .filter(|w| !w.is_empty())
        .map(|w| {
            let lower = w.to_lowercase();
            overrides.get(&lower).cloned().unwrap_or(lower)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn humanize_da(da: &str) -> String {
    da.replace('_', " ")
}

/// Character ranges of one `name = value` pair in a linearized MR.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Segment {
    Intent {
        range: Range<usize>,
    },
    Slot {
        slot: SlotId,
        name: Range<usize>,
        value: Range<usize>,
        /// One range per list item; a single range equal to `value` otherwise.
        items: Vec<Range<usize>>,
    },
}

/// A linearized MR together with the character layout of its segments.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Linearized {
    pub text: String,
    pub segments: Vec<Segment>,
}

/// Serializes an MR to the model input string:
/// `intent = <da> | <slot name> = <value> | ...`.
pub fn linearize_mr(mr: &MeaningRepresentation) -> String {
    linearize_with_layout(mr).text
}

pub fn linearize_with_layout(mr: &MeaningRepresentation) -> Linearized {
    let mut text = String::new();
    let mut len = 0usize; // in chars
    let mut segments = Vec::new();
    let push = |text: &mut String, len: &mut usize, s: &str| -> Range<usize> {
        let start = *len;
        text.push_str(s);
        *len += s.chars().count();
        start..*len
    };
    let mut first = true;
    let mut acts = mr.acts.iter().peekable();
    for i in 0..=mr.slots.len() {
        while let Some(act) = acts.next_if(|a| a.first_slot == i) {
            if !first {
                push(&mut text, &mut len, " | ");
            }
            first = false;
            push(&mut text, &mut len, INTENT_NAME);
            push(&mut text, &mut len, " = ");
            let range = push(&mut text, &mut len, &humanize_da(&act.da_type));
            segments.push(Segment::Intent { range });
        }
        let Some(slot) = mr.slots.get(i) else { break };
        if !first {
            push(&mut text, &mut len, " | ");
        }
        first = false;
        let name = push(&mut text, &mut len, &slot.human_name);
        push(&mut text, &mut len, " = ");
        let value = push(&mut text, &mut len, &slot.value);
        let items = item_ranges(slot, value.clone());
        segments.push(Segment::Slot { slot: SlotId(i), name, value, items });
    }
    Linearized { text, segments }
}

fn item_ranges(slot: &Slot, value: Range<usize>) -> Vec<Range<usize>> {
    if slot.category != SlotCategory::List || slot.list_items.len() <= 1 {
        return vec![value];
    }
    let chars: Vec<char> = slot.value.chars().collect();
    let mut ranges = Vec::with_capacity(slot.list_items.len());
    let mut cursor = 0;
    for item in &slot.list_items {
        let pat: Vec<char> = item.chars().collect();
        let found = (cursor..=chars.len().saturating_sub(pat.len())).find(|&i| chars[i..].starts_with(&pat));
        match found {
            Some(i) => {
                ranges.push(value.start + i..value.start + i + pat.len());
                cursor = i + pat.len();
            }
            // Items that do not occur verbatim fall back to the whole value.
            None => return vec![value],
        }
    }
    ranges
}

/// Model tokenization of a linearized MR: token strings plus half-open
/// character ranges into the linearized text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedInput {
    pub tokens: Vec<String>,
    pub char_offsets: Vec<(usize, usize)>,
}

impl TokenizedInput {
    /// Builds a tokenization, checking that non-empty offsets are ordered and
    /// non-overlapping. Empty ranges (special tokens) are allowed anywhere.
    pub fn new(tokens: Vec<String>, char_offsets: Vec<(usize, usize)>) -> Result<Self> {
        if tokens.len() != char_offsets.len() {
            return Err(Error::Data(format!("{} tokens but {} offsets", tokens.len(), char_offsets.len())));
        }
        let mut last_end = 0;
        for (i, &(s, e)) in char_offsets.iter().enumerate() {
            if s > e {
                return Err(Error::Data(format!("token {i} has inverted offsets ({s}, {e})")));
            }
            if s == e {
                continue;
            }
            if s < last_end {
                return Err(Error::Data(format!("token {i} overlaps its predecessor")));
            }
            last_end = e;
        }
        Ok(TokenizedInput { tokens, char_offsets })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpan {
    pub slot: SlotId,
    pub name_span: Range<usize>,
    pub value_spans: Vec<Range<usize>>,
    pub is_boolean: bool,
}

impl SlotSpan {
    /// Token ranges that count as attention on this slot: the name for
    /// Boolean slots, the value (or list items) otherwise.
    pub fn tracked_ranges(&self) -> &[Range<usize>] {
        if self.is_boolean {
            std::slice::from_ref(&self.name_span)
        } else {
            &self.value_spans
        }
    }
}

/// Per-slot token spans over a tokenized linearized MR.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotSpanIndex {
    pub spans: Vec<SlotSpan>,
    pub source_len: usize,
}

impl SlotSpanIndex {
    /// Slot whose tracked ranges contain `token`, if any.
    pub fn slot_at(&self, token: usize) -> Option<SlotId> {
        self.spans.iter().find(|s| s.tracked_ranges().iter().any(|r| r.contains(&token))).map(|s| s.slot)
    }
}

/// Maps each slot's name and value characters to token index ranges.
///
/// Segments come from the MR's own layout, so a value that occurs twice in
/// the input always resolves to the occurrence inside its own pair. Tokens
/// are assigned to at most one span.
pub fn compute_slot_spans(mr: &MeaningRepresentation, linearized: &str, tok: &TokenizedInput) -> Result<SlotSpanIndex> {
    let layout = linearize_with_layout(mr);
    if layout.text != linearized {
        return Err(Error::SpanResolution {
            slot: INTENT_NAME.to_string(),
            reason: "linearized text does not match the MR".to_string(),
        });
    }
    let mut claimed = vec![false; tok.len()];
    let mut spans = Vec::new();
    for seg in &layout.segments {
        let Segment::Slot { slot, name, items, .. } = seg else { continue };
        let slot_name = &mr.slot(*slot).name;
        let name_span = claim(tok, &mut claimed, name, slot_name, "name")?;
        let value_spans =
            items.iter().map(|r| claim(tok, &mut claimed, r, slot_name, "value")).collect::<Result<Vec<_>>>()?;
        spans.push(SlotSpan {
            slot: *slot,
            name_span,
            value_spans,
            is_boolean: mr.slot(*slot).category == SlotCategory::Boolean,
        });
    }
    Ok(SlotSpanIndex { spans, source_len: tok.len() })
}

fn claim(
    tok: &TokenizedInput,
    claimed: &mut [bool],
    chars: &Range<usize>,
    slot: &str,
    what: &str,
) -> Result<Range<usize>> {
    let mut first = None;
    let mut last = 0;
    for (i, &(s, e)) in tok.char_offsets.iter().enumerate() {
        if s < e && s < chars.end && e > chars.start && !claimed[i] {
            first.get_or_insert(i);
            last = i;
        }
    }
    let Some(first) = first else {
        return Err(Error::SpanResolution {
            slot: slot.to_string(),
            reason: format!("no token covers {what} characters {}..{}", chars.start, chars.end),
        });
    };
    for c in &mut claimed[first..=last] {
        *c = true;
    }
    Ok(first..last + 1)
}

/// Observed values per slot name across a set of MRs.
pub fn observe_values<'a>(
    mrs: impl IntoIterator<Item = &'a MeaningRepresentation>,
) -> BTreeMap<String, BTreeSet<String>> {
    let mut seen: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for mr in mrs {
        for slot in &mr.slots {
            seen.entry(slot.name.clone()).or_default().insert(slot.value.clone());
        }
    }
    seen
}

/// Slots whose observed values all fall within the binary vocabulary. An
/// explicit override list, when given, replaces inference entirely.
pub fn infer_boolean_slots(
    ontology: &BTreeMap<String, BTreeSet<String>>,
    binary_vocabulary: &[String],
    explicit: Option<&BTreeSet<String>>,
) -> BTreeSet<String> {
    if let Some(explicit) = explicit {
        return explicit.clone();
    }
    ontology
        .iter()
        .filter(|(_, values)| {
            !values.is_empty()
                && values.iter().all(|v| binary_vocabulary.iter().any(|b| b.eq_ignore_ascii_case(v.trim())))
        })
        .map(|(name, _)| name.clone())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mr::DatasetFormat::*;

    fn overrides() -> BTreeMap<String, String> {
        [("mac".to_string(), "Mac".to_string())].into()
    }

    #[test]
    fn humanize_examples() {
        assert_eq!(humanize_slot_name("priceRange", &overrides()), "price range");
        assert_eq!(humanize_slot_name("has_mac_release", &overrides()), "has Mac release");
        assert_eq!(humanize_slot_name("name", &overrides()), "name");
        assert_eq!(humanize_slot_name("customer rating", &overrides()), "customer rating");
        assert_eq!(humanize_slot_name("familyFriendly", &BTreeMap::new()), "family friendly");
    }

    #[test]
    fn parse_viggo_request_explanation() {
        let mr = parse_mr(
            "request_explanation(rating[poor], genres[vehicular combat], player_perspective[third person])",
            Viggo,
        )
        .unwrap();
        assert_eq!(mr.da_type(), Some("request_explanation"));
        assert_eq!(mr.slots.len(), 3);
        assert_eq!(mr.slots[2].human_name, "player perspective");
    }

    #[test]
    fn parse_empty_inform() {
        let mr = parse_mr("inform()", Viggo).unwrap();
        assert_eq!(mr.da_type(), Some("inform"));
        assert!(mr.slots.is_empty());
        assert_eq!(linearize_mr(&mr), "intent = inform");
    }

    #[test]
    fn parse_e2e_round_trip() {
        let raw = "name[Aromi], eatType[coffee shop]";
        let mr = parse_mr(raw, E2e).unwrap();
        assert_eq!(mr.da_type(), None);
        assert_eq!(mr.slots.len(), 2);
        assert_eq!(serialize_mr(&mr), raw);
        assert_eq!(parse_mr(&serialize_mr(&mr), E2e).unwrap(), mr);
        assert_eq!(linearize_mr(&mr), "name = Aromi | eat type = coffee shop");
    }

    #[test]
    fn parse_multiwoz_multi_act() {
        let raw = "Restaurant-Inform ( food = italian ; area = centre ) & general-reqmore ( )";
        let mr = parse_mr(raw, MultiWoz).unwrap();
        assert_eq!(mr.acts.len(), 2);
        assert_eq!(mr.acts[1].first_slot, 2);
        assert_eq!(
            linearize_mr(&mr),
            "intent = Restaurant-Inform | food = italian | area = centre | intent = general-reqmore"
        );
        assert_eq!(parse_mr(&serialize_mr(&mr), MultiWoz).unwrap(), mr);
    }

    #[test]
    fn malformed_names_first_bad_span() {
        let err = parse_mr("inform(name[BioShock], developer 2K)", Viggo).unwrap_err();
        match err {
            Error::MalformedMr { span, .. } => assert!(span.starts_with("developer"), "{span}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_mr("inform(name[BioShock]", Viggo).is_err());
        assert!(parse_mr("name[x", E2e).is_err());
        assert!(parse_mr("nothing here", MultiWoz).is_err());
        assert!(matches!("csv".parse::<DatasetFormat>(), Err(Error::UnknownFormat(_))));
    }

    #[test]
    fn linearize_without_da_starts_with_slot() {
        let mr = parse_mr("name[Aromi]", E2e).unwrap();
        assert!(linearize_mr(&mr).starts_with("name = "));
    }

    #[test]
    fn list_value_serialized_unmodified() {
        let mut mr = parse_mr("inform(genres[action-adventure, role-playing, shooter])", Viggo).unwrap();
        mr.apply_lexicon(&Lexicon::builtin(Viggo));
        assert_eq!(mr.slots[0].list_items, ["action-adventure", "role-playing", "shooter"]);
        assert_eq!(linearize_mr(&mr), "intent = inform | genres = action-adventure, role-playing, shooter");
        assert_eq!(parse_mr(&serialize_mr(&mr), Viggo).unwrap().slots[0].value, mr.slots[0].value);
    }

    #[test]
    fn infer_booleans() {
        let vocab: Vec<String> = ["yes", "no", "true", "false"].map(String::from).to_vec();
        let mut onto: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        onto.insert("has_mac_release".into(), ["yes".into(), "no".into()].into());
        assert_eq!(infer_boolean_slots(&onto, &vocab, None), ["has_mac_release".to_string()].into());
        let mut onto2: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        onto2.insert("rating".into(), ["poor".into(), "good".into(), "excellent".into()].into());
        assert!(infer_boolean_slots(&onto2, &vocab, None).is_empty());
        let explicit: BTreeSet<String> = ["rating".to_string()].into();
        assert_eq!(infer_boolean_slots(&onto2, &vocab, Some(&explicit)), explicit);
        assert_eq!(infer_boolean_slots(&onto, &vocab, Some(&explicit)), explicit);
    }

    #[test]
    fn tokenized_input_rejects_overlap() {
        assert!(TokenizedInput::new(vec!["a".into(), "b".into()], vec![(0, 2), (1, 3)]).is_err());
        assert!(TokenizedInput::new(vec!["a".into()], vec![]).is_err());
        assert!(TokenizedInput::new(vec!["a".into(), "</s>".into()], vec![(0, 1), (0, 0)]).is_ok());
    }
}
