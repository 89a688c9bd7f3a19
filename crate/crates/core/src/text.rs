//! Character-level text normalization and phrase search.
//!
//! Normalization maps each character to exactly one character, so offsets
//! into the normalized text are offsets into the original.

use std::ops::Range;

/// Lowercases, maps hyphens to spaces and curly apostrophes to straight ones.
pub fn normalize(text: &str) -> Vec<char> {
    text.chars().map(normalize_char).collect()
}

fn normalize_char(c: char) -> char {
    match c {
        '-' | '‐' | '–' | '—' => ' ',
        '’' | '‘' => '\'',
        c if c.is_ascii() => c.to_ascii_lowercase(),
        c => {
            let mut lower = c.to_lowercase();
            match (lower.next(), lower.next()) {
                (Some(l), None) => l,
                _ => c,
            }
        }
    }
}

/// Normalizes a search pattern and collapses runs of whitespace.
pub fn normalize_pattern(pattern: &str) -> Vec<char> {
    let mut out: Vec<char> = Vec::with_capacity(pattern.len());
    for c in normalize(pattern.trim()) {
        if c.is_whitespace() {
            if out.last().is_some_and(|l| !l.is_whitespace()) {
                out.push(' ');
            }
        } else {
            out.push(c);
        }
    }
    while out.last().is_some_and(|c| c.is_whitespace()) {
        out.pop();
    }
    out
}

/// A pattern occurrence in a normalized text.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Hit {
    pub range: Range<usize>,
}

impl Hit {
    pub fn start(&self) -> usize {
        self.range.start
    }

    pub fn overlaps(&self, other: &Hit) -> bool {
        self.range.start < other.range.end && other.range.start < self.range.end
    }
}

/// Leftmost occurrence at or after `from` bounded by non-alphanumeric
/// characters (or the text edges) wherever the pattern's own edge is
/// alphanumeric.
pub fn find_phrase(text: &[char], pattern: &[char], from: usize) -> Option<Hit> {
    if pattern.is_empty() || pattern.len() > text.len() {
        return None;
    }
    let need_left = pattern[0].is_alphanumeric();
    let need_right = pattern[pattern.len() - 1].is_alphanumeric();
    (from..=text.len() - pattern.len()).find_map(|i| {
        let end = i + pattern.len();
        let body = text[i..end].iter().zip(pattern).all(|(t, p)| t == p || (p.is_whitespace() && t.is_whitespace()));
        let left_ok = !need_left || i == 0 || !text[i - 1].is_alphanumeric();
        let right_ok = !need_right || end == text.len() || !text[end].is_alphanumeric();
        (body && left_ok && right_ok).then_some(Hit { range: i..end })
    })
}

/// All non-overlapping occurrences, left to right.
pub fn find_all(text: &[char], pattern: &[char]) -> Vec<Hit> {
    let mut hits = Vec::new();
    let mut from = 0;
    while let Some(hit) = find_phrase(text, pattern, from) {
        from = hit.range.end;
        hits.push(hit);
    }
    hits
}

/// A word token: a maximal alphanumeric run, allowing apostrophes between
/// alphanumeric characters.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Word {
    pub range: Range<usize>,
    pub text: String,
}

pub fn words(text: &[char]) -> Vec<Word> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < text.len() {
        if !text[i].is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        while i < text.len()
            && (text[i].is_alphanumeric() || (text[i] == '\'' && i + 1 < text.len() && text[i + 1].is_alphanumeric()))
        {
            i += 1;
        }
        out.push(Word { range: start..i, text: text[start..i].iter().collect() });
    }
    out
}

/// Sentence ranges: a sentence ends at `.`, `!` or `?` followed by whitespace.
pub fn sentences(text: &[char]) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..text.len() {
        if matches!(text[i], '.' | '!' | '?') && text.get(i + 1).is_some_and(|c| c.is_whitespace()) {
            out.push(start..i + 1);
            start = i + 1;
        }
    }
    if start < text.len() || out.is_empty() {
        out.push(start..text.len());
    }
    out
}

/// Index of the sentence containing character `pos`.
pub fn sentence_index(sentences: &[Range<usize>], pos: usize) -> usize {
    sentences.iter().position(|s| s.contains(&pos)).unwrap_or(sentences.len().saturating_sub(1))
}

/// Index of the first word starting at or after `pos`.
pub fn word_index_at(words: &[Word], pos: usize) -> usize {
    words.iter().position(|w| w.range.end > pos).unwrap_or(words.len())
}

/// Word strings of a pattern.
pub fn pattern_words(pattern: &str) -> Vec<String> {
    words(&normalize(pattern)).into_iter().map(|w| w.text).collect()
}
