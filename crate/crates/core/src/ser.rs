//! Corpus-level slot error rate.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::{evaluate_utterance, AlignOptions, SlotError, SlotErrorBreakdown};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, SlotCategory};
use crate::mr::{serialize_mr, MeaningRepresentation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub index: usize,
    pub mr: String,
    pub utterance: String,
    pub breakdown: SlotErrorBreakdown,
    pub errors: Vec<SlotError>,
    /// Some non-Boolean value is not contained verbatim in the utterance.
    pub exact_mismatch: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusReport {
    pub ser: f64,
    pub ser_exact: f64,
    pub totals: SlotErrorBreakdown,
    pub utterances: usize,
    pub per_mr: Vec<PairReport>,
}

impl CorpusReport {
    /// Pairs with at least one aligner error, in corpus order.
    pub fn exemplars(&self, limit: usize) -> impl Iterator<Item = &PairReport> {
        self.per_mr.iter().filter(|p| !p.errors.is_empty()).take(limit)
    }

    /// Summary table followed by up to `max_exemplars` erroneous pairs.
    pub fn to_text(&self, max_exemplars: usize) -> String {
        let t = &self.totals;
        let mut out = String::new();
        let _ = writeln!(out, "{:<14}{:>10}", "utterances", self.utterances);
        let _ = writeln!(out, "{:<14}{:>10}", "slots", t.total_slots);
        let _ = writeln!(out, "{:<14}{:>10}", "missed", t.missed);
        let _ = writeln!(out, "{:<14}{:>10}", "incorrect", t.incorrect);
        let _ = writeln!(out, "{:<14}{:>10}", "repeated", t.repeated);
        let _ = writeln!(out, "{:<14}{:>9.2}%", "SER", self.ser);
        let _ = writeln!(out, "{:<14}{:>9.2}%", "SER (exact)", self.ser_exact);
        for p in self.exemplars(max_exemplars) {
            let _ = writeln!(out, "\n#{} {}", p.index, p.mr);
            let _ = writeln!(out, "  {}", p.utterance);
            for e in &p.errors {
                let kind =
                    serde_json::to_value(e.kind).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default();
                let _ = writeln!(out, "  - {kind}: {} = {}", e.slot_name, e.value);
            }
        }
        out
    }
}

/// Whether some non-Boolean value (list items taken individually) is
/// missing from the utterance as a case-insensitive substring.
pub fn exact_mismatch(mr: &MeaningRepresentation, utterance: &str) -> bool {
    let utt = utterance.to_lowercase();
    mr.slots.iter().filter(|s| s.category != SlotCategory::Boolean).any(|s| {
        let items: Vec<&str> = if s.list_items.is_empty() {
            vec![s.value.as_str()]
        } else {
            s.list_items.iter().map(String::as_str).collect()
        };
        items.iter().any(|v| !utt.contains(&v.trim().to_lowercase()))
    })
}

fn percent(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64 * 100.0
    }
}

/// Aligns every pair and aggregates the error counts.
pub fn evaluate_corpus(
    pairs: &[(MeaningRepresentation, String)],
    lex: &Lexicon,
    opts: &AlignOptions,
) -> Result<CorpusReport> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let per_mr = pairs
        .par_iter()
        .enumerate()
        .map(|(index, (mr, utt))| {
            let aligned =
                evaluate_utterance(utt, mr, lex, opts).map_err(|e| e.with_context(format!("pair {index}")))?;
            Ok(PairReport {
                index,
                mr: serialize_mr(mr),
                utterance: utt.clone(),
                breakdown: aligned.breakdown,
                errors: aligned.errors,
                exact_mismatch: exact_mismatch(mr, utt),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut totals = SlotErrorBreakdown::default();
    for p in &per_mr {
        totals.add(&p.breakdown);
    }
    let mismatched = per_mr.iter().filter(|p| p.exact_mismatch).count();
    Ok(CorpusReport {
        ser: percent(totals.errors(), totals.total_slots),
        ser_exact: percent(mismatched, per_mr.len()),
        totals,
        utterances: per_mr.len(),
        per_mr,
    })
}

/// Σ(missed + incorrect + repeated) / Σ slots × 100.
pub fn corpus_ser(pairs: &[(MeaningRepresentation, String)], lex: &Lexicon, opts: &AlignOptions) -> Result<f64> {
    Ok(evaluate_corpus(pairs, lex, opts)?.ser)
}

/// Percentage of utterances failing the naive verbatim value check.
pub fn corpus_ser_exact(pairs: &[(MeaningRepresentation, String)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let n = pairs.iter().filter(|(mr, utt)| exact_mismatch(mr, utt)).count();
    Ok(percent(n, pairs.len()))
}
