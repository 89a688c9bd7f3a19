//! End-to-end decoding of MRs: linearize, tokenize, locate slot spans,
//! decode, rerank and report.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::AlignOptions;
use crate::bridge::trace::{Recorder, TraceFile};
use crate::decoder::{
    beam_decode, detokenize, greedy_decode, length_weighted_score, rerank_semantic, rerank_with_aligner,
    BeamHypothesis, DecodeConfig, EncodedInput, FinishReason, ModelStepper,
};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::mr::{compute_slot_spans, linearize_mr, MeaningRepresentation, SlotSpanIndex};
use crate::tracking::{count_errors, Confidence};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "greedy")]
    Greedy,
    #[serde(rename = "beam")]
    Beam,
    #[serde(rename = "beam+aligner")]
    BeamAligner,
    #[serde(rename = "seaguide")]
    Seaguide,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Greedy, Strategy::Beam, Strategy::BeamAligner, Strategy::Seaguide];
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "greedy" | "gs" => Ok(Strategy::Greedy),
            "beam" | "bs" => Ok(Strategy::Beam),
            "beam+aligner" | "aligner" | "sa" => Ok(Strategy::BeamAligner),
            "seaguide" | "sg" | "semantic" => Ok(Strategy::Seaguide),
            other => Err(Error::Config(format!("unknown strategy `{other}`"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
            Strategy::BeamAligner => "beam+aligner",
            Strategy::Seaguide => "seaguide",
        })
    }
}

/// An MR ready for decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub mr: MeaningRepresentation,
    pub linearized: String,
    pub encoded: EncodedInput,
    pub spans: SlotSpanIndex,
}

pub fn prepare<S: ModelStepper + ?Sized>(stepper: &S, mr: &MeaningRepresentation) -> Result<Prepared> {
    let linearized = linearize_mr(mr);
    let encoded = stepper.tokenize(&linearized)?;
    let spans = compute_slot_spans(mr, &linearized, &encoded.tokenized()?)?;
    Ok(Prepared { mr: mr.clone(), linearized, encoded, spans })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub slot: String,
    pub confidence: Confidence,
    pub steps: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    pub tokens: Vec<u32>,
    pub logprob_sum: f64,
    pub score: f64,
    pub tracked_errors: usize,
    pub finish_reason: Option<FinishReason>,
    pub ledger: Vec<LedgerEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutcome {
    pub strategy: Strategy,
    pub utterance: String,
    /// Index of the chosen candidate in `pool`.
    pub selected: usize,
    pub pool: Vec<Candidate>,
}

impl DecodeOutcome {
    pub fn chosen(&self) -> &Candidate {
        &self.pool[self.selected]
    }
}

fn summarize(h: &BeamHypothesis, mr: &MeaningRepresentation, vocab: &[String], alpha: f64) -> Candidate {
    Candidate {
        text: detokenize(vocab, &h.tokens),
        tokens: h.tokens.clone(),
        logprob_sum: h.logprob_sum,
        score: length_weighted_score(h, alpha),
        tracked_errors: count_errors(&h.ledger, mr),
        finish_reason: h.finish_reason,
        ledger: h
            .ledger
            .records()
            .map(|r| LedgerEntry {
                slot: mr.slot(r.slot).name.clone(),
                confidence: r.confidence,
                steps: r.steps.iter().copied().collect(),
            })
            .collect(),
    }
}

/// Shared settings for decoding a batch of MRs.
#[derive(Clone, Debug)]
pub struct DecodeSettings<'a> {
    pub strategy: Strategy,
    pub decode: DecodeConfig,
    pub lexicon: &'a Lexicon,
    pub align: AlignOptions,
}

/// The finished pool for a prepared MR: the greedy hypothesis alone, or
/// the beam pool.
pub fn decode_pool<S: ModelStepper + ?Sized>(
    stepper: &S,
    p: &Prepared,
    strategy: Strategy,
    cfg: &DecodeConfig,
) -> Result<Vec<BeamHypothesis>> {
    match strategy {
        Strategy::Greedy => Ok(vec![greedy_decode(stepper, &p.encoded.ids, &p.spans, cfg)?]),
        _ => beam_decode(stepper, &p.encoded.ids, &p.spans, cfg),
    }
}

/// Picks a candidate from a pool per strategy.
pub fn select(
    pool: &[BeamHypothesis],
    p: &Prepared,
    strategy: Strategy,
    settings: &DecodeSettings,
    vocab: &[String],
) -> Result<usize> {
    let alpha = settings.decode.length_alpha;
    match strategy {
        Strategy::Greedy | Strategy::Beam => {
            if pool.is_empty() {
                Err(Error::EmptyPool)
            } else {
                Ok(0)
            }
        }
        Strategy::Seaguide => rerank_semantic(pool, &p.mr, alpha),
        Strategy::BeamAligner => rerank_with_aligner(pool, &p.mr, settings.lexicon, &settings.align, vocab, alpha),
    }
}

pub fn decode_prepared<S: ModelStepper + ?Sized>(
    stepper: &S,
    p: &Prepared,
    settings: &DecodeSettings,
) -> Result<DecodeOutcome> {
    let pool = decode_pool(stepper, p, settings.strategy, &settings.decode)?;
    let vocab = &stepper.capabilities().vocab;
    let selected = select(&pool, p, settings.strategy, settings, vocab)?;
    let pool: Vec<Candidate> = pool.iter().map(|h| summarize(h, &p.mr, vocab, settings.decode.length_alpha)).collect();
    Ok(DecodeOutcome { strategy: settings.strategy, utterance: pool[selected].text.clone(), selected, pool })
}

/// Maps `f` over items in parallel unless the stepper is serial; results
/// keep input order.
pub fn ordered_map<T, R, F>(serial: bool, items: &[T], f: F) -> Result<Vec<R>>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> Result<R> + Sync + Send,
{
    if serial {
        items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
    } else {
        items.par_iter().enumerate().map(|(i, t)| f(i, t)).collect()
    }
}

/// Decodes every MR; outcomes are in input order.
pub fn decode_corpus<S: ModelStepper + ?Sized>(
    stepper: &S,
    mrs: &[MeaningRepresentation],
    settings: &DecodeSettings,
) -> Result<Vec<DecodeOutcome>> {
    ordered_map(stepper.capabilities().serial, mrs, |i, mr| {
        prepare(stepper, mr)
            .and_then(|p| decode_prepared(stepper, &p, settings))
            .map_err(|e| e.with_context(format!("MR {i}")))
    })
}

/// Decodes every MR with each strategy through a recorder and returns the
/// trace, which replays all of those decodes.
pub fn record_trace<S: ModelStepper>(
    stepper: &S,
    mrs: &[MeaningRepresentation],
    settings: &DecodeSettings,
    strategies: &[Strategy],
) -> Result<TraceFile> {
    let recorder = Recorder::new(stepper);
    for (i, mr) in mrs.iter().enumerate() {
        let p = prepare(&recorder, mr).map_err(|e| e.with_context(format!("MR {i}")))?;
        for &strategy in strategies {
            let s = DecodeSettings { strategy, ..settings.clone() };
            decode_prepared(&recorder, &p, &s).map_err(|e| e.with_context(format!("MR {i}, {strategy}")))?;
        }
    }
    Ok(recorder.trace())
}
