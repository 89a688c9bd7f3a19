//! Greedy and beam-search decoding over a [`ModelStepper`], with
//! per-hypothesis mention tracking and semantic reranking.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::aligner::{evaluate_utterance, AlignOptions};
use crate::attention::AttentionStack;
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::mr::{MeaningRepresentation, SlotSpanIndex, TokenizedInput};
use crate::tracking::{count_errors, finalize_at_eos, track_step, MentionLedger, TrackerConfig};

/// What a model backend advertises at handshake.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capabilities {
    pub model: String,
    pub num_layers: usize,
    pub num_heads: usize,
    pub vocab_size: usize,
    pub eos_token_id: u32,
    /// Surface piece per token id, used for local detokenization.
    #[serde(default)]
    pub vocab: Vec<String>,
    /// The backend handles one request at a time.
    #[serde(default)]
    pub serial: bool,
    /// The backend reports character offsets when tokenizing.
    #[serde(default = "yes")]
    pub offsets: bool,
}

fn yes() -> bool {
    true
}

/// Encoder input: token ids plus their surface form and character offsets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedInput {
    pub ids: Vec<u32>,
    pub tokens: Vec<String>,
    pub offsets: Vec<(usize, usize)>,
}

impl EncodedInput {
    pub fn tokenized(&self) -> Result<TokenizedInput> {
        if self.ids.len() != self.tokens.len() {
            return Err(Error::Schema(format!("{} ids but {} tokens", self.ids.len(), self.tokens.len())));
        }
        TokenizedInput::new(self.tokens.clone(), self.offsets.clone())
    }
}

/// Next-token candidates and cross-attention for one decoder prefix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    /// `(token id, log-probability)` sorted by descending log-probability.
    pub top: Vec<(u32, f64)>,
    pub attention: AttentionStack,
}

/// A deterministic source of next-token distributions and cross-attention.
pub trait ModelStepper: Send + Sync {
    fn capabilities(&self) -> &Capabilities;

    fn tokenize(&self, text: &str) -> Result<EncodedInput>;

    /// One output per prefix, in request order.
    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>>;
}

impl<S: ModelStepper + ?Sized> ModelStepper for &S {
    fn capabilities(&self) -> &Capabilities {
        (**self).capabilities()
    }

    fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        (**self).tokenize(text)
    }

    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        (**self).step(input, prefixes, top_k)
    }
}

impl<S: ModelStepper + ?Sized> ModelStepper for Box<S> {
    fn capabilities(&self) -> &Capabilities {
        (**self).capabilities()
    }

    fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        (**self).tokenize(text)
    }

    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        (**self).step(input, prefixes, top_k)
    }
}

/// Checks one step output against the advertised shapes and ordering.
pub fn validate_step_output(caps: &Capabilities, source_len: usize, out: &StepOutput) -> Result<()> {
    let a = &out.attention;
    if a.num_layers() != caps.num_layers || a.num_heads() != caps.num_heads {
        return Err(Error::Schema(format!(
            "attention has {} layers x {} heads, capabilities declare {} x {}",
            a.num_layers(),
            a.num_heads(),
            caps.num_layers,
            caps.num_heads
        )));
    }
    if a.source_len() != source_len {
        return Err(Error::DimensionMismatch { attention: a.source_len(), spans: source_len });
    }
    if out.top.is_empty() {
        return Err(Error::Schema("empty top-k list".into()));
    }
    for &(tok, lp) in &out.top {
        if tok as usize >= caps.vocab_size {
            return Err(Error::Schema(format!("token id {tok} outside vocabulary of {}", caps.vocab_size)));
        }
        if !lp.is_finite() || lp > 1e-9 {
            return Err(Error::Schema(format!("invalid log-probability {lp}")));
        }
    }
    if out.top.windows(2).any(|w| w[0].1 < w[1].1) {
        return Err(Error::Schema("top-k log-probabilities are not sorted in descending order".into()));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Eos,
    MaxLen,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamHypothesis {
    /// Generated tokens, without the end-of-sequence token.
    pub tokens: Vec<u32>,
    /// Sum of token log-probabilities, including end-of-sequence.
    pub logprob_sum: f64,
    pub ledger: MentionLedger,
    pub finish_reason: Option<FinishReason>,
}

impl BeamHypothesis {
    fn root() -> Self {
        BeamHypothesis { tokens: Vec::new(), logprob_sum: 0.0, ledger: MentionLedger::new(), finish_reason: None }
    }

    pub fn is_finished(&self) -> bool {
        self.finish_reason.is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecodeConfig {
    pub beam_size: usize,
    pub early_stopping: bool,
    pub max_len: usize,
    pub length_alpha: f64,
    /// Candidates requested per prefix; defaults to twice the beam size.
    pub top_k: Option<usize>,
    pub tracker: TrackerConfig,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        DecodeConfig {
            beam_size: 10,
            early_stopping: true,
            max_len: 128,
            length_alpha: 1.0,
            top_k: None,
            tracker: TrackerConfig::default(),
        }
    }
}

impl DecodeConfig {
    pub fn top_k(&self) -> usize {
        self.top_k.unwrap_or(2 * self.beam_size).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be at least 1".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("max_len must be at least 1".into()));
        }
        if self.top_k() < self.beam_size {
            return Err(Error::Config(format!("top_k {} below beam size {}", self.top_k(), self.beam_size)));
        }
        if !self.length_alpha.is_finite() {
            return Err(Error::Config("length_alpha must be finite".into()));
        }
        self.tracker.validate()
    }
}

/// `logprob_sum / len^alpha`, or the raw sum for an empty hypothesis.
pub fn length_weighted_score(h: &BeamHypothesis, alpha: f64) -> f64 {
    if h.tokens.is_empty() {
        h.logprob_sum
    } else {
        h.logprob_sum / (h.tokens.len() as f64).powf(alpha)
    }
}

struct Session<'a, S: ?Sized> {
    stepper: &'a S,
    input: &'a [u32],
    spans: &'a SlotSpanIndex,
    cfg: &'a DecodeConfig,
    step: usize,
}

impl<S: ModelStepper + ?Sized> Session<'_, S> {
    fn call(&self, prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        let wrap = |e: Error| Error::Stepper { step: self.step, source: Box::new(e) };
        let outs = self.stepper.step(self.input, prefixes, top_k).map_err(wrap)?;
        if outs.len() != prefixes.len() {
            return Err(wrap(Error::Schema(format!("{} outputs for {} prefixes", outs.len(), prefixes.len()))));
        }
        let caps = self.stepper.capabilities();
        for out in &outs {
            validate_step_output(caps, self.input.len(), out).map_err(wrap)?;
        }
        Ok(outs)
    }

    /// Runs the end-of-sequence component on hypotheses cut off at max_len,
    /// using the attention for the token they would generate next.
    fn force_finish(&self, live: Vec<BeamHypothesis>) -> Result<Vec<BeamHypothesis>> {
        if live.is_empty() {
            return Ok(live);
        }
        let prefixes: Vec<Vec<u32>> = live.iter().map(|h| h.tokens.clone()).collect();
        let outs = self.call(&prefixes, 1)?;
        live.into_iter()
            .zip(outs)
            .map(|(mut h, out)| {
                h.ledger = finalize_at_eos(&h.ledger, &out.attention, self.spans, &self.cfg.tracker)?;
                h.finish_reason = Some(FinishReason::MaxLen);
                Ok(h)
            })
            .collect()
    }
}

/// Extends with the most probable token until end-of-sequence or max_len.
pub fn greedy_decode<S: ModelStepper + ?Sized>(
    stepper: &S,
    input: &[u32],
    spans: &SlotSpanIndex,
    cfg: &DecodeConfig,
) -> Result<BeamHypothesis> {
    cfg.validate()?;
    let eos = stepper.capabilities().eos_token_id;
    let mut session = Session { stepper, input, spans, cfg, step: 0 };
    let mut hyp = BeamHypothesis::root();
    while session.step < cfg.max_len {
        let out = session.call(std::slice::from_ref(&hyp.tokens), 1)?.remove(0);
        let ledger = track_step(&hyp.ledger, &out.attention, spans, &cfg.tracker)?;
        let (tok, lp) = out.top[0];
        hyp.logprob_sum += lp;
        if tok == eos {
            hyp.ledger = finalize_at_eos(&ledger, &out.attention, spans, &cfg.tracker)?;
            hyp.finish_reason = Some(FinishReason::Eos);
            return Ok(hyp);
        }
        hyp.ledger = ledger;
        hyp.tokens.push(tok);
        session.step += 1;
    }
    Ok(session.force_finish(vec![hyp])?.remove(0))
}

struct Candidate {
    score: f64,
    parent: usize,
    position: usize,
    token: u32,
    logprob: f64,
}

/// Beam search over summed log-probabilities. Returns the finished pool,
/// best length-weighted score first.
pub fn beam_decode<S: ModelStepper + ?Sized>(
    stepper: &S,
    input: &[u32],
    spans: &SlotSpanIndex,
    cfg: &DecodeConfig,
) -> Result<Vec<BeamHypothesis>> {
    cfg.validate()?;
    let eos = stepper.capabilities().eos_token_id;
    let beam = cfg.beam_size;
    let mut session = Session { stepper, input, spans, cfg, step: 0 };
    let mut live = vec![BeamHypothesis::root()];
    let mut done: Vec<BeamHypothesis> = Vec::new();
    let mut stopped = false;

    while session.step < cfg.max_len && !live.is_empty() {
        let prefixes: Vec<Vec<u32>> = live.iter().map(|h| h.tokens.clone()).collect();
        let outs = session.call(&prefixes, cfg.top_k())?;
        let ledgers = live
            .iter()
            .zip(&outs)
            .map(|(h, out)| track_step(&h.ledger, &out.attention, spans, &cfg.tracker))
            .collect::<Result<Vec<_>>>()?;

        let mut candidates: Vec<Candidate> = Vec::new();
        for (parent, (h, out)) in live.iter().zip(&outs).enumerate() {
            for (position, &(token, logprob)) in out.top.iter().enumerate() {
                candidates.push(Candidate { score: h.logprob_sum + logprob, parent, position, token, logprob });
            }
        }
        candidates.sort_by(|a, b| {
            b.score.total_cmp(&a.score).then(a.parent.cmp(&b.parent)).then(a.position.cmp(&b.position))
        });

        let mut next = Vec::with_capacity(beam);
        for (rank, c) in candidates.iter().enumerate() {
            let parent = &live[c.parent];
            if c.token == eos {
                if rank < beam {
                    let ledger = finalize_at_eos(&ledgers[c.parent], &outs[c.parent].attention, spans, &cfg.tracker)?;
                    push_done(
                        &mut done,
                        BeamHypothesis {
                            tokens: parent.tokens.clone(),
                            logprob_sum: c.score,
                            ledger,
                            finish_reason: Some(FinishReason::Eos),
                        },
                        cfg,
                    );
                }
                continue;
            }
            debug_assert!(c.logprob <= 1e-9);
            let mut tokens = parent.tokens.clone();
            tokens.push(c.token);
            next.push(BeamHypothesis {
                tokens,
                logprob_sum: c.score,
                ledger: ledgers[c.parent].clone(),
                finish_reason: None,
            });
            if next.len() == beam {
                break;
            }
        }
        session.step += 1;
        live = next;
        if cfg.early_stopping && done.len() >= beam {
            stopped = true;
            break;
        }
    }

    if !stopped {
        for h in session.force_finish(live)? {
            push_done(&mut done, h, cfg);
        }
    }
    if done.is_empty() {
        return Err(Error::EmptyPool);
    }
    sort_pool(&mut done, cfg.length_alpha);
    Ok(done)
}

fn push_done(done: &mut Vec<BeamHypothesis>, h: BeamHypothesis, cfg: &DecodeConfig) {
    done.push(h);
    if !cfg.early_stopping && done.len() > cfg.beam_size {
        sort_pool(done, cfg.length_alpha);
        done.truncate(cfg.beam_size);
    }
}

/// Stable sort by descending length-weighted score.
fn sort_pool(pool: &mut [BeamHypothesis], alpha: f64) {
    pool.sort_by(|a, b| length_weighted_score(b, alpha).total_cmp(&length_weighted_score(a, alpha)));
}

/// Index of the candidate with the fewest errors; ties go to the higher
/// length-weighted score, then to the lower pool index.
pub fn rerank_by_errors(pool: &[BeamHypothesis], errors: &[usize], alpha: f64) -> Result<usize> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    assert_eq!(pool.len(), errors.len(), "one error count per candidate");
    let best = (0..pool.len())
        .min_by(|&a, &b| {
            errors[a]
                .cmp(&errors[b])
                .then_with(|| {
                    length_weighted_score(&pool[b], alpha)
                        .partial_cmp(&length_weighted_score(&pool[a], alpha))
                        .unwrap_or(Ordering::Equal)
                })
                .then(a.cmp(&b))
        })
        .expect("pool is non-empty");
    Ok(best)
}

/// Selects the candidate with the fewest slots left untracked by its ledger.
pub fn rerank_semantic(pool: &[BeamHypothesis], mr: &MeaningRepresentation, alpha: f64) -> Result<usize> {
    let errors: Vec<usize> = pool.iter().map(|h| count_errors(&h.ledger, mr)).collect();
    rerank_by_errors(pool, &errors, alpha)
}

/// Selects the candidate whose detokenized text has the fewest missed,
/// incorrect and repeated slot mentions according to the slot aligner.
pub fn rerank_with_aligner(
    pool: &[BeamHypothesis],
    mr: &MeaningRepresentation,
    lex: &Lexicon,
    opts: &AlignOptions,
    vocab: &[String],
    alpha: f64,
) -> Result<usize> {
    let errors = pool
        .iter()
        .map(|h| Ok(evaluate_utterance(&detokenize(vocab, &h.tokens), mr, lex, opts)?.breakdown.errors()))
        .collect::<Result<Vec<_>>>()?;
    rerank_by_errors(pool, &errors, alpha)
}

/// Joins token pieces into text. `▁` and `Ġ` mark word starts; pieces of
/// the form `<...>` are special tokens and are dropped.
pub fn detokenize(vocab: &[String], tokens: &[u32]) -> String {
    let mut out = String::new();
    for &t in tokens {
        let Some(piece) = vocab.get(t as usize) else { continue };
        if piece.len() > 2 && piece.starts_with('<') && piece.ends_with('>') {
            continue;
        }
        out.push_str(&piece.replace(['▁', 'Ġ'], " "));
    }
    out.trim().to_string()
}
