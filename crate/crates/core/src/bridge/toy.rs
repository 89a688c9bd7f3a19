//! Scripted deterministic model for tests and demos.
//!
//! A [`ToySpec`] lists, per encoder input, the next-token log-probabilities
//! and cross-attention for each decoder prefix. Attention is given either as
//! explicit rows or as peaks (fixed weights on chosen source tokens, the
//! remaining mass spread evenly over the other tokens).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionStack;
use crate::decoder::{Capabilities, EncodedInput, ModelStepper, StepOutput};
use crate::error::{Error, Result};

/// Splits text into alphanumeric runs and single punctuation characters,
/// returning pieces with character offsets.
pub fn basic_tokenize(text: &str) -> (Vec<String>, Vec<(usize, usize)>) {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut offsets = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_alphanumeric() {
            while i < chars.len() && chars[i].is_alphanumeric() {
                i += 1;
            }
        } else {
            i += 1;
        }
        tokens.push(chars[start..i].iter().collect());
        offsets.push((start, i));
    }
    (tokens, offsets)
}

/// Stable encoder id for a source piece.
pub fn piece_id(piece: &str) -> u32 {
    let mut h: u32 = 0x811c_9dc5;
    for b in piece.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    h & 0x7fff_ffff
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Peak {
    /// Source token index.
    pub token: usize,
    pub weight: f64,
    /// Zero-based layers this peak applies to; all when absent.
    #[serde(default)]
    pub layers: Option<Vec<usize>>,
    /// Zero-based heads this peak applies to; all when absent.
    #[serde(default)]
    pub heads: Option<Vec<usize>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyAttention {
    /// Explicit `[layer][head][source]` rows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub peaks: Vec<Peak>,
}

impl ToyAttention {
    pub fn peaks(peaks: Vec<Peak>) -> Self {
        ToyAttention { rows: None, peaks }
    }

    fn build(&self, layers: usize, heads: usize, source_len: usize) -> Result<AttentionStack> {
        if let Some(rows) = &self.rows {
            let stack = AttentionStack::from_rows(rows.clone()).map_err(|e| Error::ToySpec(e.to_string()))?;
            if stack.num_layers() != layers || stack.num_heads() != heads || stack.source_len() != source_len {
                return Err(Error::ToySpec(format!(
                    "attention rows have shape [{}, {}, {}], expected [{layers}, {heads}, {source_len}]",
                    stack.num_layers(),
                    stack.num_heads(),
                    stack.source_len()
                )));
            }
            return Ok(stack);
        }
        let mut data = Vec::with_capacity(layers * heads * source_len);
        for l in 0..layers {
            for h in 0..heads {
                let mut row = vec![None; source_len];
                for p in &self.peaks {
                    let applies = p.layers.as_ref().is_none_or(|ls| ls.contains(&l))
                        && p.heads.as_ref().is_none_or(|hs| hs.contains(&h));
                    if !applies {
                        continue;
                    }
                    if p.token >= source_len {
                        return Err(Error::ToySpec(format!(
                            "peak on token {} beyond source length {source_len}",
                            p.token
                        )));
                    }
                    row[p.token] = Some(p.weight);
                }
                let fixed: f64 = row.iter().flatten().sum();
                let free = row.iter().filter(|w| w.is_none()).count();
                let rest = if free > 0 { (1.0 - fixed) / free as f64 } else { 0.0 };
                if rest < -1e-12 || (free == 0 && (fixed - 1.0).abs() > 1e-9) {
                    return Err(Error::ToySpec(format!("peaks in layer {l}, head {h} sum to {fixed}")));
                }
                data.extend(row.into_iter().map(|w| w.unwrap_or(rest.max(0.0))));
            }
        }
        AttentionStack::new(layers, heads, source_len, data).map_err(|e| Error::ToySpec(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyStep {
    pub prefix: Vec<u32>,
    /// `(token, log-probability)` pairs in any order.
    pub next: Vec<(u32, f64)>,
    #[serde(default)]
    pub attention: ToyAttention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyDefault {
    pub next: Vec<(u32, f64)>,
    #[serde(default)]
    pub attention: ToyAttention,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyInput {
    pub text: String,
    /// Source pieces and offsets; [`basic_tokenize`] when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offsets: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub steps: Vec<ToyStep>,
    /// Used for prefixes without a scripted step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ToyDefault>,
}

/// Next-token log-probabilities and attention for one prefix.
type ScriptedStep = (Vec<(u32, f64)>, ToyAttention);

/// One generated token of a scripted path: the token, its
/// log-probability, and the attention of the step that emits it.
#[derive(Clone, Debug, PartialEq)]
pub struct PathToken {
    pub token: u32,
    pub logprob: f64,
    pub attention: ToyAttention,
}

impl ToyInput {
    /// Scripts an input from complete decoder paths. Paths sharing a prefix
    /// share that step, so they must agree on its attention and on the
    /// log-probability of each shared token.
    pub fn from_paths(text: impl Into<String>, paths: &[Vec<PathToken>]) -> Result<Self> {
        let mut order: Vec<Vec<u32>> = Vec::new();
        let mut nodes: HashMap<Vec<u32>, ScriptedStep> = HashMap::new();
        for path in paths {
            let mut prefix = Vec::new();
            for pt in path {
                let node = nodes.entry(prefix.clone()).or_insert_with(|| {
                    order.push(prefix.clone());
                    (Vec::new(), pt.attention.clone())
                });
                if node.1 != pt.attention {
                    return Err(Error::ToySpec(format!("paths disagree on the attention after {prefix:?}")));
                }
                match node.0.iter().find(|(t, _)| *t == pt.token) {
                    Some(&(_, lp)) if lp != pt.logprob => {
                        return Err(Error::ToySpec(format!("paths disagree on token {} after {prefix:?}", pt.token)));
                    }
                    Some(_) => {}
                    None => node.0.push((pt.token, pt.logprob)),
                }
                prefix.push(pt.token);
            }
        }
        let steps = order
            .into_iter()
            .map(|prefix| {
                let (next, attention) = nodes.remove(&prefix).expect("every prefix has a node");
                ToyStep { prefix, next, attention }
            })
            .collect();
        Ok(ToyInput { text: text.into(), tokens: None, offsets: None, steps, default: None })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySpec {
    #[serde(default = "toy_name")]
    pub model: String,
    pub vocab: Vec<String>,
    pub eos: u32,
    pub num_layers: usize,
    pub num_heads: usize,
    pub inputs: Vec<ToyInput>,
    /// Used when neither the step nor the input script covers a prefix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<ToyDefault>,
}

fn toy_name() -> String {
    "toy".to_string()
}

impl ToySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ToySpec(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
        Self::from_json(&text).map_err(|e| e.with_context(path.display().to_string()))
    }

    /// Position of `token` in the vocabulary.
    pub fn id(&self, token: &str) -> Option<u32> {
        self.vocab.iter().position(|v| v == token).map(|i| i as u32)
    }
}

struct Script {
    encoded: EncodedInput,
    steps: HashMap<Vec<u32>, StepOutput>,
    default: Option<StepOutput>,
}

/// Deterministic stepper over a validated [`ToySpec`].
pub struct ToyStepper {
    caps: Capabilities,
    scripts: Vec<Script>,
    by_text: HashMap<String, usize>,
    by_ids: HashMap<Vec<u32>, usize>,
    default: Option<ToyDefault>,
}

impl ToyStepper {
    pub fn new(spec: ToySpec) -> Result<Self> {
        if spec.num_layers == 0 || spec.num_heads == 0 {
            return Err(Error::ToySpec("layers and heads must be positive".into()));
        }
        if spec.eos as usize >= spec.vocab.len() {
            return Err(Error::ToySpec(format!("eos id {} outside vocabulary", spec.eos)));
        }
        let caps = Capabilities {
            model: spec.model.clone(),
            num_layers: spec.num_layers,
            num_heads: spec.num_heads,
            vocab_size: spec.vocab.len(),
            eos_token_id: spec.eos,
            vocab: spec.vocab.clone(),
            serial: false,
            offsets: true,
        };
        let mut scripts = Vec::new();
        let mut by_text = HashMap::new();
        let mut by_ids = HashMap::new();
        for (i, input) in spec.inputs.iter().enumerate() {
            let (tokens, offsets) = match (&input.tokens, &input.offsets) {
                (Some(t), Some(o)) => (t.clone(), o.clone()),
                (None, None) => basic_tokenize(&input.text),
                _ => return Err(Error::ToySpec(format!("input {i}: tokens and offsets go together"))),
            };
            let encoded = EncodedInput { ids: tokens.iter().map(|t| piece_id(t)).collect(), tokens, offsets };
            encoded.tokenized().map_err(|e| Error::ToySpec(format!("input {i}: {e}")))?;
            let n = encoded.ids.len();
            if n == 0 {
                return Err(Error::ToySpec(format!("input {i} has no tokens")));
            }
            let build = |next: &[(u32, f64)], att: &ToyAttention, what: &str| -> Result<StepOutput> {
                let top = sorted_next(next, spec.vocab.len())
                    .map_err(|e| Error::ToySpec(format!("input {i}, {what}: {e}")))?;
                let attention = att
                    .build(spec.num_layers, spec.num_heads, n)
                    .map_err(|e| Error::ToySpec(format!("input {i}, {what}: {e}")))?;
                Ok(StepOutput { top, attention })
            };
            let mut steps = HashMap::new();
            for s in &input.steps {
                let out = build(&s.next, &s.attention, &format!("prefix {:?}", s.prefix))?;
                if steps.insert(s.prefix.clone(), out).is_some() {
                    return Err(Error::ToySpec(format!("input {i}: prefix {:?} scripted twice", s.prefix)));
                }
            }
            let default = input.default.as_ref().map(|d| build(&d.next, &d.attention, "default")).transpose()?;
            if by_text.insert(input.text.clone(), i).is_some() || by_ids.insert(encoded.ids.clone(), i).is_some() {
                return Err(Error::ToySpec(format!("input {i} duplicates an earlier input")));
            }
            scripts.push(Script { encoded, steps, default });
        }
        if let Some(d) = &spec.default {
            sorted_next(&d.next, spec.vocab.len()).map_err(Error::ToySpec)?;
        }
        Ok(ToyStepper { caps, scripts, by_text, by_ids, default: spec.default })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::new(ToySpec::from_json(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(ToySpec::load(path)?)
    }
}

fn sorted_next(next: &[(u32, f64)], vocab: usize) -> std::result::Result<Vec<(u32, f64)>, String> {
    if next.is_empty() {
        return Err("empty next-token list".into());
    }
    let mut seen = BTreeMap::new();
    for &(tok, lp) in next {
        if tok as usize >= vocab {
            return Err(format!("token {tok} outside vocabulary"));
        }
        if !lp.is_finite() || lp > 0.0 {
            return Err(format!("invalid log-probability {lp} for token {tok}"));
        }
        if seen.insert(tok, lp).is_some() {
            return Err(format!("token {tok} listed twice"));
        }
    }
    let mass: f64 = next.iter().map(|(_, lp)| lp.exp()).sum();
    if mass > 1.0 + 1e-6 {
        return Err(format!("probabilities sum to {mass}"));
    }
    let mut top = next.to_vec();
    top.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(top)
}

impl ModelStepper for ToyStepper {
    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        if let Some(&i) = self.by_text.get(text) {
            return Ok(self.scripts[i].encoded.clone());
        }
        let (tokens, offsets) = basic_tokenize(text);
        Ok(EncodedInput { ids: tokens.iter().map(|t| piece_id(t)).collect(), tokens, offsets })
    }

    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        let script = self.by_ids.get(input).map(|&i| &self.scripts[i]);
        prefixes
            .iter()
            .map(|prefix| {
                let out = match script {
                    Some(s) => s.steps.get(prefix).or(s.default.as_ref()).cloned(),
                    None => None,
                };
                let mut out = match (out, &self.default) {
                    (Some(out), _) => out,
                    (None, Some(d)) => StepOutput {
                        top: sorted_next(&d.next, self.caps.vocab_size).map_err(Error::ToySpec)?,
                        attention: d.attention.build(self.caps.num_layers, self.caps.num_heads, input.len())?,
                    },
                    (None, None) => {
                        return Err(Error::ToySpec(format!("no script for prefix {prefix:?}")));
                    }
                };
                out.top.truncate(top_k.max(1));
                Ok(out)
            })
            .collect()
    }
}
