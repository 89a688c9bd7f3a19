//! Recorded step traces: capture every step a decode makes, then replay it
//! without a model.
//!
//! A trace file is newline-delimited JSON. The first line is the header
//! (capabilities and the tokenized inputs); every following line is one
//! step frame keyed by input index and decoder prefix.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionStack;
use crate::bridge::protocol::read_line;
use crate::decoder::{validate_step_output, Capabilities, EncodedInput, ModelStepper, StepOutput};
use crate::error::{Error, Result};

pub const TRACE_VERSION: u32 = 1;

/// FNV-1a over the input ids, a separator, then the prefix ids.
pub fn prefix_hash(input: &[u32], prefix: &[u32]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut feed = |x: u32| {
        for b in x.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    };
    input.iter().copied().for_each(&mut feed);
    feed(u32::MAX);
    prefix.iter().copied().for_each(&mut feed);
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceInput {
    pub linearized: String,
    #[serde(flatten)]
    pub encoded: EncodedInput,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceHeader {
    pub kind: String,
    pub version: u32,
    pub capabilities: Capabilities,
    pub inputs: Vec<TraceInput>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceStep {
    pub kind: String,
    pub input: usize,
    /// [`prefix_hash`] as 16 hex digits.
    pub hash: String,
    pub prefix: Vec<u32>,
    pub top: Vec<(u32, f64)>,
    pub attention: AttentionStack,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub steps: Vec<TraceStep>,
}

impl TraceFile {
    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut w = BufWriter::new(w);
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n")?;
        for s in &self.steps {
            serde_json::to_writer(&mut w, s)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
        self.write_to(file)
    }

    pub fn to_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut r = BufReader::new(r);
        let Some(first) = read_line(&mut r)? else {
            return Err(Error::Data("trace file is empty".into()));
        };
        let header: TraceHeader =
            serde_json::from_str(&first).map_err(|e| Error::Data(format!("trace header: {e}")))?;
        if header.kind != "header" || header.version != TRACE_VERSION {
            return Err(Error::Data(format!("unsupported trace header {} v{}", header.kind, header.version)));
        }
        let mut steps = Vec::new();
        let mut line_no = 1;
        while let Some(line) = read_line(&mut r)? {
            line_no += 1;
            let step: TraceStep =
                serde_json::from_str(&line).map_err(|e| Error::Data(format!("trace line {line_no}: {e}")))?;
            let Some(input) = header.inputs.get(step.input) else {
                return Err(Error::Data(format!("trace line {line_no}: input {} not in header", step.input)));
            };
            if step.kind != "step" || step.hash != format!("{:016x}", prefix_hash(&input.encoded.ids, &step.prefix)) {
                return Err(Error::Data(format!("trace line {line_no}: hash does not match prefix")));
            }
            let out = StepOutput { top: step.top.clone(), attention: step.attention.clone() };
            validate_step_output(&header.capabilities, input.encoded.ids.len(), &out)
                .map_err(|e| e.with_context(format!("trace line {line_no}")))?;
            steps.push(step);
        }
        Ok(TraceFile { header, steps })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
        Self::read_from(file).map_err(|e| e.with_context(path.display().to_string()))
    }
}

#[derive(Default)]
struct Recorded {
    inputs: Vec<TraceInput>,
    by_ids: HashMap<Vec<u32>, usize>,
    steps: BTreeMap<(usize, Vec<u32>), StepOutput>,
}

/// Wraps a stepper and records every tokenization and step it serves.
pub struct Recorder<S> {
    inner: S,
    state: Mutex<Recorded>,
}

impl<S: ModelStepper> Recorder<S> {
    pub fn new(inner: S) -> Self {
        Recorder { inner, state: Mutex::new(Recorded::default()) }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Recorded> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The trace recorded so far, steps ordered by input and prefix.
    pub fn trace(&self) -> TraceFile {
        let state = self.lock();
        let steps = state
            .steps
            .iter()
            .map(|((input, prefix), out)| TraceStep {
                kind: "step".into(),
                input: *input,
                hash: format!("{:016x}", prefix_hash(&state.inputs[*input].encoded.ids, prefix)),
                prefix: prefix.clone(),
                top: out.top.clone(),
                attention: out.attention.clone(),
            })
            .collect();
        TraceFile {
            header: TraceHeader {
                kind: "header".into(),
                version: TRACE_VERSION,
                capabilities: self.inner.capabilities().clone(),
                inputs: state.inputs.clone(),
            },
            steps,
        }
    }

    pub fn into_inner(self) -> S {
        self.inner
    }
}

impl<S: ModelStepper> ModelStepper for Recorder<S> {
    fn capabilities(&self) -> &Capabilities {
        self.inner.capabilities()
    }

    fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        let encoded = self.inner.tokenize(text)?;
        let mut state = self.lock();
        if !state.by_ids.contains_key(&encoded.ids) {
            let idx = state.inputs.len();
            state.by_ids.insert(encoded.ids.clone(), idx);
            state.inputs.push(TraceInput { linearized: text.to_string(), encoded: encoded.clone() });
        }
        Ok(encoded)
    }

    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        let outs = self.inner.step(input, prefixes, top_k)?;
        let mut state = self.lock();
        let Some(&idx) = state.by_ids.get(input) else {
            return Err(Error::Data("recorded step for an input that was never tokenized".into()));
        };
        for (prefix, out) in prefixes.iter().zip(&outs) {
            let slot = state.steps.entry((idx, prefix.clone())).or_insert_with(|| out.clone());
            // keep the widest candidate list seen for this prefix
            if out.top.len() > slot.top.len() {
                *slot = out.clone();
            }
        }
        Ok(outs)
    }
}

/// Serves steps from a recorded trace.
pub struct TraceStepper {
    caps: Capabilities,
    inputs: Vec<TraceInput>,
    by_text: HashMap<String, usize>,
    by_ids: HashMap<Vec<u32>, usize>,
    steps: HashMap<(usize, Vec<u32>), StepOutput>,
}

impl TraceStepper {
    pub fn new(trace: TraceFile) -> Self {
        let mut by_text = HashMap::new();
        let mut by_ids = HashMap::new();
        for (i, input) in trace.header.inputs.iter().enumerate() {
            by_text.entry(input.linearized.clone()).or_insert(i);
            by_ids.entry(input.encoded.ids.clone()).or_insert(i);
        }
        let steps = trace
            .steps
            .into_iter()
            .map(|s| ((s.input, s.prefix), StepOutput { top: s.top, attention: s.attention }))
            .collect();
        TraceStepper { caps: trace.header.capabilities, inputs: trace.header.inputs, by_text, by_ids, steps }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(Self::new(TraceFile::load(path)?))
    }

    pub fn inputs(&self) -> &[TraceInput] {
        &self.inputs
    }
}

impl ModelStepper for TraceStepper {
    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        self.by_text
            .get(text)
            .map(|&i| self.inputs[i].encoded.clone())
            .ok_or_else(|| Error::Data(format!("trace has no input `{text}`")))
    }

    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        let Some(&idx) = self.by_ids.get(input) else {
            return Err(Error::Data("trace has no such encoder input".into()));
        };
        prefixes
            .iter()
            .map(|prefix| {
                let mut out = self
                    .steps
                    .get(&(idx, prefix.clone()))
                    .cloned()
                    .ok_or_else(|| Error::TraceIncomplete { input: idx, prefix: prefix.clone() })?;
                out.top.truncate(top_k.max(1));
                Ok(out)
            })
            .collect()
    }
}
