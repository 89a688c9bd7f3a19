//! Per-hypothesis slot mention tracking from cross-attention.
//!
//! Three components update one shared [`MentionLedger`]:
//! verbatim mentions (first layer, high confidence), paraphrased mentions
//! (bottom half of layers, low confidence), and unrealized mentions detected
//! at the end-of-sequence step, which erase low-confidence records.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::attention::{aggregate_with, binarize, map_to_slots, AggregationScheme, AttentionStack, LayerSelector};
use crate::error::{Error, Result};
use crate::mr::{MeaningRepresentation, SlotId, SlotSpanIndex};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentConfig {
    pub layers: LayerSelector,
    pub threshold: f64,
    pub max_only: bool,
    #[serde(default)]
    pub aggregation: AggregationScheme,
}

impl ComponentConfig {
    pub fn new(layers: LayerSelector, threshold: f64, max_only: bool) -> Self {
        ComponentConfig { layers, threshold, max_only, aggregation: AggregationScheme::default() }
    }

    fn hits(&self, stack: &AttentionStack, spans: &SlotSpanIndex) -> BTreeSet<SlotId> {
        let weights = aggregate_with(stack, self.layers, self.aggregation);
        let bits = binarize(&weights, self.threshold, self.max_only);
        map_to_slots(&bits, spans).into_iter().map(|(slot, _)| slot).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    pub verbatim: ComponentConfig,
    pub paraphrased: ComponentConfig,
    pub unrealized: ComponentConfig,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig::with_thresholds(0.9, 0.4, 0.1)
    }
}

impl TrackerConfig {
    /// Default layer and head aggregation with the given binarization
    /// thresholds for the verbatim, paraphrased and unrealized components.
    pub fn with_thresholds(verbatim: f64, paraphrased: f64, unrealized: f64) -> Self {
        TrackerConfig {
            verbatim: ComponentConfig::new(LayerSelector::FirstOnly, verbatim, true),
            paraphrased: ComponentConfig::new(LayerSelector::BottomHalf, paraphrased, false),
            unrealized: ComponentConfig::new(LayerSelector::All, unrealized, false),
        }
    }

    /// Named threshold presets. `small` is the default for 6-layer, 8-head
    /// models; `base` suits 12-head 6-layer models; `large-t5` and
    /// `large-bart` lower the thresholds for 12-layer models.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "small" | "default" => Ok(Self::with_thresholds(0.9, 0.4, 0.1)),
            "base" => Ok(Self::with_thresholds(0.9, 0.3, 0.1)),
            "large-t5" => Ok(Self::with_thresholds(0.9, 0.3, 0.1)),
            "large-bart" => Ok(Self::with_thresholds(0.9, 0.2, 0.05)),
            other => Err(Error::Config(format!("unknown tracker preset `{other}`"))),
        }
    }

    pub fn thresholds(&self) -> (f64, f64, f64) {
        (self.verbatim.threshold, self.paraphrased.threshold, self.unrealized.threshold)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, c) in
            [("verbatim", &self.verbatim), ("paraphrased", &self.paraphrased), ("unrealized", &self.unrealized)]
        {
            if !(0.0..=1.0).contains(&c.threshold) {
                return Err(Error::Config(format!("{name} threshold {} outside [0, 1]", c.threshold)));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Low,
    High,
}

impl fmt::Display for Confidence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Confidence::Low => "low",
            Confidence::High => "high",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionRecord {
    pub slot: SlotId,
    pub confidence: Confidence,
    pub steps: BTreeSet<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MentionLedger {
    records: BTreeMap<SlotId, MentionRecord>,
    /// Slots whose low-confidence record was erased; they are not re-created.
    erased: BTreeSet<SlotId>,
    /// Index of the next decoding step.
    step: usize,
}

impl MentionLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn records(&self) -> impl Iterator<Item = &MentionRecord> {
        self.records.values()
    }

    pub fn get(&self, slot: SlotId) -> Option<&MentionRecord> {
        self.records.get(&slot)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn erased(&self) -> &BTreeSet<SlotId> {
        &self.erased
    }

    /// Number of steps tracked so far.
    pub fn steps(&self) -> usize {
        self.step
    }

    fn record(&mut self, slot: SlotId, confidence: Confidence, step: usize) {
        if self.erased.contains(&slot) {
            return;
        }
        let rec =
            self.records.entry(slot).or_insert_with(|| MentionRecord { slot, confidence, steps: BTreeSet::new() });
        rec.confidence = rec.confidence.max(confidence);
        rec.steps.insert(step);
    }

    /// One line per record: `slot<TAB>confidence<TAB>steps`.
    pub fn dump(&self, mr: &MeaningRepresentation) -> String {
        let mut out = String::new();
        for rec in self.records.values() {
            let steps: Vec<String> = rec.steps.iter().map(usize::to_string).collect();
            out.push_str(&format!("{}\t{}\t{}\n", mr.slot(rec.slot).name, rec.confidence, steps.join(",")));
        }
        out
    }
}

fn check_dims(stack: &AttentionStack, spans: &SlotSpanIndex) -> Result<()> {
    if stack.source_len() != spans.source_len {
        return Err(Error::DimensionMismatch { attention: stack.source_len(), spans: spans.source_len });
    }
    Ok(())
}

/// Applies the verbatim then the paraphrased component for the token about
/// to be generated.
pub fn track_step(
    ledger: &MentionLedger,
    stack: &AttentionStack,
    spans: &SlotSpanIndex,
    cfg: &TrackerConfig,
) -> Result<MentionLedger> {
    check_dims(stack, spans)?;
    let mut next = ledger.clone();
    let step = next.step;
    for slot in cfg.verbatim.hits(stack, spans) {
        next.record(slot, Confidence::High, step);
    }
    for slot in cfg.paraphrased.hits(stack, spans) {
        next.record(slot, Confidence::Low, step);
    }
    next.step += 1;
    Ok(next)
}

/// Applies the unrealized component at the step where the hypothesis ends:
/// slots still attended to have their low-confidence records erased.
pub fn finalize_at_eos(
    ledger: &MentionLedger,
    stack: &AttentionStack,
    spans: &SlotSpanIndex,
    cfg: &TrackerConfig,
) -> Result<MentionLedger> {
    check_dims(stack, spans)?;
    let mut next = ledger.clone();
    for slot in cfg.unrealized.hits(stack, spans) {
        if next.records.get(&slot).is_some_and(|r| r.confidence == Confidence::Low) {
            next.records.remove(&slot);
            next.erased.insert(slot);
        }
    }
    Ok(next)
}

/// Trackable slots (every non-intent slot) without a surviving record.
pub fn count_errors(ledger: &MentionLedger, mr: &MeaningRepresentation) -> usize {
    mr.slot_ids().filter(|s| !ledger.records.contains_key(s)).count()
}

/// Slots without a surviving record.
pub fn untracked_slots(ledger: &MentionLedger, mr: &MeaningRepresentation) -> Vec<SlotId> {
    mr.slot_ids().filter(|s| !ledger.records.contains_key(s)).collect()
}
