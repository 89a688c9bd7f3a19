//! Cross-attention aggregation and binarization.
//!
//! An [`AttentionStack`] holds the decoder's cross-attention for one pending
//! output token: one distribution over source tokens per (layer, head). The
//! first-class aggregation takes the maximum over heads within each layer and
//! then the mean over the selected layers.

use std::collections::BTreeSet;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mr::{SlotId, SlotSpanIndex};

/// Tolerance on per-row attention sums accepted at ingest.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

/// Wire form of an attention stack: declared shape plus row-major data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttentionPayload {
    pub shape: [usize; 3],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AttentionPayload", into = "AttentionPayload")]
pub struct AttentionStack {
    num_layers: usize,
    num_heads: usize,
    source_len: usize,
    weights: Vec<f64>,
}

impl TryFrom<AttentionPayload> for AttentionStack {
    type Error = Error;

    fn try_from(p: AttentionPayload) -> Result<Self> {
        let [l, h, s] = p.shape;
        AttentionStack::new(l, h, s, p.data)
    }
}

impl From<AttentionStack> for AttentionPayload {
    fn from(a: AttentionStack) -> Self {
        AttentionPayload { shape: [a.num_layers, a.num_heads, a.source_len], data: a.weights }
    }
}

impl AttentionStack {
    /// Validates shape, non-negativity, and that every row sums to one.
    pub fn new(num_layers: usize, num_heads: usize, source_len: usize, weights: Vec<f64>) -> Result<Self> {
        if num_layers == 0 || num_heads == 0 || source_len == 0 {
            return Err(Error::InvalidAttention(format!("degenerate shape [{num_layers}, {num_heads}, {source_len}]")));
        }
        if weights.len() != num_layers * num_heads * source_len {
            return Err(Error::InvalidAttention(format!(
                "shape [{num_layers}, {num_heads}, {source_len}] needs {} values, got {}",
                num_layers * num_heads * source_len,
                weights.len()
            )));
        }
        for (r, row) in weights.chunks(source_len).enumerate() {
            if row.iter().any(|w| !w.is_finite() || *w < 0.0) {
                return Err(Error::InvalidAttention(format!(
                    "row {r} (layer {}, head {}) has a negative or non-finite weight",
                    r / num_heads,
                    r % num_heads
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidAttention(format!(
                    "row {r} (layer {}, head {}) sums to {sum}",
                    r / num_heads,
                    r % num_heads
                )));
            }
        }
        Ok(AttentionStack { num_layers, num_heads, source_len, weights })
    }

    /// Builds a stack from `[layer][head][source]` nested rows.
    pub fn from_rows(rows: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let num_layers = rows.len();
        let num_heads = rows.first().map_or(0, Vec::len);
        let source_len = rows.first().and_then(|l| l.first()).map_or(0, Vec::len);
        let mut weights = Vec::with_capacity(num_layers * num_heads * source_len);
        for layer in &rows {
            if layer.len() != num_heads {
                return Err(Error::InvalidAttention("ragged head dimension".into()));
            }
            for row in layer {
                if row.len() != source_len {
                    return Err(Error::InvalidAttention("ragged source dimension".into()));
                }
                weights.extend_from_slice(row);
            }
        }
        Self::new(num_layers, num_heads, source_len, weights)
    }

    pub fn uniform(num_layers: usize, num_heads: usize, source_len: usize) -> Self {
        let w = 1.0 / source_len as f64;
        Self::new(num_layers, num_heads, source_len, vec![w; num_layers * num_heads * source_len])
            .expect("uniform rows are normalized")
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn num_heads(&self) -> usize {
        self.num_heads
    }

    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn row(&self, layer: usize, head: usize) -> &[f64] {
        let start = (layer * self.num_heads + head) * self.source_len;
        &self.weights[start..start + self.source_len]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Which decoder layers an aggregation reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelector {
    FirstOnly,
    /// Layers 1..=floor(L/2), at least one.
    BottomHalf,
    All,
}

impl LayerSelector {
    /// Zero-based layer indices selected out of `num_layers`.
    pub fn layers(self, num_layers: usize) -> Range<usize> {
        match self {
            LayerSelector::FirstOnly => 0..1.min(num_layers),
            LayerSelector::BottomHalf => 0..(num_layers / 2).max(1).min(num_layers),
            LayerSelector::All => 0..num_layers,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduce {
    #[default]
    Max,
    Mean,
    Sum,
}

impl Reduce {
    fn apply(self, acc: &mut [f64], row: &[f64], count: usize) {
        match self {
            Reduce::Max => acc.iter_mut().zip(row).for_each(|(a, r)| *a = a.max(*r)),
            Reduce::Sum => acc.iter_mut().zip(row).for_each(|(a, r)| *a += r),
            Reduce::Mean => acc.iter_mut().zip(row).for_each(|(a, r)| *a += r / count as f64),
        }
    }
}

/// Aggregation operators. The default (max over heads, mean over layers, no
/// rescaling) is the one the tracker uses; the others exist for tuning.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AggregationScheme {
    pub heads: Reduce,
    pub layers: Reduce,
    /// Rescale the aggregated vector to sum to one.
    pub normalize: bool,
}

impl Default for AggregationScheme {
    fn default() -> Self {
        AggregationScheme { heads: Reduce::Max, layers: Reduce::Mean, normalize: false }
    }
}

impl AggregationScheme {
    pub fn label(&self) -> String {
        let name = |r: Reduce| match r {
            Reduce::Max => "max",
            Reduce::Mean => "avg",
            Reduce::Sum => "sum",
        };
        let mut s = format!("heads={},layers={}", name(self.heads), name(self.layers));
        if self.normalize {
            s.push_str(",norm");
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedWeights(pub Vec<f64>);

impl AggregatedWeights {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Maximum over heads within each selected layer, then mean over layers.
pub fn aggregate(stack: &AttentionStack, layers: LayerSelector) -> AggregatedWeights {
    aggregate_with(stack, layers, AggregationScheme::default())
}

pub fn aggregate_with(stack: &AttentionStack, layers: LayerSelector, scheme: AggregationScheme) -> AggregatedWeights {
    let selected = layers.layers(stack.num_layers());
    let n_layers = selected.len();
    let mut out = vec![0.0; stack.source_len()];
    for layer in selected {
        let mut per_layer = vec![0.0; stack.source_len()];
        for head in 0..stack.num_heads() {
            scheme.heads.apply(&mut per_layer, stack.row(layer, head), stack.num_heads());
        }
        scheme.layers.apply(&mut out, &per_layer, n_layers);
    }
    if scheme.normalize {
        let total: f64 = out.iter().sum();
        if total > 0.0 {
            out.iter_mut().for_each(|w| *w /= total);
        }
    }
    AggregatedWeights(out)
}

/// Sets bit `i` iff `w[i] > threshold`. With `max_only`, at most the argmax
/// survives (lowest index on ties).
pub fn binarize(w: &AggregatedWeights, threshold: f64, max_only: bool) -> Vec<bool> {
    let mut bits: Vec<bool> = w.0.iter().map(|&x| x > threshold).collect();
    if max_only {
        let argmax =
            w.0.iter()
                .enumerate()
                .fold(None::<(usize, f64)>, |best, (i, &x)| match best {
                    Some((_, bx)) if bx >= x => best,
                    _ => Some((i, x)),
                })
                .map(|(i, _)| i);
        for (i, b) in bits.iter_mut().enumerate() {
            *b = *b && Some(i) == argmax;
        }
    }
    bits
}

/// Slot hits for every set bit that falls inside a slot's tracked span
/// (value spans, or the name span for Boolean slots).
pub fn map_to_slots(bits: &[bool], spans: &SlotSpanIndex) -> BTreeSet<(SlotId, usize)> {
    bits.iter().enumerate().filter(|(_, &b)| b).filter_map(|(i, _)| spans.slot_at(i).map(|s| (s, i))).collect()
}
