//! Cross-attention heatmaps over an output sequence: input tokens down,
//! decoding steps across.

use std::fmt::Write as _;

use serde::Serialize;

use crate::attention::Reduce;
use crate::decoder::{detokenize, EncodedInput, ModelStepper};
use crate::error::{Error, Result};
use crate::tuner::escape;

const SHADES: [char; 5] = [' ', '░', '▒', '▓', '█'];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Heatmap {
    pub input_tokens: Vec<String>,
    /// Token emitted at each step.
    pub output_tokens: Vec<String>,
    /// `[step][input position]`.
    pub weights: Vec<Vec<f64>>,
}

/// Which layers feed the heatmap. `Some(l)` is a single zero-based layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatmapOptions {
    pub layer: Option<usize>,
    pub heads: Reduce,
    pub layers: Reduce,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        HeatmapOptions { layer: None, heads: Reduce::Max, layers: Reduce::Mean }
    }
}

fn reduce(values: impl Iterator<Item = f64>, how: Reduce) -> f64 {
    let v: Vec<f64> = values.collect();
    match how {
        Reduce::Max => v.iter().copied().fold(0.0, f64::max),
        Reduce::Sum => v.iter().sum(),
        Reduce::Mean => v.iter().sum::<f64>() / v.len().max(1) as f64,
    }
}

/// Replays `output` one prefix at a time and collects the attention of
/// each step. `steps` limits the columns to a range of step indices.
pub fn build_heatmap<S: ModelStepper + ?Sized>(
    stepper: &S,
    input: &EncodedInput,
    output: &[u32],
    steps: std::ops::Range<usize>,
    opts: HeatmapOptions,
) -> Result<Heatmap> {
    let caps = stepper.capabilities();
    if let Some(l) = opts.layer {
        if l >= caps.num_layers {
            return Err(Error::Config(format!("layer {} out of range, model has {}", l + 1, caps.num_layers)));
        }
    }
    let end = steps.end.min(output.len());
    if steps.start >= end {
        return Err(Error::Config(format!(
            "empty step range {}..{} for {} output tokens",
            steps.start,
            steps.end,
            output.len()
        )));
    }
    let prefixes: Vec<Vec<u32>> = (steps.start..end).map(|i| output[..i].to_vec()).collect();
    let outs = stepper.step(&input.ids, &prefixes, 1)?;
    let layers = match opts.layer {
        Some(l) => l..l + 1,
        None => 0..caps.num_layers,
    };
    let weights = outs
        .iter()
        .map(|o| {
            let a = &o.attention;
            (0..a.source_len())
                .map(|j| {
                    let per_layer =
                        layers.clone().map(|l| reduce((0..a.num_heads()).map(|h| a.row(l, h)[j]), opts.heads));
                    reduce(per_layer, opts.layers)
                })
                .collect()
        })
        .collect();
    Ok(Heatmap {
        input_tokens: input.tokens.clone(),
        output_tokens: (steps.start..end).map(|i| detokenize_one(&caps.vocab, output[i])).collect(),
        weights,
    })
}

fn detokenize_one(vocab: &[String], id: u32) -> String {
    match vocab.get(id as usize) {
        Some(piece) if piece.starts_with('<') => piece.clone(),
        Some(_) => detokenize(vocab, &[id]),
        None => format!("#{id}"),
    }
}

impl Heatmap {
    fn max(&self) -> f64 {
        self.weights.iter().flatten().copied().fold(0.0, f64::max)
    }

    /// `(input position, step)` of the heaviest cell; first in row-major
    /// order on ties.
    pub fn darkest(&self) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize, f64)> = None;
        for (s, row) in self.weights.iter().enumerate() {
            for (j, &w) in row.iter().enumerate() {
                if best.is_none_or(|(_, _, b)| w > b) {
                    best = Some((j, s, w));
                }
            }
        }
        best.map(|(j, s, _)| (j, s))
    }

    /// Shade level 0..=4 of a cell, relative to the heaviest cell.
    pub fn level(&self, step: usize, input: usize) -> usize {
        let max = self.max();
        if max <= 0.0 {
            return 0;
        }
        ((self.weights[step][input] / max) * 4.0).round() as usize
    }

    pub fn to_text(&self) -> String {
        let width = self.input_tokens.iter().map(|t| t.chars().count()).max().unwrap_or(0);
        let mut s = String::new();
        for (j, tok) in self.input_tokens.iter().enumerate() {
            let _ = write!(s, "{tok:>width$} |");
            for step in 0..self.weights.len() {
                let c = SHADES[self.level(step, j)];
                s.push(c);
                s.push(c);
            }
            s.push('\n');
        }
        s.push_str("steps:");
        for (i, t) in self.output_tokens.iter().enumerate() {
            let _ = write!(s, " {i}={t}");
        }
        s.push('\n');
        s
    }

    pub fn to_svg(&self) -> String {
        const CELL: f64 = 18.0;
        let label_w = 8.0 * self.input_tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1) as f64 + 10.0;
        let label_h = 8.0 * self.output_tokens.iter().map(|t| t.chars().count()).max().unwrap_or(1) as f64 + 10.0;
        let w = label_w + CELL * self.weights.len() as f64 + 10.0;
        let h = label_h + CELL * self.input_tokens.len() as f64 + 10.0;
        let max = self.max();
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.0} {h:.0}" font-family="monospace" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{w:.0}" height="{h:.0}" fill="white"/>"#);
        for (j, tok) in self.input_tokens.iter().enumerate() {
            let y = label_h + CELL * j as f64 + CELL * 0.7;
            let _ =
                writeln!(s, r#"<text x="{:.1}" y="{y:.1}" text-anchor="end">{}</text>"#, label_w - 5.0, escape(tok));
        }
        for (i, tok) in self.output_tokens.iter().enumerate() {
            let x = label_w + CELL * i as f64 + CELL * 0.7;
            let y = label_h - 5.0;
            let _ = writeln!(
                s,
                r#"<text x="{x:.1}" y="{y:.1}" transform="rotate(-90 {x:.1} {y:.1})">{}</text>"#,
                escape(tok)
            );
        }
        for (i, row) in self.weights.iter().enumerate() {
            for (j, &wt) in row.iter().enumerate() {
                let shade = if max > 0.0 { 255.0 * (1.0 - wt / max) } else { 255.0 };
                let g = shade.round() as u8;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.1}" y="{:.1}" width="{CELL}" height="{CELL}" fill="rgb({g},{g},{g})"><title>{:.4}</title></rect>"#,
                    label_w + CELL * i as f64,
                    label_h + CELL * j as f64,
                    wt
                );
            }
        }
        s.push_str("</svg>\n");
        s
    }
}
