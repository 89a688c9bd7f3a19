//! Grid search over tracker thresholds and aggregation, and beam-size
//! sweeps. The objective is corpus SER from the slot aligner; ties go to the
//! higher mean length-weighted score of the selected utterances.

use std::fmt::Write as _;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::aligner::AlignOptions;
use crate::attention::AggregationScheme;
use crate::decoder::{DecodeConfig, ModelStepper};
use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::pipeline::{decode_prepared, ordered_map, DecodeSettings, Prepared, Strategy};
use crate::ser::evaluate_corpus;

fn default_aggregations() -> Vec<AggregationScheme> {
    vec![AggregationScheme::default()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub verbatim: Vec<f64>,
    pub paraphrased: Vec<f64>,
    pub unrealized: Vec<f64>,
    /// Applied to all three components at once.
    #[serde(default = "default_aggregations")]
    pub aggregations: Vec<AggregationScheme>,
    /// Empty means the beam size of the base decode config.
    #[serde(default)]
    pub beam_sizes: Vec<usize>,
}

impl GridSpec {
    pub fn thresholds(verbatim: &[f64], paraphrased: &[f64], unrealized: &[f64]) -> Self {
        GridSpec {
            verbatim: verbatim.to_vec(),
            paraphrased: paraphrased.to_vec(),
            unrealized: unrealized.to_vec(),
            aggregations: default_aggregations(),
            beam_sizes: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, list) in
            [("verbatim", &self.verbatim), ("paraphrased", &self.paraphrased), ("unrealized", &self.unrealized)]
        {
            if list.is_empty() {
                return Err(Error::Config(format!("grid has no {name} thresholds")));
            }
            if let Some(t) = list.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(Error::Config(format!("{name} threshold {t} outside [0, 1]")));
            }
        }
        if self.aggregations.is_empty() {
            return Err(Error::Config("grid has no aggregation variants".into()));
        }
        if self.beam_sizes.contains(&0) {
            return Err(Error::Config("beam size 0 in grid".into()));
        }
        Ok(())
    }

    /// Every grid point in a fixed order: beam size, aggregation, then the
    /// three thresholds, each varying slowest to fastest.
    pub fn points(&self, base: &DecodeConfig) -> Vec<GridPoint> {
        let beams = if self.beam_sizes.is_empty() { vec![base.beam_size] } else { self.beam_sizes.clone() };
        let mut out = Vec::new();
        for &beam_size in &beams {
            for &aggregation in &self.aggregations {
                for &v in &self.verbatim {
                    for &p in &self.paraphrased {
                        for &u in &self.unrealized {
                            out.push(GridPoint { verbatim: v, paraphrased: p, unrealized: u, aggregation, beam_size });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub verbatim: f64,
    pub paraphrased: f64,
    pub unrealized: f64,
    pub aggregation: AggregationScheme,
    pub beam_size: usize,
}

impl GridPoint {
    pub fn decode_config(&self, base: &DecodeConfig) -> DecodeConfig {
        let mut cfg = *base;
        cfg.beam_size = self.beam_size;
        let t = &mut cfg.tracker;
        t.verbatim.threshold = self.verbatim;
        t.paraphrased.threshold = self.paraphrased;
        t.unrealized.threshold = self.unrealized;
        t.verbatim.aggregation = self.aggregation;
        t.paraphrased.aggregation = self.aggregation;
        t.unrealized.aggregation = self.aggregation;
        cfg
    }

    pub fn label(&self) -> String {
        format!(
            "v={} p={} u={} {} beam={}",
            self.verbatim,
            self.paraphrased,
            self.unrealized,
            self.aggregation.label(),
            self.beam_size
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    /// 1-based rank.
    pub rank: usize,
    /// Position of the point in grid order.
    pub order: usize,
    pub point: GridPoint,
    pub ser: f64,
    pub mean_score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    /// Best first.
    pub rows: Vec<GridRow>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Component {
    Verbatim,
    Paraphrased,
    Unrealized,
}

impl Component {
    pub const ALL: [Component; 3] = [Component::Verbatim, Component::Paraphrased, Component::Unrealized];

    pub fn name(self) -> &'static str {
        match self {
            Component::Verbatim => "verbatim",
            Component::Paraphrased => "paraphrased",
            Component::Unrealized => "unrealized",
        }
    }

    fn of(self, p: &GridPoint) -> f64 {
        match self {
            Component::Verbatim => p.verbatim,
            Component::Paraphrased => p.paraphrased,
            Component::Unrealized => p.unrealized,
        }
    }
}

impl GridReport {
    pub fn best(&self) -> &GridRow {
        &self.rows[0]
    }

    /// SER as a function of one component's threshold, with every other
    /// parameter held at the best configuration.
    pub fn series(&self, component: Component) -> Vec<(f64, f64)> {
        let best = self.best().point;
        let same_except = |p: &GridPoint| {
            Component::ALL.iter().all(|&c| c == component || c.of(p) == c.of(&best))
                && p.aggregation == best.aggregation
                && p.beam_size == best.beam_size
        };
        let mut pts: Vec<(f64, f64)> =
            self.rows.iter().filter(|r| same_except(&r.point)).map(|r| (component.of(&r.point), r.ser)).collect();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        pts
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "rank",
            "verbatim",
            "paraphrased",
            "unrealized",
            "heads",
            "layers",
            "normalize",
            "beam_size",
            "ser",
            "mean_score",
        ])?;
        for r in &self.rows {
            let p = &r.point;
            w.write_record([
                r.rank.to_string(),
                p.verbatim.to_string(),
                p.paraphrased.to_string(),
                p.unrealized.to_string(),
                reduce_name(p.aggregation.heads).into(),
                reduce_name(p.aggregation.layers).into(),
                p.aggregation.normalize.to_string(),
                p.beam_size.to_string(),
                format!("{:.4}", r.ser),
                format!("{:.6}", r.mean_score),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One chart per component, SER against threshold.
    pub fn series_svg(&self, component: Component) -> String {
        line_chart_svg(
            &format!("SER by {} threshold", component.name()),
            "threshold",
            "SER (%)",
            &[(component.name().to_string(), self.series(component))],
        )
    }
}

fn reduce_name(r: crate::attention::Reduce) -> &'static str {
    match r {
        crate::attention::Reduce::Max => "max",
        crate::attention::Reduce::Mean => "avg",
        crate::attention::Reduce::Sum => "sum",
    }
}

/// Corpus SER and mean selected score for one decode setting.
fn score_setting<S: ModelStepper + ?Sized>(
    stepper: &S,
    prepared: &[Prepared],
    settings: &DecodeSettings,
) -> Result<(f64, f64)> {
    let outcomes = ordered_map(stepper.capabilities().serial, prepared, |i, p| {
        decode_prepared(stepper, p, settings).map_err(|e| e.with_context(format!("MR {i}")))
    })?;
    let pairs: Vec<_> = prepared.iter().zip(&outcomes).map(|(p, o)| (p.mr.clone(), o.utterance.clone())).collect();
    let report = evaluate_corpus(&pairs, settings.lexicon, &settings.align)?;
    let mean = outcomes.iter().map(|o| o.chosen().score).sum::<f64>() / outcomes.len() as f64;
    Ok((report.ser, mean))
}

/// Decodes every MR under every grid point with semantic reranking and
/// ranks the points by SER ascending, then mean score descending, then grid
/// order.
pub fn grid_search<S: ModelStepper + ?Sized>(
    stepper: &S,
    prepared: &[Prepared],
    lexicon: &Lexicon,
    align: &AlignOptions,
    base: &DecodeConfig,
    grid: &GridSpec,
) -> Result<GridReport> {
    if prepared.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    grid.validate()?;
    let points = grid.points(base);
    let eval = |order: usize, point: &GridPoint| -> Result<GridRow> {
        let decode = point.decode_config(base);
        decode.validate()?;
        let settings = DecodeSettings { strategy: Strategy::Seaguide, decode, lexicon, align: align.clone() };
        let (ser, mean_score) =
            score_setting(stepper, prepared, &settings).map_err(|e| e.with_context(point.label()))?;
        Ok(GridRow { rank: 0, order, point: *point, ser, mean_score })
    };
    let mut rows: Vec<GridRow> = if stepper.capabilities().serial {
        points.iter().enumerate().map(|(i, p)| eval(i, p)).collect::<Result<_>>()?
    } else {
        points.par_iter().enumerate().map(|(i, p)| eval(i, p)).collect::<Result<_>>()?
    };
    rows.sort_by(|a, b| {
        a.ser.total_cmp(&b.ser).then(b.mean_score.total_cmp(&a.mean_score)).then(a.order.cmp(&b.order))
    });
    for (i, r) in rows.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(GridReport { rows })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reranker {
    None,
    Semantic,
    Aligner,
}

impl Reranker {
    pub const ALL: [Reranker; 3] = [Reranker::None, Reranker::Semantic, Reranker::Aligner];

    pub fn strategy(self) -> Strategy {
        match self {
            Reranker::None => Strategy::Beam,
            Reranker::Semantic => Strategy::Seaguide,
            Reranker::Aligner => Strategy::BeamAligner,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Reranker::None => "none",
            Reranker::Semantic => "semantic",
            Reranker::Aligner => "aligner",
        }
    }
}

impl std::str::FromStr for Reranker {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Reranker::None),
            "semantic" => Ok(Reranker::Semantic),
            "aligner" => Ok(Reranker::Aligner),
            other => Err(Error::Config(format!("unknown reranker `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub beam_size: usize,
    pub reranker: Reranker,
    pub ser: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Ordered by beam size, then reranker as given.
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn ser(&self, beam_size: usize, reranker: Reranker) -> Option<f64> {
        self.rows.iter().find(|r| r.beam_size == beam_size && r.reranker == reranker).map(|r| r.ser)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["beam_size", "reranker", "ser"])?;
        for r in &self.rows {
            w.write_record([r.beam_size.to_string(), r.reranker.name().to_string(), format!("{:.4}", r.ser)])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_svg(&self) -> String {
        let mut rerankers: Vec<Reranker> = Vec::new();
        for r in &self.rows {
            if !rerankers.contains(&r.reranker) {
                rerankers.push(r.reranker);
            }
        }
        let series: Vec<(String, Vec<(f64, f64)>)> = rerankers
            .iter()
            .map(|&rr| {
                let pts = self.rows.iter().filter(|r| r.reranker == rr).map(|r| (r.beam_size as f64, r.ser)).collect();
                (rr.name().to_string(), pts)
            })
            .collect();
        line_chart_svg("SER by beam size", "beam size", "SER (%)", &series)
    }
}

pub fn beam_size_sweep<S: ModelStepper + ?Sized>(
    stepper: &S,
    prepared: &[Prepared],
    lexicon: &Lexicon,
    align: &AlignOptions,
    base: &DecodeConfig,
    sizes: &[usize],
    rerankers: &[Reranker],
) -> Result<SweepReport> {
    if sizes.is_empty() || rerankers.is_empty() {
        return Err(Error::Config("beam sweep needs at least one size and one reranker".into()));
    }
    if prepared.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let cells: Vec<(usize, Reranker)> = sizes.iter().flat_map(|&s| rerankers.iter().map(move |&r| (s, r))).collect();
    let eval = |&(beam_size, reranker): &(usize, Reranker)| -> Result<SweepRow> {
        let mut decode = *base;
        decode.beam_size = beam_size;
        decode.validate()?;
        let settings = DecodeSettings { strategy: reranker.strategy(), decode, lexicon, align: align.clone() };
        let (ser, _) = score_setting(stepper, prepared, &settings)
            .map_err(|e| e.with_context(format!("beam={beam_size} reranker={}", reranker.name())))?;
        Ok(SweepRow { beam_size, reranker, ser })
    };
    let rows = if stepper.capabilities().serial {
        cells.iter().map(eval).collect::<Result<_>>()?
    } else {
        cells.par_iter().map(eval).collect::<Result<_>>()?
    };
    Ok(SweepReport { rows })
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// A standalone SVG line chart.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const LEFT: f64 = 60.0;
    const RIGHT: f64 = 120.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;
    let all = series.iter().flat_map(|(_, pts)| pts.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y1) = (0.0, 1.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, W / 2.0, escape(title));
    let (ax, ay) = (px(x0), py(y0));
    let _ = writeln!(s, r#"<path d="M{ax:.1},{:.1} V{ay:.1} H{:.1}" stroke="black" fill="none"/>"#, TOP, W - RIGHT);
    for i in 0..=4 {
        let x = x0 + (x1 - x0) * i as f64 / 4.0;
        let y = y0 + (y1 - y0) * i as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, px(x), ay + 15.0, tick(x));
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, ax - 5.0, py(y) + 4.0, tick(y));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="14" y="{:.1}" text-anchor="middle" transform="rotate(-90 14 {:.1})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", px(x), py(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, path.join(" "));
        for &(x, y) in pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(x), py(y));
        }
        let ly = TOP + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{color}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            W - RIGHT + 15.0,
            ly,
            W - RIGHT + 30.0,
            ly + 9.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
