use std::fs;
use std::io::{self, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::json;
use slotguide::attention::Reduce;
use slotguide::bridge::server::{serve_connection, serve_tcp};
use slotguide::data::{annotate, read_dataset, read_utterances, Record};
use slotguide::decoder::{greedy_decode, ModelStepper};
use slotguide::heatmap::{build_heatmap, HeatmapOptions};
use slotguide::mr::{linearize_with_layout, parse_mr, MeaningRepresentation, Segment};
use slotguide::pipeline::{decode_corpus, prepare, record_trace, DecodeOutcome, DecodeSettings, Prepared, Strategy};
use slotguide::ser::{evaluate_corpus, CorpusReport};
use slotguide::tuner::{beam_size_sweep, grid_search, Component, GridSpec, Reranker};

use crate::config::{RunArgs, RunConfig};
use crate::CliError;

fn load_records(cfg: &RunConfig) -> Result<Vec<Record>, CliError> {
    let mut records = read_dataset(cfg.dataset()?, cfg.format)?;
    annotate(&mut records, &cfg.lexicon);
    Ok(records)
}

fn write_file(path: &Path, body: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    }
    fs::write(path, body).map_err(CliError::io(path))
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.out()?.to_path_buf();
    fs::create_dir_all(&dir).map_err(CliError::io(&dir))?;
    Ok(dir)
}

/// One utterance per line, LF endings.
fn lines_file<'a>(lines: impl Iterator<Item = &'a str>) -> String {
    let mut s = String::new();
    for l in lines {
        s.push_str(&l.replace(['\n', '\r'], " "));
        s.push('\n');
    }
    s
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| CliError::Config(format!("invalid {what} `{p}`"))))
        .collect()
}

fn parse_strategies(s: &str) -> Result<Vec<Strategy>, CliError> {
    let list: Vec<Strategy> = s
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<Strategy>().map_err(|e| CliError::Config(e.to_string())))
        .collect::<Result<_, _>>()?;
    if list.is_empty() {
        return Err(CliError::Config("no strategy given".into()));
    }
    Ok(list)
}

fn prepare_all(stepper: &dyn ModelStepper, mrs: &[MeaningRepresentation]) -> Result<Vec<Prepared>, CliError> {
    mrs.iter()
        .enumerate()
        .map(|(i, mr)| prepare(stepper, mr).map_err(|e| CliError::Core(e.with_context(format!("MR {i}")))))
        .collect()
}

fn span_json(r: &std::ops::Range<usize>) -> serde_json::Value {
    json!([r.start, r.end])
}

pub fn preprocess(args: &RunArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let records = load_records(&cfg)?;
    let dir = out_dir(&cfg)?;
    if records.is_empty() {
        log::warn!("{} contains no MRs", cfg.dataset()?.display());
    }
    let mut linearized = String::new();
    let mut spans = String::new();
    for r in &records {
        let lin = linearize_with_layout(&r.mr);
        let segments: Vec<serde_json::Value> = lin
            .segments
            .iter()
            .map(|s| match s {
                Segment::Intent { range } => json!({ "intent": span_json(range) }),
                Segment::Slot { slot, name, value, items } => json!({
                    "slot": r.mr.slot(*slot).name,
                    "name": span_json(name),
                    "value": span_json(value),
                    "items": items.iter().map(span_json).collect::<Vec<_>>(),
                }),
            })
            .collect();
        linearized.push_str(&lin.text);
        linearized.push('\n');
        spans.push_str(
            &serde_json::to_string(&json!({ "line": r.line, "segments": segments })).map_err(slotguide::Error::from)?,
        );
        spans.push('\n');
    }
    write_file(&dir.join("linearized.txt"), &linearized)?;
    write_file(&dir.join("spans.jsonl"), &spans)?;
    println!("{} MRs written to {}", records.len(), dir.display());
    Ok(())
}

#[derive(Serialize)]
struct StrategyReport {
    strategy: Strategy,
    ser: Option<f64>,
    ser_exact: Option<f64>,
    outcomes: Vec<DecodeOutcome>,
}

pub fn decode(args: &RunArgs, strategy: Option<&str>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let strategies = parse_strategies(strategy.or(cfg.strategy.as_deref()).unwrap_or("seaguide"))?;
    let records = load_records(&cfg)?;
    let stepper = cfg.open_stepper()?;
    let dir = out_dir(&cfg)?;
    let mrs: Vec<MeaningRepresentation> = records.iter().map(|r| r.mr.clone()).collect();
    let mut reports = Vec::new();
    let mut summary = String::from("strategy\tSER\tSER_exact\n");
    for strategy in strategies {
        let settings = DecodeSettings { strategy, decode: cfg.decode, lexicon: &cfg.lexicon, align: cfg.align.clone() };
        let outcomes = decode_corpus(&stepper, &mrs, &settings)?;
        write_file(&dir.join(format!("{strategy}.txt")), &lines_file(outcomes.iter().map(|o| o.utterance.as_str())))?;
        let pairs: Vec<_> = mrs.iter().cloned().zip(outcomes.iter().map(|o| o.utterance.clone())).collect();
        let (ser, ser_exact) = match evaluate_corpus(&pairs, &cfg.lexicon, &cfg.align) {
            Ok(r) => (Some(r.ser), Some(r.ser_exact)),
            Err(e) => {
                log::warn!("no SER for {strategy}: {e}");
                (None, None)
            }
        };
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.2}"));
        summary.push_str(&format!("{strategy}\t{}\t{}\n", fmt(ser), fmt(ser_exact)));
        reports.push(StrategyReport { strategy, ser, ser_exact, outcomes });
    }
    let json = serde_json::to_string_pretty(&reports).map_err(slotguide::Error::from)?;
    write_file(&dir.join("report.json"), &(json + "\n"))?;
    write_file(&dir.join("report.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}

pub fn eval(args: &RunArgs, outputs: Option<&Path>, max_exemplars: usize) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let records = load_records(&cfg)?;
    let utterances = match outputs {
        Some(p) => read_utterances(p)?,
        None => records
            .iter()
            .map(|r| {
                r.reference.clone().ok_or_else(|| CliError::Data(format!("line {}: no reference utterance", r.line)))
            })
            .collect::<Result<_, _>>()?,
    };
    if utterances.len() != records.len() {
        return Err(CliError::Data(format!("{} utterances for {} MRs", utterances.len(), records.len())));
    }
    let pairs: Vec<_> = records.into_iter().map(|r| r.mr).zip(utterances).collect();
    let report: CorpusReport = evaluate_corpus(&pairs, &cfg.lexicon, &cfg.align)?;
    let text = report.to_text(max_exemplars);
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let json = serde_json::to_string_pretty(&report).map_err(slotguide::Error::from)?;
        write_file(&dir.join("eval.json"), &(json + "\n"))?;
        write_file(&dir.join("eval.txt"), &text)?;
    }
    print!("{text}");
    Ok(())
}

pub struct HeatmapArgs {
    pub mr: Option<String>,
    pub index: usize,
    pub layer: Option<usize>,
    pub steps: Option<String>,
    pub heads: String,
    pub layers: String,
    pub svg: Option<PathBuf>,
}

fn parse_reduce(s: &str) -> Result<Reduce, CliError> {
    match s {
        "max" => Ok(Reduce::Max),
        "mean" | "avg" => Ok(Reduce::Mean),
        "sum" => Ok(Reduce::Sum),
        other => Err(CliError::Config(format!("unknown reduction `{other}`"))),
    }
}

fn parse_range(s: &str) -> Result<std::ops::Range<usize>, CliError> {
    let bad = || CliError::Config(format!("step range `{s}` is not a..b"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a = if a.is_empty() { 0 } else { a.parse().map_err(|_| bad())? };
    let b = if b.is_empty() { usize::MAX } else { b.parse().map_err(|_| bad())? };
    Ok(a..b)
}

pub fn heatmap(args: &RunArgs, h: HeatmapArgs) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let mr = match &h.mr {
        Some(raw) => {
            let mut recs =
                vec![Record { line: 1, raw_mr: raw.clone(), mr: parse_mr(raw, cfg.format)?, reference: None }];
            annotate(&mut recs, &cfg.lexicon);
            recs.remove(0).mr
        }
        None => {
            let recs = load_records(&cfg)?;
            let n = recs.len();
            recs.into_iter().nth(h.index).ok_or_else(|| CliError::Data(format!("index {} beyond {n} MRs", h.index)))?.mr
        }
    };
    let layer = match h.layer {
        Some(0) => return Err(CliError::Config("layers are numbered from 1".into())),
        l => l.map(|l| l - 1),
    };
    let opts = HeatmapOptions { layer, heads: parse_reduce(&h.heads)?, layers: parse_reduce(&h.layers)? };
    let steps = h.steps.as_deref().map(parse_range).transpose()?.unwrap_or(0..usize::MAX);
    let stepper = cfg.open_stepper()?;
    if let Some(l) = layer {
        let n = stepper.capabilities().num_layers;
        if l >= n {
            return Err(CliError::Config(format!("layer {} out of range, model has {n}", l + 1)));
        }
    }
    let p = prepare(&stepper, &mr)?;
    let hyp = greedy_decode(&stepper, &p.encoded.ids, &p.spans, &cfg.decode)?;
    let map = build_heatmap(&stepper, &p.encoded, &hyp.tokens, steps, opts)?;
    match &h.svg {
        Some(path) => write_file(path, &map.to_svg())?,
        None => print!("{}", map.to_text()),
    }
    Ok(())
}

fn default_grid() -> GridSpec {
    GridSpec::thresholds(&[0.5, 0.9, 1.0], &[0.3, 0.4, 0.5], &[0.05, 0.1, 0.2])
}

pub fn tune(args: &RunArgs, grid: Option<&Path>, plots: bool) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let grid = match grid {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            toml::from_str::<GridSpec>(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => default_grid(),
    };
    grid.validate()?;
    let records = load_records(&cfg)?;
    let stepper = cfg.open_stepper()?;
    let dir = out_dir(&cfg)?;
    let mrs: Vec<_> = records.into_iter().map(|r| r.mr).collect();
    let prepared = prepare_all(&stepper, &mrs)?;
    let report = grid_search(&stepper, &prepared, &cfg.lexicon, &cfg.align, &cfg.decode, &grid)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    write_file(&dir.join("grid.csv"), &String::from_utf8_lossy(&csv))?;
    if plots {
        for c in Component::ALL {
            write_file(&dir.join(format!("grid_{}.svg", c.name())), &report.series_svg(c))?;
        }
    }
    let best = report.best();
    println!("best: {} SER {:.2} mean score {:.4}", best.point.label(), best.ser, best.mean_score);
    Ok(())
}

pub fn sweep(args: &RunArgs, sizes: &str, rerankers: &str, plots: bool) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let sizes: Vec<usize> = parse_list(sizes, "beam size")?;
    let rerankers: Vec<Reranker> = parse_list(rerankers, "reranker")?;
    let records = load_records(&cfg)?;
    let stepper = cfg.open_stepper()?;
    let dir = out_dir(&cfg)?;
    let mrs: Vec<_> = records.into_iter().map(|r| r.mr).collect();
    let prepared = prepare_all(&stepper, &mrs)?;
    let report = beam_size_sweep(&stepper, &prepared, &cfg.lexicon, &cfg.align, &cfg.decode, &sizes, &rerankers)?;
    let mut csv = Vec::new();
    report.write_csv(&mut csv)?;
    let csv = String::from_utf8_lossy(&csv).into_owned();
    write_file(&dir.join("sweep.csv"), &csv)?;
    if plots {
        write_file(&dir.join("sweep.svg"), &report.to_svg())?;
    }
    print!("{csv}");
    Ok(())
}

pub fn record(args: &RunArgs, strategy: Option<&str>) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let strategies = match strategy.or(cfg.strategy.as_deref()) {
        Some(s) => parse_strategies(s)?,
        None => Strategy::ALL.to_vec(),
    };
    let records = load_records(&cfg)?;
    if records.is_empty() {
        log::warn!("{} contains no MRs; the trace will be empty", cfg.dataset()?.display());
    }
    let stepper = cfg.open_stepper()?;
    let out = cfg.out()?.to_path_buf();
    let mrs: Vec<_> = records.into_iter().map(|r| r.mr).collect();
    let settings =
        DecodeSettings { strategy: strategies[0], decode: cfg.decode, lexicon: &cfg.lexicon, align: cfg.align.clone() };
    let trace = record_trace(&stepper, &mrs, &settings, &strategies)?;
    write_file(&out, &trace.to_string()?)?;
    println!("{} steps over {} inputs written to {}", trace.steps.len(), trace.header.inputs.len(), out.display());
    Ok(())
}

pub fn serve(args: &RunArgs, listen: &str, stdio: bool) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(args)?;
    let stepper = cfg.open_stepper()?;
    if stdio {
        let stdin = io::stdin();
        let stdout = io::stdout();
        serve_connection(&stepper, BufReader::new(stdin.lock()), stdout.lock())?;
        return Ok(());
    }
    let listener = TcpListener::bind(listen).map_err(|e| slotguide::Error::Transport(format!("{listen}: {e}")))?;
    let addr = listener.local_addr().map_err(slotguide::Error::from)?;
    println!("listening on {addr}");
    io::stdout().flush().ok();
    serve_tcp(Arc::new(stepper), listener)?;
    Ok(())
}
