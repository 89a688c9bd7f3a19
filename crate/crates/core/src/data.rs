//! Dataset readers.
//!
//! * ViGGO and E2E: CSV with an `mr` column and an optional `ref` (or
//!   `reference`) column, header names matched case-insensitively.
//! * MultiWOZ: JSON lines, `{"mr": "...", "ref": "..."}`.
//! * Any other extension: one MR per line.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::lexicon::Lexicon;
use crate::mr::{infer_boolean_slots, observe_values, parse_mr, DatasetFormat, MeaningRepresentation};

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    /// 1-based line of the record in its file.
    pub line: usize,
    pub raw_mr: String,
    pub mr: MeaningRepresentation,
    pub reference: Option<String>,
}

fn data_err(path: &Path, line: usize, e: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}:{line}: {e}", path.display()))
}

fn parse_record(
    path: &Path,
    line: usize,
    raw: String,
    reference: Option<String>,
    format: DatasetFormat,
) -> Result<Record> {
    let mr = parse_mr(&raw, format).map_err(|e| data_err(path, line, e))?;
    Ok(Record { line, raw_mr: raw, mr, reference })
}

fn read_csv<R: Read>(path: &Path, input: R, format: DatasetFormat) -> Result<Vec<Record>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(false).from_reader(input);
    let headers = rdr.headers().map_err(|e| data_err(path, 1, e))?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.iter().any(|n| h.trim().eq_ignore_ascii_case(n)));
    let mr_col = col(&["mr", "meaning_representation"]).ok_or_else(|| data_err(path, 1, "no `mr` column"))?;
    let ref_col = col(&["ref", "reference", "utterance"]);
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            data_err(path, line, e)
        })?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let raw = row.get(mr_col).unwrap_or_default().to_string();
        let reference = ref_col.and_then(|c| row.get(c)).map(str::to_owned);
        out.push(parse_record(path, line, raw, reference, format)?);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct JsonRecord {
    mr: String,
    #[serde(default, alias = "reference")]
    r#ref: Option<String>,
}

fn read_jsonl<R: BufRead>(path: &Path, input: R, format: DatasetFormat) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| data_err(path, i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: JsonRecord = serde_json::from_str(&line).map_err(|e| data_err(path, i + 1, e))?;
        out.push(parse_record(path, i + 1, rec.mr, rec.r#ref, format)?);
    }
    Ok(out)
}

fn read_lines<R: BufRead>(path: &Path, input: R, format: DatasetFormat) -> Result<Vec<Record>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(|e| data_err(path, i + 1, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_record(path, i + 1, line.trim().to_string(), None, format)?);
    }
    Ok(out)
}

/// Reads a dataset file, choosing the reader by extension.
pub fn read_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Vec<Record>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    let reader = BufReader::new(file);
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("csv") => read_csv(path, reader, format),
        Some("jsonl" | "json" | "ndjson") => read_jsonl(path, reader, format),
        _ => read_lines(path, reader, format),
    }
}

/// Applies the lexicon to every MR, and marks slots the lexicon does not
/// know as Boolean when all their observed values are binary.
pub fn annotate(records: &mut [Record], lex: &Lexicon) {
    let ontology = observe_values(records.iter().map(|r| &r.mr));
    let unknown: std::collections::BTreeMap<_, _> =
        ontology.into_iter().filter(|(name, _)| lex.entry(name).is_none()).collect();
    let booleans = infer_boolean_slots(&unknown, &lex.binary_vocabulary, None);
    for r in records {
        r.mr.apply_lexicon(lex);
        r.mr.mark_boolean(&booleans);
    }
}

/// Reads plain text, one utterance per line.
pub fn read_utterances(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).with_context(path.display().to_string()))?;
    Ok(text.lines().map(str::to_owned).collect())
}
