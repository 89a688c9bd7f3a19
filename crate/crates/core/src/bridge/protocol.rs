//! Line-delimited JSON frames exchanged with a model server.
//!
//! Every frame is one JSON object on one line with a `type` field. The
//! client sends `handshake`, `tokenize`, `step` and `shutdown`; the server
//! answers with `capabilities`, `tokens`, `step_result`, `bye` or `error`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::decoder::{Capabilities, EncodedInput, StepOutput};
use crate::error::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Request {
    Handshake { version: u32 },
    Tokenize { text: String },
    Step { session: String, encoder_input: Vec<u32>, prefixes: Vec<Vec<u32>>, top_k: usize },
    Shutdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Capabilities(Capabilities),
    Tokens(EncodedInput),
    StepResult { outputs: Vec<StepOutput> },
    Bye,
    Error { message: String },
}

pub fn encode<T: Serialize>(frame: &T) -> Result<String> {
    Ok(serde_json::to_string(frame)?)
}

pub fn decode_request(line: &str) -> Result<Request> {
    serde_json::from_str(line).map_err(|e| Error::Schema(format!("bad request frame: {e}")))
}

pub fn decode_response(line: &str) -> Result<Response> {
    serde_json::from_str(line).map_err(|e| Error::Schema(format!("bad response frame: {e}")))
}

/// Writes one frame followed by a newline and flushes.
pub fn write_frame<W: Write + ?Sized, T: Serialize>(w: &mut W, frame: &T) -> Result<()> {
    let mut line = encode(frame)?;
    line.push('\n');
    w.write_all(line.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::Transport(e.to_string()))
}

/// Reads one non-empty line; `None` at end of stream.
pub fn read_line<R: BufRead + ?Sized>(r: &mut R) -> Result<Option<String>> {
    let mut line = String::new();
    loop {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| Error::Transport(e.to_string()))?;
        if n == 0 {
            return Ok(None);
        }
        if !line.trim().is_empty() {
            return Ok(Some(line.trim_end_matches(['\r', '\n']).to_string()));
        }
    }
}
