//! Client side of the line protocol.
//!
//! Endpoints are either `host:port` (TCP, one pooled connection per
//! concurrent session) or `exec:<command line>` (a child process spoken to
//! over its standard input and output, one request at a time).

use std::io::{BufRead, BufReader, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::Mutex;
use std::time::Duration;

use crate::bridge::protocol::{decode_response, read_line, write_frame, Request, Response, PROTOCOL_VERSION};
use crate::decoder::{validate_step_output, Capabilities, EncodedInput, ModelStepper, StepOutput};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    Tcp(String),
    Exec(Vec<String>),
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(cmd) = s.strip_prefix("exec:") {
            let argv: Vec<String> = cmd.split_whitespace().map(str::to_owned).collect();
            if argv.is_empty() {
                return Err(Error::Config("empty exec command".into()));
            }
            return Ok(Endpoint::Exec(argv));
        }
        let addr = s.strip_prefix("tcp:").unwrap_or(s);
        if !addr.contains(':') {
            return Err(Error::Config(format!("endpoint `{s}` is neither host:port nor exec:<command>")));
        }
        Ok(Endpoint::Tcp(addr.to_string()))
    }
}

struct Conn {
    reader: Box<dyn BufRead + Send>,
    writer: Box<dyn Write + Send>,
    child: Option<Child>,
}

impl Conn {
    fn open(endpoint: &Endpoint) -> Result<Self> {
        match endpoint {
            Endpoint::Tcp(addr) => {
                let stream = TcpStream::connect(addr).map_err(|e| Error::Transport(format!("{addr}: {e}")))?;
                stream.set_nodelay(true).ok();
                stream.set_read_timeout(Some(Duration::from_secs(600))).ok();
                let reader = stream.try_clone().map_err(|e| Error::Transport(e.to_string()))?;
                Ok(Conn { reader: Box::new(BufReader::new(reader)), writer: Box::new(stream), child: None })
            }
            Endpoint::Exec(argv) => {
                let mut child = Command::new(&argv[0])
                    .args(&argv[1..])
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .spawn()
                    .map_err(|e| Error::Transport(format!("cannot start `{}`: {e}", argv.join(" "))))?;
                let stdin = child.stdin.take().expect("piped stdin");
                let stdout = child.stdout.take().expect("piped stdout");
                Ok(Conn { reader: Box::new(BufReader::new(stdout)), writer: Box::new(stdin), child: Some(child) })
            }
        }
    }

    fn call(&mut self, req: &Request) -> Result<Response> {
        write_frame(&mut self.writer, req)?;
        let line =
            read_line(&mut self.reader)?.ok_or_else(|| Error::Transport("server closed the connection".into()))?;
        match decode_response(&line)? {
            Response::Error { message } => Err(Error::Remote(message)),
            other => Ok(other),
        }
    }

    fn handshake(&mut self) -> Result<Capabilities> {
        match self.call(&Request::Handshake { version: PROTOCOL_VERSION })? {
            Response::Capabilities(caps) => Ok(caps),
            other => Err(unexpected("capabilities", &other)),
        }
    }
}

impl Drop for Conn {
    fn drop(&mut self) {
        let _ = write_frame(&mut self.writer, &Request::Shutdown);
        if let Some(mut child) = self.child.take() {
            let _ = child.wait();
        }
    }
}

fn unexpected(wanted: &str, got: &Response) -> Error {
    let kind = serde_json::to_value(got)
        .ok()
        .and_then(|v| v.get("type").and_then(|t| t.as_str()).map(str::to_owned))
        .unwrap_or_default();
    Error::Schema(format!("expected `{wanted}` frame, got `{kind}`"))
}

/// A model server reached over the line protocol.
pub struct RemoteStepper {
    endpoint: Endpoint,
    caps: Capabilities,
    idle: Mutex<Vec<Conn>>,
}

impl RemoteStepper {
    /// Connects and performs the handshake.
    pub fn connect(endpoint: Endpoint) -> Result<Self> {
        let mut conn = Conn::open(&endpoint)?;
        let mut caps = conn.handshake()?;
        if caps.num_layers == 0 || caps.num_heads == 0 || caps.vocab_size == 0 {
            return Err(Error::Schema("capabilities declare an empty model".into()));
        }
        if matches!(endpoint, Endpoint::Exec(_)) {
            caps.serial = true;
        }
        Ok(RemoteStepper { endpoint, caps, idle: Mutex::new(vec![conn]) })
    }

    fn with_conn<T>(&self, f: impl FnOnce(&mut Conn) -> Result<T>) -> Result<T> {
        // A child process has exactly one connection: hold the lock for the call.
        if matches!(self.endpoint, Endpoint::Exec(_)) {
            let mut pool = self.idle.lock().unwrap_or_else(|p| p.into_inner());
            let conn = pool.first_mut().ok_or_else(|| Error::Transport("connection lost".into()))?;
            let result = f(conn);
            if matches!(result, Err(Error::Transport(_) | Error::Schema(_))) {
                pool.clear();
            }
            return result;
        }
        let pooled = self.idle.lock().unwrap_or_else(|p| p.into_inner()).pop();
        let mut conn = match pooled {
            Some(c) => c,
            None => {
                let mut c = Conn::open(&self.endpoint)?;
                c.handshake()?;
                c
            }
        };
        let result = f(&mut conn);
        // connections that failed at the transport or schema level are dropped
        if !matches!(result, Err(Error::Transport(_) | Error::Schema(_))) {
            self.idle.lock().unwrap_or_else(|p| p.into_inner()).push(conn);
        }
        result
    }
}

/// Session label for an encoder input.
fn session_id(input: &[u32]) -> String {
    format!("{:016x}", crate::bridge::trace::prefix_hash(input, &[]))
}

impl ModelStepper for RemoteStepper {
    fn capabilities(&self) -> &Capabilities {
        &self.caps
    }

    fn tokenize(&self, text: &str) -> Result<EncodedInput> {
        let resp = self.with_conn(|c| c.call(&Request::Tokenize { text: text.to_string() }))?;
        match resp {
            Response::Tokens(encoded) => {
                encoded.tokenized()?;
                Ok(encoded)
            }
            other => Err(unexpected("tokens", &other)),
        }
    }

    fn step(&self, input: &[u32], prefixes: &[Vec<u32>], top_k: usize) -> Result<Vec<StepOutput>> {
        let req = Request::Step {
            session: session_id(input),
            encoder_input: input.to_vec(),
            prefixes: prefixes.to_vec(),
            top_k,
        };
        let resp = self.with_conn(|c| c.call(&req))?;
        let Response::StepResult { outputs } = resp else {
            return Err(unexpected("step_result", &resp));
        };
        if outputs.len() != prefixes.len() {
            return Err(Error::Schema(format!("{} outputs for {} prefixes", outputs.len(), prefixes.len())));
        }
        for out in &outputs {
            validate_step_output(&self.caps, input.len(), out)?;
        }
        Ok(outputs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_parsing() {
        assert_eq!("127.0.0.1:9000".parse::<Endpoint>().unwrap(), Endpoint::Tcp("127.0.0.1:9000".into()));
        assert_eq!("tcp:localhost:1".parse::<Endpoint>().unwrap(), Endpoint::Tcp("localhost:1".into()));
        assert_eq!(
            "exec:python3 serve.py --k 4".parse::<Endpoint>().unwrap(),
            Endpoint::Exec(vec!["python3".into(), "serve.py".into(), "--k".into(), "4".into()])
        );
        assert!("exec:".parse::<Endpoint>().is_err());
        assert!("nowhere".parse::<Endpoint>().is_err());
    }

    #[test]
    fn unreachable_server() {
        let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        let err = RemoteStepper::connect(Endpoint::Tcp(format!("127.0.0.1:{port}"))).err().unwrap();
        assert!(matches!(err, Error::Transport(_)));
    }
}
