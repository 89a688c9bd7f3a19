//! Serves any [`ModelStepper`] over the line protocol.

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use crate::bridge::protocol::{decode_request, read_line, write_frame, Request, Response, PROTOCOL_VERSION};
use crate::decoder::ModelStepper;
use crate::error::Result;

/// Answers requests until `shutdown` or end of stream. Bad requests get an
/// `error` frame and the loop continues.
pub fn serve_connection<S, R, W>(stepper: &S, mut reader: R, mut writer: W) -> Result<()>
where
    S: ModelStepper + ?Sized,
    R: BufRead,
    W: Write,
{
    while let Some(line) = read_line(&mut reader)? {
        let response = match decode_request(&line) {
            Err(e) => Response::Error { message: e.to_string() },
            Ok(Request::Handshake { version }) if version != PROTOCOL_VERSION => {
                Response::Error { message: format!("unsupported protocol version {version}") }
            }
            Ok(Request::Handshake { .. }) => Response::Capabilities(stepper.capabilities().clone()),
            Ok(Request::Tokenize { text }) => match stepper.tokenize(&text) {
                Ok(encoded) => Response::Tokens(encoded),
                Err(e) => Response::Error { message: e.to_string() },
            },
            Ok(Request::Step { encoder_input, prefixes, top_k, .. }) => {
                match stepper.step(&encoder_input, &prefixes, top_k) {
                    Ok(outputs) => Response::StepResult { outputs },
                    Err(e) => Response::Error { message: e.to_string() },
                }
            }
            Ok(Request::Shutdown) => {
                write_frame(&mut writer, &Response::Bye)?;
                return Ok(());
            }
        };
        write_frame(&mut writer, &response)?;
    }
    Ok(())
}

/// Accepts connections forever, one thread per connection.
pub fn serve_tcp<S: ModelStepper + 'static>(stepper: Arc<S>, listener: TcpListener) -> Result<()> {
    for stream in listener.incoming() {
        let stream = stream?;
        let stepper = Arc::clone(&stepper);
        thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(e) => {
                    log::warn!("cannot clone connection: {e}");
                    return;
                }
            };
            if let Err(e) = serve_connection(stepper.as_ref(), reader, stream) {
                log::warn!("connection closed with error: {e}");
            }
        });
    }
    Ok(())
}
