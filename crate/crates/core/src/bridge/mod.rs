//! Concrete model steppers: a protocol client, trace record/replay, and a
//! scripted toy model, plus a server loop for any stepper.

pub mod client;
pub mod protocol;
pub mod server;
pub mod toy;
pub mod trace;

pub use client::{Endpoint, RemoteStepper};
pub use toy::{ToySpec, ToyStepper};
pub use trace::{Recorder, TraceFile, TraceStepper};
