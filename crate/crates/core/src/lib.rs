//! Slot tracking, attention-guided decoding and slot error evaluation for
//! data-to-text generation from meaning representations.

pub mod aligner;
pub mod attention;
pub mod bridge;
pub mod data;
pub mod decoder;
pub mod error;
pub mod heatmap;
pub mod lexicon;
pub mod mr;
pub mod pipeline;
pub mod ser;
pub mod text;
pub mod tracking;
pub mod tuner;

pub use error::{Error, Result};
