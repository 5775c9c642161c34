//! EEG-style preprocessing, ICA artifact removal, two-tower time/frequency
//! classification of real-vs-fake stimulus responses, and Mapper graphs.
//!
//! The pipeline runs end to end on the built-in synthetic session generator in
//! [`synth`]; every stage also reads and writes the file formats in [`io`].

pub mod classifier;
pub mod error;
pub mod evaluation;
pub mod ica;
pub mod io;
pub mod mapper;
pub mod pipeline;
pub mod signal;
pub mod spectral;
pub mod synth;

pub use error::{Error, Result};
