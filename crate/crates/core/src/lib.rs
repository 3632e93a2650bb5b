//! Multichannel target speech separation in the frequency and time domains.

pub mod beamform;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod features;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod scene;

pub use error::{Error, Result};
