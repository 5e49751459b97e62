//! Layer-graph accounting and analytic PE-array accelerator simulation for
//! SqueezeNext-style CNN design-space exploration.

pub mod cli;
pub mod dataflow;
pub mod error;
pub mod hwmodel;
pub mod netir;
pub mod simrun;
pub mod tiler;
pub mod zoo;

pub use error::SimError;
