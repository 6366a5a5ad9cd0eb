//! Shallow neural emulators for a broadband column radiation scheme.
//!
//! The crate covers the whole workflow: synthetic scene generation, a
//! reference radiation scheme that labels the data, stratified sampling into
//! eight sub-model datasets, single-hidden-layer tanh networks and their
//! training loop, batched inference, evaluation metrics and a coupled
//! single-column driver for error-accumulation experiments.

mod container;
pub mod datapipe;
pub mod domain;
pub mod driver;
pub mod emulator;
pub mod net;
pub mod error;
pub mod evalkit;
pub mod refrad;
pub mod scenegen;
pub mod train;

pub use error::{Error, FormatError, Result};

pub use container::FORMAT_VERSION;
