//! IO, model backends, the review service and the command line for the
//! crowdlabel annotation pipeline. The pure logic lives in
//! [`crowdlabel_core`].

pub mod codebook;
pub mod config;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod manifest;
pub mod pipeline;
pub mod report;
pub mod service;
pub mod sim;

pub use crowdlabel_core as core;
pub use error::{Error, Result};
