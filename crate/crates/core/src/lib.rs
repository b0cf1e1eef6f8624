//! Conditional normalizing flows over two-hand poses.

pub mod error;
pub mod flow;
pub mod handmodel;
pub mod training;
pub mod annotate;
pub mod evalkit;
pub mod harness;

pub use error::{Error, Result};
