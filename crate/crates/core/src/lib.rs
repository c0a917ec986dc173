//! Graph-based semi-supervised classification with auction dynamics and
//! margin-driven active learning.

#![allow(clippy::needless_range_loop)]

pub mod active;
pub mod auction;
pub mod dynamics;
pub mod error;
pub mod graph;
pub mod harness;
pub mod oracle;

pub use error::{MaladyError, Result};
