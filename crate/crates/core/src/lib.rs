//! Sequence-to-sequence dialogue generation with a selectable rule for the
//! decoder's first context vector.
//!
//! The decoder normally builds `a₁` by soft attention from its initial
//! state. This crate also supports hard selections of a single encoder
//! state: the attention argmax, a fixed position, a random position, and
//! the state with the largest (or smallest) summed inner product against
//! all encoder states. Later steps always use soft attention.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod vocab;

pub use error::{Error, Result};
