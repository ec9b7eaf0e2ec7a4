//! Pure, allocation-only building blocks for evaluating neural decompilers.
//!
//! Nothing in this crate touches the filesystem, spawns processes or talks to
//! the network. The `decompeval` crate layers toolchain drivers, file formats,
//! the HTTP client and the command line on top of it.

#![no_std]

extern crate alloc;

pub mod asm;
pub mod compile;
pub mod corpus;
pub mod inference;
pub mod similarity;
pub mod stats;

pub use corpus::{FunctionRecord, Language, Optimization, Provenance, Split};
pub use stats::IntervalEstimate;
