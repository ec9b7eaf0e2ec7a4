//! Toolchain drivers, file formats, the generation client and the command
//! line for the decompilation evaluation workbench.

pub mod binpipe;
pub mod client;
pub mod compilecheck;
pub mod config;
pub mod corpus_io;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod stub;
pub mod syntax;
pub mod toolchain;
