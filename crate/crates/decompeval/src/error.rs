//! Top-level error with the stage it came from and a process exit code.

use std::fmt;

use crate::binpipe::{BinpipeError, StageError};
use crate::client::{ClientError, HypothesisFileError};
use crate::compilecheck::CheckError;
use crate::config::ConfigError;
use crate::corpus_io::CorpusIoError;
use crate::report::ReportError;
use crate::toolchain::ToolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad invocation or configuration.
    Usage,
    /// Input data that is malformed or violates an invariant.
    Data,
    /// A compiler, disassembler or endpoint failed or is missing.
    External,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Usage => 1,
            ErrorKind::Data => 2,
            ErrorKind::External => 3,
        }
    }
}

#[derive(Debug)]
pub struct Error {
    pub kind: ErrorKind,
    pub stage: &'static str,
    pub item: Option<String>,
    pub message: String,
}

impl Error {
    pub fn new(kind: ErrorKind, stage: &'static str, message: impl Into<String>) -> Self {
        Error { kind, stage, item: None, message: message.into() }
    }

    pub fn usage(stage: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Usage, stage, message)
    }

    pub fn data(stage: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::Data, stage, message)
    }

    pub fn external(stage: &'static str, message: impl Into<String>) -> Self {
        Self::new(ErrorKind::External, stage, message)
    }

    pub fn at(mut self, item: impl Into<String>) -> Self {
        self.item = Some(item.into());
        self
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }

    pub fn io(stage: &'static str, path: &std::path::Path, e: std::io::Error) -> Self {
        Self::data(stage, format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.stage)?;
        if let Some(item) = &self.item {
            write!(f, " [{item}]")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for Error {}

impl From<CorpusIoError> for Error {
    fn from(e: CorpusIoError) -> Self {
        Error::data("corpus", e.to_string())
    }
}

impl From<ConfigError> for Error {
    fn from(e: ConfigError) -> Self {
        let kind = match e {
            ConfigError::Tool(_) => ErrorKind::External,
            ConfigError::Io { .. } | ConfigError::Syntax { .. } | ConfigError::Invalid(_) => ErrorKind::Usage,
        };
        Error::new(kind, "config", e.to_string())
    }
}

impl From<ToolError> for Error {
    fn from(e: ToolError) -> Self {
        let kind = match e {
            ToolError::ZeroTimeout => ErrorKind::Usage,
            _ => ErrorKind::External,
        };
        Error::new(kind, "toolchain", e.to_string())
    }
}

impl From<CheckError> for Error {
    fn from(e: CheckError) -> Self {
        let kind = match &e {
            CheckError::UnsupportedLanguage { .. } => ErrorKind::Usage,
            CheckError::Compile(decompeval_core::compile::CompileError::ZeroK) => ErrorKind::Usage,
            CheckError::Compile(_) | CheckError::Parse { .. } => ErrorKind::Data,
            CheckError::Tool(ToolError::ZeroTimeout) => ErrorKind::Usage,
            CheckError::Tool(_) | CheckError::Pool(_) | CheckError::Io { .. } => ErrorKind::External,
        };
        Error::new(kind, "compile-check", e.to_string())
    }
}

impl From<ClientError> for Error {
    fn from(e: ClientError) -> Self {
        let (kind, item) = match &e {
            ClientError::Policy(_) | ClientError::BadRate(_) => (ErrorKind::Usage, None),
            ClientError::Item { item_id, .. } => (ErrorKind::External, Some(item_id.clone())),
            _ => (ErrorKind::External, None),
        };
        let mut err = Error::new(kind, "generate", e.to_string());
        err.item = item;
        err
    }
}

impl From<HypothesisFileError> for Error {
    fn from(e: HypothesisFileError) -> Self {
        Error::data("hypotheses", e.to_string())
    }
}

impl From<ReportError> for Error {
    fn from(e: ReportError) -> Self {
        Error::data("report", e.to_string())
    }
}

impl From<StageError> for Error {
    fn from(e: StageError) -> Self {
        let kind = match &e.source {
            BinpipeError::Tool(ToolError::ZeroTimeout) => ErrorKind::Usage,
            s if s.is_tool_failure() => ErrorKind::External,
            _ => ErrorKind::Data,
        };
        let stage = match e.stage {
            crate::binpipe::Stage::Prepare => "prepare",
            crate::binpipe::Stage::Compile => "compile",
            crate::binpipe::Stage::Disassemble => "disassemble",
            crate::binpipe::Stage::Extract => "extract",
            crate::binpipe::Stage::Validate => "validate",
        };
        let mut message = e.source.to_string();
        if let Some(p) = &e.kept {
            message.push_str(&format!(" (scratch kept at {})", p.display()));
        }
        Error::new(kind, stage, message).at(e.id)
    }
}
