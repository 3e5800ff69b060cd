//! Error categories and their exit statuses.

use std::fmt;
use std::io;
use std::path::Path;

use factprobe::embedding_store::StoreError;
use factprobe::probe_model::ProbeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    MissingFile,
    Schema,
    Runtime,
}

impl Kind {
    /// Status 2 is left to argument parsing errors.
    pub fn exit_code(self) -> u8 {
        match self {
            Kind::MissingFile => 3,
            Kind::Schema => 4,
            Kind::Runtime => 5,
        }
    }
}

#[derive(Debug)]
pub struct Tagged {
    pub kind: Kind,
    pub message: String,
}

impl fmt::Display for Tagged {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Tagged {}

pub fn schema(message: impl Into<String>) -> anyhow::Error {
    Tagged {
        kind: Kind::Schema,
        message: message.into(),
    }
    .into()
}

pub fn missing_file(path: &Path) -> anyhow::Error {
    Tagged {
        kind: Kind::MissingFile,
        message: format!("missing file: {}", path.display()),
    }
    .into()
}

fn io_kind(e: &io::Error) -> Kind {
    if e.kind() == io::ErrorKind::NotFound {
        Kind::MissingFile
    } else {
        Kind::Runtime
    }
}

pub fn classify(err: &anyhow::Error) -> Kind {
    for cause in err.chain() {
        if let Some(t) = cause.downcast_ref::<Tagged>() {
            return t.kind;
        }
        if let Some(e) = cause.downcast_ref::<StoreError>() {
            return match e {
                StoreError::Io { source, .. } => io_kind(source),
                _ => Kind::Schema,
            };
        }
        if let Some(e) = cause.downcast_ref::<ProbeError>() {
            return match e {
                ProbeError::Io { source, .. } => io_kind(source),
                ProbeError::BadMagic
                | ProbeError::Truncated
                | ProbeError::TrailingBytes(_)
                | ProbeError::Header(_)
                | ProbeError::InputCount { .. }
                | ProbeError::InputDim { .. } => Kind::Schema,
                _ => Kind::Runtime,
            };
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return Kind::Schema;
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return io_kind(e);
        }
    }
    Kind::Runtime
}
