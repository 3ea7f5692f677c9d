//! Protocol repository: the platform-wide store of protocol definitions.
//!
//! A repository is a directory holding an `index` file plus one `.proto`
//! file per protocol. Each non-comment index line reads
//! `<namespace>/<name> <version> <relative-file>`. Loading is eager: every
//! listed protocol is parsed and validated up front, and the first problem
//! aborts the load.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::protocol::{
    parse_protocol, Diagnostic, ProtocolDescriptor, ProtocolId, ProtocolParseError,
};

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("cannot read index {path}: {source}")]
    MissingIndex {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("index line {line}: {message}")]
    IndexSyntax { line: usize, message: String },
    #[error("{file}: listed in index but missing")]
    MissingFile { file: String },
    #[error("{file}: {source}")]
    Parse {
        file: String,
        source: ProtocolParseError,
    },
    #[error("{file}: invalid protocol: {}", join(.diagnostics))]
    Invalid {
        file: String,
        diagnostics: Vec<Diagnostic>,
    },
    #[error("{file}: index lists {expected} but the file declares {found}")]
    IdMismatch {
        file: String,
        expected: Box<ProtocolId>,
        found: Box<ProtocolId>,
    },
    #[error("duplicate protocol {0}")]
    Duplicate(ProtocolId),
    #[error("unknown protocol {0}")]
    UnknownName(String),
    #[error("unknown version {requested} of {name} (available: {})", .available.join(", "))]
    UnknownVersion {
        name: String,
        requested: String,
        available: Vec<String>,
    },
}

fn join(d: &[Diagnostic]) -> String {
    d.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(", ")
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Entry {
    file: String,
    descriptor: Arc<ProtocolDescriptor>,
}

/// Immutable after load; share it between agents behind an `Arc`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Repository {
    entries: Vec<Entry>,
}

const BUNDLED_INDEX: &str = include_str!("../protocols/index");
const BUNDLED_FILES: &[(&str, &str)] = &[
    ("open.proto", include_str!("../protocols/open.proto")),
    ("enquiry.proto", include_str!("../protocols/enquiry.proto")),
    ("listing.proto", include_str!("../protocols/listing.proto")),
    ("price.proto", include_str!("../protocols/price.proto")),
    (
        "portfolio.proto",
        include_str!("../protocols/portfolio.proto"),
    ),
    (
        "broker-buy.proto",
        include_str!("../protocols/broker-buy.proto"),
    ),
    (
        "broker-sell.proto",
        include_str!("../protocols/broker-sell.proto"),
    ),
    (
        "guru-subscribe.proto",
        include_str!("../protocols/guru-subscribe.proto"),
    ),
    (
        "auction-subscribe.proto",
        include_str!("../protocols/auction-subscribe.proto"),
    ),
    (
        "bidder-sell.proto",
        include_str!("../protocols/bidder-sell.proto"),
    ),
];

impl Repository {
    /// The ten trading-game protocols compiled into the library.
    pub fn bundled() -> Self {
        Self::from_sources(BUNDLED_INDEX, |file| {
            BUNDLED_FILES
                .iter()
                .find(|(name, _)| *name == file)
                .map(|(_, src)| src.to_string())
        })
        .expect("bundled protocols are valid")
    }

    /// Loads a repository from index text, resolving file names through `read`.
    pub fn from_sources(
        index: &str,
        mut read: impl FnMut(&str) -> Option<String>,
    ) -> Result<Self, RepositoryError> {
        let mut entries: Vec<Entry> = Vec::new();
        for (expected, file) in parse_index(index)? {
            if entries.iter().any(|e| e.descriptor.id() == &expected) {
                return Err(RepositoryError::Duplicate(expected));
            }
            let descriptor = load_entry(&expected, &file, read(&file))?;
            entries.push(Entry {
                file,
                descriptor: Arc::new(descriptor),
            });
        }
        Ok(Repository { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Protocols in index order.
    pub fn protocols(&self) -> impl Iterator<Item = &Arc<ProtocolDescriptor>> {
        self.entries.iter().map(|e| &e.descriptor)
    }

    /// Index entries as `(id, relative file)`.
    pub fn index(&self) -> impl Iterator<Item = (&ProtocolId, &str)> {
        self.entries
            .iter()
            .map(|e| (e.descriptor.id(), e.file.as_str()))
    }

    pub fn get(&self, id: &ProtocolId) -> Result<Arc<ProtocolDescriptor>, RepositoryError> {
        if let Some(e) = self.entries.iter().find(|e| e.descriptor.id() == id) {
            return Ok(Arc::clone(&e.descriptor));
        }
        let available: Vec<String> = self
            .entries
            .iter()
            .map(|e| e.descriptor.id())
            .filter(|other| other.namespace == id.namespace && other.name == id.name)
            .map(|other| other.version.clone())
            .collect();
        if available.is_empty() {
            Err(RepositoryError::UnknownName(id.qualified_name()))
        } else {
            Err(RepositoryError::UnknownVersion {
                name: id.qualified_name(),
                requested: id.version.clone(),
                available,
            })
        }
    }

    /// Looks a protocol up by `namespace/name` and version.
    pub fn lookup(
        &self,
        qualified: &str,
        version: &str,
    ) -> Result<Arc<ProtocolDescriptor>, RepositoryError> {
        let id = ProtocolId::parse(qualified, version)
            .map_err(|_| RepositoryError::UnknownName(qualified.to_string()))?;
        self.get(&id)
    }
}

/// `(id, file)` for every index line.
fn parse_index(index: &str) -> Result<Vec<(ProtocolId, String)>, RepositoryError> {
    let mut out = Vec::new();
    for (i, raw) in index.lines().enumerate() {
        let line = i + 1;
        let text = raw.split('#').next().unwrap_or("").trim();
        if text.is_empty() {
            continue;
        }
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [qualified, version, file] = fields[..] else {
            return Err(RepositoryError::IndexSyntax {
                line,
                message: "expected `<namespace>/<name> <version> <file>`".into(),
            });
        };
        let id =
            ProtocolId::parse(qualified, version).map_err(|e| RepositoryError::IndexSyntax {
                line,
                message: e.to_string(),
            })?;
        out.push((id, file.to_string()));
    }
    Ok(out)
}

fn load_entry(
    expected: &ProtocolId,
    file: &str,
    source: Option<String>,
) -> Result<ProtocolDescriptor, RepositoryError> {
    let source = source.ok_or_else(|| RepositoryError::MissingFile {
        file: file.to_string(),
    })?;
    let descriptor = parse_protocol(&source).map_err(|source| RepositoryError::Parse {
        file: file.to_string(),
        source,
    })?;
    if descriptor.id() != expected {
        return Err(RepositoryError::IdMismatch {
            file: file.to_string(),
            expected: Box::new(expected.clone()),
            found: Box::new(descriptor.id().clone()),
        });
    }
    let diagnostics = descriptor.validate();
    if !diagnostics.is_empty() {
        return Err(RepositoryError::Invalid {
            file: file.to_string(),
            diagnostics,
        });
    }
    Ok(descriptor)
}

/// Per-protocol outcome of [`check_repository`].
pub type CheckResult = (ProtocolId, Result<(), RepositoryError>);

/// Checks every protocol listed in `<root>/index` without stopping at the
/// first bad one. Only an unreadable or malformed index is an error; each
/// listed protocol gets its own result.
pub fn check_repository(root: impl AsRef<Path>) -> Result<Vec<CheckResult>, RepositoryError> {
    let root = root.as_ref();
    let index_path = root.join("index");
    let index =
        fs::read_to_string(&index_path).map_err(|source| RepositoryError::MissingIndex {
            path: index_path.clone(),
            source,
        })?;
    let mut seen = Vec::new();
    let mut out = Vec::new();
    for (id, file) in parse_index(&index)? {
        let result = if seen.contains(&id) {
            Err(RepositoryError::Duplicate(id.clone()))
        } else {
            load_entry(&id, &file, fs::read_to_string(root.join(&file)).ok()).map(drop)
        };
        seen.push(id.clone());
        out.push((id, result));
    }
    Ok(out)
}

/// Loads every protocol listed in `<root>/index`.
pub fn load_repository(root: impl AsRef<Path>) -> Result<Repository, RepositoryError> {
    let root = root.as_ref();
    let index_path = root.join("index");
    let index =
        fs::read_to_string(&index_path).map_err(|source| RepositoryError::MissingIndex {
            path: index_path.clone(),
            source,
        })?;
    Repository::from_sources(&index, |file| fs::read_to_string(root.join(file)).ok())
}

pub fn get_protocol(
    repo: &Repository,
    id: &ProtocolId,
) -> Result<Arc<ProtocolDescriptor>, RepositoryError> {
    repo.get(id)
}
