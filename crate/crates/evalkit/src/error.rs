use std::path::PathBuf;

use evalkit_core::CoreError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("spill write to {path} failed: {source}")]
    SpillIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("spill segment {path} failed its checksum (stored {stored:016x}, computed {computed:016x})")]
    ChecksumMismatch { path: PathBuf, stored: u64, computed: u64 },
    #[error("spill segment {path} is malformed: {reason}")]
    CorruptSegment { path: PathBuf, reason: String },
    #[error("stored blob {path} does not match its content hash (found {found})")]
    CorruptBlob { path: PathBuf, found: String },

    #[error("confidence interval for `{metric}` failed on resample {iteration}: {source}")]
    Resample { metric: String, iteration: usize, source: CoreError },

    #[error("unknown module `{name}`; searched: {}", searched.join(", "))]
    UnknownModule { name: String, searched: Vec<String> },
    #[error("module `{name}` has no version `{requested}` (available: {available})")]
    VersionNotFound { name: String, requested: String, available: String },
    #[error("invalid manifest {path}: {reason}")]
    InvalidManifest { path: PathBuf, reason: String },
    #[error("module card for `{module}` failed validation: {}", violations.join("; "))]
    CardValidationFailure { module: String, violations: Vec<String> },
    #[error("git {action} for {url} failed: {stderr}")]
    Git { action: String, url: String, stderr: String },
    #[error("invalid module name `{0}`: use letters, digits, spaces, `_` or `-`, starting with a letter")]
    InvalidName(String),
    #[error("target directory {0} already exists")]
    TargetExists(PathBuf),

    #[error("external module `{module}` failed: {reason}")]
    ExternalModule { module: String, reason: String },

    #[error("dataset {path} line {line}: {reason}")]
    DatasetParse { path: PathBuf, line: usize, reason: String },
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("metric `{metric}` does not accept {task} outputs: {reason}")]
    MetricSchemaMismatch { metric: String, task: String, reason: String },
    #[error("provider protocol violation: {0}")]
    ProtocolViolation(String),
    #[error("provider exited unexpectedly{}", if stderr.is_empty() { String::new() } else { format!("; stderr:\n{stderr}") })]
    ProviderCrash { stderr: String },
    #[error("provider did not answer within {timeout_ms} ms ({pending} requests pending)")]
    ResponseTimeout { timeout_ms: u128, pending: usize },
    #[error("provider failed on example {id}: {message}")]
    ProviderError { id: u64, message: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { context: context.into(), source }
    }

    pub fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { context: context.into(), source }
    }

    /// True for errors caused by the caller's inputs rather than the environment.
    /// A missing file named on the command line is the caller's mistake; other
    /// I/O failures are not.
    pub fn is_user_error(&self) -> bool {
        if let Error::Io { source, .. } = self {
            return source.kind() == std::io::ErrorKind::NotFound;
        }
        !matches!(
            self,
            Error::SpillIo { .. }
                | Error::ChecksumMismatch { .. }
                | Error::CorruptSegment { .. }
                | Error::CorruptBlob { .. }
                | Error::Git { .. }
                | Error::ProviderCrash { .. }
                | Error::ResponseTimeout { .. }
                | Error::ProtocolViolation(_)
                | Error::ExternalModule { .. }
        )
    }
}
