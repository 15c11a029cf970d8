//! Error type shared across the crate.
//!
//! Variants are grouped by how a caller should react (and by the process
//! exit code the CLI maps them to): bad arguments, bad data on disk, or a
//! numerical failure that no amount of input massaging will fix.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller violated an API contract: mismatched dimensions, empty
    /// inputs, out-of-range parameters, contradictory options.
    #[error("invalid usage: {0}")]
    Usage(String),

    /// A file could not be parsed or failed validation: wrong magic bytes,
    /// malformed CSV row, truncated payload, duplicate ids.
    #[error("data format error{}: {detail}", fmt_ctx(.path, .line))]
    Format {
        /// File the error was found in, when known.
        path: Option<String>,
        /// 1-based line number for text formats, when known.
        line: Option<usize>,
        /// Human-readable description of what failed.
        detail: String,
    },

    /// Numerical routine failed beyond recovery (e.g. a matrix stayed
    /// non-positive-definite through the whole jitter ladder).
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Underlying I/O failure while reading or writing artifacts.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn fmt_ctx(path: &Option<String>, line: &Option<usize>) -> String {
    match (path, line) {
        (Some(p), Some(l)) => format!(" in {p}:{l}"),
        (Some(p), None) => format!(" in {p}"),
        (None, Some(l)) => format!(" at line {l}"),
        (None, None) => String::new(),
    }
}

impl Error {
    /// Shorthand for a usage error.
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// Shorthand for a format error without file context.
    pub fn format(detail: impl Into<String>) -> Self {
        Error::Format { path: None, line: None, detail: detail.into() }
    }

    /// Shorthand for a format error tied to a file (and optionally a line).
    pub fn format_in(path: impl Into<String>, line: Option<usize>, detail: impl Into<String>) -> Self {
        Error::Format { path: Some(path.into()), line, detail: detail.into() }
    }

    /// Shorthand for a format error at a line, with the path to be attached
    /// later via [`Error::with_path`].
    pub fn format_at(line: usize, detail: impl Into<String>) -> Self {
        Error::Format { path: None, line: Some(line), detail: detail.into() }
    }

    /// Attach a file path to an error that was produced without one: fills
    /// a format error's missing path and prefixes an i/o error's message.
    pub fn with_path(self, path: impl Into<String>) -> Self {
        match self {
            Error::Format { path: None, line, detail } => {
                Error::Format { path: Some(path.into()), line, detail }
            }
            Error::Io(io) => Error::Io(std::io::Error::new(
                io.kind(),
                format!("{}: {io}", path.into()),
            )),
            other => other,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn display_includes_context() {
        let e = Error::format_in("feat.csv", Some(3), "expected 4 fields, got 2");
        let msg = e.to_string();
        assert!(msg.contains("feat.csv:3"), "{msg}");
        assert!(msg.contains("expected 4 fields"), "{msg}");
    }

    #[test]
    fn with_path_only_fills_missing() {
        let e = Error::format("short read").with_path("model.gph");
        assert!(e.to_string().contains("model.gph"));
        let e2 = Error::format_in("a.bin", None, "x").with_path("b.bin");
        assert!(e2.to_string().contains("a.bin"));
    }
}
