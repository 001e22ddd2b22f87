//! Error taxonomy shared across the library and the command-line runner.

use thiserror::Error;

/// Library-wide error type.
///
/// The variants map one-to-one onto the process exit codes used by the
/// command-line runner: configuration, domain, contract, and resource
/// problems are usage errors (exit 2); numerical failures are runtime
/// errors (exit 3); non-convergence is exit 4.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid static configuration: grid sizes, parameter ranges,
    /// malformed configuration files.
    #[error("configuration error: {0}")]
    Config(String),

    /// Mathematically undefined request: unattainable targets, objects
    /// that do not exist for the given inputs.
    #[error("domain error: {0}")]
    Domain(String),

    /// API contract violation: mismatched grids, off-shell momenta,
    /// incompatible dimensions.
    #[error("contract violation: {0}")]
    Contract(String),

    /// Non-finite values or other loss of numerical validity at runtime.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// An iterative procedure exhausted its budget without converging.
    #[error("non-convergence: {0}")]
    Convergence(String),

    /// A configured resource budget (memory, loop count) would be exceeded.
    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Resource(format!("I/O failure: {e}"))
    }
}

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code the command-line runner maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Domain(_) | Error::Contract(_) | Error::Resource(_) => 2,
            Error::Numerical(_) => 3,
            Error::Convergence(_) => 4,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::Error;

    #[test]
    fn exit_codes_partition_the_variants() {
        let msg = || "x".to_string();
        assert_eq!(Error::Config(msg()).exit_code(), 2);
        assert_eq!(Error::Domain(msg()).exit_code(), 2);
        assert_eq!(Error::Contract(msg()).exit_code(), 2);
        assert_eq!(Error::Resource(msg()).exit_code(), 2);
        assert_eq!(Error::Numerical(msg()).exit_code(), 3);
        assert_eq!(Error::Convergence(msg()).exit_code(), 4);
    }

    #[test]
    fn io_errors_become_resource_errors() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e: Error = io.into();
        assert!(matches!(e, Error::Resource(_)));
        assert_eq!(e.exit_code(), 2);
    }
}
