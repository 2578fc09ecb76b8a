use std::path::PathBuf;

use dno_core::Error as CoreError;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const MISSING_DEPENDENCY: i32 = 3;
    pub const SIMULATION: i32 = 4;
    pub const DIVERGENCE: i32 = 5;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input {path}: {hint}")]
    Missing { path: PathBuf, hint: String },

    #[error("loads and simulations do not pair up; loads without a simulation: {orphan_loads:?}; simulations without a load: {orphan_sims:?}")]
    Pairing {
        orphan_loads: Vec<String>,
        orphan_sims: Vec<String>,
    },

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: CoreError,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn missing(path: impl Into<PathBuf>, hint: impl Into<String>) -> Self {
        CliError::Missing {
            path: path.into(),
            hint: hint.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => exit::CONFIG,
            CliError::Missing { .. } | CliError::Pairing { .. } => exit::MISSING_DEPENDENCY,
            CliError::Core { source, .. } => core_code(source),
            CliError::Io { .. } | CliError::Other(_) => exit::OTHER,
        }
    }
}

fn core_code(e: &CoreError) -> i32 {
    match e {
        CoreError::Step { .. }
        | CoreError::NoConvergence { .. }
        | CoreError::TangentSingular { .. }
        | CoreError::Factorization { .. } => exit::SIMULATION,
        CoreError::Divergence { .. } => exit::DIVERGENCE,
        CoreError::Element { source, .. } => core_code(source),
        _ => exit::OTHER,
    }
}

/// Attaches context to core errors.
pub trait Context<T> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T>;
}

impl<T> Context<T> for std::result::Result<T, CoreError> {
    fn context(self, what: impl FnOnce() -> String) -> Result<T> {
        self.map_err(|source| CliError::Core {
            context: what(),
            source,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_distinct() {
        let sim = CliError::Core {
            context: "x".into(),
            source: CoreError::Step {
                step: 3,
                source: Box::new(CoreError::NoConvergence {
                    iterations: 50,
                    residual: 1.0,
                }),
            },
        };
        let div = CliError::Core {
            context: "x".into(),
            source: CoreError::Element {
                element: 2,
                source: Box::new(CoreError::Divergence {
                    iteration: 1,
                    loss: f64::NAN,
                }),
            },
        };
        let codes = [
            CliError::config("bad").exit_code(),
            CliError::missing("loads", "run generate").exit_code(),
            sim.exit_code(),
            div.exit_code(),
            CliError::Other("x".into()).exit_code(),
        ];
        assert_eq!(codes, [2, 3, 4, 5, 1]);
    }
}
