use std::fmt;

use thiserror::Error;

/// The standing assumption a rejected configuration violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Assumption {
    /// Initial datum in L².
    A1,
    /// Reaction coefficient bounded.
    A2,
    /// Growth, one-sided, Lipschitz and time-derivative bounds on f.
    A3,
    /// Positivity of a inside (-1,1) and vanishing at the endpoints.
    A4,
    /// Weak degeneracy: 1/a integrable, Robin data nontrivial and sign-conditioned.
    A5WeaklyDegenerate,
    /// Strong degeneracy: weighted Neumann data, xi_a in L^{q_theta}.
    A5StronglyDegenerate,
}

impl fmt::Display for Assumption {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Assumption::A1 => "(A.1)",
            Assumption::A2 => "(A.2)",
            Assumption::A3 => "(A.3)",
            Assumption::A4 => "(A.4)",
            Assumption::A5WeaklyDegenerate => "(A.5_WD)",
            Assumption::A5StronglyDegenerate => "(A.5_SD)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("configuration error{}: {message}", assumption.map(|a| format!(" {a}")).unwrap_or_default())]
    Config {
        assumption: Option<Assumption>,
        message: String,
    },

    #[error("integral of 1/a diverges at x = {at}")]
    Divergence { at: f64 },

    #[error("refinement trend is indeterminate: {sequence:?}")]
    Indeterminate { sequence: Vec<f64> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("boundary mode error: {0}")]
    Mode(String),

    #[error("step size error: pivot {pivot:e} at row {row}")]
    StepSize { row: usize, pivot: f64 },

    #[error("Picard iteration did not converge at step {step} (level {level:?}): residuals {residuals:?}")]
    NonConvergence {
        step: usize,
        level: Option<usize>,
        residuals: Vec<f64>,
    },

    #[error("ratio undefined: {0}")]
    UndefinedRatio(String),

    #[error("nonlinearity does not conform to its declared constants: {0}")]
    Conformance(String),
}

impl Error {
    pub fn config(assumption: Assumption, message: impl Into<String>) -> Self {
        Error::Config {
            assumption: Some(assumption),
            message: message.into(),
        }
    }

    pub fn plain_config(message: impl Into<String>) -> Self {
        Error::Config {
            assumption: None,
            message: message.into(),
        }
    }

    pub fn domain(message: impl Into<String>) -> Self {
        Error::Domain(message.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
