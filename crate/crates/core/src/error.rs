use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A physical parameter is negative, non-finite or otherwise outside its domain.
    #[error("parameter `{name}` = {value} is out of domain: {reason}")]
    ParameterDomain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    /// An input violates a precondition such as sortedness.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// Input carries no information to normalize against (zero rates, all-zero curves).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error(
        "insufficient statistics: {heralds} heralds, {with_a} with an a-tag, {with_b} with a b-tag"
    )]
    InsufficientStatistics {
        heralds: u64,
        with_a: u64,
        with_b: u64,
    },

    /// The least-squares iteration did not converge; `trace` holds the
    /// sum of squared residuals after each accepted step.
    #[error("fit did not converge after {iterations} iterations (last chi2 {last_chi2:.6e})")]
    NonConvergence {
        iterations: usize,
        last_chi2: f64,
        trace: Vec<f64>,
    },

    #[error("no phase-matching crossing in range: delta n = {dn_low:.6} at low end, {dn_high:.6} at high end")]
    NoCrossing { dn_low: f64, dn_high: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Error raised inside a named pipeline stage.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}

/// Checks that `value` is finite and non-negative.
pub(crate) fn non_negative(name: &'static str, value: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::ParameterDomain {
            name,
            value,
            reason: "must be finite",
        });
    }
    if value < 0.0 {
        return Err(Error::ParameterDomain {
            name,
            value,
            reason: "must be non-negative",
        });
    }
    Ok(value)
}

/// Checks that `value` is finite and strictly positive.
pub(crate) fn positive(name: &'static str, value: f64) -> Result<f64> {
    non_negative(name, value).map_err(|e| match e {
        Error::ParameterDomain { name, value, reason } if value.is_finite() => Error::ParameterDomain {
            name,
            value,
            reason: if value < 0.0 { "must be positive" } else { reason },
        },
        other => other,
    })?;
    if value == 0.0 {
        return Err(Error::ParameterDomain {
            name,
            value,
            reason: "must be positive",
        });
    }
    Ok(value)
}

pub(crate) fn fraction(name: &'static str, value: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&value) {
        return Err(Error::ParameterDomain {
            name,
            value,
            reason: "must lie in [0, 1]",
        });
    }
    Ok(value)
}
