use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument outside the operation's domain (negative time, non-finite level, ...).
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },

    /// The model does not carry the closed form or sampler this operation needs.
    #[error("{op}: unsupported for model {model}")]
    Unsupported { op: &'static str, model: String },

    /// A quadrature or inversion did not reach the requested tolerance.
    #[error("{op}: numerical failure (achieved {achieved:e}, requested {requested:e})")]
    Numerical {
        op: &'static str,
        achieved: f64,
        requested: f64,
    },

    /// Weight/model pair violating the integrability condition.
    #[error("inadmissible weight: {0}")]
    Admissibility(String),

    /// Monte Carlo ratio with a non-positive denominator.
    #[error("degenerate experiment: {0}")]
    Degenerate(String),

    #[error("invalid model parameters: {0}")]
    Construction(String),

    #[error("cannot parse `{token}`: {reason}")]
    Parse { token: String, reason: String },

    #[error("usage: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn unsupported(op: &'static str, model: impl std::fmt::Display) -> Self {
        Error::Unsupported {
            op,
            model: model.to_string(),
        }
    }

    pub(crate) fn parse(token: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Parse {
            token: token.into(),
            reason: reason.into(),
        }
    }
}

/// Reject NaN/inf and values below `min`.
pub(crate) fn check_at_least(op: &'static str, name: &str, value: f64, min: f64) -> Result<()> {
    if !value.is_finite() || value < min {
        return Err(Error::domain(op, format!("{name} = {value} must be finite and >= {min}")));
    }
    Ok(())
}

pub(crate) fn check_positive(op: &'static str, name: &str, value: f64) -> Result<()> {
    if !value.is_finite() || value <= 0.0 {
        return Err(Error::domain(op, format!("{name} = {value} must be finite and > 0")));
    }
    Ok(())
}
