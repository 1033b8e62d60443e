use std::fmt;

use thiserror::Error;

/// One violated configuration invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldViolation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for FieldViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Every invariant a configuration record violates, not just the first.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct ConfigError {
    pub violations: Vec<FieldViolation>,
}

impl ConfigError {
    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.violations.iter().map(|v| v.field.as_str())
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid configuration: ")?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Point of a sweep that failed its minimum-throughput constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSlack {
    pub theta_db: f64,
    pub edge_subbands: usize,
    /// `T(R) - min_mpt`; negative when violated.
    pub slack: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("quadrature for {integral} did not converge (estimate {estimate:e}, error {error:e})")]
    Quadrature {
        integral: &'static str,
        estimate: f64,
        error: f64,
    },

    #[error("edge STP undefined at r = {r} m: interior-miss probability {denominator:e} is below 1e-12")]
    DegenerateEdge { r: f64, denominator: f64 },

    #[error("fixed point did not converge after {iterations} iterations (last residual {:e})", .residuals.last().copied().unwrap_or(f64::NAN))]
    NotConverged { iterations: usize, residuals: Vec<f64> },

    #[error("no feasible grid point ({} points checked)", .slack.len())]
    Infeasible { slack: Vec<ConstraintSlack> },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
