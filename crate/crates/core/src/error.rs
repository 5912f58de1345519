use thiserror::Error;

/// Errors raised by the library.
///
/// Variants are grouped so the CLI can map them onto exit codes:
/// validation and input problems are caller mistakes, the rest are
/// numerical failures on otherwise valid input.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("range error: {0}")]
    Range(String),

    #[error("degenerate rank at {context}: sigma_{rank} = {sigma:e} <= tolerance {tolerance:e}")]
    DegenerateRank {
        context: String,
        rank: usize,
        sigma: f64,
        tolerance: f64,
    },

    #[error("cut locus: points {context} are orthogonal in some direction (sigma_min = {sigma_min:e})")]
    CutLocus { context: String, sigma_min: f64 },

    #[error("sparse solver did not converge after {iterations} iterations (objective gap {gap:e})")]
    SolverNonConvergence { iterations: usize, gap: f64 },

    #[error("segment {index} [{start}, {end}) is too short: {available} samples available, {required} required")]
    SegmentTooShort {
        index: usize,
        start: usize,
        end: usize,
        available: usize,
        required: usize,
    },
}

impl Error {
    /// True for errors caused by invalid configuration or malformed input.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation(_) | Error::Input(_) | Error::Range(_))
    }

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn range(msg: impl Into<String>) -> Self {
        Error::Range(msg.into())
    }

    /// Prefix the context of a numerical error, used to attach feature provenance.
    pub fn with_context(self, ctx: &str) -> Self {
        match self {
            Error::DegenerateRank {
                context,
                rank,
                sigma,
                tolerance,
            } => Error::DegenerateRank {
                context: join_context(ctx, &context),
                rank,
                sigma,
                tolerance,
            },
            Error::CutLocus { context, sigma_min } => Error::CutLocus {
                context: join_context(ctx, &context),
                sigma_min,
            },
            other => other,
        }
    }
}

fn join_context(outer: &str, inner: &str) -> String {
    if inner.is_empty() {
        outer.to_string()
    } else {
        format!("{outer}: {inner}")
    }
}

pub type Result<T> = std::result::Result<T, Error>;
