use thiserror::Error;

/// Errors produced by the bound evaluators and their supporting numerics.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    /// The caller violated an API precondition (empty input, inverted bracket, ...).
    #[error("usage error in {op}: {detail}")]
    Usage { op: &'static str, detail: String },

    /// A numerical routine failed to converge.
    #[error("numerical failure in {op}: {detail}")]
    Numerical { op: &'static str, detail: String },

    /// Pilot energy exceeds the per-block energy budget.
    #[error("infeasible power split: np*rho_p = {pilot_energy} exceeds nc*rho = {block_energy}")]
    InfeasiblePower { pilot_energy: f64, block_energy: f64 },

    /// A Monte-Carlo sampler failed on a specific draw.
    #[error("sampler failed at draw {index}: {source}")]
    Sampler {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    /// The Monte-Carlo budget is too small to resolve the requested quantity.
    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    /// An inverse problem has no solution inside the search bracket.
    #[error("infeasible target: {0}")]
    Infeasible(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Domain { op, detail: detail.into() }
}

pub(crate) fn usage(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Usage { op, detail: detail.into() }
}

pub(crate) fn numerical(op: &'static str, detail: impl Into<String>) -> Error {
    Error::Numerical { op, detail: detail.into() }
}
