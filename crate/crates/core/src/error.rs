use thiserror::Error;

/// Errors produced by the simulator and the virtual experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not Hermitian (asymmetry {0:.3e})")]
    NotHermitian(f64),

    #[error("invalid density matrix: {0}")]
    InvalidState(String),

    #[error("unknown projector tag `{0}`")]
    UnknownProjector(String),

    #[error("singular matrix: {0}")]
    Singular(&'static str),

    #[error("exchange saturated at J_max = {j_max} MHz on pair {pair}")]
    Saturated { pair: &'static str, j_max: f64 },

    #[error("empty grid: {0}")]
    EmptyGrid(&'static str),

    #[error("T2* undetermined (extend grid): signal never crossed 1/e within {t_max} us")]
    Undetermined { t_max: f64 },

    #[error("underdetermined: {0}")]
    Underdetermined(String),

    #[error("fit did not converge: {0}")]
    FitFailed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
