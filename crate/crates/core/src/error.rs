use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The strategy space (or a grid) would exceed its enumeration cap.
    #[error("enumeration needs {required} entries, cap is {cap}")]
    Capacity { required: String, cap: u64 },

    #[error("no strictly feasible point: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn arg<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Argument(msg.into()))
}
