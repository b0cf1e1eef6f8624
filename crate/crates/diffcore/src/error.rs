use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("domain error in {op}: {detail}")]
    Domain { op: &'static str, detail: String },

    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
}

impl DiffError {
    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        DiffError::Contract {
            op,
            detail: detail.into(),
        }
    }
}
