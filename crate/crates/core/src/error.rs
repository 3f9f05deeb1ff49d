use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("column `{0}` is constant and cannot be standardized")]
    ConstantColumn(String),
    #[error("covariance matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("column `{0}` has no observed cells left to impute from")]
    FullyMasked(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),
    #[error("loss term {index}")]
    Term { index: usize, source: Box<Error> },
    #[error("training diverged at epoch {epoch}, batch {batch}: {term} is not finite")]
    Diverged {
        epoch: usize,
        batch: usize,
        term: String,
    },
}

impl Error {
    pub(crate) fn in_term(self, index: usize) -> Self {
        Error::Term {
            index,
            source: Box::new(self),
        }
    }
}

macro_rules! bail {
    ($variant:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$variant(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
