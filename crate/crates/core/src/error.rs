use alloc::string::String;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Shapes or extents that do not fit the operation.
    #[error("dimension error: {0}")]
    Dimension(String),
    /// A value outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A violated precondition of the API.
    #[error("contract error: {0}")]
    Contract(String),
    /// A network specification that fails shape propagation.
    #[error("shape error at layer {layer}: {message}")]
    Shape { layer: usize, message: String },
    /// Malformed text input.
    #[error("parse error in field `{field}`: {message}")]
    Parse { field: String, message: String },
    /// NaN or infinity in a named quantity.
    #[error("non-finite value in {0}")]
    NonFinite(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
