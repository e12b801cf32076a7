use alloc::string::String;
use core::fmt;

/// Errors raised by the engine's operations.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A tensor dimension does not compose, naming the offending layer.
    Shape {
        layer: usize,
        expected: usize,
        got: usize,
    },
    /// An input value is outside its admissible range (labels, layer indices).
    Domain(String),
    /// A non-finite value appeared; `layer` identifies where, when known.
    Numeric { layer: Option<usize>, what: String },
    /// An invalid configuration was supplied.
    Config(String),
}

pub type Result<T> = core::result::Result<T, Error>;

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape {
                layer,
                expected,
                got,
            } => write!(
                f,
                "shape mismatch at layer {layer}: expected width {expected}, got {got}"
            ),
            Error::Domain(msg) => write!(f, "domain error: {msg}"),
            Error::Numeric {
                layer: Some(l),
                what,
            } => {
                write!(f, "non-finite value at layer {l}: {what}")
            }
            Error::Numeric { layer: None, what } => write!(f, "non-finite value: {what}"),
            Error::Config(msg) => write!(f, "invalid configuration: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
