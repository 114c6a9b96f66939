use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Error {
    /// Two masks (or a mask and an image) disagree on `(height, width)`.
    Shape {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// Run lengths that cannot describe a `height x width` mask.
    MalformedRle(String),
    /// A caller broke a precondition, e.g. mixed image ids in one suppression call.
    Contract(String),
    /// Invalid or unresolvable configuration.
    Config(String),
    /// Inputs referencing unknown or unpaired ids.
    Input(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { expected, found } => write!(
                f,
                "shape mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::MalformedRle(msg) => write!(f, "malformed RLE: {msg}"),
            Error::Contract(msg) => write!(f, "contract violation: {msg}"),
            Error::Config(msg) => write!(f, "config error: {msg}"),
            Error::Input(msg) => write!(f, "input error: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
