use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Errors raised by the numeric core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A height outside `[0, cap]`.
    HeightOutOfRange { value: f64, cap: f64 },
    /// An obstruction slot index past the configured positions.
    SlotOutOfRange { slot: usize, positions: usize },
    /// A boundary-condition id past the enumeration.
    UnknownBoundaryCondition(u32),
    /// Invalid configuration or argument.
    InvalidArgument(String),
    /// Scene has no building surface to average over.
    DegenerateGeometry,
    /// The sky has no sun above the horizon.
    EmptySky,
    /// Not enough points to select from.
    InsufficientPoints { needed: usize, available: usize },
    /// Tensor shapes do not line up.
    ShapeMismatch(String),
    /// NaN or infinity produced by the network.
    NonFinite(&'static str),
    /// The training or test split is empty.
    EmptySplit(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::HeightOutOfRange { value, cap } => {
                write!(f, "height {value} outside [0, {cap}]")
            }
            Error::SlotOutOfRange { slot, positions } => {
                write!(
                    f,
                    "slot {slot} out of range (positions per side: {positions})"
                )
            }
            Error::UnknownBoundaryCondition(id) => write!(f, "unknown boundary condition id {id}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::DegenerateGeometry => write!(f, "geometry has no building surface"),
            Error::EmptySky => write!(f, "sky has no sun samples above the horizon"),
            Error::InsufficientPoints { needed, available } => {
                write!(f, "need {needed} points, only {available} available")
            }
            Error::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(what) => write!(f, "non-finite values in {what}"),
            Error::EmptySplit(which) => write!(f, "{which} split is empty"),
        }
    }
}

impl core::error::Error for Error {}
