use std::fmt;

/// A line of the singularity set met by an orbit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SingularLine {
    /// `x = 0` before the vertical shear.
    XZero,
    /// `x = 1/2` before the vertical shear.
    XHalf,
    /// `y = 0` before the horizontal shear.
    YZero,
    /// `y = 1/2` before the horizontal shear.
    YHalf,
}

impl fmt::Display for SingularLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SingularLine::XZero => "x = 0",
            SingularLine::XHalf => "x = 1/2",
            SingularLine::YZero => "y = 0",
            SingularLine::YHalf => "y = 1/2",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("orbit meets the singularity line {line} at step {step}")]
    Singular { step: usize, line: SingularLine },
    #[error("resource limit exceeded: {0}")]
    Resource(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
