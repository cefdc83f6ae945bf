use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input vector had the wrong length.
    #[error("{what}: expected {expected} elements, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("key reconstruction failed in block {block}")]
    Reconstruction { block: usize },
    #[error("malformed data: {0}")]
    Malformed(String),
    #[error("no unused CRP left")]
    Exhausted,
    #[error("counter desynchronized: device reports {device}")]
    Desync { device: u64 },
    #[error("device {0} is already enrolled")]
    AlreadyEnrolled(u64),
    #[error("unknown device {0}")]
    UnknownDevice(u64),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Wire(#[from] crate::wire::WireError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(what: &'static str, expected: usize, got: usize) -> Self {
        Error::Shape {
            what,
            expected,
            got,
        }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Self::shape(what, expected, got))
        }
    }
}
