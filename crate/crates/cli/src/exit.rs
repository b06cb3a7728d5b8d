use csa_core::CsaError;

pub const IO: u8 = 1;
pub const INPUT: u8 = 2;
pub const EMPTY_REGION: u8 = 3;
pub const PIXEL_NOT_IN_HOLE: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<CsaError> for CliError {
    fn from(err: CsaError) -> Self {
        let code = match err {
            CsaError::Io(_) => IO,
            CsaError::NoContext | CsaError::NoHole => EMPTY_REGION,
            CsaError::Shape(_)
            | CsaError::Range(_)
            | CsaError::Argument(_)
            | CsaError::Format { .. }
            | CsaError::Data(_) => INPUT,
        };
        Self::new(code, err.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(err: std::io::Error) -> Self {
        Self::new(IO, err.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
