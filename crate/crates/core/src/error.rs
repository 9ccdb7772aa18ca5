use thiserror::Error;

use crate::dar::DarError;
use crate::gate::GateError;
use crate::geometry::GeometryError;
use crate::kalman::KalmanError;
use crate::les::LesError;
use crate::provider::ProviderError;
use crate::raster::{CodecError, RasterError};

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Kalman(#[from] KalmanError),
    #[error(transparent)]
    Les(#[from] LesError),
    #[error(transparent)]
    Dar(#[from] DarError),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 provider.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_)
            | Error::Gate(GateError::BadAlpha(_))
            | Error::Les(LesError::InvalidParams)
            | Error::Dar(DarError::InvalidParams) => 2,
            Error::Provider(_)
            | Error::Les(LesError::Probe { .. })
            | Error::Kalman(KalmanError::Provider(_)) => 4,
            _ => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
