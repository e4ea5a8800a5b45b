use std::io;

use thiserror::Error;

/// Errors produced anywhere in the reconstruction pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("OBJ parse error: {0}")]
    Obj(#[from] tobj::LoadError),

    /// Invalid configuration value or unparsable config file.
    #[error("config error: {0}")]
    Config(String),

    /// Malformed or inconsistent input data (scene files, buffer shapes).
    #[error("data error: {0}")]
    Data(String),

    /// The marching-cubes input never crosses the iso level.
    #[error("empty surface: no grid edge crosses iso level {0}")]
    EmptySurface(f64),

    #[error("silhouettes inconsistent: visual hull is empty")]
    EmptyHull,

    /// |Phi'(x0)| vanished in the Poisson normalization.
    #[error("degenerate normalization: |phi'(x0)| = {0:e}")]
    DegenerateNormalization(f64),

    #[error("non-finite gradient in parameter block `{0}`")]
    NonFiniteGradient(String),

    /// Other numeric failures (NaN losses, degenerate meshes).
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Io(_) | Error::Image(_) | Error::Json(_) | Error::Obj(_) | Error::Data(_) => 3,
            Error::EmptySurface(_)
            | Error::EmptyHull
            | Error::DegenerateNormalization(_)
            | Error::NonFiniteGradient(_)
            | Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn data_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Data(msg.into()))
}
