//! File formats, teleoperation server, experiment runner and command line
//! around [`joinery_core`].

pub mod checkpoint;
pub mod episode_io;
pub mod manifest;
pub mod report;
pub mod suite;
pub mod teleop;

use std::io;
use std::path::{Path, PathBuf};

use joinery_core::data::DataError;
use joinery_core::demo::DemoError;
use joinery_core::eval::EvalError;
use joinery_core::policy::PolicyError;
use joinery_core::sim::SimError;
use thiserror::Error;

pub use joinery_core as core;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("toml: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("{0}")]
    Format(String),
    #[error("data: {0}")]
    Data(#[from] DataError),
    #[error("demo: {0}")]
    Demo(#[from] DemoError),
    #[error("policy: {0}")]
    Policy(#[from] PolicyError),
    #[error("eval: {0}")]
    Eval(#[from] EvalError),
    #[error("sim: {0}")]
    Sim(#[from] SimError),
    #[error("websocket: {0}")]
    Ws(#[from] Box<tungstenite::Error>),
    #[error("{}: {source}", path.display())]
    At { path: PathBuf, source: Box<Error> },
}

impl Error {
    /// Attaches the file the error came from.
    pub fn context(self, path: &Path) -> Self {
        match self {
            Self::At { .. } => self,
            e => Self::At { path: path.to_path_buf(), source: Box::new(e) },
        }
    }
}

impl From<tungstenite::Error> for Error {
    fn from(e: tungstenite::Error) -> Self {
        Self::Ws(Box::new(e))
    }
}
