pub mod calibration;
pub mod cli;
pub mod error;
pub mod estimators;
pub mod io;
pub mod numkit;
pub mod simulation;
pub mod variance;

pub use error::{Error, Result};
