//! Geomagnetic dead-reckoning navigation with a temporal-attention LSTM
//! heading predictor and anomaly-weighted heading calibration.

pub mod angle;
pub mod calib;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod field;
pub mod nav;
pub mod talstm;

pub use error::{Error, Result};
