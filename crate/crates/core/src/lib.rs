//! Event-aware cellular traffic forecasting.
//!
//! Hourly traffic is decomposed into a routine weekly profile built from nine
//! Gaussian components and additive Gaussian pulses for scheduled events.
//! Pulse parameters are estimated in advance from attendance, which allows
//! week-ahead forecasts, and refitted hour by hour for one-step-ahead
//! forecasts. ARMA/ARIMA and seasonal-naive baselines and the usual accuracy
//! metrics are included for comparison.

pub mod baselines;
pub mod daily_model;
pub mod data_io;
pub mod error;
pub mod event_model;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod predictor;
pub mod regression;
pub mod timeseries;

pub use error::{Error, Result};
