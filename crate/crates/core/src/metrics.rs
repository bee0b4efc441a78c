//! Forecast accuracy metrics and elapsed-time measurement.

use std::time::Instant;

use crate::error::{Error, Result};

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::Argument(format!(
            "metric inputs must be non-empty and equal length ({} vs {})",
            actual.len(),
            predicted.len()
        )));
    }
    Ok(())
}

fn sse(actual: &[f64], predicted: &[f64]) -> f64 {
    actual.iter().zip(predicted).map(|(a, p)| (a - p) * (a - p)).sum()
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(sse(actual, predicted) / actual.len() as f64)
}

pub fn rmse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    Ok(mse(actual, predicted)?.sqrt())
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(actual.iter().zip(predicted).map(|(a, p)| (a - p).abs()).sum::<f64>() / actual.len() as f64)
}

/// Coefficient of determination; errors on constant `actual`.
pub fn r2(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    let mean = actual.iter().sum::<f64>() / actual.len() as f64;
    let sst: f64 = actual.iter().map(|a| (a - mean) * (a - mean)).sum();
    if sst == 0.0 {
        return Err(Error::DegenerateVariance(
            "r2 undefined for constant actual values".into(),
        ));
    }
    Ok(1.0 - sse(actual, predicted) / sst)
}

/// Wall-clock and (where available) process CPU time of one task.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Timing {
    pub wall_ms: f64,
    pub cpu_ms: Option<f64>,
}

#[cfg(unix)]
fn process_cpu_ms() -> Option<f64> {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid, writable timespec for the duration of the call.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_PROCESS_CPUTIME_ID, &mut ts) };
    (rc == 0).then(|| ts.tv_sec as f64 * 1e3 + ts.tv_nsec as f64 / 1e6)
}

#[cfg(not(unix))]
fn process_cpu_ms() -> Option<f64> {
    None
}

/// Runs `task` and measures it. A failing task's timing is discarded.
pub fn time_run<T, E>(task: impl FnOnce() -> std::result::Result<T, E>) -> std::result::Result<(T, Timing), E> {
    let cpu0 = process_cpu_ms();
    let t0 = Instant::now();
    let value = task()?;
    let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
    let cpu_ms = match (cpu0, process_cpu_ms()) {
        (Some(a), Some(b)) => Some(b - a),
        _ => None,
    };
    Ok((value, Timing { wall_ms, cpu_ms }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationReport {
    pub n: usize,
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    pub elapsed_train_ms: f64,
    pub elapsed_predict_ms: f64,
}

impl EvaluationReport {
    pub const CSV_HEADER: &'static str = "n,mse,rmse,mae,r2,train_ms,predict_ms";

    pub fn compute(actual: &[f64], predicted: &[f64], elapsed_train_ms: f64, elapsed_predict_ms: f64) -> Result<Self> {
        let mse = mse(actual, predicted)?;
        Ok(Self {
            n: actual.len(),
            mse,
            rmse: mse.sqrt(),
            mae: mae(actual, predicted)?,
            r2: r2(actual, predicted)?,
            elapsed_train_ms,
            elapsed_predict_ms,
        })
    }

    /// Fields in [`Self::CSV_HEADER`] order, without a trailing newline.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.n, self.mse, self.rmse, self.mae, self.r2, self.elapsed_train_ms, self.elapsed_predict_ms
        )
    }
}
