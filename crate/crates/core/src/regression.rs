//! Mapping advance event information to initial pulse parameters.

use crate::error::{Error, Result};
use crate::event_model::EventPulse;
use crate::timeseries::EventInfo;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson correlation coefficient.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Argument(format!("length mismatch: {} vs {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Argument("pearson needs at least two points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateVariance("pearson input is constant".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Linear map from attendance to pulse volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttendanceRegression {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub n_samples: usize,
}

impl AttendanceRegression {
    /// Raw line value, possibly negative.
    pub fn predict(&self, attendance: u64) -> f64 {
        self.slope * attendance as f64 + self.intercept
    }
}

/// Ordinary least squares of volume on attendance.
///
/// When every volume is identical the correlation is undefined; `pearson_r`
/// is reported as 0 in that case.
pub fn fit_attendance_regression(pairs: &[(u64, f64)]) -> Result<AttendanceRegression> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "regression needs at least 2 events, got {}",
            pairs.len()
        )));
    }
    let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (mx, my) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData("all attendances are equal".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let pearson_r = match pearson(&x, &y) {
        Ok(r) => r,
        Err(Error::DegenerateVariance(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok(AttendanceRegression {
        slope,
        intercept: my - slope * mx,
        pearson_r,
        n_samples: pairs.len(),
    })
}

/// Event-independent pulse width, the mean of fitted widths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaPrior {
    pub mean_sigma: f64,
    pub n_samples: usize,
}

pub fn fit_sigma_prior(sigmas: &[f64]) -> Result<SigmaPrior> {
    if sigmas.is_empty() {
        return Err(Error::InsufficientData("no fitted widths to average".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Argument(format!("width {s} must be positive")));
    }
    Ok(SigmaPrior {
        mean_sigma: mean(sigmas),
        n_samples: sigmas.len(),
    })
}

/// Pulse predicted from advance information alone.
///
/// The centre is the kickoff hour plus `kickoff_offset`; negative regression
/// output is clamped to a zero-volume pulse.
pub fn estimate_initial_pulse(
    event: &EventInfo,
    reg: &AttendanceRegression,
    prior: &SigmaPrior,
    kickoff_offset: f64,
) -> EventPulse {
    EventPulse {
        volume: reg.predict(event.attendance).max(0.0),
        center: event.kickoff_hour() + kickoff_offset,
        width: prior.mean_sigma,
    }
}
