//! End-to-end fit and predict orchestration with stage-tagged errors.

use std::fmt;

use chrono::Duration;

use crate::daily_model::fit_weekly;
use crate::data_io::{EventRecord, FitDiagnostics, ModelDocument};
use crate::error::Error;
use crate::event_model::{fit_pulse, EventPulse, PulseFitResult};
use crate::optim::FitConfig;
use crate::predictor::{
    predict_multistep, predict_singlestep, Forecast, ForecastMode, ForecastRequest, PredictorConfig,
};
use crate::regression::{fit_attendance_regression, fit_sigma_prior, AttendanceRegression, SigmaPrior};
use crate::timeseries::{extract_residual, midnight_of, split_by_events, EventCalendar, HourlyTrafficSeries};

/// Pipeline stage an error originated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Calendar,
    Data,
    Split,
    FitWeekly,
    FitPulse,
    Regression,
    Model,
    Predict,
    Baseline,
    Evaluate,
    Output,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Calendar => "calendar",
            Stage::Data => "data",
            Stage::Split => "split",
            Stage::FitWeekly => "fit_weekly",
            Stage::FitPulse => "fit_pulse",
            Stage::Regression => "regression",
            Stage::Model => "model",
            Stage::Predict => "predict",
            Stage::Baseline => "baseline",
            Stage::Evaluate => "evaluate",
            Stage::Output => "output",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage}] {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

pub trait AtStage<T> {
    fn at(self, stage: Stage) -> Result<T, StageError>;
}

impl<T> AtStage<T> for crate::Result<T> {
    fn at(self, stage: Stage) -> Result<T, StageError> {
        self.map_err(|source| StageError { stage, source })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PipelineConfig {
    pub weekly_fit: FitConfig,
    pub predictor: PredictorConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOutcome {
    pub document: ModelDocument,
    pub warnings: Vec<String>,
}

/// Widths tried as starting points for each event's pulse fit.
const INITIAL_WIDTHS: [f64; 3] = [0.75, 1.5, 3.0];

/// Splits the series by the calendar, fits the weekly profile to the
/// non-event days, fits a pulse to each event's residual and regresses pulse
/// volume on attendance.
pub fn fit_model(
    series: &HourlyTrafficSeries,
    calendar: &EventCalendar,
    config: &PipelineConfig,
) -> Result<FitOutcome, StageError> {
    let mut warnings = Vec::new();
    let split = split_by_events(series, calendar).at(Stage::Split)?;
    let weekly = fit_weekly(&split.non_event_days, &config.weekly_fit).at(Stage::FitWeekly)?;
    if !weekly.converged {
        warnings.push(format!(
            "weekly fit stopped after {} iterations without converging",
            weekly.iterations
        ));
    }

    let daily = weekly
        .model
        .predict_series(series.start(), series.len())
        .at(Stage::FitWeekly)?;
    let residual = extract_residual(series, &daily).at(Stage::FitPulse)?;
    let pcfg = &config.predictor;

    let mut events = Vec::with_capacity(calendar.len());
    for e in calendar.iter() {
        let day_start = midnight_of(e.commencement);
        let from = residual.index_of(day_start).unwrap_or(0);
        let until = residual
            .index_of(day_start + Duration::hours(48))
            .unwrap_or(residual.len());
        let window = residual.slice(from, until - from).at(Stage::FitPulse)?;
        let center = e.kickoff_hour() + pcfg.kickoff_offset;
        let fit = fit_event_pulse(&window, center, config).at(Stage::FitPulse)?;
        if !fit.converged {
            warnings.push(format!("pulse fit for {} did not converge", e.commencement));
        }
        events.push(EventRecord {
            commencement: e.commencement,
            attendance: e.attendance,
            pulse: fit.pulse,
            sse: Some(fit.sse),
            converged: Some(fit.converged),
        });
    }

    let pairs: Vec<(u64, f64)> = events.iter().map(|e| (e.attendance, e.pulse.volume)).collect();
    let regression = match fit_attendance_regression(&pairs) {
        Ok(r) => Some(r),
        Err(err) => {
            warnings.push(format!("attendance regression skipped: {err}"));
            None
        }
    };
    let widths: Vec<f64> = events.iter().map(|e| e.pulse.width).collect();
    let sigma_prior = fit_sigma_prior(&widths).ok();
    let (sse, n) = split.non_event_days.iter().fold((0.0, 0usize), |(sse, n), day| {
        let d = weekly
            .model
            .predict_series(day.start(), day.len())
            .expect("non-empty day");
        let s: f64 = day
            .values()
            .iter()
            .zip(d.values())
            .map(|(y, m)| (y - m) * (y - m))
            .sum();
        (sse + s, n + day.len())
    });

    Ok(FitOutcome {
        document: ModelDocument {
            weekly: weekly.model,
            events,
            regression,
            sigma_prior,
            noise_std: Some((sse / n as f64).sqrt()),
            diagnostics: Some(FitDiagnostics {
                weekly_objective: weekly.objective,
                weekly_converged: weekly.converged,
                weekly_iterations: weekly.iterations,
                kickoff_offset: pcfg.kickoff_offset,
            }),
        },
        warnings,
    })
}

fn fit_event_pulse(
    residual: &HourlyTrafficSeries,
    center: f64,
    config: &PipelineConfig,
) -> crate::Result<PulseFitResult> {
    let pcfg = &config.predictor.pulse_fit;
    let origin = midnight_of(residual.start());
    let volume: f64 = residual
        .iter()
        .filter(|(t, _)| (crate::timeseries::hours_between(origin, *t) - center).abs() <= pcfg.window)
        .map(|(_, v)| v.max(0.0))
        .sum();
    let mut best: Option<PulseFitResult> = None;
    for width in INITIAL_WIDTHS {
        let init = EventPulse::new(volume, center, width)?;
        let fit = fit_pulse(residual, center, &init, pcfg)?;
        if best.as_ref().is_none_or(|b| fit.sse < b.sse) {
            best = Some(fit);
        }
    }
    Ok(best.expect("non-empty width grid"))
}

fn event_parameters(
    doc: &ModelDocument,
    request: &ForecastRequest,
) -> Result<(AttendanceRegression, SigmaPrior), StageError> {
    match (&doc.regression, &doc.sigma_prior) {
        (Some(r), Some(p)) => Ok((*r, *p)),
        _ if request.events.is_empty() => Ok((
            AttendanceRegression {
                slope: 0.0,
                intercept: 0.0,
                pearson_r: 0.0,
                n_samples: 0,
            },
            SigmaPrior {
                mean_sigma: 1.0,
                n_samples: 0,
            },
        )),
        _ => Err(StageError {
            stage: Stage::Model,
            source: Error::InsufficientData("model has no attendance regression; cannot forecast events".into()),
        }),
    }
}

/// Forecast in the request's mode. Single-step mode needs `observed`
/// covering the horizon.
pub fn predict(
    doc: &ModelDocument,
    request: &ForecastRequest,
    observed: Option<&HourlyTrafficSeries>,
    config: &PredictorConfig,
) -> Result<Forecast, StageError> {
    let (reg, prior) = event_parameters(doc, request)?;
    match request.mode {
        ForecastMode::MultiStep => {
            let mut f = predict_multistep(&doc.weekly, request, &reg, &prior, config).at(Stage::Predict)?;
            if let Some(obs) = observed {
                for row in &mut f.rows {
                    row.observed = obs.index_of(row.time).map(|i| obs.values()[i]);
                }
            }
            Ok(f)
        }
        ForecastMode::SingleStep => {
            let obs = observed.ok_or_else(|| StageError {
                stage: Stage::Data,
                source: Error::Argument("single-step prediction needs observed traffic".into()),
            })?;
            predict_singlestep(
                &doc.weekly,
                request,
                obs,
                &reg,
                &prior,
                doc.noise_std.unwrap_or(0.0),
                config,
            )
            .at(Stage::Predict)
        }
    }
}
