//! Multi-step forecasts from advance information and rolling single-step
//! forecasts that refit event pulses as observations arrive.

use chrono::{Duration, NaiveDateTime};

use crate::daily_model::WeeklyProfileModel;
use crate::error::{Error, Result};
use crate::event_model::{
    eval_pulse, fit_pulse_samples_with_prior, EventPulse, PulseFitConfig, PulseFitResult, PulsePrior, MAX_PULSE_WIDTH,
    MIN_PULSE_WIDTH,
};
use crate::regression::{estimate_initial_pulse, AttendanceRegression, SigmaPrior};
use crate::timeseries::{hours_between, midnight_of, EventCalendar, EventInfo, HourlyTrafficSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMode {
    MultiStep,
    SingleStep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRequest {
    pub start: NaiveDateTime,
    pub horizon: usize,
    pub events: EventCalendar,
    pub mode: ForecastMode,
}

impl ForecastRequest {
    pub fn new(start: NaiveDateTime, horizon: usize, events: EventCalendar, mode: ForecastMode) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::Argument("forecast horizon must be at least one hour".into()));
        }
        Ok(Self {
            start,
            horizon,
            events,
            mode,
        })
    }

    fn time_at(&self, i: usize) -> NaiveDateTime {
        self.start + Duration::hours(i as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorConfig {
    /// Pulse centre relative to kickoff, in hours.
    pub kickoff_offset: f64,
    /// Half-width of the window around each pulse centre in which the pulse
    /// contributes and is refitted.
    pub window: f64,
    /// Relative perturbation of volume and width for the extra initial
    /// candidates.
    pub candidate_spread: f64,
    /// Residual samples required before single-step refits begin.
    pub min_refit_samples: usize,
    /// Scales the pull of single-step refits towards the advance-information
    /// pulse; 0 gives plain least squares.
    pub prior_strength: f64,
    pub pulse_fit: PulseFitConfig,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self {
            kickoff_offset: -1.0,
            window: 6.0,
            candidate_spread: 0.25,
            min_refit_samples: 3,
            prior_strength: 3.0,
            pulse_fit: PulseFitConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub time: NaiveDateTime,
    pub observed: Option<f64>,
    pub predicted: f64,
    pub daily: f64,
    pub pulse: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Forecast {
    pub rows: Vec<ForecastRow>,
}

impl Forecast {
    pub fn predicted(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.predicted).collect()
    }

    /// Observed values, if every row has one.
    pub fn observed(&self) -> Option<Vec<f64>> {
        self.rows.iter().map(|r| r.observed).collect()
    }

    pub fn predicted_series(&self) -> Result<HourlyTrafficSeries> {
        let start = self
            .rows
            .first()
            .ok_or_else(|| Error::Argument("empty forecast".into()))?
            .time;
        HourlyTrafficSeries::new(start, self.predicted())
    }
}

/// An event's pulse placed on the absolute time axis.
struct ScheduledPulse {
    origin: NaiveDateTime,
    center: f64,
}

impl ScheduledPulse {
    fn new(event: &EventInfo, center: f64) -> Self {
        Self {
            origin: midnight_of(event.commencement),
            center,
        }
    }

    /// Hours since the event day's midnight, if `t` lies in the window.
    fn offset(&self, t: NaiveDateTime, window: f64) -> Option<f64> {
        let h = hours_between(self.origin, t);
        ((h - self.center).abs() <= window).then_some(h)
    }
}

/// Forecast built from the weekly profile and regression-estimated pulses
/// only; no observations are consumed.
pub fn predict_multistep(
    daily: &WeeklyProfileModel,
    request: &ForecastRequest,
    reg: &AttendanceRegression,
    prior: &SigmaPrior,
    config: &PredictorConfig,
) -> Result<Forecast> {
    if request.mode != ForecastMode::MultiStep {
        return Err(Error::Argument("predict_multistep needs a multi-step request".into()));
    }
    let pulses: Vec<(ScheduledPulse, EventPulse)> = request
        .events
        .iter()
        .map(|e| {
            let p = estimate_initial_pulse(e, reg, prior, config.kickoff_offset);
            (ScheduledPulse::new(e, p.center), p)
        })
        .collect();

    let rows = (0..request.horizon)
        .map(|i| {
            let time = request.time_at(i);
            let d = daily.eval_at(time);
            let pulse: f64 = pulses
                .iter()
                .filter_map(|(s, p)| s.offset(time, config.window).map(|h| eval_pulse(p, h)))
                .sum();
            ForecastRow {
                time,
                observed: None,
                predicted: d + pulse,
                daily: d,
                pulse,
            }
        })
        .collect();
    Ok(Forecast { rows })
}

/// Refits the pulse from every candidate start and keeps the lowest
/// in-sample sse. Returns the winning candidate's index with its fit.
pub fn best_candidate_fit(
    samples: &[(f64, f64)],
    center: f64,
    candidates: &[EventPulse],
    prior: Option<&PulsePrior>,
    config: &PulseFitConfig,
) -> Result<(usize, PulseFitResult)> {
    let mut best: Option<(usize, PulseFitResult)> = None;
    for (i, c) in candidates.iter().enumerate() {
        let fit = fit_pulse_samples_with_prior(samples, center, c, prior, config)?;
        if best.as_ref().is_none_or(|(_, b)| fit.sse < b.sse) {
            best = Some((i, fit));
        }
    }
    best.ok_or_else(|| Error::Argument("no initial candidates".into()))
}

/// Rolling refit state for one event.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleStepState {
    observed: Vec<(f64, f64)>,
    initial: EventPulse,
    current: EventPulse,
    candidates: Vec<EventPulse>,
    prior: Option<PulsePrior>,
}

impl SingleStepState {
    /// State seeded with `initial` and four candidates at
    /// `(1 ± spread) * volume, (1 ± spread) * width`.
    pub fn new(initial: EventPulse, spread: f64) -> Self {
        let mut candidates = vec![initial];
        for sv in [1.0 + spread, 1.0 - spread] {
            for sw in [1.0 + spread, 1.0 - spread] {
                candidates.push(EventPulse {
                    volume: (initial.volume * sv).max(0.0),
                    center: initial.center,
                    width: (initial.width * sw).clamp(MIN_PULSE_WIDTH, MAX_PULSE_WIDTH),
                });
            }
        }
        Self::with_candidates(initial, candidates)
    }

    pub fn with_candidates(initial: EventPulse, candidates: Vec<EventPulse>) -> Self {
        Self {
            observed: Vec::new(),
            initial,
            current: initial,
            candidates,
            prior: None,
        }
    }

    /// Adds prior terms to every refit.
    pub fn with_prior(mut self, prior: PulsePrior) -> Self {
        self.prior = Some(prior);
        self
    }

    pub fn observed_residuals(&self) -> &[(f64, f64)] {
        &self.observed
    }

    pub fn current_pulse(&self) -> &EventPulse {
        &self.current
    }

    pub fn initial_candidates(&self) -> &[EventPulse] {
        &self.candidates
    }

    /// Pulse contribution predicted at `hour`.
    pub fn pulse_at(&self, hour: f64) -> f64 {
        eval_pulse(&self.current, hour)
    }

    /// Records the residual at `hour` and refits once enough samples exist.
    pub fn observe(
        &mut self,
        hour: f64,
        observed_total: f64,
        daily_value: f64,
        config: &PredictorConfig,
    ) -> Result<()> {
        if let Some(&(last, _)) = self.observed.last() {
            if hour <= last {
                return Err(Error::Ordering(format!("hour {hour} does not follow {last}")));
            }
        }
        self.observed.push((hour, observed_total - daily_value));
        if self.observed.len() >= config.min_refit_samples.max(3) {
            let (_, fit) = best_candidate_fit(
                &self.observed,
                self.initial.center,
                &self.candidates,
                self.prior.as_ref(),
                &config.pulse_fit,
            )?;
            self.current = fit.pulse;
        }
        Ok(())
    }

    /// One rolling step: absorb the observation at `hour`, then predict the
    /// total at `next_hour` given the routine value there.
    #[allow(clippy::too_many_arguments)]
    pub fn advance(
        &mut self,
        hour: f64,
        observed_total: f64,
        daily_value: f64,
        next_hour: f64,
        next_daily: f64,
        config: &PredictorConfig,
    ) -> Result<f64> {
        if next_hour <= hour {
            return Err(Error::Ordering(format!("next hour {next_hour} does not follow {hour}")));
        }
        self.observe(hour, observed_total, daily_value, config)?;
        Ok(next_daily + self.pulse_at(next_hour))
    }
}

/// Rolling one-hour-ahead forecast over the request horizon.
///
/// Outside every event window the forecast is the weekly profile alone.
/// Inside a window, the pulse for hour `i` is fitted to the residuals of that
/// window's hours before `i`. `noise_std` is the routine noise level; refits
/// are pulled towards the advance-information pulse in proportion to it.
#[allow(clippy::too_many_arguments)]
pub fn predict_singlestep(
    daily: &WeeklyProfileModel,
    request: &ForecastRequest,
    observed: &HourlyTrafficSeries,
    reg: &AttendanceRegression,
    prior: &SigmaPrior,
    noise_std: f64,
    config: &PredictorConfig,
) -> Result<Forecast> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::Argument(format!("noise level {noise_std} must be non-negative")));
    }
    if request.mode != ForecastMode::SingleStep {
        return Err(Error::Argument("predict_singlestep needs a single-step request".into()));
    }
    let first = observed
        .index_of(request.start)
        .ok_or_else(|| Error::Range(format!("observations do not cover {}", request.start)))?;
    if first + request.horizon > observed.len() {
        return Err(Error::Range("observations end before the forecast horizon".into()));
    }

    let mut states: Vec<(ScheduledPulse, SingleStepState)> = request
        .events
        .iter()
        .map(|e| {
            let p = estimate_initial_pulse(e, reg, prior, config.kickoff_offset);
            let mut state = SingleStepState::new(p, config.candidate_spread);
            if config.prior_strength > 0.0 && noise_std > 0.0 {
                let mut pr = PulsePrior::around(&p, config.candidate_spread, noise_std);
                pr.volume_weight *= config.prior_strength;
                pr.width_weight *= config.prior_strength;
                state = state.with_prior(pr);
            }
            (ScheduledPulse::new(e, p.center), state)
        })
        .collect();

    let mut rows = Vec::with_capacity(request.horizon);
    for i in 0..request.horizon {
        let time = request.time_at(i);
        let d = daily.eval_at(time);
        let y = observed.values()[first + i];
        let mut pulse = 0.0;
        for (sched, state) in &states {
            if let Some(h) = sched.offset(time, config.window) {
                pulse += state.pulse_at(h);
            }
        }
        rows.push(ForecastRow {
            time,
            observed: Some(y),
            predicted: d + pulse,
            daily: d,
            pulse,
        });
        for (sched, state) in &mut states {
            if let Some(h) = sched.offset(time, config.window) {
                state.observe(h, y, d, config)?;
            }
        }
    }
    Ok(Forecast { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pulse() -> EventPulse {
        EventPulse::new(800.0, 15.0, 1.25).unwrap()
    }

    #[test]
    fn empty_history_uses_initial_pulse() {
        let state = SingleStepState::new(pulse(), 0.25);
        assert_eq!(state.pulse_at(15.0), eval_pulse(&pulse(), 15.0));
        assert_eq!(state.initial_candidates().len(), 5);
    }

    #[test]
    fn candidates_are_clamped() {
        let p = EventPulse::new(10.0, 3.0, 5.5).unwrap();
        let s = SingleStepState::new(p, 0.25);
        assert!(s.initial_candidates().iter().all(|c| c.width <= MAX_PULSE_WIDTH));
    }

    #[test]
    fn advance_rejects_out_of_order_hours() {
        let cfg = PredictorConfig::default();
        let mut s = SingleStepState::new(pulse(), 0.25);
        s.advance(10.0, 5.0, 1.0, 11.0, 1.0, &cfg).unwrap();
        assert!(matches!(
            s.advance(10.0, 5.0, 1.0, 11.0, 1.0, &cfg),
            Err(Error::Ordering(_))
        ));
        assert!(matches!(
            s.advance(12.0, 5.0, 1.0, 12.0, 1.0, &cfg),
            Err(Error::Ordering(_))
        ));
    }

    #[test]
    fn refit_tracks_exact_samples() {
        let cfg = PredictorConfig::default();
        let truth = EventPulse::new(1000.0, 15.0, 1.5).unwrap();
        let mut s = SingleStepState::new(pulse(), 0.25);
        let mut prediction = 0.0;
        for h in 9..15 {
            let h = h as f64;
            prediction = s
                .advance(h, 100.0 + eval_pulse(&truth, h), 100.0, h + 1.0, 100.0, &cfg)
                .unwrap();
        }
        let expected = 100.0 + eval_pulse(&truth, 15.0);
        assert!((prediction - expected).abs() < expected * 1e-3);
    }
}
