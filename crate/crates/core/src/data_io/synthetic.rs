//! Seeded synthetic traffic drawn from a known weekly profile and event
//! pulses.

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::daily_model::{ComponentLabel, GaussianComponent, WeeklyProfileModel};
use crate::error::{Error, Result};
use crate::event_model::{eval_pulse, EventPulse};
use crate::regression::{fit_attendance_regression, fit_sigma_prior};
use crate::timeseries::{hours_between, midnight_of, EventCalendar, EventInfo, HourlyTrafficSeries, HOURS_PER_WEEK};

use super::document::{EventRecord, ModelDocument};

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticEvent {
    pub info: EventInfo,
    /// Centre is in hours from midnight of the event's day.
    pub pulse: EventPulse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub weekly: WeeklyProfileModel,
    pub start: NaiveDate,
    pub weeks: usize,
    pub events: Vec<SyntheticEvent>,
    /// Noise standard deviation as a fraction of the noiseless routine peak.
    pub noise_fraction: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub series: HourlyTrafficSeries,
    pub calendar: EventCalendar,
    pub truth: ModelDocument,
}

/// Samples routine traffic plus every event pulse at whole hours, adds
/// Gaussian noise and clamps at zero. Identical specs give identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    if !(spec.noise_fraction.is_finite() && spec.noise_fraction >= 0.0) {
        return Err(Error::Argument("noise fraction must be non-negative".into()));
    }
    if spec.weeks == 0 {
        return Err(Error::Argument("at least one week is required".into()));
    }
    let start = spec.start.and_hms_opt(0, 0, 0).expect("midnight");
    let n = spec.weeks * HOURS_PER_WEEK;
    let routine = spec.weekly.predict_series(start, n)?;
    let peak = routine.values().iter().cloned().fold(0.0, f64::max);

    let calendar = EventCalendar::new(spec.events.iter().map(|e| e.info.clone()).collect())?;
    let end = start + Duration::hours(n as i64);
    if let Some(e) = spec
        .events
        .iter()
        .find(|e| e.info.commencement < start || e.info.commencement >= end)
    {
        return Err(Error::Range(format!(
            "event at {} outside synthetic span",
            e.info.commencement
        )));
    }

    let mut values = routine.into_values();
    for e in &spec.events {
        let origin = midnight_of(e.info.commencement);
        for (i, v) in values.iter_mut().enumerate() {
            let t = start + Duration::hours(i as i64);
            *v += eval_pulse(&e.pulse, hours_between(origin, t));
        }
    }
    if spec.noise_fraction > 0.0 && peak > 0.0 {
        let noise = Normal::new(0.0, spec.noise_fraction * peak).map_err(|e| Error::Argument(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        for v in values.iter_mut() {
            *v = (*v + noise.sample(&mut rng)).max(0.0);
        }
    }

    let pairs: Vec<(u64, f64)> = spec
        .events
        .iter()
        .map(|e| (e.info.attendance, e.pulse.volume))
        .collect();
    let widths: Vec<f64> = spec.events.iter().map(|e| e.pulse.width).collect();
    let truth = ModelDocument {
        weekly: spec.weekly.clone(),
        events: spec
            .events
            .iter()
            .map(|e| EventRecord {
                commencement: e.info.commencement,
                attendance: e.info.attendance,
                pulse: e.pulse,
                sse: None,
                converged: None,
            })
            .collect(),
        regression: fit_attendance_regression(&pairs).ok(),
        sigma_prior: fit_sigma_prior(&widths).ok(),
        noise_std: Some(spec.noise_fraction * peak),
        diagnostics: None,
    };
    Ok(SyntheticData {
        series: HourlyTrafficSeries::new(start, values)?,
        calendar,
        truth,
    })
}

/// A weekly profile with a quiet night, a weekday afternoon peak near 1000
/// and later, flatter weekends.
pub fn reference_weekly_model() -> WeeklyProfileModel {
    use ComponentLabel::*;
    let spec = [
        (Mw, 600.0, 9.5, 2.2),
        (Aw, 900.0, 15.0, 2.5),
        (Ew, 700.0, 20.5, 2.0),
        (Msa, 450.0, 10.5, 2.5),
        (Asa, 700.0, 15.5, 2.8),
        (Esa, 650.0, 21.0, 2.2),
        (Msu, 350.0, 11.0, 2.5),
        (Asu, 600.0, 16.0, 3.0),
        (Esu, 550.0, 20.5, 2.3),
    ];
    WeeklyProfileModel::new(
        spec.iter()
            .map(|&(l, r, t, s)| GaussianComponent::new(l, r, t, s).expect("valid reference component"))
            .collect(),
    )
    .expect("nine components")
}

/// Attendance-to-volume line used to draw the reference event volumes.
const REF_SLOPE: f64 = 0.03323;
const REF_INTERCEPT: f64 = -258.85;

/// Three weeks from Monday 2013-12-02 with four events in the first two
/// weeks and two in the third.
///
/// Training-event volumes sit within a few percent of a linear attendance
/// relation; the two third-week events deviate from it (x1.35 and x0.75) and
/// have widths away from the training mean, so advance information alone
/// cannot predict them exactly.
pub fn reference_corpus(seed: u64, noise_fraction: f64) -> SyntheticSpec {
    let at = |d: u32, h: u32, m: u32| -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2013, 12, d)
            .unwrap()
            .and_hms_opt(h, m, 0)
            .unwrap()
    };
    // (day, kickoff h, kickoff m, attendance, volume factor, width)
    let rows = [
        (3, 20, 45, 25_000u64, 1.05, 1.263),
        (8, 16, 0, 32_761, 0.97, 1.176),
        (11, 21, 45, 70_000, 1.0, 1.011),
        (14, 20, 45, 18_000, 1.03, 1.155),
        (18, 20, 45, 75_000, 1.35, 1.45),
        (22, 15, 0, 60_000, 0.75, 0.9),
    ];
    let events = rows
        .iter()
        .map(|&(d, h, m, attendance, factor, width)| {
            let info = EventInfo::new(at(d, h, m), 2.0, "soccer", attendance).expect("valid event");
            let volume = (REF_SLOPE * attendance as f64 + REF_INTERCEPT) * factor;
            let pulse = EventPulse::new(volume, info.kickoff_hour() - 1.0, width).expect("valid pulse");
            SyntheticEvent { info, pulse }
        })
        .collect();
    SyntheticSpec {
        weekly: reference_weekly_model(),
        start: NaiveDate::from_ymd_opt(2013, 12, 2).unwrap(),
        weeks: 3,
        events,
        noise_fraction,
        seed,
    }
}
