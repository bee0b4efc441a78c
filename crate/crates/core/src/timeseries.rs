//! Hourly series, calendar indexing, event calendars and the event/non-event
//! day split.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

pub const HOURS_PER_DAY: usize = 24;
pub const HOURS_PER_WEEK: usize = 168;

/// Signed number of hours from `from` to `to`.
pub fn hours_between(from: NaiveDateTime, to: NaiveDateTime) -> f64 {
    (to - from).num_milliseconds() as f64 / 3_600_000.0
}

/// Midnight at the start of the day containing `t`.
pub fn midnight_of(t: NaiveDateTime) -> NaiveDateTime {
    t.date().and_hms_opt(0, 0, 0).expect("midnight is a valid time")
}

fn is_hour_aligned(t: NaiveDateTime) -> bool {
    t.minute() == 0 && t.second() == 0 && t.nanosecond() == 0
}

/// Contiguous hourly traffic values in the series' local wall-clock time.
///
/// Values must be finite. They are normally non-negative, but residual series
/// (total minus daily prediction) legitimately carry negative samples.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyTrafficSeries {
    start: NaiveDateTime,
    values: Vec<f64>,
}

impl HourlyTrafficSeries {
    pub fn new(start: NaiveDateTime, values: Vec<f64>) -> Result<Self> {
        if !is_hour_aligned(start) {
            return Err(Error::Format(format!("series start {start} is not hour-aligned")));
        }
        if values.is_empty() {
            return Err(Error::Argument("series must contain at least one sample".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Argument(format!("sample {i} is not finite")));
        }
        Ok(Self { start, values })
    }

    pub fn start(&self) -> NaiveDateTime {
        self.start
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Exclusive end of the covered span.
    pub fn end(&self) -> NaiveDateTime {
        self.time_at(self.values.len())
    }

    pub fn time_at(&self, index: usize) -> NaiveDateTime {
        self.start + Duration::hours(index as i64)
    }

    /// Index of the sample starting exactly at `t`, if covered.
    pub fn index_of(&self, t: NaiveDateTime) -> Option<usize> {
        if t < self.start || !is_hour_aligned(t) {
            return None;
        }
        let idx = (t - self.start).num_hours() as usize;
        (idx < self.values.len()).then_some(idx)
    }

    pub fn contains(&self, t: NaiveDateTime) -> bool {
        t >= self.start && t < self.end()
    }

    /// Sub-series `[from, from + len)`.
    pub fn slice(&self, from: usize, len: usize) -> Result<Self> {
        if len == 0 || from + len > self.values.len() {
            return Err(Error::Range(format!(
                "slice [{from}, {}) outside series of length {}",
                from + len,
                self.values.len()
            )));
        }
        Ok(Self {
            start: self.time_at(from),
            values: self.values[from..from + len].to_vec(),
        })
    }

    /// Sub-series covering `[from, to)`, both hour-aligned.
    pub fn window(&self, from: NaiveDateTime, to: NaiveDateTime) -> Result<Self> {
        let i = self
            .index_of(from)
            .ok_or_else(|| Error::Range(format!("{from} not covered by series")))?;
        let n = hours_between(from, to);
        if n < 1.0 || n.fract() != 0.0 {
            return Err(Error::Range(format!("empty or misaligned window {from}..{to}")));
        }
        self.slice(i, n as usize)
    }

    /// True when the series starts at midnight and spans whole days.
    pub fn is_day_aligned(&self) -> bool {
        self.start.hour() == 0 && self.values.len().is_multiple_of(HOURS_PER_DAY)
    }

    /// The longest midnight-to-midnight sub-series.
    pub fn whole_days(&self) -> Result<Self> {
        let skip = (HOURS_PER_DAY - self.start.hour() as usize) % HOURS_PER_DAY;
        let days = self.values.len().saturating_sub(skip) / HOURS_PER_DAY;
        if days == 0 {
            return Err(Error::InsufficientData("series covers no complete day".into()));
        }
        self.slice(skip, days * HOURS_PER_DAY)
    }

    /// Sample times paired with values.
    pub fn iter(&self) -> impl Iterator<Item = (NaiveDateTime, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| (self.time_at(i), v))
    }
}

/// Day-of-week and hour-of-day coordinates of a sample.
///
/// `day` is 1 for Monday through 7 for Sunday. `hour` lies in `[0, 24)` for
/// observed samples; model evaluation accepts any real hour, so 25.0 on day 3
/// denotes 01:00 on day 4.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalendarIndex {
    pub day: u8,
    pub hour: f64,
}

impl CalendarIndex {
    pub fn new(day: u8, hour: f64) -> Result<Self> {
        if !(1..=7).contains(&day) {
            return Err(Error::Argument(format!("day index {day} outside 1..=7")));
        }
        Ok(Self { day, hour })
    }

    pub fn of(t: NaiveDateTime) -> Self {
        let day = t.weekday().number_from_monday() as u8;
        let hour = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
        Self { day, hour }
    }

    /// Weekday index 1..=5 (Monday..Friday), `None` at weekends.
    pub fn weekday_index(&self) -> Option<u8> {
        (self.day <= 5).then_some(self.day)
    }
}

/// Advance information about one scheduled event.
#[derive(Debug, Clone, PartialEq)]
pub struct EventInfo {
    pub commencement: NaiveDateTime,
    /// Duration in hours.
    pub duration: f64,
    pub kind: String,
    pub attendance: u64,
}

impl EventInfo {
    pub fn new(commencement: NaiveDateTime, duration: f64, kind: impl Into<String>, attendance: u64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::Argument(format!("event duration {duration} must be positive")));
        }
        Ok(Self {
            commencement,
            duration,
            kind: kind.into(),
            attendance,
        })
    }

    pub fn end(&self) -> NaiveDateTime {
        self.commencement + Duration::milliseconds((self.duration * 3_600_000.0).round() as i64)
    }

    pub fn date(&self) -> NaiveDate {
        self.commencement.date()
    }

    /// Kickoff as fractional hour of its day, e.g. 21.75 for 21:45.
    pub fn kickoff_hour(&self) -> f64 {
        CalendarIndex::of(self.commencement).hour
    }

    /// Half-open interval overlap with `[from, to)`.
    pub fn overlaps(&self, from: NaiveDateTime, to: NaiveDateTime) -> bool {
        self.commencement < to && self.end() > from
    }
}

/// Non-overlapping events sorted by commencement.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EventCalendar {
    events: Vec<EventInfo>,
}

impl EventCalendar {
    pub fn new(mut events: Vec<EventInfo>) -> Result<Self> {
        events.sort_by_key(|e| e.commencement);
        for pair in events.windows(2) {
            if pair[1].commencement < pair[0].end() {
                return Err(Error::Argument(format!(
                    "events at {} and {} overlap",
                    pair[0].commencement, pair[1].commencement
                )));
            }
        }
        Ok(Self { events })
    }

    pub fn events(&self) -> &[EventInfo] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, EventInfo> {
        self.events.iter()
    }

    /// Events whose commencement falls in `[from, to)`.
    pub fn between(&self, from: NaiveDateTime, to: NaiveDateTime) -> Self {
        Self {
            events: self
                .events
                .iter()
                .filter(|e| e.commencement >= from && e.commencement < to)
                .cloned()
                .collect(),
        }
    }
}

/// A whole day on which at least one event takes place.
#[derive(Debug, Clone, PartialEq)]
pub struct EventDay {
    pub series: HourlyTrafficSeries,
    pub events: Vec<EventInfo>,
}

/// Whole days partitioned by whether an event touches them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DatasetSplit {
    pub non_event_days: Vec<HourlyTrafficSeries>,
    pub event_days: Vec<EventDay>,
}

impl DatasetSplit {
    pub fn day_count(&self) -> usize {
        self.non_event_days.len() + self.event_days.len()
    }
}

/// Partitions a day-aligned series into event and non-event days.
///
/// A day is an event day when any event's `[commencement, end)` interval
/// intersects it, so an event running past midnight marks both days.
pub fn split_by_events(series: &HourlyTrafficSeries, calendar: &EventCalendar) -> Result<DatasetSplit> {
    if !series.is_day_aligned() {
        return Err(Error::Format(format!(
            "series starting {} with {} samples does not cover whole days",
            series.start(),
            series.len()
        )));
    }
    for e in calendar.iter() {
        if !series.contains(e.commencement) {
            return Err(Error::Range(format!(
                "event at {} lies outside series span {}..{}",
                e.commencement,
                series.start(),
                series.end()
            )));
        }
    }

    let mut split = DatasetSplit::default();
    for d in 0..series.len() / HOURS_PER_DAY {
        let day = series.slice(d * HOURS_PER_DAY, HOURS_PER_DAY)?;
        let (from, to) = (day.start(), day.end());
        let events: Vec<EventInfo> = calendar.iter().filter(|e| e.overlaps(from, to)).cloned().collect();
        if events.is_empty() {
            split.non_event_days.push(day);
        } else {
            split.event_days.push(EventDay { series: day, events });
        }
    }
    Ok(split)
}

/// Pointwise `total - daily`; negative samples are kept.
pub fn extract_residual(total: &HourlyTrafficSeries, daily: &HourlyTrafficSeries) -> Result<HourlyTrafficSeries> {
    if total.start() != daily.start() || total.len() != daily.len() {
        return Err(Error::Alignment(format!(
            "total ({} x {}) and daily ({} x {}) are not aligned",
            total.start(),
            total.len(),
            daily.start(),
            daily.len()
        )));
    }
    let values = total.values().iter().zip(daily.values()).map(|(t, d)| t - d).collect();
    HourlyTrafficSeries::new(total.start(), values)
}
