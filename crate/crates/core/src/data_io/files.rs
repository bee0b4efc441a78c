//! CSV formats for series, event calendars and forecasts.

use std::io::{Read, Write};

use chrono::{Duration, NaiveDateTime};

use crate::error::{Error, Result};
use crate::predictor::Forecast;
use crate::timeseries::{EventCalendar, EventInfo, HourlyTrafficSeries};

pub const TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

const SERIES_HEADER: [&str; 2] = ["time", "traffic"];
const CALENDAR_HEADER: [&str; 4] = ["commencement", "duration_hours", "kind", "attendance"];
const FORECAST_HEADER: [&str; 5] = ["hour", "observed", "predicted", "daily", "pulse"];

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r)
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let headers = rdr.headers()?;
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::Format(format!(
            "expected header `{}`, got `{}`",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    Ok(())
}

fn parse_time(s: &str, line: usize) -> Result<NaiveDateTime> {
    NaiveDateTime::parse_from_str(s, TIME_FORMAT).map_err(|e| Error::Parse {
        line,
        message: format!("bad time `{s}`: {e}"),
    })
}

fn parse_field<T: std::str::FromStr>(s: &str, what: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| Error::Parse {
        line,
        message: format!("bad {what} `{s}`"),
    })
}

fn line_of(record: &csv::StringRecord) -> usize {
    record.position().map(|p| p.line() as usize).unwrap_or(0)
}

pub fn write_series_csv<W: Write>(series: &HourlyTrafficSeries, w: W) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(SERIES_HEADER)?;
    for (t, v) in series.iter() {
        wtr.write_record([t.format(TIME_FORMAT).to_string(), v.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a gap-free hourly series.
pub fn read_series_csv<R: Read>(r: R) -> Result<HourlyTrafficSeries> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &SERIES_HEADER)?;
    let mut start = None;
    let mut values = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        let t = parse_time(&rec[0], line)?;
        let v: f64 = parse_field(&rec[1], "traffic value", line)?;
        let expected = *start.get_or_insert(t) + Duration::hours(values.len() as i64);
        if t != expected {
            return Err(Error::Parse {
                line,
                message: format!("expected hour {expected}, got {t}"),
            });
        }
        values.push(v);
    }
    let start = start.ok_or_else(|| Error::Format("series file has no rows".into()))?;
    HourlyTrafficSeries::new(start, values)
}

pub fn write_calendar_csv<W: Write>(calendar: &EventCalendar, w: W) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(CALENDAR_HEADER)?;
    for e in calendar.iter() {
        wtr.write_record([
            e.commencement.format(TIME_FORMAT).to_string(),
            e.duration.to_string(),
            e.kind.clone(),
            e.attendance.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_calendar_csv<R: Read>(r: R) -> Result<EventCalendar> {
    let mut rdr = reader(r);
    check_header(&mut rdr, &CALENDAR_HEADER)?;
    let mut events = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != 4 {
            return Err(Error::Parse {
                line,
                message: format!("expected 4 fields, got {}", rec.len()),
            });
        }
        let info = EventInfo::new(
            parse_time(&rec[0], line)?,
            parse_field(&rec[1], "duration", line)?,
            &rec[2],
            parse_field(&rec[3], "attendance", line)?,
        )
        .map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        events.push(info);
    }
    EventCalendar::new(events)
}

/// Writes `hour,observed,predicted,daily,pulse`, one row per forecast hour.
/// `observed` is left empty when unknown.
pub fn export_forecast_csv<W: Write>(forecast: &Forecast, w: W) -> Result<()> {
    let mut wtr = writer(w);
    wtr.write_record(FORECAST_HEADER)?;
    for row in &forecast.rows {
        wtr.write_record([
            row.time.format(TIME_FORMAT).to_string(),
            row.observed.map(|v| v.to_string()).unwrap_or_default(),
            row.predicted.to_string(),
            row.daily.to_string(),
            row.pulse.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
