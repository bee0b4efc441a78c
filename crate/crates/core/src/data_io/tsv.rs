//! Ingestion of grid traffic records in the Milan open-data TSV layout:
//! `square_id, epoch_ms, country_code, sms_in, sms_out, call_in, call_out,
//! internet`, tab separated, empty fields allowed.

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;
use std::str::FromStr;

use chrono::DateTime;

use crate::error::{Error, Result};
use crate::timeseries::HourlyTrafficSeries;

const INTERVAL_MS: i64 = 600_000;
const HOUR_MS: i64 = 3_600_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrafficKind {
    SmsIn,
    SmsOut,
    CallIn,
    CallOut,
    Internet,
}

impl FromStr for TrafficKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sms_in" => Ok(TrafficKind::SmsIn),
            "sms_out" => Ok(TrafficKind::SmsOut),
            "call_in" => Ok(TrafficKind::CallIn),
            "call_out" => Ok(TrafficKind::CallOut),
            "internet" => Ok(TrafficKind::Internet),
            other => Err(Error::Argument(format!("unknown traffic kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridTrafficRecord {
    pub square_id: u32,
    /// Start of the 10-minute interval, UTC milliseconds.
    pub epoch_ms: i64,
    pub country_code: Option<u32>,
    pub sms_in: Option<f64>,
    pub sms_out: Option<f64>,
    pub call_in: Option<f64>,
    pub call_out: Option<f64>,
    pub internet: Option<f64>,
}

impl GridTrafficRecord {
    pub fn value(&self, kind: TrafficKind) -> Option<f64> {
        match kind {
            TrafficKind::SmsIn => self.sms_in,
            TrafficKind::SmsOut => self.sms_out,
            TrafficKind::CallIn => self.call_in,
            TrafficKind::CallOut => self.call_out,
            TrafficKind::Internet => self.internet,
        }
    }
}

fn optional<T: FromStr>(field: Option<&str>, name: &str) -> std::result::Result<Option<T>, String> {
    match field.map(str::trim) {
        None | Some("") => Ok(None),
        Some(s) => s.parse().map(Some).map_err(|_| format!("bad {name} `{s}`")),
    }
}

fn traffic(field: Option<&str>, name: &str) -> std::result::Result<Option<f64>, String> {
    let v: Option<f64> = optional(field, name)?;
    match v {
        Some(x) if !(x.is_finite() && x >= 0.0) => Err(format!("{name} must be a non-negative number, got {x}")),
        _ => Ok(v),
    }
}

/// Parses one TSV line.
pub fn parse_record(line: &str) -> std::result::Result<GridTrafficRecord, String> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() < 2 || fields.len() > 8 {
        return Err(format!("expected up to 8 tab-separated fields, got {}", fields.len()));
    }
    let square_id = fields[0]
        .trim()
        .parse()
        .map_err(|_| format!("bad square id `{}`", fields[0]))?;
    let epoch_ms: i64 = fields[1]
        .trim()
        .parse()
        .map_err(|_| format!("bad timestamp `{}`", fields[1]))?;
    if epoch_ms.rem_euclid(INTERVAL_MS) != 0 {
        return Err(format!("timestamp {epoch_ms} is not on a 10-minute boundary"));
    }
    let get = |i: usize| fields.get(i).copied();
    let record = GridTrafficRecord {
        square_id,
        epoch_ms,
        country_code: optional(get(2), "country code")?,
        sms_in: traffic(get(3), "sms_in")?,
        sms_out: traffic(get(4), "sms_out")?,
        call_in: traffic(get(5), "call_in")?,
        call_out: traffic(get(6), "call_out")?,
        internet: traffic(get(7), "internet")?,
    };
    let any = [
        record.sms_in,
        record.sms_out,
        record.call_in,
        record.call_out,
        record.internet,
    ]
    .iter()
    .any(Option::is_some);
    if !any {
        return Err("record carries no traffic field".into());
    }
    Ok(record)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestOptions {
    pub kind: TrafficKind,
    pub grid_ids: BTreeSet<u32>,
    /// Hours added to UTC before bucketing into local hours and days.
    pub tz_offset_hours: i64,
}

impl IngestOptions {
    pub fn new(kind: TrafficKind, grid_ids: impl IntoIterator<Item = u32>) -> Self {
        Self {
            kind,
            grid_ids: grid_ids.into_iter().collect(),
            tz_offset_hours: 1,
        }
    }
}

/// Sums the chosen traffic field over the selected grids and the six
/// 10-minute intervals of each local hour.
///
/// Per-hour values are summed in sorted order so the result does not depend
/// on line order. Hours inside the covered span with no matching record are
/// filled with 0 and reported through `log::warn!`.
pub fn ingest_tsv<R: BufRead>(reader: R, options: &IngestOptions) -> Result<HourlyTrafficSeries> {
    let offset_ms = options.tz_offset_hours * HOUR_MS;
    let mut buckets: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = parse_record(&line).map_err(|message| Error::Parse { line: i + 1, message })?;
        if !options.grid_ids.contains(&record.square_id) {
            continue;
        }
        let hour = (record.epoch_ms + offset_ms).div_euclid(HOUR_MS);
        buckets
            .entry(hour)
            .or_default()
            .push(record.value(options.kind).unwrap_or(0.0));
    }

    let (&first, _) = buckets
        .first_key_value()
        .ok_or_else(|| Error::EmptySelection(format!("no records for grids {:?}", options.grid_ids)))?;
    let (&last, _) = buckets.last_key_value().expect("non-empty");
    let mut values = Vec::with_capacity((last - first + 1) as usize);
    let mut empty_hours = 0usize;
    for h in first..=last {
        match buckets.get_mut(&h) {
            Some(v) => {
                v.sort_by(f64::total_cmp);
                values.push(v.iter().sum());
            }
            None => {
                empty_hours += 1;
                values.push(0.0);
            }
        }
    }
    if empty_hours > 0 {
        log::warn!("{empty_hours} hour(s) without records were filled with 0");
    }
    let start = DateTime::from_timestamp_millis(first * HOUR_MS)
        .ok_or_else(|| Error::Range(format!("timestamp hour {first} out of range")))?
        .naive_utc();
    HourlyTrafficSeries::new(start, values)
}
