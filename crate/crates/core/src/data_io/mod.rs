//! Data ingestion, synthetic data generation and file formats.

mod document;
mod files;
mod synthetic;
mod tsv;

pub use document::{EventRecord, FitDiagnostics, ModelDocument, FORMAT_VERSION};
pub use files::{
    export_forecast_csv, read_calendar_csv, read_series_csv, write_calendar_csv, write_series_csv, TIME_FORMAT,
};
pub use synthetic::{
    generate_synthetic, reference_corpus, reference_weekly_model, SyntheticData, SyntheticEvent, SyntheticSpec,
};
pub use tsv::{ingest_tsv, parse_record, GridTrafficRecord, IngestOptions, TrafficKind};
