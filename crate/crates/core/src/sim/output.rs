//! Result files: metrics CSV, JSONL event log, resolved configuration echo.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{LogRecord, MetricsRecord};
use crate::error::{Error, Result};

pub const METRICS_HEADER: [&str; 8] = [
    "sim_time_s",
    "epoch",
    "test_accuracy",
    "global_loss",
    "models_aggregated",
    "stale_selected",
    "groups",
    "bytes_transferred",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputBundle {
    pub metrics: PathBuf,
    pub events: PathBuf,
    pub config: PathBuf,
}

impl OutputBundle {
    /// Standard file names inside `dir`, creating the directory if needed.
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            metrics: dir.join("metrics.csv"),
            events: dir.join("events.jsonl"),
            config: dir.join("config.resolved.json"),
        })
    }
}

pub fn write_metrics<W: Write>(out: W, records: &[MetricsRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    if records.is_empty() {
        w.write_record(METRICS_HEADER).map_err(csv_error)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    let header: Vec<String> = r.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
    if header != METRICS_HEADER {
        return Err(Error::Format {
            offset: 0,
            message: format!("unexpected metrics header {header:?}"),
        });
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

pub fn write_events<W: Write>(out: W, records: &[LogRecord]) -> Result<()> {
    let mut w = BufWriter::new(out);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_metrics_file(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    write_metrics(create(path)?, records)
}

pub fn write_events_file(path: &Path, records: &[LogRecord]) -> Result<()> {
    write_events(create(path)?, records)
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: u64) -> MetricsRecord {
        MetricsRecord {
            sim_time_s: 1800.5 * epoch as f64,
            epoch,
            test_accuracy: 0.1 + 0.01 * epoch as f64,
            global_loss: std::f64::consts::LN_10,
            models_aggregated: 3,
            stale_selected: 1,
            groups: 2,
            bytes_transferred: 1.25e7,
        }
    }

    #[test]
    fn metrics_round_trip_with_fixed_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![record(0), record(1)];
        write_metrics_file(&path, &rows).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), METRICS_HEADER.join(","));
        assert_eq!(text.lines().count(), 3);
        assert_eq!(read_metrics(&path).unwrap(), rows);

        write_metrics_file(&path, &[]).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap().trim(), METRICS_HEADER.join(","));
    }

    #[test]
    fn events_are_one_object_per_line() {
        let rec = LogRecord {
            time: 1.5,
            seq: 7,
            kind: "bundle",
            src: Some("a".into()),
            dst: None,
            payload_bits: 256.0,
            detail: serde_json::json!({ "updates": 0 }),
        };
        let mut buf = Vec::new();
        write_events(&mut buf, &[rec.clone(), rec]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(
            text.lines().next().unwrap(),
            r#"{"time":1.5,"seq":7,"kind":"bundle","src":"a","dst":null,"payload_bits":256.0,"detail":{"updates":0}}"#
        );
    }
}
