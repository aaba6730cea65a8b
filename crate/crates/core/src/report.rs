//! Report serialization.
//!
//! JSON Lines output is a header line, one line per reported outcome, and a
//! summary line. CSV output carries the same outcome columns; header and
//! summary are written as `#`-prefixed JSON comment lines.

use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;

use crate::detect::{
    DayReport, DaySummary, DetectorConfig, Direction, InputDigest, KeyOutcome, SignalLevel, Status,
    WindowReport,
};
use crate::error::{Error, Result};
use crate::odm::WindowSpan;

/// Report file format.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Jsonl,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(ReportFormat::Jsonl),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::Config(format!("unknown report format {other:?}"))),
        }
    }
}

/// Column order of outcome rows.
pub const COLUMNS: [&str; 16] = [
    "source",
    "date",
    "start",
    "end",
    "kind",
    "origin",
    "destination",
    "status",
    "direction",
    "level",
    "inc_percent",
    "observed",
    "ma",
    "sd",
    "lower",
    "upper",
];

/// One reported outcome, flattened.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutcomeRecord<'a> {
    pub source: &'a str,
    pub date: NaiveDate,
    pub start: String,
    pub end: String,
    pub kind: &'static str,
    pub origin: Option<&'a str>,
    pub destination: Option<&'a str>,
    pub status: &'static str,
    pub direction: Option<Direction>,
    pub level: Option<SignalLevel>,
    pub inc_percent: Option<f64>,
    pub observed: u64,
    pub ma: Option<f64>,
    pub sd: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl<'a> OutcomeRecord<'a> {
    pub fn new(source: &'a str, window: &WindowReport, o: &'a KeyOutcome) -> Self {
        let signal = match &o.status {
            Status::Signal(s) => Some(s),
            _ => None,
        };
        OutcomeRecord {
            source,
            date: window.window.date,
            start: window.window.start.format("%H:%M:%S").to_string(),
            end: window.window.end.format("%H:%M:%S").to_string(),
            kind: o.key.kind_name(),
            origin: o.key.origin().map(|a| a.as_str()),
            destination: o.key.destination().map(|a| a.as_str()),
            status: o.status.name(),
            direction: signal.map(|s| s.direction),
            level: signal.map(|s| s.level),
            inc_percent: signal.map(|s| s.inc_percent),
            observed: o.observed,
            ma: o.ma,
            sd: o.sd,
            lower: signal.map(|s| s.lower_bound),
            upper: signal.map(|s| s.upper_bound),
        }
    }
}

#[derive(Serialize)]
struct WindowHeader {
    #[serde(flatten)]
    span: WindowSpan,
    t: u64,
    eligible_count: usize,
    degenerate_threshold: bool,
    history_available: usize,
    p: usize,
}

#[derive(Serialize)]
struct HeaderLine<'a> {
    record: &'static str,
    tool: &'static str,
    version: &'static str,
    source: &'a str,
    date: NaiveDate,
    config: &'a DetectorConfig,
    inputs: &'a [InputDigest],
    windows: Vec<WindowHeader>,
}

#[derive(Serialize)]
struct SummaryLine<'a> {
    record: &'static str,
    source: &'a str,
    date: NaiveDate,
    missing_windows: Vec<WindowSpan>,
    extra_windows: Vec<WindowSpan>,
    total_volume: Option<u64>,
    #[serde(flatten)]
    summary: &'a DaySummary,
}

#[derive(Serialize)]
struct Tagged<'a> {
    record: &'static str,
    #[serde(flatten)]
    outcome: OutcomeRecord<'a>,
}

fn header(report: &DayReport) -> HeaderLine<'_> {
    HeaderLine {
        record: "header",
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        source: &report.source_id,
        date: report.date,
        config: &report.config,
        inputs: &report.inputs,
        windows: report
            .windows
            .iter()
            .map(|w| WindowHeader {
                span: w.window.span(),
                t: w.threshold.t,
                eligible_count: w.threshold.eligible_count,
                degenerate_threshold: w.threshold.degenerate,
                history_available: w.history_available,
                p: w.p,
            })
            .collect(),
    }
}

fn summary(report: &DayReport) -> SummaryLine<'_> {
    let v = report.validation.as_ref();
    SummaryLine {
        record: "summary",
        source: &report.source_id,
        date: report.date,
        missing_windows: v.map(|v| v.missing_windows.clone()).unwrap_or_default(),
        extra_windows: v.map(|v| v.extra_windows.clone()).unwrap_or_default(),
        total_volume: v.map(|v| v.total_volume),
        summary: &report.summary,
    }
}

fn records(report: &DayReport) -> impl Iterator<Item = OutcomeRecord<'_>> {
    report.windows.iter().flat_map(move |w| {
        w.outcomes
            .iter()
            .map(move |o| OutcomeRecord::new(&report.source_id, w, o))
    })
}

fn io_err(e: std::io::Error) -> Error {
    Error::io("<report>", e)
}

pub fn write_jsonl<W: Write>(report: &DayReport, mut w: W) -> Result<()> {
    serde_json::to_writer(&mut w, &header(report))?;
    w.write_all(b"\n").map_err(io_err)?;
    for outcome in records(report) {
        serde_json::to_writer(
            &mut w,
            &Tagged {
                record: "outcome",
                outcome,
            },
        )?;
        w.write_all(b"\n").map_err(io_err)?;
    }
    serde_json::to_writer(&mut w, &summary(report))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_csv<W: Write>(report: &DayReport, mut w: W) -> Result<()> {
    w.write_all(b"# ").map_err(io_err)?;
    serde_json::to_writer(&mut w, &header(report))?;
    w.write_all(b"\n").map_err(io_err)?;
    {
        let mut wtr = csv::WriterBuilder::new()
            .has_headers(true)
            .from_writer(&mut w);
        let csv_err = |e: csv::Error| Error::Invalid(format!("csv write failed: {e}"));
        let mut any = false;
        for r in records(report) {
            wtr.serialize(r).map_err(csv_err)?;
            any = true;
        }
        if !any {
            wtr.write_record(COLUMNS).map_err(csv_err)?;
        }
        wtr.flush().map_err(io_err)?;
    }
    w.write_all(b"# ").map_err(io_err)?;
    serde_json::to_writer(&mut w, &summary(report))?;
    w.write_all(b"\n").map_err(io_err)?;
    w.flush().map_err(io_err)
}

pub fn write_report<W: Write>(report: &DayReport, format: ReportFormat, w: W) -> Result<()> {
    match format {
        ReportFormat::Jsonl => write_jsonl(report, w),
        ReportFormat::Csv => write_csv(report, w),
    }
}
