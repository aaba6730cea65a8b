//! CSV ingestion of ODM records.
//!
//! Files are UTF-8 comma-separated with the header
//! `date,start,end,origin,destination,count` (optionally gzip-compressed,
//! detected by a `.gz` suffix). Rows are grouped into one [`SparseOdm`] per
//! distinct window.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use chrono::{NaiveDate, NaiveTime};
use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::odm::{AreaId, OdmEntry, SparseOdm, TimeWindow, WindowSpan};

pub const HEADER: [&str; 6] = ["date", "start", "end", "origin", "destination", "count"];

/// One parsed input row.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OdmRecord {
    pub window: TimeWindow,
    pub origin: AreaId,
    pub destination: AreaId,
    pub count: u64,
}

/// Per-source metadata used to validate a day of snapshots.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceProfile {
    pub source_id: String,
    pub expected_windows_per_day: u32,
    #[serde(default)]
    pub has_diagonal_as_stayers: bool,
    /// Explicit window layout; when absent the day is split into
    /// `expected_windows_per_day` equal windows.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Vec<WindowSpan>>,
}

impl SourceProfile {
    pub fn new(source_id: impl Into<String>, expected_windows_per_day: u32) -> Result<Self> {
        let profile = SourceProfile {
            source_id: source_id.into(),
            expected_windows_per_day,
            has_diagonal_as_stayers: false,
            windows: None,
        };
        profile.expected_spans()?;
        Ok(profile)
    }

    /// 24 hourly windows plus the whole-day window.
    pub fn hourly_plus_daily(source_id: impl Into<String>) -> Self {
        let mut spans = WindowSpan::equal_partition(24).unwrap();
        spans.push(WindowSpan::full_day());
        SourceProfile {
            source_id: source_id.into(),
            expected_windows_per_day: 25,
            has_diagonal_as_stayers: false,
            windows: Some(spans),
        }
    }

    pub fn with_windows(mut self, spans: Vec<WindowSpan>) -> Result<Self> {
        self.expected_windows_per_day = spans.len() as u32;
        self.windows = Some(spans);
        self.expected_spans()?;
        Ok(self)
    }

    pub fn expected_spans(&self) -> Result<Vec<WindowSpan>> {
        if self.source_id.is_empty()
            || self
                .source_id
                .chars()
                .any(|c| matches!(c, '/' | '\\' | '\0') || c.is_control())
            || self.source_id.starts_with('.')
        {
            return Err(Error::Config(format!(
                "source id {:?} is not a valid identifier",
                self.source_id
            )));
        }
        if self.expected_windows_per_day == 0 {
            return Err(Error::Config("expected_windows_per_day must be >= 1".into()));
        }
        match &self.windows {
            Some(spans) => {
                let unique: BTreeSet<_> = spans.iter().collect();
                if unique.len() != spans.len() || spans.len() as u32 != self.expected_windows_per_day
                {
                    return Err(Error::Config(
                        "explicit windows must be distinct and match expected_windows_per_day"
                            .into(),
                    ));
                }
                let mut spans = spans.clone();
                spans.sort();
                Ok(spans)
            }
            None => WindowSpan::equal_partition(self.expected_windows_per_day)
                .map_err(|e| Error::Config(e.to_string())),
        }
    }
}

/// Outcome of checking one day's windows against the source profile.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayValidationReport {
    pub source_id: String,
    pub date: NaiveDate,
    pub missing_windows: Vec<WindowSpan>,
    pub extra_windows: Vec<WindowSpan>,
    pub total_volume: u64,
}

impl DayValidationReport {
    pub fn has_warnings(&self) -> bool {
        !self.missing_windows.is_empty() || !self.extra_windows.is_empty()
    }
}

/// Compare the windows present for `date` with those the profile expects.
/// Snapshots dated otherwise are ignored.
pub fn validate_day(
    snapshots: &[SparseOdm],
    profile: &SourceProfile,
    date: NaiveDate,
) -> Result<DayValidationReport> {
    let expected: BTreeSet<WindowSpan> = profile.expected_spans()?.into_iter().collect();
    let todays: Vec<&SparseOdm> = snapshots
        .iter()
        .filter(|m| m.window().date == date)
        .collect();
    let present: BTreeSet<WindowSpan> = todays.iter().map(|m| m.window().span()).collect();
    Ok(DayValidationReport {
        source_id: profile.source_id.clone(),
        date,
        missing_windows: expected.difference(&present).copied().collect(),
        extra_windows: present.difference(&expected).copied().collect(),
        total_volume: todays.iter().map(|m| m.mass()).sum(),
    })
}

/// Shares one allocation per distinct label.
#[derive(Default)]
pub(crate) struct Interner {
    labels: HashMap<Box<str>, AreaId>,
}

impl Interner {
    pub(crate) fn get(&mut self, label: &str) -> Result<AreaId> {
        if let Some(id) = self.labels.get(label) {
            return Ok(id.clone());
        }
        let id = AreaId::new(label)?;
        self.labels.insert(label.into(), id.clone());
        Ok(id)
    }
}

fn parse_time(s: &str) -> Option<NaiveTime> {
    NaiveTime::parse_from_str(s, "%H:%M:%S").ok()
}

/// Parse CSV text into records, each tagged with its 1-based line number.
pub fn read_records<R: Read>(reader: R) -> Result<Vec<(u64, OdmRecord)>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut interner = Interner::default();
    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    let mut saw_header = false;
    loop {
        let more = rdr.read_record(&mut record).map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        if !more {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if !saw_header {
            if record.iter().ne(HEADER.iter().copied()) {
                return Err(Error::Parse {
                    line,
                    message: format!("expected header `{}`", HEADER.join(",")),
                });
            }
            saw_header = true;
            continue;
        }
        if record.len() != HEADER.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", HEADER.len(), record.len()),
            });
        }
        let bad = |what: &str, v: &str| Error::Parse {
            line,
            message: format!("invalid {what} {v:?}"),
        };
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d")
            .map_err(|_| bad("date", &record[0]))?;
        let start = parse_time(&record[1]).ok_or_else(|| bad("start time", &record[1]))?;
        let end = parse_time(&record[2]).ok_or_else(|| bad("end time", &record[2]))?;
        let window = TimeWindow::new(date, start, end).map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let origin = interner.get(&record[3]).map_err(|_| bad("origin", &record[3]))?;
        let destination = interner
            .get(&record[4])
            .map_err(|_| bad("destination", &record[4]))?;
        let count: u64 = record[5].parse().map_err(|_| bad("count", &record[5]))?;
        out.push((
            line,
            OdmRecord {
                window,
                origin,
                destination,
                count,
            },
        ));
    }
    Ok(out)
}

/// Group records into snapshots ordered by window. A repeated cell within a
/// window is an integrity error naming the later line.
pub fn group_records(records: Vec<(u64, OdmRecord)>) -> Result<Vec<SparseOdm>> {
    let mut by_window: BTreeMap<TimeWindow, Vec<(u64, OdmEntry)>> = BTreeMap::new();
    for (line, r) in records {
        by_window
            .entry(r.window)
            .or_default()
            .push((line, OdmEntry::new(r.origin, r.destination, r.count)));
    }
    by_window
        .into_iter()
        .map(|(window, mut rows)| {
            rows.sort_by(|a, b| a.1.pair().cmp(&b.1.pair()).then(a.0.cmp(&b.0)));
            if let Some(w) = rows.windows(2).find(|w| w[0].1.pair() == w[1].1.pair()) {
                return Err(Error::Integrity {
                    line: w[1].0,
                    message: format!(
                        "duplicate cell ({},{}) in window {window}, first seen at line {}",
                        w[1].1.origin, w[1].1.destination, w[0].0
                    ),
                });
            }
            SparseOdm::from_sorted(window, rows.into_iter().map(|(_, e)| e).collect())
        })
        .collect()
}

pub fn parse_reader<R: Read>(reader: R) -> Result<Vec<SparseOdm>> {
    group_records(read_records(reader)?)
}

/// Parse one input file. An empty file yields no snapshots.
pub fn parse_file(path: &Path) -> Result<Vec<SparseOdm>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let gz = path.extension().is_some_and(|x| x == "gz");
    let reader: Box<dyn Read> = if gz {
        Box::new(GzDecoder::new(BufReader::new(file)))
    } else {
        Box::new(BufReader::new(file))
    };
    parse_reader(reader)
}

/// Serialize snapshots in the ingestion format, header included.
pub fn write_snapshots<'a, W: Write>(
    writer: W,
    snapshots: impl IntoIterator<Item = &'a SparseOdm>,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let csv_err = |e: csv::Error| Error::Invalid(format!("csv write failed: {e}"));
    wtr.write_record(HEADER).map_err(csv_err)?;
    for m in snapshots {
        let w = m.window();
        let date = w.date.format("%Y-%m-%d").to_string();
        let start = w.start.format("%H:%M:%S").to_string();
        let end = w.end.format("%H:%M:%S").to_string();
        for e in m.entries() {
            let count = e.count.to_string();
            wtr.write_record([
                date.as_str(),
                start.as_str(),
                end.as_str(),
                e.origin.as_str(),
                e.destination.as_str(),
                count.as_str(),
            ])
            .map_err(csv_err)?;
        }
    }
    wtr.flush().map_err(|e| Error::Invalid(format!("csv flush failed: {e}")))?;
    Ok(())
}
