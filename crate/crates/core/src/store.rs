//! File-backed history of ODM snapshots.
//!
//! Layout under the store root:
//!
//! ```text
//! <root>/<source_id>/profile.json
//! <root>/<source_id>/<YYYY-MM-DD>.csv         all windows of the date
//! <root>/<source_id>/<YYYY-MM-DD>.index.json  window listing for the date
//! ```
//!
//! Files are replaced atomically (write to a temporary file, then rename), so
//! a concurrent reader sees either the old or the new day, never a torn one.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use chrono::{Days, NaiveDate};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::{self, SourceProfile};
use crate::odm::{SparseOdm, TimeWindow, WindowSpan};

/// Spacing between the history periods of a series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stride {
    Daily,
    #[default]
    Weekly,
}

impl Stride {
    pub fn days(self) -> u64 {
        match self {
            Stride::Daily => 1,
            Stride::Weekly => 7,
        }
    }

    /// Date of history slot `k` (1-based) for a series observed on `date`.
    pub fn lag(self, date: NaiveDate, k: usize) -> Option<NaiveDate> {
        date.checked_sub_days(Days::new(self.days() * k as u64))
    }
}

impl std::str::FromStr for Stride {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "daily" => Ok(Stride::Daily),
            "weekly" => Ok(Stride::Weekly),
            other => Err(Error::Config(format!("unknown stride {other:?}"))),
        }
    }
}

impl std::fmt::Display for Stride {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stride::Daily => "daily",
            Stride::Weekly => "weekly",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistoryQuery {
    pub source_id: String,
    pub window: TimeWindow,
    pub p: usize,
    pub stride: Stride,
}

/// One history period: a stored snapshot, or the date it would have had.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HistorySlot {
    Present(Arc<SparseOdm>),
    Missing(NaiveDate),
}

impl HistorySlot {
    pub fn snapshot(&self) -> Option<&SparseOdm> {
        match self {
            HistorySlot::Present(m) => Some(m),
            HistorySlot::Missing(_) => None,
        }
    }
}

/// The `p` periods preceding a window, newest first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HistorySlice {
    window: TimeWindow,
    stride: Stride,
    slots: Vec<HistorySlot>,
}

impl HistorySlice {
    /// Assemble a slice, checking that slot `k` holds date `d - (k+1)·stride`
    /// with the same start/end as `window`.
    pub fn new(window: TimeWindow, stride: Stride, slots: Vec<HistorySlot>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::Invalid("history needs p >= 1 slots".into()));
        }
        for (k, slot) in slots.iter().enumerate() {
            let want = stride
                .lag(window.date, k + 1)
                .ok_or_else(|| Error::Invalid("history date out of range".into()))?;
            let ok = match slot {
                HistorySlot::Present(m) => *m.window() == window.with_date(want),
                HistorySlot::Missing(d) => *d == want,
            };
            if !ok {
                return Err(Error::Invalid(format!(
                    "history slot {} is not aligned to {}",
                    k + 1,
                    window.with_date(want)
                )));
            }
        }
        Ok(HistorySlice {
            window,
            stride,
            slots,
        })
    }

    /// Build from snapshots in slot order, `None` marking a missing period.
    pub fn from_snapshots(
        window: TimeWindow,
        stride: Stride,
        snapshots: Vec<Option<SparseOdm>>,
    ) -> Result<Self> {
        let slots = snapshots
            .into_iter()
            .enumerate()
            .map(|(k, m)| match m {
                Some(m) => Ok(HistorySlot::Present(Arc::new(m))),
                None => stride
                    .lag(window.date, k + 1)
                    .map(HistorySlot::Missing)
                    .ok_or_else(|| Error::Invalid("history date out of range".into())),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(window, stride, slots)
    }

    pub fn window(&self) -> &TimeWindow {
        &self.window
    }

    pub fn stride(&self) -> Stride {
        self.stride
    }

    pub fn p(&self) -> usize {
        self.slots.len()
    }

    pub fn slots(&self) -> &[HistorySlot] {
        &self.slots
    }

    pub fn available(&self) -> impl Iterator<Item = &SparseOdm> + '_ {
        self.slots.iter().filter_map(HistorySlot::snapshot)
    }

    pub fn available_count(&self) -> usize {
        self.available().count()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct DayIndex {
    date: NaiveDate,
    windows: Vec<IndexedWindow>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct IndexedWindow {
    #[serde(flatten)]
    span: WindowSpan,
    entries: usize,
    mass: u64,
}

/// Minimum number of days kept regardless of `p` and stride.
pub const MIN_RETENTION_DAYS: u64 = 35;

/// Days of history needed to serve `p` periods at `stride`.
pub fn retention_days(p: usize, stride: Stride) -> u64 {
    (p as u64 * stride.days()).max(MIN_RETENTION_DAYS)
}

/// Snapshot store rooted at a directory.
#[derive(Debug)]
pub struct HistoryStore {
    root: PathBuf,
    retention_days: Option<u64>,
    write_lock: Mutex<()>,
}

impl HistoryStore {
    /// Open (creating if needed) a store with the default retention.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| Error::io(&root, e))?;
        Ok(HistoryStore {
            root,
            retention_days: Some(MIN_RETENTION_DAYS),
            write_lock: Mutex::new(()),
        })
    }

    /// `None` disables pruning.
    pub fn with_retention(mut self, days: Option<u64>) -> Self {
        self.retention_days = days;
        self
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn source_dir(&self, source_id: &str) -> Result<PathBuf> {
        SourceProfile::new(source_id, 1)?;
        Ok(self.root.join(source_id))
    }

    fn day_paths(&self, source_id: &str, date: NaiveDate) -> Result<(PathBuf, PathBuf)> {
        let dir = self.source_dir(source_id)?;
        let stem = date.format("%Y-%m-%d").to_string();
        Ok((
            dir.join(format!("{stem}.csv")),
            dir.join(format!("{stem}.index.json")),
        ))
    }

    pub fn save_profile(&self, profile: &SourceProfile) -> Result<()> {
        profile.expected_spans()?;
        let dir = self.source_dir(&profile.source_id)?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let bytes = serde_json::to_vec_pretty(profile)?;
        write_atomic(&dir.join("profile.json"), |w| {
            w.write_all(&bytes).map_err(|e| Error::io(&dir, e))
        })
    }

    pub fn load_profile(&self, source_id: &str) -> Result<Option<SourceProfile>> {
        let path = self.source_dir(source_id)?.join("profile.json");
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    /// Store one snapshot, replacing any stored for the same window.
    /// Returns whether an existing snapshot was replaced.
    pub fn put_snapshot(&self, source_id: &str, m: &SparseOdm) -> Result<bool> {
        Ok(self.put_many(source_id, std::slice::from_ref(m))? > 0)
    }

    /// Store snapshots, rewriting each touched date once. Returns the number
    /// of windows that replaced an existing snapshot.
    pub fn put_many(&self, source_id: &str, snapshots: &[SparseOdm]) -> Result<usize> {
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let dir = self.source_dir(source_id)?;
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

        let mut by_date: BTreeMap<NaiveDate, Vec<&SparseOdm>> = BTreeMap::new();
        for m in snapshots {
            by_date.entry(m.window().date).or_default().push(m);
        }
        let mut replaced = 0;
        for (date, incoming) in by_date {
            let mut day: BTreeMap<WindowSpan, SparseOdm> = self
                .load_day(source_id, date)?
                .into_iter()
                .map(|m| (m.window().span(), m))
                .collect();
            for m in incoming {
                if day.insert(m.window().span(), m.clone()).is_some() {
                    warn!("{source_id}: replacing stored snapshot for {}", m.window());
                    replaced += 1;
                }
            }
            self.write_day(source_id, date, day.values())?;
        }
        if let Some(days) = self.retention_days {
            self.prune(source_id, days)?;
        }
        Ok(replaced)
    }

    fn write_day<'a>(
        &self,
        source_id: &str,
        date: NaiveDate,
        day: impl Iterator<Item = &'a SparseOdm> + Clone,
    ) -> Result<()> {
        let (csv_path, index_path) = self.day_paths(source_id, date)?;
        write_atomic(&csv_path, |w| ingest::write_snapshots(w, day.clone()))?;
        let index = DayIndex {
            date,
            windows: day
                .map(|m| IndexedWindow {
                    span: m.window().span(),
                    entries: m.len(),
                    mass: m.mass(),
                })
                .collect(),
        };
        let bytes = serde_json::to_vec_pretty(&index)?;
        write_atomic(&index_path, |w| {
            w.write_all(&bytes).map_err(|e| Error::io(&index_path, e))
        })
    }

    /// All snapshots stored for a date, ordered by window. Windows stored
    /// without any flow come back empty.
    pub fn load_day(&self, source_id: &str, date: NaiveDate) -> Result<Vec<SparseOdm>> {
        let (csv_path, _) = self.day_paths(source_id, date)?;
        if !csv_path.exists() {
            return Ok(Vec::new());
        }
        let mut ms = ingest::parse_file(&csv_path)?;
        if let Some(bad) = ms.iter().find(|m| m.window().date != date) {
            return Err(Error::Invalid(format!(
                "{} holds a snapshot for {}",
                csv_path.display(),
                bad.window()
            )));
        }
        let empty: Vec<SparseOdm> = self
            .windows(source_id, date)?
            .into_iter()
            .filter(|s| !ms.iter().any(|m| m.window().span() == *s))
            .map(|s| SparseOdm::empty(s.on(date)))
            .collect();
        if !empty.is_empty() {
            ms.extend(empty);
            ms.sort_by(|a, b| a.window().cmp(b.window()));
        }
        Ok(ms)
    }

    /// Windows stored for a date, read from the sidecar index.
    pub fn windows(&self, source_id: &str, date: NaiveDate) -> Result<Vec<WindowSpan>> {
        let (_, index_path) = self.day_paths(source_id, date)?;
        match fs::read(&index_path) {
            Ok(bytes) => {
                let index: DayIndex = serde_json::from_slice(&bytes)?;
                Ok(index.windows.into_iter().map(|w| w.span).collect())
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(index_path, e)),
        }
    }

    /// SHA-256 of the stored day file, `None` when the date is absent.
    pub fn day_digest(&self, source_id: &str, date: NaiveDate) -> Result<Option<String>> {
        let (csv_path, _) = self.day_paths(source_id, date)?;
        match fs::read(&csv_path) {
            Ok(bytes) => Ok(Some(hex::encode(Sha256::digest(&bytes)))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(csv_path, e)),
        }
    }

    pub fn get_snapshot(&self, source_id: &str, window: &TimeWindow) -> Result<Option<SparseOdm>> {
        Ok(self
            .load_day(source_id, window.date)?
            .into_iter()
            .find(|m| m.window() == window))
    }

    /// Dates with stored data, ascending.
    pub fn dates(&self, source_id: &str) -> Result<Vec<NaiveDate>> {
        let dir = self.source_dir(source_id)?;
        let rd = match fs::read_dir(&dir) {
            Ok(rd) => rd,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(Error::io(dir, e)),
        };
        let mut dates = Vec::new();
        for entry in rd {
            let entry = entry.map_err(|e| Error::io(&dir, e))?;
            let name = entry.file_name();
            let Some(stem) = name.to_str().and_then(|n| n.strip_suffix(".csv")) else {
                continue;
            };
            if let Ok(d) = NaiveDate::parse_from_str(stem, "%Y-%m-%d") {
                dates.push(d);
            }
        }
        dates.sort();
        Ok(dates)
    }

    /// Remove dates older than `days` before the newest stored date.
    pub fn prune(&self, source_id: &str, days: u64) -> Result<usize> {
        let dates = self.dates(source_id)?;
        let Some(newest) = dates.last().copied() else {
            return Ok(0);
        };
        let Some(cutoff) = newest.checked_sub_days(Days::new(days)) else {
            return Ok(0);
        };
        let mut removed = 0;
        for d in dates.into_iter().filter(|d| *d < cutoff) {
            let (csv_path, index_path) = self.day_paths(source_id, d)?;
            fs::remove_file(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
            let _ = fs::remove_file(&index_path);
            info!("{source_id}: pruned {d}");
            removed += 1;
        }
        Ok(removed)
    }

    /// The `p` periods preceding `q.window`. Absent periods are `Missing`.
    pub fn fetch_history(&self, q: &HistoryQuery) -> Result<HistorySlice> {
        self.fetch_history_with(q, &mut DayCache::default())
    }

    /// As [`fetch_history`](Self::fetch_history), reusing days already loaded
    /// into `cache`.
    pub fn fetch_history_with(&self, q: &HistoryQuery, cache: &mut DayCache) -> Result<HistorySlice> {
        if q.p == 0 {
            return Err(Error::Config("p must be >= 1".into()));
        }
        let mut slots = Vec::with_capacity(q.p);
        for k in 1..=q.p {
            let date = q
                .stride
                .lag(q.window.date, k)
                .ok_or_else(|| Error::Invalid("history date out of range".into()))?;
            let day = cache.day(self, &q.source_id, date)?;
            let want = q.window.with_date(date);
            slots.push(
                match day.iter().find(|m| *m.window() == want) {
                    Some(m) => HistorySlot::Present(Arc::clone(m)),
                    None => HistorySlot::Missing(date),
                },
            );
        }
        HistorySlice::new(q.window, q.stride, slots)
    }
}

/// Days loaded from a store, keyed by `(source, date)`.
#[derive(Default)]
pub struct DayCache {
    days: BTreeMap<(String, NaiveDate), Arc<Vec<Arc<SparseOdm>>>>,
}

impl DayCache {
    pub fn day(
        &mut self,
        store: &HistoryStore,
        source_id: &str,
        date: NaiveDate,
    ) -> Result<Arc<Vec<Arc<SparseOdm>>>> {
        let key = (source_id.to_string(), date);
        if let Some(day) = self.days.get(&key) {
            return Ok(Arc::clone(day));
        }
        let day: Arc<Vec<Arc<SparseOdm>>> = Arc::new(
            store
                .load_day(source_id, date)?
                .into_iter()
                .map(Arc::new)
                .collect(),
        );
        self.days.insert(key, Arc::clone(&day));
        Ok(day)
    }
}

fn write_atomic(path: &Path, body: impl FnOnce(&mut BufWriter<fs::File>) -> Result<()>) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|x| x.to_str()).unwrap_or("")
    ));
    let file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let mut w = BufWriter::new(file);
    body(&mut w)?;
    w.flush().map_err(|e| Error::io(&tmp, e))?;
    w.get_ref().sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(w);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
