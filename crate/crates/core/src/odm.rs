//! Core origin-destination matrix types.
//!
//! A [`SparseOdm`] is one snapshot of movement counts for a single
//! `(date, start, end)` window. Entries are kept sorted by
//! `(origin, destination)` with no duplicates and no zero counts, which lets
//! several snapshots be merged in a single linear pass.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use chrono::{NaiveDate, NaiveTime, Timelike};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Opaque label of a geographical reference area.
///
/// Cloning is cheap; labels are shared between snapshots.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AreaId(Arc<str>);

impl AreaId {
    pub fn new(label: impl AsRef<str>) -> Result<Self> {
        let label = label.as_ref();
        if label.is_empty() {
            return Err(Error::Invalid("area label must be non-empty".into()));
        }
        Ok(AreaId(Arc::from(label)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for AreaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

impl fmt::Display for AreaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for AreaId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl Serialize for AreaId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for AreaId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        AreaId::new(s).map_err(serde::de::Error::custom)
    }
}

/// Start of a whole-day window.
pub fn day_start() -> NaiveTime {
    NaiveTime::from_hms_opt(0, 0, 0).unwrap()
}

/// End of a whole-day window.
pub fn day_end() -> NaiveTime {
    NaiveTime::from_hms_opt(23, 59, 59).unwrap()
}

/// Start/end times of a window, independent of the date.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct WindowSpan {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl WindowSpan {
    pub fn new(start: NaiveTime, end: NaiveTime) -> Result<Self> {
        if start >= end || start.nanosecond() != 0 || end.nanosecond() != 0 {
            return Err(Error::Invalid(format!(
                "window start {start} must precede end {end} (whole seconds)"
            )));
        }
        Ok(WindowSpan { start, end })
    }

    pub fn full_day() -> Self {
        WindowSpan {
            start: day_start(),
            end: day_end(),
        }
    }

    /// Split the day into `n` equal consecutive windows. Each window ends one
    /// second before the next starts; the last ends at 23:59:59.
    pub fn equal_partition(n: u32) -> Result<Vec<Self>> {
        if n == 0 || 86_400 % n != 0 {
            return Err(Error::Invalid(format!(
                "cannot split a day into {n} equal whole-second windows"
            )));
        }
        let len = 86_400 / n;
        (0..n)
            .map(|k| {
                let start = NaiveTime::from_num_seconds_from_midnight_opt(k * len, 0).unwrap();
                let end =
                    NaiveTime::from_num_seconds_from_midnight_opt((k + 1) * len - 1, 0).unwrap();
                WindowSpan::new(start, end)
            })
            .collect()
    }

    pub fn on(self, date: NaiveDate) -> TimeWindow {
        TimeWindow {
            date,
            start: self.start,
            end: self.end,
        }
    }
}

impl fmt::Display for WindowSpan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}",
            self.start.format("%H:%M:%S"),
            self.end.format("%H:%M:%S")
        )
    }
}

/// A dated sampling window `(d, s, e)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TimeWindow {
    pub date: NaiveDate,
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl TimeWindow {
    pub fn new(date: NaiveDate, start: NaiveTime, end: NaiveTime) -> Result<Self> {
        Ok(WindowSpan::new(start, end)?.on(date))
    }

    pub fn full_day(date: NaiveDate) -> Self {
        WindowSpan::full_day().on(date)
    }

    pub fn span(&self) -> WindowSpan {
        WindowSpan {
            start: self.start,
            end: self.end,
        }
    }

    /// Same start/end on another date.
    pub fn with_date(&self, date: NaiveDate) -> Self {
        TimeWindow { date, ..*self }
    }
}

impl fmt::Display for TimeWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.date, self.span())
    }
}

/// One monitored series.
///
/// Marginal kinds always denote diagonal-excluded sums. The derived ordering
/// (cells, then inbound, then outbound, then labels) is the report order.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FlowKey {
    Cell {
        origin: AreaId,
        destination: AreaId,
    },
    Inbound {
        destination: AreaId,
    },
    Outbound {
        origin: AreaId,
    },
}

impl FlowKey {
    pub fn cell(origin: AreaId, destination: AreaId) -> Self {
        FlowKey::Cell {
            origin,
            destination,
        }
    }

    pub fn inbound(destination: AreaId) -> Self {
        FlowKey::Inbound { destination }
    }

    pub fn outbound(origin: AreaId) -> Self {
        FlowKey::Outbound { origin }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FlowKey::Cell { .. } => "cell",
            FlowKey::Inbound { .. } => "inbound",
            FlowKey::Outbound { .. } => "outbound",
        }
    }

    pub fn origin(&self) -> Option<&AreaId> {
        match self {
            FlowKey::Cell { origin, .. } | FlowKey::Outbound { origin } => Some(origin),
            FlowKey::Inbound { .. } => None,
        }
    }

    pub fn destination(&self) -> Option<&AreaId> {
        match self {
            FlowKey::Cell { destination, .. } | FlowKey::Inbound { destination } => {
                Some(destination)
            }
            FlowKey::Outbound { .. } => None,
        }
    }

    /// Observed value of this series in `m`.
    pub fn value_in(&self, m: &SparseOdm) -> u64 {
        match self {
            FlowKey::Cell {
                origin,
                destination,
            } => m.cell_value(origin, destination),
            FlowKey::Inbound { destination } => m.inbound_excl_diag(destination),
            FlowKey::Outbound { origin } => m.outbound_excl_diag(origin),
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowKey::Cell {
                origin,
                destination,
            } => write!(f, "({origin},{destination})"),
            FlowKey::Inbound { destination } => write!(f, "(.,{destination})"),
            FlowKey::Outbound { origin } => write!(f, "({origin},.)"),
        }
    }
}

/// A stored cell.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OdmEntry {
    pub origin: AreaId,
    pub destination: AreaId,
    pub count: u64,
}

impl OdmEntry {
    pub fn new(origin: AreaId, destination: AreaId, count: u64) -> Self {
        OdmEntry {
            origin,
            destination,
            count,
        }
    }

    #[inline]
    pub fn pair(&self) -> (&str, &str) {
        (self.origin.as_str(), self.destination.as_str())
    }

    #[inline]
    pub fn is_diagonal(&self) -> bool {
        self.origin == self.destination
    }
}

/// Sparse snapshot of one window. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparseOdm {
    window: TimeWindow,
    entries: Vec<OdmEntry>,
}

impl SparseOdm {
    pub fn empty(window: TimeWindow) -> Self {
        SparseOdm {
            window,
            entries: Vec::new(),
        }
    }

    /// Build from entries in any order. Zero counts are dropped; a repeated
    /// `(origin, destination)` pair is an error.
    pub fn from_entries(
        window: TimeWindow,
        entries: impl IntoIterator<Item = OdmEntry>,
    ) -> Result<Self> {
        let mut entries: Vec<OdmEntry> = entries.into_iter().filter(|e| e.count > 0).collect();
        entries.sort_unstable_by(|a, b| a.pair().cmp(&b.pair()));
        if let Some(w) = entries.windows(2).find(|w| w[0].pair() == w[1].pair()) {
            return Err(Error::Integrity {
                line: 0,
                message: format!(
                    "duplicate cell ({},{}) in window {window}",
                    w[0].origin, w[0].destination
                ),
            });
        }
        Ok(SparseOdm { window, entries })
    }

    /// Build from entries already strictly increasing by `(origin, destination)`.
    /// Zero counts are dropped. Sortedness is verified in one pass.
    pub fn from_sorted(window: TimeWindow, mut entries: Vec<OdmEntry>) -> Result<Self> {
        entries.retain(|e| e.count > 0);
        if let Some(w) = entries.windows(2).find(|w| w[0].pair() >= w[1].pair()) {
            return Err(Error::Invalid(format!(
                "entries not strictly increasing at ({},{})",
                w[1].origin, w[1].destination
            )));
        }
        Ok(SparseOdm { window, entries })
    }

    /// Convenience constructor for literal matrices.
    pub fn from_triples<'a>(
        window: TimeWindow,
        triples: impl IntoIterator<Item = (&'a str, &'a str, u64)>,
    ) -> Result<Self> {
        let entries = triples
            .into_iter()
            .map(|(o, d, c)| Ok(OdmEntry::new(AreaId::new(o)?, AreaId::new(d)?, c)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_entries(window, entries)
    }

    pub fn window(&self) -> &TimeWindow {
        &self.window
    }

    pub fn entries(&self) -> &[OdmEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total mass including the diagonal.
    pub fn mass(&self) -> u64 {
        self.entries.iter().map(|e| e.count).sum()
    }

    pub fn off_diagonal_mass(&self) -> u64 {
        self.entries
            .iter()
            .filter(|e| !e.is_diagonal())
            .map(|e| e.count)
            .sum()
    }

    /// Count stored for `(i, j)`, or 0 when absent.
    pub fn cell_value(&self, i: &AreaId, j: &AreaId) -> u64 {
        let key = (i.as_str(), j.as_str());
        self.entries
            .binary_search_by(|e| e.pair().cmp(&key))
            .map(|k| self.entries[k].count)
            .unwrap_or(0)
    }

    fn origin_range(&self, i: &str) -> &[OdmEntry] {
        let lo = self.entries.partition_point(|e| e.origin.as_str() < i);
        let hi = self.entries.partition_point(|e| e.origin.as_str() <= i);
        &self.entries[lo..hi]
    }

    /// Flow into `j` from every origin other than `j`.
    pub fn inbound_excl_diag(&self, j: &AreaId) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.destination == *j && e.origin != *j)
            .map(|e| e.count)
            .sum()
    }

    /// Flow out of `i` to every destination other than `i`.
    pub fn outbound_excl_diag(&self, i: &AreaId) -> u64 {
        self.origin_range(i.as_str())
            .iter()
            .filter(|e| e.destination != *i)
            .map(|e| e.count)
            .sum()
    }

    pub fn inbound_incl_diag(&self, j: &AreaId) -> u64 {
        self.entries
            .iter()
            .filter(|e| e.destination == *j)
            .map(|e| e.count)
            .sum()
    }

    pub fn outbound_incl_diag(&self, i: &AreaId) -> u64 {
        self.origin_range(i.as_str()).iter().map(|e| e.count).sum()
    }

    /// Every diagonal-excluded marginal in one pass, in [`FlowKey`] order.
    ///
    /// Each area seen as a destination gets an inbound entry and each area
    /// seen as an origin gets an outbound entry, possibly zero-valued when
    /// the area only occurs on the diagonal.
    pub fn all_marginals_excl_diag(&self) -> Vec<(FlowKey, u64)> {
        let mut inbound: BTreeMap<&AreaId, u64> = BTreeMap::new();
        let mut outbound: Vec<(&AreaId, u64)> = Vec::new();
        for e in &self.entries {
            let off = if e.is_diagonal() { 0 } else { e.count };
            *inbound.entry(&e.destination).or_default() += off;
            match outbound.last_mut() {
                Some((o, total)) if **o == e.origin => *total += off,
                _ => outbound.push((&e.origin, off)),
            }
        }
        inbound
            .into_iter()
            .map(|(a, v)| (FlowKey::inbound(a.clone()), v))
            .chain(
                outbound
                    .into_iter()
                    .map(|(a, v)| (FlowKey::outbound(a.clone()), v)),
            )
            .collect()
    }

    /// Union of origin and destination labels.
    pub fn areas(&self) -> Vec<AreaId> {
        let mut seen: HashMap<&str, &AreaId> = HashMap::new();
        for e in &self.entries {
            seen.entry(e.origin.as_str()).or_insert(&e.origin);
            seen.entry(e.destination.as_str()).or_insert(&e.destination);
        }
        let mut out: Vec<AreaId> = seen.into_values().cloned().collect();
        out.sort();
        out
    }
}
