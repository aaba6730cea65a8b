//! Signal detection for a window and for a whole date.
//!
//! Each key is checked in a fixed order: all history missing, then the
//! eligibility threshold on the moving average, then the bounds. Breaches are
//! decided on exact integer quantities (`n·observed − Σx` against `n·t` and
//! `3·sqrt(n·Σx² − (Σx)²)`), so ties with a bound never depend on rounding.

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::ingest::{validate_day, DayValidationReport};
use crate::odm::{FlowKey, SparseOdm, TimeWindow};
use crate::stats::{window_series, Moments, RollingStats, SeriesRow};
use crate::store::{DayCache, HistoryQuery, HistorySlice, HistoryStore, Stride};
use crate::threshold::{self, bounds_for, daily_quantile_threshold, BoundsMode, ThresholdSet};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Upper,
    Lower,
}

/// Severity band of an out-of-bounds observation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignalLevel {
    Level1 = 1,
    Level2 = 2,
    Level3 = 3,
}

impl SignalLevel {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl Serialize for SignalLevel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.as_u8())
    }
}

/// Band of `|inc_percent|`: below 50, [50, 100), and 100 or more.
pub fn classify_level(inc_percent: f64) -> SignalLevel {
    let inc = inc_percent.abs();
    if inc < 50.0 {
        SignalLevel::Level1
    } else if inc < 100.0 {
        SignalLevel::Level2
    } else {
        SignalLevel::Level3
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Signal {
    pub direction: Direction,
    pub level: SignalLevel,
    /// `(observed / ma − 1)·100`; `+∞` when `ma = 0`.
    pub inc_percent: f64,
    pub observed: u64,
    pub ma: f64,
    pub sd: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Status {
    /// Level 0: within bounds.
    NoSignal,
    Signal(Signal),
    BelowEligibility,
    MissingData,
}

impl Status {
    pub fn name(&self) -> &'static str {
        match self {
            Status::NoSignal => "no_signal",
            Status::Signal(_) => "signal",
            Status::BelowEligibility => "below_eligibility",
            Status::MissingData => "missing_data",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KeyOutcome {
    pub key: FlowKey,
    pub observed: u64,
    pub ma: Option<f64>,
    pub sd: Option<f64>,
    pub status: Status,
}

/// `d > 3·sqrt(spread)` for the deviation `d = n·x − Σx`.
fn beyond_three_sd(d: i128, m: &Moments) -> bool {
    if d <= 0 {
        return false;
    }
    let d = d as u128;
    match m.spread() {
        Some(spread) => match (d.checked_mul(d), spread.checked_mul(9)) {
            (Some(dd), Some(s9)) => dd > s9,
            (Some(_), None) => false,
            (None, Some(_)) => true,
            (None, None) => d as f64 > 3.0 * (spread as f64).sqrt(),
        },
        None => d as f64 / m.n() as f64 > 3.0 * m.sd().unwrap_or(0.0),
    }
}

fn breach(observed: u64, m: &Moments, t: u64, mode: BoundsMode) -> Option<Direction> {
    let n = m.n() as i128;
    let dev = n * observed as i128 - m.sum() as i128;
    let nt = n * t as i128;
    if dev > nt && beyond_three_sd(dev, m) {
        Some(Direction::Upper)
    } else if mode == BoundsMode::Clamped && -dev > nt && beyond_three_sd(-dev, m) {
        Some(Direction::Lower)
    } else {
        None
    }
}

fn classify(observed: u64, stats: &RollingStats, ts: &ThresholdSet, mode: BoundsMode) -> Status {
    let m = &stats.moments;
    if stats.is_all_missing() {
        return Status::MissingData;
    }
    // ma < th, i.e. Σx < th·n
    if m.sum() < ts.th as u128 * m.n() as u128 {
        return Status::BelowEligibility;
    }
    let Some(direction) = breach(observed, m, ts.t, mode) else {
        return Status::NoSignal;
    };
    let bounds = bounds_for(stats, ts, mode).expect("stats have history");
    let inc_percent = if m.sum() == 0 {
        f64::INFINITY
    } else {
        let dev = m.n() as i128 * observed as i128 - m.sum() as i128;
        dev as f64 * 100.0 / m.sum() as f64
    };
    Status::Signal(Signal {
        direction,
        level: classify_level(inc_percent),
        inc_percent,
        observed,
        ma: stats.ma().unwrap_or(0.0),
        sd: stats.sd().unwrap_or(0.0),
        lower_bound: bounds.lower,
        upper_bound: bounds.upper,
    })
}

/// Status of one series given today's value.
pub fn evaluate_key(
    observed: u64,
    stats: &RollingStats,
    ts: &ThresholdSet,
    mode: BoundsMode,
) -> KeyOutcome {
    KeyOutcome {
        key: stats.key.clone(),
        observed,
        ma: stats.ma(),
        sd: stats.sd(),
        status: classify(observed, stats, ts, mode),
    }
}

/// Detection parameters. The defaults are `th = 20`, `p = 4`, `q = 0.75`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub th: u64,
    pub p: usize,
    pub quantile: f64,
    pub stride: Stride,
    pub bounds_mode: BoundsMode,
    /// List below-eligibility keys in reports instead of only counting them.
    pub emit_below_eligibility: bool,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            th: 20,
            p: 4,
            quantile: 0.75,
            stride: Stride::Weekly,
            bounds_mode: BoundsMode::Clamped,
            emit_below_eligibility: false,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::Config("p must be >= 1".into()));
        }
        threshold::check_quantile(self.quantile)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LevelCounts {
    pub level1: u64,
    pub level2: u64,
    pub level3: u64,
}

impl LevelCounts {
    fn bump(&mut self, level: SignalLevel) {
        match level {
            SignalLevel::Level1 => self.level1 += 1,
            SignalLevel::Level2 => self.level2 += 1,
            SignalLevel::Level3 => self.level3 += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.level1 + self.level2 + self.level3
    }

    fn add(&mut self, o: &LevelCounts) {
        self.level1 += o.level1;
        self.level2 += o.level2;
        self.level3 += o.level3;
    }
}

/// Outcome counts per status, direction and level.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct WindowSummary {
    pub keys: u64,
    pub no_signal: u64,
    pub below_eligibility: u64,
    pub missing_data: u64,
    pub upper: LevelCounts,
    pub lower: LevelCounts,
}

impl WindowSummary {
    fn record(&mut self, status: &Status) {
        self.keys += 1;
        match status {
            Status::NoSignal => self.no_signal += 1,
            Status::BelowEligibility => self.below_eligibility += 1,
            Status::MissingData => self.missing_data += 1,
            Status::Signal(s) => match s.direction {
                Direction::Upper => self.upper.bump(s.level),
                Direction::Lower => self.lower.bump(s.level),
            },
        }
    }

    pub fn signals(&self) -> u64 {
        self.upper.total() + self.lower.total()
    }

    pub fn add(&mut self, o: &WindowSummary) {
        self.keys += o.keys;
        self.no_signal += o.no_signal;
        self.below_eligibility += o.below_eligibility;
        self.missing_data += o.missing_data;
        self.upper.add(&o.upper);
        self.lower.add(&o.lower);
    }
}

/// Result of evaluating one window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub window: TimeWindow,
    pub p: usize,
    pub history_available: usize,
    pub threshold: ThresholdSet,
    pub summary: WindowSummary,
    /// Signals and missing-data keys (plus below-eligibility keys when
    /// configured), in key order.
    pub outcomes: Vec<KeyOutcome>,
}

impl WindowReport {
    pub fn all_history_missing(&self) -> bool {
        self.history_available == 0
    }

    pub fn signals(&self) -> impl Iterator<Item = (&FlowKey, &Signal)> {
        self.outcomes.iter().filter_map(|o| match &o.status {
            Status::Signal(s) => Some((&o.key, s)),
            _ => None,
        })
    }
}

fn check_aligned(current: &SparseOdm, slice: &HistorySlice) -> Result<()> {
    if current.window() != slice.window() {
        return Err(Error::Invalid(format!(
            "history for {} does not match window {}",
            slice.window(),
            current.window()
        )));
    }
    Ok(())
}

/// Status of every series of the window, given precomputed series and
/// threshold. Runs on the current rayon pool; output order follows `rows`.
pub fn evaluate_series(rows: &[SeriesRow], ts: &ThresholdSet, mode: BoundsMode) -> Vec<Status> {
    rows.par_iter()
        .with_min_len(4096)
        .map(|r| classify(r.observed, &r.stats, ts, mode))
        .collect()
}

fn outcome(row: &SeriesRow, status: Status) -> KeyOutcome {
    KeyOutcome {
        key: row.stats.key.clone(),
        observed: row.observed,
        ma: row.stats.ma(),
        sd: row.stats.sd(),
        status,
    }
}

/// Every key of the window with its status, level 0 included.
pub fn evaluate_window(
    current: &SparseOdm,
    slice: &HistorySlice,
    cfg: &DetectorConfig,
) -> Result<Vec<KeyOutcome>> {
    cfg.validate()?;
    check_aligned(current, slice)?;
    let rows = window_series(current, slice);
    let ts = daily_quantile_threshold(current, cfg.th, cfg.quantile)?;
    let statuses = evaluate_series(&rows, &ts, cfg.bounds_mode);
    Ok(rows
        .iter()
        .zip(statuses)
        .map(|(r, s)| outcome(r, s))
        .collect())
}

const CHUNK: usize = 8192;

/// Classify `rows` and build the window report, keeping only reported
/// outcomes. Chunks run on the current rayon pool and merge in row order.
pub fn assemble_window(
    window: TimeWindow,
    p: usize,
    history_available: usize,
    threshold: ThresholdSet,
    rows: &[SeriesRow],
    mode: BoundsMode,
    emit_below_eligibility: bool,
) -> WindowReport {
    let parts: Vec<(WindowSummary, Vec<KeyOutcome>)> = rows
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut summary = WindowSummary::default();
            let mut kept = Vec::new();
            for row in chunk {
                let status = classify(row.observed, &row.stats, &threshold, mode);
                summary.record(&status);
                let keep = match status {
                    Status::NoSignal => false,
                    Status::BelowEligibility => emit_below_eligibility,
                    Status::Signal(_) | Status::MissingData => true,
                };
                if keep {
                    kept.push(outcome(row, status));
                }
            }
            (summary, kept)
        })
        .collect();
    let mut summary = WindowSummary::default();
    let mut outcomes = Vec::with_capacity(parts.iter().map(|(_, o)| o.len()).sum());
    for (s, o) in parts {
        summary.add(&s);
        outcomes.extend(o);
    }
    WindowReport {
        window,
        p,
        history_available,
        threshold,
        summary,
        outcomes,
    }
}

/// Evaluate every cell and diagonal-excluded marginal of one window.
pub fn run_window(
    current: &SparseOdm,
    slice: &HistorySlice,
    cfg: &DetectorConfig,
) -> Result<WindowReport> {
    cfg.validate()?;
    check_aligned(current, slice)?;
    let rows = window_series(current, slice);
    let ts = daily_quantile_threshold(current, cfg.th, cfg.quantile)?;
    Ok(assemble_window(
        *current.window(),
        slice.p(),
        slice.available_count(),
        ts,
        &rows,
        cfg.bounds_mode,
        cfg.emit_below_eligibility,
    ))
}

/// Stored day file identified by date and content digest.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub date: NaiveDate,
    /// SHA-256 of the stored day file; `None` when the date is absent.
    pub sha256: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DaySummary {
    pub windows: usize,
    pub windows_all_history_missing: usize,
    /// No window present, or every present window lacks all history.
    pub fully_missing: bool,
    pub totals: WindowSummary,
}

/// Detection result for every window of one date.
#[derive(Clone, Debug, PartialEq)]
pub struct DayReport {
    pub source_id: String,
    pub date: NaiveDate,
    pub config: DetectorConfig,
    pub inputs: Vec<InputDigest>,
    pub validation: Option<DayValidationReport>,
    pub windows: Vec<WindowReport>,
    pub summary: DaySummary,
}

impl DayReport {
    pub fn upper_signals(&self) -> u64 {
        self.summary.totals.upper.total()
    }

    pub fn lower_signals(&self) -> u64 {
        self.summary.totals.lower.total()
    }
}

/// Run every window stored for `date`. Windows run in parallel on the
/// current rayon pool; reports come back in window order.
pub fn detect_day(
    store: &HistoryStore,
    source_id: &str,
    date: NaiveDate,
    cfg: &DetectorConfig,
) -> Result<DayReport> {
    cfg.validate()?;
    let mut cache = DayCache::default();
    let today = cache.day(store, source_id, date)?;

    let mut inputs = vec![InputDigest {
        date,
        sha256: store.day_digest(source_id, date)?,
    }];
    for k in 1..=cfg.p {
        if let Some(d) = cfg.stride.lag(date, k) {
            inputs.push(InputDigest {
                date: d,
                sha256: store.day_digest(source_id, d)?,
            });
        }
    }

    let mut jobs = Vec::with_capacity(today.len());
    for m in today.iter() {
        let slice = store.fetch_history_with(
            &HistoryQuery {
                source_id: source_id.to_string(),
                window: *m.window(),
                p: cfg.p,
                stride: cfg.stride,
            },
            &mut cache,
        )?;
        jobs.push((m, slice));
    }
    let windows = jobs
        .par_iter()
        .map(|(m, slice)| run_window(m, slice, cfg))
        .collect::<Result<Vec<_>>>()?;

    let validation = match store.load_profile(source_id)? {
        Some(profile) => {
            let snaps: Vec<SparseOdm> = today.iter().map(|m| (**m).clone()).collect();
            Some(validate_day(&snaps, &profile, date)?)
        }
        None => None,
    };

    let mut summary = DaySummary {
        windows: windows.len(),
        ..DaySummary::default()
    };
    for w in &windows {
        summary.totals.add(&w.summary);
        if w.all_history_missing() {
            summary.windows_all_history_missing += 1;
        }
    }
    summary.fully_missing = summary.windows == summary.windows_all_history_missing;

    Ok(DayReport {
        source_id: source_id.to_string(),
        date,
        config: cfg.clone(),
        inputs,
        validation,
        windows,
        summary,
    })
}
