//! Anomaly detection for sparse, high-frequency origin-destination matrices.
//!
//! Every cell `(i, j)` of an ODM, and every diagonal-excluded inbound and
//! outbound marginal, is treated as a time series indexed by date for a fixed
//! `(start, end)` window. For date `d` the series is compared with its moving
//! average `MA` and rolling standard deviation `SD` over the previous `p`
//! available periods, and with the day's threshold `t`, the `q` quantile of
//! the window's cells holding at least `th` movements:
//!
//! ```text
//! upper = MA + max(t, 3·SD)
//! lower = max(min(MA − t, MA − 3·SD), 0)        (clamped mode, default)
//! lower = min(MA − t, MA − 3·SD, 0)             (paper_literal mode)
//! INC   = (observed / MA − 1) · 100
//! ```
//!
//! Observations outside `[lower, upper]` become upper or lower signals,
//! graded level 1/2/3 by `|INC|` bands of 50% and 100%. Series whose `MA` is
//! below `th` are not evaluated; series with no available history are marked
//! as missing data.
//!
//! The modules follow the pipeline: [`odm`] types, [`ingest`] for CSV input,
//! [`store`] for on-disk history, [`stats`], [`threshold`] and [`detect`] for
//! the method, [`report`] for output, [`synth`] and [`bench`] for synthetic
//! workloads, and [`cli`] for the batch commands.

pub mod bench;
pub mod cli;
pub mod config;
pub mod detect;
pub mod error;
pub mod ingest;
pub mod odm;
pub mod report;
pub mod stats;
pub mod store;
pub mod synth;
pub mod threshold;

pub use config::RunConfig;
pub use detect::{
    classify_level, detect_day, evaluate_key, evaluate_window, run_window, DayReport,
    DetectorConfig, Direction, KeyOutcome, Signal, SignalLevel, Status, WindowReport,
};
pub use error::{Error, Result};
pub use ingest::{parse_file, validate_day, DayValidationReport, SourceProfile};
pub use odm::{AreaId, FlowKey, OdmEntry, SparseOdm, TimeWindow, WindowSpan};
pub use report::ReportFormat;
pub use stats::{key_universe, rolling_stats_for_keys, window_series, RollingStats};
pub use store::{HistoryQuery, HistorySlice, HistorySlot, HistoryStore, Stride};
pub use synth::{generate, AnomalyKind, AnomalySpec, SynthSpec, SyntheticWorld};
pub use threshold::{bounds_for, daily_quantile_threshold, Bounds, BoundsMode, ThresholdSet};
