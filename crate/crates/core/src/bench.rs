//! In-memory throughput benchmark.
//!
//! Builds a synthetic source at the requested scale and times the three
//! detection stages per window: rolling statistics (merge of the current and
//! `p` history matrices, marginals included), the quantile threshold, and
//! key evaluation with report assembly. Matrix generation is timed apart.

use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use serde::Serialize;

use crate::detect::{assemble_window, DetectorConfig};
use crate::error::{Error, Result};
use crate::odm::WindowSpan;
use crate::stats::window_series;
use crate::store::{HistorySlice, Stride};
use crate::synth::{SynthSpec, SyntheticWorld};
use crate::threshold::daily_quantile_threshold;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchParams {
    pub n_areas: usize,
    pub nnz_per_window: usize,
    pub windows: usize,
    pub p: usize,
    pub seed: u64,
    /// Mean cell volume.
    pub base_volume: f64,
    pub noise: f64,
}

impl Default for BenchParams {
    fn default() -> Self {
        BenchParams {
            n_areas: 1000,
            nnz_per_window: 50_000,
            windows: 25,
            p: 4,
            seed: 42,
            base_volume: 40.0,
            noise: 0.2,
        }
    }
}

/// Up to 24 hourly windows, then the whole day as the 25th; other counts
/// must divide the day evenly.
pub fn bench_windows(n: usize) -> Result<Vec<WindowSpan>> {
    match n {
        0 => Err(Error::Config("windows must be >= 1".into())),
        25 => {
            let mut spans = WindowSpan::equal_partition(24)?;
            spans.push(WindowSpan::full_day());
            Ok(spans)
        }
        n => WindowSpan::equal_partition(n as u32),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    #[serde(with = "secs")]
    pub stats: Duration,
    #[serde(with = "secs")]
    pub thresholds: Duration,
    #[serde(with = "secs")]
    pub detection: Duration,
}

impl StageTimings {
    pub fn total(&self) -> Duration {
        self.stats + self.thresholds + self.detection
    }
}

mod secs {
    use serde::Serializer;
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(d.as_secs_f64())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BenchReport {
    pub params: BenchParams,
    /// Mean stored cells per window on the detected date.
    pub nnz_observed: usize,
    pub series_evaluated: u64,
    pub signals: u64,
    #[serde(with = "secs")]
    pub generation: Duration,
    pub stages: StageTimings,
}

impl BenchReport {
    pub fn detection_total(&self) -> Duration {
        self.stages.total()
    }
}

pub fn run_bench(params: &BenchParams, cfg: &DetectorConfig) -> Result<BenchReport> {
    cfg.validate()?;
    if params.n_areas == 0 || params.nnz_per_window == 0 {
        return Err(Error::Config("bench needs areas and nonzeros".into()));
    }
    let spans = bench_windows(params.windows)?;
    let cells = (params.n_areas as f64).powi(2);
    let density = (params.nnz_per_window as f64 / cells).min(1.0);
    let date = NaiveDate::from_ymd_opt(2020, 3, 30).unwrap();

    let t0 = Instant::now();
    let mut spec = SynthSpec::new(params.n_areas, density, params.base_volume, params.seed, date);
    spec.baseline_dispersion = 1.0;
    spec.noise = params.noise;
    spec.windows = spans.clone();
    let world = SyntheticWorld::new(spec)?;
    let mut generation = t0.elapsed();

    let mut stages = StageTimings::default();
    let mut series = 0u64;
    let mut signals = 0u64;
    let mut nnz = 0usize;
    for (k, span) in spans.iter().enumerate() {
        let t0 = Instant::now();
        let current = world.snapshot(date, k)?;
        let history = (1..=params.p)
            .map(|lag| world.snapshot(date - Days::new(lag as u64), k).map(Some))
            .collect::<Result<Vec<_>>>()?;
        let slice = HistorySlice::from_snapshots(span.on(date), Stride::Daily, history)?;
        generation += t0.elapsed();
        nnz += current.len();

        let t0 = Instant::now();
        let rows = window_series(&current, &slice);
        stages.stats += t0.elapsed();

        let t0 = Instant::now();
        let ts = daily_quantile_threshold(&current, cfg.th, cfg.quantile)?;
        stages.thresholds += t0.elapsed();

        let t0 = Instant::now();
        let report = assemble_window(
            *current.window(),
            slice.p(),
            slice.available_count(),
            ts,
            &rows,
            cfg.bounds_mode,
            cfg.emit_below_eligibility,
        );
        stages.detection += t0.elapsed();

        series += report.summary.keys;
        signals += report.summary.signals();
    }

    Ok(BenchReport {
        params: params.clone(),
        nnz_observed: nnz / spans.len(),
        series_evaluated: series,
        signals,
        generation,
        stages,
    })
}

/// Run at `nnz_per_window` and at twice that; returns both reports and the
/// ratio of detection times (2x over 1x).
pub fn run_scaling(params: &BenchParams, cfg: &DetectorConfig) -> Result<(BenchReport, BenchReport, f64)> {
    let single = run_bench(params, cfg)?;
    let doubled = run_bench(
        &BenchParams {
            nnz_per_window: params.nnz_per_window * 2,
            ..params.clone()
        },
        cfg,
    )?;
    let ratio = doubled.detection_total().as_secs_f64() / single.detection_total().as_secs_f64();
    Ok((single, doubled, ratio))
}
