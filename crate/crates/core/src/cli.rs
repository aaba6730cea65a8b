//! Batch commands behind the `odm-anomaly` binary.
//!
//! Each command returns its process exit status:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 1 | parse, I/O or configuration failure |
//! | 2 | `ingest`: data stored, but windows were missing or unexpected |
//! | 3 | `detect`: the whole date is missing data |

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;

use crate::bench::{run_bench, run_scaling, BenchParams, BenchReport};
use crate::config::RunConfig;
use crate::detect::detect_day;
use crate::error::{Error, Result};
use crate::ingest::{parse_file, validate_day, SourceProfile};
use crate::report::write_report;
use crate::store::{retention_days, HistoryStore};
use crate::synth::{generate, write_output, SynthSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_MISSING: i32 = 3;

fn open_store(cfg: &RunConfig) -> Result<HistoryStore> {
    Ok(HistoryStore::open(&cfg.store_root)?
        .with_retention(Some(retention_days(cfg.detector.p, cfg.detector.stride))))
}

fn resolve_profile(store: &HistoryStore, source_id: &str, cfg: &RunConfig) -> Result<SourceProfile> {
    let stored = store.load_profile(source_id)?;
    match (cfg.expected_windows_per_day, stored) {
        (Some(n), Some(p)) if p.expected_windows_per_day == n => Ok(p),
        (Some(n), _) => SourceProfile::new(source_id, n),
        (None, Some(p)) => Ok(p),
        (None, None) => SourceProfile::new(source_id, 1),
    }
}

fn ingest(files: &[PathBuf], source_id: &str, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    let store = open_store(cfg)?;
    let profile = resolve_profile(&store, source_id, cfg)?;
    store.save_profile(&profile)?;

    let pool = cfg.thread_pool()?;
    let parsed: Vec<(PathBuf, Result<_>)> = pool.install(|| {
        files
            .par_iter()
            .map(|f| (f.clone(), parse_file(f)))
            .collect()
    });
    let mut snapshots = Vec::new();
    for (path, result) in parsed {
        match result {
            Ok(ms) => snapshots.extend(ms),
            Err(e) => {
                let _ = writeln!(err, "{}: {e}", path.display());
                return Ok(EXIT_ERROR);
            }
        }
    }
    let replaced = store.put_many(source_id, &snapshots)?;
    if replaced > 0 {
        let _ = writeln!(err, "{source_id}: replaced {replaced} stored window(s)");
    }

    let mut dates: Vec<NaiveDate> = snapshots.iter().map(|m| m.window().date).collect();
    dates.sort();
    dates.dedup();
    let mut warnings = false;
    for date in dates {
        let day = store.load_day(source_id, date)?;
        let report = validate_day(&day, &profile, date)?;
        warnings |= report.has_warnings();
        serde_json::to_writer(&mut *out, &report)?;
        writeln!(out).map_err(|e| Error::io("<stdout>", e))?;
    }
    Ok(if warnings { EXIT_VALIDATION } else { EXIT_OK })
}

/// Parse `files`, store their snapshots under `source_id`, and print one
/// validation report per touched date as JSON lines.
pub fn cmd_ingest(files: &[PathBuf], source_id: &str, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    ingest(files, source_id, cfg, out, err).unwrap_or_else(|e| {
        let _ = writeln!(err, "ingest failed: {e}");
        EXIT_ERROR
    })
}

fn detect(source_id: &str, date: NaiveDate, cfg: &RunConfig, out: &mut dyn Write) -> Result<i32> {
    let store = HistoryStore::open(&cfg.store_root)?.with_retention(None);
    let pool = cfg.thread_pool()?;
    let report = pool.install(|| detect_day(&store, source_id, date, &cfg.detector))?;
    match &cfg.output {
        Some(path) => {
            let file = File::create(path).map_err(|e| Error::io(path, e))?;
            write_report(&report, cfg.format, BufWriter::new(file))?;
        }
        None => write_report(&report, cfg.format, &mut *out)?,
    }
    Ok(if report.summary.fully_missing {
        EXIT_MISSING
    } else {
        EXIT_OK
    })
}

/// Detect every stored window of `date` and write the day report to
/// `cfg.output` (or `out`).
pub fn cmd_detect(source_id: &str, date: NaiveDate, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    detect(source_id, date, cfg, out).unwrap_or_else(|e| {
        let _ = writeln!(err, "detect failed: {e}");
        EXIT_ERROR
    })
}

fn generate_cmd(spec_file: &Path, out_dir: &Path) -> Result<()> {
    let text = std::fs::read_to_string(spec_file).map_err(|e| Error::io(spec_file, e))?;
    let spec: SynthSpec = serde_json::from_str(&text).map_err(|e| Error::Spec(e.to_string()))?;
    let out = generate(&spec)?;
    write_output(&out, spec.seed, out_dir)
}

/// Generate synthetic CSV days and `labels.json` from a JSON spec file.
pub fn cmd_generate(spec_file: &Path, out_dir: &Path, err: &mut dyn Write) -> i32 {
    match generate_cmd(spec_file, out_dir) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "generate failed: {e}");
            EXIT_ERROR
        }
    }
}

fn print_bench(r: &BenchReport, out: &mut dyn Write) -> std::io::Result<()> {
    let p = &r.params;
    writeln!(
        out,
        "workload: {} areas, {} nonzeros/window (observed {}), {} windows, p={}",
        p.n_areas, p.nnz_per_window, r.nnz_observed, p.windows, p.p
    )?;
    writeln!(out, "generation  {:>10.3} s", r.generation.as_secs_f64())?;
    writeln!(out, "stats       {:>10.3} s", r.stages.stats.as_secs_f64())?;
    writeln!(out, "thresholds  {:>10.3} s", r.stages.thresholds.as_secs_f64())?;
    writeln!(out, "detection   {:>10.3} s", r.stages.detection.as_secs_f64())?;
    writeln!(out, "total       {:>10.3} s", r.detection_total().as_secs_f64())?;
    writeln!(
        out,
        "series      {:>10}  signals {}",
        r.series_evaluated, r.signals
    )
}

/// Time the detection stages on an in-memory workload. With `scaling`, also
/// run at twice the nonzeros and report the time ratio.
pub fn cmd_bench(params: &BenchParams, scaling: bool, cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let mut run = || -> Result<()> {
        let pool = cfg.thread_pool()?;
        let io = |e| Error::io("<stdout>", e);
        if scaling {
            let (one, two, ratio) = pool.install(|| run_scaling(params, &cfg.detector))?;
            print_bench(&one, out).map_err(io)?;
            print_bench(&two, out).map_err(io)?;
            writeln!(out, "scaling     {ratio:>10.3} x for 2x nonzeros").map_err(io)?;
        } else {
            let r = pool.install(|| run_bench(params, &cfg.detector))?;
            print_bench(&r, out).map_err(io)?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "bench failed: {e}");
            EXIT_ERROR
        }
    }
}
