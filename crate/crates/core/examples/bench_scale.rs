//! Time the detection stages on an in-memory workload.
//!
//! `cargo run --release --example bench_scale -- 10000 1000000` runs the
//! full-size day: 10,000 areas, a million stored cells per window, 25
//! windows and four history periods.

use odm_anomaly::bench::{run_bench, BenchParams};
use odm_anomaly::DetectorConfig;

fn main() -> odm_anomaly::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let params = BenchParams {
        n_areas: args.first().copied().unwrap_or(2_000),
        nnz_per_window: args.get(1).copied().unwrap_or(100_000),
        ..BenchParams::default()
    };
    let r = run_bench(&params, &DetectorConfig::default())?;
    println!(
        "{} areas, {} cells/window, {} windows: {} series, {} signals",
        params.n_areas, r.nnz_observed, params.windows, r.series_evaluated, r.signals
    );
    println!("  generation {:>8.3} s", r.generation.as_secs_f64());
    println!("  stats      {:>8.3} s", r.stages.stats.as_secs_f64());
    println!("  thresholds {:>8.3} s", r.stages.thresholds.as_secs_f64());
    println!("  detection  {:>8.3} s", r.stages.detection.as_secs_f64());
    println!("  total      {:>8.3} s", r.detection_total().as_secs_f64());
    Ok(())
}
