//! Rolling statistics, the daily quantile threshold and the bounds they
//! produce for one series.

use chrono::NaiveDate;
use odm_anomaly::{
    bounds_for, daily_quantile_threshold, AreaId, BoundsMode, DetectorConfig, FlowKey, RollingStats,
    SparseOdm, TimeWindow,
};

fn main() -> odm_anomaly::Result<()> {
    let cfg = DetectorConfig::default();
    let key = FlowKey::cell(AreaId::new("a")?, AreaId::new("b")?);

    let window = TimeWindow::full_day(NaiveDate::from_ymd_opt(2020, 3, 30).unwrap());
    let today = SparseOdm::from_triples(
        window,
        [("a", "b", 20), ("a", "c", 40), ("b", "a", 60), ("c", "a", 80), ("c", "b", 7)],
    )?;
    let ts = daily_quantile_threshold(&today, cfg.th, cfg.quantile)?;
    println!(
        "th={} q={} -> t={} over {} eligible cells{}",
        ts.th,
        ts.q,
        ts.t,
        ts.eligible_count,
        if ts.degenerate { " (degenerate)" } else { "" }
    );

    let histories: [&[Option<u64>]; 4] = [
        &[Some(90), Some(110), Some(90), Some(110)],
        &[Some(300), Some(360), None, Some(330)],
        &[Some(15), Some(18), Some(25), Some(12)],
        &[None, None, None, None],
    ];
    for h in histories {
        let stats = RollingStats::from_history(key.clone(), h);
        print!("{h:?}: n={} ma={:?} sd={:?}", stats.available(), stats.ma(), stats.sd());
        for mode in [BoundsMode::Clamped, BoundsMode::PaperLiteral] {
            if let Some(b) = bounds_for(&stats, &ts, mode) {
                print!("  {mode}: [{:.2}, {:.2}]", b.lower, b.upper);
            }
        }
        println!();
    }
    Ok(())
}
