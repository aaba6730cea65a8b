//! Evaluate one window against four weeks of history and print every key
//! with its status.

use chrono::{Days, NaiveDate};
use odm_anomaly::{
    evaluate_window, run_window, DetectorConfig, HistorySlice, SparseOdm, Status, Stride, TimeWindow,
};

fn main() -> odm_anomaly::Result<()> {
    let date = NaiveDate::from_ymd_opt(2020, 3, 30).unwrap();
    let window = TimeWindow::full_day(date);
    let at = |weeks: u64| window.with_date(date - Days::new(7 * weeks));

    let history = vec![
        Some(SparseOdm::from_triples(at(1), [("a", "b", 100), ("b", "a", 80), ("b", "c", 12), ("c", "a", 300)])?),
        Some(SparseOdm::from_triples(at(2), [("a", "b", 110), ("b", "a", 70), ("b", "c", 9), ("c", "a", 310)])?),
        None,
        Some(SparseOdm::from_triples(at(4), [("a", "b", 90), ("b", "a", 75), ("b", "c", 15), ("c", "a", 290)])?),
    ];
    let today = SparseOdm::from_triples(
        window,
        [("a", "b", 260), ("a", "c", 45), ("b", "a", 78), ("b", "c", 11), ("c", "a", 20), ("c", "b", 35)],
    )?;
    let slice = HistorySlice::from_snapshots(window, Stride::Weekly, history)?;
    let cfg = DetectorConfig::default();

    for o in evaluate_window(&today, &slice, &cfg)? {
        let detail = match &o.status {
            Status::Signal(s) => format!(
                "{:?} level {} (inc {:+.1}%, bounds [{:.1}, {:.1}])",
                s.direction,
                s.level.as_u8(),
                s.inc_percent,
                s.lower_bound,
                s.upper_bound
            ),
            other => other.name().to_string(),
        };
        println!("{:<10} observed {:>4}  ma {:>7.2}  {detail}", o.key.to_string(), o.observed, o.ma.unwrap_or(f64::NAN));
    }

    let report = run_window(&today, &slice, &cfg)?;
    println!(
        "t = {}, {} keys, {} upper, {} lower, {} below eligibility",
        report.threshold.t,
        report.summary.keys,
        report.summary.upper.total(),
        report.summary.lower.total(),
        report.summary.below_eligibility
    );
    Ok(())
}
