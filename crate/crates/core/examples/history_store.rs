//! Persist daily snapshots and read back the history a detection needs.

use chrono::{Days, NaiveDate};
use odm_anomaly::store::retention_days;
use odm_anomaly::{HistoryQuery, HistorySlot, HistoryStore, SparseOdm, Stride, WindowSpan};

fn main() -> odm_anomaly::Result<()> {
    let dir = std::env::temp_dir().join(format!("odm-history-example-{}", std::process::id()));
    let store = HistoryStore::open(&dir)?.with_retention(Some(retention_days(4, Stride::Weekly)));
    let span = WindowSpan::equal_partition(24)?[8];
    let monday = NaiveDate::from_ymd_opt(2020, 3, 30).unwrap();

    // Six weeks of Mondays, the third one never delivered.
    for week in 0..6u64 {
        if week == 2 {
            continue;
        }
        let date = monday - Days::new(7 * (6 - week));
        let volume = 100 + 10 * week;
        let m = SparseOdm::from_triples(span.on(date), [("a", "b", volume), ("b", "a", volume / 2)])?;
        store.put_snapshot("demo", &m)?;
    }
    println!("stored dates: {:?}", store.dates("demo")?);

    for stride in [Stride::Weekly, Stride::Daily] {
        let slice = store.fetch_history(&HistoryQuery {
            source_id: "demo".into(),
            window: span.on(monday),
            p: 4,
            stride,
        })?;
        println!("{stride} history for {}:", slice.window());
        for slot in slice.slots() {
            match slot {
                HistorySlot::Present(m) => println!("  {} present, {} movements", m.window().date, m.mass()),
                HistorySlot::Missing(d) => println!("  {d} missing"),
            }
        }
        println!("  {} of {} periods available", slice.available_count(), slice.p());
    }

    println!("sha256 of {}: {:?}", monday - Days::new(7), store.day_digest("demo", monday - Days::new(7))?);
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
