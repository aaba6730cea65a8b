//! Parse ingestion CSV, group it into window snapshots and check each day
//! against the windows a source is expected to deliver.
//!
//! Run with a file argument to validate your own data:
//! `cargo run --example ingest_validate -- day.csv 24`

use std::collections::BTreeSet;
use std::path::Path;

use odm_anomaly::ingest::parse_reader;
use odm_anomaly::{parse_file, validate_day, SourceProfile};

const SAMPLE: &str = "\
date,start,end,origin,destination,count
2020-03-09,00:00:00,11:59:59,a,b,41
2020-03-09,00:00:00,11:59:59,b,a,37
2020-03-09,00:00:00,11:59:59,a,a,210
2020-03-10,00:00:00,11:59:59,a,b,44
2020-03-10,12:00:00,23:59:59,a,b,52
";

fn main() -> odm_anomaly::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (snapshots, windows_per_day) = match args.first() {
        Some(path) => (
            parse_file(Path::new(path))?,
            args.get(1).and_then(|n| n.parse().ok()).unwrap_or(1),
        ),
        None => (parse_reader(SAMPLE.as_bytes())?, 2),
    };
    let profile = SourceProfile::new("sample", windows_per_day)?;

    for m in &snapshots {
        println!("{}  {} cells  {} movements", m.window(), m.len(), m.mass());
    }
    let dates: BTreeSet<_> = snapshots.iter().map(|m| m.window().date).collect();
    for date in dates {
        let report = validate_day(&snapshots, &profile, date)?;
        let status = if report.has_warnings() { "WARN" } else { "ok" };
        println!(
            "{date} {status}: volume {}, missing {:?}, unexpected {:?}",
            report.total_volume,
            report.missing_windows.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
            report.extra_windows.iter().map(|w| w.to_string()).collect::<Vec<_>>(),
        );
    }

    // errors carry the offending line
    let bad = "date,start,end,origin,destination,count\n2020-03-09,00:00:00,11:59:59,a,b,many\n";
    if let Err(e) = parse_reader(bad.as_bytes()) {
        println!("rejected: {e}");
    }
    Ok(())
}
